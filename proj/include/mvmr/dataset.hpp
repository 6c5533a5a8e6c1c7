#pragma once

#include "mvmr/error.hpp"
#include "mvmr/genotypes.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/rng.hpp"
#include "mvmr/summary_stats.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace mvmr {

/// `Standardized`: `effects` are the target direct effects on the scale of
/// population-standardized exposures and outcome. `Raw`: `effects` are the
/// structural coefficients of Y on the unscaled exposures.
enum class EffectScale { Standardized, Raw };

using GenotypeSource = std::variant<GenotypeModel, LatentGenotypeModel>;

inline const std::vector<double>& source_mafs(const GenotypeSource& g) {
    return std::visit([](const auto& m) -> const std::vector<double>& { return m.mafs; }, g);
}

/// Population genotype correlation of a source.
inline Matrix source_ld(const GenotypeSource& g) {
    if (const auto* m = std::get_if<GenotypeModel>(&g)) return m->ld();
    return std::get<LatentGenotypeModel>(g).realized;
}

inline Matrix sample_source(const GenotypeSource& g, Eigen::Index n, Rng& rng) {
    return std::visit([&](const auto& m) { return sample_genotypes(m, n, rng); }, g);
}

/// Genetic model for exposures and outcome:
///   X = E_s A + γ U + σ_X ε_X,   Y = X c_raw + γ U + σ_Y ε_Y,
/// with E_s the population-standardized genotypes and U a shared confounder.
struct PopulationModel {
    GenotypeSource genotypes = GenotypeModel{};
    Matrix A;      // SNPs x exposures
    Vector effects;
    EffectScale scale = EffectScale::Standardized;
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double confounding = 0.0;
};

struct PopulationTruth {
    Vector c_raw;
    Vector c_standardized;
    Vector sd_x;
    double sd_y = 0.0;
};

inline PopulationTruth population_truth(const PopulationModel& m) {
    const Matrix R = source_ld(m.genotypes);
    const auto K = m.A.cols();
    if (m.A.rows() != R.rows()) fail(ErrorKind::Argument, "instrument effect matrix rows do not match SNP count");
    if (m.effects.size() != K) fail(ErrorKind::Argument, "one causal effect per exposure required");
    if (m.sigma_x < 0.0 || m.sigma_y < 0.0) fail(ErrorKind::Argument, "noise scales must be non-negative");
    const double g2 = m.confounding * m.confounding;
    const Matrix sxx = m.A.transpose() * R * m.A + Matrix::Constant(K, K, g2) +
                       m.sigma_x * m.sigma_x * Matrix::Identity(K, K);
    PopulationTruth t;
    t.sd_x = sxx.diagonal().cwiseSqrt();
    if ((t.sd_x.array() <= 0.0).any()) fail(ErrorKind::Degenerate, "exposure with zero population variance");
    const Vector dinv = t.sd_x.cwiseInverse();
    if (m.scale == EffectScale::Standardized) {
        const Matrix rx = dinv.asDiagonal() * sxx * dinv.asDiagonal();
        const double q = m.effects.dot(rx * m.effects);
        if (!(q < 1.0))
            fail(ErrorKind::Feasibility, "standardized effects explain " + format_number(q, 6) +
                                             " of outcome variance; must be below 1");
        const double b = m.effects.dot(dinv);
        const double v0 = g2 + m.sigma_y * m.sigma_y;
        const double s = (g2 * b + std::sqrt(g2 * g2 * b * b + (1.0 - q) * v0)) / (1.0 - q);
        if (!(s > 0.0)) fail(ErrorKind::Feasibility, "outcome variance is zero under standardized effects");
        t.sd_y = s;
        t.c_raw = m.effects.cwiseProduct(dinv) * s;
        t.c_standardized = m.effects;
    } else {
        t.c_raw = m.effects;
        const double vy = t.c_raw.dot(sxx * t.c_raw) + 2.0 * g2 * t.c_raw.sum() + g2 + m.sigma_y * m.sigma_y;
        if (!(vy > 0.0)) fail(ErrorKind::Degenerate, "outcome has zero population variance");
        t.sd_y = std::sqrt(vy);
        t.c_standardized = t.c_raw.cwiseProduct(t.sd_x) / t.sd_y;
    }
    return t;
}

struct Dataset {
    IndividualData data;     // sample-standardized
    SummaryStatistics stats; // from `data`
    PopulationTruth truth;
    Vector sample_sd_x;      // before standardization
    double sample_sd_y = 0.0;
    Vector sample_effects;   // c_raw on the sample-standardized scale
    std::vector<double> sample_mafs;
};

/// Draws n individuals from the model and standardizes every column.
inline Dataset generate_dataset(const PopulationModel& m, Eigen::Index n, Rng& rng) {
    if (n < 2) fail(ErrorKind::Argument, "sample size must be at least 2");
    Dataset d;
    d.truth = population_truth(m);
    const auto& mafs = source_mafs(m.genotypes);
    const auto L = static_cast<Eigen::Index>(mafs.size());
    const auto K = m.A.cols();
    Matrix g = sample_source(m.genotypes, n, rng);
    d.sample_mafs.resize(mafs.size());
    Matrix es(n, L);
    for (Eigen::Index j = 0; j < L; ++j) {
        const double maf = mafs[static_cast<std::size_t>(j)];
        d.sample_mafs[static_cast<std::size_t>(j)] = g.col(j).mean() / 2.0;
        es.col(j) = (g.col(j).array() - 2.0 * maf) / std::sqrt(2.0 * maf * (1.0 - maf));
    }
    std::normal_distribution<double> z;
    Matrix x = es * m.A;
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = m.confounding != 0.0 ? z(rng) : 0.0;
        for (Eigen::Index k = 0; k < K; ++k) x(i, k) += m.confounding * u + m.sigma_x * z(rng);
        y(i) = x.row(i).dot(d.truth.c_raw) + m.confounding * u + m.sigma_y * z(rng);
    }
    const ColumnScale ge = standardize_columns(g);
    for (Eigen::Index j = 0; j < L; ++j)
        if (!(ge.sd(j) > 0.0)) fail(ErrorKind::Degenerate, "SNP " + std::to_string(j) + " is monomorphic in the sample");
    d.sample_sd_x = standardize_columns(x).sd;
    Matrix ym = y;
    d.sample_sd_y = standardize_columns(ym).sd(0);
    if ((d.sample_sd_x.array() <= 0.0).any() || !(d.sample_sd_y > 0.0))
        fail(ErrorKind::Degenerate, "exposure or outcome without sample variance");
    d.sample_effects = d.truth.c_raw.cwiseProduct(d.sample_sd_x) / d.sample_sd_y;
    d.data.e = std::move(g);
    d.data.x = std::move(x);
    d.data.y = ym.col(0);
    d.data.standardized = true;
    d.stats = d.data.summary();
    return d;
}

inline Dataset generate_dataset(const PopulationModel& m, Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    return generate_dataset(m, n, rng);
}

enum class LdChoice { Exposure, Outcome, Reference };

inline LdChoice parse_ld_choice(const std::string& s) {
    if (s == "exposure") return LdChoice::Exposure;
    if (s == "outcome") return LdChoice::Outcome;
    if (s == "reference") return LdChoice::Reference;
    fail(ErrorKind::Argument, "unknown LD choice '" + s + "' (expected exposure, outcome or reference)");
}

inline const char* to_string(LdChoice c) {
    switch (c) {
    case LdChoice::Exposure: return "exposure";
    case LdChoice::Outcome: return "outcome";
    case LdChoice::Reference: return "reference";
    }
    return "unknown";
}

/// Summary statistics assembled from independent exposure and outcome samples.
inline SummaryStatistics two_sample_stats(const Dataset& exposure, const Dataset& outcome, LdChoice ld,
                                          const Matrix& reference) {
    SummaryStatistics s;
    s.sigma_EX = exposure.stats.sigma_EX;
    s.sigma_EY = outcome.stats.sigma_EY;
    switch (ld) {
    case LdChoice::Exposure: s.sigma_EE = exposure.stats.sigma_EE; break;
    case LdChoice::Outcome: s.sigma_EE = outcome.stats.sigma_EE; break;
    case LdChoice::Reference: s.sigma_EE = reference; break;
    }
    s.n_exposure = exposure.stats.n_exposure;
    s.n_outcome = outcome.stats.n_outcome;
    return s;
}

} // namespace mvmr
