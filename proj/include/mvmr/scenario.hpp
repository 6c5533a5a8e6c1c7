#pragma once

#include "mvmr/dataset.hpp"
#include "mvmr/error.hpp"
#include "mvmr/estimators.hpp"
#include "mvmr/genotypes.hpp"
#include "mvmr/linalg.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace mvmr {

using json = nlohmann::json;

enum class Design { OneSample, TwoSample, Pleiotropy, Type1Power, Pc1 };

inline const char* to_string(Design d) {
    switch (d) {
    case Design::OneSample: return "one_sample";
    case Design::TwoSample: return "two_sample";
    case Design::Pleiotropy: return "pleiotropy";
    case Design::Type1Power: return "type1_power";
    case Design::Pc1: return "pc1";
    }
    return "unknown";
}

/// Distribution of the nonzero instrument effects and the determinant window
/// used when rejection-sampling A.
struct InstrumentStrength {
    std::string label = "default";
    double lo = 0.1;
    double hi = 0.3;
    double det_min = 0.0;
    double det_max = std::numeric_limits<double>::infinity();
};

struct Scenario {
    std::string name;
    std::string description;
    Design design = Design::OneSample;
    int replicates = 100;
    std::vector<Method> estimators{Method::LeastSquares};
    std::vector<std::string> exposure_names;
    Vector effects;
    EffectScale scale = EffectScale::Standardized;
    double sigma_x = 1.0, sigma_y = 1.0, confounding = 0.0;

    // genotypes
    std::vector<double> mafs;
    std::vector<double> successive_r;
    std::optional<std::array<double, 2>> correlation_range;
    std::optional<Matrix> ld; // full LD matrix; forces the latent generator
    bool latent = false;

    // instrument effects
    std::optional<Matrix> fixed_A;
    InstrumentStrength strength;
    int causal_count = 0; // 0: every instrument is causal
    std::vector<int> causal_snps;

    // grid; an empty list means "not swept"
    std::vector<long> n{2000};
    std::vector<double> correlations;
    std::vector<InstrumentStrength> strengths;
    std::vector<double> ld_thresholds;
    std::vector<double> hidden_effects;
    std::vector<std::array<long, 2>> sample_size_pairs;
    std::vector<double> wishart_df;
    std::vector<std::string> samples; // two-sample design: "two" and/or "one"

    std::vector<int> hidden_exposures;
    int tested_exposure = 0;
    double alpha = 0.05;
    std::string ld_choice = "sample";
    bool perturb_two_sample_ld = false;
    bool conditional_f = false;
    bool individual_se = false;
    bool univariate_models = false; // also fit each exposure on its own
    double twmr_alpha = kTwmrDefaultAlpha;
    int moment_check_every = 0;
    double failure_cap = 0.05;

    std::size_t snp_count() const { return mafs.size(); }
    Eigen::Index exposure_count() const { return effects.size(); }
    std::string exposure_name(Eigen::Index k) const {
        return static_cast<std::size_t>(k) < exposure_names.size() ? exposure_names[static_cast<std::size_t>(k)]
                                                                   : "X" + std::to_string(k + 1);
    }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) fail(ErrorKind::Format, where + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) fail(ErrorKind::Format, "unknown key '" + it.key() + "' in " + where);
}

inline std::vector<double> doubles(const json& j, const std::string& what) {
    if (!j.is_array()) fail(ErrorKind::Format, what + " must be an array");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) fail(ErrorKind::Format, what + " must contain numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline Matrix matrix_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) fail(ErrorKind::Format, what + " must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(doubles(j[0], what).size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto r = doubles(j[static_cast<std::size_t>(i)], what);
        if (static_cast<Eigen::Index>(r.size()) != cols) fail(ErrorKind::Format, what + " rows differ in length");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)];
    }
    return m;
}

inline InstrumentStrength strength_from(const json& j, InstrumentStrength base) {
    reject_unknown(j, {"label", "range", "value", "det_min", "det_max"}, "instrument strength");
    if (j.contains("label")) base.label = j.at("label").get<std::string>();
    if (j.contains("range")) {
        const auto r = doubles(j.at("range"), "range");
        if (r.size() != 2 || !(r[0] <= r[1])) fail(ErrorKind::Format, "range must be [lo, hi] with lo <= hi");
        base.lo = r[0];
        base.hi = r[1];
    }
    if (j.contains("value")) base.lo = base.hi = j.at("value").get<double>();
    if (j.contains("det_min")) base.det_min = j.at("det_min").get<double>();
    if (j.contains("det_max")) base.det_max = j.at("det_max").get<double>();
    return base;
}

} // namespace detail

/// Parses a scenario document. `data_dir` resolves `genotypes.file`.
inline Scenario parse_scenario(const json& j, const std::filesystem::path& data_dir = MVMR_DATA_DIR) {
    using detail::doubles;
    using detail::reject_unknown;
    try {
        reject_unknown(j,
                       {"name", "description", "design", "replicates", "estimators", "exposures", "effects",
                        "effect_scale", "noise", "genotypes", "instrument_effects", "grid", "hidden_exposures",
                        "tested_exposure", "alpha", "ld_choice", "perturb_two_sample_ld", "conditional_f",
                        "individual_se", "univariate_models", "twmr_alpha", "moment_check_every", "failure_cap"},
                       "scenario");
        Scenario s;
        s.name = j.value("name", std::string("scenario"));
        s.description = j.value("description", std::string());
        const std::string design = j.value("design", std::string("one_sample"));
        if (design == "one_sample") s.design = Design::OneSample;
        else if (design == "two_sample") s.design = Design::TwoSample;
        else if (design == "pleiotropy") s.design = Design::Pleiotropy;
        else if (design == "type1_power") s.design = Design::Type1Power;
        else if (design == "pc1") s.design = Design::Pc1;
        else fail(ErrorKind::Format, "unknown design '" + design + "'");
        s.replicates = j.value("replicates", 100);
        if (s.replicates < 1) fail(ErrorKind::Format, "replicates must be at least 1");
        if (j.contains("estimators")) {
            s.estimators.clear();
            for (const auto& e : j.at("estimators")) s.estimators.push_back(parse_method(e.get<std::string>()));
            if (s.estimators.empty()) fail(ErrorKind::Format, "estimators must not be empty");
        }
        if (j.contains("exposures")) s.exposure_names = j.at("exposures").get<std::vector<std::string>>();
        if (j.contains("effects")) {
            const auto c = doubles(j.at("effects"), "effects");
            s.effects = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
        }
        const std::string scale = j.value("effect_scale", std::string("standardized"));
        if (scale == "standardized") s.scale = EffectScale::Standardized;
        else if (scale == "raw") s.scale = EffectScale::Raw;
        else fail(ErrorKind::Format, "effect_scale must be standardized or raw");
        if (j.contains("noise")) {
            const auto& nz = j.at("noise");
            reject_unknown(nz, {"sigma_x", "sigma_y", "confounding"}, "noise");
            s.sigma_x = nz.value("sigma_x", 1.0);
            s.sigma_y = nz.value("sigma_y", 1.0);
            s.confounding = nz.value("confounding", 0.0);
        }

        if (!j.contains("genotypes")) fail(ErrorKind::Format, "scenario needs a genotypes block");
        json g = j.at("genotypes");
        reject_unknown(g, {"file", "mafs", "maf", "snps", "successive_r", "correlation_range", "ld", "generator"},
                       "genotypes");
        if (g.contains("file")) {
            const auto path = data_dir / g.at("file").get<std::string>();
            std::ifstream in(path);
            if (!in) fail(ErrorKind::Format, "cannot open genotype fixture " + path.string());
            json fx;
            try {
                in >> fx;
            } catch (const json::exception& e) {
                fail(ErrorKind::Format, path.string() + ": " + e.what());
            }
            for (auto it = fx.begin(); it != fx.end(); ++it)
                if (!g.contains(it.key()) && it.key() != "names" && it.key() != "description") g[it.key()] = it.value();
        }
        if (g.contains("mafs")) s.mafs = doubles(g.at("mafs"), "mafs");
        if (g.contains("maf")) {
            const int snps = g.value("snps", 0);
            if (snps < 1) fail(ErrorKind::Format, "genotypes.maf needs genotypes.snps >= 1");
            s.mafs.assign(static_cast<std::size_t>(snps), g.at("maf").get<double>());
        }
        if (s.mafs.empty()) fail(ErrorKind::Format, "genotypes need mafs (or maf with snps)");
        if (g.contains("successive_r")) s.successive_r = doubles(g.at("successive_r"), "successive_r");
        else s.successive_r.assign(s.mafs.size() - 1, 0.0);
        if (s.successive_r.size() + 1 != s.mafs.size())
            fail(ErrorKind::Format, "successive_r needs one entry per consecutive SNP pair");
        if (g.contains("correlation_range")) {
            const auto r = doubles(g.at("correlation_range"), "correlation_range");
            if (r.size() != 2) fail(ErrorKind::Format, "correlation_range must be [lo, hi]");
            s.correlation_range = std::array<double, 2>{r[0], r[1]};
        }
        if (g.contains("ld")) {
            s.ld = detail::matrix_from(g.at("ld"), "genotypes.ld");
            s.latent = true;
        }
        const std::string gen = g.value("generator", std::string(s.latent ? "latent" : "markov"));
        if (gen == "latent") s.latent = true;
        else if (gen == "markov") {
            if (s.ld) fail(ErrorKind::Format, "a full LD matrix needs the latent generator");
        } else fail(ErrorKind::Format, "generator must be markov or latent");

        const auto K = s.effects.size();
        if (s.design != Design::Pc1 && K < 1) fail(ErrorKind::Format, "effects must list one value per exposure");
        if (j.contains("instrument_effects")) {
            const auto& ie = j.at("instrument_effects");
            reject_unknown(ie, {"matrix", "range", "value", "det_min", "det_max", "causal", "causal_snps", "label"},
                           "instrument_effects");
            if (ie.contains("matrix")) s.fixed_A = detail::matrix_from(ie.at("matrix"), "instrument_effects.matrix");
            json sj = json::object();
            for (const char* key : {"range", "value", "det_min", "det_max", "label"})
                if (ie.contains(key)) sj[key] = ie.at(key);
            s.strength = detail::strength_from(sj, s.strength);
            s.causal_count = ie.value("causal", 0);
            if (ie.contains("causal_snps")) s.causal_snps = ie.at("causal_snps").get<std::vector<int>>();
        }
        if (s.fixed_A && (s.fixed_A->rows() != static_cast<Eigen::Index>(s.mafs.size()) || s.fixed_A->cols() != K))
            fail(ErrorKind::Format, "instrument_effects.matrix must be SNPs x exposures");
        for (int c : s.causal_snps)
            if (c < 0 || c >= static_cast<int>(s.mafs.size())) fail(ErrorKind::Format, "causal_snps index out of range");
        if (s.causal_count < 0 || (s.causal_count > 0 && s.causal_count < K))
            fail(ErrorKind::Format, "instrument_effects.causal must be at least the number of exposures");
        if (!s.causal_snps.empty() && static_cast<Eigen::Index>(s.causal_snps.size()) < K)
            fail(ErrorKind::Format, "causal_snps needs at least one SNP per exposure");

        if (j.contains("grid")) {
            const auto& gr = j.at("grid");
            reject_unknown(gr,
                           {"n", "correlation", "instrument_strength", "ld_threshold", "hidden_effect",
                            "sample_size_pairs", "wishart_df", "samples"},
                           "grid");
            if (gr.contains("n")) s.n = gr.at("n").get<std::vector<long>>();
            if (gr.contains("correlation")) s.correlations = doubles(gr.at("correlation"), "grid.correlation");
            if (gr.contains("instrument_strength"))
                for (const auto& e : gr.at("instrument_strength")) s.strengths.push_back(detail::strength_from(e, s.strength));
            if (gr.contains("ld_threshold")) s.ld_thresholds = doubles(gr.at("ld_threshold"), "grid.ld_threshold");
            if (gr.contains("hidden_effect")) s.hidden_effects = doubles(gr.at("hidden_effect"), "grid.hidden_effect");
            if (gr.contains("sample_size_pairs"))
                for (const auto& p : gr.at("sample_size_pairs")) {
                    const auto v = p.get<std::vector<long>>();
                    if (v.size() != 2) fail(ErrorKind::Format, "sample_size_pairs entries must be [n_exposure, n_outcome]");
                    s.sample_size_pairs.push_back({v[0], v[1]});
                }
            if (gr.contains("wishart_df")) s.wishart_df = doubles(gr.at("wishart_df"), "grid.wishart_df");
            if (gr.contains("samples")) s.samples = gr.at("samples").get<std::vector<std::string>>();
        }
        for (long n : s.n)
            if (n < 2) fail(ErrorKind::Format, "sample sizes must be at least 2");
        for (const auto& p : s.sample_size_pairs)
            if (p[0] < 2 || p[1] < 2) fail(ErrorKind::Format, "sample sizes must be at least 2");
        for (const auto& v : s.samples)
            if (v != "one" && v != "two") fail(ErrorKind::Format, "grid.samples entries must be one or two");
        for (double df : s.wishart_df) {
            if (df != 0.0 && df < static_cast<double>(s.mafs.size()))
                fail(ErrorKind::Format, "wishart_df must be 0 (no perturbation) or at least the SNP count");
            if (df != 0.0) s.latent = true;
        }
        if (s.design == Design::TwoSample && s.sample_size_pairs.empty())
            fail(ErrorKind::Format, "two_sample design needs grid.sample_size_pairs");
        if (s.design == Design::Pleiotropy) {
            if (!j.contains("hidden_exposures")) fail(ErrorKind::Format, "pleiotropy design needs hidden_exposures");
            s.hidden_exposures = j.at("hidden_exposures").get<std::vector<int>>();
            if (s.hidden_exposures.empty()) fail(ErrorKind::Format, "hidden_exposures must not be empty");
            for (int h : s.hidden_exposures)
                if (h < 0 || h >= K) fail(ErrorKind::Format, "hidden exposure index out of range");
            if (static_cast<Eigen::Index>(s.hidden_exposures.size()) >= K)
                fail(ErrorKind::Format, "at least one exposure must remain observed");
        } else if (j.contains("hidden_exposures")) {
            fail(ErrorKind::Format, "hidden_exposures is only valid for the pleiotropy design");
        }
        s.tested_exposure = j.value("tested_exposure", 0);
        if (s.design == Design::Type1Power && (s.tested_exposure < 0 || s.tested_exposure >= K))
            fail(ErrorKind::Format, "tested_exposure index out of range");
        s.alpha = j.value("alpha", 0.05);
        if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) fail(ErrorKind::Format, "alpha must lie in [0, 1]");
        s.ld_choice = j.value("ld_choice", std::string(s.design == Design::TwoSample ? "reference" : "sample"));
        if (s.design == Design::TwoSample) parse_ld_choice(s.ld_choice);
        else if (s.ld_choice != "sample" && s.ld_choice != "reference")
            fail(ErrorKind::Format, "one-sample ld_choice must be sample or reference");
        s.perturb_two_sample_ld = j.value("perturb_two_sample_ld", false);
        if (s.perturb_two_sample_ld) s.latent = true;
        s.conditional_f = j.value("conditional_f", false);
        s.individual_se = j.value("individual_se", false);
        s.univariate_models = j.value("univariate_models", false);
        s.twmr_alpha = j.value("twmr_alpha", kTwmrDefaultAlpha);
        s.moment_check_every = j.value("moment_check_every", 0);
        s.failure_cap = j.value("failure_cap", 0.05);
        if (s.design != Design::Pc1) {
            GenotypeModel gm{s.mafs, s.successive_r};
            if (!s.correlation_range && s.correlations.empty() && !s.latent) gm.validate();
        }
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("scenario: ") + e.what());
    }
}

inline Scenario load_scenario(const std::filesystem::path& path, const std::filesystem::path& data_dir = MVMR_DATA_DIR) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open scenario " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
    return parse_scenario(j, data_dir);
}

/// One cell of the scenario grid.
struct DesignPoint {
    long n = 0;
    std::optional<double> correlation;
    std::optional<std::size_t> strength;
    std::optional<double> ld_threshold;
    std::optional<double> hidden_effect;
    std::optional<std::array<long, 2>> sample_sizes;
    std::optional<double> wishart_df;
    std::optional<std::string> samples;
    std::optional<std::string> arm; // type-1/power: "null" or "alternative"
    // Random-stream key. Points that differ only in arm, samples, hidden effect
    // or Wishart df share it, so those comparisons are paired.
    std::size_t stream = 0;
};

inline std::vector<DesignPoint> design_points(const Scenario& s) {
    std::vector<DesignPoint> pts{DesignPoint{}};
    auto expand = [&](std::size_t count, auto&& set) {
        if (count == 0) return;
        std::vector<DesignPoint> next;
        for (const auto& p : pts)
            for (std::size_t i = 0; i < count; ++i) {
                DesignPoint q = p;
                set(q, i);
                next.push_back(q);
            }
        pts = std::move(next);
    };
    if (s.design == Design::Type1Power)
        expand(2, [&](DesignPoint& p, std::size_t i) { p.arm = i == 0 ? "null" : "alternative"; });
    expand(s.samples.size(), [&](DesignPoint& p, std::size_t i) { p.samples = s.samples[i]; });
    expand(s.sample_size_pairs.size(), [&](DesignPoint& p, std::size_t i) { p.sample_sizes = s.sample_size_pairs[i]; });
    if (s.design != Design::TwoSample) expand(s.n.size(), [&](DesignPoint& p, std::size_t i) { p.n = s.n[i]; });
    expand(s.correlations.size(), [&](DesignPoint& p, std::size_t i) { p.correlation = s.correlations[i]; });
    expand(s.strengths.size(), [&](DesignPoint& p, std::size_t i) { p.strength = i; });
    expand(s.ld_thresholds.size(), [&](DesignPoint& p, std::size_t i) { p.ld_threshold = s.ld_thresholds[i]; });
    expand(s.hidden_effects.size(), [&](DesignPoint& p, std::size_t i) { p.hidden_effect = s.hidden_effects[i]; });
    expand(s.wishart_df.size(), [&](DesignPoint& p, std::size_t i) { p.wishart_df = s.wishart_df[i]; });
    using Key = std::tuple<long, std::optional<double>, std::optional<std::size_t>, std::optional<double>,
                           std::optional<std::array<long, 2>>>;
    std::map<Key, std::size_t> keys;
    for (auto& p : pts) {
        const Key k{p.n, p.correlation, p.strength, p.ld_threshold, p.sample_sizes};
        p.stream = keys.try_emplace(k, keys.size()).first->second;
    }
    return pts;
}

/// Greedy SNP-order pruning: keep a SNP when its r² with every kept SNP is at most `threshold`.
inline std::vector<Eigen::Index> prune_by_ld(const Matrix& ld, double threshold) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ld.rows(); ++i) {
        bool ok = true;
        for (auto j : keep)
            if (ld(i, j) * ld(i, j) > threshold) {
                ok = false;
                break;
            }
        if (ok) keep.push_back(i);
    }
    return keep;
}

} // namespace mvmr
