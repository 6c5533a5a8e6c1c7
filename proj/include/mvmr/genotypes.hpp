#pragma once

#include "mvmr/error.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/owens_t.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace mvmr {

/// Correlation matrix implied by a Markov chain with the given successive r.
inline Matrix markov_ld(const std::vector<double>& successive_r) {
    const auto L = static_cast<Eigen::Index>(successive_r.size() + 1);
    Matrix r = Matrix::Identity(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
        double v = 1.0;
        for (Eigen::Index j = i + 1; j < L; ++j) {
            v *= successive_r[static_cast<std::size_t>(j - 1)];
            r(i, j) = r(j, i) = v;
        }
    }
    return r;
}

/// Markov-chain genotype model: each allele of SNP k+1 is drawn conditionally
/// on the matching allele of SNP k.
struct GenotypeModel {
    std::vector<double> mafs;
    std::vector<double> successive_r;

    std::size_t size() const { return mafs.size(); }

    void validate() const {
        if (mafs.empty()) fail(ErrorKind::Argument, "genotype model needs at least one SNP");
        if (successive_r.size() + 1 != mafs.size())
            fail(ErrorKind::Argument, "need one successive correlation per consecutive SNP pair");
        for (std::size_t i = 0; i < mafs.size(); ++i)
            if (!(mafs[i] > 0.0 && mafs[i] <= 0.5))
                fail(ErrorKind::Argument, "MAF of SNP " + std::to_string(i) + " must lie in (0, 0.5]");
        for (std::size_t k = 0; k + 1 < mafs.size(); ++k) {
            const double m1 = mafs[k], m2 = mafs[k + 1], r = successive_r[k];
            const double slope = r * std::sqrt(m2 * (1 - m2) / (m1 * (1 - m1)));
            const double p0 = m2 - slope * m1, p1 = m2 + slope * (1 - m1);
            if (!(std::abs(r) <= 1.0) || p0 < 0.0 || p0 > 1.0 || p1 < 0.0 || p1 > 1.0)
                fail(ErrorKind::Feasibility, "SNP pair (" + std::to_string(k) + ", " + std::to_string(k + 1) +
                                                 "): r = " + format_number(r, 6) + " is not reachable with MAFs " +
                                                 format_number(m1, 4) + " and " + format_number(m2, 4));
        }
    }

    Matrix ld() const { return markov_ld(successive_r); }
};

/// n x L matrix of 0/1/2 genotypes.
inline Matrix sample_genotypes(const GenotypeModel& model, Eigen::Index n, Rng& rng) {
    model.validate();
    const auto L = static_cast<Eigen::Index>(model.size());
    Matrix g = Matrix::Zero(n, L);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p0(model.size()), p1(model.size());
    for (std::size_t k = 1; k < model.size(); ++k) {
        const double m1 = model.mafs[k - 1], m2 = model.mafs[k];
        const double slope = model.successive_r[k - 1] * std::sqrt(m2 * (1 - m2) / (m1 * (1 - m1)));
        p0[k] = m2 - slope * m1;
        p1[k] = m2 + slope * (1 - m1);
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (int h = 0; h < 2; ++h) {
            bool a = u(rng) < model.mafs[0];
            g(i, 0) += a;
            for (Eigen::Index k = 1; k < L; ++k) {
                a = u(rng) < (a ? p1[static_cast<std::size_t>(k)] : p0[static_cast<std::size_t>(k)]);
                g(i, k) += a;
            }
        }
    return g;
}

inline Matrix sample_genotypes(const GenotypeModel& model, Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_genotypes(model, n, rng);
}

// ------------------------------------------------------ latent construction

/// P(Z1 <= h, Z2 <= k) for standard bivariate normals with correlation rho,
/// through Owen's T function.
inline double bivariate_normal_cdf(double h, double k, double rho) {
    const boost::math::normal_distribution<double> nd;
    const double ph = boost::math::cdf(nd, h), pk = boost::math::cdf(nd, k);
    if (rho == 0.0) return ph * pk;
    if (rho >= 1.0) return std::min(ph, pk);
    if (rho <= -1.0) return std::max(0.0, ph + pk - 1.0);
    const double s = std::sqrt(1.0 - rho * rho);
    auto t_term = [&](double x, double y) {
        if (x == 0.0) {
            if (y == 0.0) return 0.0;
            return y > 0.0 ? 0.25 : -0.25;
        }
        return boost::math::owens_t(x, (y - rho * x) / (x * s));
    };
    double beta = 0.0;
    if (h * k < 0.0 || (h * k == 0.0 && h + k < 0.0)) beta = 0.5;
    if (h == 0.0 && k == 0.0) return 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
    return std::clamp(0.5 * (ph + pk) - t_term(h, k) - t_term(k, h) - beta, 0.0, std::min(ph, pk));
}

inline double bivariate_normal_pdf(double h, double k, double rho) {
    const double s2 = 1.0 - rho * rho;
    return std::exp(-(h * h - 2.0 * rho * h * k + k * k) / (2.0 * s2)) / (2.0 * std::numbers::pi * std::sqrt(s2));
}

/// Correlation of two Bernoulli alleles obtained by thresholding latent normals.
inline double latent_allele_correlation(double m1, double m2, double rho) {
    const boost::math::normal_distribution<double> nd;
    const double t1 = boost::math::quantile(nd, m1), t2 = boost::math::quantile(nd, m2);
    return (bivariate_normal_cdf(t1, t2, rho) - m1 * m2) / std::sqrt(m1 * (1 - m1) * m2 * (1 - m2));
}

/// Gaussian-copula genotype model able to follow a full LD matrix.
struct LatentGenotypeModel {
    std::vector<double> mafs;
    Matrix latent;   // latent normal correlation after positive-definite repair
    Matrix realized; // genotype correlation the model actually produces
};

inline constexpr double kLatentRhoBound = 0.9999;

/// Calibrates latent correlations pairwise by bisection, repairs positive
/// definiteness by eigenvalue clipping, and records the realized LD.
inline LatentGenotypeModel calibrate_latent(const std::vector<double>& mafs, const Matrix& target) {
    const auto L = static_cast<Eigen::Index>(mafs.size());
    if (target.rows() != L || target.cols() != L) fail(ErrorKind::Argument, "LD matrix size does not match MAFs");
    for (double m : mafs)
        if (!(m > 0.0 && m <= 0.5)) fail(ErrorKind::Argument, "MAF must lie in (0, 0.5]");
    LatentGenotypeModel out;
    out.mafs = mafs;
    out.latent = Matrix::Identity(L, L);
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index j = i + 1; j < L; ++j) {
            const double m1 = mafs[static_cast<std::size_t>(i)], m2 = mafs[static_cast<std::size_t>(j)];
            const double want = target(i, j);
            const boost::math::normal_distribution<double> nd;
            const double t1 = boost::math::quantile(nd, m1), t2 = boost::math::quantile(nd, m2);
            const double scale = std::sqrt(m1 * (1 - m1) * m2 * (1 - m2));
            auto f = [&](double rho) { return (bivariate_normal_cdf(t1, t2, rho) - m1 * m2) / scale - want; };
            double lo = -kLatentRhoBound, hi = kLatentRhoBound, rho;
            if (f(lo) >= 0.0) {
                rho = lo;
            } else if (f(hi) <= 0.0) {
                rho = hi;
            } else {
                // Newton steps on a monotone function, kept inside a shrinking bracket.
                rho = std::clamp(want, lo, hi);
                for (int it = 0; it < 100; ++it) {
                    const double v = f(rho);
                    if (std::abs(v) < 1e-13) break;
                    (v < 0.0 ? lo : hi) = rho;
                    double next = rho - v * scale / bivariate_normal_pdf(t1, t2, rho);
                    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
                    if (hi - lo < 1e-14) break;
                    rho = next;
                }
            }
            out.latent(i, j) = out.latent(j, i) = rho;
        }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(out.latent);
    if (eig.eigenvalues()(0) < 1e-6) {
        const Vector clipped = eig.eigenvalues().cwiseMax(1e-6);
        Matrix fixed = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        const Vector d = fixed.diagonal().cwiseSqrt().cwiseInverse();
        out.latent = d.asDiagonal() * fixed * d.asDiagonal();
        out.latent.diagonal().setOnes();
    }
    out.realized = Matrix::Identity(L, L);
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index j = i + 1; j < L; ++j)
            out.realized(i, j) = out.realized(j, i) = latent_allele_correlation(
                mafs[static_cast<std::size_t>(i)], mafs[static_cast<std::size_t>(j)], out.latent(i, j));
    return out;
}

inline Matrix sample_genotypes(const LatentGenotypeModel& model, Eigen::Index n, Rng& rng) {
    const auto L = static_cast<Eigen::Index>(model.mafs.size());
    Eigen::LLT<Matrix> llt(model.latent);
    if (llt.info() != Eigen::Success) fail(ErrorKind::Feasibility, "latent correlation is not positive definite");
    const Matrix chol = llt.matrixL();
    const boost::math::normal_distribution<double> nd;
    Vector thresh(L);
    for (Eigen::Index j = 0; j < L; ++j) thresh(j) = boost::math::quantile(nd, model.mafs[static_cast<std::size_t>(j)]);
    std::normal_distribution<double> z;
    Matrix g = Matrix::Zero(n, L);
    Vector w(L);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int h = 0; h < 2; ++h) {
            for (Eigen::Index j = 0; j < L; ++j) w(j) = z(rng);
            const Vector lat = chol * w;
            for (Eigen::Index j = 0; j < L; ++j) g(i, j) += lat(j) < thresh(j);
        }
    return g;
}

// ------------------------------------------------------------ perturbation

/// Draws W ~ Wishart(df, reference / df) by the Bartlett decomposition and
/// rescales it to unit diagonal.
inline Matrix perturb_ld(const Matrix& reference, double df, Rng& rng) {
    const auto p = reference.rows();
    if (reference.cols() != p || p == 0) fail(ErrorKind::Argument, "reference LD must be square and non-empty");
    if (!reference.allFinite() || !is_symmetric(reference, 1e-8)) fail(ErrorKind::Argument, "reference LD must be symmetric");
    if (!(df >= static_cast<double>(p)))
        fail(ErrorKind::Degenerate, "Wishart degrees of freedom " + format_number(df, 6) + " below dimension " +
                                        std::to_string(p));
    Eigen::LLT<Matrix> llt(reference / df);
    if (llt.info() != Eigen::Success || min_eigenvalue(reference) <= 0.0)
        fail(ErrorKind::Argument, "reference LD is not positive definite");
    const Matrix chol = llt.matrixL();
    Matrix bart = Matrix::Zero(p, p);
    std::normal_distribution<double> z;
    for (Eigen::Index i = 0; i < p; ++i) {
        std::chi_squared_distribution<double> chi(df - static_cast<double>(i));
        bart(i, i) = std::sqrt(chi(rng));
        for (Eigen::Index j = 0; j < i; ++j) bart(i, j) = z(rng);
    }
    const Matrix f = chol * bart;
    Matrix w = f * f.transpose();
    const Vector d = w.diagonal().cwiseSqrt().cwiseInverse();
    w = d.asDiagonal() * w * d.asDiagonal();
    w = (w + w.transpose()) / 2.0;
    w.diagonal().setOnes();
    return w;
}

inline Matrix perturb_ld(const Matrix& reference, double df, std::uint64_t seed) {
    Rng rng(seed);
    return perturb_ld(reference, df, rng);
}

/// Share of variance on the first principal component of two standardized
/// variables with correlation r.
inline double pc1_explained_variance(double r) {
    if (!(std::abs(r) < 1.0)) fail(ErrorKind::Argument, "correlation must lie in (-1, 1)");
    return (1.0 + std::abs(r)) / 2.0;
}

/// Empirical PC1 share of the sample correlation matrix of the columns of `g`.
inline double empirical_pc1_share(const Matrix& g) {
    Matrix c = g;
    const ColumnScale s = standardize_columns(c);
    for (Eigen::Index j = 0; j < s.sd.size(); ++j)
        if (!(s.sd(j) > 0.0)) fail(ErrorKind::Degenerate, "monomorphic SNP in PC1 sample");
    const Matrix corr = c.transpose() * c / static_cast<double>(c.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(corr, Eigen::EigenvaluesOnly);
    return eig.eigenvalues()(eig.eigenvalues().size() - 1) / eig.eigenvalues().sum();
}

} // namespace mvmr
