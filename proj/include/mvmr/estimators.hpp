#pragma once

#include "mvmr/error.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/summary_stats.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace mvmr {

enum class Method { LeastSquares, Gmm, GmmWeighted, TwmrShrunk };

inline const char* to_string(Method m) {
    switch (m) {
    case Method::LeastSquares: return "ls";
    case Method::Gmm: return "gmm";
    case Method::GmmWeighted: return "gmm_weighted";
    case Method::TwmrShrunk: return "twmr";
    }
    return "unknown";
}

inline Method parse_method(const std::string& s) {
    if (s == "ls") return Method::LeastSquares;
    if (s == "gmm") return Method::Gmm;
    if (s == "twmr") return Method::TwmrShrunk;
    fail(ErrorKind::Argument, "unknown estimator '" + s + "' (expected ls, gmm or twmr)");
}

enum class Verdict { Pass, Warn, Fail };

inline const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Warn: return "warn";
    case Verdict::Fail: return "fail";
    }
    return "unknown";
}

struct Diagnostics {
    double gram_det = 0.0;            // det(Σ_EX^T Σ_EX)
    double volume = 0.0;              // sqrt(gram_det); |det Σ_EX| when square
    double normalized_gram_det = 0.0; // det of the column-normalized Gram matrix
    double ld_det = 0.0;              // det(Σ_EE)
    Eigen::Index rank_EX = 0;
    Eigen::Index rank_EE = 0;
    double cond_EX = 0.0;
    double cond_EE = 0.0;
    Verdict verdict = Verdict::Fail;
};

struct EstimateResult {
    Method method = Method::LeastSquares;
    Vector effects;
    Vector standard_errors;             // summary-mode SEs when computed
    std::optional<Vector> individual_standard_errors;
    Vector p_values;
    std::vector<bool> bonferroni;
    bool degenerate = false;
    Diagnostics diagnostics;
    std::optional<Vector> conditional_f;
    double alpha = 0.0; // TWMR shrinkage used
};

/// Relative threshold on the instrument-exposure covariance rank.
inline void require_full_column_rank(const Matrix& sigma_EX) {
    const auto rank = numerical_rank(sigma_EX);
    if (rank < sigma_EX.cols()) {
        const double det = (sigma_EX.transpose() * sigma_EX).determinant();
        fail(ErrorKind::Underdetermined, "instrument-exposure covariance has rank " + std::to_string(rank) + " < " +
                                             std::to_string(sigma_EX.cols()) +
                                             " (det of Gram matrix = " + format_number(det, 6) + ")");
    }
}

namespace detail {

inline Matrix solve_normal(const Matrix& m, const Matrix& b) {
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        fail(ErrorKind::Underdetermined, "normal equations are not positive definite");
    return ldlt.solve(b);
}

inline Vector solve_normal(const Matrix& m, const Vector& b) { return solve_normal(m, Matrix(b)).col(0); }

inline void check_ld_conditioning(const Matrix& sigma_EE) {
    const double cond = condition_number(sigma_EE);
    if (!(cond <= 1e12))
        fail(ErrorKind::IllConditionedLd, "LD matrix condition number " + format_number(cond, 4) + " exceeds 1e12");
}

/// Σ_EE^{-1} applied to the columns of `rhs`, without forming the inverse.
inline Matrix ld_solve(const Matrix& sigma_EE, const Matrix& rhs) {
    Eigen::LLT<Matrix> llt(sigma_EE);
    if (llt.info() != Eigen::Success) fail(ErrorKind::IllConditionedLd, "LD matrix is not positive definite");
    return llt.solve(rhs);
}

} // namespace detail

/// Minimizer of (Σ_EY - Σ_EX c)' Δ (Σ_EY - Σ_EX c).
inline EstimateResult gmm_estimate(const SummaryStatistics& s, const Matrix& delta) {
    s.validate();
    const auto L = s.instruments();
    if (delta.rows() != L || delta.cols() != L) fail(ErrorKind::Argument, "weight matrix must be L x L");
    if (!delta.allFinite() || !is_symmetric(delta, 1e-10 * std::max(1.0, delta.cwiseAbs().maxCoeff())))
        fail(ErrorKind::Argument, "weight matrix must be symmetric");
    Eigen::LLT<Matrix> chk(delta);
    if (chk.info() != Eigen::Success) fail(ErrorKind::Argument, "weight matrix is not positive definite");
    require_full_column_rank(s.sigma_EX);
    const Matrix wx = delta * s.sigma_EX;
    const Matrix m = s.sigma_EX.transpose() * wx;
    const Vector b = wx.transpose() * s.sigma_EY;
    EstimateResult r;
    r.method = Method::GmmWeighted;
    r.effects = detail::solve_normal(m, b);
    return r;
}

/// (Σ_EX' Σ_EX)^{-1} Σ_EX' Σ_EY, evaluated as the identity-weighted GMM.
inline EstimateResult ls_estimate(const SummaryStatistics& s) {
    EstimateResult r = gmm_estimate(s, Matrix::Identity(s.instruments(), s.instruments()));
    r.method = Method::LeastSquares;
    return r;
}

/// GMM with Δ = Σ_EE^{-1}; equivalent to two-stage least squares.
inline EstimateResult gmm_optimal(const SummaryStatistics& s) {
    s.validate();
    detail::check_ld_conditioning(s.sigma_EE);
    require_full_column_rank(s.sigma_EX);
    const Matrix w = detail::ld_solve(s.sigma_EE, s.sigma_EX);
    const Matrix m = s.sigma_EX.transpose() * w;
    const Vector b = w.transpose() * s.sigma_EY;
    EstimateResult r;
    r.method = Method::Gmm;
    r.effects = detail::solve_normal((m + m.transpose()) / 2.0, b);
    return r;
}

inline const double kTwmrDefaultAlpha = 1.0 / std::sqrt(3781.0);

/// GMM with H = (Σ_EX' Σ_EE^{-1} Σ_EX)^{-1} replaced by (1-α)H + αI.
inline EstimateResult twmr_shrunk_estimate(const SummaryStatistics& s, double alpha = kTwmrDefaultAlpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::Argument, "shrinkage alpha must lie in [0, 1]");
    s.validate();
    detail::check_ld_conditioning(s.sigma_EE);
    require_full_column_rank(s.sigma_EX);
    const Matrix w = detail::ld_solve(s.sigma_EE, s.sigma_EX);
    const Matrix m = s.sigma_EX.transpose() * w;
    const Vector b = w.transpose() * s.sigma_EY;
    const auto K = s.exposures();
    EstimateResult r;
    r.method = Method::TwmrShrunk;
    r.alpha = alpha;
    if (alpha == 0.0) {
        r.effects = detail::solve_normal((m + m.transpose()) / 2.0, b);
        return r;
    }
    const Matrix h = detail::solve_normal((m + m.transpose()) / 2.0, Matrix(Matrix::Identity(K, K)));
    const Matrix h_shrunk = (1.0 - alpha) * h + alpha * Matrix::Identity(K, K);
    r.effects = h_shrunk * b;
    return r;
}

inline constexpr double kWeakInstrumentTolerance = 1e-6;

/// Wald ratio σ_EY / σ_EX for one instrument and one exposure.
inline double univariate_ratio(double sigma_EX, double sigma_EY, double tol = kWeakInstrumentTolerance) {
    if (!std::isfinite(sigma_EX) || !std::isfinite(sigma_EY)) fail(ErrorKind::Argument, "non-finite covariance");
    if (std::abs(sigma_EX) <= tol)
        fail(ErrorKind::WeakInstrument, "|sigma_EX| = " + format_number(std::abs(sigma_EX), 4) + " below " +
                                            format_number(tol, 4));
    return sigma_EY / sigma_EX;
}

inline EstimateResult run_estimator(const SummaryStatistics& s, Method m, double alpha = kTwmrDefaultAlpha) {
    switch (m) {
    case Method::LeastSquares: return ls_estimate(s);
    case Method::Gmm: return gmm_optimal(s);
    case Method::TwmrShrunk: return twmr_shrunk_estimate(s, alpha);
    case Method::GmmWeighted: break;
    }
    fail(ErrorKind::Argument, "weighted GMM needs an explicit weight matrix");
}

} // namespace mvmr
