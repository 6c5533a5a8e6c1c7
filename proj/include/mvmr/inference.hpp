#pragma once

#include "mvmr/error.hpp"
#include "mvmr/estimators.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/summary_stats.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace mvmr {

inline constexpr double kBonferroniThreshold = 3e-4;

struct StandardErrors {
    Vector summary;
    std::optional<Vector> individual;
    double sigma_u2_summary = 0.0;
    std::optional<double> sigma_u2_individual;
};

namespace detail {

/// Diagonal of (Σ_EX' Σ_EE^{-1} Σ_EX)^{-1}.
inline Vector precision_diagonal(const SummaryStatistics& s) {
    const Matrix w = ld_solve(s.sigma_EE, s.sigma_EX);
    const Matrix m = s.sigma_EX.transpose() * w;
    const auto K = s.exposures();
    return solve_normal((m + m.transpose()) / 2.0, Matrix(Matrix::Identity(K, K))).diagonal();
}

} // namespace detail

/// Summary-mode SEs use σ_U² = max(0, 1 - c' Σ_EX' Σ_EE^{-1} Σ_EY) and the
/// outcome sample size. Individual-mode SEs use the residual variance of
/// y - x c and the covariances of the individual data.
inline StandardErrors standard_errors(const EstimateResult& r, const SummaryStatistics& s,
                                      const IndividualData* individual = nullptr) {
    if (!(s.n_outcome > 0.0)) fail(ErrorKind::Argument, "summary-mode standard errors need n_outcome");
    if (r.effects.size() != s.exposures()) fail(ErrorKind::Argument, "estimate does not match statistics");
    StandardErrors out;
    const Vector proj = detail::ld_solve(s.sigma_EE, s.sigma_EY);
    double su2 = 1.0 - r.effects.dot(s.sigma_EX.transpose() * proj);
    su2 = std::isfinite(su2) ? std::max(0.0, su2) : 1.0;
    out.sigma_u2_summary = su2;
    out.summary = (su2 * detail::precision_diagonal(s).array() / s.n_outcome).sqrt().matrix();

    if (individual) {
        const auto& d = *individual;
        if (d.x.cols() != r.effects.size()) fail(ErrorKind::Argument, "individual data exposure count mismatch");
        const Vector resid = d.y - d.x * r.effects;
        const double n = static_cast<double>(d.n());
        const double ru2 = resid.squaredNorm() / n;
        out.sigma_u2_individual = ru2;
        const SummaryStatistics ds = d.summary();
        out.individual = (ru2 * detail::precision_diagonal(ds).array() / n).sqrt().matrix();
    }
    return out;
}

/// Two-sided normal p-value.
inline double normal_p_value(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

struct PValues {
    Vector p;
    std::vector<bool> significant;
    bool degenerate = false;
};

inline PValues p_values(const Vector& effects, const Vector& se, double threshold = kBonferroniThreshold) {
    if (effects.size() != se.size()) fail(ErrorKind::Argument, "effects and standard errors differ in length");
    if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorKind::Argument, "threshold must lie in [0, 1]");
    PValues out;
    out.p.resize(effects.size());
    out.significant.resize(static_cast<std::size_t>(effects.size()));
    for (Eigen::Index k = 0; k < effects.size(); ++k) {
        double p;
        if (se(k) > 0.0 && std::isfinite(se(k))) {
            p = normal_p_value(effects(k) / se(k));
        } else {
            out.degenerate = true;
            p = effects(k) != 0.0 ? 0.0 : 1.0;
        }
        out.p(k) = std::clamp(p, 0.0, 1.0);
        out.significant[static_cast<std::size_t>(k)] = out.p(k) < threshold;
    }
    return out;
}

/// Attaches summary-mode (and optionally individual-mode) SEs and p-values.
inline void attach_inference(EstimateResult& r, const SummaryStatistics& s, const IndividualData* individual = nullptr,
                             double threshold = kBonferroniThreshold) {
    const StandardErrors se = standard_errors(r, s, individual);
    r.standard_errors = se.summary;
    r.individual_standard_errors = se.individual;
    const PValues pv = p_values(r.effects, r.standard_errors, threshold);
    r.p_values = pv.p;
    r.bonferroni = pv.significant;
    r.degenerate = pv.degenerate;
}

/// Conditional first-stage F per exposure. Exposure k is regressed on the
/// other exposures by 2SLS; the instruments' explanatory power for the
/// residual is then F-tested and scaled by L / (L - K + 1).
inline Vector conditional_f(const IndividualData& d) {
    const auto N = d.n(), L = d.e.cols(), K = d.x.cols();
    if (d.e.rows() != N || d.x.rows() != N) fail(ErrorKind::Argument, "row counts differ");
    if (N <= L + K) fail(ErrorKind::Argument, "conditional F needs N > L + K");
    if (L < K) fail(ErrorKind::Underdetermined, "fewer instruments than exposures");
    Eigen::ColPivHouseholderQR<Matrix> qr(d.e);
    if (qr.rank() < L) fail(ErrorKind::Conditioning, "instrument matrix is rank deficient");
    const Matrix q = qr.householderQ() * Matrix::Identity(N, L);
    auto project = [&](const Matrix& v) -> Matrix { return q * (q.transpose() * v); };

    Vector f(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        Vector resid = d.x.col(k);
        if (K > 1) {
            Matrix others(N, K - 1);
            for (Eigen::Index j = 0, c = 0; j < K; ++j)
                if (j != k) others.col(c++) = d.x.col(j);
            const Matrix fitted = project(others);
            const Matrix gram = fitted.transpose() * others;
            if (numerical_rank(gram) < K - 1) fail(ErrorKind::Conditioning, "exposures are collinear given the instruments");
            Eigen::LDLT<Matrix> ldlt((gram + gram.transpose()) / 2.0);
            const Vector delta = ldlt.solve(fitted.transpose() * d.x.col(k));
            resid -= others * delta;
        }
        const Vector explained = project(resid);
        const double ss_explained = explained.squaredNorm();
        const double ss_resid = (resid - explained).squaredNorm();
        if (!(ss_resid > 0.0)) fail(ErrorKind::Conditioning, "instruments explain the residual exactly");
        const double lf = static_cast<double>(L), nf = static_cast<double>(N);
        f(k) = (ss_explained / lf) / (ss_resid / (nf - lf)) * lf / (lf - static_cast<double>(K) + 1.0);
    }
    return f;
}

enum class DeterminantMeasure { Volume, NormalizedGram };

struct DiagnosticThresholds {
    double pass = 0.05;
    double fail = 0.001;
    DeterminantMeasure measure = DeterminantMeasure::Volume;
};

/// Determinant, rank and conditioning report for the identification problem.
/// The verdict compares the chosen determinant measure against the thresholds
/// and fails outright when Σ_EX is rank deficient.
inline Diagnostics identifiability_diagnostics(const SummaryStatistics& s, const DiagnosticThresholds& t = {}) {
    Diagnostics d;
    const Matrix& ex = s.sigma_EX;
    const auto K = ex.cols();
    const Matrix gram = ex.transpose() * ex;
    d.gram_det = K ? gram.determinant() : 0.0;
    d.volume = std::sqrt(std::max(0.0, d.gram_det));
    Vector norms = ex.colwise().norm().transpose();
    if ((norms.array() > 0.0).all()) {
        const Matrix ng = norms.cwiseInverse().asDiagonal() * gram * norms.cwiseInverse().asDiagonal();
        d.normalized_gram_det = std::max(0.0, ng.determinant());
    }
    d.ld_det = s.sigma_EE.size() ? s.sigma_EE.determinant() : 0.0;
    d.rank_EX = numerical_rank(ex);
    d.rank_EE = numerical_rank(s.sigma_EE);
    d.cond_EX = condition_number(ex);
    d.cond_EE = condition_number(s.sigma_EE);
    const double m = t.measure == DeterminantMeasure::Volume ? d.volume : d.normalized_gram_det;
    if (d.rank_EX < K || ex.rows() < K || m < t.fail)
        d.verdict = Verdict::Fail;
    else if (m > t.pass)
        d.verdict = Verdict::Pass;
    else
        d.verdict = Verdict::Warn;
    return d;
}

struct EstimateOptions {
    Method method = Method::LeastSquares;
    double alpha = kTwmrDefaultAlpha;
    double bonferroni = kBonferroniThreshold;
    DiagnosticThresholds thresholds;
};

/// Estimator, diagnostics, SEs and p-values in one call.
inline EstimateResult estimate(const SummaryStatistics& s, const EstimateOptions& opt = {},
                               const IndividualData* individual = nullptr) {
    EstimateResult r = run_estimator(s, opt.method, opt.alpha);
    r.diagnostics = identifiability_diagnostics(s, opt.thresholds);
    if (s.n_outcome > 0.0) attach_inference(r, s, individual, opt.bonferroni);
    if (individual) r.conditional_f = conditional_f(*individual);
    return r;
}

} // namespace mvmr
