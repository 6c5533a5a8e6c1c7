#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace mvmr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative singular-value tolerance used for every rank decision.
inline constexpr double kRankTolerance = 1e-10;

inline Vector singular_values(const Matrix& m) {
    if (m.size() == 0) return Vector();
    return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

/// Number of singular values above `rel_tol * sigma_max`.
inline Eigen::Index numerical_rank(const Matrix& m, double rel_tol = kRankTolerance) {
    const Vector sv = singular_values(m);
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * sv(0)) ++rank;
    return rank;
}

/// 2-norm condition number; infinity for singular or empty input.
inline double condition_number(const Matrix& m) {
    const Vector sv = singular_values(m);
    if (sv.size() == 0) return std::numeric_limits<double>::infinity();
    const double smin = sv(sv.size() - 1);
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / smin;
}

inline bool is_symmetric(const Matrix& m, double tol) {
    if (m.rows() != m.cols()) return false;
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

inline double min_eigenvalue(const Matrix& sym) {
    if (sym.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
    return eig.eigenvalues()(0);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Column means and population (1/N) standard deviations.
struct ColumnScale {
    Vector mean;
    Vector sd;
};

inline ColumnScale column_scale(const Matrix& m) {
    ColumnScale s;
    const double n = static_cast<double>(m.rows());
    s.mean = m.colwise().mean().transpose();
    s.sd.resize(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        s.sd(j) = std::sqrt((m.col(j).array() - s.mean(j)).square().sum() / n);
    return s;
}

/// Centre and scale columns in place to mean zero and unit (1/N) variance.
/// Returns the scale that was removed. Zero-variance columns are left centred.
inline ColumnScale standardize_columns(Matrix& m) {
    ColumnScale s = column_scale(m);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m.col(j).array() -= s.mean(j);
        if (s.sd(j) > 0.0) m.col(j) /= s.sd(j);
    }
    return s;
}

/// Fixed textual rendering used by every CSV/JSON writer so reports are byte-stable.
inline std::string format_number(double v, int precision = 10) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0; // drop negative zero
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

} // namespace mvmr
