#pragma once

#include "mvmr/error.hpp"
#include "mvmr/linalg.hpp"

#include <cmath>
#include <string>

namespace mvmr {

/// Instrument-level covariances on the standardized scale. Sample sizes of
/// zero mean "not known".
struct SummaryStatistics {
    Matrix sigma_EX; // L x K
    Vector sigma_EY; // L
    Matrix sigma_EE; // L x L
    double n_exposure = 0.0;
    double n_outcome = 0.0;

    Eigen::Index instruments() const { return sigma_EX.rows(); }
    Eigen::Index exposures() const { return sigma_EX.cols(); }

    void validate() const {
        const auto L = sigma_EX.rows(), K = sigma_EX.cols();
        if (K < 1) fail(ErrorKind::Argument, "at least one exposure required");
        if (L < K)
            fail(ErrorKind::Underdetermined,
                 std::to_string(L) + " instruments for " + std::to_string(K) + " exposures");
        if (sigma_EY.size() != L) fail(ErrorKind::Argument, "sigma_EY length does not match sigma_EX rows");
        if (sigma_EE.rows() != L || sigma_EE.cols() != L) fail(ErrorKind::Argument, "sigma_EE must be L x L");
        if (!sigma_EX.allFinite() || !sigma_EY.allFinite() || !sigma_EE.allFinite())
            fail(ErrorKind::Argument, "non-finite summary statistic");
        if (!is_symmetric(sigma_EE, 1e-8)) fail(ErrorKind::Argument, "sigma_EE not symmetric");
        for (Eigen::Index i = 0; i < L; ++i)
            if (std::abs(sigma_EE(i, i) - 1.0) > 1e-8) fail(ErrorKind::Argument, "sigma_EE diagonal must be 1");
        if (min_eigenvalue(sigma_EE) < -1e-10) fail(ErrorKind::Argument, "sigma_EE not positive semidefinite");
        if (n_exposure < 0.0 || n_outcome < 0.0 || !std::isfinite(n_exposure) || !std::isfinite(n_outcome))
            fail(ErrorKind::Argument, "sample sizes must be finite and non-negative");
    }

    /// Copy keeping only the listed instrument rows.
    SummaryStatistics select_instruments(const std::vector<Eigen::Index>& rows) const {
        SummaryStatistics s;
        const auto L = static_cast<Eigen::Index>(rows.size());
        s.sigma_EX.resize(L, sigma_EX.cols());
        s.sigma_EY.resize(L);
        s.sigma_EE.resize(L, L);
        for (Eigen::Index i = 0; i < L; ++i) {
            s.sigma_EX.row(i) = sigma_EX.row(rows[static_cast<std::size_t>(i)]);
            s.sigma_EY(i) = sigma_EY(rows[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < L; ++j)
                s.sigma_EE(i, j) = sigma_EE(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
        }
        s.n_exposure = n_exposure;
        s.n_outcome = n_outcome;
        return s;
    }

    /// Copy keeping only the listed exposure columns.
    SummaryStatistics select_exposures(const std::vector<Eigen::Index>& cols) const {
        SummaryStatistics s = *this;
        s.sigma_EX.resize(sigma_EX.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) s.sigma_EX.col(static_cast<Eigen::Index>(j)) = sigma_EX.col(cols[j]);
        return s;
    }
};

/// Individual-level data: genotypes (N x L), exposures (N x K), outcome (N).
struct IndividualData {
    Matrix e;
    Matrix x;
    Vector y;
    bool standardized = true;

    Eigen::Index n() const { return y.size(); }

    void validate() const {
        const auto N = y.size();
        if (e.rows() != N || x.rows() != N) fail(ErrorKind::Argument, "row counts of e, x and y differ");
        if (N <= e.cols()) fail(ErrorKind::Argument, "need more observations than instruments");
        if (x.cols() < 1) fail(ErrorKind::Argument, "at least one exposure required");
        if (!e.allFinite() || !x.allFinite() || !y.allFinite()) fail(ErrorKind::Argument, "non-finite data");
        if (!standardized) return;
        auto check = [&](const Matrix& m, const char* what) {
            const ColumnScale s = column_scale(m);
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                if (std::abs(s.mean(j)) > 1e-8 || std::abs(s.sd(j) - 1.0) > 1e-6)
                    fail(ErrorKind::Argument, std::string(what) + " column " + std::to_string(j) + " is not standardized");
        };
        check(e, "genotype");
        check(x, "exposure");
        check(Matrix(y), "outcome");
    }

    /// Covariances over N (the data are centred).
    SummaryStatistics summary() const {
        const double n = static_cast<double>(this->n());
        SummaryStatistics s;
        s.sigma_EX = e.transpose() * x / n;
        s.sigma_EY = e.transpose() * y / n;
        s.sigma_EE = e.transpose() * e / n;
        s.sigma_EE = (s.sigma_EE + s.sigma_EE.transpose()) / 2.0;
        if (standardized) s.sigma_EE.diagonal().setOnes();
        s.n_exposure = s.n_outcome = n;
        return s;
    }
};

} // namespace mvmr
