#pragma once

#include "mvmr/causal_graph.hpp"
#include "mvmr/summary_stats.hpp"

#include <string>
#include <vector>

namespace mvmr {

/// Identification problem read off a parameterized diagram: implied summary
/// statistics on the correlation scale plus the true standardized effects.
struct PopulationProblem {
    std::vector<std::string> instruments, exposures;
    std::string outcome;
    SummaryStatistics stats;
    Vector truth;
    InstrumentalSetVerdict verdict;
};

inline PopulationProblem population_problem(const DiagramSpec& spec, const std::vector<std::string>& instruments,
                                            const std::vector<std::string>& exposures, const std::string& outcome,
                                            double n = 0.0) {
    const auto& g = spec.diagram;
    PopulationProblem p{instruments, exposures, outcome, {}, {}, {}};
    std::vector<int> ins, exs;
    for (const auto& s : instruments) ins.push_back(g.index_of(s));
    for (const auto& s : exposures) exs.push_back(g.index_of(s));
    const int y = g.index_of(outcome);
    p.verdict = check_instrumental_set(g, instruments, exposures, outcome);

    const Matrix S = implied_covariance(spec.sem);
    auto sd = [&](int i) { return std::sqrt(S(i, i)); };
    const auto L = static_cast<Eigen::Index>(ins.size()), K = static_cast<Eigen::Index>(exs.size());
    auto& st = p.stats;
    st.sigma_EX.resize(L, K);
    st.sigma_EY.resize(L);
    st.sigma_EE.resize(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
        const int a = ins[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < K; ++k) {
            const int x = exs[static_cast<std::size_t>(k)];
            st.sigma_EX(i, k) = S(a, x) / (sd(a) * sd(x));
        }
        st.sigma_EY(i) = S(a, y) / (sd(a) * sd(y));
        for (Eigen::Index j = 0; j < L; ++j) {
            const int b = ins[static_cast<std::size_t>(j)];
            st.sigma_EE(i, j) = i == j ? 1.0 : S(a, b) / (sd(a) * sd(b));
        }
    }
    st.n_exposure = st.n_outcome = n;
    p.truth.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const int x = exs[static_cast<std::size_t>(k)];
        p.truth(k) = spec.sem.coefficients(y, x) * sd(x) / sd(y);
    }
    return p;
}

} // namespace mvmr
