#pragma once

#include "mvmr/dataset.hpp"
#include "mvmr/error.hpp"
#include "mvmr/estimators.hpp"
#include "mvmr/genotypes.hpp"
#include "mvmr/inference.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/rng.hpp"
#include "mvmr/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace mvmr {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ReplicateRow {
    std::size_t point = 0;
    int replicate = 0;
    std::string estimator;
    std::string model;
    std::string exposure;
    double estimate = kNaN;
    double truth = kNaN;
    double se = kNaN;
    double se_individual = kNaN;
    double p_value = kNaN;
    double conditional_f = kNaN;
    std::string verdict;
    std::string status = "ok";
};

struct SummaryCell {
    std::size_t point = 0;
    std::string estimator, model, exposure;
    double truth = kNaN;
    int count = 0;
    int failures = 0;
    double mean = kNaN, bias = kNaN, sd = kNaN, variance = kNaN;
    double mean_se = kNaN, mean_se_individual = kNaN;
    double median_conditional_f = kNaN;
    double rejection_rate = kNaN;
};

struct SimulationResult {
    std::string scenario;
    std::uint64_t seed = 0;
    int replicates = 0;
    double alpha = 0.05;
    std::vector<DesignPoint> points;
    std::vector<std::size_t> instrument_counts; // per point, once known
    std::vector<ReplicateRow> rows;
    std::vector<SummaryCell> summary;
    long units = 0;    // (replicate, estimator, model) estimation attempts
    long failures = 0; // attempts that raised an error
    long moment_checks = 0;
    long moment_check_failures = 0;

    double failure_rate() const { return units ? static_cast<double>(failures) / static_cast<double>(units) : 0.0; }

    const SummaryCell* find(std::size_t point, const std::string& estimator, const std::string& model,
                            const std::string& exposure) const {
        for (const auto& c : summary)
            if (c.point == point && c.estimator == estimator && c.model == model && c.exposure == exposure) return &c;
        return nullptr;
    }
};

namespace detail {

struct ReplicateOutput {
    std::vector<ReplicateRow> rows;
    long units = 0;
    long failures = 0;
    int moment_checks = 0;
    int moment_failures = 0;
    std::size_t instruments = 0;
    Vector truth;
};

inline Matrix select_square(const Matrix& m, const std::vector<Eigen::Index>& idx) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    return out;
}

inline Matrix select_cols(const Matrix& m, const std::vector<Eigen::Index>& idx) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
    return out;
}

/// Volume of the causal rows of A.
inline double causal_volume(const Matrix& a) {
    const double det = (a.transpose() * a).determinant();
    return det > 0.0 ? std::sqrt(det) : 0.0;
}

inline Matrix draw_instrument_effects(const Scenario& s, const InstrumentStrength& st, const std::vector<Eigen::Index>& causal,
                                      Eigen::Index snps, Rng& rng) {
    const auto K = s.exposure_count();
    std::uniform_real_distribution<double> u(st.lo, st.hi);
    Matrix ac(static_cast<Eigen::Index>(causal.size()), K);
    constexpr int kMaxAttempts = 1000000;
    for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxAttempts)
            fail(ErrorKind::Feasibility, "no instrument effect matrix in [" + format_number(st.lo, 4) + ", " +
                                             format_number(st.hi, 4) + "] meets the determinant window");
        for (Eigen::Index i = 0; i < ac.rows(); ++i)
            for (Eigen::Index k = 0; k < K; ++k) ac(i, k) = u(rng);
        const double v = causal_volume(ac);
        if (v > st.det_min && v < st.det_max) break;
    }
    Matrix a = Matrix::Zero(snps, K);
    for (std::size_t i = 0; i < causal.size(); ++i) a.row(causal[i]) = ac.row(static_cast<Eigen::Index>(i));
    return a;
}

/// Sample MAFs and successive-pair correlations against the population model,
/// with a five-standard-error allowance.
inline bool moment_check(const Dataset& d, const std::vector<double>& mafs, const Matrix& ld) {
    const Matrix& e = d.data.e;
    const double n = static_cast<double>(e.rows());
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
        const double m = mafs[static_cast<std::size_t>(j)];
        if (std::abs(d.sample_mafs[static_cast<std::size_t>(j)] - m) > 5.0 * std::sqrt(m * (1 - m) / (2.0 * n))) return false;
    }
    for (Eigen::Index j = 0; j + 1 < e.cols(); ++j) {
        const double r = e.col(j).dot(e.col(j + 1)) / n;
        if (std::abs(r - ld(j, j + 1)) > 5.0 / std::sqrt(n)) return false;
    }
    return true;
}

struct PointCache {
    std::optional<LatentGenotypeModel> latent; // when the LD does not vary by replicate
};

struct Model {
    std::string name;
    std::vector<Eigen::Index> exposures;
};

class ReplicateRunner {
public:
    ReplicateRunner(const Scenario& s, std::uint64_t seed, const std::vector<DesignPoint>& pts)
        : s_(s), seed_(seed), pts_(pts) {
        caches_.resize(pts.size());
        for (std::size_t p = 0; p < pts.size(); ++p) {
            if (!s.latent || s.correlation_range) continue;
            const bool per_replicate = (pts[p].wishart_df && *pts[p].wishart_df > 0.0) || s.perturb_two_sample_ld;
            if (per_replicate && s.design != Design::TwoSample) continue;
            caches_[p].latent = calibrate_latent(s.mafs, reference_ld(successive(pts[p], nullptr)));
        }
    }

    ReplicateOutput run(std::size_t p, int rep) const {
        ReplicateOutput out;
        const DesignPoint& pt = pts_[p];
        Rng design = make_stream(seed_, {pts_[p].stream, static_cast<std::uint64_t>(rep), 2});
        if (s_.design == Design::Pc1) return run_pc1(p, rep, design);

        const auto models = model_list();
        try {
            simulate(p, rep, pt, design, models, out);
        } catch (const Error& e) {
            if (out.truth.size() == 0) out.truth = s_.effects;
            out.rows.clear();
            out.units = out.failures = 0;
            for (const auto& m : models)
                for (Method meth : s_.estimators) {
                    ++out.units;
                    ++out.failures;
                    for (auto k : m.exposures) {
                        ReplicateRow row = base_row(p, rep, meth, m, k, out.truth);
                        row.status = to_string(e.kind());
                        out.rows.push_back(row);
                    }
                }
        }
        return out;
    }

private:
    std::vector<double> successive(const DesignPoint& pt, Rng* rng) const {
        std::vector<double> r = s_.successive_r;
        if (pt.correlation) {
            std::fill(r.begin(), r.end(), *pt.correlation);
        } else if (s_.correlation_range) {
            if (!rng) return r;
            std::uniform_real_distribution<double> u((*s_.correlation_range)[0], (*s_.correlation_range)[1]);
            for (auto& v : r) v = u(*rng);
        }
        return r;
    }

    Matrix reference_ld(const std::vector<double>& succ) const { return s_.ld ? *s_.ld : markov_ld(succ); }

    std::vector<Model> model_list() const {
        std::vector<Eigen::Index> all(static_cast<std::size_t>(s_.exposure_count()));
        std::iota(all.begin(), all.end(), Eigen::Index{0});
        std::vector<Model> out{{s_.design == Design::Pleiotropy ? "full" : "mvmr", all}};
        if (s_.design == Design::Pleiotropy) {
            Model mis{"misspecified", {}};
            for (auto k : all)
                if (std::find(s_.hidden_exposures.begin(), s_.hidden_exposures.end(), static_cast<int>(k)) ==
                    s_.hidden_exposures.end())
                    mis.exposures.push_back(k);
            out.push_back(mis);
        }
        if (s_.univariate_models)
            for (auto k : all) out.push_back({"univariate", {k}});
        return out;
    }

    ReplicateRow base_row(std::size_t p, int rep, Method m, const Model& model, Eigen::Index k,
                          const Vector& truth) const {
        ReplicateRow row;
        row.point = p;
        row.replicate = rep;
        row.estimator = to_string(m);
        row.model = model.name;
        row.exposure = s_.exposure_name(k);
        row.truth = k < truth.size() ? truth(k) : kNaN;
        return row;
    }

    void simulate(std::size_t p, int rep, const DesignPoint& pt, Rng& design, const std::vector<Model>& models,
                  ReplicateOutput& out) const {
        const auto snps = static_cast<Eigen::Index>(s_.snp_count());
        const std::vector<double> succ = successive(pt, &design);
        const Matrix ref = reference_ld(succ);
        std::vector<Eigen::Index> kept(static_cast<std::size_t>(snps));
        std::iota(kept.begin(), kept.end(), Eigen::Index{0});
        if (pt.ld_threshold) kept = prune_by_ld(ref, *pt.ld_threshold);
        out.instruments = kept.size();

        std::vector<Eigen::Index> causal;
        if (!s_.causal_snps.empty()) {
            for (int c : s_.causal_snps) causal.push_back(c);
        } else if (s_.causal_count > 0) {
            if (static_cast<std::size_t>(s_.causal_count) > kept.size())
                fail(ErrorKind::Underdetermined, "fewer retained instruments than causal variants");
            std::vector<Eigen::Index> pool = kept;
            std::shuffle(pool.begin(), pool.end(), design);
            causal.assign(pool.begin(), pool.begin() + s_.causal_count);
            std::sort(causal.begin(), causal.end());
        } else {
            causal.resize(static_cast<std::size_t>(snps));
            std::iota(causal.begin(), causal.end(), Eigen::Index{0});
        }
        const InstrumentStrength& st = pt.strength ? s_.strengths[*pt.strength] : s_.strength;
        const Matrix A = s_.fixed_A ? *s_.fixed_A : draw_instrument_effects(s_, st, causal, snps, design);

        Vector effects = s_.effects;
        if (s_.design == Design::Pleiotropy && pt.hidden_effect)
            for (int h : s_.hidden_exposures) effects(h) = *pt.hidden_effect;
        if (pt.arm && *pt.arm == "null") effects(s_.tested_exposure) = 0.0;
        out.truth = effects;

        auto source_for = [&](const Matrix& ld) -> GenotypeSource {
            return calibrate_latent(s_.mafs, ld);
        };
        GenotypeSource source = GenotypeModel{s_.mafs, succ};
        if (s_.latent) {
            if (caches_[p].latent) source = *caches_[p].latent;
            else source = source_for(ref);
        }
        PopulationModel pm{source, A, effects, s_.scale, s_.sigma_x, s_.sigma_y, s_.confounding};
        const Matrix ref_kept = select_square(ref, kept);

        if (s_.design == Design::TwoSample) {
            const auto [ne, no] = *pt.sample_sizes;
            PopulationModel pe = pm, po = pm;
            if (s_.perturb_two_sample_ld) {
                const PopulationTruth t = population_truth(pm);
                pe.scale = po.scale = EffectScale::Raw;
                pe.effects = po.effects = t.c_raw;
                pe.genotypes = source_for(perturb_ld(ref, static_cast<double>(ne), design));
                po.genotypes = source_for(perturb_ld(ref, static_cast<double>(no), design));
            }
            Rng re = make_stream(seed_, {pts_[p].stream, static_cast<std::uint64_t>(rep), 0});
            const Dataset de = generate_dataset(pe, ne, re);
            check_moments(rep, de, pe, out);
            SummaryStatistics stats;
            const LdChoice choice = parse_ld_choice(s_.ld_choice);
            if (pt.samples && *pt.samples == "one") {
                stats = de.stats.select_instruments(kept);
                if (choice == LdChoice::Reference) stats.sigma_EE = ref_kept;
            } else {
                Rng ro = make_stream(seed_, {pts_[p].stream, static_cast<std::uint64_t>(rep), 1});
                const Dataset d_o = generate_dataset(po, no, ro);
                stats = two_sample_stats(de, d_o, choice, ref).select_instruments(kept);
                if (choice == LdChoice::Reference) stats.sigma_EE = ref_kept;
            }
            estimate_models(p, rep, stats, nullptr, models, out);
            return;
        }

        if (pt.wishart_df && *pt.wishart_df > 0.0) pm.genotypes = source_for(perturb_ld(ref, *pt.wishart_df, design));
        Rng rd = make_stream(seed_, {pts_[p].stream, static_cast<std::uint64_t>(rep), 0});
        const Dataset d = generate_dataset(pm, pt.n, rd);
        check_moments(rep, d, pm, out);
        SummaryStatistics stats = d.stats.select_instruments(kept);
        if (s_.ld_choice == "reference") stats.sigma_EE = ref_kept;
        IndividualData ind;
        const bool need_ind = s_.individual_se || s_.conditional_f;
        if (need_ind) {
            ind.e = select_cols(d.data.e, kept);
            ind.x = d.data.x;
            ind.y = d.data.y;
        }
        estimate_models(p, rep, stats, need_ind ? &ind : nullptr, models, out);
    }

    void check_moments(int rep, const Dataset& d, const PopulationModel& pm, ReplicateOutput& out) const {
        if (s_.moment_check_every <= 0 || rep % s_.moment_check_every != 0) return;
        ++out.moment_checks;
        if (!moment_check(d, s_.mafs, source_ld(pm.genotypes))) ++out.moment_failures;
    }

    void estimate_models(std::size_t p, int rep, const SummaryStatistics& stats, const IndividualData* ind,
                         const std::vector<Model>& models, ReplicateOutput& out) const {
        for (const auto& model : models) {
            const SummaryStatistics ms = stats.select_exposures(model.exposures);
            std::optional<IndividualData> mind;
            if (ind) {
                mind = *ind;
                mind->x = select_cols(ind->x, model.exposures);
            }
            std::optional<Vector> cf;
            std::string cf_status;
            if (mind && s_.conditional_f) {
                try {
                    cf = conditional_f(*mind);
                } catch (const Error& e) {
                    cf_status = to_string(e.kind());
                }
            }
            for (Method meth : s_.estimators) {
                ++out.units;
                std::vector<ReplicateRow> rows;
                for (auto k : model.exposures) rows.push_back(base_row(p, rep, meth, model, k, out.truth));
                try {
                    EstimateOptions opt;
                    opt.method = meth;
                    opt.alpha = s_.twmr_alpha;
                    EstimateResult r = estimate(ms, opt, nullptr);
                    std::optional<Vector> se_ind;
                    if (mind && s_.individual_se) se_ind = standard_errors(r, ms, &*mind).individual;
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                        const auto k = static_cast<Eigen::Index>(i);
                        auto& row = rows[i];
                        row.estimate = r.effects(k);
                        row.se = r.standard_errors(k);
                        row.p_value = r.p_values(k);
                        if (se_ind) row.se_individual = (*se_ind)(k);
                        if (cf) row.conditional_f = (*cf)(k);
                        row.verdict = to_string(r.diagnostics.verdict);
                        if (!cf_status.empty()) row.status = "ok;conditional_f=" + cf_status;
                    }
                } catch (const Error& e) {
                    ++out.failures;
                    for (auto& row : rows) row.status = to_string(e.kind());
                }
                for (auto& row : rows) out.rows.push_back(std::move(row));
            }
        }
    }

    ReplicateOutput run_pc1(std::size_t p, int rep, Rng& design) const {
        ReplicateOutput out;
        const DesignPoint& pt = pts_[p];
        const std::vector<double> succ = successive(pt, &design);
        ReplicateRow row;
        row.point = p;
        row.replicate = rep;
        row.estimator = "pc1";
        row.model = "empirical";
        row.exposure = "PC1";
        out.units = 1;
        try {
            if (succ.size() != 1) fail(ErrorKind::Argument, "the PC1 design needs exactly two SNPs");
            row.truth = pc1_explained_variance(succ[0]);
            Rng rd = make_stream(seed_, {pts_[p].stream, static_cast<std::uint64_t>(rep), 0});
            const Matrix g = sample_genotypes(GenotypeModel{s_.mafs, succ}, pt.n, rd);
            row.estimate = empirical_pc1_share(g);
        } catch (const Error& e) {
            row.status = to_string(e.kind());
            out.failures = 1;
        }
        out.instruments = s_.snp_count();
        out.rows.push_back(row);
        return out;
    }

    const Scenario& s_;
    std::uint64_t seed_;
    const std::vector<DesignPoint>& pts_;
    std::vector<PointCache> caches_;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return kNaN;
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

inline bool row_ok(const ReplicateRow& r) { return r.status.rfind("ok", 0) == 0 && std::isfinite(r.estimate); }

inline std::vector<SummaryCell> summarize(const std::vector<ReplicateRow>& rows, double alpha) {
    using Key = std::tuple<std::size_t, std::string, std::string, std::string>;
    std::map<Key, std::size_t> index;
    std::vector<SummaryCell> cells;
    std::vector<std::vector<const ReplicateRow*>> members;
    for (const auto& r : rows) {
        const Key key{r.point, r.estimator, r.model, r.exposure};
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, cells.size()).first;
            SummaryCell c;
            c.point = r.point;
            c.estimator = r.estimator;
            c.model = r.model;
            c.exposure = r.exposure;
            cells.push_back(c);
            members.emplace_back();
        }
        members[it->second].push_back(&r);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        auto& c = cells[i];
        std::vector<double> est, se, sei, cf, truth;
        int reject = 0;
        for (const auto* r : members[i]) {
            if (!row_ok(*r)) {
                ++c.failures;
                continue;
            }
            est.push_back(r->estimate);
            truth.push_back(r->truth);
            if (std::isfinite(r->se)) se.push_back(r->se);
            if (std::isfinite(r->se_individual)) sei.push_back(r->se_individual);
            if (std::isfinite(r->conditional_f)) cf.push_back(r->conditional_f);
            if (r->p_value < alpha) ++reject;
        }
        c.count = static_cast<int>(est.size());
        if (!members[i].empty()) c.truth = members[i].front()->truth;
        if (est.empty()) continue;
        const double n = static_cast<double>(est.size());
        auto mean = [](const std::vector<double>& v) {
            return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        };
        c.mean = mean(est);
        c.truth = mean(truth);
        c.bias = c.mean - c.truth;
        double ss = 0.0;
        for (double v : est) ss += (v - c.mean) * (v - c.mean);
        c.variance = est.size() > 1 ? ss / (n - 1.0) : 0.0;
        c.sd = std::sqrt(c.variance);
        c.mean_se = mean(se);
        c.mean_se_individual = mean(sei);
        c.median_conditional_f = median(cf);
        c.rejection_rate = reject / n;
    }
    return cells;
}

} // namespace detail

/// Runs every replicate of every design point. Each replicate draws from its
/// own stream keyed by (point, replicate), so any thread count gives the same result.
inline SimulationResult run_replicates(const Scenario& s, std::uint64_t seed, int threads = 1) {
    if (s.replicates < 1) fail(ErrorKind::Argument, "replicates must be at least 1");
    SimulationResult res;
    res.scenario = s.name;
    res.seed = seed;
    res.replicates = s.replicates;
    res.alpha = s.alpha;
    res.points = design_points(s);
    const detail::ReplicateRunner runner(s, seed, res.points);
    const std::size_t total = res.points.size() * static_cast<std::size_t>(s.replicates);
    std::vector<detail::ReplicateOutput> outputs(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < total;)
            outputs[t] = runner.run(t / static_cast<std::size_t>(s.replicates),
                                    static_cast<int>(t % static_cast<std::size_t>(s.replicates)));
    };
    const auto n_threads = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(total)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    res.instrument_counts.assign(res.points.size(), 0);
    for (std::size_t t = 0; t < total; ++t) {
        auto& o = outputs[t];
        const std::size_t p = t / static_cast<std::size_t>(s.replicates);
        if (res.instrument_counts[p] == 0) res.instrument_counts[p] = o.instruments;
        res.units += o.units;
        res.failures += o.failures;
        res.moment_checks += o.moment_checks;
        res.moment_check_failures += o.moment_failures;
        for (auto& r : o.rows) res.rows.push_back(std::move(r));
    }
    res.summary = detail::summarize(res.rows, s.alpha);
    return res;
}

struct Type1Power {
    std::size_t null_point = 0, alternative_point = 0;
    std::string estimator, exposure;
    double type1 = kNaN, power = kNaN;
};

/// Pairs each null-arm point with its alternative-arm twin.
inline std::vector<Type1Power> type1_power(const SimulationResult& r, const Scenario& s) {
    std::vector<Type1Power> out;
    if (s.design != Design::Type1Power) return out;
    const std::size_t half = r.points.size() / 2;
    const std::string tested = s.exposure_name(s.tested_exposure);
    for (std::size_t p = 0; p < half; ++p)
        for (Method m : s.estimators) {
            const SummaryCell* nul = r.find(p, to_string(m), "mvmr", tested);
            const SummaryCell* alt = r.find(p + half, to_string(m), "mvmr", tested);
            if (!nul || !alt) continue;
            out.push_back({p, p + half, to_string(m), tested, nul->rejection_rate, alt->rejection_rate});
        }
    return out;
}

namespace detail {

inline std::string csv_number(double v) { return std::isnan(v) ? std::string() : format_number(v); }

template <class T>
std::string opt_cell(const std::optional<T>& v) {
    if (!v) return {};
    if constexpr (std::is_same_v<T, std::string>) return *v;
    else return format_number(static_cast<double>(*v));
}

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

} // namespace detail

inline const char* kReplicateCsvHeader =
    "scenario,point,n,n_exposure,n_outcome,correlation,strength,ld_threshold,instruments,hidden_effect,wishart_df,"
    "samples,arm,replicate,estimator,model,exposure,estimate,truth,se,se_individual,p_value,conditional_f,verdict,"
    "status";

/// One row per replicate, estimator, model and exposure.
inline void write_replicates_csv(const SimulationResult& r, const Scenario& s, std::ostream& os) {
    using detail::csv_number;
    using detail::opt_cell;
    os << kReplicateCsvHeader << '\n';
    std::vector<std::string> prefix;
    for (std::size_t p = 0; p < r.points.size(); ++p) {
        const auto& pt = r.points[p];
        std::string x = s.name + ',' + std::to_string(p) + ',';
        x += (pt.n ? std::to_string(pt.n) : std::string()) + ',';
        x += (pt.sample_sizes ? std::to_string((*pt.sample_sizes)[0]) : std::string()) + ',';
        x += (pt.sample_sizes ? std::to_string((*pt.sample_sizes)[1]) : std::string()) + ',';
        x += opt_cell(pt.correlation) + ',';
        x += (pt.strength ? s.strengths[*pt.strength].label : std::string()) + ',';
        x += opt_cell(pt.ld_threshold) + ',';
        x += std::to_string(r.instrument_counts[p]) + ',';
        x += opt_cell(pt.hidden_effect) + ',';
        x += opt_cell(pt.wishart_df) + ',';
        x += opt_cell(pt.samples) + ',';
        x += opt_cell(pt.arm) + ',';
        prefix.push_back(std::move(x));
    }
    for (const auto& row : r.rows) {
        os << prefix[row.point] << row.replicate << ',' << row.estimator << ',' << row.model << ',' << row.exposure << ','
           << csv_number(row.estimate) << ',' << csv_number(row.truth) << ',' << csv_number(row.se) << ','
           << csv_number(row.se_individual) << ',' << csv_number(row.p_value) << ',' << csv_number(row.conditional_f)
           << ',' << row.verdict << ',' << row.status << '\n';
    }
}

inline json summary_json(const SimulationResult& r, const Scenario& s) {
    using detail::number_json;
    using detail::opt_json;
    json points = json::array();
    for (std::size_t p = 0; p < r.points.size(); ++p) {
        const auto& pt = r.points[p];
        json jp;
        jp["point"] = p;
        jp["n"] = pt.n ? json(pt.n) : json(nullptr);
        jp["n_exposure"] = pt.sample_sizes ? json((*pt.sample_sizes)[0]) : json(nullptr);
        jp["n_outcome"] = pt.sample_sizes ? json((*pt.sample_sizes)[1]) : json(nullptr);
        jp["correlation"] = opt_json(pt.correlation);
        jp["strength"] = pt.strength ? json(s.strengths[*pt.strength].label) : json(nullptr);
        jp["ld_threshold"] = opt_json(pt.ld_threshold);
        jp["instruments"] = r.instrument_counts[p];
        jp["hidden_effect"] = opt_json(pt.hidden_effect);
        jp["wishart_df"] = opt_json(pt.wishart_df);
        jp["samples"] = pt.samples ? json(*pt.samples) : json(nullptr);
        jp["arm"] = pt.arm ? json(*pt.arm) : json(nullptr);
        json cells = json::array();
        for (const auto& c : r.summary) {
            if (c.point != p) continue;
            cells.push_back({{"estimator", c.estimator},
                             {"model", c.model},
                             {"exposure", c.exposure},
                             {"truth", number_json(c.truth)},
                             {"count", c.count},
                             {"failures", c.failures},
                             {"mean", number_json(c.mean)},
                             {"bias", number_json(c.bias)},
                             {"sd", number_json(c.sd)},
                             {"variance", number_json(c.variance)},
                             {"mean_se", number_json(c.mean_se)},
                             {"mean_se_individual", number_json(c.mean_se_individual)},
                             {"median_conditional_f", number_json(c.median_conditional_f)},
                             {"rejection_rate", number_json(c.rejection_rate)}});
        }
        jp["cells"] = std::move(cells);
        points.push_back(std::move(jp));
    }
    json out{{"scenario", r.scenario},
             {"design", to_string(s.design)},
             {"seed", r.seed},
             {"replicates", r.replicates},
             {"alpha", r.alpha},
             {"units", r.units},
             {"failures", r.failures},
             {"failure_rate", r.failure_rate()},
             {"moment_checks", r.moment_checks},
             {"moment_check_failures", r.moment_check_failures},
             {"points", std::move(points)}};
    if (s.design == Design::Type1Power) {
        json tp = json::array();
        for (const auto& t : type1_power(r, s))
            tp.push_back({{"null_point", t.null_point},
                          {"alternative_point", t.alternative_point},
                          {"estimator", t.estimator},
                          {"exposure", t.exposure},
                          {"type1", number_json(t.type1)},
                          {"power", number_json(t.power)}});
        out["type1_power"] = std::move(tp);
    }
    return out;
}

} // namespace mvmr
