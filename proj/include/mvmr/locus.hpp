#pragma once

#include "mvmr/error.hpp"
#include "mvmr/estimators.hpp"
#include "mvmr/inference.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/locus_io.hpp"
#include "mvmr/summary_stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

namespace mvmr {

using json = nlohmann::json;

struct LocusParams {
    double radius_bp = 5e5;
    double gwas_p = kGwasSignificance;
    double eqtl_fdr = kEqtlFdrThreshold;
    double prune_r2 = 0.95;
    double perfect_r2 = 0.99;  // pruned against the lead before near-duplicate pruning
    double min_abs_r = 0.01;   // "non-zero LD" with the lead
    std::map<std::string, double> prune_overrides; // lead SNP -> prune r²

    void validate() const {
        if (!(radius_bp > 0.0)) fail(ErrorKind::Argument, "radius must be positive");
        if (!(gwas_p > 0.0 && gwas_p <= 1.0)) fail(ErrorKind::Argument, "GWAS threshold must lie in (0, 1]");
        if (!(eqtl_fdr > 0.0 && eqtl_fdr <= 1.0)) fail(ErrorKind::Argument, "eQTL FDR threshold must lie in (0, 1]");
        if (!(min_abs_r >= 0.0 && min_abs_r < 1.0)) fail(ErrorKind::Argument, "minimum |r| must lie in [0, 1)");
        if (!(perfect_r2 > 0.0 && perfect_r2 <= 1.0)) fail(ErrorKind::Argument, "perfect-LD r² must lie in (0, 1]");
        auto check = [](double v) {
            if (!(v > 0.0 && v <= 1.0)) fail(ErrorKind::Argument, "prune r² must lie in (0, 1]");
        };
        check(prune_r2);
        for (const auto& [snp, v] : prune_overrides) check(v);
    }
};

struct PrunedSnp {
    std::string snp;
    std::string reason; // "perfect-ld-with-lead" or "near-duplicate"
    std::string kept;
    double r2 = 0.0;
};

struct SnpNote {
    std::string snp;
    std::string reason;
};

struct TissueExposures {
    std::string tissue;
    std::vector<std::string> genes;
    std::vector<std::string> instruments;
    bool identifiable = false;
};

struct LocusDefinition {
    std::string lead;
    std::string chrom;
    long lead_pos = 0;
    double lead_p = 1.0;
    double prune_r2 = 0.95;
    std::vector<std::string> members;     // lead included, position order
    std::vector<std::string> instruments; // after pruning, position order
    std::vector<PrunedSnp> pruned;
    std::vector<TissueExposures> tissues; // by tissue name
    std::vector<std::string> warnings;
    bool closed = false;

    const TissueExposures* find_tissue(const std::string& t) const {
        for (const auto& x : tissues)
            if (x.tissue == t) return &x;
        return nullptr;
    }
};

struct LocusBuild {
    std::vector<LocusDefinition> loci; // by (chromosome, lead position)
    std::vector<SnpNote> dropped;
    std::vector<std::string> warnings;
};

/// Lookups over loaded tables. Holds a reference; the tables must outlive it.
class TableIndex {
public:
    explicit TableIndex(const SummaryTables& t) : t_(t) {
        for (std::size_t i = 0; i < t.gwas.size(); ++i) gwas_[t.gwas[i].snp] = i;
        for (std::size_t i = 0; i < t.eqtl.size(); ++i) {
            const auto& r = t.eqtl[i];
            eqtl_[{r.snp, r.gene, r.tissue}] = i;
            by_snp_[r.snp].push_back(i);
        }
    }

    const SummaryTables& tables() const { return t_; }

    const GwasRecord* gwas(const std::string& snp) const {
        const auto it = gwas_.find(snp);
        return it == gwas_.end() ? nullptr : &t_.gwas[it->second];
    }

    const EqtlRecord* eqtl(const std::string& snp, const std::string& gene, const std::string& tissue) const {
        const auto it = eqtl_.find({snp, gene, tissue});
        return it == eqtl_.end() ? nullptr : &t_.eqtl[it->second];
    }

    std::vector<const EqtlRecord*> records(const std::string& snp) const {
        std::vector<const EqtlRecord*> out;
        const auto it = by_snp_.find(snp);
        if (it != by_snp_.end())
            for (auto i : it->second) out.push_back(&t_.eqtl[i]);
        return out;
    }

private:
    const SummaryTables& t_;
    std::map<std::string, std::size_t> gwas_;
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> eqtl_;
    std::map<std::string, std::vector<std::size_t>> by_snp_;
};

/// Brute-force check: no gene outside a tissue's exposure set has a
/// significant eQTL at one of that tissue's instruments.
inline bool locus_closed(const LocusDefinition& locus, const SummaryTables& t, double fdr = kEqtlFdrThreshold) {
    for (const auto& r : t.eqtl) {
        if (!r.significant(fdr)) continue;
        const TissueExposures* te = locus.find_tissue(r.tissue);
        const bool instrument = std::find(locus.instruments.begin(), locus.instruments.end(), r.snp) != locus.instruments.end();
        if (!instrument) continue;
        if (!te) return false;
        const bool in_t = std::find(te->instruments.begin(), te->instruments.end(), r.snp) != te->instruments.end();
        const bool gene = std::find(te->genes.begin(), te->genes.end(), r.gene) != te->genes.end();
        if (!in_t || !gene) return false;
    }
    return true;
}

namespace detail {

struct SnpInfo {
    std::string snp;
    std::string chrom;
    long pos = 0;
    double p = 1.0;
};

inline bool snp_order(const SnpInfo& a, const SnpInfo& b) {
    if (a.p != b.p) return a.p < b.p;
    if (a.chrom != b.chrom) return chrom_less(a.chrom, b.chrom);
    if (a.pos != b.pos) return a.pos < b.pos;
    return a.snp < b.snp;
}

inline void assign_tissues(LocusDefinition& locus, const TableIndex& idx, double fdr) {
    std::map<std::string, std::pair<std::set<std::string>, std::set<std::string>>> by_tissue;
    for (const auto& snp : locus.instruments)
        for (const auto* r : idx.records(snp))
            if (r->significant(fdr)) {
                by_tissue[r->tissue].first.insert(r->gene);
                by_tissue[r->tissue].second.insert(snp);
            }
    for (const auto& [tissue, gs] : by_tissue) {
        TissueExposures te;
        te.tissue = tissue;
        te.genes.assign(gs.first.begin(), gs.first.end());
        for (const auto& snp : locus.instruments)
            if (gs.second.count(snp)) te.instruments.push_back(snp);
        te.identifiable = te.instruments.size() >= te.genes.size();
        locus.tissues.push_back(std::move(te));
    }
}

} // namespace detail

/// Greedy locus construction. Leads are GWAS-significant eQTL SNPs taken in
/// order of GWAS p (ties by chromosome, position); each lead collects every
/// unassigned eQTL SNP within the radius and in LD with it.
inline LocusBuild build_loci(const TableIndex& idx, const LocusParams& params = {}) {
    params.validate();
    const SummaryTables& t = idx.tables();
    LocusBuild out;
    std::map<std::string, detail::SnpInfo> pool;
    std::set<std::string> seen;
    for (const auto& r : t.eqtl) {
        if (!r.significant(params.eqtl_fdr) || !seen.insert(r.snp).second) continue;
        const GwasRecord* g = idx.gwas(r.snp);
        if (!g) {
            out.dropped.push_back({r.snp, "no GWAS record"});
            continue;
        }
        if (g->chrom != r.chrom || g->pos != r.pos)
            out.warnings.push_back("SNP " + r.snp + ": eQTL and GWAS positions differ; GWAS position used");
        if (!t.ld.contains(r.snp)) {
            out.dropped.push_back({r.snp, "absent from LD matrix"});
            continue;
        }
        pool[r.snp] = {r.snp, g->chrom, g->pos, g->pval};
    }
    std::vector<detail::SnpInfo> order;
    for (const auto& [snp, info] : pool) order.push_back(info);
    std::sort(order.begin(), order.end(), detail::snp_order);

    std::set<std::string> assigned;
    for (const auto& lead : order) {
        if (!(lead.p < params.gwas_p)) break;
        if (assigned.count(lead.snp)) continue;
        LocusDefinition locus;
        locus.lead = lead.snp;
        locus.chrom = lead.chrom;
        locus.lead_pos = lead.pos;
        locus.lead_p = lead.p;
        const auto ov = params.prune_overrides.find(lead.snp);
        locus.prune_r2 = ov == params.prune_overrides.end() ? params.prune_r2 : ov->second;

        std::vector<detail::SnpInfo> members;
        for (const auto& s : order) {
            if (assigned.count(s.snp) || s.chrom != lead.chrom) continue;
            if (std::abs(static_cast<double>(s.pos - lead.pos)) > params.radius_bp) continue;
            if (s.snp != lead.snp && !(std::abs(t.ld(lead.snp, s.snp)) > params.min_abs_r)) continue;
            members.push_back(s);
        }
        for (const auto& d : out.dropped) {
            const GwasRecord* g = idx.gwas(d.snp);
            if (g && g->chrom == lead.chrom && std::abs(static_cast<double>(g->pos - lead.pos)) <= params.radius_bp)
                locus.warnings.push_back("SNP " + d.snp + " within the radius dropped: " + d.reason);
        }
        for (const auto& m : members) assigned.insert(m.snp);

        // Lead first, then by p-value and position.
        std::stable_partition(members.begin(), members.end(), [&](const auto& m) { return m.snp == lead.snp; });
        std::vector<detail::SnpInfo> kept;
        for (const auto& m : members) {
            if (m.snp != lead.snp) {
                const double r = t.ld(lead.snp, m.snp);
                if (r * r >= params.perfect_r2) {
                    locus.pruned.push_back({m.snp, "perfect-ld-with-lead", lead.snp, r * r});
                    continue;
                }
            }
            std::optional<std::pair<std::string, double>> dup;
            for (const auto& k : kept) {
                const double r = t.ld(k.snp, m.snp);
                if (r * r >= locus.prune_r2 && (!dup || r * r > dup->second)) dup = std::pair{k.snp, r * r};
            }
            if (dup) {
                locus.pruned.push_back({m.snp, "near-duplicate", dup->first, dup->second});
                continue;
            }
            kept.push_back(m);
        }
        auto by_pos = [](const auto& a, const auto& b) { return a.pos != b.pos ? a.pos < b.pos : a.snp < b.snp; };
        std::sort(members.begin(), members.end(), by_pos);
        std::sort(kept.begin(), kept.end(), by_pos);
        for (const auto& m : members) locus.members.push_back(m.snp);
        for (const auto& k : kept) locus.instruments.push_back(k.snp);
        detail::assign_tissues(locus, idx, params.eqtl_fdr);
        locus.closed = locus_closed(locus, t, params.eqtl_fdr);
        out.loci.push_back(std::move(locus));
    }
    std::sort(out.loci.begin(), out.loci.end(), [](const auto& a, const auto& b) {
        if (a.chrom != b.chrom) return chrom_less(a.chrom, b.chrom);
        return a.lead_pos < b.lead_pos;
    });
    return out;
}

struct AnalysisOptions {
    Method method = Method::LeastSquares;
    double alpha = kTwmrDefaultAlpha;
    double causal_threshold = 0.1;
    double bonferroni = kBonferroniThreshold;
    DiagnosticThresholds thresholds{0.05, 0.001, DeterminantMeasure::NormalizedGram};

    void validate() const {
        if (!(causal_threshold >= 0.0)) fail(ErrorKind::Argument, "causal threshold must be non-negative");
        if (!(bonferroni > 0.0 && bonferroni <= 1.0)) fail(ErrorKind::Argument, "Bonferroni threshold must lie in (0, 1]");
        if (!(thresholds.fail >= 0.0 && thresholds.fail <= thresholds.pass))
            fail(ErrorKind::Argument, "determinant thresholds need 0 <= fail <= pass");
    }
};

struct CausalGeneCall {
    std::string locus;
    std::string gene;
    std::string tissue;
    double effect = 0.0;
    double se = 0.0;
    double p = 1.0;
    bool causal = false;
    bool bonferroni = false;
};

inline void classify(CausalGeneCall& c, double threshold, double bonferroni) {
    c.causal = std::abs(c.effect) >= threshold;
    c.bonferroni = c.p < bonferroni;
}

struct LocusAnalysis {
    std::string locus;
    std::string chrom;
    long lead_pos = 0;
    std::string tissue; // tissue name, or "multi" for gene-tissue pairs
    std::vector<std::pair<std::string, std::string>> exposures; // (gene, tissue)
    std::vector<std::string> instruments;
    std::string status = "ok"; // ok, non-identifiable, numerical-failure
    std::string message;
    std::optional<Diagnostics> diagnostics;
    std::vector<CausalGeneCall> calls;
};

/// Summary statistics for gene-tissue exposures at the given instruments.
/// Missing eQTL records count as zero association.
inline SummaryStatistics locus_statistics(const TableIndex& idx, const std::vector<std::string>& instruments,
                                          const std::vector<std::pair<std::string, std::string>>& exposures) {
    const auto L = static_cast<Eigen::Index>(instruments.size());
    const auto K = static_cast<Eigen::Index>(exposures.size());
    SummaryStatistics s;
    s.sigma_EX = Matrix::Zero(L, K);
    s.sigma_EY.resize(L);
    s.sigma_EE.resize(L, L);
    double n = std::numeric_limits<double>::infinity();
    const LdMatrix& ld = idx.tables().ld;
    for (Eigen::Index i = 0; i < L; ++i) {
        const auto& snp = instruments[static_cast<std::size_t>(i)];
        const GwasRecord* g = idx.gwas(snp);
        if (!g) fail(ErrorKind::Lookup, "SNP " + snp + " has no GWAS record");
        s.sigma_EY(i) = g->standardized_effect();
        n = std::min(n, g->n);
        for (Eigen::Index k = 0; k < K; ++k) {
            const auto& [gene, tissue] = exposures[static_cast<std::size_t>(k)];
            if (const EqtlRecord* r = idx.eqtl(snp, gene, tissue)) s.sigma_EX(i, k) = r->beta;
        }
        for (Eigen::Index j = 0; j < L; ++j) s.sigma_EE(i, j) = ld(snp, instruments[static_cast<std::size_t>(j)]);
    }
    s.n_outcome = L ? n : 0.0;
    return s;
}

namespace detail {

inline LocusAnalysis analyze_exposures(const TableIndex& idx, const LocusDefinition& locus, const std::string& label,
                                       const std::vector<std::string>& instruments,
                                       const std::vector<std::pair<std::string, std::string>>& exposures,
                                       const AnalysisOptions& opt) {
    opt.validate();
    LocusAnalysis a;
    a.locus = locus.lead;
    a.chrom = locus.chrom;
    a.lead_pos = locus.lead_pos;
    a.tissue = label;
    a.exposures = exposures;
    a.instruments = instruments;
    const auto L = instruments.size(), K = exposures.size();
    if (K == 0) {
        a.status = "non-identifiable";
        a.message = "no exposures";
        return a;
    }
    if (L < K) {
        a.status = "non-identifiable";
        a.message = std::to_string(L) + " instruments for " + std::to_string(K) + " exposures";
        return a;
    }
    const SummaryStatistics s = locus_statistics(idx, instruments, exposures);
    a.diagnostics = identifiability_diagnostics(s, opt.thresholds);
    const Diagnostics& d = *a.diagnostics;
    const double measure = opt.thresholds.measure == DeterminantMeasure::Volume ? d.volume : d.normalized_gram_det;
    if (d.verdict == Verdict::Fail) {
        a.status = "non-identifiable";
        a.message = "rank(Sigma_EX) = " + std::to_string(d.rank_EX) + " of " + std::to_string(K) +
                    ", determinant measure " + format_number(measure, 6) + " below " +
                    format_number(opt.thresholds.fail, 6);
        return a;
    }
    if (d.verdict == Verdict::Warn)
        a.message = "determinant measure " + format_number(measure, 6) + " in the warning band";
    try {
        EstimateOptions eo;
        eo.method = opt.method;
        eo.alpha = opt.alpha;
        eo.bonferroni = opt.bonferroni;
        eo.thresholds = opt.thresholds;
        const EstimateResult r = estimate(s, eo);
        for (std::size_t k = 0; k < K; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            CausalGeneCall c;
            c.locus = locus.lead;
            c.gene = exposures[k].first;
            c.tissue = exposures[k].second;
            c.effect = r.effects(kk);
            c.se = r.standard_errors(kk);
            c.p = r.p_values(kk);
            classify(c, opt.causal_threshold, opt.bonferroni);
            a.calls.push_back(c);
        }
    } catch (const Error& e) {
        a.status = e.kind() == ErrorKind::Underdetermined ? "non-identifiable" : "numerical-failure";
        a.message = e.what();
        a.calls.clear();
    }
    return a;
}

} // namespace detail

/// MVMR in one tissue with every gene of that tissue's exposure set.
inline LocusAnalysis analyze_locus(const TableIndex& idx, const LocusDefinition& locus, const std::string& tissue,
                                   const AnalysisOptions& opt = {}) {
    const TissueExposures* te = locus.find_tissue(tissue);
    if (!te) fail(ErrorKind::Lookup, "locus " + locus.lead + " has no exposures in tissue " + tissue);
    std::vector<std::pair<std::string, std::string>> ex;
    for (const auto& g : te->genes) ex.emplace_back(g, tissue);
    return detail::analyze_exposures(idx, locus, tissue, te->instruments, ex, opt);
}

/// MVMR with (gene, tissue) pairs as exposures. An empty pair list means
/// every pair in the locus. Instruments are those of the tissues involved.
inline LocusAnalysis multi_tissue_analysis(const TableIndex& idx, const LocusDefinition& locus,
                                           std::vector<std::pair<std::string, std::string>> pairs,
                                           const AnalysisOptions& opt = {}) {
    if (pairs.empty())
        for (const auto& te : locus.tissues)
            for (const auto& g : te.genes) pairs.emplace_back(g, te.tissue);
    std::set<std::string> uses;
    for (const auto& [gene, tissue] : pairs) {
        const TissueExposures* te = locus.find_tissue(tissue);
        if (!te || std::find(te->genes.begin(), te->genes.end(), gene) == te->genes.end())
            fail(ErrorKind::Lookup, "(" + gene + ", " + tissue + ") is not an exposure of locus " + locus.lead);
        uses.insert(te->instruments.begin(), te->instruments.end());
    }
    std::vector<std::string> instruments;
    for (const auto& snp : locus.instruments)
        if (uses.count(snp)) instruments.push_back(snp);
    return detail::analyze_exposures(idx, locus, "multi", instruments, pairs, opt);
}

struct CallCount {
    std::string locus;
    std::string tissue;
    std::size_t total = 0;
    std::size_t causal = 0;
    std::size_t bonferroni = 0;
};

struct ClassificationReport {
    std::vector<CausalGeneCall> calls;
    std::vector<CallCount> counts; // by (locus, tissue) in first-seen order
};

inline ClassificationReport classify_causal(std::vector<CausalGeneCall> calls, double threshold = 0.1,
                                            double bonferroni = kBonferroniThreshold) {
    ClassificationReport out;
    std::map<std::pair<std::string, std::string>, std::size_t> at;
    for (auto& c : calls) {
        classify(c, threshold, bonferroni);
        const auto key = std::pair{c.locus, c.tissue};
        auto it = at.find(key);
        if (it == at.end()) {
            it = at.emplace(key, out.counts.size()).first;
            out.counts.push_back({c.locus, c.tissue});
        }
        CallCount& n = out.counts[it->second];
        ++n.total;
        n.causal += c.causal;
        n.bonferroni += c.bonferroni;
    }
    out.calls = std::move(calls);
    return out;
}

struct PipelineOptions {
    LocusParams locus;
    AnalysisOptions analysis;
    bool multi_tissue = true; // add a gene-tissue analysis for loci spanning several tissues
    int threads = 1;
};

struct PipelineReport {
    LocusBuild build;
    std::vector<std::vector<LocusAnalysis>> analyses; // parallel to build.loci
    std::vector<std::string> warnings;

    /// Calls from the per-tissue analyses, in report order.
    std::vector<CausalGeneCall> tissue_calls() const {
        std::vector<CausalGeneCall> out;
        for (const auto& per : analyses)
            for (const auto& a : per)
                if (a.tissue != "multi") out.insert(out.end(), a.calls.begin(), a.calls.end());
        return out;
    }
};

inline PipelineReport run_pipeline(const SummaryTables& tables, const PipelineOptions& opt = {}) {
    if (opt.threads < 1) fail(ErrorKind::Argument, "thread count must be at least 1");
    opt.analysis.validate();
    const TableIndex idx(tables);
    PipelineReport rep;
    rep.warnings = tables.warnings;
    rep.build = build_loci(idx, opt.locus);
    if (rep.build.loci.empty()) rep.warnings.push_back("no GWAS-significant eQTL SNPs; empty report");
    const auto& loci = rep.build.loci;
    rep.analyses.resize(loci.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::optional<Error>> errors(loci.size());
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < loci.size();) {
            try {
                auto& out = rep.analyses[i];
                for (const auto& te : loci[i].tissues) out.push_back(analyze_locus(idx, loci[i], te.tissue, opt.analysis));
                if (opt.multi_tissue && loci[i].tissues.size() > 1)
                    out.push_back(multi_tissue_analysis(idx, loci[i], {}, opt.analysis));
            } catch (const Error& e) {
                errors[i] = e;
            }
        }
    };
    const auto n = static_cast<std::size_t>(opt.threads);
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < std::min(n, loci.size()); ++k) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) throw *e;
    return rep;
}

namespace detail {

inline json diagnostics_json(const Diagnostics& d) {
    return json{{"gram_det", d.gram_det},     {"volume", d.volume},     {"normalized_gram_det", d.normalized_gram_det},
                {"ld_det", d.ld_det},         {"rank_EX", d.rank_EX},   {"rank_EE", d.rank_EE},
                {"cond_EX", d.cond_EX},       {"cond_EE", d.cond_EE},   {"verdict", to_string(d.verdict)}};
}

inline json call_json(const CausalGeneCall& c) {
    return json{{"gene", c.gene},     {"tissue", c.tissue}, {"effect", c.effect},         {"se", c.se},
                {"p_value", c.p},     {"causal", c.causal}, {"bonferroni", c.bonferroni}};
}

} // namespace detail

inline json pipeline_json(const PipelineReport& rep, const PipelineOptions& opt) {
    json j;
    j["effect_scale"] = "standardized";
    j["outcome_note"] =
        "effects are per standard deviation of expression; for a binary outcome read them on the log-odds scale";
    j["parameters"] = {{"radius_bp", opt.locus.radius_bp},
                       {"gwas_p", opt.locus.gwas_p},
                       {"eqtl_fdr", opt.locus.eqtl_fdr},
                       {"prune_r2", opt.locus.prune_r2},
                       {"perfect_r2", opt.locus.perfect_r2},
                       {"min_abs_r", opt.locus.min_abs_r},
                       {"prune_overrides", opt.locus.prune_overrides},
                       {"estimator", to_string(opt.analysis.method)},
                       {"causal_threshold", opt.analysis.causal_threshold},
                       {"bonferroni", opt.analysis.bonferroni},
                       {"det_pass", opt.analysis.thresholds.pass},
                       {"det_fail", opt.analysis.thresholds.fail},
                       {"det_measure", opt.analysis.thresholds.measure == DeterminantMeasure::Volume ? "volume"
                                                                                                     : "normalized"}};
    j["warnings"] = rep.warnings;
    j["build_warnings"] = rep.build.warnings;
    j["dropped"] = json::array();
    for (const auto& d : rep.build.dropped) j["dropped"].push_back({{"snp", d.snp}, {"reason", d.reason}});
    j["loci"] = json::array();
    for (std::size_t i = 0; i < rep.build.loci.size(); ++i) {
        const auto& l = rep.build.loci[i];
        json lj{{"lead", l.lead},       {"chrom", l.chrom},         {"position", l.lead_pos},
                {"lead_p", l.lead_p},   {"prune_r2", l.prune_r2},   {"members", l.members},
                {"instruments", l.instruments}, {"closed", l.closed}, {"warnings", l.warnings}};
        lj["pruned"] = json::array();
        for (const auto& p : l.pruned)
            lj["pruned"].push_back({{"snp", p.snp}, {"reason", p.reason}, {"kept", p.kept}, {"r2", p.r2}});
        lj["tissues"] = json::array();
        for (const auto& t : l.tissues)
            lj["tissues"].push_back({{"tissue", t.tissue},
                                     {"genes", t.genes},
                                     {"instruments", t.instruments},
                                     {"identifiable", t.identifiable}});
        lj["analyses"] = json::array();
        for (const auto& a : rep.analyses[i]) {
            json aj{{"tissue", a.tissue}, {"status", a.status}, {"message", a.message}, {"instruments", a.instruments}};
            aj["exposures"] = json::array();
            for (const auto& [g, t] : a.exposures) aj["exposures"].push_back({{"gene", g}, {"tissue", t}});
            aj["diagnostics"] = a.diagnostics ? detail::diagnostics_json(*a.diagnostics) : json(nullptr);
            aj["calls"] = json::array();
            for (const auto& c : a.calls) aj["calls"].push_back(detail::call_json(c));
            lj["analyses"].push_back(aj);
        }
        j["loci"].push_back(lj);
    }
    return j;
}

inline constexpr const char* kCallsCsvHeader =
    "locus,chrom,lead_position,analysis,gene,tissue,effect,se,p_value,causal,bonferroni,status";

/// One row per call; analyses without estimates get one row with empty values.
inline void write_calls_csv(const PipelineReport& rep, std::ostream& os) {
    os << kCallsCsvHeader << '\n';
    for (const auto& per : rep.analyses)
        for (const auto& a : per) {
            const std::string prefix = a.locus + "," + a.chrom + "," + std::to_string(a.lead_pos) + "," + a.tissue + ",";
            if (a.calls.empty()) {
                for (const auto& [g, t] : a.exposures) os << prefix << g << ',' << t << ",,,,,," << a.status << '\n';
                continue;
            }
            for (const auto& c : a.calls)
                os << prefix << c.gene << ',' << c.tissue << ',' << format_number(c.effect) << ','
                   << format_number(c.se) << ',' << format_number(c.p) << ',' << (c.causal ? 1 : 0) << ','
                   << (c.bonferroni ? 1 : 0) << ',' << a.status << '\n';
        }
}

struct ReplicationRow {
    std::string gene;
    std::string tissue;
    std::optional<CausalGeneCall> discovery;
    std::optional<CausalGeneCall> replication;
};

/// Pairs per-tissue calls of two pipeline runs by (gene, tissue).
inline std::vector<ReplicationRow> replication_table(const std::vector<CausalGeneCall>& discovery,
                                                     const std::vector<CausalGeneCall>& replication) {
    std::map<std::pair<std::string, std::string>, ReplicationRow> rows;
    for (const auto& c : discovery) {
        auto& r = rows[{c.gene, c.tissue}];
        r.gene = c.gene;
        r.tissue = c.tissue;
        r.discovery = c;
    }
    for (const auto& c : replication) {
        auto& r = rows[{c.gene, c.tissue}];
        r.gene = c.gene;
        r.tissue = c.tissue;
        r.replication = c;
    }
    std::vector<ReplicationRow> out;
    for (auto& [k, r] : rows) out.push_back(std::move(r));
    return out;
}

inline void write_replication_csv(const std::vector<ReplicationRow>& rows, std::ostream& os) {
    os << "gene,tissue,effect_discovery,effect_replication,causal_discovery,causal_replication\n";
    auto val = [](const std::optional<CausalGeneCall>& c) { return c ? format_number(c->effect) : std::string(); };
    auto flag = [](const std::optional<CausalGeneCall>& c) { return c ? std::string(c->causal ? "1" : "0") : std::string(); };
    for (const auto& r : rows)
        os << r.gene << ',' << r.tissue << ',' << val(r.discovery) << ',' << val(r.replication) << ','
           << flag(r.discovery) << ',' << flag(r.replication) << '\n';
}

} // namespace mvmr
