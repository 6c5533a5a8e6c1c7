#pragma once

#include "mvmr/causal_graph.hpp"
#include "mvmr/error.hpp"
#include "mvmr/estimators.hpp"
#include "mvmr/inference.hpp"
#include "mvmr/locus.hpp"
#include "mvmr/locus_io.hpp"
#include "mvmr/population.hpp"
#include "mvmr/replicates.hpp"
#include "mvmr/scenario.hpp"
#include "mvmr/summary_stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mvmr::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNonIdentifiable = 3;
inline constexpr int kExitNumerical = 4;

inline constexpr const char* kOutputDirEnv = "MVMR_OUTPUT_DIR";
inline constexpr const char* kDefaultOutputDir = "mvmr_out";

inline int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::Argument:
    case ErrorKind::Format:
    case ErrorKind::Duplicate:
    case ErrorKind::Lookup:
    case ErrorKind::StructuralCycle: return kExitUsage;
    case ErrorKind::Underdetermined: return kExitNonIdentifiable;
    default: return kExitNumerical;
    }
}

struct RunConfig {
    std::string subcommand;
    std::string scenario;
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out_dir;
    std::vector<std::string> estimators;
    std::optional<double> causal_threshold, bonferroni, prune_r2, det_pass, det_fail, twmr_alpha;
    std::string det_measure;

    std::optional<int> replicates;
    std::optional<double> failure_cap;

    std::string summary, diagram;
    std::vector<std::string> instruments, exposures;
    std::string outcome = "Y";
    double n = 0.0;

    std::string eqtl, gwas, ld;
    std::string rep_eqtl, rep_gwas, rep_ld;
    bool single_tissue_only = false;

    std::string scenario_dir = MVMR_SCENARIO_DIR;
    std::vector<std::string> only;

    void validate() const {
        if (threads < 1) fail(ErrorKind::Argument, "--threads must be at least 1");
        if (causal_threshold && !(*causal_threshold >= 0.0))
            fail(ErrorKind::Argument, "--causal-threshold must be non-negative");
        if (bonferroni && !(*bonferroni > 0.0 && *bonferroni <= 1.0))
            fail(ErrorKind::Argument, "--bonferroni must lie in (0, 1]");
        if (prune_r2 && !(*prune_r2 > 0.0 && *prune_r2 <= 1.0)) fail(ErrorKind::Argument, "--prune-r2 must lie in (0, 1]");
        if (det_fail && !(*det_fail >= 0.0)) fail(ErrorKind::Argument, "--det-fail must be non-negative");
        if (det_pass && det_fail && *det_fail > *det_pass) fail(ErrorKind::Argument, "--det-fail exceeds --det-pass");
        if (!det_measure.empty() && det_measure != "volume" && det_measure != "normalized")
            fail(ErrorKind::Argument, "--det-measure must be volume or normalized");
        if (twmr_alpha && !(*twmr_alpha >= 0.0 && *twmr_alpha <= 1.0))
            fail(ErrorKind::Argument, "--twmr-alpha must lie in [0, 1]");
        if (failure_cap && !(*failure_cap >= 0.0 && *failure_cap <= 1.0))
            fail(ErrorKind::Argument, "--max-failure-rate must lie in [0, 1]");
        if (replicates && *replicates < 1) fail(ErrorKind::Argument, "--replicates must be at least 1");
        if (n < 0.0) fail(ErrorKind::Argument, "--n must be non-negative");
    }
};

inline fs::path output_dir(const RunConfig& c) {
    if (!c.out_dir.empty()) return c.out_dir;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return kDefaultOutputDir;
}

inline void write_file(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::Argument, "cannot write " + path.string());
    os << text;
    if (!os) fail(ErrorKind::Argument, "write failed for " + path.string());
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, path + ": " + e.what());
    }
}

inline fs::path resolve_scenario(const std::string& name, const fs::path& dir) {
    const fs::path p(name);
    if (fs::exists(p) || p.is_absolute()) return p;
    if (fs::exists(dir / p)) return dir / p;
    if (p.extension() != ".json" && fs::exists(dir / (name + ".json"))) return dir / (name + ".json");
    return p;
}

inline DeterminantMeasure measure_from(const std::string& s) {
    if (s == "volume") return DeterminantMeasure::Volume;
    if (s == "normalized") return DeterminantMeasure::NormalizedGram;
    fail(ErrorKind::Argument, "determinant measure must be volume or normalized");
}

inline const char* measure_name(DeterminantMeasure m) {
    return m == DeterminantMeasure::Volume ? "volume" : "normalized";
}

inline DiagnosticThresholds thresholds_from(const RunConfig& c, DiagnosticThresholds t) {
    if (c.det_pass) t.pass = *c.det_pass;
    if (c.det_fail) t.fail = *c.det_fail;
    if (!c.det_measure.empty()) t.measure = measure_from(c.det_measure);
    if (t.fail > t.pass) fail(ErrorKind::Argument, "determinant fail threshold exceeds pass threshold");
    return t;
}

inline std::string det_report(const Diagnostics& d, const DiagnosticThresholds& t, Eigen::Index K) {
    const double m = t.measure == DeterminantMeasure::Volume ? d.volume : d.normalized_gram_det;
    std::ostringstream os;
    os << "rank(Sigma_EX) = " << d.rank_EX << " of " << K << ", " << measure_name(t.measure)
       << " determinant = " << format_number(m, 6) << " (fail below " << format_number(t.fail, 6) << ", pass above "
       << format_number(t.pass, 6) << "), gram det = " << format_number(d.gram_det, 6);
    return os.str();
}

// ---------------------------------------------------------------- simulate

inline int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
    Scenario s = load_scenario(resolve_scenario(c.scenario, c.scenario_dir));
    if (c.replicates) s.replicates = *c.replicates;
    if (!c.estimators.empty()) {
        s.estimators.clear();
        for (const auto& e : c.estimators) s.estimators.push_back(parse_method(e));
    }
    if (c.twmr_alpha) s.twmr_alpha = *c.twmr_alpha;
    const double cap = c.failure_cap.value_or(s.failure_cap);
    const SimulationResult r = run_replicates(s, *c.seed, c.threads);

    const fs::path dir = output_dir(c);
    std::ostringstream csv;
    write_replicates_csv(r, s, csv);
    write_file(dir / (s.name + "_replicates.csv"), csv.str());
    write_file(dir / (s.name + "_summary.json"), summary_json(r, s).dump(2) + "\n");

    std::map<std::string, std::array<double, 4>> agg; // ok, failed, sum |bias|, sum sd
    std::map<std::string, int> cells;
    std::vector<std::string> order;
    for (const auto& row : r.rows) {
        if (!agg.count(row.estimator)) order.push_back(row.estimator);
        auto& a = agg[row.estimator];
        (detail::row_ok(row) ? a[0] : a[1]) += 1.0;
    }
    for (const auto& cell : r.summary) {
        if (!std::isfinite(cell.bias) || !std::isfinite(cell.sd)) continue;
        auto& a = agg[cell.estimator];
        a[2] += std::abs(cell.bias);
        a[3] += cell.sd;
        ++cells[cell.estimator];
    }
    for (const auto& e : order) {
        const auto& a = agg[e];
        const int k = cells[e];
        out << s.name << ' ' << e << ": " << static_cast<long>(a[0]) << " estimates, " << static_cast<long>(a[1])
            << " failed";
        if (k) out << ", mean |bias| " << format_number(a[2] / k, 4) << ", mean sd " << format_number(a[3] / k, 4);
        out << " over " << k << " cells\n";
    }
    if (r.failures > 0) {
        err << s.name << ": " << r.failures << " of " << r.units << " estimation attempts failed (rate "
            << format_number(r.failure_rate(), 4) << ", cap " << format_number(cap, 4) << ")\n";
        if (r.failure_rate() >= cap) return kExitNumerical;
    }
    if (r.moment_check_failures > 0)
        err << s.name << ": " << r.moment_check_failures << " of " << r.moment_checks << " moment checks failed\n";
    return kExitOk;
}

// ---------------------------------------------------------------- estimate

struct SummaryFile {
    SummaryStatistics stats;
    std::vector<std::string> instruments, exposures;
};

/// Reads `{"sigma_EX": [[..]], "sigma_EY": [..], "sigma_EE": [[..]], ...}`.
/// `sigma_EE` defaults to the identity; names default to E1.., X1...
inline SummaryFile parse_summary_file(const json& j) {
    detail::reject_unknown(j,
                           {"description", "instruments", "exposures", "sigma_EX", "sigma_EY", "sigma_EE", "n_exposure",
                            "n_outcome"},
                           "summary file");
    SummaryFile f;
    try {
        if (!j.contains("sigma_EX") || !j.contains("sigma_EY"))
            fail(ErrorKind::Format, "summary file needs sigma_EX and sigma_EY");
        f.stats.sigma_EX = detail::matrix_from(j.at("sigma_EX"), "sigma_EX");
        const auto ey = detail::doubles(j.at("sigma_EY"), "sigma_EY");
        f.stats.sigma_EY = Eigen::Map<const Vector>(ey.data(), static_cast<Eigen::Index>(ey.size()));
        const auto L = f.stats.sigma_EX.rows(), K = f.stats.sigma_EX.cols();
        f.stats.sigma_EE = j.contains("sigma_EE") ? detail::matrix_from(j.at("sigma_EE"), "sigma_EE")
                                                  : Matrix(Matrix::Identity(L, L));
        f.stats.n_exposure = j.value("n_exposure", 0.0);
        f.stats.n_outcome = j.value("n_outcome", 0.0);
        if (j.contains("instruments")) f.instruments = j.at("instruments").get<std::vector<std::string>>();
        else
            for (Eigen::Index i = 0; i < L; ++i) f.instruments.push_back("E" + std::to_string(i + 1));
        if (j.contains("exposures")) f.exposures = j.at("exposures").get<std::vector<std::string>>();
        else
            for (Eigen::Index k = 0; k < K; ++k) f.exposures.push_back("X" + std::to_string(k + 1));
        if (static_cast<Eigen::Index>(f.instruments.size()) != L)
            fail(ErrorKind::Format, "instruments must name every row of sigma_EX");
        if (static_cast<Eigen::Index>(f.exposures.size()) != K)
            fail(ErrorKind::Format, "exposures must name every column of sigma_EX");
        if (f.stats.sigma_EY.size() != L) fail(ErrorKind::Format, "sigma_EY length does not match sigma_EX rows");
        if (f.stats.sigma_EE.rows() != L || f.stats.sigma_EE.cols() != L)
            fail(ErrorKind::Format, "sigma_EE must be L x L");
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("summary file: ") + e.what());
    }
    return f;
}

inline json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(detail::number_json(v(i)));
    return a;
}

inline int cmd_estimate(const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (c.summary.empty() == c.diagram.empty())
        fail(ErrorKind::Argument, "estimate needs exactly one of --summary or --diagram");
    SummaryFile f;
    std::optional<PopulationProblem> pop;
    json report;
    if (!c.diagram.empty()) {
        const auto in = [&] {
            std::ifstream is(c.diagram);
            if (!is) fail(ErrorKind::Format, "cannot open " + c.diagram);
            return DiagramSpec(parse_diagram(is));
        }();
        std::vector<std::string> ins = c.instruments, exs = c.exposures;
        for (int i = 0; i < in.diagram.size(); ++i) {
            const std::string& nm = in.diagram.name(i);
            if (c.instruments.empty() && nm.rfind('E', 0) == 0) ins.push_back(nm);
            if (c.exposures.empty() && nm.rfind('X', 0) == 0) exs.push_back(nm);
        }
        pop = population_problem(in, ins, exs, c.outcome, c.n);
        f.stats = pop->stats;
        f.instruments = ins;
        f.exposures = exs;
        report["mode"] = "population";
        report["outcome"] = c.outcome;
        report["truth"] = vector_json(pop->truth);
        json id{{"valid", pop->verdict.valid},
                {"violated_condition", pop->verdict.violated_condition},
                {"reason", pop->verdict.reason}};
        id["witnesses"] = json::array();
        for (const auto& w : pop->verdict.witnesses) id["witnesses"].push_back(w.path.to_string(in.diagram));
        report["identification"] = std::move(id);
    } else {
        f = parse_summary_file(read_json(c.summary));
        report["mode"] = "summary";
    }
    report["instruments"] = f.instruments;
    report["exposures"] = f.exposures;

    const DiagnosticThresholds th =
        thresholds_from(c, DiagnosticThresholds{0.05, 0.001, DeterminantMeasure::NormalizedGram});
    const auto K = f.stats.exposures();
    const Diagnostics d = identifiability_diagnostics(f.stats, th);
    report["diagnostics"] = detail::diagnostics_json(d);
    report["diagnostics"]["measure"] = measure_name(th.measure);
    report["estimators"] = json::array();
    const fs::path path = output_dir(c) / "estimate.json";

    if ((pop && !pop->verdict.valid) || d.verdict == Verdict::Fail || f.stats.instruments() < K) {
        report["status"] = "non-identifiable";
        write_file(path, report.dump(2) + "\n");
        err << "non-identifiable: " << det_report(d, th, K);
        if (pop && !pop->verdict.valid) err << "; instrumental set invalid: " << pop->verdict.reason;
        err << '\n';
        return kExitNonIdentifiable;
    }
    if (d.verdict == Verdict::Warn) err << "warning: weakly identified, " << det_report(d, th, K) << '\n';

    std::vector<std::string> methods = c.estimators;
    if (methods.empty()) methods = {"ls", "gmm", "twmr"};
    int code = kExitOk;
    for (const auto& name : methods) {
        EstimateOptions eo;
        eo.method = parse_method(name);
        eo.thresholds = th;
        if (c.bonferroni) eo.bonferroni = *c.bonferroni;
        if (c.twmr_alpha) eo.alpha = *c.twmr_alpha;
        json e{{"estimator", name}};
        try {
            const EstimateResult r = estimate(f.stats, eo);
            e["status"] = "ok";
            e["effects"] = vector_json(r.effects);
            e["se"] = r.standard_errors.size() ? vector_json(r.standard_errors) : json(nullptr);
            e["p_values"] = r.p_values.size() ? vector_json(r.p_values) : json(nullptr);
            e["bonferroni"] = r.bonferroni;
            if (eo.method == Method::TwmrShrunk) e["alpha"] = r.alpha;
            out << name << ':';
            for (Eigen::Index k = 0; k < K; ++k)
                out << ' ' << f.exposures[static_cast<std::size_t>(k)] << '=' << format_number(r.effects(k), 8);
            if (pop) {
                const double maxerr = (r.effects - pop->truth).cwiseAbs().maxCoeff();
                e["max_abs_error"] = maxerr;
                out << " (max |error| " << format_number(maxerr, 3) << ')';
            }
            out << '\n';
        } catch (const Error& ex) {
            e["status"] = to_string(ex.kind());
            e["message"] = ex.what();
            err << name << ": " << ex.what() << '\n';
            code = std::max(code, exit_code(ex.kind()));
        }
        report["estimators"].push_back(std::move(e));
    }
    report["status"] = code == kExitOk ? "ok" : code == kExitNonIdentifiable ? "non-identifiable" : "numerical-failure";
    write_file(path, report.dump(2) + "\n");
    return code;
}

// ---------------------------------------------------------------- loci

inline const char* kLociConfigKeys =
    "Config keys (JSON object, unknown keys are errors):\n"
    "  radius_bp         locus radius around the lead SNP in bp (> 0, default 500000)\n"
    "  gwas_p            GWAS significance for lead SNPs, (0, 1] (default 5e-8)\n"
    "  eqtl_fdr          eQTL FDR threshold, (0, 1] (default 0.05)\n"
    "  prune_r2          near-duplicate pruning r^2, (0, 1] (default 0.95)\n"
    "  perfect_r2        r^2 counted as perfect LD with the lead, (0, 1] (default 0.99)\n"
    "  min_abs_r         minimum |r| with the lead for locus membership, [0, 1) (default 0.01)\n"
    "  prune_overrides   object: lead SNP id -> prune r^2 for that locus\n"
    "  estimator         ls, gmm or twmr (default ls)\n"
    "  twmr_alpha        TWMR shrinkage weight, [0, 1] (default 1/sqrt(3781))\n"
    "  causal_threshold  |effect| at or above which a gene is called causal, >= 0 (default 0.1)\n"
    "  bonferroni        p-value threshold for the Bonferroni flag, (0, 1] (default 3e-4)\n"
    "  det_pass          determinant above which identification passes (default 0.05)\n"
    "  det_fail          determinant below which a locus is non-identifiable (default 0.001)\n"
    "  det_measure       normalized or volume (default normalized)\n"
    "  multi_tissue      also fit all gene-tissue pairs of a locus jointly (default true)\n"
    "Command-line flags override config values.\n";

inline void apply_loci_config(const json& j, PipelineOptions& o) {
    detail::reject_unknown(j,
                           {"radius_bp", "gwas_p", "eqtl_fdr", "prune_r2", "perfect_r2", "min_abs_r", "prune_overrides",
                            "estimator", "twmr_alpha", "causal_threshold", "bonferroni", "det_pass", "det_fail",
                            "det_measure", "multi_tissue"},
                           "loci config");
    try {
        auto& l = o.locus;
        auto& a = o.analysis;
        l.radius_bp = j.value("radius_bp", l.radius_bp);
        l.gwas_p = j.value("gwas_p", l.gwas_p);
        l.eqtl_fdr = j.value("eqtl_fdr", l.eqtl_fdr);
        l.prune_r2 = j.value("prune_r2", l.prune_r2);
        l.perfect_r2 = j.value("perfect_r2", l.perfect_r2);
        l.min_abs_r = j.value("min_abs_r", l.min_abs_r);
        if (j.contains("prune_overrides")) l.prune_overrides = j.at("prune_overrides").get<std::map<std::string, double>>();
        if (j.contains("estimator")) a.method = parse_method(j.at("estimator").get<std::string>());
        a.alpha = j.value("twmr_alpha", a.alpha);
        a.causal_threshold = j.value("causal_threshold", a.causal_threshold);
        a.bonferroni = j.value("bonferroni", a.bonferroni);
        a.thresholds.pass = j.value("det_pass", a.thresholds.pass);
        a.thresholds.fail = j.value("det_fail", a.thresholds.fail);
        if (j.contains("det_measure")) a.thresholds.measure = measure_from(j.at("det_measure").get<std::string>());
        o.multi_tissue = j.value("multi_tissue", o.multi_tissue);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("loci config: ") + e.what());
    }
}

inline PipelineOptions pipeline_options(const RunConfig& c) {
    PipelineOptions o;
    if (!c.config.empty()) apply_loci_config(read_json(c.config), o);
    if (c.estimators.size() > 1) fail(ErrorKind::Argument, "loci takes a single estimator");
    if (!c.estimators.empty()) o.analysis.method = parse_method(c.estimators[0]);
    if (c.twmr_alpha) o.analysis.alpha = *c.twmr_alpha;
    if (c.causal_threshold) o.analysis.causal_threshold = *c.causal_threshold;
    if (c.bonferroni) o.analysis.bonferroni = *c.bonferroni;
    if (c.prune_r2) o.locus.prune_r2 = *c.prune_r2;
    o.analysis.thresholds = thresholds_from(c, o.analysis.thresholds);
    if (c.single_tissue_only) o.multi_tissue = false;
    o.threads = c.threads;
    o.locus.validate();
    o.analysis.validate();
    return o;
}

inline int cmd_loci(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const PipelineOptions opt = pipeline_options(c);
    const bool replicate = !c.rep_eqtl.empty() || !c.rep_gwas.empty() || !c.rep_ld.empty();
    if (replicate && (c.rep_eqtl.empty() || c.rep_gwas.empty() || c.rep_ld.empty()))
        fail(ErrorKind::Argument, "replication needs --replication-eqtl, --replication-gwas and --replication-ld");
    const SummaryTables tables = load_summaries(c.eqtl, c.gwas, c.ld);
    std::optional<SummaryTables> rep_tables;
    if (replicate) rep_tables = load_summaries(c.rep_eqtl, c.rep_gwas, c.rep_ld);

    const PipelineReport rep = run_pipeline(tables, opt);
    const fs::path dir = output_dir(c);
    write_file(dir / "loci_report.json", pipeline_json(rep, opt).dump(2) + "\n");
    std::ostringstream csv;
    write_calls_csv(rep, csv);
    write_file(dir / "causal_calls.csv", csv.str());
    for (const auto& w : rep.warnings) err << "warning: " << w << '\n';

    std::size_t ok = 0, non_id = 0, failed = 0, calls = 0, causal = 0, bonf = 0;
    for (const auto& per : rep.analyses)
        for (const auto& a : per) {
            (a.status == "ok" ? ok : a.status == "non-identifiable" ? non_id : failed) += 1;
            for (const auto& call : a.calls) {
                ++calls;
                causal += call.causal;
                bonf += call.bonferroni;
            }
        }
    out << rep.build.loci.size() << " loci, " << ok << " analyses ok, " << non_id << " non-identifiable, " << failed
        << " numerical failures; " << calls << " gene calls, " << causal << " causal, " << bonf << " Bonferroni\n";

    if (rep_tables) {
        const PipelineReport r2 = run_pipeline(*rep_tables, opt);
        for (const auto& w : r2.warnings) err << "warning (replication): " << w << '\n';
        const auto rows = replication_table(rep.tissue_calls(), r2.tissue_calls());
        std::ostringstream rc;
        write_replication_csv(rows, rc);
        write_file(dir / "replication.csv", rc.str());
        std::size_t both = 0, agree = 0;
        for (const auto& r : rows)
            if (r.discovery && r.replication) {
                ++both;
                agree += r.discovery->causal == r.replication->causal;
            }
        out << "replication: " << both << " gene-tissue pairs in both sets, " << agree << " with matching causal calls\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------- figures

inline int cmd_figures(const RunConfig& c, std::ostream& out, std::ostream& err) {
    std::vector<fs::path> files;
    if (!fs::is_directory(c.scenario_dir)) fail(ErrorKind::Argument, "no scenario directory " + c.scenario_dir);
    for (const auto& e : fs::directory_iterator(c.scenario_dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    json index = json::array();
    int worst = kExitOk;
    for (const auto& f : files) {
        const std::string stem = f.stem().string();
        if (!c.only.empty() && std::find(c.only.begin(), c.only.end(), stem) == c.only.end()) continue;
        RunConfig sc = c;
        sc.scenario = f.string();
        json entry{{"file", f.filename().string()}};
        try {
            const Scenario s = load_scenario(f);
            entry["scenario"] = s.name;
            entry["description"] = s.description;
            entry["design"] = to_string(s.design);
            entry["replicate_csv"] = s.name + "_replicates.csv";
            entry["summary_json"] = s.name + "_summary.json";
            const int code = cmd_simulate(sc, out, err);
            entry["exit_code"] = code;
            worst = std::max(worst, code);
        } catch (const Error& e) {
            err << f.filename().string() << ": " << e.what() << '\n';
            entry["exit_code"] = exit_code(e.kind());
            entry["error"] = e.what();
            worst = std::max(worst, exit_code(e.kind()));
        }
        index.push_back(std::move(entry));
    }
    write_file(output_dir(c) / "figures.json",
               json{{"seed", *c.seed}, {"replicate_csv_columns", kReplicateCsvHeader}, {"scenarios", index}}.dump(2) +
                   "\n");
    return worst;
}

// ---------------------------------------------------------------- entry

inline const char* kSimulateKeys =
    "Scenario keys (JSON object, unknown keys are errors):\n"
    "  name, description      labels; name prefixes the output files\n"
    "  design                 one_sample, two_sample, pleiotropy, type1_power or pc1\n"
    "  replicates             replicates per design point (>= 1)\n"
    "  estimators             subset of [ls, gmm, twmr]\n"
    "  exposures, effects     exposure names and true causal effects\n"
    "  effect_scale           standardized or raw\n"
    "  noise                  {sigma_x, sigma_y, confounding}\n"
    "  genotypes              {file, mafs | maf + snps, successive_r, correlation_range, ld, generator}\n"
    "  instrument_effects     {matrix | range | value, det_min, det_max, causal, causal_snps, label}\n"
    "  grid                   {n, correlation, instrument_strength, ld_threshold, hidden_effect,\n"
    "                          sample_size_pairs, wishart_df, samples}\n"
    "  hidden_exposures       exposure indices left out of the misspecified model (pleiotropy)\n"
    "  tested_exposure        exposure index for type I error / power\n"
    "  alpha                  test level in [0, 1]\n"
    "  ld_choice              sample or reference (one-sample); exposure, outcome or reference (two-sample)\n"
    "  perturb_two_sample_ld  Wishart-perturb the LD used in two-sample fits\n"
    "  conditional_f, individual_se, univariate_models  extra per-replicate outputs\n"
    "  twmr_alpha             TWMR shrinkage weight\n"
    "  moment_check_every     check sampled genotype moments every k-th replicate (0: never)\n"
    "  failure_cap            failure rate at which simulate exits 4 (default 0.05)\n";

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig c;
    CLI::App app{"Multivariable Mendelian randomization: simulation, estimation and locus analysis"};
    app.require_subcommand(1);
    app.footer(std::string("Default output directory: $") + kOutputDirEnv + ", else ./" + kDefaultOutputDir +
               ". Exit codes: 0 ok, 2 usage or format, 3 non-identifiable, 4 numerical failure.");

    auto common = [&](CLI::App* s) {
        s->add_option("--threads", c.threads, "Worker threads; results do not depend on it")->capture_default_str();
        s->add_option("--out", c.out_dir, "Output directory");
    };
    auto thresholds = [&](CLI::App* s) {
        s->add_option("--det-pass", c.det_pass, "Determinant above which identification passes");
        s->add_option("--det-fail", c.det_fail, "Determinant below which the model is non-identifiable");
        s->add_option("--det-measure", c.det_measure, "normalized or volume")
            ->check(CLI::IsMember({"normalized", "volume"}));
        s->add_option("--bonferroni", c.bonferroni, "p-value threshold for the Bonferroni flag");
        s->add_option("--twmr-alpha", c.twmr_alpha, "TWMR shrinkage weight");
    };

    auto* sim = app.add_subcommand("simulate", "Run a scenario file and write replicate CSV and summary JSON");
    sim->add_option("--scenario", c.scenario, "Scenario JSON (bundled names resolve against the scenario dir)")
        ->required();
    sim->add_option("--seed", c.seed, "Master seed (required)")->required();
    sim->add_option("--replicates", c.replicates, "Override the scenario replicate count");
    sim->add_option("--estimator", c.estimators, "Override the scenario estimators")->delimiter(',');
    sim->add_option("--twmr-alpha", c.twmr_alpha, "TWMR shrinkage weight");
    sim->add_option("--max-failure-rate", c.failure_cap, "Failure rate at which to exit 4");
    sim->add_option("--scenario-dir", c.scenario_dir, "Directory searched for bundled scenarios");
    common(sim);
    sim->footer(kSimulateKeys);

    auto* est = app.add_subcommand("estimate", "Estimate causal effects from summary statistics or a diagram");
    est->add_option("--summary", c.summary, "Summary JSON: sigma_EX, sigma_EY, [sigma_EE, n_exposure, n_outcome, "
                                            "instruments, exposures, description]");
    est->add_option("--diagram", c.diagram, "Diagram file (edge/bicov/var/node lines); population mode");
    est->add_option("--instruments", c.instruments, "Instrument nodes (default: nodes named E*)")->delimiter(',');
    est->add_option("--exposures", c.exposures, "Exposure nodes (default: nodes named X*)")->delimiter(',');
    est->add_option("--outcome", c.outcome, "Outcome node")->capture_default_str();
    est->add_option("--n", c.n, "Sample size attached to population statistics (0: no standard errors)");
    est->add_option("--estimator", c.estimators, "Estimators to run (default ls,gmm,twmr)")->delimiter(',');
    thresholds(est);
    common(est);

    auto* loci = app.add_subcommand("loci", "Run the locus pipeline on eQTL, GWAS and LD files");
    loci->add_option("--eqtl", c.eqtl, "eQTL TSV: snp chrom pos gene tissue beta se maf fdr")->required();
    loci->add_option("--gwas", c.gwas, "GWAS TSV: snp chrom pos beta se pval n")->required();
    loci->add_option("--ld", c.ld, "LD file: SNP ids, then the square r matrix")->required();
    loci->add_option("--config", c.config, "JSON config (keys below)");
    loci->add_option("--estimator", c.estimators, "ls, gmm or twmr");
    loci->add_option("--causal-threshold", c.causal_threshold, "|effect| threshold for a causal call");
    loci->add_option("--prune-r2", c.prune_r2, "Near-duplicate pruning r^2");
    loci->add_flag("--single-tissue", c.single_tissue_only, "Skip the joint gene-tissue analysis");
    loci->add_option("--replication-eqtl", c.rep_eqtl, "Replication eQTL TSV");
    loci->add_option("--replication-gwas", c.rep_gwas, "Replication GWAS TSV");
    loci->add_option("--replication-ld", c.rep_ld, "Replication LD file");
    thresholds(loci);
    common(loci);
    loci->footer(kLociConfigKeys);

    auto* fig = app.add_subcommand("figures", "Run every bundled scenario and write figure data files");
    fig->add_option("--seed", c.seed, "Master seed (required)")->required();
    fig->add_option("--replicates", c.replicates, "Override every scenario's replicate count");
    fig->add_option("--only", c.only, "Scenario file stems to run")->delimiter(',');
    fig->add_option("--scenario-dir", c.scenario_dir, "Scenario directory")->capture_default_str();
    fig->add_option("--max-failure-rate", c.failure_cap, "Failure rate at which to exit 4");
    common(fig);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        c.validate();
        if (sim->parsed()) return cmd_simulate(c, out, err);
        if (est->parsed()) return cmd_estimate(c, out, err);
        if (loci->parsed()) return cmd_loci(c, out, err);
        return cmd_figures(c, out, err);
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    }
}

} // namespace mvmr::cli
