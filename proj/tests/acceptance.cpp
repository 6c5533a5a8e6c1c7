// Runs every acceptance criterion at full scale and prints one PASS/FAIL line
// per criterion. Exit status is the number of failing criteria.

#include "mvmr/causal_graph.hpp"
#include "mvmr/dataset.hpp"
#include "mvmr/estimators.hpp"
#include "mvmr/locus.hpp"
#include "mvmr/locus_io.hpp"
#include "mvmr/population.hpp"
#include "mvmr/replicates.hpp"
#include "mvmr/scenario.hpp"
#include "support/random_sem.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace mvmr;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

int threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int p = 4) { return format_number(v, p); }

Scenario bundled(const std::string& file) { return load_scenario(std::string(MVMR_SCENARIO_DIR) + "/" + file); }

std::size_t point_where(const SimulationResult& r, const std::function<bool(const DesignPoint&)>& pred) {
    for (std::size_t p = 0; p < r.points.size(); ++p)
        if (pred(r.points[p])) return p;
    fail(ErrorKind::Lookup, "no design point matches");
}

const SummaryCell& cell(const SimulationResult& r, std::size_t p, const std::string& est, const std::string& model,
                        const std::string& exposure) {
    const SummaryCell* c = r.find(p, est, model, exposure);
    if (!c) fail(ErrorKind::Lookup, "missing summary cell " + est + "/" + model + "/" + exposure);
    return *c;
}

bool near(std::optional<double> v, double x) { return v && std::abs(*v - x) < 1e-12; }

// ---------------------------------------------------------------- 1, 2

Outcome oracle_identification() {
    std::mt19937_64 rng(kSeed);
    int passing = 0, tried = 0;
    double worst = 0.0;
    while (passing < 500) {
        ++tried;
        const int k = 1 + static_cast<int>(rng() % 3);
        const auto iv = fixtures::random_iv_sem(rng, k);
        const auto& g = iv.spec.diagram;
        if (g.size() > 8) continue;
        if (!check_instrumental_set(g, iv.instruments, iv.exposures, iv.outcome).valid) continue;
        ++passing;
        std::vector<std::string> ins, exs;
        for (int i : iv.instruments) ins.push_back(g.name(i));
        for (int i : iv.exposures) exs.push_back(g.name(i));
        const auto pp = population_problem(iv.spec, ins, exs, g.name(iv.outcome));
        worst = std::max(worst, (ls_estimate(pp.stats).effects - pp.truth).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-9, std::to_string(passing) + " valid SEMs (" + std::to_string(tried) +
                              " drawn), max |c_hat - c| = " + num(worst, 3)};
}

Outcome path_rule() {
    std::mt19937_64 rng(kSeed + 1);
    double worst = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
        const int p = 2 + static_cast<int>(rng() % 7);
        const auto spec = fixtures::random_sem(rng, p, 0.4, 0.15);
        const Matrix s = implied_covariance(spec.sem);
        for (int a = 0; a < p; ++a)
            for (int b = 0; b < p; ++b)
                worst = std::max(worst, std::abs(wright_covariance(spec.diagram, spec.sem, a, b) - s(a, b)));
    }
    return {worst < 1e-10, "500 SEMs, max entrywise difference " + num(worst, 3)};
}

// ---------------------------------------------------------------- 3

Outcome correlation_robustness() {
    Scenario s = bundled("fig2_corr.json");
    s.replicates = 1000;
    s.n = {2000};
    s.correlations = {0.1, 0.9};
    const auto r = run_replicates(s, kSeed, threads());
    const auto lo = point_where(r, [](const DesignPoint& p) { return near(p.correlation, 0.1); });
    const auto hi = point_where(r, [](const DesignPoint& p) { return near(p.correlation, 0.9); });
    bool ok = true;
    std::ostringstream os;
    for (const auto& x : s.exposure_names) {
        const auto& a = cell(r, lo, "ls", "mvmr", x);
        const auto& b = cell(r, hi, "ls", "mvmr", x);
        const double ratio = b.variance / a.variance;
        ok = ok && std::abs(a.bias) < 0.01 && std::abs(b.bias) < 0.01 && ratio >= 1.0 && ratio <= 3.0;
        os << x << ": bias(0.1) " << num(a.bias) << ", bias(0.9) " << num(b.bias) << ", var ratio " << num(ratio)
           << "; ";
    }
    return {ok, os.str() + "need |bias| < 0.01, ratio in [1, 3]"};
}

// ---------------------------------------------------------------- 4

Outcome weak_instruments() {
    Scenario s = bundled("fig2_weak.json");
    s.n = {500, 2000};
    const auto r = run_replicates(s, kSeed, threads());
    auto label = [&](const DesignPoint& p) { return s.strengths[*p.strength].label; };
    const auto weak = point_where(r, [&](const DesignPoint& p) { return p.n == 500 && label(p) == "weak"; });
    const auto strong = point_where(r, [&](const DesignPoint& p) { return p.n == 2000 && label(p) == "strong"; });
    bool ok = true;
    std::ostringstream os;
    for (const auto& x : s.exposure_names) {
        const auto& w = cell(r, weak, "ls", "mvmr", x);
        const auto& g = cell(r, strong, "ls", "mvmr", x);
        const double ratio = w.sd / g.sd;
        ok = ok && ratio >= 3.0 && w.median_conditional_f < 10.0 && g.median_conditional_f > 10.0;
        os << x << ": sd ratio " << num(ratio) << ", median F weak " << num(w.median_conditional_f) << " / strong "
           << num(g.median_conditional_f) << "; ";
    }
    return {ok, os.str() + "need ratio >= 3, F_weak < 10 < F_strong"};
}

// ---------------------------------------------------------------- 5

Outcome ls_vs_gmm() {
    Scenario s = bundled("fig3_ld_accuracy.json");
    s.replicates = 1000;
    s.n = {2000};
    s.ld_thresholds = {0.3, 0.5, 0.8};
    const auto r = run_replicates(s, kSeed, threads());
    bool ok = true;
    double worst = 0.0;
    std::ostringstream os;
    for (std::size_t p = 0; p < r.points.size(); ++p) {
        os << "L=" << r.instrument_counts[p] << ":";
        for (const auto& x : s.exposure_names) {
            const double vl = cell(r, p, "ls", "mvmr", x).variance, vg = cell(r, p, "gmm", "mvmr", x).variance;
            const double rel = std::abs(vl - vg) / vg;
            worst = std::max(worst, rel);
            ok = ok && rel < 0.1;
            os << ' ' << num(rel, 3);
        }
        os << "; ";
    }
    return {ok, os.str() + "max relative variance difference " + num(worst, 3) + ", need < 0.1"};
}

// ---------------------------------------------------------------- 6

Outcome pleiotropy_envelope() {
    Scenario s = bundled("fig2_pleiotropy.json");
    s.replicates = 1000;
    s.n = {2000};
    s.hidden_effects = {0.0, 0.15, 0.4};
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_replicates(s, kSeed, threads());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = secs < 120.0;
    std::ostringstream os;
    for (double h : s.hidden_effects) {
        const auto p = point_where(r, [&](const DesignPoint& d) { return near(d.hidden_effect, h); });
        double shift = 0.0, sd = 0.0;
        bool within = true;
        for (std::size_t k = 0; k < s.exposure_names.size(); ++k) {
            if (std::find(s.hidden_exposures.begin(), s.hidden_exposures.end(), static_cast<int>(k)) !=
                s.hidden_exposures.end())
                continue;
            const auto& x = s.exposure_names[k];
            const auto& full = cell(r, p, "ls", "full", x);
            const auto& mis = cell(r, p, "ls", "misspecified", x);
            const double d = std::abs(mis.mean - full.mean);
            within = within && d <= full.sd;
            if (d > shift) {
                shift = d;
                sd = full.sd;
            }
        }
        ok = ok && (h <= 0.15 ? within : !within);
        os << "hidden " << num(h) << ": shift " << num(shift) << " vs sd " << num(sd) << "; ";
    }
    return {ok, os.str() + "need shift <= sd up to 0.15 and > sd at 0.4 (" + num(secs, 3) + " s)"};
}

// ---------------------------------------------------------------- 7

Outcome ld_perturbation() {
    Scenario s = bundled("fig3_ld_perturbation.json");
    s.replicates = 1000;
    s.n = {2000};
    s.ld_thresholds = {0.8};
    const auto r = run_replicates(s, kSeed, threads());
    const auto base = point_where(r, [](const DesignPoint& p) { return near(p.wishart_df, 0.0); });
    const auto pert = point_where(r, [](const DesignPoint& p) { return near(p.wishart_df, 50.0); });
    double worst = 0.0;
    std::ostringstream os;
    for (const auto& x : s.exposure_names) {
        const double added = std::abs(cell(r, pert, "gmm", "mvmr", x).bias - cell(r, base, "gmm", "mvmr", x).bias);
        worst = std::max(worst, added);
        os << x << ' ' << num(added) << "; ";
    }
    return {worst < 0.02, "added |bias| at df=50: " + os.str() + "need < 0.02"};
}

// ---------------------------------------------------------------- 8

Outcome two_sample_convergence() {
    Scenario s = bundled("fig3_two_sample.json");
    s.replicates = 200;
    s.sample_size_pairs = {{300, 10000}, {4000, 140000}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_replicates(s, kSeed, threads());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto small = point_where(r, [](const DesignPoint& p) { return p.sample_sizes && (*p.sample_sizes)[0] == 300; });
    const auto large = point_where(r, [](const DesignPoint& p) { return p.sample_sizes && (*p.sample_sizes)[0] == 4000; });
    bool ok = secs < 600.0;
    std::ostringstream os;
    for (Method m : s.estimators) {
        const std::string e = to_string(m);
        double bs = 0.0, bl = 0.0;
        for (const auto& x : s.exposure_names) {
            bs = std::max(bs, std::abs(cell(r, small, e, "mvmr", x).bias));
            bl = std::max(bl, std::abs(cell(r, large, e, "mvmr", x).bias));
        }
        const double ratio = bs / bl;
        if (m != Method::TwmrShrunk) ok = ok && ratio >= 4.0;
        os << e << " max|bias| " << num(bs) << " -> " << num(bl) << " (x" << num(ratio, 3) << "); ";
    }
    return {ok, os.str() + "need ratio >= 4 for ls and gmm (" + num(secs, 3) + " s)"};
}

// ---------------------------------------------------------------- 9

Outcome twmr_bias() {
    const Scenario s = bundled("twmr_bias.json");
    PopulationModel pm;
    pm.genotypes = GenotypeModel{s.mafs, s.successive_r};
    pm.A = *s.fixed_A;
    pm.effects = s.effects;
    pm.scale = s.scale;
    pm.sigma_x = s.sigma_x;
    pm.sigma_y = s.sigma_y;
    pm.confounding = s.confounding;
    const PopulationTruth t = population_truth(pm);
    const Matrix R = source_ld(pm.genotypes);
    SummaryStatistics pop;
    pop.sigma_EE = R;
    pop.sigma_EX = R * pm.A * t.sd_x.cwiseInverse().asDiagonal();
    pop.sigma_EY = R * pm.A * t.c_raw / t.sd_y;
    const Vector dev = twmr_shrunk_estimate(pop, s.twmr_alpha).effects - gmm_optimal(pop).effects;
    Eigen::Index kmax = 0;
    dev.cwiseAbs().maxCoeff(&kmax);
    const std::string x = s.exposure_names[static_cast<std::size_t>(kmax)];

    const auto r = run_replicates(s, kSeed, threads());
    std::map<std::pair<std::size_t, int>, std::array<double, 2>> paired; // gmm, twmr
    for (const auto& row : r.rows)
        if (row.exposure == x && detail::row_ok(row))
            paired[{row.point, row.replicate}][row.estimator == "twmr" ? 1 : 0] = row.estimate;
    bool ok = std::abs(dev(kmax)) > 1e-3;
    std::ostringstream os;
    os << "population deviation (" << x << ") " << num(dev(kmax)) << "; ";
    for (std::size_t p = 0; p < r.points.size(); ++p) {
        double sum = 0.0, sq = 0.0;
        int n = 0;
        for (const auto& [key, v] : paired)
            if (key.first == p) {
                const double d = v[1] - v[0];
                sum += d;
                sq += d * d;
                ++n;
            }
        const double mean = sum / n, se = std::sqrt(std::max(0.0, sq / n - mean * mean) / n);
        os << "N=" << r.points[p].n << " mean diff " << num(mean) << " (se " << num(se, 2) << "); ";
        if (p + 1 == r.points.size())
            ok = ok && std::abs(mean) > 3.0 * se && std::abs(mean) >= 0.5 * std::abs(dev(kmax)) && mean * dev(kmax) > 0;
    }
    return {ok, os.str() + "need the largest-N difference to stay >= half the population deviation"};
}

// ---------------------------------------------------------------- 10

Outcome pc1_law() {
    const Scenario s = bundled("s8_pc1.json");
    const auto r = run_replicates(s, kSeed, threads());
    bool ok = true;
    std::ostringstream os;
    for (const auto& c : r.summary) {
        const double r0 = *r.points[c.point].correlation;
        const double err = std::abs(c.mean - (1.0 + r0) / 2.0);
        ok = ok && c.count == s.replicates && err < 0.01;
        os << "r=" << num(r0) << " mean " << num(c.mean) << "; ";
    }
    return {ok && r.summary.size() == 4, os.str() + "need within 0.01 of (1+r)/2"};
}

// ---------------------------------------------------------------- 11

std::string report_text(const PipelineReport& rep, const PipelineOptions& opt) {
    return pipeline_json(rep, opt).dump(2) + "\n";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome pipeline_round_trip() {
    PopulationModel m;
    m.genotypes = GenotypeModel{{0.3, 0.25, 0.35, 0.3, 0.28}, {0.5, 0.4, 0.6, 0.45}};
    m.A = Matrix::Zero(5, 2);
    m.A << 0.3, 0.05, 0.1, 0.0, 0.0, 0.25, 0.05, 0.2, 0.0, 0.0;
    m.effects = Vector(2);
    m.effects << 0.2, -0.3;
    SnpLayout layout;
    layout.snps = {"rs1", "rs2", "rs3", "rs4", "rs5"};
    layout.positions = {10000, 20000, 30000, 40000, 50000};
    layout.mafs = {0.3, 0.25, 0.35, 0.3, 0.28};
    layout.genes = {"GENE1", "GENE2"};
    const fs::path dir = fs::temp_directory_path() / "mvmr_acceptance_round_trip";
    fs::create_directories(dir);

    const int reps = 200;
    std::vector<std::vector<double>> est(2);
    int missing = 0;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng = make_stream(kSeed, {11, static_cast<std::uint64_t>(rep), 0});
        const Dataset d = generate_dataset(m, 20000, rng);
        const SummaryTables t = tables_from_statistics(d.stats, layout);
        {
            std::ofstream e(dir / "eqtl.tsv"), g(dir / "gwas.tsv"), l(dir / "ld.txt");
            write_eqtl(t.eqtl, e);
            write_gwas(t.gwas, g);
            write_ld(t.ld, l);
        }
        const auto loaded = load_summaries((dir / "eqtl.tsv").string(), (dir / "gwas.tsv").string(),
                                           (dir / "ld.txt").string());
        const auto calls = run_pipeline(loaded).tissue_calls();
        std::array<bool, 2> seen{false, false};
        for (const auto& c : calls)
            for (std::size_t k = 0; k < 2; ++k)
                if (c.gene == layout.genes[k]) {
                    est[k].push_back(c.effect);
                    seen[k] = true;
                }
        missing += !(seen[0] && seen[1]);
    }
    bool ok = missing == 0;
    std::ostringstream os;
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& v = est[k];
        double mean = 0.0, sq = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        for (double x : v) sq += (x - mean) * (x - mean);
        const double sd = std::sqrt(sq / static_cast<double>(v.size() - 1));
        const double mc = sd / std::sqrt(static_cast<double>(v.size()));
        const double dev = std::abs(mean - m.effects(static_cast<Eigen::Index>(k)));
        ok = ok && dev < 3.0 * mc;
        os << layout.genes[k] << " mean " << num(mean) << " truth " << num(m.effects(static_cast<Eigen::Index>(k)))
           << " (|dev| " << num(dev, 3) << " vs 3 MC sd " << num(3.0 * mc, 3) << "); ";
    }
    fs::remove_all(dir);

    const std::string fx = std::string(MVMR_DATA_DIR) + "/fixtures/discovery";
    const auto tables = load_summaries(fx + "/eqtl.tsv", fx + "/gwas.tsv", fx + "/ld.txt");
    const std::string golden = slurp(std::string(MVMR_DATA_DIR) + "/golden/loci_report.json");
    const std::string golden_csv = slurp(std::string(MVMR_DATA_DIR) + "/golden/causal_calls.csv");
    bool same = true;
    for (int th : {1, 1, 4}) {
        PipelineOptions opt;
        opt.threads = th;
        const auto rep = run_pipeline(tables, opt);
        std::ostringstream csv;
        write_calls_csv(rep, csv);
        same = same && report_text(rep, opt) == golden && csv.str() == golden_csv;
    }
    ok = ok && same;
    os << missing << " of " << reps << " replicates missing a call; golden report " << (same ? "byte-identical" : "DIFFERS") << " over runs with 1, 1, 4 threads";
    return {ok, os.str()};
}

} // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    struct Criterion {
        int id;
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Criterion> all{
        {1, "oracle identification", oracle_identification},
        {2, "path-rule equivalence", path_rule},
        {3, "correlated-instrument bias and variance", correlation_robustness},
        {4, "weak-instrument behaviour", weak_instruments},
        {5, "LS vs GMM variance", ls_vs_gmm},
        {6, "pleiotropy bias envelope", pleiotropy_envelope},
        {7, "LD perturbation", ld_perturbation},
        {8, "two-sample convergence", two_sample_convergence},
        {9, "TWMR shrinkage bias", twmr_bias},
        {10, "PC1 explained variance", pc1_law},
        {11, "pipeline round trip and golden determinism", pipeline_round_trip},
    };
    int failures = 0;
    for (const auto& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.id == 1 && secs >= 30.0) o.pass = false;
        if (c.id == 3 && secs >= 120.0) o.pass = false;
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
                  << format_number(secs, 3) << " s]" << std::endl;
    }
    const std::size_t ran = only.empty() ? all.size() : only.size();
    std::cout << (ran - static_cast<std::size_t>(failures)) << "/" << ran << " criteria passed"
              << std::endl;
    return failures;
}
