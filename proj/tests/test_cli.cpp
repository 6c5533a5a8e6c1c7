#include "mvmr/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace mvmr;
namespace fs = std::filesystem;

namespace {

const std::string kData = MVMR_DATA_DIR;
const std::string kDisc = kData + "/fixtures/discovery";

struct Run {
    int code = 0;
    std::string out, err;
};

Run invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "mvmr");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mvmr_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

json read(const fs::path& p) { return json::parse(slurp(p)); }

} // namespace

TEST(Simulate, RepeatRunsAreByteIdentical) {
    const auto a = scratch("sim_a"), b = scratch("sim_b");
    auto r1 = invoke({"simulate", "--scenario", "fig2_corr.json", "--seed", "7", "--replicates", "20", "--out", a.string()});
    auto r2 = invoke({"simulate", "--scenario", "fig2_corr.json", "--seed", "7", "--replicates", "20", "--threads", "3",
                   "--out", b.string()});
    ASSERT_EQ(r1.code, 0) << r1.err;
    ASSERT_EQ(r2.code, 0) << r2.err;
    EXPECT_EQ(slurp(a / "fig2_corr_replicates.csv"), slurp(b / "fig2_corr_replicates.csv"));
    EXPECT_EQ(slurp(a / "fig2_corr_summary.json"), slurp(b / "fig2_corr_summary.json"));
    EXPECT_EQ(r1.out, r2.out);
    EXPECT_NE(r1.out.find("fig2_corr ls:"), std::string::npos);
}

TEST(Simulate, DistributionFileHasPanelColumns) {
    const auto d = scratch("sim_cols");
    ASSERT_EQ(invoke({"simulate", "--scenario", "fig2_corr.json", "--seed", "1", "--replicates", "2", "--out", d.string()})
                  .code,
              0);
    std::istringstream csv(slurp(d / "fig2_corr_replicates.csv"));
    std::string header;
    std::getline(csv, header);
    for (const char* col : {"correlation", "n", "estimate", "exposure"})
        EXPECT_NE(("," + header + ",").find(std::string(",") + col + ","), std::string::npos) << col;
}

TEST(Simulate, MissingSeedIsUsageError) {
    auto r = invoke({"simulate", "--scenario", "fig2_corr.json"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("seed"), std::string::npos);
}

TEST(Simulate, InvalidScenarioExitsTwo) {
    const auto d = scratch("sim_bad");
    spit(d / "bad.json", R"({"name": "bad", "effects": [0.2], "genotypes": {"mafs": [0.3]}, "colour": 1})");
    auto r = invoke({"simulate", "--scenario", (d / "bad.json").string(), "--seed", "1", "--out", d.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST(Simulate, OutputDirectoryFromEnvironment) {
    const auto d = scratch("sim_env");
    ::setenv(cli::kOutputDirEnv, d.string().c_str(), 1);
    auto r = invoke({"simulate", "--scenario", "s8_pc1.json", "--seed", "3", "--replicates", "2"});
    ::unsetenv(cli::kOutputDirEnv);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(d / (read(d / "s8_pc1_summary.json").at("scenario").get<std::string>() + "_summary.json")));
}

TEST(Estimate, IdentityToy) {
    const auto d = scratch("est_toy");
    auto r = invoke({"estimate", "--summary", kData + "/summaries/identity_toy.json", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read(d / "estimate.json");
    for (const auto& e : j.at("estimators")) {
        EXPECT_NEAR(e.at("effects")[0].get<double>(), 0.2, 1e-12);
        EXPECT_NEAR(e.at("effects")[1].get<double>(), 0.6, 1e-12);
    }
    EXPECT_EQ(j.at("status"), "ok");
}

TEST(Estimate, DiagramPopulationRecovery) {
    const auto d = scratch("est_pop");
    auto r = invoke({"estimate", "--diagram", kData + "/diagrams/two_causal_variants.txt", "--estimator", "ls,gmm",
                  "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read(d / "estimate.json");
    EXPECT_TRUE(j.at("identification").at("valid").get<bool>());
    for (const auto& e : j.at("estimators")) EXPECT_LT(e.at("max_abs_error").get<double>(), 1e-10);
    EXPECT_NEAR(j.at("truth")[1].get<double>(), 0.6, 1e-12);
}

TEST(Estimate, SharedCausalVariantIsNonIdentifiable) {
    const auto d = scratch("est_ni");
    auto r = invoke({"estimate", "--diagram", kData + "/diagrams/one_causal_variant.txt", "--out", d.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("rank(Sigma_EX) = 1 of 2"), std::string::npos) << r.err;
    EXPECT_EQ(read(d / "estimate.json").at("status"), "non-identifiable");
}

TEST(Estimate, FewerInstrumentsThanExposures) {
    const auto d = scratch("est_under");
    spit(d / "s.json", R"({"sigma_EX": [[0.3, 0.2]], "sigma_EY": [0.1]})");
    EXPECT_EQ(invoke({"estimate", "--summary", (d / "s.json").string(), "--out", d.string()}).code, 3);
}

TEST(Estimate, UnknownSummaryKeyIsError) {
    const auto d = scratch("est_key");
    spit(d / "s.json", R"({"sigma_EX": [[0.3]], "sigma_EY": [0.1], "sigma_XX": 1})");
    auto r = invoke({"estimate", "--summary", (d / "s.json").string(), "--out", d.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("sigma_XX"), std::string::npos);
}

TEST(Loci, GoldenReportAcrossThreadCounts) {
    for (const char* threads : {"1", "2", "5"}) {
        const auto d = scratch(std::string("loci_golden_") + threads);
        auto r = invoke({"loci", "--eqtl", kDisc + "/eqtl.tsv", "--gwas", kDisc + "/gwas.tsv", "--ld", kDisc + "/ld.txt",
                      "--threads", threads, "--out", d.string()});
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_EQ(slurp(d / "loci_report.json"), slurp(kData + "/golden/loci_report.json")) << threads;
        EXPECT_EQ(slurp(d / "causal_calls.csv"), slurp(kData + "/golden/causal_calls.csv")) << threads;
    }
}

TEST(Loci, EmptySignificantSetWarns) {
    const auto d = scratch("loci_empty");
    spit(d / "gwas.tsv", "snp\tchrom\tpos\tbeta\tse\tpval\tn\nrs0100\t1\t55000000\t0.001\t0.003\t0.7\t100000\n");
    auto r = invoke({"loci", "--eqtl", kDisc + "/eqtl.tsv", "--gwas", (d / "gwas.tsv").string(), "--ld",
                  kDisc + "/ld.txt", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(read(d / "loci_report.json").at("loci").empty());
    EXPECT_NE(r.err.find("empty report"), std::string::npos);
}

TEST(Loci, MalformedTsvReportsLine) {
    const auto d = scratch("loci_bad");
    spit(d / "gwas.tsv", "snp\tchrom\tpos\tbeta\tse\tpval\tn\nrs0100\t1\t55000000\t0.01\t0.003\t1e-9\t100000\n"
                         "rs0101\t1\tnotapos\t0.01\t0.003\t1e-9\t100000\n");
    auto r = invoke({"loci", "--eqtl", kDisc + "/eqtl.tsv", "--gwas", (d / "gwas.tsv").string(), "--ld",
                  kDisc + "/ld.txt", "--out", d.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(":3:"), std::string::npos) << r.err;
}

TEST(Loci, UnknownConfigKeyIsError) {
    const auto d = scratch("loci_cfg");
    spit(d / "cfg.json", R"({"prune_r2": 0.9, "prune_r": 0.9})");
    auto r = invoke({"loci", "--eqtl", kDisc + "/eqtl.tsv", "--gwas", kDisc + "/gwas.tsv", "--ld", kDisc + "/ld.txt",
                  "--config", (d / "cfg.json").string(), "--out", d.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("prune_r"), std::string::npos);
}

TEST(Loci, ConfigThresholdOutOfRange) {
    const auto d = scratch("loci_range");
    spit(d / "cfg.json", R"({"bonferroni": 2.0})");
    EXPECT_EQ(invoke({"loci", "--eqtl", kDisc + "/eqtl.tsv", "--gwas", kDisc + "/gwas.tsv", "--ld", kDisc + "/ld.txt",
                   "--config", (d / "cfg.json").string(), "--out", d.string()})
                  .code,
              2);
}

TEST(Loci, ReplicationTable) {
    const std::string rep = kData + "/fixtures/replication";
    const auto d = scratch("loci_rep");
    auto r = invoke({"loci", "--eqtl", kDisc + "/eqtl.tsv", "--gwas", kDisc + "/gwas.tsv", "--ld", kDisc + "/ld.txt",
                  "--replication-eqtl", rep + "/eqtl.tsv", "--replication-gwas", rep + "/gwas.tsv",
                  "--replication-ld", rep + "/ld.txt", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(d / "replication.csv");
    EXPECT_NE(csv.find("PHACTR1,AOR,0.19,0.16,1,1"), std::string::npos) << csv;
}

TEST(Help, DocumentsEveryConfigKey) {
    auto loci = invoke({"loci", "--help"});
    EXPECT_EQ(loci.code, 0);
    for (const char* key : {"radius_bp", "gwas_p", "eqtl_fdr", "prune_r2", "perfect_r2", "min_abs_r", "prune_overrides",
                            "estimator", "twmr_alpha", "causal_threshold", "bonferroni", "det_pass", "det_fail",
                            "det_measure", "multi_tissue"})
        EXPECT_NE(loci.out.find(key), std::string::npos) << key;
    auto sim = invoke({"simulate", "--help"});
    for (const char* key : {"design", "replicates", "estimators", "genotypes", "instrument_effects", "grid",
                            "hidden_exposures", "failure_cap", "moment_check_every"})
        EXPECT_NE(sim.out.find(key), std::string::npos) << key;
}

TEST(Figures, RunsSelectedScenarios) {
    const auto d = scratch("figures");
    auto r = invoke({"figures", "--seed", "11", "--replicates", "2", "--only", "s8_pc1,fig2_corr", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto idx = read(d / "figures.json");
    EXPECT_EQ(idx.at("scenarios").size(), 2u);
    for (const auto& s : idx.at("scenarios")) EXPECT_TRUE(fs::exists(d / s.at("replicate_csv").get<std::string>()));
    EXPECT_EQ(invoke({"figures", "--replicates", "2"}).code, 2);
}
