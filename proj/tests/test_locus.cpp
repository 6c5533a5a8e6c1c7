#include "mvmr/dataset.hpp"
#include "mvmr/locus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

using namespace mvmr;

namespace {

const std::string kFixtures = std::string(MVMR_DATA_DIR) + "/fixtures";

SummaryTables fixture(const std::string& set) {
    const std::string d = kFixtures + "/" + set;
    return load_summaries(d + "/eqtl.tsv", d + "/gwas.tsv", d + "/ld.txt");
}

const LocusDefinition& locus_by_lead_chrom(const LocusBuild& b, const std::string& chrom) {
    for (const auto& l : b.loci)
        if (l.chrom == chrom) return l;
    throw std::runtime_error("no locus on chromosome " + chrom);
}

double effect_of(const LocusAnalysis& a, const std::string& gene, const std::string& tissue) {
    for (const auto& c : a.calls)
        if (c.gene == gene && c.tissue == tissue) return c.effect;
    throw std::runtime_error("no call for " + gene);
}

/// Tiny tables built in code: one SNP per entry, diagonal LD unless given.
struct TinyTables {
    SummaryTables t;

    void snp(const std::string& id, const std::string& chrom, long pos, double gwas_beta, double p) {
        t.gwas.push_back({id, chrom, pos, gwas_beta, 0.01, p, 10000});
        t.ld.index[id] = static_cast<Eigen::Index>(t.ld.ids.size());
        t.ld.ids.push_back(id);
    }
    void eqtl(const std::string& id, const std::string& gene, double beta, double fdr = 1e-4) {
        for (const auto& g : t.gwas)
            if (g.snp == id) t.eqtl.push_back({id, g.chrom, g.pos, gene, "LIV", beta, 0.03, 0.3, fdr});
    }
    void finish(const Matrix& r = Matrix()) {
        const auto L = static_cast<Eigen::Index>(t.ld.ids.size());
        t.ld.r = r.size() ? r : Matrix(Matrix::Identity(L, L));
    }
};

} // namespace

TEST(LocusIo, FixtureCounts) {
    const SummaryTables t = fixture("discovery");
    EXPECT_EQ(t.eqtl.size(), 135u);
    EXPECT_EQ(t.gwas.size(), 35u);
    EXPECT_EQ(t.ld.ids.size(), 34u);
    ASSERT_EQ(t.warnings.size(), 1u);
    EXPECT_NE(t.warnings[0].find("rs0199"), std::string::npos);
}

TEST(LocusIo, MalformedRowReportsLine) {
    std::istringstream in("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
                          "rs1\t1\t100\tG\tLIV\t0.2\t0.03\t0.3\t0.01\n"
                          "rs2\t1\t200\tG\tLIV\tabc\t0.03\t0.3\t0.01\n");
    try {
        read_eqtl(in, "e.tsv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Format);
        EXPECT_NE(std::string(e.what()).find("e.tsv:3"), std::string::npos);
    }
}

TEST(LocusIo, DuplicateRecordRejected) {
    std::istringstream in("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
                          "rs1\t1\t100\tG\tLIV\t0.2\t0.03\t0.3\t0.01\n"
                          "rs1\t1\t100\tG\tLIV\t0.1\t0.03\t0.3\t0.01\n");
    try {
        read_eqtl(in, "e.tsv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Duplicate);
    }
    std::istringstream g("snp\tchrom\tpos\tbeta\tse\tpval\tn\nrs1\t1\t1\t0.1\t0.01\t1e-9\t1000\n"
                         "rs1\t1\t1\t0.1\t0.01\t1e-9\t1000\n");
    EXPECT_THROW(read_gwas(g, "g.tsv"), Error);
}

TEST(LocusIo, EmptyEqtlWarns) {
    std::istringstream in("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n");
    std::vector<std::string> w;
    EXPECT_TRUE(read_eqtl(in, "e.tsv", &w).empty());
    EXPECT_EQ(w.size(), 1u);
    std::istringstream none("");
    EXPECT_TRUE(read_eqtl(none, "e.tsv", &w).empty());
    EXPECT_EQ(w.size(), 2u);
}

TEST(LocusIo, FieldValidation) {
    std::istringstream fdr("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\nrs1\t1\t1\tG\tT\t0.1\t0.1\t0.3\t1.5\n");
    EXPECT_THROW(read_eqtl(fdr, "e"), Error);
    std::istringstream p("snp\tchrom\tpos\tbeta\tse\tpval\tn\nrs1\t1\t1\t0.1\t0.01\t0\t1000\n");
    EXPECT_THROW(read_gwas(p, "g"), Error);
    std::istringstream header("snp\tchrom\tpos\tbeta\tse\tn\nrs1\t1\t1\t0.1\t0.01\t1000\n");
    EXPECT_THROW(read_gwas(header, "g"), Error);
}

TEST(LocusIo, LdShapeAndSymmetry) {
    std::istringstream ok("a b\n1 0.5\n0.5 1\n");
    const LdMatrix ld = read_ld(ok, "ld");
    EXPECT_DOUBLE_EQ(ld("a", "b"), 0.5);
    std::istringstream rows("a b\n1 0.5\n");
    EXPECT_THROW(read_ld(rows, "ld"), Error);
    std::istringstream asym("a b\n1 0.5\n0.4 1\n");
    EXPECT_THROW(read_ld(asym, "ld"), Error);
    std::istringstream cols("a b\n1 0.5 0\n0.5 1\n");
    EXPECT_THROW(read_ld(cols, "ld"), Error);
}

TEST(LocusIo, StandardizedEffectInvertsCorrelationSe) {
    for (double r : {-0.3, 0.01, 0.2}) {
        const GwasRecord g{"x", "1", 1, r, correlation_se(r, 5000), 0.1, 5000};
        EXPECT_NEAR(g.standardized_effect(), r, 1e-15);
    }
}

TEST(BuildLoci, SingleEqtlIsOneLocus) {
    TinyTables tt;
    tt.snp("rs1", "3", 1000, 0.3, 1e-10);
    tt.eqtl("rs1", "G1", 0.2);
    tt.finish();
    const SummaryTables& t = tt.t;
    const TableIndex idx(t);
    const LocusBuild b = build_loci(idx);
    ASSERT_EQ(b.loci.size(), 1u);
    EXPECT_EQ(b.loci[0].instruments, std::vector<std::string>{"rs1"});
    ASSERT_EQ(b.loci[0].tissues.size(), 1u);
    EXPECT_EQ(b.loci[0].tissues[0].genes, std::vector<std::string>{"G1"});
}

TEST(BuildLoci, DistantLeadsAreSeparateLoci) {
    TinyTables tt;
    tt.snp("rs1", "3", 1000, 0.3, 1e-10);
    tt.snp("rs2", "3", 700000, 0.3, 1e-12);
    tt.eqtl("rs1", "G1", 0.2);
    tt.eqtl("rs2", "G2", 0.2);
    tt.finish();
    const TableIndex idx(tt.t);
    const LocusBuild b = build_loci(idx);
    ASSERT_EQ(b.loci.size(), 2u);
    EXPECT_EQ(b.loci[0].lead, "rs1"); // report order is by position
    EXPECT_EQ(b.loci[1].lead, "rs2");
}

TEST(BuildLoci, WithinRadiusButNoLdIsSeparate) {
    TinyTables tt;
    tt.snp("rs1", "3", 1000, 0.3, 1e-10);
    tt.snp("rs2", "3", 2000, 0.3, 1e-9);
    tt.eqtl("rs1", "G1", 0.2);
    tt.eqtl("rs2", "G1", 0.2);
    Matrix r(2, 2);
    r << 1, 0.005, 0.005, 1;
    tt.finish(r);
    const TableIndex idx(tt.t);
    EXPECT_EQ(build_loci(idx).loci.size(), 2u);
    r << 1, 0.3, 0.3, 1;
    tt.t.ld.r = r;
    const TableIndex idx2(tt.t);
    EXPECT_EQ(build_loci(idx2).loci.size(), 1u);
}

TEST(BuildLoci, TiedPValuesBreakByPosition) {
    TinyTables tt;
    tt.snp("rsB", "4", 5000, 0.3, 1e-10);
    tt.snp("rsA", "4", 9000, 0.3, 1e-10);
    tt.eqtl("rsB", "G1", 0.2);
    tt.eqtl("rsA", "G2", 0.2);
    Matrix r(2, 2);
    r << 1, 0.5, 0.5, 1;
    tt.finish(r);
    const TableIndex idx(tt.t);
    const LocusBuild b = build_loci(idx);
    ASSERT_EQ(b.loci.size(), 1u);
    EXPECT_EQ(b.loci[0].lead, "rsB");
}

TEST(BuildLoci, NearDuplicateKeepsSmallerP) {
    TinyTables tt;
    tt.snp("lead", "5", 1000, 0.3, 1e-20);
    tt.snp("weak", "5", 2000, 0.3, 1e-6);
    tt.snp("strong", "5", 3000, 0.3, 1e-9);
    for (const char* s : {"lead", "weak", "strong"}) tt.eqtl(s, "G1", 0.2);
    Matrix r(3, 3);
    r << 1, 0.5, 0.5, 0.5, 1, 0.98, 0.5, 0.98, 1;
    tt.finish(r);
    const TableIndex idx(tt.t);
    const LocusBuild b = build_loci(idx);
    ASSERT_EQ(b.loci.size(), 1u);
    EXPECT_EQ(b.loci[0].instruments, (std::vector<std::string>{"lead", "strong"}));
    ASSERT_EQ(b.loci[0].pruned.size(), 1u);
    EXPECT_EQ(b.loci[0].pruned[0].snp, "weak");
    EXPECT_EQ(b.loci[0].pruned[0].kept, "strong");
    // A per-lead override above r² = 0.9604 keeps both.
    LocusParams p;
    p.prune_overrides["lead"] = 0.97;
    EXPECT_EQ(build_loci(idx, p).loci[0].instruments.size(), 3u);
}

TEST(BuildLoci, PhactrGeometry) {
    const SummaryTables t = fixture("discovery");
    const TableIndex idx(t);
    const LocusBuild b = build_loci(idx);
    const LocusDefinition& l = locus_by_lead_chrom(b, "6");
    EXPECT_EQ(l.members.size(), 15u);
    ASSERT_EQ(l.instruments.size(), 12u);
    ASSERT_EQ(l.pruned.size(), 3u);
    EXPECT_EQ(std::count_if(l.pruned.begin(), l.pruned.end(), [](const auto& p) { return p.reason == "perfect-ld-with-lead"; }), 1);
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < l.instruments.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double r = t.ld(l.instruments[i], l.instruments[j]);
            lo = std::min(lo, r * r);
            hi = std::max(hi, r * r);
        }
    EXPECT_NEAR(lo, 0.17, 1e-9);
    EXPECT_NEAR(hi, 0.86, 1e-9);
    ASSERT_EQ(l.tissues.size(), 1u);
    EXPECT_EQ(l.tissues[0].genes.size(), 5u);
}

TEST(BuildLoci, PartitionAndClosure) {
    const SummaryTables t = fixture("discovery");
    const TableIndex idx(t);
    const LocusBuild b = build_loci(idx);
    EXPECT_EQ(b.loci.size(), 5u);
    for (const auto& g : t.gwas) {
        if (!g.significant()) continue;
        bool eqtl = false;
        for (const auto& r : t.eqtl) eqtl |= r.snp == g.snp && r.significant();
        if (!eqtl) continue;
        int where = 0;
        for (const auto& l : b.loci) where += static_cast<int>(std::count(l.members.begin(), l.members.end(), g.snp));
        for (const auto& d : b.dropped) where += d.snp == g.snp;
        EXPECT_EQ(where, 1) << g.snp;
    }
    ASSERT_EQ(b.dropped.size(), 1u);
    EXPECT_EQ(b.dropped[0].snp, "rs0199");
    for (const auto& l : b.loci) {
        EXPECT_TRUE(l.closed);
        // Brute force: every significant eQTL at an instrument names an exposure.
        for (const auto& r : t.eqtl) {
            if (!r.significant() || std::find(l.instruments.begin(), l.instruments.end(), r.snp) == l.instruments.end())
                continue;
            const auto* te = l.find_tissue(r.tissue);
            ASSERT_NE(te, nullptr);
            EXPECT_NE(std::find(te->genes.begin(), te->genes.end(), r.gene), te->genes.end());
        }
        for (const auto& m : l.members) EXPECT_LE(std::abs(idx.gwas(m)->pos - l.lead_pos), 500000);
    }
    EXPECT_FALSE(locus_by_lead_chrom(b, "1").warnings.empty());
}

TEST(AnalyzeLocus, FixtureEffects) {
    const SummaryTables t = fixture("discovery");
    const TableIndex idx(t);
    const LocusBuild b = build_loci(idx);

    const LocusAnalysis ph = analyze_locus(idx, locus_by_lead_chrom(b, "6"), "AOR");
    ASSERT_EQ(ph.status, "ok");
    EXPECT_NEAR(effect_of(ph, "PHACTR1", "AOR"), 0.19, 1e-9);
    int causal = 0;
    for (const auto& c : ph.calls) {
        causal += c.causal;
        if (c.gene != "PHACTR1") EXPECT_LT(std::abs(c.effect), 0.1);
    }
    EXPECT_EQ(causal, 1);

    const auto& ad = locus_by_lead_chrom(b, "15");
    const LocusAnalysis aor = analyze_locus(idx, ad, "AOR"), mam = analyze_locus(idx, ad, "MAM");
    EXPECT_NEAR(effect_of(aor, "ADAMTS7", "AOR"), 0.18, 1e-9);
    EXPECT_NEAR(effect_of(aor, "CTSH", "AOR"), 0.025, 1e-9);
    EXPECT_NEAR(effect_of(mam, "ADAMTS7", "MAM"), 0.14, 1e-9);
    EXPECT_NEAR(effect_of(mam, "CTSH", "MAM"), -0.058, 1e-9);
    EXPECT_TRUE(aor.calls[0].causal);
    EXPECT_FALSE(aor.calls[1].causal);

    const LocusAnalysis pc = analyze_locus(idx, locus_by_lead_chrom(b, "1"), "VAF");
    ASSERT_EQ(pc.calls.size(), 1u);
    EXPECT_NEAR(pc.calls[0].effect, 0.099, 1e-9);
    EXPECT_FALSE(pc.calls[0].causal);
}

TEST(AnalyzeLocus, MultiTissuePairs) {
    const SummaryTables t = fixture("discovery");
    const TableIndex idx(t);
    const LocusBuild b = build_loci(idx);
    const auto& l = locus_by_lead_chrom(b, "19");
    const LocusAnalysis m = multi_tissue_analysis(idx, l, {});
    ASSERT_EQ(m.status, "ok");
    EXPECT_NEAR(effect_of(m, "CARM1", "SKLM"), 0.18, 1e-9);
    EXPECT_NEAR(effect_of(m, "RGL3", "LIV"), -0.19, 1e-9);
    EXPECT_NEAR(effect_of(m, "CARM1", "SF"), -0.02, 1e-9);
    EXPECT_NEAR(effect_of(m, "SMARCA4", "LIV"), -0.01, 1e-9);
    const auto cls = classify_causal(m.calls);
    EXPECT_EQ(cls.counts.size(), 3u);
    int causal = 0;
    for (const auto& c : cls.calls) causal += c.causal;
    EXPECT_EQ(causal, 2);

    // All pairs in one tissue reduce to the per-tissue analysis.
    const LocusAnalysis liv = analyze_locus(idx, l, "LIV");
    const LocusAnalysis same = multi_tissue_analysis(idx, l, {{"RGL3", "LIV"}, {"SMARCA4", "LIV"}});
    ASSERT_EQ(liv.calls.size(), same.calls.size());
    for (std::size_t k = 0; k < liv.calls.size(); ++k) EXPECT_EQ(liv.calls[k].effect, same.calls[k].effect);
    EXPECT_THROW(multi_tissue_analysis(idx, l, {{"PCSK9", "LIV"}}), Error);
}

TEST(AnalyzeLocus, NonIdentifiable) {
    const SummaryTables t = fixture("discovery");
    const TableIndex idx(t);
    const LocusBuild b = build_loci(idx);
    const LocusAnalysis a = analyze_locus(idx, locus_by_lead_chrom(b, "2"), "LIV");
    EXPECT_EQ(a.status, "non-identifiable");
    EXPECT_TRUE(a.calls.empty());
    ASSERT_TRUE(a.diagnostics.has_value());
    EXPECT_EQ(a.diagnostics->rank_EX, 1);
    EXPECT_NE(a.message.find("determinant"), std::string::npos);

    // More exposures than instruments.
    TinyTables tt;
    tt.snp("rs1", "3", 1000, 0.3, 1e-10);
    tt.eqtl("rs1", "G1", 0.2);
    tt.eqtl("rs1", "G2", 0.3);
    tt.finish();
    const TableIndex i2(tt.t);
    const LocusBuild b2 = build_loci(i2);
    EXPECT_FALSE(b2.loci[0].tissues[0].identifiable);
    EXPECT_EQ(analyze_locus(i2, b2.loci[0], "LIV").status, "non-identifiable");
}

TEST(Classify, Thresholds) {
    std::vector<CausalGeneCall> calls{{"l", "PHACTR1", "AOR", 0.19, 0.01, 1e-5},
                                      {"l", "PCSK9", "VAF", 0.099, 0.01, 1e-3},
                                      {"l", "PLG", "LIV", -0.27, 0.1, 0.01},
                                      {"l", "X", "LIV", 0.1, 0.1, 0.3}};
    const auto r = classify_causal(calls);
    EXPECT_TRUE(r.calls[0].causal);
    EXPECT_TRUE(r.calls[0].bonferroni);
    EXPECT_FALSE(r.calls[1].causal);
    EXPECT_TRUE(r.calls[2].causal);
    EXPECT_FALSE(r.calls[2].bonferroni);
    EXPECT_TRUE(r.calls[3].causal);
    ASSERT_EQ(r.counts.size(), 3u);
    EXPECT_EQ(r.counts[2].total, 2u);
    EXPECT_EQ(r.counts[2].causal, 2u);
}

TEST(Pipeline, DeterministicAcrossThreads) {
    const SummaryTables t = fixture("discovery");
    PipelineOptions o1, o4;
    o4.threads = 4;
    const PipelineReport a = run_pipeline(t, o1), b = run_pipeline(t, o4);
    std::ostringstream ca, cb;
    write_calls_csv(a, ca);
    write_calls_csv(b, cb);
    EXPECT_TRUE(ca.str() == cb.str());
    EXPECT_TRUE(pipeline_json(a, o1).dump(2) == pipeline_json(b, o4).dump(2));
    EXPECT_EQ(a.build.loci.front().chrom, "1");
    EXPECT_EQ(a.build.loci.back().chrom, "19");
}

TEST(Pipeline, EmptySignificantSet) {
    TinyTables tt;
    tt.snp("rs1", "3", 1000, 0.3, 0.2);
    tt.eqtl("rs1", "G1", 0.2);
    tt.finish();
    const PipelineReport r = run_pipeline(tt.t);
    EXPECT_TRUE(r.build.loci.empty());
    EXPECT_FALSE(r.warnings.empty());
}

TEST(Pipeline, Replication) {
    const PipelineReport d = run_pipeline(fixture("discovery")), r = run_pipeline(fixture("replication"));
    const auto rows = replication_table(d.tissue_calls(), r.tissue_calls());
    bool found = false;
    for (const auto& row : rows)
        if (row.gene == "PHACTR1") {
            found = true;
            ASSERT_TRUE(row.discovery && row.replication);
            EXPECT_NEAR(row.discovery->effect, 0.19, 1e-9);
            EXPECT_NEAR(row.replication->effect, 0.16, 1e-9);
        }
    EXPECT_TRUE(found);
    std::ostringstream os;
    write_replication_csv(rows, os);
    EXPECT_EQ(os.str().rfind("gene,tissue,effect_discovery", 0), 0u);
}

TEST(Pipeline, RoundTripFromSimulatedSummaries) {
    PopulationModel m;
    m.genotypes = GenotypeModel{{0.3, 0.25, 0.35, 0.3}, {0.5, 0.4, 0.6}};
    m.A = Matrix::Zero(4, 2);
    m.A << 0.3, 0.05, 0.1, 0.0, 0.0, 0.25, 0.05, 0.2;
    m.effects = Vector(2);
    m.effects << 0.2, -0.3;
    const Dataset d = generate_dataset(m, 5000, 17u);
    SnpLayout layout;
    layout.snps = {"s1", "s2", "s3", "s4"};
    layout.positions = {1000, 2000, 3000, 4000};
    layout.mafs = {0.3, 0.25, 0.35, 0.3};
    layout.genes = {"X1", "X2"};
    const SummaryTables t = tables_from_statistics(d.stats, layout);
    const PipelineReport rep = run_pipeline(t);
    ASSERT_EQ(rep.build.loci.size(), 1u);
    const auto calls = rep.tissue_calls();
    ASSERT_EQ(calls.size(), 2u);
    const Vector direct = ls_estimate(d.stats).effects;
    EXPECT_NEAR(calls[0].effect, direct(0), 1e-9);
    EXPECT_NEAR(calls[1].effect, direct(1), 1e-9);
}
