#pragma once

#include "mvmr/error.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/summary_stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace mvmr {

inline constexpr double kEqtlFdrThreshold = 0.05;
inline constexpr double kGwasSignificance = 5e-8;

/// One eQTL association. `beta` is on the standardized scale, i.e. the
/// genotype-expression correlation.
struct EqtlRecord {
    std::string snp;
    std::string chrom;
    long pos = 0;
    std::string gene;
    std::string tissue;
    double beta = 0.0;
    double se = 0.0;
    double maf = 0.0;
    double fdr = 1.0;

    bool significant(double threshold = kEqtlFdrThreshold) const { return fdr < threshold; }
};

struct GwasRecord {
    std::string snp;
    std::string chrom;
    long pos = 0;
    double beta = 0.0; // log-odds per allele for a binary trait
    double se = 0.0;
    double pval = 1.0;
    double n = 0.0;

    bool significant(double threshold = kGwasSignificance) const { return pval < threshold; }

    /// Genotype-outcome correlation implied by the z-statistic:
    /// z / sqrt(z² + n - 2), the inverse of z = r sqrt(n - 2) / sqrt(1 - r²).
    double standardized_effect() const {
        const double z = beta / se;
        return z / std::sqrt(z * z + n - 2.0);
    }
};

/// Square r (not r²) matrix with SNP ids.
struct LdMatrix {
    std::vector<std::string> ids;
    Matrix r;
    std::map<std::string, Eigen::Index> index;

    bool contains(const std::string& snp) const { return index.count(snp) > 0; }
    Eigen::Index at(const std::string& snp) const {
        const auto it = index.find(snp);
        if (it == index.end()) fail(ErrorKind::Lookup, "SNP '" + snp + "' is not in the LD matrix");
        return it->second;
    }
    double operator()(const std::string& a, const std::string& b) const { return r(at(a), at(b)); }
};

struct SummaryTables {
    std::vector<EqtlRecord> eqtl;
    std::vector<GwasRecord> gwas;
    LdMatrix ld;
    std::vector<std::string> warnings;
};

/// Chromosome order: numeric labels numerically, then the rest as strings.
inline bool chrom_less(const std::string& a, const std::string& b) {
    auto strip = [](const std::string& c) { return c.rfind("chr", 0) == 0 ? c.substr(3) : c; };
    const std::string x = strip(a), y = strip(b);
    long nx = 0, ny = 0;
    const auto [px, ex] = std::from_chars(x.data(), x.data() + x.size(), nx);
    const auto [py, ey] = std::from_chars(y.data(), y.data() + y.size(), ny);
    const bool dx = ex == std::errc{} && px == x.data() + x.size();
    const bool dy = ey == std::errc{} && py == y.data() + y.size();
    if (dx && dy) return nx < ny;
    if (dx != dy) return dx;
    return x < y;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    for (std::string t; is >> t;) out.push_back(t);
    return out;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

[[noreturn]] inline void parse_fail(const std::string& where, std::size_t line, const std::string& msg) {
    fail(ErrorKind::Format, where + ":" + std::to_string(line) + ": " + msg);
}

inline double parse_double(const std::string& s, const std::string& where, std::size_t line, const char* col) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
        parse_fail(where, line, std::string("bad number '") + s + "' in column " + col);
    return v;
}

inline long parse_long(const std::string& s, const std::string& where, std::size_t line, const char* col) {
    long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || v < 0)
        parse_fail(where, line, std::string("bad integer '") + s + "' in column " + col);
    return v;
}

/// Calls `row(fields, line)` with the `required` columns of every non-blank
/// data row. Returns false when the input has no header line.
template <class Row>
bool read_tsv(std::istream& in, const std::string& where, const std::vector<std::string>& required, Row&& row) {
    std::string line;
    std::size_t n = 0;
    std::vector<std::size_t> pos;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        line = strip_cr(line);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto f = split_tabs(line);
        if (!header) {
            for (const auto& name : required) {
                const auto it = std::find(f.begin(), f.end(), name);
                if (it == f.end()) parse_fail(where, n, "header lacks column '" + name + "'");
                pos.push_back(static_cast<std::size_t>(it - f.begin()));
            }
            header = true;
            continue;
        }
        std::vector<std::string> picked;
        for (auto p : pos) {
            if (p >= f.size()) parse_fail(where, n, "expected " + std::to_string(pos.size()) + " columns");
            picked.push_back(f[p]);
        }
        row(picked, n);
    }
    return header;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open '" + path + "'");
    return in;
}

} // namespace detail

/// Parses eQTL rows; duplicate (snp, gene, tissue) keys are errors.
inline std::vector<EqtlRecord> read_eqtl(std::istream& in, const std::string& where,
                                         std::vector<std::string>* warnings = nullptr) {
    std::vector<EqtlRecord> out;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    const bool header =
        detail::read_tsv(in, where, {"snp", "chrom", "pos", "gene", "tissue", "beta", "se", "maf", "fdr"},
                         [&](const std::vector<std::string>& f, std::size_t line) {
                             EqtlRecord r;
                             r.snp = f[0];
                             r.chrom = f[1];
                             r.pos = detail::parse_long(f[2], where, line, "pos");
                             r.gene = f[3];
                             r.tissue = f[4];
                             r.beta = detail::parse_double(f[5], where, line, "beta");
                             r.se = detail::parse_double(f[6], where, line, "se");
                             r.maf = detail::parse_double(f[7], where, line, "maf");
                             r.fdr = detail::parse_double(f[8], where, line, "fdr");
                             if (r.snp.empty() || r.gene.empty() || r.tissue.empty())
                                 detail::parse_fail(where, line, "empty identifier");
                             if (!(r.se > 0.0)) detail::parse_fail(where, line, "se must be positive");
                             if (!(r.maf > 0.0 && r.maf < 1.0)) detail::parse_fail(where, line, "maf outside (0, 1)");
                             if (!(r.fdr >= 0.0 && r.fdr <= 1.0)) detail::parse_fail(where, line, "fdr outside [0, 1]");
                             if (!(std::abs(r.beta) < 1.0))
                                 detail::parse_fail(where, line, "standardized beta must lie in (-1, 1)");
                             if (!seen.insert({r.snp, r.gene, r.tissue}).second)
                                 fail(ErrorKind::Duplicate, where + ":" + std::to_string(line) + ": duplicate record (" +
                                                                r.snp + ", " + r.gene + ", " + r.tissue + ")");
                             out.push_back(std::move(r));
                         });
    if (out.empty() && warnings) warnings->push_back(where + ": no eQTL records" + (header ? "" : " (empty file)"));
    return out;
}

inline std::vector<GwasRecord> read_gwas(std::istream& in, const std::string& where,
                                         std::vector<std::string>* warnings = nullptr) {
    std::vector<GwasRecord> out;
    std::set<std::string> seen;
    const bool header = detail::read_tsv(
        in, where, {"snp", "chrom", "pos", "beta", "se", "pval", "n"},
        [&](const std::vector<std::string>& f, std::size_t line) {
            GwasRecord r;
            r.snp = f[0];
            r.chrom = f[1];
            r.pos = detail::parse_long(f[2], where, line, "pos");
            r.beta = detail::parse_double(f[3], where, line, "beta");
            r.se = detail::parse_double(f[4], where, line, "se");
            r.pval = detail::parse_double(f[5], where, line, "pval");
            r.n = detail::parse_double(f[6], where, line, "n");
            if (r.snp.empty()) detail::parse_fail(where, line, "empty identifier");
            if (!(r.se > 0.0)) detail::parse_fail(where, line, "se must be positive");
            if (!(r.pval > 0.0 && r.pval <= 1.0)) detail::parse_fail(where, line, "pval outside (0, 1]");
            if (!(r.n > 2.0)) detail::parse_fail(where, line, "n must exceed 2");
            if (!seen.insert(r.snp).second)
                fail(ErrorKind::Duplicate, where + ":" + std::to_string(line) + ": duplicate SNP " + r.snp);
            out.push_back(std::move(r));
        });
    if (out.empty() && warnings) warnings->push_back(where + ": no GWAS records" + (header ? "" : " (empty file)"));
    return out;
}

inline LdMatrix read_ld(std::istream& in, const std::string& where) {
    LdMatrix ld;
    std::string line;
    std::size_t n = 0;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++n;
        const auto f = detail::split_ws(line);
        if (f.empty()) continue;
        if (ld.ids.empty()) {
            ld.ids = f;
            for (std::size_t i = 0; i < f.size(); ++i)
                if (!ld.index.emplace(f[i], static_cast<Eigen::Index>(i)).second)
                    fail(ErrorKind::Duplicate, where + ":" + std::to_string(n) + ": duplicate SNP id " + f[i]);
            continue;
        }
        if (f.size() != ld.ids.size())
            detail::parse_fail(where, n, "row has " + std::to_string(f.size()) + " values, expected " +
                                             std::to_string(ld.ids.size()));
        std::vector<double> row;
        for (const auto& t : f) row.push_back(detail::parse_double(t, where, n, "r"));
        rows.push_back(std::move(row));
    }
    if (ld.ids.empty()) fail(ErrorKind::Format, where + ": LD file has no SNP ids");
    const auto L = static_cast<Eigen::Index>(ld.ids.size());
    if (static_cast<Eigen::Index>(rows.size()) != L)
        fail(ErrorKind::Format, where + ": LD matrix is not square (" + std::to_string(rows.size()) + " rows for " +
                                    std::to_string(L) + " ids)");
    ld.r.resize(L, L);
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index j = 0; j < L; ++j) ld.r(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < L; ++i) {
        if (std::abs(ld.r(i, i) - 1.0) > 1e-8) fail(ErrorKind::Format, where + ": LD diagonal must be 1 at " + ld.ids[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < i; ++j) {
            if (std::abs(ld.r(i, j) - ld.r(j, i)) > 1e-8)
                fail(ErrorKind::Format, where + ": LD matrix is not symmetric at (" + ld.ids[static_cast<std::size_t>(i)] +
                                            ", " + ld.ids[static_cast<std::size_t>(j)] + ")");
            if (std::abs(ld.r(i, j)) > 1.0) fail(ErrorKind::Format, where + ": |r| above 1");
        }
    }
    return ld;
}

/// Loads the three inputs and cross-references them by SNP id. Alleles are
/// assumed harmonized upstream.
inline SummaryTables load_summaries(const std::string& eqtl_path, const std::string& gwas_path,
                                    const std::string& ld_path) {
    SummaryTables t;
    {
        auto in = detail::open_input(eqtl_path);
        t.eqtl = read_eqtl(in, eqtl_path, &t.warnings);
    }
    {
        auto in = detail::open_input(gwas_path);
        t.gwas = read_gwas(in, gwas_path, &t.warnings);
    }
    {
        auto in = detail::open_input(ld_path);
        t.ld = read_ld(in, ld_path);
    }
    std::set<std::string> missing_ld, missing_gwas, gw;
    for (const auto& g : t.gwas) gw.insert(g.snp);
    for (const auto& r : t.eqtl) {
        if (!t.ld.contains(r.snp)) missing_ld.insert(r.snp);
        if (!gw.count(r.snp)) missing_gwas.insert(r.snp);
    }
    for (const auto& s : missing_ld) t.warnings.push_back("eQTL SNP " + s + " is missing from the LD matrix");
    for (const auto& s : missing_gwas) t.warnings.push_back("eQTL SNP " + s + " has no GWAS record");
    return t;
}

inline void write_eqtl(const std::vector<EqtlRecord>& rows, std::ostream& os) {
    os << "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n";
    for (const auto& r : rows)
        os << r.snp << '\t' << r.chrom << '\t' << r.pos << '\t' << r.gene << '\t' << r.tissue << '\t'
           << format_number(r.beta, 17) << '\t' << format_number(r.se, 17) << '\t' << format_number(r.maf, 6) << '\t'
           << format_number(r.fdr, 6) << '\n';
}

inline void write_gwas(const std::vector<GwasRecord>& rows, std::ostream& os) {
    os << "snp\tchrom\tpos\tbeta\tse\tpval\tn\n";
    for (const auto& r : rows)
        os << r.snp << '\t' << r.chrom << '\t' << r.pos << '\t' << format_number(r.beta, 17) << '\t'
           << format_number(r.se, 17) << '\t' << format_number(r.pval, 6) << '\t' << format_number(r.n, 17) << '\n';
}

inline void write_ld(const LdMatrix& ld, std::ostream& os) {
    for (std::size_t i = 0; i < ld.ids.size(); ++i) os << (i ? " " : "") << ld.ids[i];
    os << '\n';
    for (Eigen::Index i = 0; i < ld.r.rows(); ++i) {
        for (Eigen::Index j = 0; j < ld.r.cols(); ++j) os << (j ? " " : "") << format_number(ld.r(i, j), 17);
        os << '\n';
    }
}

/// SE of a correlation estimate r from n observations.
inline double correlation_se(double r, double n) { return std::sqrt((1.0 - r * r) / (n - 2.0)); }

inline double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// Benjamini-Hochberg adjusted p-values.
inline std::vector<double> bh_adjust(const std::vector<double>& p) {
    std::vector<std::size_t> order(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    std::vector<double> q(p.size());
    double running = 1.0;
    for (std::size_t k = order.size(); k-- > 0;) {
        running = std::min(running, p[order[k]] * static_cast<double>(p.size()) / static_cast<double>(k + 1));
        q[order[k]] = running;
    }
    return q;
}

/// Layout used to write summary statistics as eQTL/GWAS/LD tables.
struct SnpLayout {
    std::vector<std::string> snps;
    std::string chrom = "1";
    std::vector<long> positions;
    std::vector<double> mafs;
    std::vector<std::string> genes;
    std::string tissue = "sim";
};

/// Tables whose pipeline analysis reproduces `s`: eQTL beta = Σ_EX, GWAS
/// beta = Σ_EY with correlation SEs, LD = Σ_EE.
inline SummaryTables tables_from_statistics(const SummaryStatistics& s, const SnpLayout& layout) {
    const auto L = s.instruments(), K = s.exposures();
    if (static_cast<Eigen::Index>(layout.snps.size()) != L || static_cast<Eigen::Index>(layout.positions.size()) != L ||
        static_cast<Eigen::Index>(layout.mafs.size()) != L || static_cast<Eigen::Index>(layout.genes.size()) != K)
        fail(ErrorKind::Argument, "layout does not match the summary statistics");
    if (!(s.n_exposure > 2.0 && s.n_outcome > 2.0)) fail(ErrorKind::Argument, "sample sizes above 2 required");
    SummaryTables t;
    std::vector<double> p;
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index k = 0; k < K; ++k) {
            EqtlRecord r;
            const auto ii = static_cast<std::size_t>(i);
            r.snp = layout.snps[ii];
            r.chrom = layout.chrom;
            r.pos = layout.positions[ii];
            r.gene = layout.genes[static_cast<std::size_t>(k)];
            r.tissue = layout.tissue;
            r.beta = s.sigma_EX(i, k);
            r.se = correlation_se(r.beta, s.n_exposure);
            r.maf = layout.mafs[ii];
            p.push_back(two_sided_p(r.beta / r.se));
            t.eqtl.push_back(r);
        }
    const auto q = bh_adjust(p);
    for (std::size_t i = 0; i < q.size(); ++i) t.eqtl[i].fdr = q[i];
    for (Eigen::Index i = 0; i < L; ++i) {
        GwasRecord g;
        const auto ii = static_cast<std::size_t>(i);
        g.snp = layout.snps[ii];
        g.chrom = layout.chrom;
        g.pos = layout.positions[ii];
        g.beta = s.sigma_EY(i);
        g.se = correlation_se(g.beta, s.n_outcome);
        g.pval = std::max(two_sided_p(g.beta / g.se), 1e-300);
        g.n = s.n_outcome;
        t.gwas.push_back(g);
    }
    t.ld.ids = layout.snps;
    t.ld.r = s.sigma_EE;
    for (std::size_t i = 0; i < layout.snps.size(); ++i) t.ld.index[layout.snps[i]] = static_cast<Eigen::Index>(i);
    return t;
}

} // namespace mvmr
