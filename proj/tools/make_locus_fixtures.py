#!/usr/bin/env python3
"""Writes the synthetic eQTL/GWAS/LD fixture sets under data/fixtures/.

Each locus is a population-level construction: Sigma_EX = R A (or an
explicit matrix), Sigma_EY = Sigma_EX c, so least squares on the written
tables returns c up to rounding. Run from the repository root.
"""

import argparse
import math
import os

import numpy as np

N_EQTL = 10000
N_GWAS = 100000


def corr_se(r, n):
    return math.sqrt((1.0 - r * r) / (n - 2.0))


def two_sided_p(z):
    return math.erfc(abs(z) / math.sqrt(2.0))


def bh(p):
    p = np.asarray(p)
    order = np.argsort(p, kind="stable")
    q = np.empty_like(p)
    running = 1.0
    m = len(p)
    for k in range(m - 1, -1, -1):
        running = min(running, p[order[k]] * m / (k + 1))
        q[order[k]] = running
    return q


def markov_ld(rs):
    L = len(rs) + 1
    R = np.eye(L)
    for i in range(L):
        for j in range(i + 1, L):
            R[i, j] = R[j, i] = float(np.prod(rs[i:j]))
    return R


def add_duplicate(R, j, a):
    """Appends a SNP equal to a * snp_j + sqrt(1 - a^2) * independent noise."""
    L = R.shape[0]
    out = np.eye(L + 1)
    out[:L, :L] = R
    out[L, :L] = out[:L, L] = a * R[j, :]
    out[L, L] = 1.0
    return out


def normalized_gram_det(ex):
    g = ex.T @ ex
    d = 1.0 / np.sqrt(np.diag(g))
    return float(np.linalg.det(d[:, None] * g * d[None, :]))


class Locus:
    def __init__(self, name, chrom, start, snps, R):
        self.name = name
        self.chrom = chrom
        self.snps = snps
        self.pos = [start + 10000 * i for i in range(len(snps))]
        self.R = R
        self.exposures = []  # (gene, tissue, column of Sigma_EX)
        self.sigma_ey = None
        self.mafs = [0.2 + 0.25 * ((7 * i) % 11) / 10.0 for i in range(len(snps))]

    def set_exposures(self, pairs, ex, c):
        self.exposures = [(g, t, ex[:, k]) for k, (g, t) in enumerate(pairs)]
        self.sigma_ey = ex @ np.asarray(c)


def phactr1(effects):
    # Twelve instruments with one-factor LD: r_ij = l_i l_j gives mutual r² from
    # l_min^4 = 0.17 to l_max^4 = 0.86.
    lo, hi = 0.17 ** 0.25, 0.86 ** 0.25
    load = np.array([lo, lo] + list(np.linspace(0.7, 0.93, 8)) + [hi, hi])
    R = np.outer(load, load)
    np.fill_diagonal(R, 1.0)
    A = np.zeros((12, 5))
    causal = {0: [(5, -0.33), (10, 0.28)], 1: [(0, 0.31), (1, -0.30)], 2: [(8, 0.24), (11, -0.22)],
              3: [(7, 0.31), (9, -0.30)], 4: [(3, 0.22), (4, 0.32)]}
    for k, rows in causal.items():
        for i, a in rows:
            A[i, k] = a
    ex = R @ A
    c = np.asarray(effects)
    ey = ex @ c
    lead = int(np.argmax(np.abs(ey)))
    # Perfect-LD copy of the lead and two near-duplicates (r = 0.98).
    R2 = add_duplicate(R, lead, 0.997)
    R2 = add_duplicate(R2, 6, 0.98)
    R2 = add_duplicate(R2, 8, 0.98)
    ex2 = np.vstack([ex, 0.997 * ex[lead], 0.98 * ex[6], 0.98 * ex[8]])
    snps = [f"rs69{i:02d}" for i in range(15)]
    loc = Locus("PHACTR1", "6", 12_800_000, snps, R2)
    genes = ["PHACTR1", "TBC1D7", "GFOD1", "SIRT5", "NOL7"]
    loc.set_exposures([(g, "AOR") for g in genes], ex2, c)
    return loc


def adamts7(aor, mam):
    R = markov_ld([0.55, 0.4, 0.62, 0.35, 0.5])
    A = np.zeros((6, 2))
    A[0, 0], A[2, 0], A[4, 1], A[5, 1], A[3, 0] = 0.32, 0.22, 0.3, -0.2, 0.1
    ex_aor = R @ A
    ey = ex_aor @ np.asarray(aor)
    # MAM exposures share the outcome; shift them along c_mam so that
    # Sigma_EX^MAM c_mam = Sigma_EY exactly.
    B = np.zeros((6, 2))
    B[1, 0], B[2, 0], B[4, 1], B[0, 1] = 0.3, 0.18, 0.28, 0.12
    m0 = R @ B
    cm = np.asarray(mam)
    u = ey - m0 @ cm
    ex_mam = m0 + np.outer(u, cm / (cm @ cm))
    snps = [f"rs15{i:02d}" for i in range(6)]
    loc = Locus("ADAMTS7", "15", 78_750_000, snps, R)
    ex = np.hstack([ex_aor, ex_mam])
    loc.exposures = [("ADAMTS7", "AOR", ex[:, 0]), ("CTSH", "AOR", ex[:, 1]),
                     ("ADAMTS7", "MAM", ex[:, 2]), ("CTSH", "MAM", ex[:, 3])]
    loc.sigma_ey = ey
    return loc


def carm1(effects):
    R = markov_ld([0.45, 0.6, 0.3, 0.5, 0.4])
    A = np.zeros((6, 4))
    A[0, 0], A[1, 1], A[2, 2], A[3, 3], A[4, 0], A[5, 1] = 0.3, -0.28, 0.26, 0.3, -0.18, 0.2
    ex = R @ A
    pairs = [("CARM1", "SKLM"), ("RGL3", "LIV"), ("CARM1", "SF"), ("SMARCA4", "LIV")]
    snps = [f"rs19{i:02d}" for i in range(6)]
    loc = Locus("CARM1", "19", 10_900_000, snps, R)
    loc.set_exposures(pairs, ex, effects)
    return loc


def pcsk9(effect):
    R = markov_ld([0.5, 0.3])
    a = np.array([0.35, 0.0, 0.25])
    ex = (R @ a)[:, None]
    snps = [f"rs01{i:02d}" for i in range(3)]
    loc = Locus("PCSK9", "1", 55_000_000, snps, R)
    loc.set_exposures([("PCSK9", "VAF")], ex, [effect])
    return loc


def non_identifiable():
    # Two genes driven by one causal variant: Sigma_EX has rank one.
    R = markov_ld([0.7, 0.6, 0.5])
    ex = np.outer(R[:, 1], [0.3, 0.25])
    snps = [f"rs02{i:02d}" for i in range(4)]
    loc = Locus("NI", "2", 21_000_000, snps, R)
    loc.set_exposures([("APOB", "LIV"), ("TDRD15", "LIV")], ex, [0.2, 0.15])
    return loc


def write_set(loci, out_dir, extra_eqtl=(), extra_gwas=()):
    os.makedirs(out_dir, exist_ok=True)
    eqtl, gwas, p = [], [], []
    for loc in loci:
        for i, snp in enumerate(loc.snps):
            for gene, tissue, col in loc.exposures:
                b = float(col[i])
                se = corr_se(b, N_EQTL)
                eqtl.append([snp, loc.chrom, loc.pos[i], gene, tissue, b, se, loc.mafs[i]])
                p.append(two_sided_p(b / se))
            b = float(loc.sigma_ey[i])
            se = corr_se(b, N_GWAS)
            gwas.append([snp, loc.chrom, loc.pos[i], b, se, max(two_sided_p(b / se), 1e-300), N_GWAS])
    for row in extra_eqtl:
        eqtl.append(row[:8])
        p.append(row[8])
    gwas.extend(extra_gwas)
    q = bh(p)
    with open(os.path.join(out_dir, "eqtl.tsv"), "w") as f:
        f.write("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n")
        for row, fdr in zip(eqtl, q):
            f.write("\t".join([row[0], row[1], str(row[2]), row[3], row[4], repr(row[5]), repr(row[6]),
                               f"{row[7]:.4g}", f"{fdr:.6g}"]) + "\n")
    with open(os.path.join(out_dir, "gwas.tsv"), "w") as f:
        f.write("snp\tchrom\tpos\tbeta\tse\tpval\tn\n")
        for row in gwas:
            f.write("\t".join([row[0], row[1], str(row[2]), repr(row[3]), repr(row[4]), f"{row[5]:.6g}",
                               str(row[6])]) + "\n")
    ids = [s for loc in loci for s in loc.snps]
    R = np.zeros((len(ids), len(ids)))
    k = 0
    for loc in loci:
        n = len(loc.snps)
        R[k:k + n, k:k + n] = loc.R
        k += n
    with open(os.path.join(out_dir, "ld.txt"), "w") as f:
        f.write(" ".join(ids) + "\n")
        for row in R:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
    return loci


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/fixtures")
    args = ap.parse_args()
    # An eQTL SNP near PCSK9 that is absent from the LD file.
    missing_ld = [["rs0199", "1", 55_030_000, "PCSK9", "VAF", 0.2, corr_se(0.2, N_EQTL), 0.3, 1e-6]]
    discovery = [pcsk9(0.099), non_identifiable(), phactr1([0.19, 0.06, -0.04, 0.08, -0.07]),
                 adamts7([0.18, 0.025], [0.14, -0.058]), carm1([0.18, -0.19, -0.02, -0.01])]
    missing_gwas = [["rs0199", "1", 55_030_000, 0.02, corr_se(0.02, N_GWAS), two_sided_p(0.02 / corr_se(0.02, N_GWAS)),
                     N_GWAS]]
    write_set(discovery, os.path.join(args.out, "discovery"), missing_ld, missing_gwas)
    replication = [pcsk9(0.11), non_identifiable(), phactr1([0.16, 0.04, -0.05, 0.09, -0.02]),
                   adamts7([0.15, 0.04], [0.12, -0.03]), carm1([0.15, -0.17, 0.01, -0.03])]
    write_set(replication, os.path.join(args.out, "replication"))
    for loc in discovery:
        for tissue in sorted({t for _, t, _ in loc.exposures}):
            cols = np.column_stack([c for _, t, c in loc.exposures if t == tissue])
            print(loc.name, tissue, "normalized det", round(normalized_gram_det(cols), 6))


if __name__ == "__main__":
    main()
