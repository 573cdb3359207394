#!/usr/bin/env python3
"""Independent reference computation for the 10-unit fixture.

Reads the fixture frame and spec files and writes golden transition tables,
the stability summary and the specification comparison table. Standard
library only; every statistic is computed the slow, obvious way.

    python3 tests/oracles/fixture_oracle.py tests/fixtures/nta10
"""

import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path


def load_frame(root):
    schema = json.loads((root / "schema.json").read_text())
    with open(root / "frame.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: r[schema["id_column"]])
    ids = [r[schema["id_column"]] for r in rows]
    cols = {}
    for a in schema["attributes"]:
        name = a if isinstance(a, str) else a["name"]
        cols[name] = [float(r[name]) for r in rows]
    return ids, cols


def zscores(xs):
    n = len(xs)
    m = sum(xs) / n
    sd = math.sqrt(sum((x - m) * (x - m) for x in xs) / n)
    return [(x - m) / sd for x in xs]


def raw_scores(spec, cols, n):
    z = {t["attribute"]: zscores(cols[t["attribute"]]) for t in spec["terms"]}
    out = []
    for u in range(n):
        s = 0.0
        for t in spec["terms"]:
            s += t["sign"] * z[t["attribute"]][u]
        out.append(s)
    return out


def avg_rank(xs, i):
    less = sum(1 for x in xs if x < xs[i])
    equal = sum(1 for x in xs if x == xs[i])
    return less + (equal + 1) / 2


def percentiles(xs):
    n = len(xs)
    return [100.0 * avg_rank(xs, i) / n for i in range(n)]


def quintile(p):
    for q, edge in enumerate((20, 40, 60, 80), start=1):
        if p <= edge:
            return q
    return 5


def pearson(a, b):
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    sab = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = sum((x - ma) ** 2 for x in a)
    sbb = sum((y - mb) ** 2 for y in b)
    return sab / math.sqrt(saa * sbb)


def spearman(a, b):
    return pearson([avg_rank(a, i) for i in range(len(a))], [avg_rank(b, i) for i in range(len(b))])


def kendall_tau_b(a, b):
    n = len(a)
    c = d = ta = tb = 0
    for i in range(n):
        for j in range(i + 1, n):
            if a[i] == a[j]:
                ta += 1
            if b[i] == b[j]:
                tb += 1
            if a[i] == a[j] or b[i] == b[j]:
                continue
            if (a[i] < a[j]) == (b[i] < b[j]):
                c += 1
            else:
                d += 1
    p = n * (n - 1) // 2
    return (c - d) / math.sqrt((p - ta) * (p - tb))


def num(x):
    if isinstance(x, int):
        return str(x)
    return str(int(x)) if x == int(x) else repr(x)


def direction(bq, vq):
    return "increase" if vq > bq else "decrease" if vq < bq else "no-change"


def main(root):
    root = Path(root)
    cfg = json.loads((root / "sensitivity.json").read_text())
    ids, cols = load_frame(root)
    n = len(ids)

    def rank(path):
        spec = json.loads((root / path).read_text())
        pct = percentiles(raw_scores(spec, cols, n))
        return spec["name"], pct, [quintile(p) for p in pct]

    base_name, base_pct, base_q = rank(cfg["specs"][0])
    variants = [rank(p) for p in cfg["variants"]]

    golden = root / "golden"
    golden.mkdir(exist_ok=True)

    pairwise = []
    moved = set()
    jumps = []
    pooled = {"n": 0, "unchanged": 0, "increased": 0, "decreased": 0}
    for name, pct, q in variants:
        counts = {"variant": name, "n": n, "unchanged": 0, "increased": 0, "decreased": 0}
        with open(golden / f"transitions_{name}.csv", "w", newline="") as fh:
            fh.write("unit_id,base_quintile,variant_quintile,direction,base_percentile,variant_percentile\n")
            for u in range(n):
                d = direction(base_q[u], q[u])
                key = {"increase": "increased", "decrease": "decreased", "no-change": "unchanged"}[d]
                counts[key] += 1
                if d != "no-change":
                    moved.add(ids[u])
                if abs(q[u] - base_q[u]) >= 2:
                    jumps.append({"unit_id": ids[u], "variant": name, "base_quintile": base_q[u],
                                  "variant_quintile": q[u]})
                fh.write(f"{ids[u]},{base_q[u]},{q[u]},{d},{num(base_pct[u])},{num(pct[u])}\n")
        for k in ("n", "unchanged", "increased", "decreased"):
            pooled[k] += counts[k]
        pairwise.append(counts)

    unchanged_all = n - len(moved)
    summary = {
        "n_units": n,
        "n_complete": n,
        "n_unchanged_all_variants": unchanged_all,
        "frac_unchanged_all_variants": unchanged_all / n,
        "frac_unchanged_all_variants_exact": str(Fraction(unchanged_all, n)),
        "pairwise": pairwise,
        "pooled": pooled,
        "flagged_jumps": sorted(jumps, key=lambda j: (j["unit_id"], j["variant"])),
    }
    (golden / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    with open(golden / "comparison.csv", "w", newline="") as fh:
        fh.write("variant,n,spearman_percentile,spearman_quintile,kendall_percentile,kendall_quintile,"
                 "alignment_percent\n")
        for name, pct, q in variants:
            matches = sum(1 for u in range(n) if q[u] == base_q[u])
            fh.write(",".join([
                name, str(n),
                num(spearman(base_pct, pct)), num(spearman(base_q, q)),
                num(kendall_tau_b(base_pct, pct)), num(kendall_tau_b(base_q, q)),
                num(100 * matches / n),
            ]) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "fixtures" / "nta10")
