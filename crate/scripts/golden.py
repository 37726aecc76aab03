#!/usr/bin/env python3
"""Independent reference computation for the golden fixtures.

Plain Python arithmetic over the fixture files; shares no code with the
Rust crates. Writes fixtures/golden.json and fixtures/sensitivity-golden.json.

    python3 scripts/golden.py            # rewrite both files
    python3 scripts/golden.py --check    # compare against the frozen files
"""

import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"
MASK = (1 << 64) - 1


def load_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def entities(rows, ind, period):
    return [(r["entity"], float(r["value"])) for r in rows
            if r["indicator_id"] == ind and r["period"] == period and r["entity"]]


def series(rows, ind):
    return {int(r["period"]): float(r["value"]) for r in rows
            if r["indicator_id"] == ind and not r["entity"]}


def growth(s, year):
    return (s[year] - s[year - 1]) / s[year - 1]


def raw(comp, rows, year):
    kind, ind = comp["kind"], comp["indicator_id"]
    if kind == "hhi":
        # exact rational sum of squares, rounded once
        acc = Fraction(0)
        for _, v in entities(rows, ind, str(year)):
            acc += Fraction(v) ** 2
        return float(acc)
    if kind == "max_share":
        return max(v for _, v in entities(rows, ind, str(year)))
    if kind == "top_k_share":
        vols = sorted((v for _, v in entities(rows, ind, str(year))), reverse=True)
        k = comp.get("params", {}).get("k", 3)
        total = 0.0
        for v in vols:
            total = total + v
        if k >= len(vols):
            return 1.0
        top = 0.0
        for v in vols[:k]:
            top = top + v
        return min(top / total, 1.0)
    s = series(rows, ind)
    if kind == "level":
        return s[year]
    if kind == "growth_rate":
        return growth(s, year)
    if kind == "deceleration":
        d = 1.0 - growth(s, year) / growth(s, year - 1)
        return min(max(d, 0.0), 1.0)
    raise ValueError(kind)


def bounds(comp, rows):
    b = comp.get("bounds")
    if b is None:
        return 0.0, 1.0
    if b == "empirical":
        vals = [v for v in series(rows, comp["indicator_id"]).values()]
        return min(vals), max(vals)
    return float(b["min"]), float(b["max"])


def potential(num, den):
    """Weighted mean of component complements, 1 - sum(w * n) for unit weights."""
    return min(max(num / den, 0.0), 1.0)


def evaluate(model, rows, year):
    subs = {}
    clamps = []
    for sub in model["sub_indexes"]:
        num = den = 0.0
        normalized = []
        for comp in sub["components"]:
            x = raw(comp, rows, year)
            lo, hi = bounds(comp, rows)
            if x < lo:
                n = 0.0
                clamps.append({"component_id": comp["id"], "raw": x, "side": "min", "bound": lo})
            elif x > hi:
                n = 1.0
                clamps.append({"component_id": comp["id"], "raw": x, "side": "max", "bound": hi})
            else:
                n = (x - lo) / (hi - lo)
            w = float(comp["weight"])
            normalized.append((n, w))
            num = num + w * (1.0 - n)
            den = den + w
        subs[sub["id"]] = {"potential": potential(num, den), "normalized": normalized}
    return subs, clamps


def geometric(pairs):
    """1 - prod p^w over (p, w) pairs in the given order, via logs."""
    log_sum = 0.0
    for p, w in pairs:
        if w == 0.0:
            continue
        if p == 0.0:
            return 1.0
        log_sum = log_sum + w * math.log(p)
    return min(max(-math.expm1(log_sum), 0.0), 1.0)


def direct_product(pairs):
    prod = 1.0
    for p, w in pairs:
        prod *= p ** w
    return 1.0 - prod


# xoshiro256** seeded through SplitMix64, as rand_xoshiro 0.7.0 seed_from_u64


class Xoshiro:
    def __init__(self, seed):
        x = seed & MASK
        self.s = []
        for _ in range(4):
            x = (x + 0x9E3779B97F4A7C15) & MASK
            z = x
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
            self.s.append(z ^ (z >> 31))

    @staticmethod
    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & MASK

    def next_u64(self):
        s = self.s
        out = (self.rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self.rotl(s[3], 45)
        return out

    def uniform(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def normal(rng):
    while True:
        u = 2.0 * rng.uniform() - 1.0
        v = 2.0 * rng.uniform() - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * math.sqrt(-2.0 * math.log(s) / s)


def gamma(shape, rng):
    if shape == 1.0:
        return -math.log(1.0 - rng.uniform())
    if shape < 1.0:
        g = gamma(shape + 1.0, rng)
        return g * rng.uniform() ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = normal(rng)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.uniform()
        if u < 1.0 - 0.0331 * x * x * x * x:
            return d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


def dirichlet(k, alpha, rng):
    while True:
        g = [gamma(alpha, rng) for _ in range(k)]
        total = 0.0
        for x in g:
            total = total + x
        if total > 0.0:
            return [x / total for x in g]


def nearest_rank(sorted_vals, pct):
    n = len(sorted_vals)
    rank = max(-(-pct * n // 100), 1)
    return sorted_vals[min(rank, n) - 1]


def monte_carlo_top(subs, n, seed, alpha):
    ids = sorted(subs)
    pots = [subs[i]["potential"] for i in ids]
    rng = Xoshiro(seed)
    values = []
    for _ in range(n):
        w = dirichlet(len(ids), alpha, rng)
        values.append(geometric(zip(pots, w)))
    mean = 0.0
    for v in values:
        mean = mean + v
    mean = mean / n
    var = 0.0
    for v in values:
        var = var + (v - mean) * (v - mean)
    var = var / n
    values.sort()
    return {
        "mean": min(max(mean, values[0]), values[-1]),
        "std": math.sqrt(var),
        "p05": nearest_rank(values, 5),
        "p25": nearest_rank(values, 25),
        "p50": nearest_rank(values, 50),
        "p75": nearest_rank(values, 75),
        "p95": nearest_rank(values, 95),
        "min": values[0],
        "max": values[-1],
    }


def perturb(ws, i, target):
    target = min(max(target, 0.0), 1.0)
    if len(ws) == 1 or target == ws[i]:
        return list(ws)
    others = 0.0
    for j, w in enumerate(ws):
        if j != i:
            others = others + w
    rest = 1.0 - target
    out = []
    for j, w in enumerate(ws):
        if j == i:
            out.append(target)
        elif others > 0.0:
            out.append(w * rest / others)
        else:
            out.append(rest / (len(ws) - 1))
    return out


def sub_potential(normalized, weights):
    num = den = 0.0
    for (n, _), w in zip(normalized, weights):
        num = num + w * (1.0 - n)
        den = den + w
    return potential(num, den)


def tornado(model, subs, delta):
    ids = sorted(subs)
    top = [float(model["top_weights"][i]) for i in ids]
    pots = [subs[i]["potential"] for i in ids]
    entries = []
    for i, sid in enumerate(ids):
        lo = geometric(zip(pots, perturb(top, i, top[i] - delta)))
        hi = geometric(zip(pots, perturb(top, i, top[i] + delta)))
        entries.append({"layer": "top", "target_id": sid, "aivi_low": lo, "aivi_high": hi})
    by_id = {s["id"]: s for s in model["sub_indexes"]}
    for i, sid in enumerate(ids):
        comps = by_id[sid]["components"]
        ws = [float(c["weight"]) for c in comps]
        for j, comp in enumerate(comps):
            out = []
            for target in (ws[j] - delta, ws[j] + delta):
                p = list(pots)
                p[i] = sub_potential(subs[sid]["normalized"], perturb(ws, j, target))
                out.append(geometric(zip(p, top)))
            entries.append({"layer": "component", "target_id": comp["id"],
                            "aivi_low": out[0], "aivi_high": out[1]})
    entries.sort(key=lambda e: -abs(e["aivi_high"] - e["aivi_low"]))
    return entries


def build():
    model = json.loads((FIX / "model-equal.json").read_text())
    rows = load_rows(FIX / "synthetic-2025.csv")
    subs, clamps = evaluate(model, rows, 2025)
    ids = sorted(subs)
    top = {i: float(model["top_weights"][i]) for i in ids}
    pairs = [(subs[i]["potential"], top[i]) for i in ids]
    index = geometric(pairs)
    assert abs(index - direct_product(pairs)) < 1e-12

    g1_rows = load_rows(FIX / "synthetic-2025-growth1.csv")
    g1_subs, g1_clamps = evaluate(model, g1_rows, 2025)
    g1 = geometric([(g1_subs[i]["potential"], top[i]) for i in ids])

    golden = {
        "period": "2025",
        "aivi": index,
        "potentials": {i: subs[i]["potential"] for i in ids},
        "contributions": {i: 0.0 if subs[i]["potential"] == 1.0 else -top[i] * math.log(subs[i]["potential"])
                          for i in ids},
        "clamp_warnings": clamps,
        "growth_one_aivi": g1,
        "growth_one_clamp_count": len(g1_clamps),
    }
    report = {"sample_count": 10000, "seed": 42, "layer": "top", "concentration": 1.0}
    report.update(monte_carlo_top(subs, 10000, 42, 1.0))
    entries = tornado(model, subs, 0.05)
    sensitivity = {
        "monte_carlo": report,
        "tornado": {"delta": 0.05, "order": [e["target_id"] for e in entries], "entries": entries},
    }
    return golden, sensitivity


def main():
    golden, sensitivity = build()
    out = {
        FIX / "golden.json": golden,
        FIX / "sensitivity-golden.json": sensitivity,
    }
    if "--check" in sys.argv:
        ok = True
        for path, value in out.items():
            if json.loads(path.read_text()) != json.loads(json.dumps(value)):
                print(f"{path.name}: differs")
                ok = False
        sys.exit(0 if ok else 1)
    for path, value in out.items():
        path.write_text(json.dumps(value, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
