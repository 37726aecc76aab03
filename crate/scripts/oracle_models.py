#!/usr/bin/env python3
"""Random small models scored with the textbook formula.

Each case is a model with fixed-bound `level` components and one raw value
per component. The expected index is 1 - prod(Pot_i ** w_i) evaluated
directly, with Pot = 1 - sum(w * n) and values clamped into their bounds.
Shares no code with the Rust crates or with golden.py.

    python3 scripts/oracle_models.py            # rewrite fixtures/oracle-models.json
    python3 scripts/oracle_models.py --check    # compare against the frozen file
"""

import json
import random
import sys
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "oracle-models.json"
CASES = 1000
SEED = 20251015


def simplex(rng, k):
    raw = [rng.uniform(0.05, 1.0) for _ in range(k)]
    total = sum(raw)
    w = [x / total for x in raw]
    # put the rounding residue on the last entry so the sum is as close to 1 as floats allow
    w[-1] = 1.0 - sum(w[:-1])
    return w


def case(rng, n):
    top = simplex(rng, rng.randint(1, 5))
    sub_indexes = []
    raws = {}
    potentials = []
    for i, tw in enumerate(top):
        cw = simplex(rng, rng.randint(1, 4))
        comps = []
        acc = 0.0
        for j, w in enumerate(cw):
            lo = rng.uniform(-50.0, 50.0)
            hi = lo + rng.uniform(0.5, 100.0)
            # roughly one value in eight falls outside its bounds
            x = rng.uniform(lo - (hi - lo) / 8.0, hi + (hi - lo) / 8.0)
            if rng.random() < 0.02:
                x = hi
            cid = f"s{i}c{j}"
            comps.append({"id": cid, "indicator_id": f"ind_{cid}", "kind": "level", "weight": w,
                          "bounds": {"min": lo, "max": hi, "kind": "theoretical"}})
            raws[cid] = x
            nv = min(max((x - lo) / (hi - lo), 0.0), 1.0)
            acc += w * nv
        potentials.append(min(max(1.0 - acc, 0.0), 1.0))
        sub_indexes.append({"id": f"s{i}", "components": comps})
    prod = 1.0
    for p, w in zip(potentials, top):
        prod *= p ** w
    model = {
        "version": 1,
        "top_weights": {f"s{i}": w for i, w in enumerate(top)},
        "sub_indexes": sub_indexes,
    }
    return {"name": f"case{n:04d}", "model": model, "raw": raws, "aivi": 1.0 - prod}


def build():
    rng = random.Random(SEED)
    return {"seed": SEED, "cases": [case(rng, n) for n in range(CASES)]}


def main():
    data = build()
    if "--check" in sys.argv:
        same = json.loads(OUT.read_text()) == json.loads(json.dumps(data))
        print("oracle-models.json: " + ("ok" if same else "differs"))
        sys.exit(0 if same else 1)
    OUT.write_text(json.dumps(data, sort_keys=True) + "\n")
    print(f"wrote {OUT.name}")


if __name__ == "__main__":
    main()
