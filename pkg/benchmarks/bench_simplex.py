"""Compare the compiled and pure-Python simplex kernels on random LPs.

Usage: python3 benchmarks/bench_simplex.py [--sizes 20x30 60x90 ...] [--reps 5]
"""

import argparse
import time

import numpy as np
import scipy.sparse as sp

from altsddip.simplex import LinearProgram, SimplexEngine, available_backends


def random_lp(m, n, rng):
    """Feasible, bounded LP: rhs built from a known point, box-bounded columns."""
    A = rng.uniform(-1.0, 1.0, (m, n)) * (rng.random((m, n)) < 0.5)
    x = rng.uniform(0.0, 5.0, n)
    sense = rng.choice(np.array(["G", "L", "E"]), m, p=[0.45, 0.45, 0.1])
    rhs = A @ x - np.where(sense == "G", 1.0, np.where(sense == "L", -1.0, 0.0))
    c = rng.normal(size=n)
    return LinearProgram(sp.csc_array(A), rhs, sense, np.zeros(n), np.full(n, 10.0), c)


def bench(m, n, reps, seed=0):
    rng = np.random.default_rng(seed)
    lps = [random_lp(m, n, rng) for _ in range(reps)]
    out = {}
    for name in available_backends():
        t0 = time.perf_counter()
        objs, iters = [], 0
        for lp in lps:
            sol = SimplexEngine(lp, backend=name).solve()
            objs.append(sol.objective)
            iters += sol.iterations
        out[name] = (time.perf_counter() - t0, iters, np.array(objs))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", nargs="+", default=["20x30", "60x90", "120x180", "200x300"])
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    names = available_backends()
    print(f"backends: {', '.join(names)}")
    print(f"{'size':>10} " + " ".join(f"{n + ' s':>12}" for n in names) + f" {'speedup':>8}"
          + f" {'max |dobj|':>11}")
    for s in args.sizes:
        m, n = map(int, s.split("x"))
        res = bench(m, n, args.reps)
        times = [res[k][0] for k in names]
        speed = res["python"][0] / res["compiled"][0] if "compiled" in res else 1.0
        diff = 0.0
        if "compiled" in res:
            diff = float(np.max(np.abs(res["compiled"][2] - res["python"][2])))
        print(f"{s:>10} " + " ".join(f"{t:12.4f}" for t in times) + f" {speed:8.1f}x"
              + f" {diff:11.2e}")


if __name__ == "__main__":
    main()
