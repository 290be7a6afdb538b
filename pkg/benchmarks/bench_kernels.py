"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--rows 200000] [--slices 20000] [--repeat 5]

Also checks that both backends return bit-identical results.
"""
import argparse
import timeit

import numpy as np

from fedsim import kernels


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=200_000, help="latency paths per batch")
    p.add_argument("--slices", type=int, default=20_000, help="workload slices per plan")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    num = rng.uniform(0, 100, (args.rows, 7))
    den = rng.uniform(0.1, 10, (args.rows, 7))
    demand = rng.uniform(0, 800, args.slices)
    cap = np.full(args.slices, 360.0)
    price, budget = 1 / 3000, 0.5 * args.slices / 30

    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled extension not available; only the python backend is timed")
    results = {}
    print(f"{'kernel':<18}{'backend':<10}{'best of %d (s)' % args.repeat:>18}")
    for name, mod in sorted(backends.items()):
        for kname, call in (("path_totals", lambda m=mod: m.path_totals(num, den)),
                            ("greedy_outsource", lambda m=mod: m.greedy_outsource(demand, cap, price, budget, True))):
            best = min(timeit.repeat(call, number=1, repeat=args.repeat))
            results[(kname, name)] = best
            print(f"{kname:<18}{name:<10}{best:>18.6f}")
    if "cython" in backends:
        py, cy = backends["python"], backends["cython"]
        same = py.path_totals(num, den).tobytes() == cy.path_totals(num, den).tobytes()
        a = py.greedy_outsource(demand, cap, price, budget, True)
        b = cy.greedy_outsource(demand, cap, price, budget, True)
        same = same and all(x.tobytes() == y.tobytes() for x, y in zip(a[:4], b[:4])) and a[4] == b[4]
        for k in ("path_totals", "greedy_outsource"):
            print(f"speedup {k}: {results[(k, 'python')] / results[(k, 'cython')]:.1f}x")
        print(f"bit-identical: {same}")
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
