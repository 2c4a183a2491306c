"""Compare the compiled and pure-Python group-aggregation backends.

    python benchmarks/bench_preprocess.py --nodes 20000 --degree 10 --hops 1 2 3

Both backends run the same preprocessing on the same synthetic graph; the
outputs are checked for agreement before any timing is reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from gaga import kernels
from gaga.graph import SyntheticSpec, generate_synthetic, make_splits
from gaga.groupagg import GroupAggConfig, preprocess_all


def best_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=20000)
    ap.add_argument("--relations", type=int, default=2)
    ap.add_argument("--degree", type=float, default=10.0)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--hops", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    graph = generate_synthetic(SyntheticSpec(
        num_nodes=args.nodes, num_relations=args.relations, homophily=[0.2] * args.relations,
        imbalance_ratio=6.0, feature_dim=args.dim, avg_degree=args.degree, seed=args.seed,
    ))
    observed = make_splits(graph, 0.4, 0.1, 0.4, args.seed).observed
    print(f"graph: N={args.nodes} R={args.relations} avg_degree={args.degree} d={args.dim}; "
          f"backends: {', '.join(backends)}")
    print(f"{'K':>2} {'backend':>9} {'seconds':>9} {'seq/s':>10} {'speedup':>8}")
    for k in args.hops:
        cfg = GroupAggConfig(num_hops=k)
        outputs = {b: preprocess_all(graph, cfg, observed, backend=b).sequences for b in backends}
        ref = outputs["python"]
        for b, seqs in outputs.items():
            err = float(np.max(np.abs(seqs - ref)))
            if err > 1e-12:
                raise SystemExit(f"backend {b} disagrees with python at K={k}: max |diff| {err:.3e}")
        times = {b: best_time(lambda b=b: preprocess_all(graph, cfg, observed, backend=b), args.repeats)
                 for b in backends}
        for b in backends:
            speedup = times["python"] / times[b]
            print(f"{k:>2} {b:>9} {times[b]:>9.3f} {args.nodes / times[b]:>10.0f} {speedup:>7.1f}x")


if __name__ == "__main__":
    main()
