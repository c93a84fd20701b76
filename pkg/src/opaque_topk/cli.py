"""Command line entry point: ``opaque-topk`` (or ``python -m opaque_topk``)."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .bandit import QueryParams, ScorerError
from .index import IndexFormatError, build_index, index_from_partition, load_index, save_index


def _add_gen(sub) -> None:
    p = sub.add_parser("gen", help="generate datasets")
    gsub = p.add_subparsers(dest="kind", required=True)
    s = gsub.add_parser("synthetic", help="normally distributed clusters")
    s.add_argument("--clusters", type=int, default=20)
    s.add_argument("--per-cluster", type=int, default=2500)
    s.add_argument("--mu-min", type=float, default=0.0)
    s.add_argument("--mu-max", type=float, default=20.0)
    s.add_argument("--sigma-max", type=float, default=5.0)
    s.add_argument("--no-signal", action="store_true",
                   help="draw every cluster from one N(10, 3) so clusters carry no information")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="dataset CSV to write")


def _add_index(sub) -> None:
    p = sub.add_parser("index", help="build cluster indexes")
    isub = p.add_subparsers(dest="action", required=True)
    b = isub.add_parser("build", help="k-means leaves plus an average-linkage dendrogram")
    b.add_argument("--data", required=True, help="dataset CSV")
    b.add_argument("--leaves", type=int, default=20)
    b.add_argument("--subsample", type=int, default=None, help="run k-means on this many rows only")
    b.add_argument("--from-labels", action="store_true", help="use the dataset's label column as the leaves")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True, help="index JSON to write")


def _add_query(sub) -> None:
    from .harness.experiment import ALGORITHMS

    p = sub.add_parser("query", help="run top-k queries")
    qsub = p.add_subparsers(dest="action", required=True)
    r = qsub.add_parser("run", help="repeated runs of one algorithm; CSV curves plus JSON summary")
    r.add_argument("--data", required=True, help="dataset CSV")
    r.add_argument("--index", default=None, help="prebuilt index JSON (otherwise built here and timed)")
    r.add_argument("--leaves", type=int, default=20)
    r.add_argument("--subsample", type=int, default=None)
    r.add_argument("--from-labels", action="store_true")
    r.add_argument("--algorithm", choices=ALGORITHMS, default="ours")
    r.add_argument("--scorer", default="relu", help="builtin name (relu, constant, noop) or an external command")
    r.add_argument("--k", type=int, default=100)
    r.add_argument("--bucket-count", type=int, default=8)
    r.add_argument("--alpha", type=float, default=0.1)
    r.add_argument("--beta", type=float, default=1.1)
    r.add_argument("--fallback-freq", type=float, default=0.01)
    r.add_argument("--batch-size", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--reps", type=int, default=1)
    r.add_argument("--max-iters", type=int, default=None)
    r.add_argument("--max-seconds", type=float, default=None)
    r.add_argument("--scorer-latency", type=float, default=None,
                   help="seconds per element assumed by the fallback check (builtin scorers default to 1.0)")
    r.add_argument("--overhead-latency", type=float, default=None,
                   help="executor seconds per element assumed by the fallback check (builtin default 0.05)")
    r.add_argument("--cache-dir", default=None, help="cache exact score tables here")
    r.add_argument("--out", required=True, help="CSV path; the summary goes next to it as .json")


def _add_verify(sub) -> None:
    v = sub.add_parser("verify", help="check the objective's lattice properties; JSON report")
    v.add_argument("--seeds", type=int, default=5)
    v.add_argument("--trials", type=int, default=10_000)
    v.add_argument("--max-budget", type=int, default=4)
    v.add_argument("--quick", action="store_true")
    v.add_argument("--out", default=None, help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opaque-topk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_index(sub)
    _add_query(sub)
    _add_verify(sub)
    return parser


def cmd_gen(args) -> int:
    from .harness.synthetic import SyntheticSpec, gen_no_signal, gen_synthetic, save_dataset

    if args.no_signal:
        ds = gen_no_signal(args.clusters, args.per_cluster, seed=args.seed)
    else:
        spec = SyntheticSpec(args.clusters, args.per_cluster, (args.mu_min, args.mu_max), args.sigma_max, args.seed)
        ds = gen_synthetic(spec)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} elements to {args.out}")
    return 0


def cmd_index(args) -> int:
    from .harness.synthetic import load_dataset

    ds = load_dataset(args.data)
    if args.from_labels:
        if ds.labels is None:
            raise ValueError(f"{args.data} has no label column")
        index = index_from_partition(ds.ids, ds.vectors, ds.labels)
    else:
        index = build_index(ds.pairs(), args.leaves, args.subsample, args.seed)
    save_index(index, args.out)
    print(f"wrote index with {index.leaf_count} leaves, depth {index.depth()}, to {args.out}")
    return 0


def cmd_query(args) -> int:
    from .harness.experiment import ExperimentConfig, run_experiment
    from .harness.synthetic import load_dataset

    ds = load_dataset(args.data)
    index = load_index(args.index) if args.index else None
    params = QueryParams(
        k=args.k,
        bucket_count=args.bucket_count,
        alpha=args.alpha,
        beta=args.beta,
        fallback_frequency=args.fallback_freq,
        batch_size=args.batch_size,
        seed=args.seed,
        scorer_latency=args.scorer_latency,
        overhead_latency=args.overhead_latency,
    )
    config = ExperimentConfig(
        algorithm=args.algorithm,
        dataset=ds,
        params=params,
        scorer=args.scorer,
        repetitions=args.reps,
        index=index,
        leaf_count=args.leaves,
        clustering_subsample=args.subsample,
        from_labels=args.from_labels,
        max_iterations=args.max_iters,
        max_seconds=args.max_seconds,
        out=args.out,
        cache_dir=args.cache_dir,
    )
    result = run_experiment(config)
    s = result.summary
    last = s["checkpoints"][-1] if s["checkpoints"] else None
    print(f"{s['algorithm']}: {s['repetitions']} run(s), n={s['n']}, k={s['k']}, optimal STK {s['optimal_stk']:.6g}")
    if last is not None:
        print(f"  at t={last['t']}: STK {last['stk_mean']:.6g} ± {last['stk_std']:.3g}, "
              f"precision {last['precision_mean']:.3f}")
    print(f"  rows -> {args.out}")
    return 0


def cmd_verify(args) -> int:
    from .harness.verify import run_verify

    report = run_verify(args.seeds, args.trials, args.max_budget, quick=args.quick)
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"{'PASS' if report['passed'] else 'FAIL'}: report in {args.out}")
    else:
        print(text)
    return 0 if report["passed"] else 1


COMMANDS = {"gen": cmd_gen, "index": cmd_index, "query": cmd_query, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ScorerError, IndexFormatError, ValueError, OSError) as exc:
        print(f"opaque-topk: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
