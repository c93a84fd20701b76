"""Acceptance suite: one test per criterion, each printed as PASS/FAIL in the terminal summary.

Run with ``pytest tests/test_acceptance.py -v``; the summary section
"acceptance criteria" lists every criterion with its measured numbers.
"""

import dataclasses
import math
import random
import time

import numpy as np
import pytest

from opaque_topk.bandit import InMemoryPlugin, Mode, QueryParams, QueryState, execute
from opaque_topk.baselines import BaselineKind, baseline_state, sorted_scan
from opaque_topk.core import stk
from opaque_topk.fallback import tree_fallback_triggered
from opaque_topk.harness.experiment import ALGORITHMS, OURS_VARIANTS, ExperimentConfig, run_experiment
from opaque_topk.harness.metrics import CSV_HEADER, TIMING_COLUMNS
from opaque_topk.harness.synthetic import SyntheticSpec, gen_no_signal, gen_synthetic
from opaque_topk.histogram import HistogramSketch
from opaque_topk.index import build_index, index_from_partition
from opaque_topk.oracle import check_bs_properties, check_stk_properties, exact_gain_discrete, random_arms

from oracles import brute_topk, mc_expected_excess
from test_fallback import MISLEADING, excess, four_leaf_state

pytestmark = pytest.mark.slow


def note(record_property, **values):
    for key, value in values.items():
        record_property(key, value)


@pytest.mark.criterion(1, "STK monotone and DR-submodular on all multisets over {0..3}, size <= 5")
def test_criterion_01_stk_properties(record_property):
    start = time.perf_counter()
    report = check_stk_properties(3, 5, (1, 2, 3))
    seconds = time.perf_counter() - start
    note(record_property, checked=report.checked, violations=report.violations, seconds=f"{seconds:.2f}")
    assert report.violations == 0, report.counterexample
    assert seconds < 10


@pytest.mark.criterion(2, "sampling value monotone and DR-submodular, coupled Monte Carlo")
def test_criterion_02_bs_properties(record_property):
    start = time.perf_counter()
    reports = []
    for seed in range(5):
        arms = random_arms(3, 5, seed)
        for k in (1, 2, 3):
            reports.append(check_bs_properties(arms, k, 4, 10_000, seed))
    seconds = time.perf_counter() - start
    violations = sum(r.violations for r in reports)
    note(record_property, checks=len(reports), comparisons=sum(r.checked for r in reports),
         violations=violations, seconds=f"{seconds:.1f}")
    assert violations == 0, [r.counterexample for r in reports if not r.passed]
    assert seconds < 60


# (counts, threshold, value worked out by hand)
EXACT_GAIN_CASES = [
    ({5: 1}, 3, 2.0),
    ({1: 2, 10: 2}, 4, 3.0),
    ({}, 1, 0.0),
    ({0: 1}, 0, 0.0),
    ({3: 1}, 3, 0.0),
    ({4: 1}, 0, 4.0),
    ({2: 1, 4: 1}, 0, 3.0),
    ({2: 1, 4: 1}, 3, 0.5),
    ({1: 1, 2: 1, 3: 1, 4: 1}, 2, 0.75),
    ({0: 3, 8: 1}, 4, 1.0),
    ({10: 5}, 7.5, 2.5),
    ({1: 1, 2: 1, 3: 1}, 0.5, 1.5),
    ({6: 2, 2: 2}, 5, 0.5),
    ({0: 1, 1: 1}, 10, 0.0),
    ({7: 1, 9: 3}, 8, 0.75),
    ({0: 9, 10: 1}, 0, 1.0),
    ({5: 0.5, 15: 0.5}, 5, 5.0),
    ({1: 1, 3: 1, 5: 1, 7: 1}, 4, 1.0),
    ({2: 4}, 1.25, 0.75),
    ({0: 1, 4: 2, 12: 1}, 2, 3.5),
]


def random_sketch(rng):
    bins = int(rng.integers(2, 13))
    top = float(rng.uniform(0.5, 50.0))
    cuts = np.sort(rng.uniform(0.0, top, bins - 1))
    edges = [0.0, *cuts.tolist(), top]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        return random_sketch(rng)
    mass = (rng.random(bins) * (rng.random(bins) < 0.8)).tolist()
    if sum(mass) == 0:
        mass[-1] = 1.0
    return HistogramSketch(edges, mass)


@pytest.mark.criterion(3, "expected_gain matches a 1e6-draw Monte Carlo within 3 SE; 20 exact hand cases")
def test_criterion_03_gain_estimator(record_property):
    rng = np.random.default_rng(12345)
    worst = 0.0
    integral_err = 0.0
    for _ in range(50):
        h = random_sketch(rng)
        thetas = rng.uniform(0.0, 1.05 * h.max_edge, 10).tolist()
        mc = mc_expected_excess(h.edges, h.mass, thetas, 1_000_000, rng)
        for theta, (mean, se) in zip(thetas, mc):
            got = h.expected_gain(theta)
            integral_err = max(integral_err, abs(got - excess(h.edges, h.mass, theta)))
            if se == 0.0:
                assert got == pytest.approx(mean, abs=1e-12)
                continue
            worst = max(worst, abs(got - mean) / se)
    mismatches = [(c, th, want, exact_gain_discrete(c, th)) for c, th, want in EXACT_GAIN_CASES
                  if exact_gain_discrete(c, th) != want]
    note(record_property, sketches=50, thresholds=500, worst_z=f"{worst:.2f}",
         integral_max_abs_err=f"{integral_err:.1e}", exact_cases=len(EXACT_GAIN_CASES),
         exact_mismatches=len(mismatches))
    assert len(EXACT_GAIN_CASES) == 20
    assert not mismatches
    assert integral_err <= 1e-9
    assert worst <= 3.0


def _invariants_hold(h):
    return (
        h.edges[0] == 0.0
        and len(h.mass) == len(h.edges) - 1
        and all(b > a for a, b in zip(h.edges, h.edges[1:]))
        and all(m >= 0.0 and math.isfinite(m) for m in h.mass)
        and math.isclose(h.total_mass, math.fsum(h.mass), rel_tol=1e-9, abs_tol=1e-9)
    )


@pytest.mark.criterion(4, "histogram maintenance conserves mass; 1e4 random operation sequences keep invariants")
def test_criterion_04_histogram_conservation(record_property):
    rng = random.Random(4)
    worst_drift = 0.0
    bad = 0
    ops = 0
    for _ in range(10_000):
        h = HistogramSketch.empty(rng.randint(2, 12), rng.uniform(0.1, 10.0))
        for _ in range(rng.randint(1, 30)):
            op = rng.choice(("record", "extend", "collapse", "subtract"))
            top = h.max_edge
            before = h.total_mass
            ops += 1
            if op == "record":
                h.record(rng.uniform(0.0, top))
            elif op == "extend":
                h.extend_range(top * rng.uniform(1.001, 3.0), rng.uniform(1.0, 2.0))
            elif op == "collapse":
                kth = rng.uniform(h.edges[2], top)
                if kth > h.edges[2]:
                    h.collapse_low(kth)
            else:
                part = HistogramSketch(h.edges, [m * rng.random() for m in h.mass])
                h.subtract(part)
            if op in ("extend", "collapse") and before > 0:
                worst_drift = max(worst_drift, abs(h.total_mass - before) / before)
            if not _invariants_hold(h):
                bad += 1
        self_diff = h.copy()
        self_diff.subtract(h)
        if any(m != 0.0 for m in self_diff.mass):
            bad += 1
    note(record_property, sequences=10_000, operations=ops, worst_relative_drift=f"{worst_drift:.2e}",
         invariant_failures=bad)
    assert worst_drift <= 1e-9
    assert bad == 0


@pytest.mark.criterion(5, "exploration steps with batch 1 over 1e5 steps, 20 seeds, near (3/2) T^(2/3)")
def test_criterion_05_exploration_schedule(record_property):
    T = 100_000
    ids = [f"e{i:06d}" for i in range(T)]
    index = index_from_partition(ids, [[float(i % 2)] for i in range(T)], [i % 2 for i in range(T)])
    plugin = InMemoryPlugin(dict.fromkeys(ids), lambda _: 1.0)
    start = time.perf_counter()
    counts = []
    for seed in range(20):
        # fallback off: the count is about the bandit's own schedule, which a switch to SAMPLE would cut short
        state = QueryState.from_index(index, QueryParams(k=10, batch_size=1, seed=seed, fallback=False))
        execute(state, plugin)
        assert state.t == T
        counts.append(state.explore_steps)
    seconds = time.perf_counter() - start
    target = 1.5 * T ** (2 / 3)
    mean = float(np.mean(counts))
    note(record_property, mean_explore=f"{mean:.0f}", target=f"{target:.0f}", ratio=f"{mean / target:.3f}",
         seconds=f"{seconds:.1f}")
    assert 0.5 * target <= mean <= 1.5 * target
    assert seconds < 60


def _mean_curve(summary):
    return {c["t"]: c["stk_mean"] for c in summary["checkpoints"]}


def _first_reaching(curve, level):
    return next((t for t in sorted(curve) if curve[t] >= level), None)


@pytest.mark.criterion(6, "synthetic replication: ours over uniform, 99% of optimum in half the steps, scan-best at k")
def test_criterion_06_synthetic_replication(record_property):
    start = time.perf_counter()
    ds = gen_synthetic(SyntheticSpec(20, 2500, seed=0))
    n, k = len(ds), 100
    params = QueryParams(k=k)
    results = {
        name: run_experiment(ExperimentConfig(name, ds, params, scorer="relu", repetitions=25, from_labels=True))
        for name in ("ours", "uniform")
    }
    best = run_experiment(ExperimentConfig("scan-best", ds, params, scorer="relu", from_labels=True))
    seconds = time.perf_counter() - start

    optimal = results["ours"].summary["optimal_stk"]
    ours, uniform = (_mean_curve(results[a].summary) for a in ("ours", "uniform"))
    late = [t for t in ours if t >= 0.05 * n]
    margin = min(ours[t] - uniform[t] for t in late)
    t_ours = _first_reaching(ours, 0.99 * optimal)
    t_uniform = _first_reaching(uniform, 0.99 * optimal)
    at_k = next(r for r in best.rows if r.t >= k)
    note(record_property, min_margin_after_5pct=f"{margin:.3f}", ours_t99=t_ours, uniform_t99=t_uniform,
         scan_best_t=at_k.t, seconds=f"{seconds:.0f}")
    assert margin >= 0.0
    assert t_ours is not None and t_uniform is not None and t_ours <= 0.5 * t_uniform
    assert at_k.t == k and at_k.stk == optimal
    assert all(r.stk < optimal for r in best.rows if r.t < k)
    assert seconds < 300


@pytest.mark.criterion(7, "fallback on no-signal data stays within 2% of uniform and enters SAMPLE; misleading tree flagged")
def test_criterion_07_fallback_efficacy(record_property):
    ds = gen_no_signal(20, 1000, seed=1)
    n = len(ds)
    params = QueryParams(k=100)
    ours = run_experiment(ExperimentConfig("ours", ds, params, repetitions=20, from_labels=True))
    uniform = run_experiment(ExperimentConfig("uniform", ds, params, repetitions=20, from_labels=True))
    a, b = _mean_curve(ours.summary), _mean_curve(uniform.summary)
    ratio = min(a[t] / b[t] for t in a if t >= 0.4 * n)
    entered = [next((e["t"] for e in run["events"] if e["to"] == Mode.SAMPLE.value), None)
               for run in ours.summary["runs"]]
    share = sum(t is not None for t in entered) / len(entered)
    misleading = tree_fallback_triggered(four_leaf_state(MISLEADING))
    note(record_property, min_ratio_after_40pct=f"{ratio:.4f}", sample_share=f"{share:.2f}",
         median_entry_t=int(np.median([t for t in entered if t is not None])) if share else None,
         misleading_tree=misleading)
    assert ratio >= 0.98
    assert share >= 0.8
    assert misleading


def _random_table(rng, n):
    ids = [f"r{i:04d}" for i in range(n)]
    # coarse values so that ties are common
    values = [float(rng.randrange(40)) if rng.random() < 0.5 else rng.uniform(0, 40) for _ in ids]
    return ids, values


@pytest.mark.criterion(8, "every algorithm returns the brute-force top-k at exhaustion")
def test_criterion_08_exactness(record_property):
    rng = random.Random(8)
    failures = []
    runs = 0
    for d in range(10):
        n = rng.randint(50, 1000)
        k = rng.randint(1, 60)
        ids, values = _random_table(rng, n)
        table = dict(zip(ids, values))
        vectors = [[v + rng.gauss(0, 2)] for v in values]
        index = build_index(list(zip(ids, vectors)), rng.randint(1, 12), seed=d)
        truth = brute_topk(table, k)
        want = sorted(table[i] for i in truth)
        for algorithm in ALGORITHMS:
            params = QueryParams(k=k, batch_size=rng.randint(1, 5), seed=d, bucket_count=rng.randint(2, 10),
                                 scorer_latency=1.0, overhead_latency=0.05)
            if algorithm == BaselineKind.SORTED_SCAN.value:
                solution = sorted_scan(table, k)
            else:
                if algorithm in OURS_VARIANTS:
                    state = QueryState.from_index(index, dataclasses.replace(params, **OURS_VARIANTS[algorithm]))
                    choose = None
                else:
                    state, choose = baseline_state(BaselineKind(algorithm), index, params, table)
                plugin = InMemoryPlugin(table, lambda s: s)
                if choose is None:
                    execute(state, plugin)
                else:
                    execute(state, plugin, choose=choose)
                assert state.exhausted and state.t == n
                solution = state.solution
            runs += 1
            got = sorted(solution.scores())
            ok = got == want and solution.recompute_stk() == stk(values, k)
            ok = ok and all(table[i] >= want[0] for i in solution.ids())
            if not ok:
                failures.append((d, algorithm))
    note(record_property, datasets=10, runs=runs, failures=len(failures))
    assert not failures, failures


def _csv_without_timing(path):
    drop = {CSV_HEADER.index(c) for c in TIMING_COLUMNS}
    lines = path.read_bytes().split(b"\n")
    return b"\n".join(b",".join(f for j, f in enumerate(line.split(b",")) if j not in drop) for line in lines)


@pytest.mark.criterion(9, "same config and seed give byte-identical CSV apart from timing columns")
def test_criterion_09_determinism(tmp_path, record_property):
    ds = gen_synthetic(SyntheticSpec(6, 300, seed=9))
    compared = []
    for algorithm in ALGORITHMS:
        outputs = []
        for copy in range(2):
            out = tmp_path / f"{algorithm}-{copy}.csv"
            # k-means index built inside each run, so clustering is covered too
            run_experiment(ExperimentConfig(algorithm, ds, QueryParams(k=20, seed=5, batch_size=2), repetitions=3,
                                            leaf_count=6, clustering_subsample=800, out=str(out)))
            outputs.append(_csv_without_timing(out))
        compared.append(outputs[0] == outputs[1])
    note(record_property, algorithms=len(compared), identical=sum(compared))
    assert all(compared)


def _per_element_overhead(index, table, algorithm, params):
    if algorithm == "ours":
        state, choose = QueryState.from_index(index, params), None
    else:
        state, choose = baseline_state(BaselineKind(algorithm), index, params, table)
    plugin = InMemoryPlugin(table, lambda _: 0.0)
    if choose is None:
        execute(state, plugin)
    else:
        execute(state, plugin, choose=choose)
    return state.overhead_seconds / state.t


@pytest.mark.criterion(10, "executor overhead per element within 10x of uniform sampling with a no-op scorer")
def test_criterion_10_overhead(record_property):
    ds = gen_synthetic(SyntheticSpec(20, 2500, seed=0))
    index = build_index(ds.pairs(), 20, clustering_subsample=5000, seed=0)
    table = dict.fromkeys(ds.ids, 0.0)
    params = QueryParams(k=100, bucket_count=8, scorer_latency=1.0, overhead_latency=0.05)
    ours = min(_per_element_overhead(index, table, "ours", params) for _ in range(3))
    uniform = min(_per_element_overhead(index, table, "uniform", params) for _ in range(3))
    note(record_property, depth=index.depth(), ours_us=f"{ours * 1e6:.1f}", uniform_us=f"{uniform * 1e6:.1f}",
         ratio=f"{ours / uniform:.2f}")
    assert index.depth() <= 10
    assert ours <= 10 * uniform
