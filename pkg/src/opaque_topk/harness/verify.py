"""Property checks bundled into one JSON pass/fail report."""

from __future__ import annotations

import time

import numpy as np

from .. import oracle


def _timed(fn, *args, **kwargs) -> dict:
    start = time.perf_counter()
    report = fn(*args, **kwargs)
    out = report.to_dict() if hasattr(report, "to_dict") else report
    out["seconds"] = time.perf_counter() - start
    return out


def dominance_check(seed: int = 0, T: int = 30, trials: int = 50) -> dict:
    """Known-distribution greedy on two arms, one shifted up by one.

    The shifted arm has the larger expected excess at every threshold, so the
    weaker arm may only be picked once both gains are zero.
    """
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(5))
    weak = oracle.DiscreteArm.from_weights(dict(enumerate(weights.tolist())))
    strong = oracle.DiscreteArm.from_weights({x + 1: p for x, p in enumerate(weights.tolist())})
    picks = []

    def choose(t, theta, rng_):
        gains = [a.expected_excess(theta) for a in (weak, strong)]
        arm = int(np.argmax(gains))
        picks.append(arm == 0 and gains[1] > 0)
        return arm

    oracle.policy_trajectory([weak, strong], 3, T, seed, trials, choose)
    weak_picks = sum(picks)
    return {
        "name": "greedy_dominance",
        "passed": weak_picks == 0,
        "checked": len(picks),
        "violations": weak_picks,
        "counterexample": None,
    }


def run_verify(seeds: int = 5, trials: int = 10_000, max_budget: int = 4, quick: bool = False) -> dict:
    """Exhaustive STK checks plus coupled Monte Carlo checks of the sampling value.

    ``quick`` shrinks the Monte Carlo part (one seed, 2000 trials, budgets up
    to 2) for smoke runs.
    """
    if quick:
        seeds, trials, max_budget = 1, 2000, 2
    checks = [_timed(oracle.check_stk_properties, 3, 5, (1, 2, 3))]
    for seed in range(seeds):
        arms = oracle.random_arms(3, 5, seed)
        for k in (1, 2, 3):
            entry = _timed(oracle.check_bs_properties, arms, k, max_budget, trials, seed)
            entry["arms"] = [{"outcomes": list(a.outcomes), "probabilities": list(a.probabilities)} for a in arms]
            checks.append(entry)
    checks.append(_timed(dominance_check))
    return {
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
    }
