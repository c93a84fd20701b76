"""Brute-force and Monte Carlo references for the objective's lattice properties.

These run on small discrete instances: exhaustive enumeration for the
deterministic objective, tape-coupled Monte Carlo for the budgeted-sampling
value, and exact-PMF greedy as the known-distribution reference policy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import TopKSolution, stk


@dataclass(frozen=True)
class DiscreteArm:
    outcomes: tuple[int, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.outcomes) != len(self.probabilities) or not self.outcomes:
            raise ValueError("outcomes and probabilities must be non-empty and aligned")
        if any(o < 0 for o in self.outcomes):
            raise ValueError("outcomes must be non-negative")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(self.probabilities) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def from_weights(cls, weights: Mapping[int, float]) -> "DiscreteArm":
        total = math.fsum(weights.values())
        keys = sorted(weights)
        probs = [weights[x] / total for x in keys]
        probs[-1] = 1.0 - math.fsum(probs[:-1])
        return cls(tuple(keys), tuple(probs))

    def expected_excess(self, theta: float) -> float:
        return math.fsum(p * max(x - theta, 0.0) for x, p in zip(self.outcomes, self.probabilities))

    def _cdf(self) -> np.ndarray:
        cdf = np.cumsum(self.probabilities)
        cdf[-1] = 1.0
        return cdf


# --------------------------------------------------------------------------
# budgeted sampling value


def _tapes(arms: Sequence[DiscreteArm], length: int, trials: int, seed: int) -> list[np.ndarray]:
    """Per-arm ``(trials, length)`` sample tapes.

    Column ``j`` is drawn after columns ``0..j-1`` from a per-arm stream, so a
    longer tape extends a shorter one with the same seed: every budget reads
    the same prefix, which is what couples separate estimates.
    """
    tapes = []
    for l, arm in enumerate(arms):
        rng = np.random.default_rng([seed, l])
        cdf = arm._cdf()
        outcomes = np.asarray(arm.outcomes, dtype=float)
        tape = np.empty((trials, length))
        for j in range(length):
            tape[:, j] = outcomes[np.searchsorted(cdf, rng.random(trials), side="right").clip(max=len(cdf) - 1)]
        tapes.append(tape)
    return tapes


def _stk_rows(samples: np.ndarray, k: int) -> np.ndarray:
    if samples.shape[1] == 0:
        return np.zeros(samples.shape[0])
    if samples.shape[1] <= k:
        return samples.sum(1)
    return -np.sort(-samples, axis=1)[:, :k].sum(1)


def bs_samples(arms: Sequence[DiscreteArm], budgets: Sequence[Sequence[int]], k: int, trials: int,
               seed: int) -> np.ndarray:
    """Per-trial STK for each budget vector, all read from shared tapes.

    Returns an array of shape ``(len(budgets), trials)``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    budgets = [list(b) for b in budgets]
    for b in budgets:
        if len(b) != len(arms) or any(x < 0 for x in b):
            raise ValueError("budget vectors need one non-negative entry per arm")
    length = max((max(b) for b in budgets), default=0)
    tapes = _tapes(arms, length, trials, seed)
    out = np.empty((len(budgets), trials))
    for r, b in enumerate(budgets):
        parts = [tape[:, :x] for tape, x in zip(tapes, b)]
        out[r] = _stk_rows(np.concatenate(parts, axis=1), k)
    return out


def bs_estimate(arms: Sequence[DiscreteArm], budget: Sequence[int], k: int, trials: int,
                seed: int) -> tuple[float, float]:
    """Monte Carlo mean and standard error of the expected STK under ``budget``."""
    values = bs_samples(arms, [budget], k, trials, seed)[0]
    if trials == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(trials))


@dataclass
class PropertyReport:
    name: str
    checked: int = 0
    violations: int = 0
    counterexample: Optional[dict] = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "violations": self.violations,
            "counterexample": self.counterexample,
            **self.details,
        }

    def _fail(self, **example) -> None:
        self.violations += 1
        if self.counterexample is None:
            self.counterexample = example


def _budget_grid(arm_count: int, max_budget: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(max_budget + 1), repeat=arm_count))


def check_bs_properties(arms: Sequence[DiscreteArm], k: int, max_budget: int, trials: int, seed: int,
                        sigmas: float = 3.0) -> PropertyReport:
    """Monotonicity and the DR inequality of the budgeted-sampling value.

    Every budget up to ``max_budget`` per arm (plus one unit on each arm) is
    estimated on one set of coupled tapes. Each inequality is tested on the
    per-trial paired differences and counts as violated only when it fails by
    more than ``sigmas`` standard errors of that paired difference.
    """
    L = len(arms)
    grid = _budget_grid(L, max_budget)
    extended = _budget_grid(L, max_budget + 1)
    pos = {b: r for r, b in enumerate(extended)}
    values = bs_samples(arms, extended, k, trials, seed)
    root_n = math.sqrt(trials)
    report = PropertyReport("bs_monotone_dr", details={"k": k, "trials": trials, "seed": seed})

    def up(b: tuple[int, ...], i: int) -> tuple[int, ...]:
        return b[:i] + (b[i] + 1,) + b[i + 1:]

    def margin(diff: np.ndarray) -> tuple[float, float]:
        return float(diff.mean()), float(diff.std(ddof=1) / root_n) if trials > 1 else 0.0

    for x in grid:
        for i in range(L):
            # monotone: BS(X + e_i) - BS(X) >= 0
            gx = values[pos[up(x, i)]] - values[pos[x]]
            mean, se = margin(gx)
            report.checked += 1
            if mean < -sigmas * se - 1e-12:
                report._fail(kind="monotone", x=x, i=i, mean=mean, se=se)
            for y in grid:
                if y == x or any(a > b for a, b in zip(x, y)):
                    continue
                gy = values[pos[up(y, i)]] - values[pos[y]]
                mean, se = margin(gx - gy)
                report.checked += 1
                if mean < -sigmas * se - 1e-12:
                    report._fail(kind="dr", x=x, y=y, i=i, mean=mean, se=se)
    return report


# --------------------------------------------------------------------------
# deterministic objective


def _multisets(max_value: int, max_size: int) -> list[tuple[int, ...]]:
    """All count vectors over ``0..max_value`` with total count at most ``max_size``."""
    out = []
    for size in range(max_size + 1):
        for combo in itertools.combinations_with_replacement(range(max_value + 1), size):
            counts = [0] * (max_value + 1)
            for v in combo:
                counts[v] += 1
            out.append(tuple(counts))
    return out


def _expand(counts: Sequence[int]) -> list[int]:
    return [v for v, c in enumerate(counts) for _ in range(c)]


def check_stk_properties(max_value: int = 3, max_size: int = 5, k_range: Iterable[int] = (1, 2, 3),
                         objective: Callable[[Sequence[float], int], float] = stk) -> PropertyReport:
    """Exhaustively check monotonicity and DR-submodularity of ``objective``.

    Covers every multiset over ``0..max_value`` of size at most ``max_size``,
    every comparable pair ``S1 <= S2`` (by multiplicity) and every added
    value ``x``.
    """
    sets = _multisets(max_value, max_size)
    report = PropertyReport("stk_monotone_dr", details={"max_value": max_value, "max_size": max_size})
    values = range(max_value + 1)
    pairs = [
        (a, b) for a in sets for b in sets if all(p <= q for p, q in zip(a, b))
    ]
    report.details["multisets"] = len(sets)
    report.details["comparable_pairs"] = len(pairs)
    for k in k_range:
        base = {s: objective(_expand(s), k) for s in sets}
        plus = {(s, x): objective(_expand(s) + [x], k) for s in sets for x in values}
        for s1, s2 in pairs:
            report.checked += 1
            if base[s1] > base[s2]:
                report._fail(kind="monotone", k=k, s1=_expand(s1), s2=_expand(s2))
            for x in values:
                report.checked += 1
                g1 = plus[(s1, x)] - base[s1]
                g2 = plus[(s2, x)] - base[s2]
                if g1 < 0 or g2 < 0:
                    report._fail(kind="monotone", k=k, s=_expand(s1), x=x)
                if g1 < g2:
                    report._fail(kind="dr", k=k, s1=_expand(s1), s2=_expand(s2), x=x, gain1=g1, gain2=g2)
    return report


def exact_gain_discrete(counts: Mapping[float, float], theta: float) -> float:
    """Empirical expected excess ``sum_x (N_x / N) * max(x - theta, 0)``."""
    total = math.fsum(counts.values())
    if total <= 0:
        return 0.0
    return math.fsum(c * max(x - theta, 0.0) for x, c in counts.items()) / total


# --------------------------------------------------------------------------
# known-distribution policies


def policy_trajectory(arms: Sequence[DiscreteArm], k: int, T: int, seed: int, trials: int,
                      choose: Callable[[int, float, np.random.Generator], int]) -> np.ndarray:
    """Mean STK after each of ``T`` steps under an arm-choosing policy.

    ``choose(t, kth_score, rng)`` returns the arm index for step ``t``
    (1-based). Samples are i.i.d. from the chosen arm's PMF.
    """
    rng = np.random.default_rng(seed)
    cdfs = [a._cdf() for a in arms]
    outs = [np.asarray(a.outcomes, dtype=float) for a in arms]
    total = np.zeros(T)
    for _ in range(trials):
        sol = TopKSolution(k)
        for t in range(1, T + 1):
            arm = choose(t, sol.kth_score(), rng)
            j = min(int(np.searchsorted(cdfs[arm], rng.random(), side="right")), len(cdfs[arm]) - 1)
            sol.offer(str(t), float(outs[arm][j]))
            total[t - 1] += sol.stk
    return total / trials


def greedy_known_distributions(arms: Sequence[DiscreteArm], k: int, T: int, seed: int,
                               trials: int) -> np.ndarray:
    """Adaptive greedy with the true PMFs: each step takes the largest expected gain.

    Ties go to the lowest arm index.
    """

    def choose(t: int, theta: float, rng: np.random.Generator) -> int:
        gains = [a.expected_excess(theta) for a in arms]
        return int(np.argmax(gains))

    return policy_trajectory(arms, k, T, seed, trials, choose)


def random_arms(count: int, max_outcome: int, seed: int) -> list[DiscreteArm]:
    """Arms with random supports inside ``0..max_outcome`` and Dirichlet weights."""
    rng = np.random.default_rng(seed)
    arms = []
    for _ in range(count):
        size = int(rng.integers(1, max_outcome + 2))
        support = sorted(rng.choice(max_outcome + 1, size=size, replace=False).tolist())
        weights = rng.dirichlet(np.ones(size))
        arms.append(DiscreteArm.from_weights(dict(zip(support, weights.tolist()))))
    return arms
