"""Reference strategies sharing the executor loop.

UCB and exploration-only descend the same index as the bandit; uniform
sampling and the best/worst-order scans walk a fixed permutation; sorted-scan
answers from a precomputed score table without scoring anything.
"""

from __future__ import annotations

import enum
import math
import random
from typing import Callable, Mapping, Optional, Sequence

from .bandit import (
    Exhausted,
    Progress,
    QueryParams,
    QueryState,
    ScorerPlugin,
    StopCondition,
    WorkNode,
    execute,
)
from .core import TopKSolution
from .index import Index

UCB_EXPLORATION = 1.0


class BaselineKind(str, enum.Enum):
    UCB = "ucb"
    EXPLORATION_ONLY = "exploration-only"
    UNIFORM_SAMPLE = "uniform"
    SCAN_BEST = "scan-best"
    SCAN_WORST = "scan-worst"
    SORTED_SCAN = "sorted-scan"

    @property
    def needs_scores(self) -> bool:
        return self in (BaselineKind.SCAN_BEST, BaselineKind.SCAN_WORST, BaselineKind.SORTED_SCAN)


def ucb_choose(state: QueryState) -> WorkNode:
    """UCB1 descent on per-node mean marginal gain; unvisited children go first."""
    node = state.root
    if node is None:
        raise Exhausted("no leaf left to choose")
    rng = state.rng
    while node.children:
        kids = node.children
        if len(kids) == 1:
            node = kids[0]
            continue
        fresh = [c for c in kids if c.visits == 0]
        if fresh:
            node = fresh[rng.randrange(len(fresh))] if len(fresh) > 1 else fresh[0]
            continue
        log_t = math.log(max(node.visits, 1))
        best = -math.inf
        ties: list[WorkNode] = []
        for c in kids:
            value = c.reward / c.visits + UCB_EXPLORATION * math.sqrt(2.0 * log_t / c.visits)
            if value > best:
                best = value
                ties = [c]
            elif value == best:
                ties.append(c)
        node = ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]
    return node


def exploration_only_choose(state: QueryState) -> WorkNode:
    """Uniformly random non-empty child at every layer."""
    node = state.root
    if node is None:
        raise Exhausted("no leaf left to choose")
    rng = state.rng
    while node.children:
        kids = node.children
        node = kids[rng.randrange(len(kids))] if len(kids) > 1 else kids[0]
    return node


def uniform_sample_order(ids: Sequence[str], seed: int) -> list[str]:
    order = list(ids)
    random.Random(seed).shuffle(order)
    return order


def oracle_orders(score_table: Mapping[str, float]) -> tuple[list[str], list[str]]:
    """Best (descending score) and worst (ascending score) scan orders, ties by id."""
    best = sorted(score_table, key=lambda i: (-score_table[i], i))
    worst = sorted(score_table, key=lambda i: (score_table[i], i))
    return best, worst


def sorted_scan(score_table: Mapping[str, float], k: int) -> TopKSolution:
    """Exact top-k read off a precomputed score table."""
    solution = TopKSolution(k)
    best, _ = oracle_orders(score_table)
    for i in best[:k]:
        solution.insert(i, score_table[i])
    return solution


def baseline_state(kind: BaselineKind, index: Index, params: QueryParams,
                   score_table: Optional[Mapping[str, float]] = None) -> tuple[QueryState, Callable]:
    """Fresh query state and leaf chooser for a scoring baseline."""
    kind = BaselineKind(kind)
    if kind is BaselineKind.UCB:
        return QueryState.from_index(index, params, histograms=False, track_rewards=True), ucb_choose
    if kind is BaselineKind.EXPLORATION_ONLY:
        return QueryState.from_index(index, params, histograms=False), exploration_only_choose
    if kind is BaselineKind.UNIFORM_SAMPLE:
        return QueryState.from_order(uniform_sample_order(index.element_ids(), params.seed), params), None
    if kind in (BaselineKind.SCAN_BEST, BaselineKind.SCAN_WORST):
        if score_table is None:
            raise ValueError(f"{kind.value} needs a precomputed score table")
        best, worst = oracle_orders(score_table)
        return QueryState.from_order(best if kind is BaselineKind.SCAN_BEST else worst, params), None
    raise ValueError(f"{kind.value} does not run through the executor")


def run_baseline(kind: BaselineKind, index: Index, params: QueryParams, plugin: ScorerPlugin,
                 stop: Optional[StopCondition] = None, observer: Optional[Callable[[Progress], None]] = None,
                 score_table: Optional[Mapping[str, float]] = None) -> TopKSolution:
    kind = BaselineKind(kind)
    if kind is BaselineKind.SORTED_SCAN:
        if score_table is None:
            raise ValueError("sorted-scan needs a precomputed score table")
        return sorted_scan(score_table, params.k)
    state, choose = baseline_state(kind, index, params, score_table)
    if choose is None:
        execute(state, plugin, stop, observer)
    else:
        execute(state, plugin, stop, observer, choose=choose)
    return state.solution
