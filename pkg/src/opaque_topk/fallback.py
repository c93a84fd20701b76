"""Runtime fallbacks for when the index stops paying for itself.

Two detectors run on a schedule once a warm-up share of the dataset has been
scored. The tree check flattens the hierarchy into a plain partition when a
greedy descent no longer reaches the best leaf. The clustering check abandons
the clusters for a shuffled scan of everything left when uniform sampling
promises a steeper STK-per-second slope than the bandit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .bandit import ModeEvent, QueryState, WorkNode


@dataclass
class FallbackSchedule:
    n: int
    warmup_fraction: float = 0.3
    check_fraction: float = 0.01
    last_check_t: Optional[int] = None

    @property
    def first_check(self) -> int:
        return math.ceil(self.warmup_fraction * self.n - 1e-9)

    @property
    def interval(self) -> int:
        return math.ceil(self.check_fraction * self.n - 1e-9)

    def due(self, t: int) -> bool:
        if t < self.first_check:
            return False
        return self.last_check_t is None or t - self.last_check_t >= self.interval

    def mark(self, t: int) -> None:
        self.last_check_t = t


def _leaf_gains(state: "QueryState") -> list[tuple["WorkNode", float]]:
    theta = state.solution.kth_score()
    return [(leaf, leaf.sketch.expected_gain(theta)) for leaf in state.leaves]


def tree_fallback_triggered(state: "QueryState") -> bool:
    """True when a fully greedy descent misses the leaf with the highest estimated gain.

    Ties are broken toward the smallest node id in both procedures: the leaf
    with the smallest id, and the child whose subtree holds the smallest leaf
    id. Identical sketches therefore never trigger.
    """
    from .bandit import Mode

    if state.mode is not Mode.TREE:
        raise ValueError("tree fallback only applies in TREE mode")
    if len(state.leaves) <= 1 or state.root is None:
        return False
    theta = state.solution.kth_score()
    greedy = min(_leaf_gains(state), key=lambda lg: (-lg[1], lg[0].node_id))[0]

    smallest: dict[int, str] = {}

    def min_leaf_id(node: "WorkNode") -> str:
        key = id(node)
        if key not in smallest:
            if node.children:
                smallest[key] = min(min_leaf_id(c) for c in node.children)
            else:
                smallest[key] = node.node_id
        return smallest[key]

    node = state.root
    while node.children:
        node = min(node.children, key=lambda c: (-c.sketch.expected_gain(theta), min_leaf_id(c)))
    return node is not greedy


def flatten(state: "QueryState") -> "ModeEvent":
    """Replace the tree by a single layer holding the current leaves."""
    from .bandit import Mode, WorkNode

    if state.mode is not Mode.TREE:
        raise ValueError(f"cannot flatten in {state.mode.value} mode")
    root = WorkNode("flat")
    root.children = list(state.leaves)
    for leaf in root.children:
        leaf.parent = root
    state.root = root if root.children else None
    return state.set_mode(Mode.FLAT, "tree")


def cluster_fallback_triggered(state: "QueryState") -> bool:
    """Compare the estimated STK slope of uniform sampling against the bandit's.

    The bandit's slope is the best leaf gain over scorer plus bandit latency;
    the sampling slope is the size-weighted mean leaf gain over scorer
    latency alone. The comparison is cross-multiplied so zero latencies are
    harmless.
    """
    from .bandit import Mode

    if state.mode is Mode.SAMPLE:
        raise ValueError("already sampling")
    scorer, overhead = state.latencies()
    if scorer is None or overhead is None:
        return False
    best = 0.0
    weighted = 0.0
    remaining = 0
    for leaf, gain in _leaf_gains(state):
        size = len(leaf.queue)
        weighted += size * gain
        remaining += size
        if gain > best:
            best = gain
    if remaining == 0:
        return False
    return weighted * (scorer + overhead) > best * remaining * scorer


def fallback_to_sample(state: "QueryState") -> "ModeEvent":
    """Merge and shuffle all remaining ids; later batches scan that list."""
    from .bandit import Mode

    if state.mode is Mode.SAMPLE:
        raise ValueError("already sampling")
    pool: list[str] = []
    for leaf in state.leaves:
        pool.extend(leaf.queue)
        leaf.queue.clear()
    state.rng.shuffle(pool)
    state.sample_queue = pool
    state.leaves = []
    state.root = None
    return state.set_mode(Mode.SAMPLE, "clustering")


def maybe_fallback(state: "QueryState") -> Optional["ModeEvent"]:
    """Run the scheduled checks; at most one mode transition per call."""
    from .bandit import Mode

    state.schedule.mark(state.t)
    if state.mode is Mode.TREE and tree_fallback_triggered(state):
        return flatten(state)
    if state.mode is not Mode.SAMPLE and cluster_fallback_triggered(state):
        return fallback_to_sample(state)
    return None
