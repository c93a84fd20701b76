"""Anytime top-k executor: hierarchical epsilon-greedy over histogram sketches.

Each iteration picks a leaf cluster by descending the index, one layer at a
time, draws unscored elements from it without replacement, scores them
through the plugin and folds the scores into the running solution and into
every sketch on the root-to-leaf path. Exhausted leaves are pruned and their
sketches subtracted from the ancestors.

The same loop drives the index-based and order-based baselines; they swap in
a different leaf chooser or start directly in SAMPLE mode.
"""

from __future__ import annotations

import enum
import math
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Protocol, Sequence

from .core import TopKSolution
from .histogram import HistogramSketch
from .index import Index, IndexNode


class Mode(str, enum.Enum):
    TREE = "TREE"
    FLAT = "FLAT"
    SAMPLE = "SAMPLE"


class Exhausted(Exception):
    """Raised when a step is requested but no unscored element remains."""


class ScorerError(RuntimeError):
    """The scoring plugin misbehaved (bad output length, invalid score, crash)."""


@dataclass(frozen=True)
class QueryParams:
    k: int = 100
    bucket_count: int = 8
    alpha: float = 0.1
    beta: float = 1.1
    fallback_frequency: float = 0.01
    batch_size: int = 1
    seed: int = 0
    fallback: bool = True
    rebin: bool = True
    subtraction: bool = True
    warmup_fraction: float = 0.3
    # pin the latencies the clustering fallback compares (seconds per element);
    # None means measure them while running
    scorer_latency: Optional[float] = None
    overhead_latency: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.bucket_count < 2:
            raise ValueError("bucket_count must be at least 2")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta < 1:
            raise ValueError("beta must be at least 1")
        if not 0 <= self.fallback_frequency <= 1:
            raise ValueError("fallback_frequency must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0 <= self.warmup_fraction <= 1:
            raise ValueError("warmup_fraction must lie in [0, 1]")
        for name in ("scorer_latency", "overhead_latency"):
            v = getattr(self, name)
            if v is not None and not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a non-negative number")


class ScorerPlugin(Protocol):
    def fetch_batch(self, ids: Sequence[str]) -> Sequence[Any]: ...

    def score_batch(self, elements: Sequence[Any]) -> Sequence[float]: ...


class InMemoryPlugin:
    """Plugin over an id -> element mapping and a per-element score function."""

    def __init__(self, elements: Mapping[str, Any], score: Callable[[Any], float]):
        self.elements = elements
        self.score = score

    def fetch_batch(self, ids):
        elements = self.elements
        return [elements[i] for i in ids]

    def score_batch(self, elements):
        score = self.score
        return [score(e) for e in elements]


@dataclass
class StopCondition:
    max_iterations: Optional[int] = None
    max_seconds: Optional[float] = None


@dataclass(frozen=True)
class ModeEvent:
    t: int
    from_mode: Mode
    to_mode: Mode
    reason: str


@dataclass
class Progress:
    """What the observer sees after each batch.

    ``solution`` is the live solution object; copy it to keep a snapshot.
    """

    t: int
    elapsed: float
    stk: float
    solution: TopKSolution
    mode: Mode
    overhead_seconds: float
    scored: list[tuple[str, float, float]]
    events: list[ModeEvent] = field(default_factory=list)


class WorkNode:
    """Mutable per-query mirror of an index node."""

    __slots__ = ("node_id", "parent", "children", "sketch", "queue", "visits", "reward")

    def __init__(self, node_id: str, parent: Optional["WorkNode"] = None,
                 sketch: Optional[HistogramSketch] = None, queue: Optional[list[str]] = None):
        self.node_id = node_id
        self.parent = parent
        self.children: list[WorkNode] = []
        self.sketch = sketch
        self.queue = queue
        self.visits = 0
        self.reward = 0.0

    def __repr__(self) -> str:
        return f"WorkNode({self.node_id!r}, children={len(self.children)}, queue={len(self.queue or ())})"

    @property
    def is_leaf(self) -> bool:
        return self.queue is not None


def exploration_probability(t: int, batch_size: int = 1) -> float:
    """Exploration chance ``ceil(t / batch_size) ** (-1/3)`` for the 1-based iteration ``t``."""
    if t < 1:
        raise ValueError("t must be at least 1")
    return (-(-t // batch_size)) ** (-1.0 / 3.0)


class QueryState:
    """Everything one in-flight query owns.

    ``t`` counts scored elements. In TREE and FLAT mode elements come from
    the leaves of ``root``; in SAMPLE mode from ``sample_queue`` (popped from
    the end).
    """

    def __init__(self, params: QueryParams, n: int):
        self.params = params
        self.n = n
        self.t = 0
        self.solution = TopKSolution(params.k)
        self.rng = random.Random(params.seed)
        self.mode = Mode.TREE
        self.root: Optional[WorkNode] = None
        self.leaves: list[WorkNode] = []
        self.sample_queue: list[str] = []
        self.histograms = True
        self.track_rewards = False
        self.scorer_latency_ema: Optional[float] = None
        self.overhead_latency_ema: Optional[float] = None
        self.overhead_seconds = 0.0
        self.plugin_seconds = 0.0
        self.pending_overhead = 0.0
        self.explore_steps = 0
        self.exploit_steps = 0
        self.events: list[ModeEvent] = []
        self.schedule = None

    @classmethod
    def from_index(cls, index: Index, params: QueryParams, histograms: bool = True,
                   track_rewards: bool = False) -> "QueryState":
        from .fallback import FallbackSchedule

        state = cls(params, index.dataset_size)
        state.histograms = histograms
        state.track_rewards = track_rewards
        B, alpha, rng = params.bucket_count, params.alpha, state.rng

        def mirror(node: IndexNode, parent: Optional[WorkNode]) -> WorkNode:
            sketch = HistogramSketch.empty(B, alpha) if histograms else None
            if node.children:
                w = WorkNode(node.node_id, parent, sketch)
                w.children = [mirror(c, w) for c in node.children]
                return w
            queue = list(node.elements)
            rng.shuffle(queue)
            w = WorkNode(node.node_id, parent, sketch, queue)
            state.leaves.append(w)
            return w

        state.root = mirror(index.root, None)
        state.schedule = FallbackSchedule(state.n, params.warmup_fraction, params.fallback_frequency)
        return state

    @classmethod
    def from_order(cls, order: Sequence[str], params: QueryParams) -> "QueryState":
        """A state that scans ``order`` front to back (order-based baselines)."""
        state = cls(params, len(order))
        state.histograms = False
        state.mode = Mode.SAMPLE
        state.sample_queue = list(reversed(order))
        return state

    @property
    def exhausted(self) -> bool:
        if self.mode is Mode.SAMPLE:
            return not self.sample_queue
        return self.root is None

    def remaining(self) -> int:
        if self.mode is Mode.SAMPLE:
            return len(self.sample_queue)
        return sum(len(leaf.queue) for leaf in self.leaves)

    def latencies(self) -> tuple[Optional[float], Optional[float]]:
        """(scorer, overhead) seconds per element used by the clustering fallback."""
        p = self.params
        s = p.scorer_latency if p.scorer_latency is not None else self.scorer_latency_ema
        o = p.overhead_latency if p.overhead_latency is not None else self.overhead_latency_ema
        return s, o

    def set_mode(self, mode: Mode, reason: str) -> ModeEvent:
        event = ModeEvent(self.t, self.mode, mode, reason)
        self.mode = mode
        self.events.append(event)
        return event


def _pick_best(kids: list[WorkNode], theta: float, rng: random.Random) -> WorkNode:
    best = -1.0
    ties: list[WorkNode] = []
    for c in kids:
        g = c.sketch.expected_gain(theta)
        if g > best:
            best = g
            ties = [c]
        elif g == best:
            ties.append(c)
    if len(ties) == 1:
        return ties[0]
    return ties[rng.randrange(len(ties))]


def choose_leaf(state: QueryState) -> WorkNode:
    """Pick a leaf: one exploration coin governs the whole descent."""
    node = state.root
    if node is None or state.mode is Mode.SAMPLE:
        raise Exhausted("no leaf left to choose")
    rng = state.rng
    explore = rng.random() < exploration_probability(state.t + 1, state.params.batch_size)
    if explore:
        state.explore_steps += 1
    else:
        state.exploit_steps += 1
    theta = state.solution.kth_score()
    while node.children:
        kids = node.children
        if len(kids) == 1:
            node = kids[0]
        elif explore:
            node = kids[rng.randrange(len(kids))]
        else:
            node = _pick_best(kids, theta, rng)
    return node


def prune_empty(state: QueryState, leaf: WorkNode) -> None:
    """Drop an exhausted leaf, subtract its sketch upward, drop childless ancestors."""
    if leaf.queue:
        raise ValueError("leaf still has unscored elements")
    sketch = leaf.sketch
    if state.params.subtraction and sketch is not None and sketch.total_mass > 0:
        a = leaf.parent
        while a is not None:
            if a.sketch is not None:
                a.sketch.subtract(sketch)
            a = a.parent
    state.leaves.remove(leaf)
    node = leaf
    while True:
        parent = node.parent
        if parent is None:
            state.root = None
            break
        parent.children.remove(node)
        if parent.children:
            break
        node = parent


def _validated(scores: Sequence[float], expected: int) -> list[float]:
    scores = list(scores)
    if len(scores) != expected:
        raise ScorerError(f"scorer returned {len(scores)} scores for {expected} elements")
    out = []
    isfinite = math.isfinite
    for s in scores:
        if isinstance(s, bool):
            raise ScorerError(f"invalid score {s!r}")
        try:
            s = float(s)
        except (TypeError, ValueError):
            raise ScorerError(f"invalid score {s!r}") from None
        if not (s >= 0.0 and isfinite(s)):
            raise ScorerError(f"scores must be non-negative and finite, got {s!r}")
        out.append(s)
    return out


def _ema(old: Optional[float], value: float, decay: float = 0.1) -> float:
    return value if old is None else old + decay * (value - old)


def step_batch(state: QueryState, plugin: ScorerPlugin,
               choose: Callable[[QueryState], WorkNode] = choose_leaf,
               limit: Optional[int] = None) -> list[tuple[str, float, float]]:
    """Score one batch and fold it into the solution and the sketches.

    Returns ``(id, score, marginal_gain)`` per scored element. If the plugin
    fails, the drawn ids go back to their queue and nothing else changes.
    """
    clock = time.perf_counter
    start = clock()
    if state.exhausted:
        raise Exhausted("every element has been scored")
    size = state.params.batch_size
    if limit is not None:
        size = min(size, limit)
    if size < 1:
        raise ValueError("batch limit must be positive")
    leaf = None
    if state.mode is Mode.SAMPLE:
        queue = state.sample_queue
    else:
        leaf = choose(state)
        queue = leaf.queue
    take = min(size, len(queue))
    ids = queue[-take:]
    del queue[-take:]
    ids.reverse()

    p0 = clock()
    try:
        elements = plugin.fetch_batch(ids)
        scores = _validated(plugin.score_batch(elements), len(ids))
    except BaseException as exc:
        ids.reverse()
        queue.extend(ids)
        if isinstance(exc, (ScorerError, KeyboardInterrupt)):
            raise
        raise ScorerError(f"scorer failed: {exc!r}") from exc
    plugin_time = clock() - p0

    solution = state.solution
    offer = solution.offer
    results = []
    if leaf is not None and (state.histograms or state.track_rewards):
        path = []
        node = leaf
        while node is not None:
            path.append(node)
            node = node.parent
        if state.histograms:
            params = state.params
            beta = params.beta
            rebin = params.rebin
            sketches = [node.sketch for node in path if node.sketch is not None]
            for i, s in zip(ids, scores):
                for sk in sketches:
                    if s > sk.edges[-1]:
                        sk.extend_range(s, beta)
                gain = offer(i, s)
                if rebin:
                    kth = solution.kth_score()
                    if kth > 0.0:
                        for sk in sketches:
                            if kth > sk.edges[2]:
                                sk.collapse_low(kth)
                for sk in sketches:
                    sk.record(s)
                results.append((i, s, gain))
        else:
            for i, s in zip(ids, scores):
                results.append((i, s, offer(i, s)))
        if state.track_rewards:
            batch_gain = sum(r[2] for r in results)
            for node in path:
                node.visits += take
                node.reward += batch_gain
    else:
        for i, s in zip(ids, scores):
            results.append((i, s, offer(i, s)))

    state.t += take
    if leaf is not None and not leaf.queue:
        prune_empty(state, leaf)

    total = clock() - start
    overhead = total - plugin_time + state.pending_overhead
    state.pending_overhead = 0.0
    state.plugin_seconds += plugin_time
    state.overhead_seconds += overhead
    state.scorer_latency_ema = _ema(state.scorer_latency_ema, plugin_time / take)
    state.overhead_latency_ema = _ema(state.overhead_latency_ema, overhead / take)
    return results


def execute(state: QueryState, plugin: ScorerPlugin, stop: Optional[StopCondition] = None,
            observer: Optional[Callable[[Progress], None]] = None,
            choose: Callable[[QueryState], WorkNode] = choose_leaf) -> QueryState:
    """Drive ``state`` until the stop condition or exhaustion."""
    from .fallback import maybe_fallback

    stop = stop or StopCondition()
    max_iter = stop.max_iterations
    max_sec = stop.max_seconds
    clock = time.perf_counter
    check = state.params.fallback and state.histograms and state.schedule is not None
    elapsed = 0.0
    seen_events = len(state.events)
    while not state.exhausted:
        if max_iter is not None and state.t >= max_iter:
            break
        if max_sec is not None and elapsed >= max_sec:
            break
        start = clock()
        if check and state.mode is not Mode.SAMPLE and state.schedule.due(state.t):
            maybe_fallback(state)
            state.pending_overhead += clock() - start
            if state.exhausted:
                elapsed += clock() - start
                break
        limit = None if max_iter is None else max_iter - state.t
        scored = step_batch(state, plugin, choose, limit)
        elapsed += clock() - start
        if observer is not None:
            events = state.events[seen_events:]
            seen_events = len(state.events)
            observer(Progress(state.t, elapsed, state.solution.stk, state.solution, state.mode,
                              state.overhead_seconds, scored, events))
    return state


def run(index: Index, params: QueryParams, plugin: ScorerPlugin, stop: Optional[StopCondition] = None,
        observer: Optional[Callable[[Progress], None]] = None) -> TopKSolution:
    """Answer one top-k query over ``index`` and return the running solution at stop time."""
    state = QueryState.from_index(index, params)
    execute(state, plugin, stop, observer)
    return state.solution
