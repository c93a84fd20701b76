"""Value types, the sum-of-top-k objective and the bounded top-k solution."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Optional


class ScoredElement(NamedTuple):
    id: str
    score: float


def check_score(score: float) -> float:
    """Return ``score`` as a float, rejecting negative, NaN or infinite values."""
    score = float(score)
    if not (score >= 0.0 and math.isfinite(score)):
        raise ValueError(f"score must be non-negative and finite, got {score!r}")
    return score


def stk(scores: Iterable[float], k: int) -> float:
    """Sum of the ``k`` largest values of ``scores`` (all of them if fewer than ``k``).

    Summed with ``math.fsum``, so the result does not depend on input order.
    """
    if k < 1:
        raise ValueError("k must be positive")
    return math.fsum(heapq.nlargest(k, scores))


@dataclass
class InsertResult:
    gain: float
    evicted: Optional[ScoredElement] = None


class TopKSolution:
    """The running solution: at most ``k`` scored elements and their cached STK.

    Backed by a min-heap of ``(score, id)`` pairs, so the root is the eviction
    candidate. Among entries tied at the minimum score the lexicographically
    smallest id sits at the root and is evicted first.
    """

    __slots__ = ("k", "_heap", "stk")

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be positive")
        self.k = k
        self._heap: list[tuple[float, str]] = []
        self.stk = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def __iter__(self) -> Iterator[ScoredElement]:
        return (ScoredElement(i, s) for s, i in self._heap)

    def __repr__(self) -> str:
        return f"TopKSolution(k={self.k}, size={len(self._heap)}, stk={self.stk!r})"

    @property
    def full(self) -> bool:
        return len(self._heap) == self.k

    def kth_score(self) -> float:
        """The k-th largest score, or 0 while fewer than k entries are held."""
        heap = self._heap
        return heap[0][0] if len(heap) == self.k else 0.0

    def insert(self, element_id: str, score: float) -> InsertResult:
        heap = self._heap
        if len(heap) < self.k:
            heapq.heappush(heap, (score, element_id))
            self.stk += score
            return InsertResult(score)
        low = heap[0][0]
        if score <= low:
            return InsertResult(0.0)
        old_score, old_id = heapq.heapreplace(heap, (score, element_id))
        gain = score - old_score
        self.stk += gain
        return InsertResult(gain, ScoredElement(old_id, old_score))

    def offer(self, element_id: str, score: float) -> float:
        """Like :meth:`insert` but only returns the marginal gain (hot path)."""
        heap = self._heap
        if len(heap) < self.k:
            heapq.heappush(heap, (score, element_id))
            self.stk += score
            return score
        if score <= heap[0][0]:
            return 0.0
        gain = score - heapq.heapreplace(heap, (score, element_id))[0]
        self.stk += gain
        return gain

    def ids(self) -> list[str]:
        return [i for _, i in self._heap]

    def scores(self) -> list[float]:
        return [s for s, _ in self._heap]

    def ranked(self) -> list[ScoredElement]:
        """Entries ordered by descending score, ties by ascending id."""
        return [ScoredElement(i, s) for s, i in sorted(self._heap, key=lambda e: (-e[0], e[1]))]

    def copy(self) -> "TopKSolution":
        other = TopKSolution(self.k)
        other._heap = list(self._heap)
        other.stk = self.stk
        return other

    def recompute_stk(self) -> float:
        """Correctly rounded sum of the held scores.

        ``stk`` is updated incrementally and can drift by a few ulps from this
        value; two solutions holding the same scores always agree here.
        """
        return math.fsum(s for s, _ in self._heap)
