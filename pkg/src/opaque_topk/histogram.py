"""Equal-width histogram sketch of one arm's score distribution.

Scores inside a bin are treated as uniformly spread over the bin (the uniform
value assumption). Every maintenance operation below moves mass between bin
layouts by interval overlap under that assumption.

Bin counts are small (8 by default), so the sketch works on plain lists;
numpy call overhead would dominate at this size.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from typing import Sequence

# Residual mass below this fraction of a bin's previous mass is rounding noise.
_SNAP = 1e-9


def _grid(lo: float, hi: float, bins: int) -> list[float]:
    step = (hi - lo) / bins
    edges = [lo + step * i for i in range(bins)]
    edges.append(hi)
    return edges


def _rebin(src_edges: Sequence[float], src_mass: Sequence[float], dst_edges: Sequence[float]) -> list[float]:
    """Spread ``src_mass`` uniformly inside its bins and collect it on ``dst_edges``.

    Mass outside the destination range is dropped.
    """
    nd = len(dst_edges) - 1
    out = [0.0] * nd
    j = 0
    for i, m in enumerate(src_mass):
        a = src_edges[i]
        b = src_edges[i + 1]
        while j < nd and dst_edges[j + 1] <= a:
            j += 1
        if m == 0.0:
            continue
        width = b - a
        jj = j
        while jj < nd and dst_edges[jj] < b:
            lo = dst_edges[jj]
            hi = dst_edges[jj + 1]
            if lo <= a and hi >= b:
                out[jj] += m
                break
            lo = a if a > lo else lo
            hi = b if b < hi else hi
            if hi > lo:
                out[jj] += m * (hi - lo) / width
            jj += 1
    return out


class HistogramSketch:
    """Adaptive equal-width histogram over ``[0, max_edge]``.

    ``mass`` holds real-valued bin weights: subtraction and re-binning make
    them fractional, so the sketch normalizes by ``total_mass`` instead of a
    visit counter.
    """

    __slots__ = ("edges", "mass", "total_mass", "_theta", "_gain")

    def __init__(self, edges: Sequence[float], mass: Sequence[float]):
        edges = [float(e) for e in edges]
        mass = [float(m) for m in mass]
        if len(edges) < 3:
            raise ValueError("a sketch needs at least 2 bins")
        if len(mass) != len(edges) - 1:
            raise ValueError(f"expected {len(edges) - 1} bin masses, got {len(mass)}")
        if edges[0] != 0.0:
            raise ValueError("the lowest edge must be 0")
        for lo, hi in zip(edges, edges[1:]):
            if not hi > lo:
                raise ValueError("edges must be strictly increasing")
        if not math.isfinite(edges[-1]):
            raise ValueError("edges must be finite")
        for m in mass:
            if not (m >= 0.0 and math.isfinite(m)):
                raise ValueError("bin mass must be non-negative and finite")
        self.edges = edges
        self.mass = mass
        self.total_mass = math.fsum(mass)
        self._theta: float | None = None
        self._gain = 0.0

    @classmethod
    def empty(cls, bucket_count: int, initial_max: float) -> "HistogramSketch":
        if bucket_count < 2:
            raise ValueError("bucket_count must be at least 2")
        if not initial_max > 0:
            raise ValueError("initial_max must be positive")
        return cls(_grid(0.0, float(initial_max), bucket_count), [0.0] * bucket_count)

    @property
    def bucket_count(self) -> int:
        return len(self.mass)

    @property
    def max_edge(self) -> float:
        return self.edges[-1]

    def __repr__(self) -> str:
        return f"HistogramSketch(edges={self.edges!r}, mass={self.mass!r})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HistogramSketch):
            return NotImplemented
        return self.edges == other.edges and self.mass == other.mass

    def copy(self) -> "HistogramSketch":
        other = HistogramSketch.__new__(HistogramSketch)
        other.edges = list(self.edges)
        other.mass = list(self.mass)
        other.total_mass = self.total_mass
        other._theta = self._theta
        other._gain = self._gain
        return other

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "mass": list(self.mass)}

    @classmethod
    def from_dict(cls, data: dict) -> "HistogramSketch":
        return cls(data["edges"], data["mass"])

    def _set(self, edges: list[float], mass: list[float]) -> None:
        self.edges = edges
        self.mass = mass
        self.total_mass = math.fsum(mass)
        self._theta = None

    def record(self, score: float, weight: float = 1.0) -> None:
        """Add ``weight`` to the bin containing ``score``.

        Interior edges belong to the higher bin; the top edge belongs to the
        top bin. Scores above the top edge must be handled with
        :meth:`extend_range` first.
        """
        edges = self.edges
        if score > edges[-1] or score < 0.0:
            raise ValueError(f"score {score!r} outside sketch range [0, {edges[-1]!r}]")
        i = bisect_right(edges, score) - 1
        last = len(edges) - 2
        if i > last:
            i = last
        self.mass[i] += weight
        self.total_mass += weight
        self._theta = None

    def expected_gain(self, threshold: float) -> float:
        """Expected excess ``E[max(X - threshold, 0)]`` under the piecewise-uniform model."""
        total = self.total_mass
        if total <= 0.0:
            return 0.0
        if threshold == self._theta:
            return self._gain
        edges = self.edges
        mass = self.mass
        start = bisect_right(edges, threshold) - 1
        if start < 0:
            start = 0
        g = 0.0
        for i in range(start, len(mass)):
            m = mass[i]
            if m:
                a = edges[i]
                b = edges[i + 1]
                if threshold <= a:
                    g += m * ((a + b) * 0.5 - threshold)
                elif threshold < b:
                    d = b - threshold
                    g += m * d * d / (2.0 * (b - a))
        g /= total
        self._theta = threshold
        self._gain = g
        return g

    def mean(self) -> float:
        return self.expected_gain(0.0)

    def extend_range(self, observed: float, beta: float) -> None:
        """Re-grid to ``B`` equal bins over ``[0, beta * observed]``."""
        if beta < 1.0:
            raise ValueError("beta must be at least 1")
        if not observed > self.edges[-1]:
            raise ValueError("extend_range needs an observation above the current range")
        new_edges = _grid(0.0, beta * observed, len(self.mass))
        self._set(new_edges, _rebin(self.edges, self.mass, new_edges))

    def collapse_low(self, kth: float) -> bool:
        """Merge the bins under the running k-th score into one bottom bin.

        The bottom bin becomes ``[0, e]`` with ``e`` the largest edge at or
        below ``kth`` (at most the top interior edge); ``[e, max_edge]`` is
        re-split into ``B - 1`` equal bins. Returns False, leaving the sketch
        untouched, when ``kth`` is at or above the top edge (nothing above it
        to refine) or when the new bins would be numerically degenerate.
        """
        edges = self.edges
        top = edges[-1]
        if not kth > edges[2]:
            raise ValueError("collapse_low requires kth above the second-lowest bin")
        if kth >= top:
            return False
        i = bisect_right(edges, kth) - 1
        e = edges[i]
        new_edges = [0.0] + _grid(e, top, len(self.mass) - 1)
        for lo, hi in zip(new_edges, new_edges[1:]):
            if not hi > lo:
                return False
        self._set(new_edges, _rebin(edges, self.mass, new_edges))
        return True

    def subtract(self, child: "HistogramSketch") -> None:
        """Remove ``child``'s mass from this sketch bin by bin, clamping at 0."""
        removed = _rebin(child.edges, child.mass, self.edges)
        mass = []
        for m, r in zip(self.mass, removed):
            left = m - r
            if left <= _SNAP * m:
                left = 0.0
            mass.append(left)
        self._set(self.edges, mass)


def new_sketch(bucket_count: int, initial_max: float) -> HistogramSketch:
    return HistogramSketch.empty(bucket_count, initial_max)
