"""Metric rows, CSV emission and checkpoint summaries."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import astuple, dataclass
from typing import Iterable, Mapping, Sequence

CSV_HEADER = ("run_id", "t", "elapsed_seconds", "stk", "precision_at_k", "mode", "overhead_seconds")
TIMING_COLUMNS = ("elapsed_seconds", "overhead_seconds")


@dataclass(frozen=True)
class MetricRow:
    run_id: str
    t: int
    elapsed_seconds: float
    stk: float
    precision_at_k: float
    mode: str
    overhead_seconds: float


def ground_truth_ids(score_table: Mapping[str, float], k: int) -> list[str]:
    """Exact top-k ids, ties broken by ascending id."""
    return sorted(score_table, key=lambda i: (-score_table[i], i))[:k]


def precision_at_k(solution_ids: Iterable[str], ground_truth: Sequence[str] | set[str], k: int) -> float:
    """Share of the ground truth recovered; equals recall since both hold k ids.

    Divides by the ground-truth size, which is ``k`` unless the dataset is
    smaller than ``k``.
    """
    truth = ground_truth if isinstance(ground_truth, (set, frozenset)) else set(ground_truth)
    if not truth:
        return 1.0
    hits = sum(1 for i in solution_ids if i in truth)
    return hits / min(k, len(truth))


def checkpoint_grid(n: int, k: int) -> list[int]:
    """Every 1% of ``n`` plus ``k``, ``2k`` and ``5k`` (those not beyond ``n``)."""
    step = max(1, math.ceil(n / 100))
    points = set(range(step, n + 1, step))
    points.add(n)
    points.update(c for c in (k, 2 * k, 5 * k) if c <= n)
    return sorted(p for p in points if p > 0)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_rows(path: str | os.PathLike, rows: Iterable[MetricRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow([_fmt(v) for v in astuple(row)])


def read_rows(path: str | os.PathLike) -> list[MetricRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            MetricRow(r[0], int(r[1]), float(r[2]), float(r[3]), float(r[4]), r[5], float(r[6]))
            for r in reader
        ]


def rows_without_timing(rows: Iterable[MetricRow]) -> list[tuple]:
    return [(r.run_id, r.t, r.stk, r.precision_at_k, r.mode) for r in rows]


def value_at(rows: Sequence[MetricRow], t: int) -> MetricRow | None:
    """First row of one run at or after iteration ``t``."""
    for row in rows:
        if row.t >= t:
            return row
    return None


def summarize(rows: Sequence[MetricRow], checkpoints: Sequence[int]) -> list[dict]:
    """Mean and standard deviation of STK and precision across runs per checkpoint.

    A run contributes its first row at or after the checkpoint; runs that
    stopped earlier are left out of that checkpoint.
    """
    runs: dict[str, list[MetricRow]] = {}
    for row in rows:
        runs.setdefault(row.run_id, []).append(row)
    out = []
    for c in checkpoints:
        picked = [r for r in (value_at(rs, c) for rs in runs.values()) if r is not None]
        if not picked:
            continue
        stks = [r.stk for r in picked]
        precs = [r.precision_at_k for r in picked]
        out.append({
            "t": c,
            "runs": len(picked),
            "stk_mean": _mean(stks),
            "stk_std": _std(stks),
            "precision_mean": _mean(precs),
            "precision_std": _std(precs),
        })
    return out


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _std(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))
