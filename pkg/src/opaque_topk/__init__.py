"""Approximate top-k queries under an opaque, expensive scoring function.

An index clusters the dataset and arranges the clusters in a dendrogram; a
histogram-guided epsilon-greedy bandit then decides which cluster to score
next so that the sum of the k best scores found so far grows as fast as
possible.
"""

from .bandit import (
    Exhausted,
    InMemoryPlugin,
    Mode,
    Progress,
    QueryParams,
    QueryState,
    ScorerError,
    StopCondition,
    execute,
    run,
)
from .core import ScoredElement, TopKSolution, stk
from .histogram import HistogramSketch
from .index import Index, IndexFormatError, build_index, load_index, save_index

__version__ = "0.1.0"

__all__ = [
    "Exhausted",
    "HistogramSketch",
    "InMemoryPlugin",
    "Index",
    "IndexFormatError",
    "Mode",
    "Progress",
    "QueryParams",
    "QueryState",
    "ScoredElement",
    "ScorerError",
    "StopCondition",
    "TopKSolution",
    "build_index",
    "execute",
    "load_index",
    "run",
    "save_index",
    "stk",
]
