"""Heuristic node-group selectors used as comparators."""
from __future__ import annotations

import numpy as np

from .estimators import EdgeCounters, estimate_pseudo_diagonals
from .exact import pseudoinverse
from .graph import Graph, bfs_structure
from .sampler import sample_forests


def _top_k(scores, k, descending=True) -> list:
    """k best ids by score, ties (to ~1e-10 relative) broken by lowest id."""
    keys = -scores if descending else scores
    scale = np.max(np.abs(keys)) or 1.0
    keys = np.round(keys / scale, 10)
    order = np.lexsort((np.arange(scores.size), keys))
    return [int(u) for u in order[:k]]


def _check_k(graph, k):
    if not 1 <= k < graph.n:
        raise ValueError(f"k must satisfy 1 <= k < n (got k={k}, n={graph.n})")


def degree_baseline(graph: Graph, k: int) -> list:
    _check_k(graph, k)
    return _top_k(graph.degrees.astype(np.float64), k)


def single_node_scores(graph: Graph, mode="exact", samples=2**14, seed=0) -> np.ndarray:
    """Per-node key whose ascending order ranks single-node CFCC, highest first.

    exact: the pseudoinverse diagonal. estimated: the shifted estimate from
    forests rooted at the max-degree node (same ordering in expectation).
    """
    if mode == "exact":
        return np.diag(pseudoinverse(graph)).copy()
    if mode == "estimated":
        s = int(np.argmax(graph.degrees))
        counters = EdgeCounters(graph, [s], bfs_structure(graph, [s]), pseudo=True)
        step = max(1, (1 << 22) // graph.n)
        for lo in range(0, samples, step):
            counters.accumulate_batch(*sample_forests(graph, [s], seed, lo, min(step, samples - lo)))
        return estimate_pseudo_diagonals(counters)
    raise ValueError(f"unknown mode {mode!r}")


def top_cfcc_baseline(graph: Graph, k: int, mode="exact", samples=2**14, seed=0) -> list:
    """The k nodes with the largest individual CFCC."""
    _check_k(graph, k)
    return _top_k(single_node_scores(graph, mode, samples, seed), k, descending=False)
