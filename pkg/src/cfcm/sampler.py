"""Uniform rooted spanning forests via loop-erased random walks (Wilson)."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from numba import prange

from ._rng import bounded, stream_state
from .graph import Graph, as_node_set

MAX_WALK_STEPS = 10**10


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class RandomStream:
    seed: int
    index: int = 0


@dataclass(frozen=True)
class SpanningForest:
    """``parent[u]`` is u's forest parent (-1 for roots); ``order`` lists the
    non-roots so that every node comes before its non-root parent.
    ``slot[u]`` is the position of ``parent[u]`` in the CSR ``indices`` array.
    """

    parent: np.ndarray
    order: np.ndarray
    slot: np.ndarray
    roots: np.ndarray

    def root_of(self) -> np.ndarray:
        return _root_labels(self.parent, self.order)


@numba.njit(cache=True)
def _wilson(indptr, indices, is_root, seed, index, max_steps, parent, slot, order,
            descending=False):
    n = is_root.size
    state = stream_state(seed, index)
    in_forest = is_root.copy()
    for u in range(n):
        parent[u] = -1
        slot[u] = -1
    pos = 0
    steps = 0
    for idx in range(n):
        u = n - 1 - idx if descending else idx
        if in_forest[u]:
            continue
        i = u
        while not in_forest[i]:
            start = indptr[i]
            k = start + bounded(state, indptr[i + 1] - start)
            slot[i] = k
            parent[i] = indices[k]
            i = parent[i]
            steps += 1
            if steps > max_steps:
                return False
        # loop erasure: walk the surviving chain, then append it reversed
        i = u
        first = pos
        while not in_forest[i]:
            in_forest[i] = True
            order[pos] = i
            pos += 1
            i = parent[i]
        a, b = first, pos - 1
        while a < b:
            order[a], order[b] = order[b], order[a]
            a += 1
            b -= 1
    a, b = 0, pos - 1
    while a < b:
        order[a], order[b] = order[b], order[a]
        a += 1
        b -= 1
    return True


@numba.njit(parallel=True, cache=True)
def _wilson_batch(indptr, indices, is_root, seed, start, max_steps, parents, slots, orders, ok,
                  descending):
    for f in prange(parents.shape[0]):
        ok[f] = _wilson(indptr, indices, is_root, seed, start + f, max_steps,
                        parents[f], slots[f], orders[f], descending)


@numba.njit(cache=True)
def _root_labels(parent, order):
    label = np.arange(parent.size)
    for k in range(order.size - 1, -1, -1):
        u = order[k]
        label[u] = label[parent[u]]
    return label


def _root_mask(graph: Graph, roots) -> tuple[np.ndarray, np.ndarray]:
    roots = np.sort(as_node_set(roots, graph.n))
    if roots.size == 0:
        raise ValueError("roots must be non-empty")
    mask = np.zeros(graph.n, dtype=np.bool_)
    mask[roots] = True
    return roots, mask


def sample_forest(graph: Graph, roots, stream: RandomStream,
                  max_steps: int = MAX_WALK_STEPS) -> SpanningForest:
    roots, mask = _root_mask(graph, roots)
    parent = np.empty(graph.n, dtype=np.int64)
    slot = np.empty(graph.n, dtype=np.int64)
    order = np.empty(graph.n - roots.size, dtype=np.int64)
    ok = _wilson(graph.indptr, graph.indices, mask, np.uint64(stream.seed), stream.index,
                 max_steps, parent, slot, order, False)
    if not ok:
        raise SamplerError("random walk exceeded the step cap")
    return SpanningForest(parent, order, slot, roots)


def sample_forests(graph: Graph, roots, seed: int, start: int, count: int,
                   descending: bool = False, max_steps: int = MAX_WALK_STEPS):
    """Sample forests ``start .. start+count-1`` of stream family ``seed``.

    Returns ``(parents, slots, orders)`` stacked along the first axis.
    ``descending`` starts walks from the highest id first (the distribution
    does not depend on it; it exists to check exactly that).
    """
    roots, mask = _root_mask(graph, roots)
    parents = np.empty((count, graph.n), dtype=np.int64)
    slots = np.empty((count, graph.n), dtype=np.int64)
    orders = np.empty((count, graph.n - roots.size), dtype=np.int64)
    ok = np.empty(count, dtype=np.bool_)
    _wilson_batch(graph.indptr, graph.indices, mask, np.uint64(seed), start,
                  max_steps, parents, slots, orders, ok, descending)
    if not ok.all():
        raise SamplerError("random walk exceeded the step cap")
    return parents, slots, orders


def forest_codes(parents: np.ndarray, roots) -> np.ndarray:
    """Integer code per forest (mixed radix over non-root parents); tests only."""
    n = parents.shape[1]
    nonroot = np.setdiff1d(np.arange(n), roots)
    codes = np.zeros(parents.shape[0], dtype=np.int64)
    for u in nonroot:
        codes = codes * n + parents[:, u]
    return codes
