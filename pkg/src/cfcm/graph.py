"""Undirected simple graphs in compressed adjacency form, plus BFS helpers."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class GraphFormatError(ValueError):
    """Raised for unreadable edge lists or graphs that cannot be built."""


class Graph:
    """Immutable unweighted simple graph.

    ``indptr``/``indices`` hold the CSR adjacency with sorted neighbour lists.
    ``labels[i]`` is the original label of dense node ``i``; labels are kept in
    ascending order so that dense ids preserve the original ordering.
    """

    def __init__(self, indptr, indices, labels=None):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        n = self.indptr.size - 1
        if labels is None:
            labels = np.arange(n, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.degrees = np.diff(self.indptr)
        for arr in (self.indptr, self.indices, self.labels, self.degrees):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.indptr.size - 1

    @property
    def m(self) -> int:
        return int(self.indices.size // 2)

    @cached_property
    def id_map(self) -> dict:
        return {int(lab): i for i, lab in enumerate(self.labels)}

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self.degrees.astype(np.float64)) - self.adjacency).tocsr()

    @cached_property
    def diameter(self) -> int:
        return diameter_estimate(self)

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.column_stack([rows[keep], self.indices[keep]])

    def to_original(self, nodes) -> list:
        return [int(self.labels[u]) for u in nodes]

    def to_dense(self, labels) -> list:
        try:
            return [self.id_map[int(lab)] for lab in labels]
        except KeyError as exc:
            raise GraphFormatError(f"unknown node label {exc.args[0]}") from None

    def subgraph(self, nodes) -> "Graph":
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        sub = self.adjacency[nodes][:, nodes].tocsr()
        sub.sort_indices()
        return Graph(sub.indptr, sub.indices, self.labels[nodes])

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def from_edges(u, v, labels=None, n=None) -> Graph:
    """Build a graph from endpoint arrays of dense ids.

    Self-loops are dropped and parallel edges collapsed.
    """
    u = np.asarray(u, dtype=np.int64).ravel()
    v = np.asarray(v, dtype=np.int64).ravel()
    if u.shape != v.shape:
        raise GraphFormatError("endpoint arrays differ in length")
    if n is None:
        n = int(max(u.max(initial=-1), v.max(initial=-1)) + 1)
    if n <= 0:
        raise GraphFormatError("empty graph")
    if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
        raise GraphFormatError("node id out of range")
    keep = u != v
    u, v = u[keep], v[keep]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    key = np.unique(rows * n + cols)
    rows, cols = key // n, key % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return Graph(indptr, cols, labels)


def load_edge_list(path, self_loops: str = "drop", duplicates: str = "collapse") -> Graph:
    """Read a SNAP/KONECT style whitespace edge list.

    Lines starting with ``#`` or ``%`` are comments. Only the first two tokens
    of a line are used (KONECT files may carry weights or timestamps after
    them). Labels are remapped to dense ids in ascending label order.
    """
    if self_loops not in ("drop", "error") or duplicates not in ("collapse", "error"):
        raise ValueError("unknown normalization policy")
    src, dst = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s[0] in "#%":
                continue
            tok = s.split()
            if len(tok) < 2:
                raise GraphFormatError(f"line {lineno}: expected two node labels")
            try:
                a, b = int(tok[0]), int(tok[1])
            except ValueError:
                raise GraphFormatError(f"line {lineno}: non-integer node label") from None
            if a < 0 or b < 0:
                raise GraphFormatError(f"line {lineno}: negative node label")
            if a == b and self_loops == "error":
                raise GraphFormatError(f"line {lineno}: self-loop on {a}")
            src.append(a)
            dst.append(b)
    if not src:
        raise GraphFormatError(f"{path}: no edges")
    ends = np.array([src, dst], dtype=np.int64)
    labels, inv = np.unique(ends, return_inverse=True)
    inv = inv.reshape(2, -1)
    g = from_edges(inv[0], inv[1], labels=labels, n=labels.size)
    if duplicates == "error":
        nonloop = int(np.count_nonzero(inv[0] != inv[1]))
        if nonloop != g.m:
            raise GraphFormatError(f"{path}: duplicate edges present")
    return g


def write_edge_list(graph: Graph, path) -> None:
    e = graph.edges()
    with open(path, "w") as fh:
        fh.write(f"# n={graph.n} m={graph.m}\n")
        for a, b in graph.labels[e]:
            fh.write(f"{a} {b}\n")


def largest_connected_component(graph: Graph) -> Graph:
    ncomp, comp = connected_components(graph.adjacency, directed=False)
    if ncomp == 1:
        return graph
    sizes = np.bincount(comp)
    # argmax returns the first maximal component label; components are
    # labelled in order of their smallest node, which gives the tie rule
    best = int(np.argmax(sizes))
    return graph.subgraph(np.flatnonzero(comp == best))


@dataclass(frozen=True)
class BfsStructure:
    """Multi-source BFS layering. ``parent[root] == -1``."""

    order: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    roots: np.ndarray

    @property
    def nonroot_order(self) -> np.ndarray:
        return self.order[self.roots.size:]


@numba.njit(cache=True)
def _bfs_dist(indptr, indices, sources):
    n = indptr.size - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue[tail] = v
                tail += 1
    return dist


@numba.njit(cache=True)
def _bfs_parents(indptr, indices, dist, highest):
    n = indptr.size - 1
    parent = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if dist[v] <= 0:
            continue
        lo, hi, step = indptr[v], indptr[v + 1], 1
        if highest:
            lo, hi, step = indptr[v + 1] - 1, indptr[v] - 1, -1
        for k in range(lo, hi, step):
            if dist[indices[k]] == dist[v] - 1:
                parent[v] = indices[k]
                break
    return parent


def as_node_set(nodes, n: int) -> np.ndarray:
    arr = np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes, dtype=np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise IndexError(f"node id out of range for graph with {n} nodes")
    if np.unique(arr).size != arr.size:
        raise ValueError("duplicate node ids")
    return arr


def bfs_structure(graph: Graph, roots, tie: str = "lowest") -> BfsStructure:
    """BFS from all ``roots`` at once.

    Each non-root's parent is its lowest-id neighbour one level closer to the
    roots (``tie="highest"`` picks the highest id instead; only used to check
    that estimates do not depend on which shortest-path tree is used).
    """
    roots = np.sort(as_node_set(roots, graph.n))
    if roots.size == 0:
        raise ValueError("roots must be non-empty")
    dist = _bfs_dist(graph.indptr, graph.indices, roots)
    if np.any(dist < 0):
        raise GraphFormatError("graph is not connected")
    parent = _bfs_parents(graph.indptr, graph.indices, dist, tie == "highest")
    order = np.argsort(dist, kind="stable")
    return BfsStructure(order=order, parent=parent, depth=dist, roots=roots)


def eccentricity(graph: Graph, u: int) -> tuple[int, int]:
    """Return (eccentricity of u, lowest-id farthest node)."""
    dist = _bfs_dist(graph.indptr, graph.indices, np.array([u], dtype=np.int64))
    far = int(np.argmax(dist))
    return int(dist[far]), far


@numba.njit(cache=True)
def _all_ecc_max(indptr, indices):
    n = indptr.size - 1
    best = 0
    src = np.empty(1, dtype=np.int64)
    for u in range(n):
        src[0] = u
        d = _bfs_dist(indptr, indices, src)
        mx = d.max()
        if mx > best:
            best = mx
    return best


def diameter_estimate(graph: Graph, sweeps: int = 4, exact: bool = False) -> int:
    """Diameter via repeated double sweeps, or all-pairs BFS if ``exact``.

    The sweep result is the largest eccentricity observed; it is exact on
    trees and a lower bound in general.
    """
    if exact:
        if graph.n > 10_000:
            raise ValueError("exact diameter limited to n <= 10^4")
        return max(1, int(_all_ecc_max(graph.indptr, graph.indices)))
    start = int(np.argmax(graph.degrees))
    best = 0
    for _ in range(max(1, sweeps)):
        _, a = eccentricity(graph, start)
        ecc, b = eccentricity(graph, a)
        if ecc <= best:
            break
        best = ecc
        start = b
    return max(1, best)


def max_degree_after_removal(graph: Graph, removed) -> int:
    removed = as_node_set(removed, graph.n)
    keep = np.ones(graph.n, dtype=np.int64)
    keep[removed] = 0
    rows = np.repeat(np.arange(graph.n), graph.degrees)
    remaining = np.bincount(rows, weights=keep[graph.indices], minlength=graph.n)
    remaining = remaining * keep
    return int(remaining.max()) if graph.n else 0
