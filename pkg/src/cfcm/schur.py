"""Schur-complement machinery for sampling with an auxiliary root set T."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg as la

from .graph import Graph, as_node_set


class SchurSingularError(np.linalg.LinAlgError):
    """The estimated Schur complement is not positive definite."""


def select_root_set(graph: Graph) -> np.ndarray:
    """Peel max-degree nodes until |T| balances the remaining max degree.

    Returns the prefix T* minimising ||T| - d_max(T)| (smaller |T| on ties).
    """
    deg = graph.degrees.astype(np.int64).copy()
    removed = np.zeros(graph.n, dtype=bool)
    heap = [(-int(d), u) for u, d in enumerate(deg)]
    heapq.heapify(heap)

    def current_max():
        while heap:
            d, u = heap[0]
            if removed[u] or -d != deg[u]:
                heapq.heappop(heap)
                continue
            return -d, u
        return 0, -1

    peeled = []
    dmax, _ = current_max()
    best_size, best_diff = 0, abs(0 - dmax)
    while True:
        dmax, u = current_max()
        if u < 0 or len(peeled) > dmax:
            # |T| - d_max only grows from here on
            break
        removed[u] = True
        peeled.append(u)
        for v in graph.neighbors(u):
            if not removed[v]:
                deg[v] -= 1
                heapq.heappush(heap, (-int(deg[v]), int(v)))
        dmax_after, _ = current_max()
        diff = abs(len(peeled) - dmax_after)
        if diff < best_diff:
            best_size, best_diff = len(peeled), diff
    return np.array(peeled[:best_size], dtype=np.int64)


@numba.njit(cache=True)
def _track(parents, orders, root_col, u_nodes, counts, nb_ptr, nb_idx, hits, hits_sq):
    """Fold forest root labels into rooted counts.

    counts[j, root_col[root(u_nodes[j])]] += 1; root_col maps T[i] to i and
    every S node to the last column. hits[i] sums, per forest, how many
    U-neighbours of the i-th T node it roots.
    """
    n = parents.shape[1]
    nf = parents.shape[0]
    label = np.empty(n, dtype=np.int32)
    labels = np.empty((nf, u_nodes.size), dtype=np.int32)
    for f in range(nf):
        par = parents[f]
        order = orders[f]
        label[:] = root_col
        for k in range(order.size - 1, -1, -1):
            u = order[k]
            label[u] = label[par[u]]
        for j in range(u_nodes.size):
            labels[f, j] = label[u_nodes[j]]
        for i in range(nb_ptr.size - 1):
            c = 0.0
            for k in range(nb_ptr[i], nb_ptr[i + 1]):
                c += 1.0 if label[nb_idx[k]] == i else 0.0
            hits[i] += c
            hits_sq[i] += c * c
    # the count table is too large for cache, so each row is visited once per batch
    for j in range(u_nodes.size):
        for f in range(nf):
            counts[j, labels[f, j]] += 1


@dataclass
class RootedCounts:
    """Per-node tallies of which root each node's tree hangs from.

    ``counts[j, i]`` counts forests with ``U[j]`` rooted at ``T[i]``; the
    final column counts forests with ``U[j]`` rooted somewhere in S.
    """

    graph: Graph
    S: np.ndarray
    T: np.ndarray
    total: int = 0
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        g = self.graph
        self.S = np.sort(as_node_set(self.S, g.n))
        self.T = np.asarray(self.T, dtype=np.int64)
        as_node_set(np.concatenate([self.S, self.T]), g.n)
        self.root_col = np.full(g.n, -1, dtype=np.int32)
        self.root_col[self.T] = np.arange(self.T.size)
        self.root_col[self.S] = self.T.size
        in_u = np.ones(g.n, dtype=bool)
        in_u[self.S] = False
        in_u[self.T] = False
        self.U = np.flatnonzero(in_u)
        self.counts = np.zeros((self.U.size, self.T.size + 1), dtype=np.int32)
        nb = [g.neighbors(t)[in_u[g.neighbors(t)]] for t in self.T]
        self.nb_ptr = np.concatenate([[0], np.cumsum([a.size for a in nb])]).astype(np.int64)
        self.nb_idx = (np.concatenate(nb) if nb else np.zeros(0)).astype(np.int64)
        self.hits = np.zeros(self.T.size)
        self.hits_sq = np.zeros(self.T.size)

    def accumulate_batch(self, parents, orders):
        if self.total + parents.shape[0] > np.iinfo(self.counts.dtype).max:
            self.counts = self.counts.astype(np.int64)
        _track(parents, orders, self.root_col, self.U, self.counts,
               self.nb_ptr, self.nb_idx, self.hits, self.hits_sq)
        self.total += parents.shape[0]
        return self

    def merge(self, other: "RootedCounts") -> "RootedCounts":
        if self.total + other.total > np.iinfo(self.counts.dtype).max:
            self.counts = self.counts.astype(np.int64)
        self.counts += other.counts
        self.hits += other.hits
        self.hits_sq += other.hits_sq
        self.total += other.total
        return self

    @property
    def F(self) -> np.ndarray:
        """Estimated rooted probabilities, shape (|U|, |T|), rows in U order."""
        return self.counts[:, :-1] / self.total

    def diagonal_halfwidth_inputs(self):
        """(mean, variance, range) of the per-forest T-diagonal corrections."""
        mean = self.hits / self.total
        var = np.maximum(self.hits_sq / self.total - mean**2, 0.0)
        return mean, var, np.diff(self.nb_ptr).astype(np.float64)


def track_roots(forest, T, rooted: RootedCounts | None = None, S=None, graph=None):
    """Root label per node for one forest, optionally folded into ``rooted``."""
    labels = forest.root_of()
    if rooted is not None:
        rooted.accumulate_batch(forest.parent[None, :], forest.order[None, :])
    return labels


def exact_rooted_probabilities(graph: Graph, S, T) -> tuple[np.ndarray, np.ndarray]:
    """F = -L_UU^{-1} L_UT, with U = V \\ (S u T); returns (F, U)."""
    S = as_node_set(S, graph.n)
    T = as_node_set(T, graph.n)
    in_u = np.ones(graph.n, dtype=bool)
    in_u[S] = False
    in_u[T] = False
    U = np.flatnonzero(in_u)
    L = graph.laplacian.toarray()
    if U.size == 0:
        return np.zeros((0, T.size)), U
    F = -la.solve(L[np.ix_(U, U)], L[np.ix_(U, T)], assume_a="pos")
    return F, U


def assemble_schur(graph: Graph, F: np.ndarray, S, T) -> np.ndarray:
    """Schur complement of L_{-S} onto T from rooted probabilities F (|U| x |T|).

    M_ij = L_ij - sum over U-neighbours u of T[i] of F[u, j], then symmetrised.
    """
    S = as_node_set(S, graph.n)
    T = np.asarray(T, dtype=np.int64)
    in_u = np.ones(graph.n, dtype=bool)
    in_u[S] = False
    in_u[T] = False
    U = np.flatnonzero(in_u)
    if F.shape != (U.size, T.size):
        raise ValueError(f"F has shape {F.shape}, expected {(U.size, T.size)}")
    L = graph.laplacian
    L_tt = L[T][:, T].toarray()
    A_tu = graph.adjacency[T][:, U]
    M = L_tt - np.asarray(A_tu @ F)
    return 0.5 * (M + M.T)


def invert_schur(M: np.ndarray) -> np.ndarray:
    if M.size == 0:
        return M.copy()
    if not np.all(np.isfinite(M)):
        raise SchurSingularError("non-finite Schur estimate")
    try:
        c = la.cho_factor(M, lower=True)
    except la.LinAlgError:
        raise SchurSingularError("Schur estimate is not positive definite; "
                                 "more samples are needed") from None
    inv = la.cho_solve(c, np.eye(M.shape[0]))
    if np.abs(M @ inv - np.eye(M.shape[0])).max() > 1e-8:
        raise SchurSingularError("Schur estimate is too ill-conditioned to invert")
    return 0.5 * (inv + inv.T)


@dataclass
class SchurBlock:
    T: np.ndarray
    M: np.ndarray
    M_inv: np.ndarray
    symmetrized: bool = True


def combine_blocks(z_u, Y_u, F, U, T, M_inv, W_u, Q):
    """Recombine U-block estimates with the Schur block.

    z_u: (n,) estimates of diag(L_UU^{-1}) (only U entries read)
    Y_u: (w, n) estimates of W L_UU^{-1} (only U columns read)
    F: (|U|, |T|) rooted probabilities; W_u: (w, |U|); Q: (w, |T|)
    Returns new (z, Y) over all nodes with U and T entries filled.
    """
    U = np.asarray(U, dtype=np.int64)
    T = np.asarray(T, dtype=np.int64)
    if F.shape != (U.size, T.size) or M_inv.shape != (T.size, T.size):
        raise ValueError("dimension mismatch between F, U, T and the Schur inverse")
    if W_u.shape[1] != U.size or Q.shape != (W_u.shape[0], T.size) or Y_u.shape[0] != W_u.shape[0]:
        raise ValueError("dimension mismatch in projector blocks")
    z = np.array(z_u, dtype=np.float64, copy=True)
    Y = np.array(Y_u, dtype=np.float64, copy=True)
    if T.size == 0:
        return z, Y
    FM = F @ M_inv
    z[U] = z_u[U] + np.einsum("ij,ij->i", FM, F)
    B = (W_u @ F + Q) @ M_inv
    Y[:, U] = Y_u[:, U] + B @ F.T
    z[T] = np.diag(M_inv)
    Y[:, T] = B
    return z, Y


def schur_complement(M: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Dense Sc(M onto keep); test oracle."""
    rest = np.setdiff1d(np.arange(M.shape[0]), keep)
    if rest.size == 0:
        return M[np.ix_(keep, keep)].copy()
    return (M[np.ix_(keep, keep)]
            - M[np.ix_(keep, rest)] @ la.solve(M[np.ix_(rest, rest)], M[np.ix_(rest, keep)]))
