"""Dense and iterative ground truth for group CFCC and greedy selection."""
from __future__ import annotations

import math
import time
from itertools import combinations

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .estimators import RunningStats, argmax_lowest, argmin_lowest
from .graph import Graph, as_node_set

DENSE_LIMIT = 5000
ENUMERATION_CAP = 10**7


class DenseLimitError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _check_dense(graph: Graph, limit=DENSE_LIMIT):
    if graph.n > limit:
        raise DenseLimitError(
            f"n={graph.n} exceeds the dense limit {limit}; use cfcc_iterative (CG) instead")


def dense_laplacian(graph: Graph) -> np.ndarray:
    return graph.laplacian.toarray()


def grounded(graph: Graph, S) -> tuple[np.ndarray, np.ndarray]:
    """L with rows/cols of S removed, and the kept node ids."""
    S = as_node_set(S, graph.n)
    keep = np.setdiff1d(np.arange(graph.n), S)
    L = dense_laplacian(graph)
    return L[np.ix_(keep, keep)], keep


def spd_inverse(M: np.ndarray) -> np.ndarray:
    if M.size == 0:
        return M.copy()
    c = la.cho_factor(M, lower=True)
    return la.cho_solve(c, np.eye(M.shape[0]))


def pseudoinverse(graph: Graph, limit=DENSE_LIMIT) -> np.ndarray:
    """L^+ = (L + J/n)^{-1} - J/n for a connected graph."""
    _check_dense(graph, limit)
    n = graph.n
    J = np.full((n, n), 1.0 / n)
    return spd_inverse(dense_laplacian(graph) + J) - J


def grounded_inverse(graph: Graph, S) -> tuple[np.ndarray, np.ndarray]:
    _check_dense(graph)
    M, keep = grounded(graph, S)
    return spd_inverse(M), keep


def group_cfcc(graph: Graph, S) -> tuple[float, float]:
    """(trace of L_{-S}^{-1}, CFCC = n / trace)."""
    S = as_node_set(S, graph.n)
    if S.size == 0:
        raise ValueError("S must be non-empty")
    if S.size == graph.n:
        return 0.0, math.inf
    inv, _ = grounded_inverse(graph, S)
    tr = float(np.trace(inv))
    return tr, graph.n / tr


def exact_gain(graph: Graph, S, u, check=True) -> float:
    """Trace reduction from adding u to S, checked against the ratio form."""
    S = as_node_set(S, graph.n)
    if u in set(S.tolist()):
        raise ValueError("u already in S")
    inv, keep = grounded_inverse(graph, S)
    i = int(np.searchsorted(keep, u))
    ratio = float(inv[:, i] @ inv[:, i] / inv[i, i])
    if check:
        tr_before = float(np.trace(inv))
        tr_after, _ = group_cfcc(graph, np.append(S, u))
        diff = tr_before - tr_after
        if abs(diff - ratio) > 1e-10 * max(1.0, abs(diff)):
            raise AssertionError(f"gain mismatch: {diff} vs {ratio}")
    return ratio


def all_gains(graph: Graph, S) -> np.ndarray:
    """Exact gains for every node (nan on S)."""
    inv, keep = grounded_inverse(graph, S)
    gains = np.full(graph.n, np.nan)
    gains[keep] = np.einsum("ij,ij->j", inv, inv) / np.diag(inv)
    return gains


def _subset_traces(L, subsets):
    n = L.shape[0]
    out = np.empty(len(subsets))
    for i, S in enumerate(subsets):
        keep = np.ones(n, dtype=bool)
        keep[list(S)] = False
        M = L[np.ix_(keep, keep)]
        c = la.cho_factor(M, lower=True, check_finite=False)
        out[i] = np.trace(la.cho_solve(c, np.eye(M.shape[0]), check_finite=False))
    return out


def exhaustive_optimum(graph: Graph, k: int, cap=ENUMERATION_CAP) -> tuple[tuple, float]:
    """Best k-subset by CFCC; ties go to the lexicographically smallest set."""
    _check_dense(graph)
    n = graph.n
    if not 1 <= k < n:
        raise ValueError("need 1 <= k < n")
    if math.comb(n, k) > cap:
        raise ValueError(f"C({n},{k}) exceeds the enumeration cap {cap}")
    L = dense_laplacian(graph)
    best_set, best_tr = None, math.inf
    # combinations() yields subsets in lexicographic order, so strict < keeps
    # the smallest set among exact ties
    chunk = []
    for S in combinations(range(n), k):
        chunk.append(S)
        if len(chunk) == 4096:
            best_set, best_tr = _scan(L, chunk, best_set, best_tr)
            chunk = []
    if chunk:
        best_set, best_tr = _scan(L, chunk, best_set, best_tr)
    return best_set, n / best_tr


def _scan(L, chunk, best_set, best_tr):
    tr = _subset_traces(L, chunk)
    i = int(np.argmin(tr))
    if tr[i] < best_tr * (1 - 1e-12):
        return chunk[i], float(tr[i])
    return best_set, best_tr


def greedy_exact(graph: Graph, k: int):
    """Greedy with exact gains: argmin L^+_uu first, then max trace reduction."""
    from .greedy import SelectionTrace

    _check_dense(graph)
    if not 1 <= k < graph.n:
        raise ValueError("need 1 <= k < n")
    trace = SelectionTrace(algorithm="exact")
    t0 = time.perf_counter()
    diag = np.diag(pseudoinverse(graph))
    first = argmin_lowest(diag, np.arange(graph.n))
    trace.add(first, samples=0, gain=float("nan"), seconds=time.perf_counter() - t0)
    S = [first]
    for _ in range(k - 1):
        t0 = time.perf_counter()
        gains = all_gains(graph, S)
        cand = np.setdiff1d(np.arange(graph.n), S)
        u = argmax_lowest(gains, cand)
        S.append(u)
        trace.add(u, samples=0, gain=float(gains[u]), seconds=time.perf_counter() - t0)
    return trace


def forest_count(graph: Graph, S) -> float:
    """Number of spanning forests rooted at S, det(L_{-S})."""
    M, _ = grounded(graph, S)
    if M.size == 0:
        return 1.0
    sign, logdet = np.linalg.slogdet(M)
    return float(round(math.exp(logdet))) if logdet < 700 else math.exp(logdet)


def cfcc_iterative(graph: Graph, S, probes=128, tol=1e-8, seed=0, maxiter=None):
    """Hutchinson estimate of trace(L_{-S}^{-1}) with CG solves.

    Returns (cfcc, standard error of cfcc, trace estimate).
    """
    S = as_node_set(S, graph.n)
    if S.size == 0:
        raise ValueError("S must be non-empty")
    keep = np.setdiff1d(np.arange(graph.n), S)
    M = graph.laplacian[keep][:, keep].tocsr()
    diag = M.diagonal()
    precond = spla.LinearOperator(M.shape, matvec=lambda x: x / diag)
    rng = np.random.default_rng(seed)
    stats = RunningStats()
    maxiter = maxiter or 10 * keep.size
    for _ in range(probes):
        z = rng.choice(np.array([-1.0, 1.0]), size=keep.size)
        x, info = spla.cg(M, z, rtol=tol, atol=0.0, maxiter=maxiter, M=precond)
        if info != 0:
            raise ConvergenceError(f"CG did not converge (info={info})")
        stats.push(float(z @ x))
    tr = stats.mean
    se_tr = math.sqrt(stats.m2 / (stats.count - 1) / stats.count) if stats.count > 1 else 0.0
    n = graph.n
    return n / tr, n * se_tr / tr**2, tr
