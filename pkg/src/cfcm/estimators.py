"""Unbiased estimators of grounded-Laplacian inverse quantities from forests.

For a root set R and a fixed BFS tree from R, every non-root u with BFS parent
b contributes the per-forest increment

    [p(u) = b] * s(u) - [p(b) = u] * s(b)

where p is the forest parent map and s(a) is the weight of a's forest subtree.
Summing increments down the BFS tree gives, in expectation, the voltage at u
for the current pattern described by the weights (unit weights on a single
source for the diagonal, sign vectors for the sketch, all-ones for the row
sums used by the pseudoinverse shift).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import prange

from .graph import BfsStructure, Graph, as_node_set

DEFAULT_MAX_SKETCH = 128


# --------------------------------------------------------------------------
# streaming statistics and bounds


class RunningStats:
    """Welford mean/variance with Chan's pairwise merge."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self, count=0, mean=0.0, m2=0.0):
        self.count = count
        self.mean = mean
        self.m2 = m2

    def push(self, x):
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        n = self.count + other.count
        if n == 0:
            return RunningStats()
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = self.m2 + other.m2 + d * d * self.count * other.count / n
        return RunningStats(n, mean, m2)

    @classmethod
    def from_power_sums(cls, count, total, total_sq):
        """Build from exact power sums, as accumulated by the kernels."""
        if count == 0:
            return cls()
        mean = total / count
        m2 = np.maximum(total_sq - total * mean, 0.0)
        return cls(count, mean, m2)

    @property
    def variance(self):
        """Population variance (what the empirical Bernstein bound uses)."""
        if self.count == 0:
            return 0.0
        return self.m2 / self.count


def confidence_halfwidth(count, variance, x_sup, delta, mode="bernstein"):
    """Half-width of a (1 - delta) confidence interval for a sample mean.

    ``x_sup`` is the range of a single observation. Works elementwise on arrays.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    count = np.asarray(count, dtype=np.float64)
    if np.any(count <= 0):
        raise ValueError("count must be positive")
    if mode == "bernstein":
        log_term = math.log(3.0 / delta)
        variance = np.maximum(np.asarray(variance, dtype=np.float64), 0.0)
        return np.sqrt(2.0 * variance * log_term / count) + 3.0 * x_sup * log_term / count
    if mode == "hoeffding":
        # 2 exp(-2 count t^2 / x_sup^2) = delta
        return np.asarray(x_sup) * np.sqrt(math.log(2.0 / delta) / (2.0 * count))
    raise ValueError(f"unknown mode {mode!r}")


def sample_budget(kind, eps, tau, degree, n, r_max=2**24) -> int:
    """Worst-case forest count for a phase, saturated at ``r_max``.

    kind: ``"first-node"`` (degree = degree of the single root),
    ``"forest-delta"`` (degree = d_max(S)) or ``"schur-delta"``
    (degree = d_max(S u T)).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    log_2n = math.log(2 * n)
    if kind == "first-node":
        log_r = (math.log(18.0) - 2 * math.log(eps) + 2 * math.log(tau)
                 + 2 * math.log(max(degree, 1)) - 4 * math.log1p(-1.0 / n) + math.log(log_2n))
    elif kind in ("forest-delta", "schur-delta"):
        lead = 2.0 if kind == "forest-delta" else 8.0
        log_r = (math.log(lead) - 2 * math.log(eps / 15.0) + 2 * math.log(tau)
                 + (2 * tau + 2) * math.log(max(degree, 1)) + math.log(log_2n))
    else:
        raise ValueError(f"unknown budget kind {kind!r}")
    if log_r >= math.log(r_max):
        return int(r_max)
    return int(math.ceil(math.exp(log_r) - 1e-9))


def sketch_width(eps, n) -> int:
    return int(math.ceil(24.0 * (eps / 7.0) ** -2 * math.log(n)))


# --------------------------------------------------------------------------
# projection


@dataclass(frozen=True)
class JLProjector:
    """Sign projection over the candidate columns.

    ``signs`` is (w, n) with entries in {-1, 0, +1}; columns outside
    ``columns`` are zero. Actual matrix entries are ``signs * scale``.
    In ``identity`` mode row j is the indicator of ``columns[j]``.
    """

    columns: np.ndarray
    signs: np.ndarray
    scale: float
    mode: str

    @property
    def width(self) -> int:
        return self.signs.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.signs[:, self.columns] * self.scale

    @classmethod
    def identity(cls, columns, n):
        columns = np.asarray(columns, dtype=np.int64)
        signs = np.zeros((columns.size, n), dtype=np.float64)
        signs[np.arange(columns.size), columns] = 1.0
        return cls(columns, signs, 1.0, "identity")

    @classmethod
    def random(cls, columns, n, width, seed):
        columns = np.asarray(columns, dtype=np.int64)
        rng = np.random.default_rng(seed)
        signs = np.zeros((width, n), dtype=np.float64)
        signs[:, columns] = rng.choice(np.array([-1.0, 1.0]), size=(width, columns.size))
        return cls(columns, signs, 1.0 / math.sqrt(width), "random")

    @classmethod
    def ones(cls, columns, n):
        columns = np.asarray(columns, dtype=np.int64)
        signs = np.zeros((1, n), dtype=np.float64)
        signs[0, columns] = 1.0
        return cls(columns, signs, 1.0, "ones")

    @classmethod
    def for_candidates(cls, columns, n, eps, seed, max_width=DEFAULT_MAX_SKETCH,
                       mode="auto"):
        """Sketch sized from the JL bound, capped at ``max_width``.

        When the width would reach the number of candidates the identity is
        used instead: it is exact and no wider.
        """
        columns = np.asarray(columns, dtype=np.int64)
        if mode == "identity":
            return cls.identity(columns, n)
        w = min(sketch_width(eps, n), max_width)
        if mode == "auto" and w >= columns.size:
            return cls.identity(columns, n)
        return cls.random(columns, n, w, seed)

    def row_bound(self) -> np.ndarray:
        """Sum of |entries| per row in sign units."""
        return np.abs(self.signs).sum(axis=1)


# --------------------------------------------------------------------------
# counters


ROW_BLOCK = 32


@numba.njit(cache=True)
def _accumulate_edges(parents, slots, orders, is_root, bfs_nonroot, bfs_par, pseudo_n,
                      count, ones_agg, z_sq, x_sq):
    n = is_root.size
    size = np.zeros(n)
    xz = np.zeros(n)
    x1 = np.zeros(n)
    for f in range(parents.shape[0]):
        par = parents[f]
        order = orders[f]
        for k in range(order.size):
            size[order[k]] = 1.0
        for k in range(order.size):
            a = order[k]
            p = par[a]
            count[slots[f, a]] += 1
            ones_agg[slots[f, a]] += size[a]
            if not is_root[p]:
                size[p] += size[a]
        for k in range(bfs_nonroot.size):
            u = bfs_nonroot[k]
            b = bfs_par[u]
            inc = 0.0
            inc1 = 0.0
            if par[u] == b:
                inc += 1.0
                inc1 += size[u]
            if (not is_root[b]) and par[b] == u:
                inc -= 1.0
                inc1 -= size[b]
            xz[u] = xz[b] + inc
            x1[u] = x1[b] + inc1
            z_sq[u] += xz[u] * xz[u]
            if pseudo_n > 0:
                xx = xz[u] - 2.0 * x1[u] / pseudo_n
                x_sq[u] += xx * xx


@numba.njit(parallel=True, cache=True)
def _to_rank_space(parents, orders, rank, par_r, order_r):
    for f in prange(parents.shape[0]):
        for a in range(parents.shape[1]):
            p = parents[f, a]
            par_r[f, rank[a]] = -1 if p < 0 else rank[p]
        for k in range(orders.shape[1]):
            order_r[f, k] = rank[orders[f, k]]


@numba.njit(parallel=True, cache=True)
def _accumulate_sketch(par_r, order_r, n_roots, bpar_r, signs_r, node_of, net, net_sq):
    """Sketch tallies in sign units, with nodes relabelled by BFS queue rank.

    Ranks below ``n_roots`` are roots; every other rank's BFS parent has a
    smaller rank and parents are nondecreasing in rank, so the path pass
    streams through memory. Rows are handled in fixed blocks, so sums never
    depend on the thread count. Subtree sums are exact integers.
    """
    n, rows = signs_r.shape
    n_blocks = (rows + ROW_BLOCK - 1) // ROW_BLOCK
    for blk in prange(n_blocks):
        j0 = blk * ROW_BLOCK
        nb = min(ROW_BLOCK, rows - j0)
        sub = np.zeros((n, ROW_BLOCK), dtype=np.int32)
        rec = np.zeros((n, 3, ROW_BLOCK))
        for f in range(par_r.shape[0]):
            par = par_r[f]
            order = order_r[f]
            for a in range(n_roots, n):
                for j in range(nb):
                    sub[a, j] = signs_r[a, j0 + j]
            for k in range(order.size):
                a = order[k]
                p = par[a]
                if p >= n_roots:
                    for j in range(nb):
                        sub[p, j] += sub[a, j]
            for u in range(n_roots, n):
                b = bpar_r[u]
                up = par[u] == b
                down = b >= n_roots and par[b] == u
                for j in range(nb):
                    inc = 0
                    if up:
                        inc += sub[u, j]
                    if down:
                        inc -= sub[b, j]
                    x = rec[b, 0, j] + inc
                    rec[u, 0, j] = x
                    rec[u, 1, j] += inc
                    rec[u, 2, j] += x * x
        for r in range(n_roots, n):
            u = node_of[r]
            for j in range(nb):
                net[j0 + j, u] += rec[r, 1, j]
                net_sq[j0 + j, u] += rec[r, 2, j]


def _queue_ranks(bfs: BfsStructure) -> np.ndarray:
    """Node order of a BFS queue: roots by id, then each level sorted by
    (parent's position, id), so parent positions never decrease."""
    n = bfs.parent.size
    rank = np.empty(n, dtype=np.int64)
    rank[bfs.roots] = np.arange(bfs.roots.size)
    nxt = bfs.roots.size
    order = bfs.nonroot_order
    depth = bfs.depth[order]
    for level in np.split(order, np.flatnonzero(np.diff(depth)) + 1):
        if level.size == 0:
            continue
        level = level[np.lexsort((level, rank[bfs.parent[level]]))]
        rank[level] = np.arange(nxt, nxt + level.size)
        nxt += level.size
    return rank


@numba.njit(cache=True)
def _tree_slots(indptr, indices, bfs_par):
    n = bfs_par.size
    up = np.full(n, -1, dtype=np.int64)
    down = np.full(n, -1, dtype=np.int64)
    for u in range(n):
        b = bfs_par[u]
        if b < 0:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            if indices[k] == b:
                up[u] = k
        for k in range(indptr[b], indptr[b + 1]):
            if indices[k] == u:
                down[u] = k
    return up, down


class RootSetMismatch(ValueError):
    pass


@dataclass
class EdgeCounters:
    """Tallies over all forests sampled with one root set.

    ``count`` and ``ones_agg`` are indexed by CSR adjacency slot (directed
    edge a->b lives at a's slot for b). The sketch tallies are only ever read
    along the BFS tree, so they are kept netted per BFS edge in ``net``
    (row j, node u holds agg_j(u->b) - agg_j(b->u)). ``*_sq`` hold sums of
    squared per-forest path values, used for the variance of each estimate.
    """

    graph: Graph
    roots: np.ndarray
    bfs: BfsStructure
    projector: JLProjector | None = None
    pseudo: bool = False
    total: int = 0
    count: np.ndarray = field(init=False)
    ones_agg: np.ndarray = field(init=False)
    net: np.ndarray = field(init=False)
    z_sq: np.ndarray = field(init=False)
    x_sq: np.ndarray = field(init=False)
    net_sq: np.ndarray = field(init=False)

    def __post_init__(self):
        g = self.graph
        self.roots = np.sort(as_node_set(self.roots, g.n))
        if not np.array_equal(self.roots, self.bfs.roots):
            raise RootSetMismatch("BFS structure was built for a different root set")
        self.is_root = np.zeros(g.n, dtype=np.bool_)
        self.is_root[self.roots] = True
        w = 0 if self.projector is None else self.projector.width
        self.rank = _queue_ranks(self.bfs)
        self.node_of = np.argsort(self.rank)
        self.bpar_rank = np.full(g.n, -1, dtype=np.int64)
        nr = self.bfs.nonroot_order
        self.bpar_rank[self.rank[nr]] = self.rank[self.bfs.parent[nr]]
        self.weights = (np.zeros((g.n, 0), dtype=np.int8) if self.projector is None
                        else np.ascontiguousarray(self.projector.signs.T[self.node_of].astype(np.int8)))
        self.count = np.zeros(g.indices.size, dtype=np.int64)
        self.ones_agg = np.zeros(g.indices.size)
        self.net = np.zeros((w, g.n))
        self.z_sq = np.zeros(g.n)
        self.x_sq = np.zeros(g.n)
        self.net_sq = np.zeros((w, g.n))
        self.up_slot, self.down_slot = _tree_slots(g.indptr, g.indices, self.bfs.parent)

    def accumulate_batch(self, parents, slots, orders):
        if parents.shape[0] == 0:
            return self
        if np.any(parents[:, self.roots] != -1) or orders.shape[1] != self.graph.n - self.roots.size:
            raise RootSetMismatch("forests were sampled with a different root set")
        _accumulate_edges(parents, slots, orders, self.is_root, self.bfs.nonroot_order,
                          self.bfs.parent, float(self.graph.n) if self.pseudo else 0.0,
                          self.count, self.ones_agg, self.z_sq, self.x_sq)
        if self.weights.shape[1]:
            par_r = np.empty_like(parents)
            order_r = np.empty_like(orders)
            _to_rank_space(parents, orders, self.rank, par_r, order_r)
            _accumulate_sketch(par_r, order_r, self.roots.size, self.bpar_rank, self.weights,
                               self.node_of, self.net, self.net_sq)
        self.total += parents.shape[0]
        return self

    def merge(self, other: "EdgeCounters") -> "EdgeCounters":
        if not np.array_equal(self.roots, other.roots):
            raise RootSetMismatch("cannot merge counters of different root sets")
        self.count += other.count
        self.ones_agg += other.ones_agg
        self.net += other.net
        self.z_sq += other.z_sq
        self.x_sq += other.x_sq
        self.net_sq += other.net_sq
        self.total += other.total
        return self


def accumulate_forest(counters: EdgeCounters, forest) -> EdgeCounters:
    if not np.array_equal(np.sort(forest.roots), counters.roots):
        raise RootSetMismatch("forest root set differs from the counters' root set")
    return counters.accumulate_batch(forest.parent[None, :], forest.slot[None, :],
                                     forest.order[None, :])


# --------------------------------------------------------------------------
# estimates


def _prefix_along(bfs: BfsStructure, increments: np.ndarray) -> np.ndarray:
    """Sum increments from the roots down the BFS tree (last axis = nodes)."""
    out = np.zeros_like(increments)
    par = bfs.parent
    # process one BFS level at a time; parents are always one level up
    order = bfs.nonroot_order
    depth = bfs.depth[order]
    bounds = np.flatnonzero(np.diff(depth)) + 1
    for level in np.split(order, bounds):
        out[..., level] = out[..., par[level]] + increments[..., level]
    return out


def estimate_diagonals(counters: EdgeCounters, bfs: BfsStructure | None = None) -> np.ndarray:
    """Per-node estimate of the diagonal of the grounded Laplacian inverse.

    Roots get 0. Any BFS tree from the same roots may be used to read the
    counters; each choice is unbiased.
    """
    if counters.total < 1:
        raise ValueError("no forests accumulated")
    bfs = counters.bfs if bfs is None else bfs
    if not np.array_equal(bfs.roots, counters.roots):
        raise RootSetMismatch("BFS roots differ from the counters' roots")
    g = counters.graph
    up, down = (counters.up_slot, counters.down_slot) if bfs is counters.bfs else \
        _tree_slots(g.indptr, g.indices, bfs.parent)
    inc = np.zeros(g.n)
    nr = bfs.nonroot_order
    inc[nr] = counters.count[up[nr]]
    has_down = down[nr] >= 0
    inc[nr[has_down]] -= counters.count[down[nr[has_down]]]
    return _prefix_along(bfs, inc / counters.total)


def estimate_row_sums(counters: EdgeCounters) -> np.ndarray:
    """Estimate of 1^T L_{-R}^{-1} e_u for every u (0 on roots)."""
    bfs = counters.bfs
    inc = np.zeros(counters.graph.n)
    nr = bfs.nonroot_order
    up, down = counters.up_slot, counters.down_slot
    inc[nr] = counters.ones_agg[up[nr]]
    has_down = down[nr] >= 0
    inc[nr[has_down]] -= counters.ones_agg[down[nr[has_down]]]
    return _prefix_along(bfs, inc / counters.total)


def estimate_projected_rows(counters: EdgeCounters) -> np.ndarray:
    """Estimate of W L_{-R}^{-1} as a (w, n) array (zero columns on roots)."""
    if counters.projector is None:
        raise ValueError("counters were built without a projector")
    if counters.total < 1:
        raise ValueError("no forests accumulated")
    y = _prefix_along(counters.bfs, counters.net / counters.total)
    return y * counters.projector.scale


def estimate_pseudo_diagonals(counters: EdgeCounters, bfs: BfsStructure | None = None) -> np.ndarray:
    """Shifted pseudoinverse diagonal for a single root s.

    Returns x with x_s = 0 and E[x_u] = L^+_uu - L^+_ss, so ranking by x is
    ranking by the pseudoinverse diagonal.
    """
    if counters.roots.size != 1:
        raise ValueError("pseudoinverse estimates need exactly one root")
    n = counters.graph.n
    x = estimate_diagonals(counters, bfs) - 2.0 / n * estimate_row_sums(counters)
    x[counters.roots] = 0.0
    return x


def path_variance(counters: EdgeCounters, which: str) -> np.ndarray:
    """Per-forest variance of the path values behind an estimate."""
    n_f = counters.total
    if which == "z":
        mean = estimate_diagonals(counters)
        return np.maximum(counters.z_sq / n_f - mean**2, 0.0)
    if which == "x":
        mean = estimate_diagonals(counters) - 2.0 / counters.graph.n * estimate_row_sums(counters)
        return np.maximum(counters.x_sq / n_f - mean**2, 0.0)
    if which == "sketch":
        mean = _prefix_along(counters.bfs, counters.net / n_f)
        return np.maximum(counters.net_sq / n_f - mean**2, 0.0)
    raise ValueError(which)


@dataclass
class GainEstimates:
    """Marginal-gain estimates for the candidates ``V \\ S``.

    Arrays are indexed by node id; entries for nodes in S are nan.
    """

    candidates: np.ndarray
    z: np.ndarray
    sketch: np.ndarray
    gain: np.ndarray
    halfwidth: np.ndarray
    samples: int
    batches: int = 0
    converged: bool = False
    fallback: bool = False

    def best(self) -> int:
        return argmax_lowest(self.gain, self.candidates)


def gains_from(z, sketch, candidates) -> np.ndarray:
    n = z.size
    gain = np.full(n, np.nan)
    zc = z[candidates]
    num = np.einsum("ij,ij->j", sketch[:, candidates], sketch[:, candidates])
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(zc > 0, num / zc, 0.0)
    gain[candidates] = g
    return gain


def argmax_lowest(values, candidates, rtol=1e-12) -> int:
    vals = values[candidates]
    top = np.max(vals)
    ties = candidates[vals >= top - rtol * abs(top)]
    return int(ties.min())


def argmin_lowest(values, candidates, rtol=1e-12) -> int:
    vals = values[candidates]
    low = np.min(vals)
    ties = candidates[vals <= low + rtol * abs(low)]
    return int(ties.min())
