"""Greedy CFCC maximization driven by sampled spanning forests."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from ._rng import derive_seed
from .estimators import (
    DEFAULT_MAX_SKETCH,
    EdgeCounters,
    GainEstimates,
    JLProjector,
    argmax_lowest,
    argmin_lowest,
    confidence_halfwidth,
    estimate_diagonals,
    estimate_projected_rows,
    estimate_pseudo_diagonals,
    estimate_row_sums,
    gains_from,
    path_variance,
    sample_budget,
)
from .graph import Graph, as_node_set, bfs_structure, max_degree_after_removal
from .sampler import sample_forests
from .schur import (
    RootedCounts,
    SchurSingularError,
    assemble_schur,
    combine_blocks,
    invert_schur,
    select_root_set,
)

DEFAULT_R_MAX = 2**24
# keep one sampled batch under roughly this many node entries per array
CHUNK_ENTRIES = 1 << 22

# stream keys passed to derive_seed
_FIRST, _ROUND, _FORESTS, _SKETCH = 0, 1, 0, 1


@dataclass
class RunConfig:
    k: int
    eps: float = 0.2
    seed: int = 0
    workers: int | None = None
    r_max: int = DEFAULT_R_MAX
    algorithm: str = "forest"
    schur_roots: str | int = "auto"
    max_width: int = DEFAULT_MAX_SKETCH
    projector: str = "auto"

    def validate(self, n: int):
        if not 1 <= self.k < n:
            raise ValueError(f"k must satisfy 1 <= k < n (got k={self.k}, n={n})")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.algorithm not in ("forest", "schur"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.r_max < 1:
            raise ValueError("r_max must be positive")
        if self.schur_roots != "auto" and int(self.schur_roots) < 0:
            raise ValueError("schur_roots must be 'auto' or a non-negative integer")
        if self.projector not in ("auto", "identity", "random"):
            raise ValueError(f"unknown projector mode {self.projector!r}")
        return self


@dataclass
class SelectionTrace:
    algorithm: str
    nodes: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    gains: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def add(self, node, samples=0, gain=float("nan"), seconds=0.0):
        node = int(node)
        if node in self.nodes:
            raise ValueError(f"node {node} already selected")
        self.nodes.append(node)
        self.samples.append(int(samples))
        self.gains.append(float(gain))
        self.seconds.append(float(seconds))

    def __len__(self):
        return len(self.nodes)

    def prefix(self, i) -> list:
        return self.nodes[:i]


def _set_workers(workers):
    if workers is not None:
        numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))


def _batches(r_max):
    """Doubling schedule 1, 2, 4, ... truncated so the total never exceeds r_max."""
    total, size = 0, 1
    while total < r_max:
        size = min(size, r_max - total)
        yield total, size
        total += size
        size *= 2


def _sample_into(graph, roots, seed, start, count, sinks):
    step = max(1, CHUNK_ENTRIES // graph.n)
    for lo in range(start, start + count, step):
        c = min(step, start + count - lo)
        parents, slots, orders = sample_forests(graph, roots, seed, lo, c)
        for sink in sinks:
            if isinstance(sink, RootedCounts):
                sink.accumulate_batch(parents, orders)
            else:
                sink.accumulate_batch(parents, slots, orders)


def _delta(n_nodes, batches):
    return 1.0 / (3.0 * n_nodes * max(batches, 1))


def select_first_node(graph: Graph, eps: float, seed: int, r_max=DEFAULT_R_MAX):
    """Node minimising the pseudoinverse diagonal, from forests rooted at the
    max-degree node. Returns (node, samples used)."""
    n = graph.n
    s = int(np.argmax(graph.degrees))
    if n == 1:
        return s, 0
    bfs = bfs_structure(graph, [s])
    counters = EdgeCounters(graph, [s], bfs, pseudo=True)
    budget = min(sample_budget("first-node", eps, graph.diameter, graph.degrees[s], n, r_max), r_max)
    others = np.setdiff1d(np.arange(n), [s])
    depth = bfs.depth.astype(np.float64)
    x = None
    for b, (start, size) in enumerate(_batches(budget)):
        _sample_into(graph, [s], seed, start, size, [counters])
        x = estimate_pseudo_diagonals(counters)
        if counters.total < 2:
            continue
        hw = confidence_halfwidth(counters.total, path_variance(counters, "x"),
                                  3.0 * depth, _delta(n, b + 1))
        shift = estimate_row_sums(counters).sum() / n**2
        # x carries an unknown shared offset; the relative test needs L^+_uu itself
        target = x + shift
        if np.all(hw[others] <= eps * (target[others] - hw[others])):
            break
    return argmin_lowest(x, np.arange(n)), counters.total


def _gain_halfwidth(counters, z, Y, gain, candidates, projector, delta):
    g = counters.graph
    depth = counters.bfs.depth.astype(np.float64)
    hw_z = confidence_halfwidth(counters.total, path_variance(counters, "z"), depth, delta)
    row_sup = np.outer(projector.row_bound(), depth)
    hw_rows = confidence_halfwidth(counters.total, path_variance(counters, "sketch"),
                                   row_sup, delta) * projector.scale
    e = np.sqrt((hw_rows**2).sum(axis=0))
    norm_y = np.sqrt((Y * Y).sum(axis=0))
    sq = norm_y**2
    hw_sq = 2.0 * norm_y * e + e * e
    hw = np.full(g.n, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(z > 0, hw_z / z, np.inf) + np.where(sq > 0, hw_sq / sq, np.inf)
        hw[candidates] = np.where(gain[candidates] > 0, gain[candidates] * rel[candidates], np.inf)
    return hw


def _converged(gain, hw, candidates, eps):
    g, h = gain[candidates], hw[candidates]
    return bool(np.all(np.isfinite(h)) and np.all(h <= eps * (g - h)))


def forest_delta(graph: Graph, S, eps: float, seed: int, r_max=DEFAULT_R_MAX,
                 max_width=DEFAULT_MAX_SKETCH, projector_mode="auto") -> GainEstimates:
    """Estimated marginal gains for every node outside S."""
    S = np.sort(as_node_set(S, graph.n))
    if S.size == 0 or S.size >= graph.n:
        raise ValueError("S must be a non-empty proper subset of V")
    n = graph.n
    candidates = np.setdiff1d(np.arange(n), S)
    projector = JLProjector.for_candidates(candidates, n, eps, derive_seed(seed, _SKETCH),
                                           max_width=max_width, mode=projector_mode)
    bfs = bfs_structure(graph, S)
    counters = EdgeCounters(graph, S, bfs, projector=projector)
    budget = min(sample_budget("forest-delta", eps, graph.diameter,
                               max_degree_after_removal(graph, S), n, r_max), r_max)
    fseed = derive_seed(seed, _FORESTS)
    est = None
    for b, (start, size) in enumerate(_batches(budget)):
        _sample_into(graph, S, fseed, start, size, [counters])
        z = estimate_diagonals(counters)
        Y = estimate_projected_rows(counters)
        gain = gains_from(z, Y, candidates)
        hw = (_gain_halfwidth(counters, z, Y, gain, candidates, projector, _delta(n, b + 1))
              if counters.total >= 2 else np.full(n, np.inf))
        done = _converged(gain, hw, candidates, eps)
        est = GainEstimates(candidates, z, Y, gain, hw, counters.total, b + 1, done)
        if done:
            break
    return est


def _schur_pieces(graph, S, T, rooted, counters, projector):
    U = rooted.U
    F = rooted.F
    M = assemble_schur(graph, F, S, T)
    M_inv = invert_schur(M)
    W = projector.signs * projector.scale
    z_u = estimate_diagonals(counters)
    Y_u = estimate_projected_rows(counters)
    z, Y = combine_blocks(z_u, Y_u, F, U, T, M_inv, W[:, U], W[:, T])
    return z, Y, M, M_inv


def schur_delta(graph: Graph, S, T, eps: float, seed: int, r_max=DEFAULT_R_MAX,
                max_width=DEFAULT_MAX_SKETCH, projector_mode="auto") -> GainEstimates:
    """Estimated gains using forests rooted at S u T and a Schur correction on T."""
    S = np.sort(as_node_set(S, graph.n))
    T = np.asarray(T, dtype=np.int64)
    T = T[~np.isin(T, S)]
    if T.size == 0:
        return forest_delta(graph, S, eps, seed, r_max, max_width, projector_mode)
    if S.size == 0 or S.size + T.size > graph.n:
        raise ValueError("S must be non-empty and S u T a subset of V")
    n = graph.n
    candidates = np.setdiff1d(np.arange(n), S)
    roots = np.sort(np.concatenate([S, T]))
    projector = JLProjector.for_candidates(candidates, n, eps, derive_seed(seed, _SKETCH),
                                           max_width=max_width, mode=projector_mode)
    bfs = bfs_structure(graph, roots)
    counters = EdgeCounters(graph, roots, bfs, projector=projector)
    rooted = RootedCounts(graph, S, T)
    budget = min(sample_budget("schur-delta", eps, graph.diameter,
                               max_degree_after_removal(graph, roots), n, r_max), r_max)
    fseed = derive_seed(seed, _FORESTS)
    est = None
    start, size, b = 0, 1, 0
    while start < budget:
        size = min(size, budget - start)
        _sample_into(graph, roots, fseed, start, size, [counters, rooted])
        start += size
        size *= 2
        b += 1
        try:
            z, Y, M, M_inv = _schur_pieces(graph, S, T, rooted, counters, projector)
        except SchurSingularError:
            # too few forests to resolve the Schur block yet
            est = None
            continue
        gain = gains_from(z, Y, candidates)
        hw = np.full(n, np.inf)
        if counters.total >= 2:
            delta = _delta(n, b)
            hw = _gain_halfwidth(counters, z, Y, gain, candidates, projector, delta)
            _, hits_var, hits_sup = rooted.diagonal_halfwidth_inputs()
            hw_m = confidence_halfwidth(rooted.total, hits_var, np.maximum(hits_sup, 1.0), delta)
            diag = np.diag(M)
            rho = float(np.max(hw_m / diag)) if np.all(diag > 0) else np.inf
            with np.errstate(invalid="ignore"):
                hw[candidates] += 2.0 * rho * gain[candidates]
                # T nodes have no U-block stream; their error comes from the Schur block alone
                hw[T] = 2.0 * rho * gain[T]
        done = _converged(gain, hw, candidates, eps)
        est = GainEstimates(candidates, z, Y, gain, hw, counters.total, b, done)
        if done:
            return est
    if est is None:
        # the estimate never became positive definite within the budget, so
        # the plain estimator rooted at S answers this round instead
        est = forest_delta(graph, S, eps, seed, r_max, max_width, projector_mode)
        est.samples += counters.total
        est.fallback = True
    return est


def _resolve_roots(graph, config):
    if config.schur_roots == "auto":
        return select_root_set(graph)
    size = int(config.schur_roots)
    order = np.lexsort((np.arange(graph.n), -graph.degrees))
    return np.asarray(order[:size], dtype=np.int64)


def _run(graph: Graph, config: RunConfig, algorithm: str) -> SelectionTrace:
    config.validate(graph.n)
    _set_workers(config.workers)
    trace = SelectionTrace(algorithm=algorithm)
    t0 = time.perf_counter()
    first, used = select_first_node(graph, config.eps, derive_seed(config.seed, _FIRST),
                                    config.r_max)
    trace.add(first, samples=used, seconds=time.perf_counter() - t0)
    if config.k == 1:
        return trace
    T = _resolve_roots(graph, config) if algorithm == "schur" else None
    S = [first]
    for i in range(1, config.k):
        t0 = time.perf_counter()
        seed = derive_seed(config.seed, _ROUND, i)
        if algorithm == "schur":
            est = schur_delta(graph, S, T, config.eps, seed, config.r_max,
                              config.max_width, config.projector)
        else:
            est = forest_delta(graph, S, config.eps, seed, config.r_max,
                               config.max_width, config.projector)
        u = est.best()
        S.append(u)
        trace.add(u, samples=est.samples, gain=float(est.gain[u]),
                  seconds=time.perf_counter() - t0)
    return trace


def forest_cfcm(graph: Graph, config: RunConfig) -> SelectionTrace:
    return _run(graph, config, "forest")


def schur_cfcm(graph: Graph, config: RunConfig) -> SelectionTrace:
    return _run(graph, config, "schur")
