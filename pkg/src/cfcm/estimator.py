"""scikit-learn style front end for group CFCC maximization."""
from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import degree_baseline, top_cfcc_baseline
from .exact import DENSE_LIMIT, cfcc_iterative, greedy_exact, group_cfcc
from .graph import Graph, GraphFormatError, from_edges, largest_connected_component
from .greedy import DEFAULT_R_MAX, RunConfig, SelectionTrace, forest_cfcm, schur_cfcm
from .estimators import DEFAULT_MAX_SKETCH

ALGORITHMS = ("forest", "schur", "exact", "degree", "topcfcc")


def check_graph(X, connected="error") -> Graph:
    """Coerce X to a Graph.

    Accepts a Graph, a square scipy sparse or dense adjacency matrix, or an
    (m, 2) integer edge array. ``connected`` is "error" or "largest".
    """
    if isinstance(X, Graph):
        g = X
    elif sp.issparse(X):
        A = sp.csr_matrix(X)
        if A.shape[0] != A.shape[1]:
            raise GraphFormatError(f"adjacency must be square, got {A.shape}")
        r, c = A.nonzero()
        g = from_edges(r, c, n=A.shape[0])
    else:
        X = check_array(X, ensure_2d=True, dtype=None, ensure_min_samples=1)
        if X.shape[0] == X.shape[1] and X.shape[1] != 2:
            r, c = np.nonzero(X)
            g = from_edges(r, c, n=X.shape[0])
        elif X.shape[1] == 2:
            if not np.issubdtype(X.dtype, np.integer):
                if not np.all(np.mod(X, 1) == 0):
                    raise GraphFormatError("edge array must hold integer node ids")
                X = X.astype(np.int64)
            if X.min() < 0:
                raise GraphFormatError("node ids must be non-negative")
            labels, inv = np.unique(X.ravel(), return_inverse=True)
            inv = inv.reshape(-1, 2)
            g = from_edges(inv[:, 0], inv[:, 1], labels=labels)
        else:
            raise GraphFormatError(f"cannot read a graph from an array of shape {X.shape}")
    if g.n < 2 or g.m == 0:
        raise GraphFormatError("graph needs at least one edge")
    if connected == "largest":
        return largest_connected_component(g)
    if largest_connected_component(g).n != g.n:
        raise GraphFormatError("graph is not connected")
    return g


def evaluate_cfcc(graph: Graph, nodes, method="auto", probes=128, tol=1e-8, seed=0) -> float:
    """CFCC of a node group: dense solve when small, CG + Hutchinson otherwise."""
    if method == "auto":
        method = "dense" if graph.n <= DENSE_LIMIT else "cg"
    if method == "dense":
        return group_cfcc(graph, nodes)[1]
    if method == "cg":
        return cfcc_iterative(graph, nodes, probes=probes, tol=tol, seed=seed)[0]
    raise ValueError(f"unknown evaluation method {method!r}")


class CFCCMaximizer(BaseEstimator):
    """Pick k nodes maximizing group current-flow closeness.

    Parameters
    ----------
    k : group size
    algorithm : "forest", "schur", "exact", "degree" or "topcfcc"
    eps : error parameter in (0, 1) for the sampling drivers
    seed : master seed; runs are reproducible for any worker count
    workers : numba threads (None keeps the current setting)
    r_max : cap on forests per phase
    schur_roots : "auto" or the number of top-degree extra roots
    max_width : cap on the sketch width
    evaluation : how ``cfcc_`` is computed ("auto", "dense", "cg")
    """

    def __init__(self, k=5, algorithm="schur", eps=0.2, seed=0, workers=None,
                 r_max=DEFAULT_R_MAX, schur_roots="auto", max_width=DEFAULT_MAX_SKETCH,
                 projector="auto", evaluation="auto"):
        self.k = k
        self.algorithm = algorithm
        self.eps = eps
        self.seed = seed
        self.workers = workers
        self.r_max = r_max
        self.schur_roots = schur_roots
        self.max_width = max_width
        self.projector = projector
        self.evaluation = evaluation

    def _config(self):
        return RunConfig(k=self.k, eps=self.eps, seed=self.seed, workers=self.workers,
                         r_max=self.r_max, algorithm=self.algorithm,
                         schur_roots=self.schur_roots, max_width=self.max_width,
                         projector=self.projector)

    def fit(self, X, y=None):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        g = check_graph(X)
        if not 1 <= self.k < g.n:
            raise ValueError(f"k must satisfy 1 <= k < n (got k={self.k}, n={g.n})")
        t0 = time.perf_counter()
        if self.algorithm in ("forest", "schur"):
            config = self._config().validate(g.n)
            trace = (forest_cfcm if self.algorithm == "forest" else schur_cfcm)(g, config)
        elif self.algorithm == "exact":
            trace = greedy_exact(g, self.k)
        else:
            nodes = (degree_baseline(g, self.k) if self.algorithm == "degree"
                     else top_cfcc_baseline(g, self.k, mode="exact" if g.n <= DENSE_LIMIT
                                            else "estimated", seed=self.seed))
            trace = SelectionTrace(algorithm=self.algorithm)
            for u in nodes:
                trace.add(u)
            trace.seconds[-1] = time.perf_counter() - t0
        self.graph_ = g
        self.trace_ = trace
        self.selected_ = np.asarray(trace.nodes, dtype=np.int64)
        self.selected_labels_ = g.to_original(trace.nodes)
        self.cfcc_ = evaluate_cfcc(g, self.selected_, self.evaluation, seed=self.seed)
        return self

    def score(self, X=None, y=None):
        """CFCC of the fitted group (on X if given, by original labels)."""
        check_is_fitted(self, "selected_")
        if X is None:
            return self.cfcc_
        g = check_graph(X)
        return evaluate_cfcc(g, g.to_dense(self.selected_labels_), self.evaluation, seed=self.seed)
