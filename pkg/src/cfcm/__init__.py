"""Group current-flow closeness centrality maximization with sampled spanning forests."""
import os

import numba

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the system TBB is often too old for numba; skip it rather than warn
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .baselines import degree_baseline, top_cfcc_baseline
from .estimator import CFCCMaximizer, check_graph, evaluate_cfcc
from .exact import exhaustive_optimum, greedy_exact, group_cfcc, pseudoinverse
from .graph import Graph, from_edges, largest_connected_component, load_edge_list
from .greedy import RunConfig, SelectionTrace, forest_cfcm, schur_cfcm
from .schur import select_root_set

__all__ = [
    "CFCCMaximizer",
    "Graph",
    "RunConfig",
    "SelectionTrace",
    "check_graph",
    "degree_baseline",
    "evaluate_cfcc",
    "exhaustive_optimum",
    "forest_cfcm",
    "from_edges",
    "greedy_exact",
    "group_cfcc",
    "largest_connected_component",
    "load_edge_list",
    "pseudoinverse",
    "schur_cfcm",
    "select_root_set",
    "top_cfcc_baseline",
]
