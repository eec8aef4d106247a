import functools
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from cfcm.exact import all_gains, greedy_exact, group_cfcc
from cfcm.greedy import (
    RunConfig,
    SelectionTrace,
    forest_cfcm,
    forest_delta,
    schur_cfcm,
    schur_delta,
    select_first_node,
)
from graphs import complete, florentine, graph23, karate, path, star


def test_first_node_p3():
    assert select_first_node(path(3), 0.2, seed=1)[0] == 1


def test_first_node_k3_any():
    node, used = select_first_node(complete(3), 0.2, seed=1)
    assert node in (0, 1, 2) and used >= 1


def test_first_node_respects_cap():
    _, used = select_first_node(karate(), 0.2, seed=0, r_max=100)
    assert used <= 100


def test_forest_delta_p3():
    est = forest_delta(path(3), [0], 0.1, seed=4, projector_mode="identity")
    assert list(est.candidates) == [1, 2]
    assert abs(est.gain[1] - 2.0) / 2.0 < 0.05
    assert abs(est.gain[2] - 2.5) / 2.5 < 0.05
    assert math.isnan(est.gain[0])
    assert est.best() == 2


def test_forest_delta_k3():
    est = forest_delta(complete(3), [0], 0.1, seed=5)
    assert np.all(np.abs(est.gain[[1, 2]] - 5 / 6) < 0.05 * 5 / 6)


def test_forest_delta_single_candidate():
    est = forest_delta(path(3), [0, 1], 0.2, seed=0)
    assert list(est.candidates) == [2] and est.best() == 2
    assert math.isclose(est.gain[2], 1.0)


def test_forest_delta_bad_s():
    with pytest.raises(ValueError):
        forest_delta(path(3), [], 0.2, 0)
    with pytest.raises(ValueError):
        forest_delta(path(3), [0, 1, 2], 0.2, 0)


def test_forest_delta_matches_exact_on_karate():
    g = karate()
    est = forest_delta(g, [33], 0.1, seed=3, projector_mode="identity")
    exact = all_gains(g, [33])
    c = est.candidates
    assert np.max(np.abs(est.gain[c] - exact[c]) / exact[c]) < 0.1
    assert est.best() == 0


def test_schur_delta_p3():
    est = schur_delta(path(3), [0], [2], 0.1, seed=6, projector_mode="identity")
    assert abs(est.gain[1] - 2.0) / 2.0 < 0.05
    assert abs(est.gain[2] - 2.5) / 2.5 < 0.05
    assert not est.fallback


def test_schur_delta_empty_t_is_forest_delta():
    a = schur_delta(karate(), [33], [33], 0.2, seed=2)
    b = forest_delta(karate(), [33], 0.2, seed=2)
    assert np.array_equal(a.gain, b.gain, equal_nan=True)
    assert a.samples == b.samples


def test_schur_delta_close_to_exact_on_karate():
    g = karate()
    est = schur_delta(g, [33], [0, 32, 2], 0.1, seed=8, projector_mode="identity")
    exact = all_gains(g, [33])
    c = est.candidates
    assert np.max(np.abs(est.gain[c] - exact[c]) / exact[c]) < 0.1
    assert est.best() == 0


def test_schur_delta_falls_back_when_unresolved():
    # two forests cannot resolve a Schur block on hubs grounded at a leaf
    g = karate()
    est = schur_delta(g, [11], [0, 33, 32, 2, 1], 0.2, seed=0, r_max=2)
    if est.fallback:
        assert est.samples > 2
    assert est.best() in est.candidates


@pytest.mark.parametrize("driver", [forest_cfcm, schur_cfcm])
def test_drivers_small_examples(driver):
    assert driver(path(3), RunConfig(k=1, seed=1)).nodes == [1]
    nodes = driver(path(4), RunConfig(k=2, seed=1)).nodes
    # the two reflections of the path are exact ties
    assert set(nodes) in ({1, 3}, {0, 2})
    nodes = driver(complete(3), RunConfig(k=2, seed=1)).nodes
    assert len(set(nodes)) == 2
    assert driver(star(5), RunConfig(k=1, seed=3)).nodes == [0]


@pytest.mark.parametrize("driver", [forest_cfcm, schur_cfcm])
def test_drivers_anytime_increasing(driver):
    g = florentine()
    t = driver(g, RunConfig(k=5, eps=0.2, seed=2))
    values = [group_cfcc(g, t.prefix(i))[1] for i in range(1, 6)]
    assert np.all(np.diff(values) > 0)
    assert len(t) == 5 and len(set(t.nodes)) == 5
    assert all(s > 0 for s in t.samples)


@pytest.mark.parametrize("driver", [forest_cfcm, schur_cfcm])
def test_drivers_reproducible(driver):
    cfg = RunConfig(k=4, eps=0.3, seed=9)
    a, b = driver(karate(), cfg), driver(karate(), cfg)
    assert a.nodes == b.nodes and a.samples == b.samples


def test_explicit_schur_roots():
    g = karate()
    t = schur_cfcm(g, RunConfig(k=4, eps=0.2, seed=1, schur_roots=3))
    assert t.nodes[:2] == [33, 0]


@functools.lru_cache(maxsize=None)
def _greedy_runs(graph):
    g = graph()
    return {d.__name__: [d(g, RunConfig(k=5, eps=0.15, seed=seed, projector="identity"))
                         for seed in range(5)] for d in (forest_cfcm, schur_cfcm)}


@pytest.mark.parametrize("graph", [florentine, graph23])
def test_drivers_within_two_percent_of_exact_greedy(graph):
    g = graph()
    ref_c = group_cfcc(g, greedy_exact(g, 5).nodes)[1]
    for runs in _greedy_runs(graph).values():
        for t in runs:
            assert group_cfcc(g, t.nodes)[1] >= 0.98 * ref_c


@pytest.mark.parametrize("graph", [
    graph23,
    pytest.param(florentine, marks=pytest.mark.xfail(
        reason="second-round gains 2.845 and 2.834 differ by 0.4%, far inside eps=0.15",
        strict=False)),
])
def test_drivers_reproduce_exact_greedy_sequence(graph):
    g = graph()
    ref = greedy_exact(g, 5).nodes
    for runs in _greedy_runs(graph).values():
        assert sum(t.nodes == ref for t in runs) >= 4


def test_schur_second_pick_on_karate():
    g = karate()
    by_degree = np.lexsort((np.arange(g.n), -g.degrees))
    hits = sum(schur_delta(g, [33], by_degree[:3], 0.2, seed).best() == 0 for seed in range(10))
    assert hits >= 8


_THREAD_SCRIPT = """
import networkx as nx, numpy as np
from cfcm.graph import from_edges
from cfcm.greedy import RunConfig, forest_cfcm, schur_cfcm
G = nx.karate_club_graph(); e = np.array(G.edges())
g = from_edges(e[:, 0], e[:, 1])
for f in (forest_cfcm, schur_cfcm):
    t = f(g, RunConfig(k=3, eps=0.3, seed=4))
    print(t.nodes, t.samples)
"""


def _run(threads):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads))
    return subprocess.run([sys.executable, "-c", _THREAD_SCRIPT], env=env, capture_output=True,
                          text=True, check=True).stdout


def test_thread_count_does_not_change_selection():
    assert _run(1) == _run(4)


@pytest.mark.parametrize("kwargs", [dict(k=0), dict(k=34), dict(k=2, eps=0.0), dict(k=2, eps=1.0),
                                    dict(k=2, r_max=0), dict(k=2, algorithm="magic"),
                                    dict(k=2, schur_roots=-1), dict(k=2, projector="dense")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs).validate(34)


def test_trace_rejects_duplicates():
    t = SelectionTrace("forest")
    t.add(3, samples=1)
    with pytest.raises(ValueError):
        t.add(3)
    assert t.prefix(1) == [3] and len(t) == 1
