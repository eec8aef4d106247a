import os
import subprocess
import sys

import numba
import numpy as np
import pytest
from scipy.stats import chi2_contingency, chisquare, kstest

from cfcm._rng import bounded, derive_seed, stream_state
from cfcm.exact import forest_count
from cfcm.graph import from_edges
from cfcm.sampler import (
    RandomStream,
    SamplerError,
    forest_codes,
    sample_forest,
    sample_forests,
)
from graphs import complete, cycle, karate, path, random_connected, star


def test_p3_center_root_unique_forest():
    f = sample_forest(path(3), [1], RandomStream(5))
    assert f.parent[0] == 1 and f.parent[2] == 1 and f.parent[1] == -1


def test_p3_end_root_chain_order():
    f = sample_forest(path(3), [0], RandomStream(5))
    assert list(f.parent) == [-1, 0, 1]
    assert list(f.order) == [2, 1]


def test_k3_frequencies():
    parents, _, _ = sample_forests(complete(3), [0], seed=11, start=0, count=10**5)
    _, counts = np.unique(forest_codes(parents, [0]), return_counts=True)
    assert counts.size == 3
    assert np.all(np.abs(counts / 10**5 - 1 / 3) <= 0.01)


def test_slot_points_at_parent():
    g = karate()
    parents, slots, _ = sample_forests(g, [0, 33], 3, 0, 50)
    for p, s in zip(parents, slots):
        nr = np.flatnonzero(p >= 0)
        assert np.all(g.indices[s[nr]] == p[nr])


@pytest.mark.parametrize("seed", range(20))
def test_order_precedes_parent(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 101))
    g = random_connected(n, extra=0.05, seed=seed)
    roots = rng.choice(n, size=int(rng.integers(1, 4)), replace=False)
    parents, _, orders = sample_forests(g, roots, seed, 0, 500)
    for p, o in zip(parents, orders):
        assert sorted(o) == sorted(set(range(n)) - set(roots.tolist()))
        pos = np.full(n, -1)
        pos[o] = np.arange(o.size)
        child = o
        par = p[o]
        nonroot_par = pos[par] >= 0
        assert np.all(pos[child[nonroot_par]] < pos[par[nonroot_par]])
        # acyclic and every chain ends at a root
        labels = sample_root_labels(p, o)
        assert set(labels[o].tolist()) <= set(roots.tolist())


def sample_root_labels(parent, order):
    from cfcm.sampler import _root_labels

    return _root_labels(parent, order)


def test_root_of_matches_chain_walk():
    g = karate()
    f = sample_forest(g, [0, 33], RandomStream(9, 4))
    labels = f.root_of()
    for u in range(g.n):
        v = u
        while f.parent[v] >= 0:
            v = f.parent[v]
        assert labels[u] == v


def test_stream_addressable():
    g = karate()
    parents, slots, orders = sample_forests(g, [33], 21, 10, 5)
    for i in range(5):
        f = sample_forest(g, [33], RandomStream(21, 10 + i))
        assert np.array_equal(f.parent, parents[i])
        assert np.array_equal(f.order, orders[i])
    other = sample_forests(g, [33], 22, 10, 5)[0]
    assert not np.array_equal(other, parents)


_THREAD_SCRIPT = """
import hashlib, numpy as np, networkx as nx
from cfcm.graph import from_edges
from cfcm.sampler import sample_forests
G = nx.karate_club_graph(); e = np.array(G.edges())
g = from_edges(e[:, 0], e[:, 1])
p, s, o = sample_forests(g, [0, 33], 77, 0, 3000)
print(hashlib.sha256(p.tobytes() + o.tobytes()).hexdigest())
"""


def _digest(threads):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads))
    out = subprocess.run([sys.executable, "-c", _THREAD_SCRIPT], env=env, capture_output=True,
                         text=True, check=True)
    return out.stdout.strip()


def test_thread_count_does_not_change_forests():
    assert _digest(1) == _digest(8)


def test_roots_required():
    with pytest.raises(ValueError):
        sample_forests(path(3), [], 0, 0, 1)


def test_step_cap():
    with pytest.raises(SamplerError):
        sample_forests(path(50), [0], 0, 0, 1, max_steps=3)


def _enumerated_chi2(g, roots, samples, seed, descending=False):
    total = int(round(forest_count(g, roots)))
    parents, _, _ = sample_forests(g, roots, seed, 0, samples, descending=descending)
    codes, counts = np.unique(forest_codes(parents, roots), return_counts=True)
    assert counts.size <= total
    if total == 1:
        return 1.0
    observed = np.concatenate([counts, np.zeros(total - counts.size)])
    return chisquare(observed).pvalue


@pytest.mark.parametrize("g,roots", [
    (cycle(5), [0]),
    (complete(4), [1]),
    (complete(5), [0, 4]),
    (random_connected(8, extra=0.3, seed=4), [2]),
    (random_connected(8, extra=0.4, seed=5), [0, 7]),
    (star(4), [1]),
])
def test_uniform_over_enumerated_forests(g, roots):
    assert _enumerated_chi2(g, roots, 10**5, seed=1) > 1e-3


@pytest.mark.parametrize("g,roots", [(cycle(5), [0]), (complete(4), [3]),
                                     (random_connected(7, extra=0.4, seed=8), [1, 5])])
def test_source_order_invariance(g, roots):
    a = forest_codes(sample_forests(g, roots, 3, 0, 50_000)[0], roots)
    b = forest_codes(sample_forests(g, roots, 4, 0, 50_000, descending=True)[0], roots)
    keys = np.union1d(a, b)
    table = np.array([[np.sum(a == k) for k in keys], [np.sum(b == k) for k in keys]])
    assert chi2_contingency(table).pvalue > 1e-3
    assert _enumerated_chi2(g, roots, 50_000, seed=5, descending=True) > 1e-3


@numba.njit
def _draws(seed, bound, count):
    s = stream_state(seed, 0)
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        out[i] = bounded(s, bound)
    return out


@pytest.mark.parametrize("bound", [1, 3, 7, 1000])
def test_bounded_draws_uniform(bound):
    x = _draws(np.uint64(12345), bound, 200_000)
    assert x.min() >= 0 and x.max() < bound
    if bound > 1:
        counts = np.bincount(x, minlength=bound)
        assert chisquare(counts).pvalue > 1e-3


def test_derive_seed_distinct():
    seeds = {derive_seed(1, i, j) for i in range(20) for j in range(20)}
    assert len(seeds) == 400
    assert derive_seed(1, 2) == derive_seed(1, 2)


def test_chi_square_p_values_uniform_across_seeds():
    # a uniform sampler gives uniform p-values; a biased one piles them near 0
    g = from_edges(np.array([0, 0, 0, 0, 1, 1, 2, 2, 3, 4]), np.array([2, 3, 4, 5, 2, 3, 3, 4, 4, 5]))
    p = [_enumerated_chi2(g, [0], 20_000, seed=s) for s in range(40)]
    assert kstest(p, "uniform").pvalue > 1e-3
