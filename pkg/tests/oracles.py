"""Dense reference constructions shared by the Schur tests."""
import numpy as np

from cfcm.schur import assemble_schur, exact_rooted_probabilities
from graphs import random_connected


def random_instance(rng, n_max=50):
    n = int(rng.integers(4, n_max + 1))
    g = random_connected(n, extra=float(rng.uniform(0.02, 0.2)), seed=int(rng.integers(1 << 30)))
    perm = rng.permutation(n)
    s = int(rng.integers(1, max(2, n // 4)))
    t = int(rng.integers(1, max(2, n // 4)))
    return g, np.sort(perm[:s]), np.sort(perm[s:s + t])


def exact_blocks(g, S, T, W):
    """Exact F, U, M and the U-block pieces diag(L_UU^-1), W_U L_UU^-1."""
    F, U = exact_rooted_probabilities(g, S, T)
    L = g.laplacian.toarray()
    M = assemble_schur(g, F, S, T)
    z_u = np.zeros(g.n)
    Y_u = np.zeros((W.shape[0], g.n))
    if U.size:
        inv_uu = np.linalg.inv(L[np.ix_(U, U)])
        z_u[U] = np.diag(inv_uu)
        Y_u[:, U] = W[:, U] @ inv_uu
    return F, U, M, z_u, Y_u
