"""Random safe-set instances shared by the projection tests."""

import numpy as np

from safectl.core import Polytope
from safectl.safeset import SafeDecisionSet, StabilityConstraint


def random_set(rng, dim, with_ball=None, with_stability=None):
    """A nonempty SafeDecisionSet of dimension 1 or 2 with a known interior point."""
    c = rng.uniform(-1, 1, dim)
    m = int(rng.integers(1, 5))
    L = rng.standard_normal((m, dim))
    l = L @ c + rng.uniform(0.05, 1.0, m)
    if with_ball is None:
        with_ball = rng.uniform() < 0.5
    if with_stability is None:
        with_stability = rng.uniform() < 0.5
    norm = float(np.linalg.norm(c) + rng.uniform(0.1, 1.0)) if with_ball else None
    shape = (1, dim)
    stab = None
    if with_stability:
        d_x = dim
        A = rng.uniform(-1, 1, (d_x, d_x))
        B = rng.uniform(-1, 1, (d_x, 1))
        r = float(np.linalg.norm(A - B @ c.reshape(shape), 2) + rng.uniform(0.05, 0.5))
        stab = StabilityConstraint(A, B, r)
    return SafeDecisionSet(Polytope(L, l), shape, norm, "spectral" if norm else None, stab,
                           "random"), c


def feasible_points(S, c, rng, n=200, spread=3.0):
    """n members of S from rejection sampling around the interior point c."""
    out = np.zeros((0, S.dim))
    while out.shape[0] < n:
        Z = c + rng.uniform(-spread, spread, (20000, S.dim))
        out = np.vstack([out, Z[S.contains_many(Z)]])
        spread *= 0.5
    return out[:n]
