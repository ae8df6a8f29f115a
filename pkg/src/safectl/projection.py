"""Euclidean projection onto safe decision sets.

Closed-form primitives (halfspace, euclidean ball, spectral ball, the affine
spectral constraint ||A - B K|| <= r) are composed with Dykstra's algorithm,
which converges to the exact projection onto the intersection. Scalar
decisions take an interval fast path. ``brute_force_project`` is an
independent oracle that only ever asks membership questions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateConstraint, NumericalError, SafeSetEmpty
from .safeset import SafeDecisionSet


@dataclass(frozen=True)
class ProjectionConfig:
    max_iters: int = 5000
    tol: float = 1e-8
    warm_start: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"projection tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be at least 1, got {self.max_iters}")


# ---------------------------------------------------------------------------
# primitives


def project_halfspace(z, L_row, l_i):
    z = np.asarray(z, dtype=float)
    a = np.asarray(L_row, dtype=float).reshape(z.shape)
    nn = float(np.vdot(a, a))
    if nn == 0.0:
        raise DegenerateConstraint("halfspace with zero normal")
    excess = float(np.vdot(a, z)) - float(l_i)
    if excess <= 0.0:
        return z.copy()
    return z - (excess / nn) * a


def project_euclidean_ball(z, r):
    z = np.asarray(z, dtype=float)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    n = float(np.linalg.norm(z))
    if n <= r:
        return z.copy()
    return (r / n) * z


def _clip_singular(M, r):
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    return (U * np.minimum(s, r)) @ Vt


def project_spectral_ball(K, r):
    K = np.asarray(K, dtype=float)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if K.ndim < 2:
        return np.clip(K, -r, r) if K.size == 1 else project_euclidean_ball(K, r)
    if np.linalg.norm(K, 2) <= r:
        return K.copy()
    return _clip_singular(K, r)


def _is_scaled_orthogonal(B):
    if B.shape[0] != B.shape[1]:
        return False
    G = B.T @ B
    c = G[0, 0]
    return c > 0 and np.allclose(G, c * np.eye(B.shape[0]), rtol=0, atol=1e-12 * c)


def project_affine_spectral(K, A, B, r, cfg: ProjectionConfig = ProjectionConfig()):
    """Nearest K' in Frobenius norm with ||A - B K'||_2 <= r.

    When B is a multiple of an orthogonal matrix the map K -> A - B K is a
    scaled isometry, so clipping the singular values of A - B K is exact.
    Otherwise the problem is solved by ADMM on the split M = A - B K'.
    """
    K = np.asarray(K, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    shape = K.shape
    K2 = K.reshape(B.shape[1], A.shape[1])
    if r < 0:
        raise ValueError("radius must be nonnegative")
    M0 = A - B @ K2
    if np.linalg.norm(M0, 2) <= r:
        return K.copy()
    if _is_scaled_orthogonal(B):
        Mc = _clip_singular(M0, r)
        return np.linalg.solve(B, A - Mc).reshape(shape)
    return _admm_affine_spectral(K2, A, B, r, cfg).reshape(shape)


def _admm_affine_spectral(K, A, B, r, cfg):
    nb = np.linalg.norm(B, 2)
    if nb == 0.0:
        raise SafeSetEmpty(f"||A|| = {np.linalg.norm(A, 2):.6g} > {r} and B = 0")
    rho = 1.0 / nb ** 2
    BtB = B.T @ B
    lhs = np.eye(B.shape[1]) + rho * BtB
    X = K.copy()
    M = _clip_singular(A - B @ X, r)
    U = np.zeros_like(M)
    tol = cfg.tol * 1e-2
    for _ in range(max(cfg.max_iters, 1) * 10):
        X = np.linalg.solve(lhs, K + rho * B.T @ (A - M + U))
        AX = A - B @ X
        M_prev = M
        M = _clip_singular(AX + U, r)
        U = U + AX - M
        primal = np.linalg.norm(AX - M)
        dual = rho * np.linalg.norm(B.T @ (M - M_prev))
        if primal < tol and dual < tol:
            break
    else:
        viol = np.linalg.norm(A - B @ X, 2) - r
        raise NumericalError(f"affine spectral projection did not converge (violation {viol:.3g})",
                             violation=viol)
    return X


# ---------------------------------------------------------------------------
# composite projection


def _interval_project(z, S: SafeDecisionSet):
    lo, hi = S.interval()
    if lo > hi:
        raise SafeSetEmpty(f"empty interval [{lo:.6g}, {hi:.6g}] ({S.provenance})", step=S.step)
    return np.clip(np.asarray(z, dtype=float), lo, hi)


def _operators(S: SafeDecisionSet):
    """List of projectors acting on the flattened decision."""
    ops = []
    P = S.halfspaces
    for a, b in zip(P.L, P.l):
        if np.linalg.norm(a) == 0.0:
            raise DegenerateConstraint("safe set contains a zero halfspace row")
        ops.append(lambda v, a=a, b=b: project_halfspace(v, a, b))
    if S.norm_bound is not None:
        r = S.norm_bound
        if S.norm_kind == "euclidean":
            ops.append(lambda v: project_euclidean_ball(v, r))
        else:
            block = S.shape if len(S.shape) < 3 else S.shape[-2:]
            if len(block) == 1:
                block = (1, block[0])

            def spectral(v, block=block):
                blocks = v.reshape((-1,) + tuple(block))
                return np.concatenate([project_spectral_ball(k, r).reshape(-1) for k in blocks])

            ops.append(spectral)
    if S.stability is not None:
        st = S.stability
        ops.append(lambda v: project_affine_spectral(v.reshape(S.shape), st.A, st.B, st.radius)
                   .reshape(-1))
    return ops


def project_set(z, S: SafeDecisionSet, cfg: ProjectionConfig = ProjectionConfig(), warm=None):
    """Euclidean projection of z onto S, returned in the shape of z.

    ``warm`` may carry Dykstra correction terms from a previous call on a
    similar set (a list that is updated in place); it only affects speed.
    """
    z = np.asarray(z, dtype=float)
    out_shape = z.shape
    v0 = z.reshape(-1)
    if v0.shape[0] != S.dim:
        raise ValueError(f"point has {v0.shape[0]} entries, set has dimension {S.dim}")
    if S.dim == 1:
        return _interval_project(v0, S).reshape(out_shape)
    if S.contains(v0, 0.0):
        return z.copy()
    ops = _operators(S)
    if len(ops) == 1:
        return ops[0](v0).reshape(out_shape)
    x, corr = _dykstra(v0, ops, S, cfg, warm)
    if warm is not None:
        warm[:] = corr
    return _polish(x, ops, S).reshape(out_shape)


def _polish(x, ops, S, passes: int = 50, target: float = 1e-12):
    """Cyclic projections from a converged Dykstra point until the residual
    violation is at rounding level.

    Dykstra stops once the violation is below ``tol``, which can leave the
    point a few 1e-9 outside a face. Each pass moves the point by about the
    remaining violation, so the distance to z changes only at that scale.
    """
    best, best_v = x, S.violation(x)
    for _ in range(passes):
        if best_v <= target:
            break
        for op in ops:
            x = op(x)
        v = S.violation(x)
        if v < best_v:
            best, best_v = x, v
    return best


def _dykstra(v0, ops, S, cfg, warm=None):
    n = len(ops)
    use_warm = cfg.warm_start and warm is not None and len(warm) == n
    p = [w.copy() for w in warm] if use_warm else [np.zeros_like(v0) for _ in range(n)]
    x = v0 - sum(p) if use_warm else v0.copy()
    window = 200
    ref_viol = np.inf
    certified = False
    for it in range(1, cfg.max_iters + 1):
        x_start = x
        move = 0.0
        for j, op in enumerate(ops):
            y = x + p[j]
            x_new = op(y)
            p_new = y - x_new
            # the iterate can sit still while corrections are still shifting,
            # so movement counts both
            move = max(move, float(np.linalg.norm(p_new - p[j])))
            p[j] = p_new
            x = x_new
        move = max(move, float(np.linalg.norm(x - x_start)))
        viol = S.violation(x)
        if move < cfg.tol and viol < cfg.tol:
            return x, p
        if it % window == 0 and not certified:
            if viol > 1e-6 and viol > 0.99 * ref_viol:
                # Dykstra can plateau for a long time on feasible sets, so a
                # stall is only reported after plain alternating projections
                # also fail to reach the set
                if not _pocs_feasible(v0, ops, S, cfg):
                    raise SafeSetEmpty(
                        f"alternating projections stalled at violation {viol:.3g} "
                        f"({S.provenance}, step {S.step})", step=S.step)
                certified = True
            ref_viol = viol
    viol = S.violation(x)
    if viol <= cfg.tol:
        return x, p
    raise NumericalError(f"Dykstra did not converge in {cfg.max_iters} cycles "
                         f"(violation {viol:.3g})", violation=viol)


def _pocs_feasible(v0, ops, S, cfg) -> bool:
    """Feasibility test by cyclic projections (no corrections).

    Cyclic projections reach the intersection when it is nonempty and settle
    on a cycle with a positive gap when it is empty.
    """
    x = v0.copy()
    for _ in range(cfg.max_iters):
        x_start = x
        for op in ops:
            x = op(x)
        viol = S.violation(x)
        if viol < cfg.tol:
            return True
        if viol > 1e-6 and np.linalg.norm(x - x_start) < 1e-13 * (1.0 + np.linalg.norm(x)):
            return False
    return True


# ---------------------------------------------------------------------------
# oracle


def _bounding_radius(S, z):
    if S.norm_bound is not None:
        if S.norm_kind == "euclidean":
            return S.norm_bound
        # a spectral bound on each block bounds its Frobenius norm
        if len(S.shape) < 2:
            return S.norm_bound
        blocks = int(np.prod(S.shape[:-2]))
        return S.norm_bound * np.sqrt(min(S.shape[-2:]) * blocks)
    return None


def _entry_distance(S, z, dirs, rhos):
    """Smallest rho >= 0 with z + rho d in S for each direction (inf if none is seen).

    ``rhos`` is the increasing scan grid; it must start at 0.
    """
    pts = z[None, None, :] + rhos[None, :, None] * dirs[:, None, :]
    ok = S.contains_many(pts.reshape(-1, z.shape[0])).reshape(len(dirs), len(rhos))
    hit = np.flatnonzero(ok.any(axis=1))
    out = np.full(len(dirs), np.inf)
    if hit.size == 0:
        return out
    first = np.argmax(ok[hit], axis=1)
    hi = rhos[first]
    lo = rhos[np.maximum(first - 1, 0)]
    # along a ray the feasible set is an interval, so the entry point is bracketed
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = S.contains_many(z[None, :] + mid[:, None] * dirs[hit])
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    out[hit] = np.where(first == 0, 0.0, hi)
    return out


def _sphere_dirs(d, n):
    if d == 2:
        ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    # Fibonacci sphere
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    th = np.pi * (1 + 5 ** 0.5) * i
    return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])


def brute_force_project(z, S: SafeDecisionSet, grid_step: float = 1e-4, box=None):
    """Nearest feasible point found by exhaustive search, using membership tests only.

    One-dimensional sets are scanned on a grid of spacing ``grid_step`` over a
    bounding interval. In two and three dimensions a grid of directions
    around z is swept; along each ray the entry distance into S is located by
    a coarse scan followed by bisection, and the direction grid is refined
    around the best direction until its arc resolution is far below
    ``grid_step``. ``box`` optionally gives a bounding half-width when S has
    no norm bound.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    z = np.asarray(z, dtype=float)
    out_shape = z.shape
    v = z.reshape(-1)
    d = v.shape[0]
    if d != S.dim or d > 3:
        raise ValueError("brute_force_project handles decisions of dimension at most 3")
    if S.contains_many(v[None, :])[0]:
        return z.copy()
    R = _bounding_radius(S, v)
    if R is None:
        R = float(box) if box is not None else 10.0 * (1.0 + np.abs(v).max())
    if d == 1:
        lo, hi = -R, R
        grid = np.arange(lo, hi + grid_step / 2, grid_step)
        ok = S.contains_many(grid[:, None])
        if not ok.any():
            raise SafeSetEmpty("no feasible grid point")
        cand = grid[ok]
        return cand[np.argmin(np.abs(cand - v[0]))].reshape(out_shape)
    rho_max = np.linalg.norm(v) + R * np.sqrt(d)
    n_coarse = 1000
    dirs = _sphere_dirs(d, 720 if d == 2 else 6000)
    dist = _entry_distance(S, v, dirs, np.linspace(0.0, rho_max, n_coarse + 1))
    if not np.isfinite(dist).any():
        raise SafeSetEmpty("no feasible point found along any search direction")
    k = int(np.argmin(dist))
    best_dir, best = dirs[k], dist[k]
    spread = np.pi / 180 if d == 2 else 0.08
    while spread * max(best, 1e-12) > grid_step * 1e-4 and spread > 1e-14:
        if d == 2:
            base = np.arctan2(best_dir[1], best_dir[0])
            ang = base + np.linspace(-2 * spread, 2 * spread, 41)
            cand = np.column_stack([np.cos(ang), np.sin(ang)])
        else:
            e1 = np.cross(best_dir, [1.0, 0.0, 0.0])
            if np.linalg.norm(e1) < 0.5:
                e1 = np.cross(best_dir, [0.0, 1.0, 0.0])
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(best_dir, e1)
            g = np.linspace(-2 * spread, 2 * spread, 15)
            a1, a2 = np.meshgrid(g, g)
            cand = best_dir[None, :] + a1.reshape(-1, 1) * e1 + a2.reshape(-1, 1) * e2
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        # a fine shell around the current best distance catches short chords
        # near vertices that a uniform scan would step over
        shell = np.linspace(max(best * (1 - 4 * spread), 0.0), best * (1 + 4 * spread), 401)
        rhos = np.unique(np.concatenate([np.linspace(0.0, best, 200), shell]))
        dd = _entry_distance(S, v, cand, rhos)
        j = int(np.argmin(dd))
        if dd[j] <= best:
            best, best_dir = dd[j], cand[j]
        spread *= 0.2 if d == 2 else 0.3
    return (v + best * best_dir).reshape(out_shape)
