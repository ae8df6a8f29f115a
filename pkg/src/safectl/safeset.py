"""Time-varying safe decision sets.

Two constructions share one code path. For a decision ``theta`` entering the
input linearly (u = M theta) and dynamics x+ = drift + G u + w, every state
row i of the next-step polytope is tightened against the worst noise in the
ball of radius W and relaxed by the barrier decay term:

    L_i G M theta <= l_next_i - L_i drift - W ||L_i|| - (1 - alpha) h_now_i(x_t)

with h_now_i(x) = l_now_i - L_now_i x. ``alpha = 1`` drops the decay term and
gives the plain robust one-step containment used for gain sets of LTV systems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    DIRECT,
    STATE_FEEDBACK,
    ControlAffineSystem,
    LtvSystem,
    NoiseBound,
    Polytope,
    _frozen,
    _vec,
    input_matrix,
)
from .errors import ConfigError, SafeSetEmpty

ZERO_ROW = 1e-14


@dataclass(frozen=True)
class CbfParams:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"barrier decay alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class StabilityConstraint:
    """||A - B K||_2 <= radius for a gain K of shape (d_u, d_x)."""

    A: np.ndarray
    B: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))

    def value(self, K) -> float:
        return float(np.linalg.norm(self.A - self.B @ K, 2))


@dataclass(frozen=True, eq=False)
class SafeDecisionSet:
    """Convex feasible set for a decision variable of shape ``shape``.

    Halfspaces act on the row-major flattening of the decision. ``norm_kind``
    is ``"spectral"`` (each trailing 2-D block of a gain) or ``"euclidean"``.
    """

    halfspaces: Polytope
    shape: tuple
    norm_bound: Optional[float] = None
    norm_kind: Optional[str] = None
    stability: Optional[StabilityConstraint] = None
    provenance: str = ""
    step: Optional[int] = None

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def _blocks(self, z):
        if len(self.shape) == 1:
            return z.reshape(1, 1, -1)
        return z.reshape((-1,) + tuple(self.shape[-2:]))

    def violation(self, z) -> float:
        z = np.asarray(z, dtype=float).reshape(-1)
        v = self.halfspaces.violation(z)
        if self.norm_bound is not None:
            if self.norm_kind == "euclidean":
                nrm = float(np.linalg.norm(z))
            else:
                nrm = max(float(np.linalg.norm(b, 2)) for b in self._blocks(z))
            v = max(v, nrm - self.norm_bound)
        if self.stability is not None:
            v = max(v, self.stability.value(z.reshape(self.shape)) - self.stability.radius)
        return v

    def contains(self, z, tol: float = 1e-9) -> bool:
        return self.violation(z) <= tol

    def contains_many(self, Z, tol: float = 0.0) -> np.ndarray:
        """Vectorized membership for the rows of ``Z`` (n, dim)."""
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        ok = np.ones(Z.shape[0], dtype=bool)
        P = self.halfspaces
        if P.n_rows:
            ok &= np.all(Z @ P.L.T <= P.l + tol, axis=1)
        if self.norm_bound is not None:
            if self.norm_kind == "euclidean":
                ok &= np.linalg.norm(Z, axis=1) <= self.norm_bound + tol
            else:
                blocks = Z.reshape((Z.shape[0], -1) + (self._blocks(Z[0]).shape[1:]))
                nrm = batch_spectral_norm(blocks).max(axis=1)
                ok &= nrm <= self.norm_bound + tol
        if self.stability is not None:
            s = self.stability
            Ks = Z.reshape((-1,) + tuple(self.shape))
            M = s.A[None] - np.einsum("ij,njk->nik", s.B, Ks)
            ok &= batch_spectral_norm(M) <= s.radius + tol
        return ok

    def same_region(self, other) -> bool:
        """True when both sets are described by identical constraints."""
        if other is self:
            return True
        if not isinstance(other, SafeDecisionSet):
            return False
        if (self.shape != other.shape or self.norm_bound != other.norm_bound
                or self.norm_kind != other.norm_kind
                or not self.halfspaces.same_region(other.halfspaces)):
            return False
        a, b = self.stability, other.stability
        if (a is None) != (b is None):
            return False
        return a is None or (a.radius == b.radius and np.array_equal(a.A, b.A)
                             and np.array_equal(a.B, b.B))

    def interval(self):
        """[lo, hi] for a one-dimensional decision; lo > hi means empty."""
        if self.dim != 1:
            raise ValueError("interval() needs a scalar decision")
        lo, hi = -np.inf, np.inf
        P = self.halfspaces
        for a, b in zip(P.L[:, 0], P.l):
            if a > 0:
                hi = min(hi, b / a)
            elif a < 0:
                lo = max(lo, b / a)
            elif b < 0:
                return np.inf, -np.inf
        if self.norm_bound is not None:
            lo, hi = max(lo, -self.norm_bound), min(hi, self.norm_bound)
        if self.stability is not None:
            a0 = float(self.stability.A.reshape(-1)[0])
            b0 = float(self.stability.B.reshape(-1)[0])
            r = self.stability.radius
            # |a0 - b0 k| <= r
            if b0 == 0.0:
                if abs(a0) > r:
                    return np.inf, -np.inf
            else:
                k1, k2 = (a0 - r) / b0, (a0 + r) / b0
                lo, hi = max(lo, min(k1, k2)), min(hi, max(k1, k2))
        return lo, hi


def batch_spectral_norm(M) -> np.ndarray:
    """Spectral norms of a stack of matrices (..., m, n)."""
    M = np.asarray(M, dtype=float)
    m, n = M.shape[-2:]
    if m == 1 or n == 1:
        return np.sqrt(np.sum(M * M, axis=(-2, -1)))
    if m == 2 and n == 2:
        fro2 = np.sum(M * M, axis=(-2, -1))
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (fro2 + disc))
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


def _row_norms(L, mode):
    if mode == "row":
        return np.linalg.norm(L, axis=1)
    if mode == "matrix":
        return np.full(L.shape[0], np.linalg.norm(L, 2) if L.size else 0.0)
    raise ConfigError(f"unknown tightening norm mode {mode!r}")


def _assemble(rows_A, rows_b, shape, step, provenance, norm_bound=None, norm_kind=None,
              stability=None):
    """Drop decision-independent rows (checking them) and build the set."""
    A = np.vstack(rows_A) if rows_A else np.zeros((0, int(np.prod(shape))))
    b = np.concatenate(rows_b) if rows_b else np.zeros(0)
    zero = np.linalg.norm(A, axis=1) <= ZERO_ROW
    bad = zero & (b < -1e-12)
    if np.any(bad):
        raise SafeSetEmpty(
            f"{provenance}: {int(bad.sum())} decision-independent constraint(s) violated "
            f"(worst slack {b[bad].min():.3g}) at step {step}", step=step)
    P = Polytope(A[~zero], b[~zero])
    return SafeDecisionSet(P, tuple(shape), norm_bound, norm_kind, stability, provenance, step)


def robust_decision_set(drift, gain, M, shape, state_con_next: Polytope, input_con: Polytope,
                        W: float, alpha: float = 1.0, state_con_now: Optional[Polytope] = None,
                        x_t=None, norm_bound=None, norm_kind=None, stability=None,
                        step=None, provenance="", tightening="row") -> SafeDecisionSet:
    """Safe set for theta with u = M theta and x+ = drift + gain u + w."""
    Lx, lx = state_con_next.L, state_con_next.l
    rhs = lx - Lx @ drift - W * _row_norms(Lx, tightening)
    if alpha < 1.0:
        if state_con_now is None or x_t is None:
            raise ConfigError("barrier decay needs the current state and polytope")
        h_now = state_con_now.l - state_con_now.L @ _vec(x_t)
        if h_now.shape != rhs.shape:
            raise ConfigError("current and next state polytopes must have matching rows")
        rhs = rhs - (1.0 - alpha) * h_now
    rows_A = [Lx @ gain @ M, input_con.L @ M]
    rows_b = [rhs, input_con.l]
    return _assemble(rows_A, rows_b, shape, step, provenance, norm_bound, norm_kind, stability)


def build_gain_set(sys: LtvSystem, t: int, x_t, state_con_next: Polytope, input_con: Polytope,
                   W, kappa: float, gamma: float, tightening: str = "row") -> SafeDecisionSet:
    """Safe state-feedback gains K (u = -K x_t) for an LTV system at step t.

    Encodes robust next-state containment, input containment, ||K|| <= kappa and
    ||A_t - B_t K|| <= 1 - gamma.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    if kappa <= 0:
        raise ConfigError(f"kappa must be positive, got {kappa}")
    W = W.W if isinstance(W, NoiseBound) else float(W)
    x_t = _vec(x_t, "x_t")
    A, B = sys.matrices(t)
    shape = (sys.d_u, sys.d_x)
    M = input_matrix(STATE_FEEDBACK, shape, x_t)
    return robust_decision_set(
        A @ x_t, B, M, shape, state_con_next, input_con, W, alpha=1.0,
        norm_bound=kappa, norm_kind="spectral",
        stability=StabilityConstraint(A, B, 1.0 - gamma),
        step=t, provenance="gain-set", tightening=tightening)


def build_input_set_dcbf(sys: ControlAffineSystem, x_t, state_con_now: Polytope,
                         state_con_next: Polytope, input_con: Polytope, W, cbf: CbfParams,
                         step: Optional[int] = None, tightening: str = "row") -> SafeDecisionSet:
    """Barrier-tightened safe inputs for a control-affine system."""
    return build_policy_set_dcbf(sys, x_t, DIRECT, (sys.d_u,), state_con_now, state_con_next,
                                 input_con, W, cbf, step=step, tightening=tightening)


def build_policy_set_dcbf(sys, x_t, kind, shape, state_con_now, state_con_next, input_con, W,
                          cbf: CbfParams, history=(), kappa: Optional[float] = None,
                          step: Optional[int] = None, t: int = 1,
                          tightening: str = "row") -> SafeDecisionSet:
    """Barrier-tightened set for any linear policy parameterization.

    The input u = M theta is substituted into the input-space construction.
    """
    W = W.W if isinstance(W, NoiseBound) else float(W)
    x_t = _vec(x_t, "x_t")
    drift, gain = sys.drift_gain(t if step is None else step, x_t)
    M = input_matrix(kind, shape, x_t, history)
    if kind == DIRECT:
        norm_kind = "euclidean"
    else:
        norm_kind = "spectral"
    return robust_decision_set(
        drift, gain, M, shape, state_con_next, input_con, W, alpha=cbf.alpha,
        state_con_now=state_con_now, x_t=x_t, norm_bound=kappa,
        norm_kind=norm_kind if kappa is not None else None,
        step=step, provenance=f"dcbf-{kind}", tightening=tightening)


def check_nonempty(S: SafeDecisionSet, cfg=None):
    """(True, witness) if projecting the origin onto S yields a member.

    Returns (False, None) when the set is found to be empty.
    """
    from .projection import ProjectionConfig, project_set

    cfg = cfg or ProjectionConfig()
    try:
        p = project_set(np.zeros(S.shape), S, cfg)
    except SafeSetEmpty:
        return False, None
    if S.contains(p, 1e-7):
        return True, p
    return False, None


def noise_directions(d_x: int, W: float, n_samples: int, seed: int = 0) -> np.ndarray:
    """w = 0 plus sample points on the sphere ||w|| = W (axis extremes included)."""
    pts = [np.zeros(d_x)]
    if W > 0:
        eye = np.eye(d_x)
        pts += list(W * eye) + list(-W * eye)
        if d_x == 2:
            ang = np.linspace(0.0, 2 * np.pi, max(n_samples, 2), endpoint=False)
            pts += list(W * np.column_stack([np.cos(ang), np.sin(ang)]))
        elif d_x > 2:
            rng = np.random.default_rng(seed)
            g = rng.standard_normal((n_samples, d_x))
            pts += list(W * g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.array(pts)


def worst_case_successor_margin(sys, x_t, decision, state_con_next: Polytope, W,
                                n_samples: int = 16, kind: str = STATE_FEEDBACK,
                                t: int = 1, history=()) -> float:
    """min over sampled noise and polytope rows of l_i - L_i x_{t+1}(w).

    Nonnegative means the successor stays inside against every sampled noise.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    W = W.W if isinstance(W, NoiseBound) else float(W)
    decision = np.asarray(decision, dtype=float)
    x_t = _vec(x_t, "x_t")
    drift, gain = sys.drift_gain(t, x_t)
    u = input_matrix(kind, decision.shape if decision.ndim else (1, 1), x_t, history) @ decision.reshape(-1)
    nominal = drift + gain @ u
    ws = noise_directions(len(nominal), W, n_samples)
    succ = nominal[None, :] + ws
    margins = state_con_next.l[None, :] - succ @ state_con_next.L.T
    return float(margins.min())


@dataclass(frozen=True, eq=False)
class SafetySpec:
    """Everything needed to build the safe decision set at any step.

    ``state`` and ``input`` are schedules of polytopes (1-indexed). LTV systems
    with state-feedback gains use the gain-set construction (needs ``gamma``);
    every other combination uses the barrier construction (needs ``cbf``).
    """

    state: object
    input: object
    W: float
    kind: str = STATE_FEEDBACK
    shape: tuple = (1, 1)
    kappa: Optional[float] = None
    gamma: Optional[float] = None
    cbf: Optional[CbfParams] = None
    tightening: str = "row"

    def state_at(self, t: int) -> Polytope:
        s = self.state
        return s.at(t) if hasattr(s, "at") else s

    def input_at(self, t: int) -> Polytope:
        s = self.input
        return s.at(t) if hasattr(s, "at") else s

    def uses_gain_set(self, sys) -> bool:
        return isinstance(sys, LtvSystem) and self.kind == STATE_FEEDBACK and self.cbf is None

    def decision_set(self, sys, t: int, x_t, history=()) -> SafeDecisionSet:
        if self.uses_gain_set(sys):
            if self.gamma is None or self.kappa is None:
                raise ConfigError("gain sets need kappa and gamma")
            return build_gain_set(sys, t, x_t, self.state_at(t + 1), self.input_at(t), self.W,
                                  self.kappa, self.gamma, tightening=self.tightening)
        if self.cbf is None:
            raise ConfigError("barrier sets need CbfParams")
        return build_policy_set_dcbf(sys, x_t, self.kind, self.shape, self.state_at(t),
                                     self.state_at(t + 1), self.input_at(t), self.W, self.cbf,
                                     history=history, kappa=self.kappa, step=t, t=t,
                                     tightening=self.tightening)
