"""Run records, the hindsight comparator, LQR, and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DEFAULT_TOL, QuadraticLoss, _vec, input_matrix, step
from .errors import NumericalError
from .projection import ProjectionConfig, project_set
from .safeset import SafeDecisionSet

FROM_ACTUAL = "from-actual"
COUPLED = "coupled"


@dataclass(eq=False)
class RunLog:
    """Per-step record of one closed-loop run.

    Row t (0-based) describes step t+1: the state x_t, the decision used, the
    input u_t, the noise w_t, the successor x_{t+1}, the stage loss, zeta_t and
    whether x_{t+1} and u_t satisfied their polytopes.
    """

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    x_next: np.ndarray
    loss: np.ndarray
    zeta: np.ndarray
    safe_state: np.ndarray
    safe_input: np.ndarray
    decision: np.ndarray
    meta: dict = field(default_factory=dict)
    seed: Optional[int] = None
    aborted: Optional[str] = None

    @property
    def T(self) -> int:
        return int(self.loss.shape[0])

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.T + 1)

    @classmethod
    def empty(cls, d_x: int, d_u: int, n_decision: int, **kw):
        z = lambda *s: np.zeros(s)
        return cls(z(0, d_x), z(0, d_u), z(0, d_x), z(0, d_x), z(0), z(0),
                   np.zeros(0, bool), np.zeros(0, bool), z(0, n_decision), **kw)

    def cumulative_loss(self) -> float:
        return float(np.sum(self.loss))

    def is_safe(self) -> bool:
        return self.aborted is None and bool(np.all(self.safe_state) and np.all(self.safe_input))


class RunRecorder:
    """Accumulates rows and freezes them into a RunLog."""

    def __init__(self):
        self.rows = {k: [] for k in ("x", "u", "w", "x_next", "loss", "zeta", "safe_state",
                                     "safe_input", "decision")}

    def add(self, **row):
        for k, v in row.items():
            self.rows[k].append(v)

    def freeze(self, d_x, d_u, n_decision, **kw) -> RunLog:
        r = self.rows
        def arr(k, width):
            return np.array(r[k], dtype=float).reshape(len(r[k]), width)
        return RunLog(arr("x", d_x), arr("u", d_u), arr("w", d_x), arr("x_next", d_x),
                      np.array(r["loss"], dtype=float).reshape(-1),
                      np.array(r["zeta"], dtype=float).reshape(-1),
                      np.array(r["safe_state"], dtype=bool).reshape(-1),
                      np.array(r["safe_input"], dtype=bool).reshape(-1),
                      arr("decision", n_decision), **kw)


@dataclass(eq=False)
class ComparatorTrajectory:
    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    decision: np.ndarray
    loss: np.ndarray
    mode: str = FROM_ACTUAL


# ---------------------------------------------------------------------------
# comparator


def _quadratic_pieces(loss: QuadraticLoss, drift, gain, M, w):
    """f(theta) = theta' H theta + h' theta + const for the stage cost."""
    P = gain @ M
    d = drift + w
    H = P.T @ loss.Q @ P + M.T @ loss.R @ M
    h = 2.0 * P.T @ loss.Q @ d
    return H, h


def minimize_over_set(loss: QuadraticLoss, drift, gain, M, w, S: SafeDecisionSet,
                      start=None, tol: float = 1e-8, max_iters: int = 100000,
                      proj: ProjectionConfig = ProjectionConfig(tol=1e-11)) -> np.ndarray:
    """argmin over S of the convex quadratic stage cost (flattened decision).

    Scalar decisions are solved exactly; otherwise accelerated projected
    gradient runs until the iterate moves less than ``tol``.
    """
    H, h = _quadratic_pieces(loss, drift, gain, M, w)
    n = H.shape[0]
    if S.dim == 1:
        lo, hi = S.interval()
        a, b = float(H[0, 0]), float(h[0])
        guess = -b / (2 * a) if a > 0 else (0.0 if b == 0 else (np.inf if b < 0 else -np.inf))
        return np.array([min(max(guess, lo), hi)])
    L = 2.0 * float(np.max(np.linalg.eigvalsh(H))) if n else 0.0
    x = project_set(np.zeros(n) if start is None else np.asarray(start, float).reshape(-1), S, proj)
    if L <= 0:
        return x
    y, tk = x.copy(), 1.0
    for _ in range(max_iters):
        x_new = project_set(y - (2.0 * H @ y + h) / L, S, proj)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = x_new + ((tk - 1.0) / t_new) * (x_new - x)
        if np.linalg.norm(x_new - x) < tol:
            return x_new
        x, tk = x_new, t_new
    raise NumericalError("comparator minimization did not converge")


def greedy_comparator(log: RunLog, sys, loss: QuadraticLoss, constraints, W=None,
                      mode: str = FROM_ACTUAL, history_len: int = 0) -> ComparatorTrajectory:
    """Per-step best safe decision in hindsight under the realized noise.

    ``constraints`` is a ``SafetySpec``. In from-actual mode every step starts
    at the run's own x_t; in coupled mode the comparator follows its own state
    chain driven by the same noise. ``W`` is accepted for symmetry with the
    set builders; the bound stored in ``constraints`` is the one used.
    """
    if mode not in (FROM_ACTUAL, COUPLED):
        raise ValueError(f"unknown comparator mode {mode!r}")
    kind, shape = constraints.kind, constraints.shape
    xs, us, xn, ds, ls = [], [], [], [], []
    x = log.x[0] if log.T else None
    prev = None
    for k in range(log.T):
        t = k + 1
        if mode == FROM_ACTUAL:
            x = log.x[k]
        w = log.w[k]
        hist = [log.w[k - i] for i in range(1, history_len + 1) if k - i >= 0]
        S = constraints.decision_set(sys, t, x, hist)
        drift, gain = sys.drift_gain(t, x)
        M = input_matrix(kind, shape, x, hist)
        theta = minimize_over_set(loss, drift, gain, M, w, S, start=prev)
        u = M @ theta
        x_next = step(sys, t, x, u, w)
        xs.append(np.array(x, float))
        us.append(u)
        xn.append(x_next)
        ds.append(theta)
        ls.append(float(loss(x_next, u)))
        prev = theta
        x = x_next
    n = int(np.prod(shape))
    d_x = log.x.shape[1]
    d_u = log.u.shape[1]
    return ComparatorTrajectory(np.array(xs).reshape(-1, d_x), np.array(us).reshape(-1, d_u),
                                np.array(xn).reshape(-1, d_x), np.array(ds).reshape(-1, n),
                                np.array(ls), mode)


# ---------------------------------------------------------------------------
# metrics


def dynamic_regret(log: RunLog, comp: ComparatorTrajectory) -> float:
    if log.T != len(comp.loss):
        raise ValueError(f"horizon mismatch: run has {log.T} steps, comparator {len(comp.loss)}")
    return float(np.sum(log.loss) - np.sum(comp.loss))


def path_length_CT(comp: ComparatorTrajectory, on: str = "input") -> float:
    """sum_t ||v*_{t-1} - v*_t|| over comparator inputs or decisions."""
    v = comp.u if on == "input" else comp.decision
    if len(v) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(v, axis=0), axis=1)))


def set_variation_ST(log: RunLog) -> float:
    return float(np.sum(log.zeta))


def safety_rate(logs) -> float:
    logs = list(logs)
    if not logs:
        raise ValueError("safety_rate needs at least one run")
    return sum(1 for lg in logs if lg.is_safe()) / len(logs)


def check_flags(x_next, u, state_con, input_con, tol: float = DEFAULT_TOL):
    return state_con.contains(_vec(x_next), tol), input_con.contains(_vec(u), tol)


# ---------------------------------------------------------------------------
# LQR


def dare_fixed_point(A, B, Q, R, iters: int = 100000, tol: float = 1e-12) -> np.ndarray:
    """Iterate P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA from P = Q."""
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Q, R = np.atleast_2d(Q).astype(float), np.atleast_2d(R).astype(float)
    P = Q.copy()
    for _ in range(iters):
        S = R + B.T @ P @ B
        try:
            K = np.linalg.solve(S, B.T @ P @ A)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"R + B'PB is singular: {exc}") from exc
        P_new = Q + A.T @ P @ A - A.T @ P @ B @ K
        P_new = 0.5 * (P_new + P_new.T)
        # relative to the size of P, since rounding in large solutions exceeds any absolute tol
        if np.max(np.abs(P_new - P)) <= tol * max(1.0, float(np.max(np.abs(P_new)))):
            return P_new
        if not np.all(np.isfinite(P_new)):
            break
        P = P_new
    raise NumericalError("Riccati iteration did not converge")


def lqr_gain(A, B, Q, R, iters: int = 100000, tol: float = 1e-12) -> np.ndarray:
    """Infinite-horizon discrete LQR gain K for the law u = -K x."""
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    R = np.atleast_2d(R).astype(float)
    P = dare_fixed_point(A, B, Q, R, iters, tol)
    return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
