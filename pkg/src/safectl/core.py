"""Domain types, one-step dynamics, constraint membership and quadratic losses.

Everything here is an immutable value: constructors validate and copy their
inputs, and all operations are pure functions of their arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, HistoryError, ModelEvalError

DIRECT = "direct"
STATE_FEEDBACK = "state_feedback"
DISTURBANCE_ACTION = "disturbance_action"
POLICY_KINDS = (DIRECT, STATE_FEEDBACK, DISTURBANCE_ACTION)

DEFAULT_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _vec(z, name="vector") -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def _mat(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


class Schedule:
    """A time-indexed value: constant, an explicit per-step table, or a callback.

    Time indices start at 1. Table schedules raise ``ConfigError`` outside the
    tabulated range.
    """

    __slots__ = ("_kind", "_value", "_table", "_fn")

    def __init__(self, kind, value=None, table=None, fn=None):
        self._kind = kind
        self._value = value
        self._table = table
        self._fn = fn

    @classmethod
    def constant(cls, value):
        return cls("constant", value=value)

    @classmethod
    def table(cls, values: Sequence):
        if len(values) == 0:
            raise ConfigError("empty schedule table")
        return cls("table", table=tuple(values))

    @classmethod
    def callback(cls, fn: Callable[[int], object]):
        return cls("callback", fn=fn)

    @classmethod
    def wrap(cls, obj):
        return obj if isinstance(obj, Schedule) else cls.constant(obj)

    @property
    def kind(self) -> str:
        return self._kind

    def values(self):
        """All stored values (constant and table kinds only)."""
        if self._kind == "constant":
            return (self._value,)
        if self._kind == "table":
            return self._table
        return ()

    def map(self, fn):
        if self._kind == "constant":
            return Schedule.constant(fn(self._value))
        if self._kind == "table":
            return Schedule.table([fn(v) for v in self._table])
        inner = self._fn
        return Schedule.callback(lambda t: fn(inner(t)))

    def at(self, t: int):
        if self._kind == "constant":
            return self._value
        if self._kind == "table":
            if not 1 <= t <= len(self._table):
                raise ConfigError(f"schedule table has no entry for t={t}")
            return self._table[t - 1]
        return self._fn(t)

    def __repr__(self):
        return f"Schedule({self._kind})"


# ---------------------------------------------------------------------------
# systems


class LtvSystem:
    """x_{t+1} = A_t x_t + B_t u_t + w_t with spectral-norm bounds on A_t, B_t."""

    def __init__(self, A, B, kappa_A: Optional[float] = None, kappa_B: Optional[float] = None):
        self.A = Schedule.wrap(A).map(lambda a: _frozen(_mat(a)))
        self.B = Schedule.wrap(B).map(lambda b: _frozen(_mat(b)))
        A1, B1 = self.matrices(1)
        if A1.shape[0] != A1.shape[1]:
            raise DimensionError(f"A must be square, got {A1.shape}")
        if B1.shape[0] != A1.shape[0]:
            raise DimensionError(f"B has {B1.shape[0]} rows, A has {A1.shape[0]}")
        self.d_x, self.d_u = B1.shape
        stored_A = [np.linalg.norm(a, 2) for a in self.A.values()]
        stored_B = [np.linalg.norm(b, 2) for b in self.B.values()]
        self.kappa_A = float(max(stored_A)) if kappa_A is None and stored_A else kappa_A
        self.kappa_B = float(max(stored_B)) if kappa_B is None and stored_B else kappa_B
        for a in self.A.values():
            self._check_bound(a, self.kappa_A, "A")
        for b in self.B.values():
            self._check_bound(b, self.kappa_B, "B")

    @classmethod
    def scalar(cls, a: float, b: float):
        return cls([[a]], [[b]])

    @staticmethod
    def _check_bound(m, kappa, name):
        if kappa is not None and np.linalg.norm(m, 2) > kappa + 1e-12:
            raise ConfigError(f"||{name}_t|| = {np.linalg.norm(m, 2):.6g} exceeds bound {kappa}")

    def matrices(self, t: int):
        A, B = self.A.at(t), self.B.at(t)
        if self.A.kind == "callback" or self.B.kind == "callback":
            if A.shape != (B.shape[0], B.shape[0]):
                raise DimensionError(f"A_{t} shape {A.shape} does not match B_{t} {B.shape}")
            if hasattr(self, "kappa_A"):
                self._check_bound(A, self.kappa_A, "A")
                self._check_bound(B, self.kappa_B, "B")
        return A, B

    def drift_gain(self, t: int, x):
        """(A_t x, B_t): the affine decomposition x+ = drift + gain u + w."""
        A, B = self.matrices(t)
        x = _vec(x, "x")
        if x.shape[0] != A.shape[1]:
            raise DimensionError(f"x has length {x.shape[0]}, expected {A.shape[1]}")
        return A @ x, B


class ControlAffineSystem:
    """x_{t+1} = f(x_t) + g(x_t) u_t + w_t with caller-supplied f and g."""

    def __init__(self, f, g, d_x: int, d_u: int, lip_f: Optional[float] = None,
                 lip_g: Optional[float] = None, name: str = "affine"):
        self.f = f
        self.g = g
        self.d_x = int(d_x)
        self.d_u = int(d_u)
        self.lip_f = lip_f
        self.lip_g = lip_g
        self.name = name
        f0, g0 = self.evaluate(np.zeros(self.d_x))
        if not (np.all(np.isfinite(f0)) and np.all(np.isfinite(g0))):
            raise ModelEvalError("f(0) or g(0) is not finite")

    def evaluate(self, x):
        x = _vec(x, "x")
        if x.shape[0] != self.d_x:
            raise DimensionError(f"x has length {x.shape[0]}, expected {self.d_x}")
        try:
            fx = np.asarray(self.f(x), dtype=float).reshape(self.d_x)
            gx = np.asarray(self.g(x), dtype=float).reshape(self.d_x, self.d_u)
        except (DimensionError, ModelEvalError):
            raise
        except Exception as exc:  # callback failure of any kind
            raise ModelEvalError(f"dynamics callback failed at x={x}: {exc}") from exc
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(gx))):
            raise ModelEvalError(f"dynamics callback returned non-finite values at x={x}")
        return fx, gx

    def drift_gain(self, t: int, x):
        return self.evaluate(x)


def step_ltv(sys: LtvSystem, t: int, x, u, w) -> np.ndarray:
    """Return A_t x + B_t u + w."""
    A, B = sys.matrices(t)
    x, u, w = _vec(x, "x"), _vec(u, "u"), _vec(w, "w")
    if x.shape[0] != A.shape[1] or u.shape[0] != B.shape[1] or w.shape[0] != A.shape[0]:
        raise DimensionError(
            f"step_ltv: x{x.shape} u{u.shape} w{w.shape} vs A{A.shape} B{B.shape}")
    return A @ x + B @ u + w


def step_affine(sys: ControlAffineSystem, x, u, w) -> np.ndarray:
    """Return f(x) + g(x) u + w."""
    fx, gx = sys.evaluate(x)
    u, w = _vec(u, "u"), _vec(w, "w")
    if u.shape[0] != sys.d_u or w.shape[0] != sys.d_x:
        raise DimensionError(f"step_affine: u{u.shape} w{w.shape} for d_x={sys.d_x}, d_u={sys.d_u}")
    return fx + gx @ u + w


def step(sys, t: int, x, u, w) -> np.ndarray:
    if isinstance(sys, LtvSystem):
        return step_ltv(sys, t, x, u, w)
    return step_affine(sys, x, u, w)


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True, eq=False)
class Polytope:
    """{z | L z <= l}, optionally intersected with a euclidean and/or spectral ball.

    The spectral ball applies to ``z`` reshaped row-major to ``spectral_shape``.
    """

    L: np.ndarray
    l: np.ndarray
    ball_radius: Optional[float] = None
    spectral_radius: Optional[float] = None
    spectral_shape: Optional[tuple] = None
    witness: Optional[np.ndarray] = None

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        l = np.asarray(self.l, dtype=float).reshape(-1)
        if L.ndim == 1:
            L = L.reshape(-1, 1) if l.shape[0] == L.shape[0] else L.reshape(1, -1)
        if L.shape[0] != l.shape[0]:
            raise DimensionError(f"L has {L.shape[0]} rows but l has {l.shape[0]} entries")
        object.__setattr__(self, "L", _frozen(L))
        object.__setattr__(self, "l", _frozen(l))
        if self.spectral_radius is not None and self.spectral_shape is None:
            object.__setattr__(self, "spectral_shape", (1, L.shape[1]))
        if self.witness is not None:
            object.__setattr__(self, "witness", _frozen(_vec(self.witness)))

    @classmethod
    def box(cls, lower, upper, **kw):
        lower, upper = _vec(lower, "lower"), _vec(upper, "upper")
        d = lower.shape[0]
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]), **kw)

    @classmethod
    def symmetric(cls, bound, **kw):
        """The box |z_i| <= bound_i."""
        bound = _vec(bound, "bound")
        return cls.box(-bound, bound, **kw)

    @property
    def dim(self) -> int:
        return self.L.shape[1]

    @property
    def n_rows(self) -> int:
        return self.L.shape[0]

    def violation(self, z) -> float:
        """Largest amount by which any constraint is exceeded (0 when inside)."""
        z = _vec(z)
        v = 0.0
        if self.n_rows:
            v = max(v, float(np.max(self.L @ z - self.l)))
        if self.ball_radius is not None:
            v = max(v, float(np.linalg.norm(z)) - self.ball_radius)
        if self.spectral_radius is not None:
            v = max(v, float(np.linalg.norm(z.reshape(self.spectral_shape), 2)) - self.spectral_radius)
        return v

    def contains(self, z, tol: float = 0.0) -> bool:
        return self.violation(z) <= tol

    def same_region(self, other: "Polytope") -> bool:
        return (isinstance(other, Polytope)
                and self.L.shape == other.L.shape
                and np.array_equal(self.L, other.L)
                and np.array_equal(self.l, other.l)
                and self.ball_radius == other.ball_radius
                and self.spectral_radius == other.spectral_radius)


def polytope_contains(P: Polytope, z, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return P.contains(z, tol)


@dataclass(frozen=True)
class NoiseBound:
    W: float

    def __post_init__(self):
        if not self.W >= 0:
            raise ConfigError(f"noise bound must be nonnegative, got {self.W}")


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """c(x_next, u) = x_next' Q x_next + u' R u.

    ``beta``, ``G_c`` and ``D_c`` are the loss-regularity constants from the
    bounded-gradient assumption. They are carried as metadata only.
    """

    Q: np.ndarray
    R: np.ndarray
    beta: Optional[float] = None
    G_c: Optional[float] = None
    D_c: Optional[float] = None

    def __post_init__(self):
        Q = _mat(self.Q) if np.ndim(self.Q) != 1 else np.diag(np.asarray(self.Q, float))
        R = _mat(self.R) if np.ndim(self.R) != 1 else np.diag(np.asarray(self.R, float))
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise DimensionError(f"{name} must be square, got {M.shape}")
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
                raise ConfigError(f"{name} is not symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ConfigError(f"{name} is not positive semidefinite")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))

    def _check(self, x_next, u):
        x_next, u = _vec(x_next, "x_next"), _vec(u, "u")
        if x_next.shape[0] != self.Q.shape[0] or u.shape[0] != self.R.shape[0]:
            raise DimensionError(
                f"loss expects x_next of length {self.Q.shape[0]} and u of length "
                f"{self.R.shape[0]}, got {x_next.shape[0]} and {u.shape[0]}")
        return x_next, u

    def __call__(self, x_next, u) -> float:
        return loss_eval(self, x_next, u)


def loss_eval(c: QuadraticLoss, x_next, u) -> float:
    x_next, u = c._check(x_next, u)
    return float(x_next @ c.Q @ x_next + u @ c.R @ u)


def loss_grad_xu(c: QuadraticLoss, x_next, u):
    """Gradients (2 Q x_next, 2 R u)."""
    x_next, u = c._check(x_next, u)
    return 2.0 * c.Q @ x_next, 2.0 * c.R @ u


# ---------------------------------------------------------------------------
# policies


def decision_shape(kind: str, d_x: int, d_u: int, H: int = 1) -> tuple:
    if kind == DIRECT:
        return (d_u,)
    if kind == STATE_FEEDBACK:
        return (d_u, d_x)
    if kind == DISTURBANCE_ACTION:
        return (H, d_u, d_x)
    raise ConfigError(f"unknown policy kind {kind!r}")


def padded_history(history, H: int, d_x: int, zero_pad: bool = True) -> np.ndarray:
    """Stack the last H noise vectors, most recent first, as an (H, d_x) array."""
    rows = [_vec(w, "w") for w in list(history)[:H]]
    if len(rows) < H:
        if not zero_pad:
            raise HistoryError(f"need {H} past noise vectors, have {len(rows)}")
        rows += [np.zeros(d_x)] * (H - len(rows))
    out = np.array(rows, dtype=float).reshape(H, d_x)
    return out


def input_matrix(kind: str, shape: tuple, x=None, history=(), zero_pad: bool = True) -> np.ndarray:
    """Matrix M with u = M @ theta.ravel() for a linearly parameterized policy."""
    if kind == DIRECT:
        return np.eye(shape[0])
    if kind == STATE_FEEDBACK:
        d_u, d_x = shape
        x = _vec(x, "x")
        if x.shape[0] != d_x:
            raise DimensionError(f"x has length {x.shape[0]}, gain expects {d_x}")
        return -np.kron(np.eye(d_u), x[None, :])
    if kind == DISTURBANCE_ACTION:
        H, d_u, d_x = shape
        past = padded_history(history, H, d_x, zero_pad)
        return np.hstack([np.kron(np.eye(d_u), past[i][None, :]) for i in range(H)])
    raise ConfigError(f"unknown policy kind {kind!r}")


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """A linearly parameterized control policy.

    ``theta`` is a vector for ``direct``, a (d_u, d_x) gain for
    ``state_feedback`` (u = -K x), and an (H, d_u, d_x) stack for
    ``disturbance_action`` (u = sum_i K[i] w_{t-i}).
    """

    kind: str
    theta: np.ndarray
    kappa: float = float("inf")
    history_len: int = field(init=False, default=0)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        theta = np.asarray(self.theta, dtype=float)
        if self.kind == DIRECT:
            theta = theta.reshape(-1)
        elif self.kind == STATE_FEEDBACK:
            theta = _mat(theta) if theta.ndim < 2 else theta
            if theta.ndim != 2:
                raise DimensionError(f"state-feedback gain must be 2-D, got {theta.shape}")
        else:
            if theta.ndim == 2:
                theta = theta[:, None, :]
            if theta.ndim == 1:
                theta = theta.reshape(-1, 1, 1)
            if theta.ndim != 3:
                raise DimensionError(f"disturbance-action stack must be 3-D, got {theta.shape}")
            object.__setattr__(self, "history_len", theta.shape[0])
        object.__setattr__(self, "theta", _frozen(theta))
        for block in self.blocks():
            if np.linalg.norm(block, 2) > self.kappa + 1e-7:
                raise ConfigError(f"parameter norm {np.linalg.norm(block, 2):.6g} exceeds kappa={self.kappa}")

    def blocks(self):
        if self.kind == DIRECT:
            return [self.theta[None, :]]
        if self.kind == STATE_FEEDBACK:
            return [self.theta]
        return list(self.theta)


def policy_to_input(p: PolicyParams, x=None, noise_history=(), zero_pad: bool = True) -> np.ndarray:
    """Control input produced by policy ``p`` at state ``x``.

    ``noise_history`` lists past noise vectors most recent first
    (w_{t-1}, w_{t-2}, ...).
    """
    if p.kind == DIRECT:
        return np.array(p.theta, dtype=float)
    if p.kind == STATE_FEEDBACK:
        x = _vec(x, "x")
        if x.shape[0] != p.theta.shape[1]:
            raise DimensionError(f"x has length {x.shape[0]}, gain expects {p.theta.shape[1]}")
        return -(p.theta @ x)
    H, d_u, d_x = p.theta.shape
    past = padded_history(noise_history, H, d_x, zero_pad)
    return np.einsum("ijk,ik->j", p.theta, past)
