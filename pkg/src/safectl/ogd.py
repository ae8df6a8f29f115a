"""Safe online gradient descent over a linearly parameterized policy.

The policy loss re-expresses the stage cost as a function of the decision:
f_t(theta) = c_t(drift_t + G_t M_t theta + w_t, M_t theta), where u = M_t theta
(see ``core.input_matrix``). For state feedback on an LTV system this is
c_t((A_t - B_t K) x_t + w_t, -K x_t).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (
    DIRECT,
    STATE_FEEDBACK,
    PolicyParams,
    QuadraticLoss,
    _vec,
    input_matrix,
    loss_grad_xu,
)
from .projection import ProjectionConfig, project_set
from .safeset import SafeDecisionSet


def _successor(sys, t, x_t, w_t, theta, kind, history):
    theta = np.asarray(theta, dtype=float)
    x_t = _vec(x_t, "x_t")
    drift, gain = sys.drift_gain(t, x_t)
    M = input_matrix(kind, theta.shape, x_t, history)
    u = M @ theta.reshape(-1)
    return drift + gain @ u + _vec(w_t, "w_t"), u, gain, M


def policy_loss(c, sys, t, x_t, w_t, theta, kind: str = STATE_FEEDBACK, history=()) -> float:
    """Stage cost incurred by decision ``theta`` at (x_t, w_t)."""
    x_next, u, _, _ = _successor(sys, t, x_t, w_t, theta, kind, history)
    return float(c(x_next, u))


def policy_grad(c, sys, t, x_t, w_t, theta, kind: str = STATE_FEEDBACK, history=()) -> np.ndarray:
    """Gradient of ``policy_loss`` with respect to theta, shaped like theta.

    Quadratic losses use the chain rule through u = M theta; any other
    callable loss falls back to central differences.
    """
    theta = np.asarray(theta, dtype=float)
    if isinstance(c, QuadraticLoss):
        x_next, u, gain, M = _successor(sys, t, x_t, w_t, theta, kind, history)
        gx, gu = loss_grad_xu(c, x_next, u)
        return (M.T @ (gain.T @ gx + gu)).reshape(theta.shape)
    h = 1e-6 * (1.0 + np.linalg.norm(theta))
    flat = theta.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.shape[0]):
        e = np.zeros_like(flat)
        e[i] = h
        fp = policy_loss(c, sys, t, x_t, w_t, (flat + e).reshape(theta.shape), kind, history)
        fm = policy_loss(c, sys, t, x_t, w_t, (flat - e).reshape(theta.shape), kind, history)
        grad[i] = (fp - fm) / (2 * h)
    return grad.reshape(theta.shape)


def default_step_size(T: int, D_f: float, G_f: float) -> float:
    if T < 1 or D_f <= 0 or G_f <= 0:
        raise ValueError("need T >= 1 and positive D_f, G_f")
    return D_f / (G_f * np.sqrt(T))


def default_diameter(kind: str, kappa: Optional[float], d_u: int, d_x: int, H: int = 1,
                     input_bound: Optional[float] = None) -> float:
    """Frobenius diameter of the decision domain.

    For gains a spectral bound kappa gives 2 kappa sqrt(min(d_u, d_x)) per block;
    for direct inputs the input bound (euclidean radius) is used.
    """
    if kind == DIRECT:
        if input_bound is None:
            raise ValueError("direct inputs need an input bound for the diameter")
        return 2.0 * float(input_bound)
    return 2.0 * float(kappa) * np.sqrt(min(d_u, d_x) * H)


def _block_norm(theta) -> float:
    if theta.ndim < 2:
        return float(np.linalg.norm(theta))
    return float(max(np.linalg.norm(b, 2) for b in theta.reshape(-1, *theta.shape[-2:])))


def empirical_gradient_bound(c, sys, kind, shape, state_sampler, W: float, kappa: float,
                             n: int = 1000, seed: int = 0, margin: float = 1.5) -> float:
    """margin * max gradient norm over random states, noises and bounded decisions."""
    rng = np.random.default_rng(seed)
    best = 0.0
    d_x = sys.d_x
    for _ in range(n):
        x = np.asarray(state_sampler(rng), dtype=float)
        w = rng.standard_normal(d_x)
        w *= W * rng.uniform() ** (1.0 / d_x) / max(np.linalg.norm(w), 1e-300)
        theta = rng.standard_normal(shape)
        theta *= kappa * rng.uniform() / max(_block_norm(theta), 1e-300)
        g = policy_grad(c, sys, 1, x, w, theta, kind)
        best = max(best, float(np.linalg.norm(g)))
    return margin * best if best > 0 else 1.0


@dataclass(frozen=True, eq=False)
class OgdState:
    decision: PolicyParams
    eta: float
    last_set: Optional[SafeDecisionSet] = None
    step_index: int = 1
    # Dykstra corrections from the last projection; speeds up the next one
    warm: list = field(default_factory=list, repr=False)

    @property
    def theta(self) -> np.ndarray:
        return self.decision.theta


def ogd_init(theta0, kind: str, eta: float, first_set: SafeDecisionSet,
             cfg: ProjectionConfig = ProjectionConfig(), kappa: float = float("inf")) -> OgdState:
    """Start from the projection of ``theta0`` onto the first safe set."""
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    theta = project_set(np.asarray(theta0, dtype=float), first_set, cfg)
    return OgdState(PolicyParams(kind, theta, kappa), float(eta), first_set, 1, [])


def ogd_step(state: OgdState, grad, next_set: SafeDecisionSet,
             cfg: ProjectionConfig = ProjectionConfig()):
    """One update-then-project step. Returns (new state, zeta_t).

    zeta_t = ||P_last(z') - P_next(z')||_F measures how much the change of safe
    set moved the update; it is exactly 0 when the two sets coincide.
    """
    theta = state.decision.theta
    grad = np.asarray(grad, dtype=float).reshape(theta.shape)
    z = theta - state.eta * grad
    warm = list(state.warm) if cfg.warm_start else None
    new = project_set(z, next_set, cfg, warm=warm)
    last = state.last_set
    if last is None or last.same_region(next_set):
        zeta = 0.0
    else:
        zeta = float(np.linalg.norm(project_set(z, last, cfg) - new))
    decision = PolicyParams(state.decision.kind, new, state.decision.kappa)
    return replace(state, decision=decision, last_set=next_set,
                   step_index=state.step_index + 1, warm=warm or []), zeta
