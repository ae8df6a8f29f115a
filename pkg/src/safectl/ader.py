"""Safe-Ader: a geometric grid of safe OGD experts under a multiplicative-weights meta-learner.

Expert i runs safe OGD with step size eta_i = 2^(i-1) eta_1. Experts and the
meta-learner see the linearized loss <g_t, theta - theta_t>, where g_t is the
gradient at the combined decision theta_t, so one gradient evaluation per
step suffices. Weights are kept as logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import PolicyParams
from .errors import ConfigError
from .ogd import OgdState, ogd_step
from .projection import ProjectionConfig, project_set
from .safeset import SafeDecisionSet

WEIGHT_FLOOR = 1e-300
META_LOSSES = ("linear", "full")


@dataclass(frozen=True)
class AderConfig:
    N: int
    etas: tuple
    p1: tuple
    epsilon: float
    T: int
    D_f: float
    G_f: float
    meta_loss: str = "linear"

    def __post_init__(self):
        if self.meta_loss not in META_LOSSES:
            raise ConfigError(f"meta_loss must be one of {META_LOSSES}, got {self.meta_loss!r}")
        if len(self.etas) != self.N or len(self.p1) != self.N:
            raise ConfigError("etas and p1 must have N entries")


def expert_count(T: int) -> int:
    return math.ceil(0.5 * math.log2(1.0 + 8.0 * T / 7.0)) + 1


def make_ader_config(T: int, D_f: float, G_f: float, n_experts: Optional[int] = None,
                     meta_loss: str = "linear") -> AderConfig:
    """Expert grid, prior weights and meta step size for horizon T.

    ``n_experts`` overrides the grid size (N = 1 reduces Safe-Ader to safe OGD
    with step size eta_1).
    """
    if T < 1 or D_f <= 0 or G_f <= 0:
        raise ConfigError("need T >= 1 and positive D_f, G_f")
    N = expert_count(T) if n_experts is None else int(n_experts)
    if N < 1:
        raise ConfigError("need at least one expert")
    eta1 = math.sqrt(7.0 * D_f ** 2 / (2.0 * T * G_f ** 2))
    etas = tuple(2.0 ** i * eta1 for i in range(N))
    p1 = tuple((N + 1) / (N * i * (i + 1)) for i in range(1, N + 1))
    eps = math.sqrt(2.0 / (T * D_f ** 2 * G_f ** 2))
    return AderConfig(N, etas, p1, eps, T, D_f, G_f, meta_loss)


@dataclass(frozen=True, eq=False)
class AderState:
    bases: tuple
    log_w: np.ndarray
    combined: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_w)

    @property
    def decision(self) -> PolicyParams:
        b = self.bases[0].decision
        return PolicyParams(b.kind, self.combined, b.kappa)


def _normalize_log(log_w):
    m = np.max(log_w)
    log_w = log_w - (m + np.log(np.sum(np.exp(log_w - m))))
    floor = math.log(WEIGHT_FLOOR)
    if np.any(log_w < floor):
        log_w = np.maximum(log_w, floor)
        m = np.max(log_w)
        log_w = log_w - (m + np.log(np.sum(np.exp(log_w - m))))
    return log_w


def _combine(bases, log_w):
    w = np.exp(log_w)
    out = np.zeros_like(bases[0].decision.theta)
    for wi, b in zip(w, bases):
        out = out + wi * b.decision.theta
    return out


def ader_init(theta0, kind: str, cfg: AderConfig, first_set: SafeDecisionSet,
              proj: ProjectionConfig = ProjectionConfig(), kappa: float = float("inf")) -> AderState:
    theta = project_set(np.asarray(theta0, dtype=float), first_set, proj)
    bases = tuple(OgdState(PolicyParams(kind, theta, kappa), eta, first_set, 1, [])
                  for eta in cfg.etas)
    log_w = _normalize_log(np.log(np.asarray(cfg.p1, dtype=float)))
    return AderState(bases, log_w, _combine(bases, log_w))


def ader_combine(state: AderState) -> np.ndarray:
    """Weighted combination sum_i p_i theta_i of the expert decisions."""
    return _combine(state.bases, state.log_w)


def surrogate_meta_loss(grad, K_i, K_combined) -> float:
    return float(np.vdot(np.asarray(grad, dtype=float),
                         np.asarray(K_i, dtype=float) - np.asarray(K_combined, dtype=float)))


def meta_weights_update(log_w, losses: Sequence[float], epsilon: float) -> np.ndarray:
    """log p' = log p - eps * (l - min l), renormalized.

    Shifting by the smallest loss keeps exponents bounded; the shift cancels
    in the normalization.
    """
    losses = np.asarray(losses, dtype=float)
    shifted = losses - losses.min()
    log_w = np.asarray(log_w, dtype=float)
    if not np.any(shifted):
        # equal losses: the update is the identity, skip renormalization round-off
        return log_w.copy()
    return _normalize_log(log_w - epsilon * shifted)


def ader_update(state: AderState, grad_at_combined, next_set: SafeDecisionSet,
                cfg_proj: ProjectionConfig, ader_cfg: AderConfig, full_losses=None):
    """One Safe-Ader round. Returns (new state, zeta_t).

    ``full_losses`` (one per expert, evaluated at that expert's own decision)
    replaces the linearized meta-loss when ``ader_cfg.meta_loss == "full"``.
    zeta_t is the weight-averaged discrepancy of the experts' projections onto
    the previous and the new safe set.
    """
    g = np.asarray(grad_at_combined, dtype=float)
    if ader_cfg.meta_loss == "full":
        if full_losses is None:
            raise ConfigError("meta_loss='full' needs per-expert losses")
        losses = np.asarray(full_losses, dtype=float)
    else:
        losses = np.array([surrogate_meta_loss(g, b.decision.theta, state.combined)
                           for b in state.bases])
    w = np.exp(state.log_w)
    new_bases = []
    zeta = 0.0
    for wi, b in zip(w, state.bases):
        nb, z = ogd_step(b, g, next_set, cfg_proj)
        new_bases.append(nb)
        zeta += wi * z
    log_w = meta_weights_update(state.log_w, losses, ader_cfg.epsilon)
    new_bases = tuple(new_bases)
    return replace(state, bases=new_bases, log_w=log_w, combined=_combine(new_bases, log_w)), zeta
