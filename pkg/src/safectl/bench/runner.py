"""Closed-loop simulation of one scenario for one seed."""

from __future__ import annotations

import numpy as np

from ..ader import ader_init, ader_update, make_ader_config
from ..core import (
    DIRECT,
    DISTURBANCE_ACTION,
    STATE_FEEDBACK,
    LtvSystem,
    Polytope,
    QuadraticLoss,
    Schedule,
    decision_shape,
    input_matrix,
    step,
)
from ..errors import ConfigError, SafeSetEmpty
from ..metrics import RunLog, RunRecorder, lqr_gain, minimize_over_set
from ..ogd import (
    default_diameter,
    default_step_size,
    empirical_gradient_bound,
    ogd_init,
    ogd_step,
    policy_grad,
    policy_loss,
)
from ..projection import ProjectionConfig, project_set
from ..safeset import CbfParams, SafetySpec
from .noise import NoiseSpec, sample_noise
from .pendulum import PendulumParams, linearized, pendulum_system
from .scenario import ScenarioConfig


class Problem:
    """The system, loss, safety constraints and derived constants of a scenario."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        if cfg.system == "ltv":
            self.sys = LtvSystem(cfg.A, cfg.B)
            self.lin = self.sys.matrices(1)
        else:
            p = PendulumParams(cfg.g, cfg.m, cfg.l, cfg.dt, cfg.discretization)
            self.sys = pendulum_system(p)
            self.lin = linearized(p)
        d_x, d_u = self.sys.d_x, self.sys.d_u
        self.d_x, self.d_u = d_x, d_u
        self.loss = QuadraticLoss(cfg.Q, cfg.R)
        if len(cfg.state_bound) != d_x or len(cfg.input_bound) != d_u or len(cfg.x0) != d_x:
            raise ConfigError(f"bounds/x0 do not match d_x={d_x}, d_u={d_u}")
        if cfg.state_bound_table is not None:
            state = Schedule.table([Polytope.symmetric(b) for b in cfg.state_bound_table])
        else:
            state = Schedule.constant(Polytope.symmetric(cfg.state_bound))
        inp = Schedule.constant(Polytope.symmetric(cfg.input_bound))
        self.kind = cfg.policy
        self.shape = decision_shape(cfg.policy, d_x, d_u, cfg.H)
        if self.kind == DISTURBANCE_ACTION and cfg.algorithm == "lqr":
            raise ConfigError("the LQR baseline needs a state-feedback or direct-input policy")
        cbf = None
        if not (cfg.system == "ltv" and self.kind == STATE_FEEDBACK and cfg.alpha is None):
            cbf = CbfParams(0.5 if cfg.alpha is None else cfg.alpha)
        kappa = None if self.kind == DIRECT else cfg.kappa
        self.spec = SafetySpec(state, inp, cfg.W, self.kind, self.shape, kappa, cfg.gamma, cbf,
                               cfg.tightening)
        self.proj = ProjectionConfig()

    def state_con(self, t):
        return self.spec.state_at(t)

    def input_con(self, t):
        return self.spec.input_at(t)

    def history_len(self) -> int:
        return self.cfg.H if self.kind == DISTURBANCE_ACTION else 0

    def step_size_constants(self):
        cfg = self.cfg
        D = cfg.D_f
        if D is None:
            D = default_diameter(self.kind, cfg.kappa, self.d_u, self.d_x, cfg.H,
                                 input_bound=float(np.linalg.norm(cfg.input_bound)))
        G = cfg.G_f
        if G is None:
            bound = np.asarray(cfg.state_bound, dtype=float)
            G = empirical_gradient_bound(self.loss, self.sys, self.kind, self.shape,
                                         lambda rng: rng.uniform(-bound, bound), cfg.W,
                                         cfg.kappa if self.kind != DIRECT else float(np.linalg.norm(cfg.input_bound)))
        return float(D), float(G)

    def lqr(self):
        A, B = self.lin
        return lqr_gain(A, B, self.loss.Q, self.loss.R)


def _history(ws, H):
    return [ws[-i] for i in range(1, min(H, len(ws)) + 1)]


def run_scenario(cfg: ScenarioConfig, seed: int) -> RunLog:
    """Simulate t = 1..T. A SafeSetEmpty abort is recorded in ``log.aborted``."""
    prob = Problem(cfg)
    sys, loss, spec, kind, shape = prob.sys, prob.loss, prob.spec, prob.kind, prob.shape
    H = prob.history_len()
    noise = NoiseSpec(cfg.noise, cfg.W, prob.d_x, seed, dict(cfg.noise_params), cfg.noise_center,
                      cfg.noise_scale)
    x = np.asarray(cfg.x0, dtype=float)
    if not prob.state_con(1).contains(x, cfg.tol):
        raise ConfigError(f"initial state {x} violates the state constraints")
    rec = RunRecorder()
    meta = {"scenario": cfg.name, "algorithm": cfg.algorithm, "noise": cfg.noise, "T": cfg.T,
            "W": cfg.W, "policy": kind}
    aborted = None
    ws = []
    try:
        S = spec.decision_set(sys, 1, x, [])
        theta0 = np.zeros(shape)
        if cfg.theta0 == "lqr" and kind == STATE_FEEDBACK:
            theta0 = prob.lqr().reshape(shape)
        learner = ader_cfg = None
        if cfg.algorithm in ("safe-ogd", "safe-ader"):
            D, G = prob.step_size_constants()
            meta.update(D_f=D, G_f=G)
            if cfg.algorithm == "safe-ogd":
                eta = cfg.eta if cfg.eta is not None else default_step_size(cfg.T, D, G)
                meta["eta"] = eta
                learner = ogd_init(theta0, kind, eta, S, prob.proj)
            else:
                ader_cfg = make_ader_config(cfg.T, D, G, cfg.n_experts, cfg.meta_loss)
                meta.update(N=ader_cfg.N, epsilon=ader_cfg.epsilon)
                learner = ader_init(theta0, kind, ader_cfg, S, prob.proj)
        K_lqr = prob.lqr() if cfg.algorithm == "lqr" else None
        for t in range(1, cfg.T + 1):
            hist = _history(ws, H)
            drift, gain = sys.drift_gain(t, x)
            M = input_matrix(kind, shape, x, hist)
            w = sample_noise(noise, t)
            if cfg.algorithm == "safe-ogd":
                theta = learner.theta
            elif cfg.algorithm == "safe-ader":
                theta = learner.combined
            elif cfg.algorithm == "lqr":
                target = K_lqr if kind == STATE_FEEDBACK else -(K_lqr @ x)
                theta = project_set(target.reshape(shape), S, prob.proj)
            else:
                theta = minimize_over_set(loss, drift, gain, M, w, S).reshape(shape)
            u = M @ theta.reshape(-1)
            x_next = step(sys, t, x, u, w)
            # the learner only sees the noise through the observed successor
            w_obs = x_next - (drift + gain @ u)
            c = loss(x_next, u)
            safe_x = prob.state_con(t + 1).contains(x_next, cfg.tol)
            safe_u = prob.input_con(t).contains(u, cfg.tol)
            row = dict(x=x, u=u, w=w, x_next=x_next, loss=c, safe_state=safe_x, safe_input=safe_u,
                       decision=np.array(theta, dtype=float).reshape(-1))
            zeta = 0.0
            if t < cfg.T:
                try:
                    S_next = spec.decision_set(sys, t + 1, x_next, _history(ws + [w_obs], H))
                    if cfg.algorithm in ("safe-ogd", "safe-ader"):
                        g = policy_grad(loss, sys, t, x, w_obs, theta, kind, hist)
                        if cfg.algorithm == "safe-ogd":
                            learner, zeta = ogd_step(learner, g, S_next, prob.proj)
                        else:
                            full = None
                            if ader_cfg.meta_loss == "full":
                                full = [policy_loss(loss, sys, t, x, w_obs, b.theta, kind, hist)
                                        for b in learner.bases]
                            learner, zeta = ader_update(learner, g, S_next, prob.proj, ader_cfg,
                                                        full)
                except SafeSetEmpty:
                    # step t itself happened; keep its row before giving up
                    rec.add(zeta=0.0, **row)
                    raise
                S = S_next
            rec.add(zeta=zeta, **row)
            ws.append(w_obs)
            x = x_next
    except SafeSetEmpty as exc:
        aborted = f"safe set empty at step {exc.step}: {exc}"
    return rec.freeze(prob.d_x, prob.d_u, int(np.prod(shape)), meta=meta, seed=seed,
                      aborted=aborted)
