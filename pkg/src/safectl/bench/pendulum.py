"""Inverted pendulum with torque input, discretized in time.

State (theta, theta_dot) with theta = 0 upright. Three discretizations:

- ``euler``: theta+ = theta + dt theta_dot,
  theta_dot+ = theta_dot + dt (3g/2l sin theta + 3/(m l^2) u)
- ``semi-implicit``: the velocity is updated first and the angle uses the new
  velocity, theta+ = theta + dt theta_dot+ (the symplectic Euler scheme)
- ``literal``: theta_dot+ = 3g/2l sin theta + 3 dt/(m l^2) u, with no velocity
  carry-over

All three are control affine, x+ = f(x) + g(x) u, with noise added to both
components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ControlAffineSystem, _vec
from ..errors import ConfigError

DISCRETIZATIONS = ("euler", "semi-implicit", "literal")


@dataclass(frozen=True)
class PendulumParams:
    g: float = 10.0
    m: float = 1.0
    l: float = 1.0
    dt: float = 0.05
    discretization: str = "euler"

    def __post_init__(self):
        if self.discretization not in DISCRETIZATIONS:
            raise ConfigError(f"unknown pendulum discretization {self.discretization!r}")
        if min(self.g, self.m, self.l, self.dt) <= 0:
            raise ConfigError("pendulum parameters must be positive")

    @property
    def gravity_coeff(self) -> float:
        return 3.0 * self.g / (2.0 * self.l)

    @property
    def input_coeff(self) -> float:
        return 3.0 / (self.m * self.l ** 2)


def pendulum_drift(x, p: PendulumParams = PendulumParams()) -> np.ndarray:
    th, om = _vec(x, "x")
    acc = p.gravity_coeff * np.sin(th)
    if p.discretization == "euler":
        return np.array([th + p.dt * om, om + p.dt * acc])
    if p.discretization == "semi-implicit":
        om_next = om + p.dt * acc
        return np.array([th + p.dt * om_next, om_next])
    return np.array([th + p.dt * om, acc])


def pendulum_gain(x, p: PendulumParams = PendulumParams()) -> np.ndarray:
    b = p.dt * p.input_coeff
    if p.discretization == "semi-implicit":
        return np.array([[p.dt * b], [b]])
    return np.array([[0.0], [b]])


def pendulum_step(x, u, w, p: PendulumParams = PendulumParams()) -> np.ndarray:
    u = _vec(u, "u")
    return pendulum_drift(x, p) + pendulum_gain(x, p) @ u + _vec(w, "w")


def pendulum_system(p: PendulumParams = PendulumParams()) -> ControlAffineSystem:
    # crude bound on the drift Jacobian norm that holds for all three schemes
    lip_f = 1.0 + p.dt + p.gravity_coeff * (1.0 + p.dt)
    return ControlAffineSystem(lambda x: pendulum_drift(x, p), lambda x: pendulum_gain(x, p),
                               d_x=2, d_u=1, lip_f=lip_f, lip_g=0.0,
                               name=f"pendulum-{p.discretization}")


def linearized(p: PendulumParams = PendulumParams()):
    """(A, B) of the discretized dynamics linearized at the upright equilibrium."""
    eps = 1e-7
    A = np.column_stack([(pendulum_drift(e * eps, p) - pendulum_drift(-e * eps, p)) / (2 * eps)
                         for e in np.eye(2)])
    return A, pendulum_gain(np.zeros(2), p)
