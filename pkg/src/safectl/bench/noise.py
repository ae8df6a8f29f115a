"""Bounded noise generators.

Each sample is drawn from a counter-based Philox stream keyed by the seed,
with the time index in the counter, so w_t depends only on (seed, t). The raw
draw is shifted by the distribution mean (when centering is on), scaled, and
clipped to the euclidean ball of radius W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

DEFAULT_PARAMS = {
    "gaussian": {"std": 0.5},
    "uniform": {"low": -1.0, "high": 1.0},
    "gamma": {"shape": 2.0, "scale": 0.5},
    "beta": {"a": 2.0, "b": 2.0},
    "exponential": {"rate": 1.0},
    "weibull": {"shape": 1.5, "scale": 1.0},
    "laplace": {"scale": 0.5},
}
DISTRIBUTIONS = tuple(DEFAULT_PARAMS)
# the six distributions of the standard benchmark sweep (laplace is extra)
BASE_SIX = ("gaussian", "uniform", "gamma", "beta", "exponential", "weibull")


def _mean(dist, p):
    if dist == "uniform":
        return 0.5 * (p["low"] + p["high"])
    if dist == "gamma":
        return p["shape"] * p["scale"]
    if dist == "beta":
        # Beta(a, b) mapped affinely onto [-1, 1]
        return 2.0 * p["a"] / (p["a"] + p["b"]) - 1.0
    if dist == "exponential":
        return 1.0 / p["rate"]
    if dist == "weibull":
        return p["scale"] * math.gamma(1.0 + 1.0 / p["shape"])
    return 0.0


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str
    W: float
    dim: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)
    center: bool = True
    scale: float = 1.0

    def __post_init__(self):
        if self.distribution not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown noise distribution {self.distribution!r}; "
                              f"choose from {', '.join(DISTRIBUTIONS)}")
        if not self.W >= 0:
            raise ConfigError(f"noise bound must be nonnegative, got {self.W}")
        if self.dim < 1:
            raise ConfigError("noise dimension must be positive")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.distribution])
        if unknown:
            raise ConfigError(f"unknown parameters for {self.distribution}: {sorted(unknown)}")
        merged = {**DEFAULT_PARAMS[self.distribution], **self.params}
        if self.distribution == "uniform":
            if not merged["low"] < merged["high"]:
                raise ConfigError("uniform noise needs low < high")
        else:
            for k, v in merged.items():
                if not v > 0:
                    raise ConfigError(f"{self.distribution} parameter {k} must be positive, got {v}")
        if not self.scale > 0:
            raise ConfigError(f"noise scale must be positive, got {self.scale}")
        object.__setattr__(self, "params", merged)

    @property
    def offset(self) -> float:
        return _mean(self.distribution, self.params) if self.center else 0.0


def raw_draw(spec: NoiseSpec, t: int) -> np.ndarray:
    """Uncentered, unscaled, unclipped draw for step t."""
    gen = np.random.Generator(np.random.Philox(key=int(spec.seed), counter=[0, int(t), 0, 0]))
    p, n = spec.params, spec.dim
    d = spec.distribution
    if d == "gaussian":
        return gen.normal(0.0, p["std"], n)
    if d == "uniform":
        return gen.uniform(p["low"], p["high"], n)
    if d == "gamma":
        return gen.gamma(p["shape"], p["scale"], n)
    if d == "beta":
        return 2.0 * gen.beta(p["a"], p["b"], n) - 1.0
    if d == "exponential":
        return gen.exponential(1.0 / p["rate"], n)
    if d == "weibull":
        return p["scale"] * gen.weibull(p["shape"], n)
    return gen.laplace(0.0, p["scale"], n)


def shape_noise(spec: NoiseSpec, raw) -> np.ndarray:
    """Apply centering, scaling and the ball clip to a raw draw."""
    w = spec.scale * (np.asarray(raw, dtype=float) - spec.offset)
    if spec.W == 0:
        return np.zeros_like(w)
    n = float(np.linalg.norm(w))
    if n > spec.W:
        w = w * (spec.W / n)
        # guard against the rescaled norm landing one ulp above W
        while np.linalg.norm(w) > spec.W:
            w = np.nextafter(w, 0.0)
    return w


def sample_noise(spec: NoiseSpec, t: int) -> np.ndarray:
    return shape_noise(spec, raw_draw(spec, t))
