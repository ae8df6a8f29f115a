"""Scenario configuration: a flat dataclass plus a sectioned TOML loader.

File schema (every key optional; defaults are the built-in ``scalar`` scenario)::

    [system]      type = "ltv" | "pendulum"; A, B (ltv); g, m, l, dt, discretization (pendulum)
    [constraints] state_bound, input_bound (symmetric boxes); state_bound_table (per-step list)
    [loss]        Q, R (scalars, diagonal vectors or matrices)
    [algorithm]   name, policy, H, kappa, gamma, alpha, eta, D_f, G_f, n_experts,
                  meta_loss, tightening, theta0
    [noise]       distribution, W, scale, center, params (table)
    [run]         T, seeds ("a..b" or a list), x0, tol, out, comparator
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

from ..errors import ConfigError
from .noise import DEFAULT_PARAMS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ALGORITHMS = ("safe-ogd", "safe-ader", "lqr", "greedy-oracle")
SYSTEMS = ("ltv", "pendulum")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scalar"
    # system
    system: str = "ltv"
    A: tuple = ((0.9,),)
    B: tuple = ((0.6,),)
    g: float = 10.0
    m: float = 1.0
    l: float = 1.0
    dt: float = 0.05
    discretization: str = "euler"
    # constraints
    state_bound: tuple = (2.0,)
    input_bound: tuple = (2.5,)
    state_bound_table: Optional[tuple] = None
    # loss
    Q: tuple = ((1.0,),)
    R: tuple = ((1.0,),)
    # algorithm
    algorithm: str = "safe-ogd"
    policy: str = "state_feedback"
    H: int = 1
    kappa: float = 5.0
    gamma: float = 0.1
    alpha: Optional[float] = None
    eta: Optional[float] = None
    D_f: Optional[float] = None
    G_f: Optional[float] = None
    n_experts: Optional[int] = None
    meta_loss: str = "linear"
    tightening: str = "row"
    theta0: str = "zero"
    # noise
    noise: str = "uniform"
    W: float = 1.0
    noise_scale: float = 1.0
    noise_center: bool = True
    noise_params: dict = field(default_factory=dict)
    # run
    T: int = 200
    seeds: tuple = (0, 1, 2, 3, 4)
    x0: tuple = (0.0,)
    tol: float = 1e-9
    out: str = "out"
    comparator: str = "from-actual"

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system type {self.system!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.noise not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown noise distribution {self.noise!r}")
        if self.T < 1:
            raise ConfigError("horizon T must be at least 1")
        if self.W < 0:
            raise ConfigError("noise bound W must be nonnegative")
        if self.theta0 not in ("zero", "lqr"):
            raise ConfigError("theta0 must be 'zero' or 'lqr'")
        if self.comparator not in ("from-actual", "coupled"):
            raise ConfigError("comparator must be 'from-actual' or 'coupled'")
        if self.tightening not in ("row", "matrix"):
            raise ConfigError("tightening must be 'row' or 'matrix'")

    def with_(self, **kw) -> "ScenarioConfig":
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def builtin(name: str) -> ScenarioConfig:
    """Registered scenarios: ``scalar`` (scalar LTI system) and ``pendulum``."""
    if name == "scalar":
        return ScenarioConfig()
    if name == "pendulum":
        return ScenarioConfig(
            name="pendulum", system="pendulum", discretization="euler",
            state_bound=(1.5707963267948966, 1.5707963267948966), input_bound=(4.0,),
            Q=((1.0, 0.0), (0.0, 0.1)), R=((0.001,),), kappa=25.0, alpha=0.5,
            noise="gaussian", W=0.1, noise_scale=0.1, T=500, x0=(0.0, 0.0), theta0="lqr")
    raise ConfigError(f"no built-in scenario named {name!r} (have: scalar, pendulum)")


SECTIONS = {
    "system": {"type": "system", "A": "A", "B": "B", "g": "g", "m": "m", "l": "l", "dt": "dt",
               "discretization": "discretization", "name": "name", "builtin": None},
    "constraints": {"state_bound": "state_bound", "input_bound": "input_bound",
                    "state_bound_table": "state_bound_table"},
    "loss": {"Q": "Q", "R": "R"},
    "algorithm": {"name": "algorithm", "policy": "policy", "H": "H", "kappa": "kappa",
                  "gamma": "gamma", "alpha": "alpha", "eta": "eta", "D_f": "D_f", "G_f": "G_f",
                  "n_experts": "n_experts", "meta_loss": "meta_loss", "tightening": "tightening",
                  "theta0": "theta0"},
    "noise": {"distribution": "noise", "W": "W", "scale": "noise_scale", "center": "noise_center",
              "params": "noise_params"},
    "run": {"T": "T", "seeds": "seeds", "x0": "x0", "tol": "tol", "out": "out",
            "comparator": "comparator"},
}


def parse_seeds(spec) -> tuple:
    """'a..b' (inclusive), 'a,b,c', an int, or a list of ints."""
    if isinstance(spec, int):
        return (spec,)
    if isinstance(spec, (list, tuple)):
        return tuple(int(s) for s in spec)
    text = str(spec).strip()
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ConfigError(f"empty seed range {text!r}")
            return tuple(range(lo, hi + 1))
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(e) for e in v)
    return v


def _matrix(v):
    """Scalars become 1x1, flat lists become diagonal matrices."""
    if isinstance(v, (int, float)):
        return ((float(v),),)
    v = _tuplify(v)
    if v and not isinstance(v[0], tuple):
        n = len(v)
        return tuple(tuple(float(v[i]) if i == j else 0.0 for j in range(n)) for i in range(n))
    return v


def _vector(v):
    if isinstance(v, (int, float)):
        return (float(v),)
    return tuple(float(e) for e in v)


def config_from_dict(doc: dict, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    if base is None:
        name = doc.get("system", {}).get("builtin") or doc.get("system", {}).get("type", "ltv")
        base = builtin("pendulum" if name == "pendulum" else "scalar")
    kw = {}
    for section, table in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in table.items():
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            target = SECTIONS[section][key]
            if target is not None:
                kw[target] = value
    for k in ("A", "B", "Q", "R"):
        if k in kw:
            kw[k] = _matrix(kw[k])
    for k in ("state_bound", "input_bound", "x0"):
        if k in kw:
            kw[k] = _vector(kw[k])
    if "state_bound_table" in kw:
        kw["state_bound_table"] = tuple(_vector(r) for r in kw["state_bound_table"])
    if "seeds" in kw:
        kw["seeds"] = parse_seeds(kw["seeds"])
    return base.with_(**kw)


def load_scenario(path_or_name: str) -> ScenarioConfig:
    """A built-in scenario name or the path of a TOML scenario file."""
    if path_or_name in ("scalar", "pendulum"):
        return builtin(path_or_name)
    try:
        with open(path_or_name, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path_or_name}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path_or_name}: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)
