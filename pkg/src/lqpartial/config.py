"""Scenario configuration files (nested key-value YAML).

Required keys: model.{F,G,H,sigma,M,N,M_T,T} (matrices as row-major nested
lists), density.kind plus its parameters, grid.n_steps, policy.kind,
mc.{n_mc,seed}.  Optional: density.mass, oracles.grid.{cells,width_sigmas},
oracles.particles.count, measure, output.dir.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .harness import GridOracleSettings, Policy, Scenario
from .model import (
    GaussianDensity,
    InitialDensity,
    LinearModel,
    MixtureDensity,
    TabulatedDensity,
    TimeGrid,
    validate_model,
)


def _require(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"missing required field `{dotted}`")
        node = node[part]
    return node


def _get(cfg: dict, dotted: str, default=None):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def build_density(cfg: dict) -> InitialDensity:
    kind = _require(cfg, "density.kind")
    if kind == "gaussian":
        q0 = GaussianDensity(
            mean0=_require(cfg, "density.mean"),
            cov0=_require(cfg, "density.cov"),
            mass=float(_get(cfg, "density.mass", 1.0)),
        )
    elif kind == "mixture":
        weights = np.asarray(_require(cfg, "density.weights"), dtype=float)
        mass = _get(cfg, "density.mass")
        if mass is not None:
            weights = weights * float(mass) / float(np.sum(weights))
        q0 = MixtureDensity(
            weights=weights,
            means=_require(cfg, "density.means"),
            covs=_require(cfg, "density.covs"),
        )
    elif kind == "grid1d":
        nodes = np.asarray(_require(cfg, "density.nodes"), dtype=float)
        values = np.asarray(_require(cfg, "density.values"), dtype=float)
        mass = _get(cfg, "density.mass")
        if mass is not None:
            values = values * float(mass) / float(np.trapezoid(values, nodes))
        q0 = TabulatedDensity(nodes=nodes, values=values)
    else:
        raise ConfigError(f"unknown density kind `{kind}`")
    return q0


def build_policy(cfg: dict) -> Policy:
    kind = _require(cfg, "policy.kind")
    if kind == "constant":
        return Policy(kind="constant", value=np.atleast_1d(_require(cfg, "policy.value")))
    if kind == "perturbed":
        return Policy(
            kind="perturbed",
            shape=str(_get(cfg, "policy.shape", "constant")),
            amplitude=float(_get(cfg, "policy.amplitude", 0.0)),
            cycles=float(_get(cfg, "policy.cycles", 1.0)),
            phase=float(_get(cfg, "policy.phase", 0.0)),
        )
    if kind in ("optimal", "zero"):
        return Policy(kind=kind)
    raise ConfigError(f"unknown policy kind `{kind}`")


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build and validate a Scenario from a parsed configuration mapping."""
    try:
        model = LinearModel(
            F=_require(cfg, "model.F"),
            G=_require(cfg, "model.G"),
            H=_require(cfg, "model.H"),
            sigma=_require(cfg, "model.sigma"),
            M=_require(cfg, "model.M"),
            N=_require(cfg, "model.N"),
            M_T=_require(cfg, "model.M_T"),
            T=float(_require(cfg, "model.T")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model matrices: {exc}") from exc
    validate_model(model)

    grid = TimeGrid(n_steps=int(_require(cfg, "grid.n_steps")), horizon=model.T)
    q0 = build_density(cfg)
    policy = build_policy(cfg)

    grid_oracle = None
    if _get(cfg, "oracles.grid") is not None:
        grid_oracle = GridOracleSettings(
            cells=int(_get(cfg, "oracles.grid.cells", 1601)),
            width_sigmas=float(_get(cfg, "oracles.grid.width_sigmas", 8.0)),
        )
    particle_count = _get(cfg, "oracles.particles.count")

    return Scenario(
        model=model,
        q0=q0,
        grid=grid,
        policy=policy,
        seed=int(_require(cfg, "mc.seed")),
        n_mc=int(_require(cfg, "mc.n_mc")),
        measure=str(_get(cfg, "measure", "reference")),
        grid_oracle=grid_oracle,
        particle_count=int(particle_count) if particle_count else None,
        output_dir=_get(cfg, "output.dir"),
    )


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config root must be a mapping, got {type(cfg).__name__}")
    return cfg


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_config(path))


def override_key(cfg: dict, dotted: str, value) -> dict:
    """Return a copy of cfg with one dotted key replaced (for sweeps)."""
    out = {**cfg}
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            raise ConfigError(f"cannot override `{dotted}`: `{part}` is not a mapping")
        child = {**child}
        node[part] = child
        node = child
    node[parts[-1]] = value
    return out
