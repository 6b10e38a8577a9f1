"""Independent numerical solutions of the unnormalized filtering SPDE.

Two oracles evolve the unnormalized conditional density q(., t) under the
reference measure (where the observation path z is a pure Wiener process)
and serve as ground truth for the sufficient-statistics filter:

* a 1-D finite-difference grid solver: operator splitting with a
  conservative flux-form Fokker-Planck substep (central diffusion, upwind
  advection, explicit Euler under a CFL guard) followed by the exact
  multiplicative observation update q <- q exp(Hx dz - |Hx|^2 dt / 2);

* a weighted particle system: Euler-Maruyama positions plus exact
  exponential log-weights, the Monte Carlo form of the same density.

Both keep the density unnormalized; total mass is an exponential
martingale, not 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CFLViolation,
    DegenerateWeights,
    DomainTooNarrow,
    NegativeDensity,
    ZeroMass,
)
from .model import InitialDensity, LinearModel

_BOUNDARY_FRACTION = 1e-9
_CFL_SAFETY = 0.4
_ESS_FLOOR = 10.0


@dataclass(frozen=True)
class GridDensity:
    """Unnormalized density tabulated on a uniform 1-D mesh."""

    x_nodes: np.ndarray  # (J,), uniform
    values: np.ndarray   # (J,), >= 0

    @property
    def dx(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])


@dataclass(frozen=True)
class ParticleCloud:
    """Reference-measure particle pairs (position, log weight)."""

    positions: np.ndarray    # (N, n)
    log_weights: np.ndarray  # (N,)
    base_mass: float         # mass(q0); weights start at 1


def init_grid(q0: InitialDensity, n_cells: int = 1601, width_sigmas: float = 8.0) -> GridDensity:
    """Tabulate q0 on mean +- width_sigmas * std with n_cells nodes (n = 1).

    Tabulated inputs are resampled onto the requested mesh by linear
    interpolation.  Raises DomainTooNarrow if the boundary values exceed
    1e-9 of the peak.
    """
    if q0.dim != 1:
        raise ValueError("grid oracle supports 1-D densities only")
    if n_cells < 3:
        raise ValueError("n_cells must be >= 3")
    center = float(q0.mean()[0])
    std = float(np.sqrt(q0.cov()[0, 0]))
    x = np.linspace(center - width_sigmas * std, center + width_sigmas * std, n_cells)
    values = np.asarray(q0.pdf(x), dtype=float)
    peak = float(np.max(values))
    if peak <= 0.0:
        raise ZeroMass("tabulated density is identically zero")
    if values[0] > _BOUNDARY_FRACTION * peak or values[-1] > _BOUNDARY_FRACTION * peak:
        raise DomainTooNarrow(
            f"boundary values exceed {_BOUNDARY_FRACTION:.0e} of the peak; widen the domain"
        )
    return GridDensity(x_nodes=x, values=values)


def max_stable_dt(q: GridDensity, model: LinearModel, v) -> float:
    """Largest explicit Fokker-Planck step satisfying the CFL guard."""
    a = float(model.a[0, 0])
    f_max = float(np.max(np.abs(model.F[0, 0] * q.x_nodes + model.G[0, 0] * float(np.ravel(v)[0]))))
    dt_max = math.inf
    if a > 0.0:
        dt_max = min(dt_max, _CFL_SAFETY * q.dx**2 / (2.0 * a))
    if f_max > 0.0:
        dt_max = min(dt_max, _CFL_SAFETY * q.dx / f_max)
    return dt_max


def step_zakai_grid(
    q: GridDensity,
    model: LinearModel,
    v: float,
    dz: float,
    dt: float,
    substeps: int | None = None,
) -> GridDensity:
    """Advance the grid density over one observation interval of length dt.

    The deterministic substep integrates dq/dt = d/dx[a dq/dx - (Fx+Gv) q]
    in conservative flux form (zero-Dirichlet ghost cells), split into as
    many explicit Euler pieces as the CFL bound requires; the observation
    update multiplies by exp(Hx dz - (Hx)^2 dt / 2) exactly.  Passing
    `substeps` overrides the automatic choice and raises CFLViolation if it
    is insufficient.
    """
    v = float(np.ravel(v)[0])
    dz = float(np.ravel(dz)[0])
    a = float(model.a[0, 0])
    F = float(model.F[0, 0])
    G = float(model.G[0, 0])
    H = float(model.H[0, 0])
    x = q.x_nodes
    dx = q.dx

    dt_max = max_stable_dt(q, model, v)
    if substeps is None:
        m = max(1, math.ceil(dt / dt_max)) if math.isfinite(dt_max) else 1
    else:
        m = int(substeps)
        if m < 1 or dt / m > dt_max * (1.0 + 1e-9):
            raise CFLViolation(
                f"dt/substeps = {dt / max(m, 1):.3e} exceeds the stable step {dt_max:.3e}"
            )
    h = dt / m

    x_half = 0.5 * (x[:-1] + x[1:])
    f_half = F * x_half + G * v
    f_left = F * (x[0] - 0.5 * dx) + G * v
    f_right = F * (x[-1] + 0.5 * dx) + G * v

    values = q.values
    for _ in range(m):
        peak = np.max(values)
        q_up = np.where(f_half > 0.0, values[:-1], values[1:])
        flux = np.empty(x.size + 1)
        flux[1:-1] = f_half * q_up - a * (values[1:] - values[:-1]) / dx
        # zero-Dirichlet ghost cells outside the domain
        flux[0] = (f_left * values[0] if f_left <= 0.0 else 0.0) - a * values[0] / dx
        flux[-1] = (f_right * values[-1] if f_right >= 0.0 else 0.0) + a * values[-1] / dx
        values = values - (h / dx) * np.diff(flux)
        if np.min(values) < -1e-12 * peak:
            raise NegativeDensity(
                f"density reached {np.min(values):.3e} after a deterministic substep"
            )

    hx = H * x
    values = values * np.exp(hx * dz - 0.5 * hx**2 * dt)
    return GridDensity(x_nodes=x, values=values)


def grid_moments(q: GridDensity, order: int = 2):
    """Trapezoid moments (nu, mean, cov) of the grid density."""
    nu = float(np.trapezoid(q.values, q.x_nodes))
    if nu <= 1e-300:
        raise ZeroMass("grid density integrates to ~0")
    if order == 0:
        return nu, None, None
    mean = float(np.trapezoid(q.x_nodes * q.values, q.x_nodes)) / nu
    if order == 1:
        return nu, mean, None
    cov = float(np.trapezoid((q.x_nodes - mean) ** 2 * q.values, q.x_nodes)) / nu
    return nu, mean, cov


def init_particles(q0: InitialDensity, count: int, rng: np.random.Generator) -> ParticleCloud:
    """Draw `count` i.i.d. positions from q0 / mass with unit weights."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return ParticleCloud(
        positions=q0.sample(rng, count),
        log_weights=np.zeros(count),
        base_mass=q0.mass,
    )


def step_particles(
    cloud: ParticleCloud,
    model: LinearModel,
    v,
    dz,
    dt: float,
    rng: np.random.Generator,
) -> ParticleCloud:
    """Euler-Maruyama positions plus exact exponential weight update.

    Weights use the pre-move positions (left-point rule), matching the
    filter's log nu update; dz is the shared observation increment.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    dz = np.atleast_1d(np.asarray(dz, dtype=float))
    x = cloud.positions
    hx = x @ model.H.T
    log_w = cloud.log_weights + hx @ dz - 0.5 * np.sum(hx**2, axis=-1) * dt

    xi = rng.standard_normal(x.shape)
    drift = x @ model.F.T + v @ model.G.T
    x_new = x + drift * dt + math.sqrt(dt) * xi @ model.sigma.T
    return ParticleCloud(positions=x_new, log_weights=log_w, base_mass=cloud.base_mass)


def effective_sample_size(cloud: ParticleCloud) -> float:
    """(sum eta)^2 / sum eta^2, the standard weight-degeneracy diagnostic."""
    w = np.exp(cloud.log_weights - np.max(cloud.log_weights))
    return float(np.sum(w) ** 2 / np.sum(w**2))


def particle_moments(cloud: ParticleCloud, order: int = 2):
    """Weighted moments (nu, mean, cov, ess) of the particle representation.

    nu = base_mass * mean(eta) estimates the unnormalized total mass;
    mean/cov are eta-weighted.  Raises DegenerateWeights when the effective
    sample size drops below 10.
    """
    shift = float(np.max(cloud.log_weights))
    w = np.exp(cloud.log_weights - shift)
    sw = float(np.sum(w))
    ess = float(sw**2 / np.sum(w**2))
    if ess < _ESS_FLOOR:
        raise DegenerateWeights(f"effective sample size {ess:.1f} < {_ESS_FLOOR}")
    n_part = cloud.positions.shape[0]
    nu = cloud.base_mass * math.exp(shift) * sw / n_part
    if order == 0:
        return nu, None, None, ess
    wn = w / sw
    mean = wn @ cloud.positions
    if order == 1:
        return nu, mean, None, ess
    diff = cloud.positions - mean
    cov = np.einsum("s,si,sj->ij", wn, diff, diff)
    return nu, mean, cov, ess


def particle_standard_errors(cloud: ParticleCloud):
    """Monte Carlo standard errors of (nu, mean, cov) from particle_moments.

    nu uses the i.i.d. sample-mean error of the weights; mean and cov use
    the linearization of the weighted ratio estimators.
    """
    shift = float(np.max(cloud.log_weights))
    w = np.exp(cloud.log_weights - shift)
    n_part = cloud.positions.shape[0]
    se_nu = (
        cloud.base_mass
        * math.exp(shift)
        * float(np.std(w, ddof=1))
        / math.sqrt(n_part)
    )
    wn = w / np.sum(w)
    mean = wn @ cloud.positions
    diff = cloud.positions - mean
    se_mean = np.sqrt(np.einsum("s,si->i", wn**2, diff**2))
    cov = np.einsum("s,si,sj->ij", wn, diff, diff)
    outer = diff[:, :, None] * diff[:, None, :]
    se_cov = np.sqrt(np.einsum("s,sij->ij", wn**2, (outer - cov) ** 2))
    return se_nu, se_mean, se_cov


def resample_particles(cloud: ParticleCloud, rng: np.random.Generator) -> ParticleCloud:
    """Multinomial resampling; folds the mean weight into base_mass so the
    unnormalized total mass estimate is preserved."""
    shift = float(np.max(cloud.log_weights))
    w = np.exp(cloud.log_weights - shift)
    n_part = cloud.positions.shape[0]
    idx = rng.choice(n_part, size=n_part, p=w / np.sum(w))
    new_base = cloud.base_mass * math.exp(shift) * float(np.mean(w))
    return ParticleCloud(
        positions=cloud.positions[idx],
        log_weights=np.zeros(n_part),
        base_mass=new_base,
    )
