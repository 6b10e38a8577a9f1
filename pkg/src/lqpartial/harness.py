"""Seeded closed-loop simulation and Monte Carlo cost estimation.

Two simulation measures are supported:

* physical: the initial state is drawn from q0 / mass, the true state is
  integrated by Euler-Maruyama and observations are dz = Hx dt + db; the
  pathwise quadratic cost estimates the objective directly (scaled by
  mass(q0) to match the unnormalized convention).

* reference: the observation path is a pure Wiener process, there is no
  true state, and costs are estimated through the filter triple as

      int nu(t) [xhat'M xhat + tr(M Gamma) + v'N v] dt
      + nu(T) [xhat'M_T xhat + tr(M_T Gamma)].

Replications are seeded counter-style from (seed, replication_index), so a
Monte Carlo estimate is independent of how replications are batched, and
identical scenarios reproduce bit-identical records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import lq_feedback
from .filtering import filter_step_arrays, init_filter, tilted_moments
from .model import InitialDensity, LinearModel, TimeGrid
from .offline import OfflineSolution, solve_offline
from .oracles import (
    GridDensity,
    ParticleCloud,
    grid_moments,
    init_grid,
    init_particles,
    particle_moments,
    step_particles,
    step_zakai_grid,
)


@dataclass(frozen=True)
class Policy:
    """Control law applied to the filter mean.

    kind: optimal | zero | constant | perturbed.  Perturbed policies add a
    deterministic offset delta(t) to the optimal feedback: constant
    amplitude, or amplitude * sin(2 pi cycles t / T + phase).
    """

    kind: str = "optimal"
    value: np.ndarray | None = None
    shape: str = "constant"
    amplitude: float = 0.0
    cycles: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("optimal", "zero", "constant", "perturbed"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant policy needs a value")
        if self.kind == "perturbed" and self.shape not in ("constant", "sin"):
            raise ValueError(f"unknown perturbation shape {self.shape!r}")


def policy_control(policy: Policy, model: LinearModel, offline: OfflineSolution, k: int, xhat):
    """Control v at grid node k for (batched) filter means xhat (..., n)."""
    xhat = np.asarray(xhat, dtype=float)
    lead = xhat.shape[:-1]
    if policy.kind == "zero":
        return np.zeros(lead + (model.m,))
    if policy.kind == "constant":
        v = np.atleast_1d(np.asarray(policy.value, dtype=float))
        return np.broadcast_to(v, lead + (model.m,)).copy()
    v = lq_feedback(model, offline.pi[k], xhat)
    if policy.kind == "perturbed":
        t = offline.grid.times[k]
        if policy.shape == "constant":
            delta = policy.amplitude
        else:
            delta = policy.amplitude * math.sin(
                2.0 * math.pi * policy.cycles * t / model.T + policy.phase
            )
        v = v + delta
    return v


@dataclass(frozen=True)
class GridOracleSettings:
    cells: int = 1601
    width_sigmas: float = 8.0


@dataclass(frozen=True)
class Scenario:
    """Everything a seeded run needs: model, law, grid, policy, oracles."""

    model: LinearModel
    q0: InitialDensity
    grid: TimeGrid
    policy: Policy = field(default_factory=Policy)
    seed: int = 0
    n_mc: int = 100
    measure: str = "reference"
    grid_oracle: GridOracleSettings | None = None
    particle_count: int | None = None
    store_grid_path: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if self.measure not in ("physical", "reference"):
            raise ValueError(f"measure must be physical or reference, got {self.measure!r}")


@dataclass
class TrajectoryRecord:
    """Per-step simulation output; optional blocks are None when disabled."""

    times: np.ndarray            # (K+1,)
    xhat: np.ndarray             # (K+1, n)
    rho: np.ndarray              # (K+1, n)
    log_nu: np.ndarray           # (K+1,)
    gamma: np.ndarray            # (K+1, n, n)
    v: np.ndarray                # (K+1, m)
    dz: np.ndarray               # (K, d)
    x_true: np.ndarray | None = None    # (K+1, n), physical runs
    grid_nu: np.ndarray | None = None   # (K+1,)
    grid_mean: np.ndarray | None = None
    grid_cov: np.ndarray | None = None
    pf_nu: np.ndarray | None = None
    pf_mean: np.ndarray | None = None
    pf_cov: np.ndarray | None = None
    pf_ess: np.ndarray | None = None
    grid_path: np.ndarray | None = None   # (K+1, J) float32, opt-in
    grid_nodes: np.ndarray | None = None  # (J,)


def replication_rng(seed: int, replication: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one replication (and one substream)."""
    return np.random.default_rng(np.random.SeedSequence([seed, replication, stream]))


def _draw_physical_noise(scenario: Scenario, replication: int):
    """(xi, w, b): initial state, state noise and observation noise draws."""
    rng = replication_rng(scenario.seed, replication, 0)
    K = scenario.grid.n_steps
    xi = scenario.q0.sample(rng, 1)[0]
    w = rng.standard_normal((K, scenario.model.n))
    b = rng.standard_normal((K, scenario.model.d))
    return xi, w, b


def _draw_reference_noise(scenario: Scenario, replication: int):
    rng = replication_rng(scenario.seed, replication, 0)
    return rng.standard_normal((scenario.grid.n_steps, scenario.model.d))


def simulate_closed_loop(
    scenario: Scenario,
    replication_seed: int = 0,
    offline: OfflineSolution | None = None,
) -> TrajectoryRecord:
    """Run one seeded closed loop and record the full trajectory.

    In physical mode the observation increments are built from the hidden
    state; in reference mode they are raw Wiener increments and the enabled
    oracles consume the same dz stream as the filter.
    """
    model, q0, grid = scenario.model, scenario.q0, scenario.grid
    if offline is None:
        offline = solve_offline(model, grid)
    K, dt = grid.n_steps, grid.dt
    physical = scenario.measure == "physical"

    if physical:
        xi, w_noise, b_noise = _draw_physical_noise(scenario, replication_seed)
    else:
        z_noise = _draw_reference_noise(scenario, replication_seed)

    state = init_filter(q0)
    xhat = np.empty((K + 1, model.n))
    rho = np.empty((K + 1, model.n))
    log_nu = np.empty(K + 1)
    gamma = np.empty((K + 1, model.n, model.n))
    v_path = np.empty((K + 1, model.m))
    dz_path = np.empty((K, model.d))
    x_true = np.empty((K + 1, model.n)) if physical else None
    xhat[0], rho[0], log_nu[0] = state.xhat, state.rho, state.log_nu

    grid_density: GridDensity | None = None
    cloud: ParticleCloud | None = None
    g_nu = g_mean = g_cov = None
    p_nu = p_mean = p_cov = p_ess = None
    grid_path = grid_nodes = None
    if not physical and scenario.grid_oracle is not None:
        go = scenario.grid_oracle
        grid_density = init_grid(q0, go.cells, go.width_sigmas)
        grid_nodes = grid_density.x_nodes
        g_nu = np.empty(K + 1)
        g_mean = np.empty(K + 1)
        g_cov = np.empty(K + 1)
        g_nu[0], g_mean[0], g_cov[0] = grid_moments(grid_density)
        if scenario.store_grid_path:
            grid_path = np.empty((K + 1, grid_nodes.size), dtype=np.float32)
            grid_path[0] = grid_density.values
    if not physical and scenario.particle_count:
        pf_rng = replication_rng(scenario.seed, replication_seed, 1)
        cloud = init_particles(q0, scenario.particle_count, pf_rng)
        p_nu = np.empty(K + 1)
        p_mean = np.empty(K + 1)
        p_cov = np.empty(K + 1)
        p_ess = np.empty(K + 1)
        nu0, m0, c0, e0 = particle_moments(cloud)
        p_nu[0], p_mean[0], p_cov[0], p_ess[0] = nu0, m0[0], c0[0, 0], e0

    if physical:
        x_true[0] = xi

    cur_xhat, cur_rho, cur_lognu = state.xhat, state.rho, state.log_nu
    sqrt_dt = math.sqrt(dt)
    for k in range(K):
        v = policy_control(scenario.policy, model, offline, k, cur_xhat)
        v_path[k] = v
        if physical:
            x_k = x_true[k]
            dz = (model.H @ x_k) * dt + sqrt_dt * b_noise[k]
            x_true[k + 1] = (
                x_k + (model.F @ x_k + model.G @ v) * dt + sqrt_dt * model.sigma @ w_noise[k]
            )
        else:
            dz = sqrt_dt * z_noise[k]
        dz_path[k] = dz

        cur_xhat, cur_rho, cur_lognu, gam = filter_step_arrays(
            model, offline, q0, k, cur_xhat, cur_rho, cur_lognu, v, dz, dt
        )
        gamma[k] = gam
        xhat[k + 1], rho[k + 1], log_nu[k + 1] = cur_xhat, cur_rho, cur_lognu

        if grid_density is not None:
            grid_density = step_zakai_grid(grid_density, model, v[0], dz[0], dt)
            g_nu[k + 1], g_mean[k + 1], g_cov[k + 1] = grid_moments(grid_density)
            if grid_path is not None:
                grid_path[k + 1] = grid_density.values
        if cloud is not None:
            cloud = step_particles(cloud, model, v, dz, dt, pf_rng)
            nu_k, m_k, c_k, e_k = particle_moments(cloud)
            p_nu[k + 1], p_mean[k + 1], p_cov[k + 1], p_ess[k + 1] = (
                nu_k, m_k[0], c_k[0, 0], e_k,
            )

    # terminal node: record Gamma and the feedback the policy would apply
    tm = tilted_moments(q0, offline.s[K], cur_rho)
    gamma[K] = offline.sigma[K] + offline.phi[K] @ tm.cov @ offline.phi[K].T
    v_path[K] = policy_control(scenario.policy, model, offline, K, cur_xhat)

    return TrajectoryRecord(
        times=grid.times.copy(),
        xhat=xhat,
        rho=rho,
        log_nu=log_nu,
        gamma=gamma,
        v=v_path,
        dz=dz_path,
        x_true=x_true,
        grid_nu=g_nu,
        grid_mean=g_mean,
        grid_cov=g_cov,
        pf_nu=p_nu,
        pf_mean=p_mean,
        pf_cov=p_cov,
        pf_ess=p_ess,
        grid_path=grid_path,
        grid_nodes=grid_nodes,
    )


def physical_cost_samples(scenario: Scenario, offline: OfflineSolution | None = None) -> np.ndarray:
    """Per-replication pathwise costs under the physical measure, (n_mc,).

    Costs are scaled by mass(q0).  All replications run in lockstep as
    batched arrays; replication r consumes exactly the noise stream derived
    from (seed, r), so batching does not change the estimate.
    """
    model, q0, grid = scenario.model, scenario.q0, scenario.grid
    if offline is None:
        offline = solve_offline(model, grid)
    R, K, dt = scenario.n_mc, grid.n_steps, grid.dt

    xi = np.empty((R, model.n))
    w = np.empty((R, K, model.n))
    b = np.empty((R, K, model.d))
    for r in range(R):
        xi[r], w[r], b[r] = _draw_physical_noise(scenario, r)

    state0 = init_filter(q0)
    xhat = np.broadcast_to(state0.xhat, (R, model.n)).copy()
    rho = np.broadcast_to(state0.rho, (R, model.n)).copy()
    log_nu = np.full(R, state0.log_nu)
    x = xi
    cost = np.zeros(R)
    sqrt_dt = math.sqrt(dt)

    prev = None
    for k in range(K):
        v = policy_control(scenario.policy, model, offline, k, xhat)
        running = np.einsum("ri,ij,rj->r", x, model.M, x)
        running += np.einsum("ri,ij,rj->r", v, model.N, v)
        if prev is not None:
            cost += 0.5 * dt * (prev + running)
        prev = running

        dz = (x @ model.H.T) * dt + sqrt_dt * b[:, k]
        x = x + (x @ model.F.T + v @ model.G.T) * dt + sqrt_dt * w[:, k] @ model.sigma.T
        xhat, rho, log_nu, _ = filter_step_arrays(
            model, offline, q0, k, xhat, rho, log_nu, v, dz, dt
        )

    v = policy_control(scenario.policy, model, offline, K, xhat)
    running = np.einsum("ri,ij,rj->r", x, model.M, x)
    running += np.einsum("ri,ij,rj->r", v, model.N, v)
    cost += 0.5 * dt * (prev + running)
    cost += np.einsum("ri,ij,rj->r", x, model.M_T, x)
    return q0.mass * cost


def reference_cost_samples(scenario: Scenario, offline: OfflineSolution | None = None) -> np.ndarray:
    """Per-replication reference-measure cost integrals, (n_mc,).

    Integrand nu(t)[xhat'M xhat + tr(M Gamma) + v'N v] with trapezoid in
    time plus the terminal nu(T)[xhat'M_T xhat + tr(M_T Gamma)].
    """
    model, q0, grid = scenario.model, scenario.q0, scenario.grid
    if offline is None:
        offline = solve_offline(model, grid)
    R, K, dt = scenario.n_mc, grid.n_steps, grid.dt

    z = np.empty((R, K, model.d))
    for r in range(R):
        z[r] = _draw_reference_noise(scenario, r)

    state0 = init_filter(q0)
    xhat = np.broadcast_to(state0.xhat, (R, model.n)).copy()
    rho = np.broadcast_to(state0.rho, (R, model.n)).copy()
    log_nu = np.full(R, state0.log_nu)
    cost = np.zeros(R)
    sqrt_dt = math.sqrt(dt)

    def integrand(k, xh, rh, lnu, v, gam):
        val = np.einsum("ri,ij,rj->r", xh, model.M, xh)
        val += np.einsum("ij,rji->r", model.M, gam)
        val += np.einsum("ri,ij,rj->r", v, model.N, v)
        return np.exp(lnu) * val

    prev = None
    gam = None
    for k in range(K):
        v = policy_control(scenario.policy, model, offline, k, xhat)
        dz = sqrt_dt * z[:, k]
        new_xhat, new_rho, new_lognu, gam = filter_step_arrays(
            model, offline, q0, k, xhat, rho, log_nu, v, dz, dt
        )
        running = integrand(k, xhat, rho, log_nu, v, gam)
        if prev is not None:
            cost += 0.5 * dt * (prev + running)
        prev = running
        xhat, rho, log_nu = new_xhat, new_rho, new_lognu

    tm = tilted_moments(q0, offline.s[K], rho)
    phi_K = offline.phi[K]
    gam_K = offline.sigma[K] + np.einsum("ab,rbc,dc->rad", phi_K, tm.cov, phi_K)
    v = policy_control(scenario.policy, model, offline, K, xhat)
    running = integrand(K, xhat, rho, log_nu, v, gam_K)
    cost += 0.5 * dt * (prev + running)
    terminal = np.einsum("ri,ij,rj->r", xhat, model.M_T, xhat)
    terminal += np.einsum("ij,rji->r", model.M_T, gam_K)
    cost += np.exp(log_nu) * terminal
    return cost


def _mean_stderr(samples: np.ndarray):
    mean = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    return mean, stderr


def estimate_cost_physical(scenario: Scenario, offline: OfflineSolution | None = None):
    """(mean, stderr) of the physical-measure Monte Carlo cost."""
    if scenario.n_mc < 2:
        raise ValueError("n_mc must be >= 2")
    return _mean_stderr(physical_cost_samples(scenario, offline))


def estimate_cost_reference(scenario: Scenario, offline: OfflineSolution | None = None):
    """(mean, stderr) of the reference-measure Monte Carlo cost."""
    if scenario.n_mc < 2:
        raise ValueError("n_mc must be >= 2")
    return _mean_stderr(reference_cost_samples(scenario, offline))
