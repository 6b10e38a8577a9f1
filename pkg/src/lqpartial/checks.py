"""Invariant suite behind the `check` CLI command.

Each check runs at a reduced size against the configured scenario and
reports pass/fail with a one-line detail; the suite covers model
validation, offline-path identities, tilted-moment derivative structure,
oracle conservation laws, the martingale property of the unnormalized mass
and run determinism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .filtering import init_filter, step_filter, theta_weight
from .harness import Scenario, simulate_closed_loop
from .model import GaussianDensity, TimeGrid, density_moments, validate_model
from .offline import solve_gaussian_offline, solve_offline
from .oracles import grid_moments, init_grid, step_zakai_grid
from .tilted import gamma_mat, tilted_moments


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name, passed, detail) -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def _offline_for(scenario, n_steps=None):
    grid = scenario.grid if n_steps is None else TimeGrid(n_steps, scenario.model.T)
    return grid, solve_offline(scenario.model, grid)


def check_model(scenario) -> CheckResult:
    try:
        validate_model(scenario.model)
        density_moments(scenario.q0)
    except Exception as exc:  # noqa: BLE001 - report, never raise
        return _check("model validation", False, str(exc))
    return _check("model validation", True, "shapes and definiteness hold")


def check_offline_endpoints(scenario) -> CheckResult:
    grid, off = _offline_for(scenario, n_steps=min(scenario.grid.n_steps, 200))
    n = scenario.model.n
    errs = [
        np.max(np.abs(off.sigma[0])),
        np.max(np.abs(off.phi[0] - np.eye(n))),
        np.max(np.abs(off.s[0])),
        np.max(np.abs(off.pi[-1] - scenario.model.M_T)),
        max(np.max(np.abs(p - p.T)) for p in off.pi),
    ]
    worst = float(max(errs))
    return _check(
        "offline endpoints and symmetry", worst <= 1e-12, f"worst residual {worst:.2e}"
    )


def check_riccati_identity(scenario) -> CheckResult:
    grid, off = _offline_for(scenario, n_steps=min(scenario.grid.n_steps, 500))
    q0 = scenario.q0
    if isinstance(q0, GaussianDensity):
        x0, P0 = q0.mean0, q0.cov0
    else:
        x0, P0 = np.zeros(scenario.model.n), np.eye(scenario.model.n)
    try:
        solve_gaussian_offline(scenario.model, grid, off, x0, P0)
    except Exception as exc:  # noqa: BLE001
        return _check("P vs Sigma/Phi/S identity", False, str(exc))
    return _check("P vs Sigma/Phi/S identity", True, "residual under 1e-5 at all nodes")


def check_tilted_derivative(scenario, n_draws=20) -> CheckResult:
    rng = np.random.default_rng(scenario.seed)
    q0 = scenario.q0
    n = q0.dim
    eps = 1e-5
    worst = 0.0
    for _ in range(n_draws):
        root = rng.standard_normal((n, n))
        s_mat = root @ root.T * rng.uniform(0.0, 0.5)
        rho = rng.normal(0.0, 1.5, size=n)
        tm = tilted_moments(q0, s_mat, rho)
        jac = np.empty((n, n))
        for j in range(n):
            dv = np.zeros(n)
            dv[j] = eps
            bp = tilted_moments(q0, s_mat, rho + dv).b
            bm = tilted_moments(q0, s_mat, rho - dv).b
            jac[:, j] = (bp - bm) / (2.0 * eps)
        scale = 1e-5 * (1.0 + np.max(np.abs(tm.B)))
        worst = max(worst, float(np.max(np.abs(jac - tm.cov)) / scale))
    return _check(
        "tilted mean derivative equals tilted covariance",
        worst <= 1.0,
        f"worst residual {worst:.2f} x tolerance",
    )


def check_gamma_psd(scenario, n_draws=50) -> CheckResult:
    grid, off = _offline_for(scenario, n_steps=min(scenario.grid.n_steps, 200))
    rng = np.random.default_rng(scenario.seed + 1)
    worst = 0.0
    for _ in range(n_draws):
        k = int(rng.integers(0, grid.n_steps + 1))
        rho = rng.normal(0.0, 3.0, size=scenario.q0.dim)
        gam = gamma_mat(scenario.q0, off.sigma[k], off.phi[k], off.s[k], rho)
        worst = min(worst, float(np.min(np.linalg.eigvalsh(gam))))
    return _check("Gamma positive semidefinite", worst >= -1e-10, f"min eigenvalue {worst:.2e}")


def check_grid_mass_conservation(scenario) -> CheckResult:
    model = scenario.model
    if model.n != 1:
        return _check("grid mass conservation (H=0)", True, "skipped: n > 1")
    silent = replace(model, H=np.zeros_like(model.H))
    q = init_grid(scenario.q0, n_cells=401, width_sigmas=9.0)
    dt = scenario.grid.dt
    worst = 0.0
    for _ in range(50):
        mass0 = grid_moments(q, order=0)[0]
        q = step_zakai_grid(q, silent, v=0.3, dz=0.0, dt=dt)
        worst = max(worst, abs(grid_moments(q, order=0)[0] - mass0) / mass0)
    return _check(
        "grid mass conservation (H=0)", worst <= 1e-12, f"worst per-step drift {worst:.2e}"
    )


def check_theta_normalization(scenario) -> CheckResult:
    if scenario.q0.dim != 1:
        return _check("theta reweighting identities", True, "skipped: n > 1")
    grid, off = _offline_for(scenario, n_steps=100)
    rng = np.random.default_rng(scenario.seed + 2)
    state = init_filter(scenario.q0)
    dt = grid.dt
    for k in range(grid.n_steps):
        state = step_filter(state, scenario.model, off, scenario.q0, 0.0, rng.normal(0.0, math.sqrt(dt)), dt)
    std = math.sqrt(scenario.q0.cov()[0, 0])
    xq = np.linspace(
        scenario.q0.mean()[0] - 10 * std, scenario.q0.mean()[0] + 10 * std, 4001
    )
    theta = theta_weight(state, scenario.q0, off, xq)
    nu = math.exp(state.log_nu)
    quad = float(np.trapezoid(theta * scenario.q0.pdf(xq), xq))
    rel = abs(quad - nu) / nu
    return _check(
        "theta reweighting identities", rel <= 1e-6, f"mass quadrature error {rel:.2e}"
    )


def check_martingale(scenario, n_paths=400) -> CheckResult:
    """E[nu(T)] = mass(q0) within 4 standard errors at reduced size."""
    from .filtering import filter_step_arrays
    from .harness import _draw_reference_noise

    grid, off = _offline_for(scenario, n_steps=min(scenario.grid.n_steps, 250))
    small = replace(scenario, grid=grid, n_mc=n_paths, measure="reference")
    model, q0 = scenario.model, scenario.q0
    R, K, dt = n_paths, grid.n_steps, grid.dt
    z = np.stack([_draw_reference_noise(small, r) for r in range(R)])
    state0 = init_filter(q0)
    xhat = np.broadcast_to(state0.xhat, (R, model.n)).copy()
    rho = np.broadcast_to(state0.rho, (R, model.n)).copy()
    log_nu = np.full(R, state0.log_nu)
    v = np.zeros((R, model.m))
    for k in range(K):
        xhat, rho, log_nu, _ = filter_step_arrays(
            model, off, q0, k, xhat, rho, log_nu, v, math.sqrt(dt) * z[:, k], dt
        )
    nu_T = np.exp(log_nu)
    se = float(np.std(nu_T, ddof=1) / math.sqrt(R))
    gap = abs(float(np.mean(nu_T)) - q0.mass)
    return _check(
        "mass martingale E[nu(T)] = mass(q0)",
        gap <= 4.0 * se,
        f"gap {gap:.3e} vs 4 SE = {4 * se:.3e}",
    )


def check_determinism(scenario) -> CheckResult:
    small = replace(
        scenario,
        grid=TimeGrid(min(scenario.grid.n_steps, 50), scenario.model.T),
        grid_oracle=None,
        particle_count=None,
    )
    rec1 = simulate_closed_loop(small, replication_seed=3)
    rec2 = simulate_closed_loop(small, replication_seed=3)
    same = (
        np.array_equal(rec1.xhat, rec2.xhat)
        and np.array_equal(rec1.log_nu, rec2.log_nu)
        and np.array_equal(rec1.dz, rec2.dz)
    )
    return _check("seeded determinism", same, "repeated runs are bit-identical")


def run_checks(scenario: Scenario) -> list[CheckResult]:
    checks = [
        check_model,
        check_offline_endpoints,
        check_riccati_identity,
        check_tilted_derivative,
        check_gamma_psd,
        check_grid_mass_conservation,
        check_theta_normalization,
        check_martingale,
        check_determinism,
    ]
    results = []
    for fn in checks:
        try:
            results.append(fn(scenario))
        except Exception as exc:  # noqa: BLE001 - a crash is a failed check
            results.append(_check(fn.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return results
