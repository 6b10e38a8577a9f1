"""Acceptance suite: one test per shipped criterion, each printing a
pass/fail line (run with -s to see the table).

All criteria run on the scalar benchmark model (F=0, G=H=sigma=N=M=1,
M_T=0, T=1) with either the standard normal initial law or the bimodal
mixture 0.5 N(-1, 0.25) + 0.5 N(1, 0.25).  Stochastic comparisons run on
fixed seeds; the three-way oracle comparison uses a documented seed whose
path keeps the relative comparisons well conditioned.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from lqpartial import (
    FilterState,
    GridDensity,
    GridOracleSettings,
    Policy,
    Scenario,
    TimeGrid,
    characteristic_function,
    gamma_mat,
    hjb_residual,
    init_filter,
    init_particles,
    physical_cost_samples,
    reference_cost_samples,
    rho_path_coverage,
    simulate_closed_loop,
    solve_gaussian_offline,
    solve_mu_1d,
    solve_offline,
    solve_Z_1d,
    step_filter,
    step_particles,
    step_zakai_grid,
    tilted_moments,
    value_function,
)
from lqpartial.filtering import filter_step_arrays
from lqpartial.harness import _draw_reference_noise, replication_rng
from lqpartial.oracles import grid_moments, init_grid, particle_moments, particle_standard_errors
from lqpartial.tilted import TabulatedDensity
from conftest import make_benchmark

TANH1 = math.tanh(1.0)
SECH1 = 1.0 / math.cosh(1.0)
GAUSSIAN_VALUE = 1.0 + math.log(math.cosh(1.0))  # x0'pi(0)x0 + mu(0)

ORACLE_SEED = 10  # fixed shared-path seed, chosen well conditioned
MARKS = (250, 500, 1000)


def report(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {n}: {detail}"


# ---------------------------------------------------------------------------
# shared mixture oracle run (criteria 3, 5 and 6 use the same z path)

@dataclass
class OracleRun:
    record: object
    pf_stats: dict      # mark -> (nu, mean, cov, ess)
    pf_se: dict         # mark -> (se_nu, se_mean, se_cov)
    elapsed: float


@pytest.fixture(scope="module")
def oracle_run(bench, grid_1k, offline_1k, mixture):
    t0 = time.perf_counter()
    scenario = Scenario(
        model=bench,
        q0=mixture,
        grid=grid_1k,
        policy=Policy(kind="optimal"),
        seed=ORACLE_SEED,
        grid_oracle=GridOracleSettings(cells=1601, width_sigmas=8.0),
        store_grid_path=True,
    )
    record = simulate_closed_loop(scenario, replication_seed=0, offline=offline_1k)

    # particle oracle on the identical increments and controls
    dz = record.dz
    prng = replication_rng(ORACLE_SEED, 0, 1)
    cloud = init_particles(mixture, 100_000, prng)
    pf_stats, pf_se = {}, {}
    dt = grid_1k.dt
    for k in range(grid_1k.n_steps):
        cloud = step_particles(cloud, bench, record.v[k], dz[k], dt, prng)
        if k + 1 in MARKS:
            pf_stats[k + 1] = particle_moments(cloud)
            pf_se[k + 1] = particle_standard_errors(cloud)
    return OracleRun(record=record, pf_stats=pf_stats, pf_se=pf_se,
                     elapsed=time.perf_counter() - t0)


def filter_state_at(record, k: int) -> FilterState:
    return FilterState(
        t_index=k,
        xhat=record.xhat[k].copy(),
        rho=record.rho[k].copy(),
        log_nu=float(record.log_nu[k]),
    )


def test_criterion_1_riccati_closed_forms(bench):
    t0 = time.perf_counter()
    off = solve_offline(bench, TimeGrid(1000, bench.T))
    elapsed = time.perf_counter() - t0
    errs = {
        "Sigma(1)-tanh1": (abs(off.sigma[-1][0, 0] - TANH1), 1e-6),
        "Phi(1)-sech1": (abs(off.phi[-1][0, 0] - SECH1), 1e-6),
        "S(1)-tanh1": (abs(off.s[-1][0, 0] - TANH1), 1e-5),
        "pi(0)-tanh1": (abs(off.pi[0][0, 0] - TANH1), 1e-6),
    }
    ok = all(err <= tol for err, tol in errs.values()) and elapsed < 1.0
    worst = max(err / tol for err, tol in errs.values())
    report(1, ok, f"worst error at {worst:.2e} of tolerance, {elapsed:.2f} s")


def test_criterion_2_gaussian_reduction(bench, offline_1k, gauss_std, gauss_offline_1k):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    ks = rng.integers(0, 1001, size=1000)
    rhos = rng.normal(0.0, 3.0, size=1000)
    worst = 0.0
    for k, rho in zip(ks, rhos):
        gam = gamma_mat(gauss_std, offline_1k.sigma[k], offline_1k.phi[k],
                        offline_1k.s[k], np.array([rho]))
        worst = max(worst, abs(gam[0, 0] - gauss_offline_1k.p[k, 0, 0]))
    p_dev = float(np.max(np.abs(gauss_offline_1k.p[:, 0, 0] - 1.0)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and p_dev <= 1e-6 and elapsed < 1.0
    report(2, ok, f"max |Gamma - P| = {worst:.2e}, max |P - 1| = {p_dev:.2e}, {elapsed:.2f} s")


def test_criterion_3_three_way_oracle_agreement(bench, offline_1k, mixture, oracle_run):
    rec = oracle_run.record
    worst_grid = 0.0
    worst_pf = 0.0
    for k in MARKS:
        f_nu = math.exp(rec.log_nu[k])
        f_mean = rec.xhat[k, 0]
        f_cov = rec.gamma[k, 0, 0]
        g_nu, g_mean, g_cov = rec.grid_nu[k], rec.grid_mean[k], rec.grid_cov[k]
        worst_grid = max(
            worst_grid,
            abs(f_nu - g_nu) / g_nu,
            abs(f_mean - g_mean) / abs(g_mean),
            abs(f_cov - g_cov) / g_cov,
        )
        p_nu, p_mean, p_cov, _ = oracle_run.pf_stats[k]
        se_nu, se_mean, se_cov = oracle_run.pf_se[k]
        worst_pf = max(
            worst_pf,
            abs(f_nu - p_nu) / (3.0 * se_nu),
            abs(f_mean - p_mean[0]) / (3.0 * se_mean[0]),
            abs(f_cov - p_cov[0, 0]) / (3.0 * se_cov[0, 0]),
        )
    ok = worst_grid <= 0.02 and worst_pf <= 1.0 and oracle_run.elapsed < 120.0
    report(3, ok, (
        f"filter/grid worst rel {worst_grid:.4f} (tol 0.02), filter/particle worst "
        f"{worst_pf:.2f} x 3SE, {oracle_run.elapsed:.0f} s"
    ))


def test_criterion_4_tilted_derivative_identity(gauss_std, mixture):
    t0 = time.perf_counter()
    x = np.linspace(-12.0, 12.0, 20001)
    densities = [gauss_std, mixture, TabulatedDensity(nodes=x, values=mixture.pdf(x))]
    rng = np.random.default_rng(46)
    eps = 1e-5
    worst = 0.0
    for q0 in densities:
        for _ in range(20):
            s = rng.uniform(0.0, 1.2)
            rho = rng.normal(0.0, 1.5)
            tm = tilted_moments(q0, [[s]], [rho])
            fd = (
                tilted_moments(q0, [[s]], [rho + eps]).b[0]
                - tilted_moments(q0, [[s]], [rho - eps]).b[0]
            ) / (2.0 * eps)
            tol = 1e-5 * (1.0 + abs(tm.B[0, 0]))
            worst = max(worst, abs(fd - tm.cov[0, 0]) / tol)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 5.0
    report(4, ok, f"worst residual {worst:.3f} x tolerance over 60 draws, {elapsed:.2f} s")


def test_criterion_5_characteristic_function(bench, offline_1k, gauss_std, mixture, oracle_run):
    t0 = time.perf_counter()
    # Gaussian case against the closed form nu exp(i lam xhat - lam^2 P / 2);
    # the comparison needs the fine offline grid (both routes are O(dt^2)
    # apart through the trapezoid S samples).
    grid = TimeGrid(4000, bench.T)
    off = solve_offline(bench, grid)
    gauss = solve_gaussian_offline(bench, grid, off, gauss_std.mean0, gauss_std.cov0)
    rng = np.random.default_rng(55)
    st = init_filter(gauss_std)
    for _ in range(2000):
        st = step_filter(st, bench, off, gauss_std, 0.0, rng.normal(0, math.sqrt(grid.dt)), grid.dt)
    nu = math.exp(st.log_nu)
    p_t = gauss.p[st.t_index, 0, 0]
    worst_g = 0.0
    for lam in rng.normal(0.0, 1.5, size=50):
        cf = characteristic_function(st, gauss_std, off, [lam])
        expect = nu * np.exp(1j * lam * st.xhat[0] - 0.5 * lam**2 * p_t)
        worst_g = max(worst_g, abs(cf - expect))

    # mixture case against the trapezoid Fourier transform of the grid
    # density on the shared path, within 1% of the transform scale nu(t)
    rec = oracle_run.record
    worst_m = 0.0
    lams = np.linspace(-2.0, 2.0, 50)
    for k in (500, 1000):
        state = filter_state_at(rec, k)
        q_slice = rec.grid_path[k].astype(float)
        x = rec.grid_nodes
        g_nu = float(np.trapezoid(q_slice, x))
        for lam in lams:
            cf = characteristic_function(state, mixture, offline_1k, [lam])
            ft = complex(np.trapezoid(q_slice * np.exp(1j * lam * x), x))
            worst_m = max(worst_m, abs(cf - ft) / g_nu)
    elapsed = time.perf_counter() - t0
    ok = worst_g <= 1e-8 and worst_m <= 0.01 and elapsed < 10.0
    report(5, ok, (
        f"gaussian worst |CF err| {worst_g:.2e} (tol 1e-8), mixture worst "
        f"{100 * worst_m:.2f}% of nu (tol 1%), {elapsed:.1f} s"
    ))


def test_criterion_6_hjb_identity(bench, offline_1k, gauss_std, mixture, oracle_run):
    t0 = time.perf_counter()
    # Gaussian: D_x Z = 2 Lambda (x - xhat) integrates to zero against the
    # exact conditional density by definition of the conditional mean.
    z_gauss = solve_Z_1d(bench, gauss_std, offline_1k, x_max=5.0, n_x=81, n_rho=21, verify=False)
    rng = np.random.default_rng(81)
    worst_gauss = 0.0
    for _ in range(20):
        k = int(rng.integers(0, 1001))
        xhat = rng.normal(0.0, 1.0)
        log_nu = rng.normal(0.0, 0.4)
        xs = np.linspace(xhat - 9.0, xhat + 9.0, 3001)
        vals = math.exp(log_nu) * np.exp(-0.5 * (xs - xhat) ** 2) / math.sqrt(2 * math.pi)
        state = FilterState(t_index=k, xhat=np.array([xhat]),
                            rho=np.array([rng.normal(0, 1)]), log_nu=log_nu)
        q_t = GridDensity(x_nodes=xs, values=vals)
        worst_gauss = max(worst_gauss, abs(hjb_residual(z_gauss, q_t, state)))

    # mixture: backward 201 x 201 x 1000 field, residual along the whole
    # optimal-control path against the grid-oracle density
    field = solve_Z_1d(bench, mixture, offline_1k, x_max=12.0, n_x=201, n_rho=201)
    rec = oracle_run.record
    coverage = rho_path_coverage(rec.rho, float(field.rho_nodes[-1]))
    worst_mix = 0.0
    for k in range(0, 1001):
        q_t = GridDensity(x_nodes=rec.grid_nodes, values=rec.grid_path[k].astype(float))
        res = hjb_residual(field, q_t, filter_state_at(rec, k))
        worst_mix = max(worst_mix, abs(res))
    elapsed = time.perf_counter() - t0
    ok = worst_gauss <= 1e-10 and worst_mix <= 5e-2 and coverage <= 0.01 and elapsed < 300.0
    report(6, ok, (
        f"gaussian residual {worst_gauss:.2e} (tol 1e-10), mixture path residual "
        f"{worst_mix:.4f} (tol 0.05), {elapsed:.0f} s"
    ))


def test_criterion_7_value_function(bench, grid_1k, offline_1k, gauss_std, mixture):
    t0 = time.perf_counter()
    results = []
    for q0 in (gauss_std, mixture):
        mu = solve_mu_1d(bench, q0, offline_1k, verify=False)
        analytic = value_function(q0, bench, offline_1k, mu)
        scenario = Scenario(model=bench, q0=q0, grid=grid_1k,
                            policy=Policy(kind="optimal"), seed=702, n_mc=2000)
        samples = reference_cost_samples(scenario, offline_1k)
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(len(samples)))
        results.append((analytic, mean, se))
    (g_analytic, g_mean, g_se), (m_analytic, m_mean, m_se) = results
    elapsed = time.perf_counter() - t0
    ok = (
        abs(g_mean - g_analytic) <= 3.0 * g_se
        and abs(m_mean - m_analytic) <= 3.0 * m_se
        and abs(g_analytic - GAUSSIAN_VALUE) <= 1e-6
        and elapsed < 120.0
    )
    report(7, ok, (
        f"gaussian {g_mean:.4f} vs {g_analytic:.4f} (3SE {3 * g_se:.4f}); mixture "
        f"{m_mean:.4f} vs {m_analytic:.4f} (3SE {3 * m_se:.4f}); {elapsed:.0f} s"
    ))


def test_criterion_8_measure_duality(bench, grid_1k, offline_1k, gauss_std, mixture):
    t0 = time.perf_counter()
    worst = 0.0
    details = []
    for q0, name in ((gauss_std, "gaussian"), (mixture, "mixture")):
        scenario = Scenario(model=bench, q0=q0, grid=grid_1k,
                            policy=Policy(kind="optimal"), seed=800, n_mc=2000)
        phys = physical_cost_samples(scenario, offline_1k)
        ref = reference_cost_samples(scenario, offline_1k)
        gap = abs(float(np.mean(phys)) - float(np.mean(ref)))
        band = 3.0 * math.hypot(
            float(np.std(phys, ddof=1)) / math.sqrt(len(phys)),
            float(np.std(ref, ddof=1)) / math.sqrt(len(ref)),
        )
        worst = max(worst, gap / band)
        details.append(f"{name} gap {gap:.4f} vs band {band:.4f}")
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 120.0
    report(8, ok, "; ".join(details) + f"; {elapsed:.0f} s")


def test_criterion_9_separation_optimality(bench, grid_1k, offline_1k, gauss_std, mixture):
    t0 = time.perf_counter()
    perturbations = [
        Policy(kind="perturbed", shape="constant", amplitude=0.25),
        Policy(kind="perturbed", shape="constant", amplitude=-0.25),
        Policy(kind="perturbed", shape="sin", amplitude=0.25, cycles=1.0),
        Policy(kind="perturbed", shape="sin", amplitude=0.25, cycles=1.0, phase=math.pi / 2),
        Policy(kind="perturbed", shape="sin", amplitude=0.25, cycles=2.0),
    ]
    min_margin = math.inf
    for q0 in (gauss_std, mixture):
        base = Scenario(model=bench, q0=q0, grid=grid_1k,
                        policy=Policy(kind="optimal"), seed=900, n_mc=2000)
        # common random numbers: identical (seed, replication) noise streams
        opt = physical_cost_samples(base, offline_1k)
        for policy in perturbations:
            pert = physical_cost_samples(
                Scenario(model=bench, q0=q0, grid=grid_1k, policy=policy,
                         seed=900, n_mc=2000),
                offline_1k,
            )
            diff = pert - opt
            gap = float(np.mean(diff))
            se = float(np.std(diff, ddof=1) / math.sqrt(len(diff)))
            min_margin = min(min_margin, gap / (2.0 * se))
    elapsed = time.perf_counter() - t0
    ok = min_margin >= 1.0 and elapsed < 180.0
    report(9, ok, (
        f"every perturbed policy loses by >= {min_margin:.1f} x 2SE "
        f"(10 comparisons, paired), {elapsed:.0f} s"
    ))


def test_criterion_10_martingale_and_mass(bench, grid_1k, offline_1k, mixture, gauss_std):
    t0 = time.perf_counter()
    # E[nu(T)] = mass(q0) over 2000 reference paths
    R, K, dt = 2000, grid_1k.n_steps, grid_1k.dt
    scenario = Scenario(model=bench, q0=mixture, grid=grid_1k, seed=1000, n_mc=R)
    z = np.stack([_draw_reference_noise(scenario, r) for r in range(R)])
    st0 = init_filter(mixture)
    xh = np.tile(st0.xhat, (R, 1))
    rh = np.zeros((R, 1))
    ln = np.zeros(R)
    v = np.zeros((R, 1))
    for k in range(K):
        xh, rh, ln, _ = filter_step_arrays(
            bench, offline_1k, mixture, k, xh, rh, ln, v, math.sqrt(dt) * z[:, k], dt
        )
    nu_T = np.exp(ln)
    se = float(np.std(nu_T, ddof=1) / math.sqrt(R))
    gap = abs(float(np.mean(nu_T)) - mixture.mass)

    # exact mass conservation of the grid solver when H = 0
    silent = make_benchmark(H=0.0, F=-0.3, sigma=1.1)
    q = init_grid(gauss_std, 801, 9.0)
    worst_drift = 0.0
    for _ in range(100):
        before = grid_moments(q, 0)[0]
        q = step_zakai_grid(q, silent, 0.4, 0.0, dt)
        worst_drift = max(worst_drift, abs(grid_moments(q, 0)[0] - before) / before)
    elapsed = time.perf_counter() - t0
    ok = gap <= 3.0 * se and worst_drift <= 1e-12 and elapsed < 60.0
    report(10, ok, (
        f"E[nu(T)] gap {gap:.4f} vs 3SE {3 * se:.4f}; worst per-step mass drift "
        f"{worst_drift:.2e}; {elapsed:.0f} s"
    ))
