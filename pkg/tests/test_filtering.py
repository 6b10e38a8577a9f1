import math

import numpy as np
import pytest

from lqpartial import (
    GaussianDensity,
    TimeGrid,
    characteristic_function,
    filter_gamma,
    init_filter,
    conditional_moments,
    solve_gaussian_offline,
    solve_offline,
    step_filter,
    theta_weight,
    tilted_moments,
)
from lqpartial.filtering import filter_step_arrays
from conftest import make_benchmark


class TestInitFilter:
    def test_standard_gaussian(self, gauss_std):
        st = init_filter(gauss_std)
        assert st.t_index == 0
        assert st.xhat[0] == 0.0
        assert st.rho[0] == 0.0
        assert st.log_nu == 0.0

    def test_symmetric_mixture_mean(self, mixture):
        assert init_filter(mixture).xhat[0] == pytest.approx(0.0)

    def test_scaled_mass(self):
        st = init_filter(GaussianDensity(mean0=0.0, cov0=1.0, mass=2.0))
        assert st.log_nu == pytest.approx(math.log(2.0))


class TestStepFilter:
    def test_hand_computed_step(self, bench, offline_1k, gauss_std):
        # dt=0.1, dz=0.05 from (0,0,0) with Gamma(0,0)=1:
        # xhat <- Gamma H dz = 0.05; rho <- Phi H dz = 0.05; log nu <- 0
        st = step_filter(init_filter(gauss_std), bench, offline_1k, gauss_std, 0.0, 0.05, 0.1)
        assert st.xhat[0] == pytest.approx(0.05, abs=1e-15)
        assert st.rho[0] == pytest.approx(0.05, abs=1e-15)
        assert st.log_nu == 0.0
        assert st.t_index == 1

    def test_unobserved_model_freezes_statistics(self, gauss_std):
        model = make_benchmark(H=0.0, F=0.3)
        grid = TimeGrid(50, model.T)
        off = solve_offline(model, grid)
        st = init_filter(GaussianDensity(mean0=1.0, cov0=1.0))
        q0 = GaussianDensity(mean0=1.0, cov0=1.0)
        rng = np.random.default_rng(2)
        for _ in range(50):
            st = step_filter(st, model, off, q0, 0.0, rng.normal(0, 0.1), grid.dt)
        # xhat follows dx = F x dt exactly in the Euler sense; rho, nu frozen
        expect = 1.0 * (1.0 + 0.3 * grid.dt) ** 50
        assert st.xhat[0] == pytest.approx(expect, rel=1e-12)
        assert st.rho[0] == 0.0
        assert st.log_nu == 0.0

    def test_gaussian_reduces_to_kalman_filter(self, bench, offline_1k, gauss_std, gauss_offline_1k):
        # the xhat recursion must coincide with the classical filter driven
        # by the Riccati gain P(t) H'
        rng = np.random.default_rng(7)
        dt = 1e-3
        st = init_filter(gauss_std)
        kalman = 0.0
        for k in range(400):
            dz = rng.normal(0.0, math.sqrt(dt))
            v = -math.tanh(1.0 - k * dt) * kalman
            p_k = gauss_offline_1k.p[k, 0, 0]
            kalman = kalman + v * dt + p_k * (dz - kalman * dt)
            st = step_filter(st, bench, offline_1k, gauss_std, v, dz, dt)
            assert filter_gamma(st, gauss_std, offline_1k)[0, 0] == pytest.approx(
                gauss_offline_1k.p[k + 1, 0, 0], abs=1e-6
            )
        assert st.xhat[0] == pytest.approx(kalman, abs=1e-6)

    def test_batched_steps_match_scalar_path(self, bench, offline_1k, mixture):
        rng = np.random.default_rng(9)
        dz = rng.normal(0.0, math.sqrt(1e-3), size=(3, 20, 1))
        xh = np.tile(mixture.mean(), (3, 1))
        rh = np.zeros((3, 1))
        ln = np.zeros(3)
        v = np.zeros((3, 1))
        for k in range(20):
            xh, rh, ln, _ = filter_step_arrays(
                bench, offline_1k, mixture, k, xh, rh, ln, v, dz[:, k], 1e-3
            )
        st = init_filter(mixture)
        for k in range(20):
            st = step_filter(st, bench, offline_1k, mixture, 0.0, dz[1, k], 1e-3)
        assert xh[1, 0] == pytest.approx(st.xhat[0], abs=1e-15)
        assert ln[1] == pytest.approx(st.log_nu, abs=1e-15)


@pytest.fixture(scope="module")
def mixture_path_state(bench, offline_1k, mixture):
    """Filter state at t = 0.4 along a fixed reference-measure path."""
    rng = np.random.default_rng(13)
    st = init_filter(mixture)
    for _ in range(400):
        st = step_filter(st, bench, offline_1k, mixture, 0.0, rng.normal(0, math.sqrt(1e-3)), 1e-3)
    return st


class TestConditionalMoments:
    def test_time_zero(self, bench, offline_1k, mixture):
        nu, mean, cov = conditional_moments(init_filter(mixture), mixture, offline_1k)
        assert nu == pytest.approx(1.0)
        assert mean[0] == pytest.approx(0.0)
        assert cov[0, 0] == pytest.approx(1.25)

    def test_gaussian_cov_is_path_independent(self, bench, offline_1k, gauss_std, gauss_offline_1k):
        rng = np.random.default_rng(19)
        st = init_filter(gauss_std)
        for _ in range(300):
            st = step_filter(st, bench, offline_1k, gauss_std, 0.4, rng.normal(0, math.sqrt(1e-3)), 1e-3)
        _, _, cov = conditional_moments(st, gauss_std, offline_1k)
        assert cov[0, 0] == pytest.approx(gauss_offline_1k.p[300, 0, 0], abs=1e-6)


class TestThetaWeight:
    def test_identity_at_time_zero(self, offline_1k, mixture):
        st = init_filter(mixture)
        x = np.linspace(-3.0, 3.0, 7)
        np.testing.assert_allclose(theta_weight(st, mixture, offline_1k, x), 1.0, rtol=1e-14)

    def test_reweighting_recovers_mass_and_mean(self, offline_1k, mixture, mixture_path_state):
        st = mixture_path_state
        k = st.t_index
        xq = np.linspace(-12.0, 12.0, 20001)
        theta = theta_weight(st, mixture, offline_1k, xq)
        qv = mixture.pdf(xq)
        nu = math.exp(st.log_nu)
        assert np.trapezoid(theta * qv, xq) == pytest.approx(nu, rel=1e-6)
        # with m(x,t) = Phi x + beta and beta = xhat - Phi b, the theta
        # average of m recovers the conditional mean exactly
        phi_k = offline_1k.phi[k][0, 0]
        b = tilted_moments(mixture, offline_1k.s[k], st.rho).b[0]
        beta = st.xhat[0] - phi_k * b
        m_of_x = phi_k * xq + beta
        mean = np.trapezoid(theta * m_of_x * qv, xq) / nu
        assert mean == pytest.approx(st.xhat[0], rel=1e-6)

    def test_log_form(self, offline_1k, mixture, mixture_path_state):
        st = mixture_path_state
        x = np.array([0.3])
        lw = theta_weight(st, mixture, offline_1k, x, log=True)
        assert np.exp(lw) == pytest.approx(theta_weight(st, mixture, offline_1k, x))


class TestCharacteristicFunction:
    def test_zero_frequency_returns_mass(self, offline_1k, mixture, mixture_path_state):
        cf = characteristic_function(mixture_path_state, mixture, offline_1k, [0.0])
        assert cf == pytest.approx(math.exp(mixture_path_state.log_nu))

    def test_gaussian_closed_form(self, gauss_std):
        model = make_benchmark()
        grid = TimeGrid(4000, model.T)
        off = solve_offline(model, grid)
        gauss = solve_gaussian_offline(model, grid, off, gauss_std.mean0, gauss_std.cov0)
        rng = np.random.default_rng(37)
        st = init_filter(gauss_std)
        for _ in range(2000):
            st = step_filter(st, model, off, gauss_std, 0.0, rng.normal(0, math.sqrt(grid.dt)), grid.dt)
        nu = math.exp(st.log_nu)
        p_t = gauss.p[st.t_index, 0, 0]
        for lam in rng.normal(0.0, 1.5, size=12):
            cf = characteristic_function(st, gauss_std, off, [lam])
            expect = nu * np.exp(1j * lam * st.xhat[0] - 0.5 * lam**2 * p_t)
            assert abs(cf - expect) <= 1e-8


class TestMassMartingale:
    def test_expected_terminal_mass(self, bench, mixture):
        # E[nu(T)] = mass(q0) over reference-measure paths (3 SE band)
        grid = TimeGrid(250, bench.T)
        off = solve_offline(bench, grid)
        rng = np.random.default_rng(41)
        n_paths = 200
        xh = np.tile(mixture.mean(), (n_paths, 1))
        rh = np.zeros((n_paths, 1))
        ln = np.zeros(n_paths)
        v = np.zeros((n_paths, 1))
        for k in range(grid.n_steps):
            dz = rng.normal(0.0, math.sqrt(grid.dt), size=(n_paths, 1))
            xh, rh, ln, _ = filter_step_arrays(bench, off, mixture, k, xh, rh, ln, v, dz, grid.dt)
        nu_T = np.exp(ln)
        se = np.std(nu_T, ddof=1) / math.sqrt(n_paths)
        assert abs(np.mean(nu_T) - mixture.mass) <= 3.0 * se
