"""Separation-principle controller and value-function fields.

The optimal control for the partially observed LQ problem is the certainty
equivalence feedback v = -N^{-1} G' pi(t) xhat(t) applied to the filter
mean, for *any* initial law.  The value function decomposes as

    Phi(q, 0) = (x0bar' pi(0) x0bar + mu(0, 0)) * mass(q)

with mu(rho, t) solving a linear backward PDE in rho, and its Gateaux
derivative field is u(x, 0) = x'pi(0)x + Z(x - x0bar, 0, 0) where
Z(x, rho, t) solves a linear backward PDE on (x, rho) with terminal value
zero:

    Z_t + Z_x (F - Gamma H'H) x + Z_rho Phi'H'H (Phi b + x)
        + tr[Z_xx (2a + Gamma H'H Gamma)]/2 + tr[Z_rr Phi'H'H Phi]/2
        - tr[Z_xr Phi'H'H Gamma] + x'pi G N^{-1} G'pi x + 2 tr[a pi] = 0.

    mu_t + mu_rho Phi'H'H Phi b + tr[mu_rr Phi'H'H Phi]/2
        + tr[(M + pi Gamma H'H) Gamma] = 0,   mu(rho, T) = tr[M_T Gamma].

For a Gaussian initial law both fields lose their rho dependence and
collapse to Z = x'Lambda(t)x + beta(t) and mu = mu(t) from the offline
closed forms; the grid solver is cross-checked against them.

Grid solves (1-D state only) are explicit: upwind-biased second-order
stencils for the first-order terms, central second and cross differences,
Heun time stepping with CFL-driven substepping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import CFLViolation, IdentityViolation
from .filtering import FilterState
from .model import GaussianDensity, InitialDensity, LinearModel, TabulatedDensity
from .offline import GaussianOffline, OfflineSolution, solve_gaussian_offline
from .oracles import GridDensity
from .tilted import tilted_moments

_CFL_SAFETY = 0.4
_GAUSSIAN_FIELD_TOL = 1e-3
_SIDE_BY_SIDE_TOL = 1e-6


# ---------------------------------------------------------------------------
# finite-difference stencils (second-order, quadratic-exact at the edges)

def _d1_central(z: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.gradient(z, h, axis=axis, edge_order=2)


def _d1_upwind(z: np.ndarray, h: float, axis: int, adv: np.ndarray) -> np.ndarray:
    """Upwind-biased three-point first derivative for terms adv * dz/dw in
    a reversed-time evolution dz/dtau = adv * dz/dw + ...

    The transport velocity is -adv, so rows with adv >= 0 receive their
    information from the right (forward-biased stencil) and rows with
    adv < 0 from the left.  Rows where the biased stencil would leave the
    grid fall back to the opposite-sided one; all stencils are exact for
    quadratics.
    """
    zm = np.moveaxis(z, axis, 0)
    bwd = np.empty_like(zm)
    fwd = np.empty_like(zm)
    bwd[2:] = (3.0 * zm[2:] - 4.0 * zm[1:-1] + zm[:-2]) / (2.0 * h)
    fwd[:-2] = (-3.0 * zm[:-2] + 4.0 * zm[1:-1] - zm[2:]) / (2.0 * h)
    bwd[:2] = fwd[:2]
    fwd[-2:] = bwd[-2:]
    out = np.where(np.moveaxis(np.broadcast_to(adv, z.shape), axis, 0) >= 0.0, fwd, bwd)
    return np.moveaxis(out, 0, axis)


def _d2(z: np.ndarray, h: float, axis: int) -> np.ndarray:
    zm = np.moveaxis(z, axis, 0)
    out = np.empty_like(zm)
    out[1:-1] = (zm[2:] - 2.0 * zm[1:-1] + zm[:-2]) / h**2
    out[0] = (zm[0] - 2.0 * zm[1] + zm[2]) / h**2
    out[-1] = (zm[-1] - 2.0 * zm[-2] + zm[-3]) / h**2
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# field containers

@dataclass
class ZField:
    """Backward field Z(x, rho, t); grid cube or Gaussian closed form."""

    x_nodes: np.ndarray
    rho_nodes: np.ndarray
    times: np.ndarray
    q0: InitialDensity
    values: np.ndarray | None = None      # (K+1, J, L), time-major
    lam_path: np.ndarray | None = None    # (K+1, n, n) Gaussian variant
    beta_path: np.ndarray | None = None   # (K+1,)
    p_path: np.ndarray | None = None      # (K+1, n, n)

    @property
    def gaussian(self) -> bool:
        return self.lam_path is not None

    def slice_at(self, k: int) -> np.ndarray:
        """Z(., ., t_k) tabulated on (x_nodes, rho_nodes)."""
        if self.gaussian:
            lam = self.lam_path[k][0, 0]
            return lam * self.x_nodes[:, None] ** 2 + self.beta_path[k] + 0.0 * self.rho_nodes
        return self.values[k].astype(float)

    def evaluate(self, x, rho, k: int):
        """Pointwise Z(x, rho, t_k); clamps to the grid hull off the cube."""
        if self.gaussian:
            lam = self.lam_path[k][0, 0]
            return lam * np.asarray(x, dtype=float) ** 2 + self.beta_path[k]
        interp = RegularGridInterpolator(
            (self.x_nodes, self.rho_nodes),
            self.values[k].astype(float),
            bounds_error=False,
            fill_value=None,
        )
        pts = np.stack(np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(rho, dtype=float)), axis=-1)
        return interp(pts)


@dataclass
class MuField:
    """Backward field mu(rho, t); grid values or Gaussian closed form."""

    rho_nodes: np.ndarray
    times: np.ndarray
    q0: InitialDensity
    values: np.ndarray | None = None    # (K+1, L)
    mu_path: np.ndarray | None = None   # (K+1,) Gaussian variant

    @property
    def gaussian(self) -> bool:
        return self.mu_path is not None

    def at(self, rho: float, k: int) -> float:
        if self.gaussian:
            return float(self.mu_path[k])
        return float(np.interp(rho, self.rho_nodes, self.values[k]))


# ---------------------------------------------------------------------------
# shared plumbing for the two backward solvers

def default_rho_halfwidth(model: LinearModel, offline: OfflineSolution, x_max: float) -> float:
    """Domain half-width 6 (|H| max|Phi| sqrt(T) + max|S| x_max) for the rho grid."""
    h_norm = float(np.linalg.norm(model.H, 2))
    phi_norm = float(np.max([np.linalg.norm(p, 2) for p in offline.phi]))
    s_norm = float(np.max([np.linalg.norm(s, 2) for s in offline.s]))
    return 6.0 * (h_norm * phi_norm * math.sqrt(model.T) + s_norm * x_max)


def rho_path_coverage(rho_path: np.ndarray, rho_max: float) -> float:
    """Fraction of simulated rho samples outside [-rho_max/2, rho_max/2].

    Warns when the fraction exceeds 1%, signalling that the field domain is
    too narrow for the realized paths.
    """
    frac = float(np.mean(np.abs(rho_path) > 0.5 * rho_max))
    if frac > 0.01:
        warnings.warn(
            f"{100 * frac:.1f}% of rho samples left the central half of the field domain",
            stacklevel=2,
        )
    return frac


def _require_scalar_problem(model: LinearModel):
    if model.n != 1 or model.d != 1:
        raise ValueError("grid field solvers support n = d = 1 only")


class _Coefficients:
    """Time-interpolated PDE coefficients on the rho grid.

    Tilted moments are precomputed at every grid node; fractional times
    (CFL substeps) interpolate linearly between nodes.
    """

    def __init__(self, model, q0, offline, rho_nodes):
        self.model = model
        K = offline.grid.n_steps
        L = rho_nodes.size
        self.phi = offline.phi[:, 0, 0]
        self.sig = offline.sigma[:, 0, 0]
        self.pi = offline.pi[:, 0, 0]
        self.b = np.empty((K + 1, L))
        self.gam = np.empty((K + 1, L))
        rho_col = rho_nodes[:, None]
        for k in range(K + 1):
            tm = tilted_moments(q0, offline.s[k], rho_col)
            cvar = tm.cov[:, 0, 0]
            self.b[k] = tm.b[:, 0]
            self.gam[k] = self.sig[k] + self.phi[k] ** 2 * cvar

    def at(self, kf: float):
        """(phi, pi, b_row, gamma_row) linearly interpolated at grid index kf."""
        k0 = int(math.floor(kf))
        k1 = min(k0 + 1, self.b.shape[0] - 1)
        w = kf - k0
        lerp = lambda arr: (1.0 - w) * arr[k0] + w * arr[k1]
        return lerp(self.phi), lerp(self.pi), lerp(self.b), lerp(self.gam)


def _heun_backward(z, rhs, stable_dt, dt, k, substep_cap=1_000_000):
    """One backward step t_k -> t_{k-1} with CFL-driven Heun substepping."""
    m = max(1, math.ceil(dt / stable_dt))
    if m > substep_cap:
        raise CFLViolation(f"step requires {m} substeps; grids are too fine for explicit stepping")
    h = dt / m
    for j in range(m):
        kf = k - j * (1.0 / m)
        f1 = rhs(z, kf)
        f2 = rhs(z + h * f1, kf - 1.0 / m)
        z = z + 0.5 * h * (f1 + f2)
    return z


# ---------------------------------------------------------------------------
# Z field

def _solve_z_grid(model, q0, offline, x_nodes, rho_nodes, on_slice=None, keep_path=True):
    _require_scalar_problem(model)
    K = offline.grid.n_steps
    dt = offline.grid.dt
    dx = float(x_nodes[1] - x_nodes[0])
    dr = float(rho_nodes[1] - rho_nodes[0])
    F = model.F[0, 0]
    H2 = model.HtH[0, 0]
    a = model.a[0, 0]
    gng = model.GNinvGt[0, 0]
    coefs = _Coefficients(model, q0, offline, rho_nodes)
    xcol = x_nodes[:, None]

    def rhs(z, kf):
        phi, pi_t, brow, grow = coefs.at(kf)
        adv_x = (F - grow * H2) * xcol                     # (J, L)
        adv_r = phi * H2 * (phi * brow + xcol)             # (J, L)
        dxx = a + 0.5 * grow**2 * H2                       # (L,)
        drr = 0.5 * phi**2 * H2
        dxr = -phi * H2 * grow                             # (L,)
        src = gng * pi_t**2 * xcol**2 + 2.0 * a * pi_t     # (J, 1)
        out = adv_x * _d1_upwind(z, dx, 0, adv_x)
        out += adv_r * _d1_upwind(z, dr, 1, adv_r)
        out += dxx * _d2(z, dx, 0)
        out += drr * _d2(z, dr, 1)
        out += dxr * _d1_central(_d1_central(z, dx, 0), dr, 1)
        out += src
        return out

    def stable_dt(kf):
        phi, _, brow, grow = coefs.at(kf)
        rate = 2.0 * (a + 0.5 * grow**2 * H2) / dx**2
        rate = rate + 2.0 * (0.5 * phi**2 * H2) / dr**2
        rate = rate + np.max(np.abs((F - grow * H2) * xcol), axis=0) / dx
        rate = rate + np.max(np.abs(phi * H2 * (phi * brow + xcol)), axis=0) / dr
        rate = rate + 2.0 * np.abs(phi * H2 * grow) / (dx * dr)
        return _CFL_SAFETY / float(np.max(rate))

    cube = np.zeros((K + 1, x_nodes.size, rho_nodes.size), dtype=np.float32) if keep_path else None
    z = np.zeros((x_nodes.size, rho_nodes.size))
    if on_slice is not None:
        on_slice(K, z)
    for k in range(K, 0, -1):
        z = _heun_backward(z, rhs, min(stable_dt(k), stable_dt(k - 1)), dt, k)
        if keep_path:
            cube[k - 1] = z
        if on_slice is not None:
            on_slice(k - 1, z)
    return cube


def solve_Z_1d(
    model: LinearModel,
    q0: InitialDensity,
    offline: OfflineSolution,
    x_max: float | None = None,
    n_x: int = 201,
    n_rho: int = 201,
    rho_max: float | None = None,
    verify: bool = True,
) -> ZField:
    """Solve the backward Z field on (x, rho) over the experiment grid.

    A Gaussian initial law short-circuits to Z = x'Lambda(t)x + beta(t);
    with verify=True the grid solver is still run and any pointwise
    deviation above 1e-3 (1 + |Z|) raises IdentityViolation.
    """
    if x_max is None:
        x_max = float(abs(q0.mean()[0]) + 8.0 * math.sqrt(q0.cov()[0, 0]))
    if rho_max is None:
        rho_max = default_rho_halfwidth(model, offline, x_max)
    x_nodes = np.linspace(-x_max, x_max, n_x)
    rho_nodes = np.linspace(-rho_max, rho_max, n_rho)

    if isinstance(q0, GaussianDensity):
        gauss = solve_gaussian_offline(model, offline.grid, offline, q0.mean0, q0.cov0)
        field = ZField(
            x_nodes=x_nodes,
            rho_nodes=rho_nodes,
            times=offline.grid.times,
            q0=q0,
            lam_path=gauss.lam,
            beta_path=gauss.beta,
            p_path=gauss.p,
        )
        if verify:
            worst = 0.0

            def compare(k, z):
                nonlocal worst
                closed = gauss.lam[k][0, 0] * x_nodes[:, None] ** 2 + gauss.beta[k]
                dev = np.max(np.abs(z - closed) / (1.0 + np.abs(closed)))
                worst = max(worst, float(dev))

            _solve_z_grid(model, q0, offline, x_nodes, rho_nodes, on_slice=compare, keep_path=False)
            if worst > _GAUSSIAN_FIELD_TOL:
                raise IdentityViolation(
                    f"grid Z deviates from Lambda x^2 + beta by {worst:.3e} (> {_GAUSSIAN_FIELD_TOL})"
                )
        return field

    cube = _solve_z_grid(model, q0, offline, x_nodes, rho_nodes, keep_path=True)
    return ZField(
        x_nodes=x_nodes,
        rho_nodes=rho_nodes,
        times=offline.grid.times,
        q0=q0,
        values=cube,
    )


# ---------------------------------------------------------------------------
# mu field

def _solve_mu_grid(model, q0, offline, rho_nodes, on_slice=None, keep_path=True):
    _require_scalar_problem(model)
    K = offline.grid.n_steps
    dt = offline.grid.dt
    dr = float(rho_nodes[1] - rho_nodes[0])
    H2 = model.HtH[0, 0]
    M = model.M[0, 0]
    coefs = _Coefficients(model, q0, offline, rho_nodes)

    def rhs(mu, kf):
        phi, pi_t, brow, grow = coefs.at(kf)
        adv = phi**2 * H2 * brow
        out = adv * _d1_upwind(mu, dr, 0, adv)
        out += 0.5 * phi**2 * H2 * _d2(mu, dr, 0)
        out += (M + pi_t * grow * H2) * grow
        return out

    def stable_dt(kf):
        phi, _, brow, _ = coefs.at(kf)
        rate = phi**2 * H2 / dr**2 + np.max(np.abs(phi**2 * H2 * brow)) / dr
        return _CFL_SAFETY / max(float(rate), 1e-30)

    path = np.zeros((K + 1, rho_nodes.size)) if keep_path else None
    mu = model.M_T[0, 0] * coefs.gam[K]
    if keep_path:
        path[K] = mu
    if on_slice is not None:
        on_slice(K, mu)
    for k in range(K, 0, -1):
        mu = _heun_backward(mu, rhs, min(stable_dt(k), stable_dt(k - 1)), dt, k)
        if keep_path:
            path[k - 1] = mu
        if on_slice is not None:
            on_slice(k - 1, mu)
    return path


def solve_mu_1d(
    model: LinearModel,
    q0: InitialDensity,
    offline: OfflineSolution,
    n_rho: int = 401,
    rho_max: float | None = None,
    verify: bool = True,
) -> MuField:
    """Solve the backward mu field on the rho grid over the experiment grid.

    Gaussian initial laws short-circuit to the offline mu(t) path, with the
    same grid cross-check discipline as solve_Z_1d.
    """
    if rho_max is None:
        x_scale = float(abs(q0.mean()[0]) + 8.0 * math.sqrt(q0.cov()[0, 0]))
        rho_max = default_rho_halfwidth(model, offline, x_scale)
    rho_nodes = np.linspace(-rho_max, rho_max, n_rho)

    if isinstance(q0, GaussianDensity):
        gauss = solve_gaussian_offline(model, offline.grid, offline, q0.mean0, q0.cov0)
        field = MuField(
            rho_nodes=rho_nodes, times=offline.grid.times, q0=q0, mu_path=gauss.mu
        )
        if verify:
            worst = 0.0

            def compare(k, mu):
                nonlocal worst
                dev = np.max(np.abs(mu - gauss.mu[k]) / (1.0 + abs(gauss.mu[k])))
                worst = max(worst, float(dev))

            _solve_mu_grid(model, q0, offline, rho_nodes, on_slice=compare, keep_path=False)
            if worst > _GAUSSIAN_FIELD_TOL:
                raise IdentityViolation(
                    f"grid mu deviates from the closed form by {worst:.3e} (> {_GAUSSIAN_FIELD_TOL})"
                )
        return field

    path = _solve_mu_grid(model, q0, offline, rho_nodes, keep_path=True)
    return MuField(rho_nodes=rho_nodes, times=offline.grid.times, q0=q0, values=path)


# ---------------------------------------------------------------------------
# controller and value evaluation

def lq_feedback(model: LinearModel, pi_t: np.ndarray, xhat) -> np.ndarray:
    """Certainty-equivalence feedback v = -N^{-1} G' pi(t) xhat."""
    xhat = np.asarray(xhat, dtype=float)
    gain = np.linalg.solve(model.N, model.G.T @ pi_t)
    return -xhat @ gain.T


def _z_slice_derivatives(field: ZField, k: int):
    """(Zx, Zr) interpolators of the grid field at time index k."""
    z = field.values[k].astype(float)
    dx = float(field.x_nodes[1] - field.x_nodes[0])
    dr = float(field.rho_nodes[1] - field.rho_nodes[0])
    zx = _d1_central(z, dx, 0)
    zr = _d1_central(z, dr, 1)
    make = lambda arr: RegularGridInterpolator(
        (field.x_nodes, field.rho_nodes), arr, bounds_error=False, fill_value=None
    )
    return make(zx), make(zr), zx


def hjb_residual(Z: ZField, q_t: GridDensity, state: FilterState) -> float:
    """Quadrature of int Z_x(x - xhat, rho, t) q(x, t) dx, normalized.

    The integral vanishes along optimal-control paths; the value returned
    is divided by nu(t) (1 + max|Z_x|) so tolerances are scale-free.
    """
    k = state.t_index
    xhat = float(state.xhat[0])
    rho = float(state.rho[0])
    x = q_t.x_nodes
    nu_q = float(np.trapezoid(q_t.values, x))
    if Z.gaussian:
        lam = Z.lam_path[k][0, 0]
        zx = 2.0 * lam * (x - xhat)
        integral = float(np.trapezoid(zx * q_t.values, x))
        return integral / (nu_q * (1.0 + np.max(np.abs(zx))))
    zx_interp, _, zx_grid = _z_slice_derivatives(Z, k)
    vals = zx_interp(np.stack([x - xhat, np.full_like(x, rho)], axis=-1))
    integral = float(np.trapezoid(vals * q_t.values, x))
    return integral / (nu_q * (1.0 + float(np.max(np.abs(zx_grid)))))


def K_field(
    Z: ZField, state: FilterState, model: LinearModel, offline: OfflineSolution, x
):
    """Observation-direction field K(x, t) = H[-Gamma Z_x + Phi Z_rho](x - xhat, rho, t).

    Gaussian fields evaluate -2 H P(t) Lambda(t) (x - xhat) analytically;
    grid fields use finite differences of the stored cube.
    """
    k = state.t_index
    xhat = float(state.xhat[0])
    rho = float(state.rho[0])
    H = model.H[0, 0]
    x = np.asarray(x, dtype=float)
    if Z.gaussian:
        return -2.0 * H * Z.p_path[k][0, 0] * Z.lam_path[k][0, 0] * (x - xhat)
    phi_k = offline.phi[k][0, 0]
    tm = tilted_moments(Z.q0, offline.s[k], np.array([rho]))
    gamma = offline.sigma[k][0, 0] + phi_k**2 * float(tm.cov[0, 0])
    zx_interp, zr_interp, _ = _z_slice_derivatives(Z, k)
    pts = np.stack(np.broadcast_arrays(x - xhat, rho), axis=-1)
    return H * (-gamma * zx_interp(pts) + phi_k * zr_interp(pts))


def value_function(
    q0: InitialDensity, model: LinearModel, offline: OfflineSolution, mu: MuField
) -> float:
    """Phi(q, 0) = (x0bar' pi(0) x0bar + mu(0, 0)) * mass(q)."""
    x0 = q0.mean()
    quad = float(x0 @ offline.pi[0] @ x0)
    return (quad + mu.at(0.0, 0)) * q0.mass


def value_q_derivative(
    x, q0: InitialDensity, model: LinearModel, offline: OfflineSolution, Z: ZField
):
    """Gateaux derivative of the value in the density: x'pi(0)x + Z(x - x0bar, 0, 0)."""
    x = np.asarray(x, dtype=float)
    x0 = float(q0.mean()[0])
    pi0 = offline.pi[0][0, 0]
    return pi0 * x**2 + Z.evaluate(x - x0, 0.0, 0)


def value_t_derivative_gaussian(
    model: LinearModel, offline: OfflineSolution, gauss: GaussianOffline
) -> float:
    """Closed-form time derivative of the Gaussian-case value at t = 0.

    -2 tr[(a + P0 F)(pi0 + Lambda0)] + x0'pi'(0)x0 - tr[P0 M]
    + tr[P0 H'H P0 Lambda0], with pi'(0) read off the Riccati right side.
    """
    pi0 = offline.pi[0]
    lam0 = gauss.lam[0]
    P0 = gauss.p[0]
    x0 = gauss.x0bar
    pi_rate = pi0 @ model.GNinvGt @ pi0 - pi0 @ model.F - model.F.T @ pi0 - model.M
    out = -2.0 * np.trace((model.a + P0 @ model.F) @ (pi0 + lam0))
    out += float(x0 @ pi_rate @ x0)
    out -= np.trace(P0 @ model.M)
    out += np.trace(P0 @ model.HtH @ P0 @ lam0)
    return float(out)


def value_t_derivative(
    q0: InitialDensity,
    model: LinearModel,
    offline: OfflineSolution,
    Z: ZField,
    n_quad: int = 4001,
    width_sigmas: float = 10.0,
) -> float:
    """Time derivative of the value at t = 0 by quadrature against q0.

    Evaluates the generic Bellman-rate formula

        dPhi/dt = -tr[a int u_xx q] - int Hx . K(x,0) q dx / 2
                  - int [x'Mx + v'Nv + u_x . (Fx + Gv)] q dx

    with u(x, 0) = x'pi(0)x + Z(x - x0bar, 0, 0), v the optimal control at
    the initial mean, and K(x, 0) = H[-Gamma(0,0) Z_x + Z_rho].  When both
    the density and the field are Gaussian the closed form is evaluated
    side by side and a disagreement beyond 1e-6 triggers a warning rather
    than silently preferring either route.
    """
    _require_scalar_problem(model)
    x0 = float(q0.mean()[0])
    F = model.F[0, 0]
    G = model.G[0, 0]
    H = model.H[0, 0]
    a = model.a[0, 0]
    M = model.M[0, 0]
    N = model.N[0, 0]
    pi0 = offline.pi[0][0, 0]

    if isinstance(q0, TabulatedDensity):
        xq = q0.nodes
    else:
        std = math.sqrt(q0.cov()[0, 0])
        xq = np.linspace(x0 - width_sigmas * std, x0 + width_sigmas * std, n_quad)
    qv = np.asarray(q0.pdf(xq), dtype=float)
    gamma00 = float(q0.cov()[0, 0])

    if Z.gaussian:
        lam0 = Z.lam_path[0][0, 0]
        zx = 2.0 * lam0 * (xq - x0)
        zxx = np.full_like(xq, 2.0 * lam0)
        zr = np.zeros_like(xq)
    else:
        zx_interp, zr_interp, _ = _z_slice_derivatives(Z, 0)
        z0 = Z.values[0].astype(float)
        dx = float(Z.x_nodes[1] - Z.x_nodes[0])
        zxx_interp = RegularGridInterpolator(
            (Z.x_nodes, Z.rho_nodes),
            _d2(z0, dx, 0),
            bounds_error=False,
            fill_value=None,
        )
        pts = np.stack([xq - x0, np.zeros_like(xq)], axis=-1)
        zx = zx_interp(pts)
        zr = zr_interp(pts)
        zxx = zxx_interp(pts)

    ux = 2.0 * pi0 * xq + zx
    uxx = 2.0 * pi0 + zxx
    k0 = H * (-gamma00 * zx + zr)
    vhat = -(G / N) * pi0 * x0

    out = -a * np.trapezoid(uxx * qv, xq)
    out -= 0.5 * np.trapezoid(H * xq * k0 * qv, xq)
    running = M * xq**2 + N * vhat**2 + ux * (F * xq + G * vhat)
    out -= np.trapezoid(running * qv, xq)
    out = float(out)

    if Z.gaussian and isinstance(q0, GaussianDensity):
        gauss = solve_gaussian_offline(model, offline.grid, offline, q0.mean0, q0.cov0)
        closed = value_t_derivative_gaussian(model, offline, gauss)
        if abs(out - closed) > _SIDE_BY_SIDE_TOL * (1.0 + abs(closed)):
            warnings.warn(
                f"quadrature time derivative {out:.9g} vs closed form {closed:.9g}",
                stacklevel=2,
            )
    return out
