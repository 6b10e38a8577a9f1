"""Observation-independent offline paths.

Everything here is deterministic and computed once per scenario:

    Sigma' = 2a + F Sigma + Sigma F' - Sigma H'H Sigma,   Sigma(0) = 0
    Phi'   = (F - Sigma H'H) Phi,                         Phi(0)   = I
    S(t)   = int_0^t Phi'(s) H'H Phi(s) ds
    pi'    = pi G N^{-1} G' pi - pi F - F' pi - M,        pi(T)    = M_T

plus, when the initial law is Gaussian N(x0, P0), the closed-form bundle

    P'      = 2a + F P + P F' - P H'H P,                  P(0)      = P0
    Lambda' = -Lambda (F - P H'H) - (F - P H'H)' Lambda
              - pi G N^{-1} G' pi,                        Lambda(T) = 0
    beta(t) = int_t^T tr[Lambda (2a + P H'H P)] + 2 tr[a pi] ds
    mu(t)   = int_t^T tr[(M + pi P H'H) P] ds + tr[M_T P(T)]

Matrix ODEs use classic RK4 on the experiment grid with explicit
symmetrization each step; the integrals S, beta, mu use the trapezoid rule
on the same grid samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IdentityViolation, NotPositiveDefinite, RiccatiBlowup
from .model import LinearModel, TimeGrid, _as_matrix, _as_vector

_BLOWUP = 1e12
_IDENTITY_TOL = 1e-5


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _check_blowup(mat: np.ndarray, name: str):
    if not np.all(np.isfinite(mat)) or np.max(np.abs(mat)) > _BLOWUP:
        raise RiccatiBlowup(f"{name} path exceeded {_BLOWUP:.0e}; rescale the model")


def _rk4(y, rhs, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _cumtrapz_from_start(values: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid along axis 0 starting at 0."""
    out = np.zeros_like(values)
    incr = 0.5 * dt * (values[1:] + values[:-1])
    out[1:] = np.cumsum(incr, axis=0)
    return out


def _cumtrapz_to_end(values: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid of values from each grid node to the final node."""
    total = _cumtrapz_from_start(values, dt)
    return total[-1] - total


@dataclass(frozen=True)
class OfflineSolution:
    """Time-sampled Sigma, Phi, S and pi paths on a shared grid."""

    grid: TimeGrid
    sigma: np.ndarray  # (K+1, n, n)
    phi: np.ndarray    # (K+1, n, n)
    s: np.ndarray      # (K+1, n, n)
    pi: np.ndarray     # (K+1, n, n)


@dataclass(frozen=True)
class GaussianOffline:
    """Gaussian-case closed-form paths P, Lambda, beta and mu."""

    grid: TimeGrid
    x0bar: np.ndarray   # (n,)
    P0: np.ndarray      # (n, n)
    p: np.ndarray       # (K+1, n, n)
    lam: np.ndarray     # (K+1, n, n)
    beta: np.ndarray    # (K+1,)
    mu: np.ndarray      # (K+1,)


def solve_offline(model: LinearModel, grid: TimeGrid) -> OfflineSolution:
    """Integrate the filtering Riccati paths forward and pi backward.

    The (Sigma, Phi) pair is advanced jointly so Phi sees stage-consistent
    Sigma values; S is the trapezoid cumulative of Phi'H'H Phi on the grid.
    Raises RiccatiBlowup if any path entry exceeds 1e12.
    """
    n = model.n
    K = grid.n_steps
    dt = grid.dt
    F, HtH, a2 = model.F, model.HtH, 2.0 * model.a
    GNG = model.GNinvGt

    sigma = np.empty((K + 1, n, n))
    phi = np.empty((K + 1, n, n))
    sigma[0] = 0.0
    phi[0] = np.eye(n)

    def rhs_sig_phi(y):
        sig, ph = y
        dsig = a2 + F @ sig + sig @ F.T - sig @ HtH @ sig
        dph = (F - sig @ HtH) @ ph
        return np.stack([dsig, dph])

    y = np.stack([sigma[0], phi[0]])
    for k in range(K):
        y = _rk4(y, rhs_sig_phi, dt)
        y[0] = _sym(y[0])
        sigma[k + 1] = y[0]
        phi[k + 1] = y[1]
        _check_blowup(y, "Sigma/Phi")

    integrand = np.einsum("kji,jl,klm->kim", phi, HtH, phi)
    s = _sym(_cumtrapz_from_start(integrand, dt))

    pi = np.empty((K + 1, n, n))
    pi[K] = 0.5 * (model.M_T + model.M_T.T)

    def rhs_pi(p):
        return p @ GNG @ p - p @ F - F.T @ p - model.M

    for k in range(K, 0, -1):
        pi[k - 1] = _sym(_rk4(pi[k], rhs_pi, -dt))
        _check_blowup(pi[k - 1], "pi")

    return OfflineSolution(grid=grid, sigma=sigma, phi=phi, s=s, pi=pi)


def solve_gaussian_offline(
    model: LinearModel,
    grid: TimeGrid,
    offline: OfflineSolution,
    x0bar,
    P0,
) -> GaussianOffline:
    """Gaussian-case paths, cross-checked against the general-law identities.

    P runs forward from P0; (pi, Lambda, P) run backward jointly so the
    Lambda stages see consistent coefficients.  After integration the
    algebraic identity P = Sigma + Phi (S + P0^{-1})^{-1} Phi' is verified
    at every grid node; a residual above 1e-5 raises IdentityViolation,
    which signals an integrator bug or a too-coarse grid.
    """
    n = model.n
    K = grid.n_steps
    dt = grid.dt
    x0bar = _as_vector(x0bar)
    P0 = _as_matrix(P0)
    try:
        np.linalg.cholesky(P0)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("P0 must be symmetric positive definite")

    F, H, HtH, a2 = model.F, model.H, model.HtH, 2.0 * model.a
    GNG = model.GNinvGt

    p = np.empty((K + 1, n, n))
    p[0] = 0.5 * (P0 + P0.T)

    def rhs_p(pm):
        return a2 + F @ pm + pm @ F.T - pm @ HtH @ pm

    for k in range(K):
        p[k + 1] = _sym(_rk4(p[k], rhs_p, dt))
        _check_blowup(p[k + 1], "P")

    lam = np.empty((K + 1, n, n))
    lam[K] = 0.0

    def rhs_back(y):
        pim, lm, pm = y
        dpi = pim @ GNG @ pim - pim @ F - F.T @ pim - model.M
        closed = F - pm @ HtH
        dlam = -lm @ closed - closed.T @ lm - pim @ GNG @ pim
        dp = a2 + F @ pm + pm @ F.T - pm @ HtH @ pm
        return np.stack([dpi, dlam, dp])

    y = np.stack([offline.pi[K], lam[K], p[K]])
    for k in range(K, 0, -1):
        y = _rk4(y, rhs_back, -dt)
        y[0] = _sym(y[0])
        y[1] = _sym(y[1])
        y[2] = _sym(y[2])
        lam[k - 1] = y[1]
        _check_blowup(y, "Lambda")

    # beta and mu as horizon-tail trapezoids of grid-sampled integrands.
    php = np.einsum("kij,jl,klm->kim", p, HtH, p)          # P H'H P
    beta_integrand = np.einsum("kij,kji->k", lam, a2 + php)
    beta_integrand += 2.0 * np.einsum("ij,kji->k", model.a, offline.pi)
    beta = _cumtrapz_to_end(beta_integrand, dt)

    mu_integrand = np.einsum("ij,kji->k", model.M, p)
    mu_integrand += np.einsum("kij,kji->k", offline.pi, php)
    mu = _cumtrapz_to_end(mu_integrand, dt) + np.trace(model.M_T @ p[K])

    P0inv = np.linalg.inv(P0)
    worst = 0.0
    for k in range(K + 1):
        inner = np.linalg.inv(offline.s[k] + P0inv)
        resid = p[k] - offline.sigma[k] - offline.phi[k] @ inner @ offline.phi[k].T
        worst = max(worst, float(np.max(np.abs(resid))))
    if worst > _IDENTITY_TOL:
        raise IdentityViolation(
            f"P(t) vs Sigma + Phi (S + P0^-1)^-1 Phi' residual {worst:.3e} > {_IDENTITY_TOL:.0e}"
        )

    return GaussianOffline(grid=grid, x0bar=x0bar, P0=P0, p=p, lam=lam, beta=beta, mu=mu)
