"""Sufficient-statistics filter for linear dynamics with a general initial law.

For linear dynamics/observation the unnormalized conditional density is
fully parameterized by the triple (xhat, rho, nu): the conditional mean,
an auxiliary statistic driving the tilted moments, and the total
unnormalized mass.  The triple evolves as

    d xhat   = (F xhat + G v) dt + Gamma(rho, t) H' (dz - H xhat dt)
    d rho    = Phi(t)' H' (dz - H (xhat - Phi(t) b(rho, t)) dt)
    d log nu = (H xhat) . dz - |H xhat|^2 dt / 2      (exact exponential)

with Gamma(rho, t) = Sigma + Phi (B - b b') Phi' the conditional
covariance.  xhat and rho use Euler-Maruyama; log nu uses the exact
exponential increment so positivity and the martingale structure of nu
hold exactly per step.  For a Gaussian initial law the xhat recursion
collapses to the classical Kalman filter with gain P(t) H'.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroMass
from .model import InitialDensity, LinearModel
from .offline import OfflineSolution
from .tilted import tilted_log_normalizer, tilted_moments


@dataclass(frozen=True)
class FilterState:
    """Sufficient statistics (xhat, rho, log nu) at grid node t_index."""

    t_index: int
    xhat: np.ndarray   # (n,)
    rho: np.ndarray    # (n,)
    log_nu: float


def init_filter(q0: InitialDensity) -> FilterState:
    """State at t = 0: xhat = mean(q0), rho = 0, log nu = log mass(q0)."""
    mass = q0.mass
    if not mass > 0.0:
        raise ZeroMass("initial density has nonpositive mass")
    return FilterState(
        t_index=0,
        xhat=q0.mean(),
        rho=np.zeros(q0.dim),
        log_nu=float(np.log(mass)),
    )


def filter_step_arrays(model, offline, q0, k, xhat, rho, log_nu, v, dz, dt):
    """One Euler-Maruyama step of the batched triple; leading dims broadcast.

    xhat, rho: (..., n); log_nu: (...); v: (..., m); dz: (..., d).
    Returns (xhat', rho', log_nu', Gamma) with Gamma evaluated at the
    pre-step statistics (left-point rule).
    """
    F, G, H = model.F, model.G, model.H
    phi_k = offline.phi[k]
    tm = tilted_moments(q0, offline.s[k], rho)
    gamma = offline.sigma[k] + np.einsum("ab,...bc,dc->...ad", phi_k, tm.cov, phi_k)

    hx = xhat @ H.T                                   # (..., d)
    drift = (xhat @ F.T + v @ G.T) * dt
    innov = dz - hx * dt
    xhat_next = xhat + drift + np.einsum("...ab,cb,...c->...a", gamma, H, innov)

    resid = dz - (xhat - tm.b @ phi_k.T) @ H.T * dt   # dz - H (xhat - Phi b) dt
    rho_next = rho + resid @ (H @ phi_k)

    log_nu_next = log_nu + np.sum(hx * dz, axis=-1) - 0.5 * np.sum(hx**2, axis=-1) * dt
    return xhat_next, rho_next, log_nu_next, gamma


def step_filter(
    state: FilterState,
    model: LinearModel,
    offline: OfflineSolution,
    q0: InitialDensity,
    v,
    dz,
    dt: float,
) -> FilterState:
    """Advance the filter over [t_k, t_k + dt] given control v and increment dz."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    dz = np.atleast_1d(np.asarray(dz, dtype=float))
    xhat, rho, log_nu, _ = filter_step_arrays(
        model, offline, q0, state.t_index, state.xhat, state.rho, state.log_nu, v, dz, dt
    )
    return FilterState(
        t_index=state.t_index + 1, xhat=xhat, rho=rho, log_nu=float(log_nu)
    )


def filter_gamma(state: FilterState, q0: InitialDensity, offline: OfflineSolution) -> np.ndarray:
    """Conditional covariance Gamma(rho(t), t) at the state's grid node."""
    k = state.t_index
    phi_k = offline.phi[k]
    tm = tilted_moments(q0, offline.s[k], state.rho)
    return offline.sigma[k] + phi_k @ tm.cov @ phi_k.T


def conditional_moments(state: FilterState, q0: InitialDensity, offline: OfflineSolution):
    """(nu, mean, cov) of the closed-form unnormalized conditional density."""
    return float(np.exp(state.log_nu)), state.xhat.copy(), filter_gamma(state, q0, offline)


def characteristic_function(
    state: FilterState, q0: InitialDensity, offline: OfflineSolution, lam
) -> complex:
    """Fourier transform of the unnormalized conditional density at frequency lam.

    Evaluated through the complex-tilted normalizer ratio

        nu exp[-lam'Sigma lam/2 + i lam'(xhat - Phi b)]
           * Z(S, rho + i Phi'lam) / Z(S, rho)

    so that lam = 0 returns nu(t) exactly.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    k = state.t_index
    sigma_k, phi_k, s_k = offline.sigma[k], offline.phi[k], offline.s[k]
    tm = tilted_moments(q0, s_k, state.rho)
    log_ratio = (
        tilted_log_normalizer(q0, s_k, state.rho + 1j * (phi_k.T @ lam))
        - tm.log_normalizer
    )
    exponent = (
        state.log_nu
        - 0.5 * lam @ sigma_k @ lam
        + 1j * lam @ (state.xhat - phi_k @ tm.b)
        + log_ratio
    )
    return complex(np.exp(exponent))


def theta_weight(
    state: FilterState, q0: InitialDensity, offline: OfflineSolution, x, log: bool = False
):
    """Density reweighting factor theta(x, t) relating q(., t) to q0.

    theta(x, t) = nu(t) exp(-(x'S x - 2 x'rho)/2) / Z(S, rho); evaluated in
    log space (pass log=True to get the log value when exp would underflow).
    """
    x = np.asarray(x, dtype=float)
    k = state.t_index
    s_k = offline.s[k]
    tm = tilted_moments(q0, s_k, state.rho)
    if q0.dim == 1:
        quad = -0.5 * s_k[0, 0] * x**2 + state.rho[0] * x
    else:
        quad = -0.5 * np.einsum("...i,ij,...j->...", x, s_k, x) + x @ state.rho
    log_theta = state.log_nu + quad - tm.log_normalizer
    return log_theta if log else np.exp(log_theta)
