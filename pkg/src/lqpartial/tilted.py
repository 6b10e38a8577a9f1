"""Moments of the initial law under an exponential tilt.

The conditional-density formulas are driven by the tilted integrals

    Z(S, rho) = int exp(-x'Sx/2 + x'rho) q0(x) dx
    b(rho, t) = int x  exp(...) q0 dx / Z        (tilted mean)
    B(rho, t) = int xx' exp(...) q0 dx / Z       (tilted second moment)

with S = S(t) from the offline paths.  All normalizers are handled in log
space: along filter paths the tilt spans hundreds of orders of magnitude.

Gaussian and mixture laws have closed forms (conjugate Gaussian algebra
with per-component evidence reweighting); tabulated 1-D laws use trapezoid
quadrature with log-sum-exp accumulation.  `rho` may carry leading batch
dimensions, shape (..., n); results broadcast accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularTilt, Underflow
from .model import (
    GaussianDensity,
    InitialDensity,
    MixtureDensity,
    TabulatedDensity,
    _as_matrix,
)

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class TiltedMoments:
    """Log normalizer, tilted mean b and tilted second moment B."""

    log_normalizer: np.ndarray  # (...,)
    b: np.ndarray               # (..., n)
    B: np.ndarray               # (..., n, n)

    @property
    def cov(self) -> np.ndarray:
        """B - b b', the covariance of the tilted law."""
        return self.B - self.b[..., :, None] * self.b[..., None, :]


def _tilt_matrix(S: np.ndarray, cov: np.ndarray, label: str):
    """Return (A, Ainv, logdet(I + cov S)) for A = S + cov^{-1}."""
    cov_inv = np.linalg.inv(cov)
    A = S + cov_inv
    if np.linalg.cond(A) > _COND_LIMIT:
        raise SingularTilt(f"{label}: condition number of (S + P^-1) exceeds {_COND_LIMIT:.0e}")
    Ainv = np.linalg.inv(A)
    Ainv = 0.5 * (Ainv + Ainv.T)
    sign, logdet = np.linalg.slogdet(np.eye(cov.shape[0]) + cov @ S)
    if sign <= 0.0:
        raise SingularTilt(f"{label}: det(I + P S) is not positive")
    return cov_inv, Ainv, logdet


def _gaussian_component(S, rho, mean, cov, log_weight, label):
    """Tilted (logZ, b, Ainv) of a single weighted Gaussian component."""
    cov_inv, Ainv, logdet = _tilt_matrix(S, cov, label)
    c = rho + cov_inv @ mean
    b = c @ Ainv
    quad = 0.5 * np.sum(c * b, axis=-1)
    log_z = log_weight - 0.5 * logdet + quad - 0.5 * float(mean @ cov_inv @ mean)
    return log_z, b, Ainv


def tilted_moments(q0: InitialDensity, S, rho) -> TiltedMoments:
    """Evaluate (log Z, b, B) for the law q0 tilted by exp(-x'Sx/2 + x'rho).

    S must be symmetric positive semidefinite; rho has shape (..., n).
    Raises SingularTilt when a tilted precision is numerically singular and
    Underflow when every tilted weight is exactly zero even in log space.
    """
    S = _as_matrix(S)
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1] != q0.dim:
        raise ValueError(f"rho must have trailing dimension {q0.dim}")

    if isinstance(q0, GaussianDensity):
        log_z, b, Ainv = _gaussian_component(
            S, rho, q0.mean0, q0.cov0, np.log(q0.mass), "gaussian"
        )
        B = Ainv + b[..., :, None] * b[..., None, :]
        return TiltedMoments(log_normalizer=log_z, b=b, B=B)

    if isinstance(q0, MixtureDensity):
        parts = [
            _gaussian_component(S, rho, mk, Pk, np.log(wk), f"mixture component {k}")
            for k, (wk, mk, Pk) in enumerate(zip(q0.weights, q0.means, q0.covs))
        ]
        log_zs = np.stack([p[0] for p in parts])          # (K, ...)
        bs = np.stack([p[1] for p in parts])              # (K, ..., n)
        m = np.max(log_zs, axis=0)
        if not np.all(np.isfinite(m)):
            raise Underflow("all mixture tilted weights underflow")
        rel = np.exp(log_zs - m)                          # (K, ...)
        total = np.sum(rel, axis=0)
        log_z = m + np.log(total)
        w = rel / total                                   # (K, ...)
        b = np.einsum("k...,k...i->...i", w, bs)
        Bs = np.stack(
            [p[2] + p[1][..., :, None] * p[1][..., None, :] for p in parts]
        )                                                 # (K, ..., n, n)
        B = np.einsum("k...,k...ij->...ij", w, Bs)
        return TiltedMoments(log_normalizer=log_z, b=b, B=B)

    if isinstance(q0, TabulatedDensity):
        x = q0.nodes
        with np.errstate(divide="ignore"):
            base = np.log(q0.values) + np.log(q0.trap_weights)
        expo = -0.5 * S[0, 0] * x**2 + rho[..., 0, None] * x   # (..., J)
        log_int = base + expo
        m = np.max(log_int, axis=-1)
        if not np.all(np.isfinite(m)):
            raise Underflow("all tabulated tilted weights underflow")
        w = np.exp(log_int - m[..., None])
        total = np.sum(w, axis=-1)
        log_z = m + np.log(total)
        wn = w / total[..., None]
        b1 = np.sum(wn * x, axis=-1)
        B1 = np.sum(wn * x**2, axis=-1)
        return TiltedMoments(
            log_normalizer=log_z,
            b=b1[..., None],
            B=B1[..., None, None],
        )

    raise TypeError(f"unsupported density type {type(q0).__name__}")


def tilted_log_normalizer(q0: InitialDensity, S, rho) -> np.ndarray:
    """log Z(S, rho) for possibly complex rho (characteristic-function tilts).

    The bilinear Gaussian algebra extends verbatim to complex rho; the
    tabulated path accumulates the complex phase under a real log-sum-exp
    shift.  Returns a complex scalar/array matching rho's batch shape.
    """
    S = _as_matrix(S)
    rho = np.asarray(rho)

    if isinstance(q0, (GaussianDensity, MixtureDensity)):
        if isinstance(q0, GaussianDensity):
            comps = [(q0.mass, q0.mean0, q0.cov0)]
        else:
            comps = list(zip(q0.weights, q0.means, q0.covs))
        log_zs = []
        for k, (wk, mk, Pk) in enumerate(comps):
            cov_inv, Ainv, logdet = _tilt_matrix(S, Pk, f"component {k}")
            c = rho + cov_inv @ mk
            quad = 0.5 * np.sum(c * (c @ Ainv), axis=-1)
            log_zs.append(
                np.log(wk) - 0.5 * logdet + quad - 0.5 * float(mk @ cov_inv @ mk)
            )
        stacked = np.stack(log_zs)
        m = np.max(stacked.real, axis=0)
        return m + np.log(np.sum(np.exp(stacked - m), axis=0))

    if isinstance(q0, TabulatedDensity):
        x = q0.nodes
        with np.errstate(divide="ignore"):
            base = np.log(q0.values) + np.log(q0.trap_weights)
        expo = -0.5 * S[0, 0] * x**2 + rho[..., 0, None] * x
        log_int = base + expo
        m = np.max(log_int.real, axis=-1)
        if not np.all(np.isfinite(m)):
            raise Underflow("all tabulated tilted weights underflow")
        total = np.sum(np.exp(log_int - m[..., None]), axis=-1)
        return m + np.log(total)

    raise TypeError(f"unsupported density type {type(q0).__name__}")


def gamma_mat(q0: InitialDensity, sigma_t, phi_t, s_t, rho) -> np.ndarray:
    """Conditional covariance Gamma(rho, t) = Sigma + Phi (B - b b') Phi'.

    The offline samples (sigma_t, phi_t, s_t) must come from one consistent
    grid node.  rho may be batched; the result is symmetric PSD.
    """
    sigma_t = _as_matrix(sigma_t)
    phi_t = _as_matrix(phi_t)
    tm = tilted_moments(q0, s_t, rho)
    gam = sigma_t + np.einsum("ab,...bc,dc->...ad", phi_t, tm.cov, phi_t)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))
