"""Problem definition: linear dynamics, linear observation, quadratic cost.

The controlled state and the observation follow

    dx = (F x + G v) dt + sigma dw,        x(0) ~ q0 / mass(q0)
    dz = H x dt + db

with quadratic running cost x'Mx + v'Nv and terminal cost x'M_T x on the
horizon [0, T].  The initial law q0 is an *unnormalized* density: its total
mass is carried explicitly and never silently renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DomainTooNarrow,
    NonpositiveHorizon,
    NotPositiveDefinite,
    NotPSD,
    ShapeMismatch,
    ZeroMass,
)

_SYM_TOL = 1e-10
_PSD_TOL = 1e-10
_EDGE_DECAY = 1e-12


def _as_matrix(x) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    return a


def _as_vector(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _is_symmetric(a: np.ndarray) -> bool:
    return bool(np.max(np.abs(a - a.T)) <= _SYM_TOL * (1.0 + np.max(np.abs(a))))


def _min_eig(a: np.ndarray) -> tuple[float, float]:
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    return float(w[0]), float(np.max(np.abs(w)))


@dataclass(frozen=True)
class LinearModel:
    """Matrices of the linear-quadratic partially observed control problem.

    F (n,n) drift, G (n,m) control gain, H (d,n) observation, sigma (n,n)
    noise gain, M (n,n) running state cost, N (m,m) control cost, M_T (n,n)
    terminal cost, T > 0 horizon.  Scalars are accepted and promoted to 1x1.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    sigma: np.ndarray
    M: np.ndarray
    N: np.ndarray
    M_T: np.ndarray
    T: float

    def __post_init__(self):
        for name in ("F", "G", "H", "sigma", "M", "N", "M_T"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name)))
        object.__setattr__(self, "T", float(self.T))

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    @property
    def d(self) -> int:
        return self.H.shape[0]

    @cached_property
    def a(self) -> np.ndarray:
        """Diffusion matrix a = sigma sigma' / 2."""
        return 0.5 * self.sigma @ self.sigma.T

    @cached_property
    def HtH(self) -> np.ndarray:
        return self.H.T @ self.H

    @cached_property
    def GNinvGt(self) -> np.ndarray:
        """G N^{-1} G', the control curvature of the Riccati equations."""
        return self.G @ np.linalg.solve(self.N, self.G.T)


def validate_model(model: LinearModel) -> LinearModel:
    """Check shapes and definiteness invariants; return the model unchanged.

    Raises ShapeMismatch, NotPositiveDefinite (N), NotPSD (M, M_T or a) or
    NonpositiveHorizon.  PSD checks tolerate eigenvalues down to
    -1e-10 * (1 + |matrix|) to absorb round-off.
    """
    n = model.F.shape[0]
    if model.F.shape != (n, n):
        raise ShapeMismatch(f"F must be square, got {model.F.shape}")
    m = model.G.shape[1]
    if model.G.shape != (n, m):
        raise ShapeMismatch(f"G must be ({n}, m), got {model.G.shape}")
    d = model.H.shape[0]
    if model.H.shape != (d, n):
        raise ShapeMismatch(f"H must be (d, {n}), got {model.H.shape}")
    if model.sigma.shape != (n, n):
        raise ShapeMismatch(f"sigma must be ({n}, {n}), got {model.sigma.shape}")
    for name, mat, shape in (
        ("M", model.M, (n, n)),
        ("N", model.N, (m, m)),
        ("M_T", model.M_T, (n, n)),
    ):
        if mat.shape != shape:
            raise ShapeMismatch(f"{name} must be {shape}, got {mat.shape}")

    for name, mat in (("M", model.M), ("M_T", model.M_T), ("a", model.a)):
        if not _is_symmetric(mat):
            raise NotPSD(f"{name} is not symmetric")
        lo, scale = _min_eig(mat)
        if lo < -_PSD_TOL * (1.0 + scale):
            raise NotPSD(f"{name} has eigenvalue {lo:.3e} < 0")

    if not _is_symmetric(model.N):
        raise NotPositiveDefinite("N is not symmetric")
    lo, scale = _min_eig(model.N)
    if lo <= 1e-12 * (1.0 + scale):
        raise NotPositiveDefinite(f"N has smallest eigenvalue {lo:.3e} <= 0")

    if not model.T > 0.0:
        raise NonpositiveHorizon(f"horizon T = {model.T} must be > 0")
    return model


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_k = k * dt, k = 0..n_steps, with dt = T / n_steps."""

    n_steps: int
    horizon: float

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.horizon > 0.0:
            raise NonpositiveHorizon(f"horizon {self.horizon} must be > 0")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


class InitialDensity:
    """Base class for the unnormalized initial law q0.

    Subclasses expose the stored mass (integral of q0), the normalized mean
    and second moment, point evaluation and exact sampling from q0 / mass.
    """

    dim: int
    mass: float

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def second_moment(self) -> np.ndarray:
        """Normalized second moment E[x x'] under q0 / mass."""
        raise NotImplementedError

    def cov(self) -> np.ndarray:
        mu = self.mean()
        return self.second_moment() - np.outer(mu, mu)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Unnormalized density values q0(x); x is scalar/(...,) for dim 1."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw `size` points from the normalized law q0 / mass, shape (size, n)."""
        raise NotImplementedError


def _gauss_pdf_1d(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


@dataclass(frozen=True)
class GaussianDensity(InitialDensity):
    """q0 = mass * N(mean0, cov0); cov0 must be symmetric positive definite."""

    mean0: np.ndarray
    cov0: np.ndarray
    mass: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean0", _as_vector(self.mean0))
        object.__setattr__(self, "cov0", _as_matrix(self.cov0))
        object.__setattr__(self, "mass", float(self.mass))
        n = self.mean0.shape[0]
        if self.cov0.shape != (n, n):
            raise ShapeMismatch(f"cov must be ({n},{n}), got {self.cov0.shape}")
        if not _is_symmetric(self.cov0):
            raise NotPositiveDefinite("covariance is not symmetric")
        lo, scale = _min_eig(self.cov0)
        if lo <= 1e-12 * (1.0 + scale):
            raise NotPositiveDefinite(f"covariance eigenvalue {lo:.3e} <= 0")
        if not self.mass > 0.0:
            raise ZeroMass("mass must be > 0")

    @property
    def dim(self) -> int:
        return self.mean0.shape[0]

    @cached_property
    def _chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.cov0)

    def mean(self) -> np.ndarray:
        return self.mean0.copy()

    def second_moment(self) -> np.ndarray:
        return self.cov0 + np.outer(self.mean0, self.mean0)

    def cov(self) -> np.ndarray:
        return self.cov0.copy()

    def pdf(self, x):
        if self.dim != 1:
            raise NotImplementedError("pdf evaluation is 1-D only")
        x = np.asarray(x, dtype=float)
        return self.mass * _gauss_pdf_1d(x, self.mean0[0], self.cov0[0, 0])

    def sample(self, rng, size):
        xi = rng.standard_normal((size, self.dim))
        return self.mean0 + xi @ self._chol.T


@dataclass(frozen=True)
class MixtureDensity(InitialDensity):
    """q0(x) = sum_k w_k N(x; m_k, P_k) with positive weights.

    The stored mass is sum(w_k); the weights need not sum to one.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = _as_vector(self.weights)
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 1:
            covs = covs[:, None, None]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        k, n = means.shape
        if w.shape != (k,) or covs.shape != (k, n, n):
            raise ShapeMismatch(
                f"inconsistent mixture shapes: weights {w.shape}, means {means.shape}, covs {covs.shape}"
            )
        if np.any(w <= 0.0):
            raise ZeroMass("mixture weights must be > 0")
        for Pk in covs:
            if not _is_symmetric(Pk):
                raise NotPositiveDefinite("component covariance is not symmetric")
            lo, scale = _min_eig(Pk)
            if lo <= 1e-12 * (1.0 + scale):
                raise NotPositiveDefinite(f"component covariance eigenvalue {lo:.3e} <= 0")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def mean(self) -> np.ndarray:
        return self.weights @ self.means / self.mass

    def second_moment(self) -> np.ndarray:
        acc = np.einsum("k,kij->ij", self.weights, self.covs)
        acc += np.einsum("k,ki,kj->ij", self.weights, self.means, self.means)
        return acc / self.mass

    def pdf(self, x):
        if self.dim != 1:
            raise NotImplementedError("pdf evaluation is 1-D only")
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for wk, mk, Pk in zip(self.weights, self.means, self.covs):
            out = out + wk * _gauss_pdf_1d(x, mk[0], Pk[0, 0])
        return out

    def sample(self, rng, size):
        probs = self.weights / self.mass
        comp = rng.choice(len(self.weights), size=size, p=probs)
        xi = rng.standard_normal((size, self.dim))
        chols = np.linalg.cholesky(self.covs)
        return self.means[comp] + np.einsum("sij,sj->si", chols[comp], xi)


@dataclass(frozen=True)
class TabulatedDensity(InitialDensity):
    """1-D density tabulated on increasing nodes; integrals use trapezoid rule.

    Values must be nonnegative and decay below 1e-12 * max at both ends so
    that truncation error stays below quadrature tolerance.
    """

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = _as_vector(self.nodes)
        values = _as_vector(self.values)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.shape != values.shape or nodes.size < 3:
            raise ShapeMismatch("nodes and values must be equal-length (>= 3)")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(values < 0.0):
            raise ValueError("tabulated values must be >= 0")
        peak = float(np.max(values))
        if peak <= 0.0 or self.mass <= 1e-300:
            raise ZeroMass("tabulated density integrates to ~0")
        if values[0] >= _EDGE_DECAY * peak or values[-1] >= _EDGE_DECAY * peak:
            raise DomainTooNarrow(
                "tabulated density must decay below 1e-12 * max at both ends"
            )

    @property
    def dim(self) -> int:
        return 1

    @cached_property
    def trap_weights(self) -> np.ndarray:
        d = np.diff(self.nodes)
        w = np.zeros_like(self.nodes)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return w

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.nodes))

    def mean(self) -> np.ndarray:
        return np.array([np.trapezoid(self.nodes * self.values, self.nodes) / self.mass])

    def second_moment(self) -> np.ndarray:
        m2 = np.trapezoid(self.nodes**2 * self.values, self.nodes) / self.mass
        return np.array([[m2]])

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.nodes, self.values, left=0.0, right=0.0)

    @cached_property
    def _cdf(self) -> np.ndarray:
        d = np.diff(self.nodes)
        seg = 0.5 * (self.values[:-1] + self.values[1:]) * d
        return np.concatenate([[0.0], np.cumsum(seg)])

    def sample(self, rng, size):
        u = rng.uniform(0.0, self._cdf[-1], size=size)
        return np.interp(u, self._cdf, self.nodes)[:, None]


def density_moments(q: InitialDensity, order: int = 2):
    """Return (mass, mean, second_moment) of q up to the requested order.

    Moments are normalized (per unit mass); entries above `order` are None.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    mass = q.mass
    if not mass > 0.0:
        raise ZeroMass("density has nonpositive mass")
    mean = q.mean() if order >= 1 else None
    second = q.second_moment() if order >= 2 else None
    return mass, mean, second
