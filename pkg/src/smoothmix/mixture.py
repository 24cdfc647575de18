"""Gaussian mixtures in the density space.

Every quantity a specification can refer to (density values, gradients,
moments, interval probabilities) has a closed form here.  The ``*_kernel``
functions take raw ``(weights, means, covs)`` arrays with optional leading
batch axes; :class:`GaussianMixture` wraps a single parameter set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ContractError, DimensionError, UnsupportedError
from .gaussian import Gaussian, as_points, derivatives_kernel, interval_mass_kernel, pdf_kernel

# E[y^k] for y ~ N(0, s2), k = 0..4
_GAUSS_CENTRAL = (
    lambda s2: np.ones_like(s2),
    lambda s2: np.zeros_like(s2),
    lambda s2: s2,
    lambda s2: np.zeros_like(s2),
    lambda s2: 3.0 * s2**2,
)


def pdf(weights, means, covs, x):
    """Mixture density at ``(N, D)`` points; batch shape ``(...)`` -> ``(..., N)``."""
    return np.einsum("...l,...ln->...n", weights, pdf_kernel(x, means, covs))


def grad(weights, means, covs, x):
    _, g = derivatives_kernel(x, means, covs)
    return np.einsum("...l,...lnd->...nd", weights, g)


def mean(weights, means):
    return np.einsum("...l,...ld->...d", weights, means)


def covariance(weights, means, covs):
    mu = mean(weights, means)
    second = np.einsum("...l,...lij->...ij", weights, covs + means[..., :, None] * means[..., None, :])
    return second - mu[..., :, None] * mu[..., None, :]


def raw_moment_1d(weights, means, covs, k):
    """``E[x^k]`` of a 1-D mixture, ``k <= 4``."""
    return shifted_moment_1d(weights, means, covs, k, 0.0)


def central_moment_1d(weights, means, covs, k):
    mu = mean(weights, means)[..., 0]
    return shifted_moment_1d(weights, means, covs, k, mu)


def shifted_moment_1d(weights, means, covs, k, center):
    """``E[(x - center)^k]`` via per-component binomial expansion."""
    if not 0 <= k <= 4:
        raise UnsupportedError(f"moments are implemented up to order 4, got {k}")
    m = means[..., 0] - np.asarray(center)[..., None]
    s2 = covs[..., 0, 0]
    per = sum(comb(k, j) * m ** (k - j) * _GAUSS_CENTRAL[j](s2) for j in range(k + 1))
    return np.einsum("...l,...l->...", weights, per)


def interval_probability(weights, means, covs, a, b):
    masses = interval_mass_kernel(means[..., 0], covs[..., 0, 0], a, b)
    return np.einsum("...l,...l->...", weights, masses)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of Gaussians ``f(x) = sum_i w_i N(x; m_i, C_i)``.

    Parameters are held as arrays: ``weights`` ``(L,)``, ``means`` ``(L, D)``
    and ``covs`` ``(L, D, D)``.  ``normalized`` is only set by
    :meth:`validated` (or a constructor that has checked it).
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        c = np.asarray(self.covs, dtype=float)
        if c.ndim == 1:
            c = c[:, None, None]
        if w.ndim != 1 or m.shape[0] != w.shape[0] or c.shape != (w.shape[0], m.shape[1], m.shape[1]):
            raise DimensionError(
                f"inconsistent mixture shapes: weights {w.shape}, means {m.shape}, covs {c.shape}"
            )
        if w.shape[0] < 1:
            raise ValueError("a mixture needs at least one component")
        for arr in (w, m, c):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)
        if self.normalized:
            _check_normalized(w)

    @classmethod
    def from_components(cls, components, normalized=False):
        """Build from ``(weight, Gaussian)`` pairs."""
        components = list(components)
        dims = {g.dim for _, g in components}
        if len(dims) != 1:
            raise DimensionError(f"components have mixed dimensions {sorted(dims)}")
        return cls(
            np.array([w for w, _ in components], dtype=float),
            np.stack([g.mean for _, g in components]),
            np.stack([g.cov for _, g in components]),
            normalized=normalized,
        )

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def components(self):
        return [(float(w), Gaussian(m, c)) for w, m, c in zip(self.weights, self.means, self.covs)]

    def validated(self) -> "GaussianMixture":
        """Return a copy flagged ``normalized`` after checking positivity and unit sum."""
        _check_normalized(self.weights)
        return GaussianMixture(self.weights, self.means, self.covs, normalized=True)

    def pdf(self, x):
        pts, single = as_points(x, self.dim)
        vals = pdf(self.weights, self.means, self.covs, pts)
        return float(vals[0]) if single else vals

    __call__ = pdf

    def grad(self, x):
        pts, single = as_points(x, self.dim)
        g = grad(self.weights, self.means, self.covs, pts)
        return g[0] if single else g

    def mean(self) -> np.ndarray:
        return mean(self.weights, self.means)

    def covariance(self) -> np.ndarray:
        return covariance(self.weights, self.means, self.covs)

    def raw_moment_1d(self, k: int) -> float:
        self._require_1d("raw moments")
        return float(raw_moment_1d(self.weights, self.means, self.covs, k))

    def central_moment_1d(self, k: int) -> float:
        self._require_1d("central moments")
        if not 1 <= k <= 4:
            raise UnsupportedError(f"central moments are implemented for orders 1..4, got {k}")
        return float(central_moment_1d(self.weights, self.means, self.covs, k))

    def interval_probability(self, a=-math.inf, b=math.inf) -> float:
        self._require_1d("interval probabilities")
        a, b = float(a), float(b)
        if a > b:
            raise ValueError(f"empty interval: a={a} > b={b}")
        return float(interval_probability(self.weights, self.means, self.covs, a, b))

    def _require_1d(self, what):
        if self.dim != 1:
            raise UnsupportedError(f"{what} are only available for one-dimensional mixtures")


def _check_normalized(w):
    if np.any(w <= 0):
        raise ContractError("normalized mixtures need strictly positive weights")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ContractError(f"weights sum to {w.sum():.15g}, not 1")
