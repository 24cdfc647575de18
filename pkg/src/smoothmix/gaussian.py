"""Multivariate Gaussian primitives.

The array kernels at the top of this module broadcast over arbitrary leading
batch axes so that the mixture, root-mixture and optimizer layers can evaluate
many parameter sets in one call.  :class:`Gaussian` is the thin scalar wrapper
used by the public API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import DimensionError, UnsupportedError

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------


def cholesky_inverse(cov):
    """Return ``(L^{-1}, log|cov|)`` for a stack of SPD matrices ``(..., D, D)``."""
    chol = np.linalg.cholesky(cov)
    chol_inv = np.linalg.inv(chol)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
    return chol_inv, logdet


def precision(cov):
    """Inverse of SPD matrices via their Cholesky factors."""
    chol_inv, logdet = cholesky_inverse(cov)
    return np.swapaxes(chol_inv, -1, -2) @ chol_inv, logdet


def pdf_kernel(x, means, covs):
    """Gaussian densities at points.

    Parameters
    ----------
    x : (N, D) array
    means : (..., D) array
    covs : (..., D, D) array

    Returns
    -------
    (..., N) array of densities.
    """
    dim = means.shape[-1]
    chol_inv, logdet = cholesky_inverse(covs)
    diff = x - means[..., None, :]
    z = np.einsum("...ij,...nj->...ni", chol_inv, diff)
    maha = np.einsum("...ni,...ni->...n", z, z)
    return np.exp(-0.5 * (maha + logdet[..., None] + dim * LOG_2PI))


def derivatives_kernel(x, means, covs, order=1):
    """Densities together with gradients (and Hessians when ``order == 2``).

    Returns ``(pdf, grad)`` or ``(pdf, grad, hess)`` with shapes ``(..., N)``,
    ``(..., N, D)`` and ``(..., N, D, D)``.
    """
    dim = means.shape[-1]
    prec, logdet = precision(covs)
    diff = x - means[..., None, :]
    pd = np.einsum("...ij,...nj->...ni", prec, diff)
    maha = np.einsum("...ni,...ni->...n", diff, pd)
    dens = np.exp(-0.5 * (maha + logdet[..., None] + dim * LOG_2PI))
    grad = -pd * dens[..., None]
    if order < 2:
        return dens, grad
    hess = (pd[..., :, None] * pd[..., None, :] - prec[..., None, :, :]) * dens[..., None, None]
    return dens, grad, hess


def product_kernel(m1, c1, m2, c2):
    """Product of two Gaussian densities, ``N(m1,c1) N(m2,c2) = s N(m3,c3)``.

    Broadcasts over leading axes.  Besides ``(s, m3, c3)`` the inverse of the
    summed covariance and ``u = (c1+c2)^{-1} (m1-m2)`` are returned; the
    root-mixture Fisher information is assembled from them.

    Both the mean and covariance are written in a form that is exactly
    symmetric under swapping the two factors.
    """
    dim = m1.shape[-1]
    ksum = c1 + c2
    kinv, logdet = precision(ksum)
    delta = m1 - m2
    u = np.einsum("...ij,...j->...i", kinv, delta)
    maha = np.einsum("...i,...i->...", delta, u)
    scale = np.exp(-0.5 * (maha + logdet + dim * LOG_2PI))
    m3 = 0.5 * ((m1 - np.einsum("...ij,...j->...i", c1, u)) + (m2 + np.einsum("...ij,...j->...i", c2, u)))
    c3 = c1 @ kinv @ c2
    c3 = 0.5 * (c3 + np.swapaxes(c3, -1, -2))
    return scale, m3, c3, kinv, u


def std_normal_cdf(z):
    """Standard normal CDF computed from ``erfc`` (accurate in both tails)."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def interval_mass_kernel(means, variances, a, b):
    """``P(a < x < b)`` for 1-D Gaussians; ``a``/``b`` may be infinite."""
    sd = np.sqrt(variances)
    if a == -math.inf and b == math.inf:
        return np.ones_like(means)
    upper = std_normal_cdf((b - means) / sd) if b != math.inf else 1.0
    lower = std_normal_cdf((a - means) / sd) if a != -math.inf else 0.0
    # Use the upper tail when both endpoints sit above the mean (avoids 1 - 1).
    if a != -math.inf and b != math.inf:
        hi_tail = std_normal_cdf((means - a) / sd) - std_normal_cdf((means - b) / sd)
        return np.where(a > means, hi_tail, upper - lower)
    return upper - lower


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------


def as_points(x, dim):
    """Coerce ``x`` to ``(N, D)`` points; also report whether it was a single point.

    In one dimension a scalar is one point and a flat array is ``N`` points.
    Otherwise a length-``D`` vector is one point and ``(N, D)`` are points.
    """
    arr = np.asarray(x, dtype=float)
    if dim == 1 and arr.ndim <= 1:
        return arr.reshape(-1, 1), arr.ndim == 0
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise DimensionError(f"point has length {arr.shape[0]}, expected {dim}")
        return arr.reshape(1, dim), True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(f"points have shape {arr.shape}, expected (N, {dim})")
    return arr, False


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal density ``N(x; mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float)).copy()
        if mean.ndim != 1:
            raise DimensionError("mean must be a vector")
        dim = mean.shape[0]
        if cov.shape != (dim, dim):
            raise DimensionError(f"covariance shape {cov.shape} does not match dimension {dim}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("non-finite Gaussian parameters")
        asym = np.max(np.abs(cov - cov.T))
        if asym > 1e-12 * max(np.max(np.abs(cov)), 1e-300):
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        mean.setflags(write=False)
        cov.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def pdf(self, x):
        """Density at a point (scalar result) or at ``(N, D)`` points."""
        pts, single = as_points(x, self.dim)
        vals = pdf_kernel(pts, self.mean, self.cov)
        return float(vals[0]) if single else vals

    __call__ = pdf

    def grad(self, x):
        """Gradient ``-C^{-1}(x-m) N(x; m, C)``."""
        pts, single = as_points(x, self.dim)
        _, g = derivatives_kernel(pts, self.mean, self.cov)
        return g[0] if single else g

    def hessian(self, x):
        pts, single = as_points(x, self.dim)
        _, _, h = derivatives_kernel(pts, self.mean, self.cov, order=2)
        return h[0] if single else h

    def interval_mass(self, a=-math.inf, b=math.inf) -> float:
        return interval_mass(self, a, b)


def product(g1: Gaussian, g2: Gaussian):
    """Return ``(scale, g3)`` with ``g1(x) g2(x) == scale * g3(x)``.

    ``scale = N(0; m1 - m2, C1 + C2)``; ``g3`` has covariance
    ``(C1^{-1} + C2^{-1})^{-1}`` and the precision-weighted mean.
    """
    if g1.dim != g2.dim:
        raise DimensionError("product of Gaussians with different dimensions")
    scale, m3, c3, _, _ = product_kernel(g1.mean, g1.cov, g2.mean, g2.cov)
    assert np.isfinite(scale), "summed covariance is not positive definite"
    return float(scale), Gaussian(m3, c3)


def bilinear_expectation(M, a, b, g: Gaussian) -> float:
    """``E[(x-a)^T M (x-b)]`` for ``x ~ g``: ``tr(M C) + (m-a)^T M (m-b)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = g.dim
    if M.shape != (d, d) or a.shape != (d,) or b.shape != (d,):
        raise DimensionError("bilinear_expectation arguments do not match the Gaussian dimension")
    return float(np.trace(M @ g.cov) + (g.mean - a) @ M @ (g.mean - b))


def interval_mass(g: Gaussian, a=-math.inf, b=math.inf) -> float:
    """Probability mass of a 1-D Gaussian on ``(a, b)``."""
    if g.dim != 1:
        raise UnsupportedError("interval mass is only defined for one-dimensional Gaussians")
    a, b = float(a), float(b)
    if a > b:
        raise ValueError(f"empty interval: a={a} > b={b}")
    return float(interval_mass_kernel(g.mean[0], g.cov[0, 0], a, b))
