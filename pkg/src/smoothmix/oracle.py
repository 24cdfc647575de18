"""Numerical ground truth for the closed forms.

Nothing here uses the pairwise-product formulas: integrals are taken by
quadrature of pointwise density evaluations (adaptive Simpson in 1-D, refined
tensor Gauss-Legendre in 2-D) or by Monte Carlo.  Entropy and the
Hessian-based curvature only exist here, as comparison measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AccuracyError, UnsupportedError
from .gaussian import Gaussian, derivatives_kernel, pdf_kernel
from .mixture import GaussianMixture
from .root import RootMixture

DENSITY_FLOOR = 1e-300
SUPPORT_SIGMAS = 8.0
CHUNK = 1 << 17
ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration box and rule settings.

    ``lo``/``hi`` bound the box per axis; ``min_scale`` is the smallest
    component standard deviation, used to size the initial partition.
    """

    dim: int
    lo: np.ndarray
    hi: np.ndarray
    min_scale: float
    tol: float = 1e-12
    mc_samples: int = 1_000_000

    def __post_init__(self):
        if self.dim > 2:
            raise UnsupportedError("deterministic quadrature is limited to D <= 2; use Monte Carlo")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("support box must be finite")
        if self.tol <= 0 or self.min_scale <= 0:
            raise ValueError("tolerances and scales must be positive")

    @classmethod
    def for_components(cls, means, covs, tol=None, sigmas=SUPPORT_SIGMAS):
        means = np.asarray(means, dtype=float)
        sd = np.sqrt(np.diagonal(np.asarray(covs, dtype=float), axis1=-2, axis2=-1))
        dim = means.shape[-1]
        if tol is None:
            tol = 1e-12 if dim == 1 else 1e-10
        return cls(dim, (means - sigmas * sd).min(0), (means + sigmas * sd).max(0), float(sd.min()), tol)


# ---------------------------------------------------------------------------
# integration rules
# ---------------------------------------------------------------------------


def adaptive_simpson(fun, a, b, tol=1e-12, initial=64, max_level=50):
    """Adaptive Simpson quadrature of a vectorized ``fun`` on ``[a, b]``.

    ``fun`` maps ``(N,)`` abscissae to ``(N,)`` or ``(N, k)`` values; every
    refinement level is evaluated in one call.  Panels are accepted when
    the Richardson difference is below ``15 * tol * width / (b - a)``, or
    when it is already at the rounding level of the panel estimate (large
    integrands cannot be resolved below machine precision).
    """
    if b == a:
        return np.zeros(np.shape(fun(np.array([a])))[1:])
    edges = np.linspace(a, b, int(initial) + 1)
    left, right = edges[:-1], edges[1:]
    mid = 0.5 * (left + right)
    fl, fm, fr = fun(left), fun(mid), fun(right)
    tols = tol * (right - left) / (b - a)
    total = np.zeros(fl.shape[1:])
    for _ in range(max_level):
        lm, rm = 0.5 * (left + mid), 0.5 * (mid + right)
        flm, frm = fun(lm), fun(rm)
        # widths from the actual abscissae: a rounded midpoint must not
        # leave a fixed offset between coarse and fine estimates
        whole = _bcast((right - left) / 6.0, fl) * (fl + 4 * fm + fr)
        sl = _bcast((mid - left) / 6.0, fl) * (fl + 4 * flm + fm)
        sr = _bcast((right - mid) / 6.0, fl) * (fm + 4 * frm + fr)
        diff = sl + sr - whole
        dmax = np.abs(diff) if diff.ndim == 1 else np.abs(diff).max(axis=1)
        scale = np.abs(sl) + np.abs(sr)
        scale = scale if scale.ndim == 1 else scale.max(axis=1)
        ok = (dmax <= 15.0 * tols) | (dmax <= ROUNDOFF * scale)
        total = total + (sl[ok] + sr[ok] + diff[ok] / 15.0).sum(0)
        if ok.all():
            return total
        bad = ~ok
        left, mid, right = (
            np.concatenate([left[bad], mid[bad]]),
            np.concatenate([lm[bad], rm[bad]]),
            np.concatenate([mid[bad], right[bad]]),
        )
        fl, fm, fr = (
            np.concatenate([fl[bad], fm[bad]]),
            np.concatenate([flm[bad], frm[bad]]),
            np.concatenate([fm[bad], fr[bad]]),
        )
        tols = np.concatenate([tols[bad], tols[bad]]) * 0.5
    raise AccuracyError(f"adaptive Simpson did not reach tol={tol} within {max_level} levels")


def _bcast(w, f):
    return w if f.ndim == 1 else w[:, None]


def _gl_nodes(lo, hi, panels, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    nodes = (centers[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def gauss_legendre_2d(fun, lo, hi, tol=1e-10, panels=16, order=10, max_doublings=6):
    """Composite tensor Gauss-Legendre on a box, doubling panels until stable."""
    prev = None
    for _ in range(max_doublings + 1):
        xs, wx = _gl_nodes(lo[0], hi[0], panels, order)
        ys, wy = _gl_nodes(lo[1], hi[1], panels, order)
        total = 0.0
        step = max(1, CHUNK // ys.size)
        for start in range(0, xs.size, step):
            xb = xs[start : start + step]
            pts = np.stack(np.meshgrid(xb, ys, indexing="ij"), -1).reshape(-1, 2)
            vals = fun(pts)
            wts = (wx[start : start + step, None] * wy[None, :]).ravel()
            total = total + np.tensordot(wts, vals, axes=(0, 0))
        if prev is not None and np.max(np.abs(total - prev)) <= tol:
            return total
        prev = total
        panels *= 2
    raise AccuracyError(f"2-D Gauss-Legendre did not stabilise to tol={tol}")


def integrate(fun: Callable, qs: QuadratureSpec):
    """Integrate ``fun`` (points ``(N, D)`` -> values) over the box of ``qs``."""
    if qs.dim == 1:
        width = qs.hi[0] - qs.lo[0]
        initial = max(64, math.ceil(4 * width / qs.min_scale))

        def f1(x):
            return _chunked(fun, x[:, None])

        return adaptive_simpson(f1, qs.lo[0], qs.hi[0], qs.tol, initial=initial)
    width = float(np.max(qs.hi - qs.lo))
    panels = max(8, math.ceil(width / qs.min_scale))
    return gauss_legendre_2d(fun, qs.lo, qs.hi, qs.tol, panels=panels)


def _chunked(fun, pts):
    if pts.shape[0] <= CHUNK:
        return fun(pts)
    return np.concatenate([fun(pts[i : i + CHUNK]) for i in range(0, pts.shape[0], CHUNK)])


def _mixture_spec(f, tol=None):
    return QuadratureSpec.for_components(f.means, f.covs, tol)


# ---------------------------------------------------------------------------
# quadrature versions of the closed forms
# ---------------------------------------------------------------------------


def _mix_derivs(f: GaussianMixture, pts, order=1):
    out = derivatives_kernel(pts, f.means, f.covs, order=order)
    dens = f.weights @ out[0]
    grad = np.einsum("l,lnd->nd", f.weights, out[1])
    if order == 1:
        return dens, grad
    return dens, grad, np.einsum("l,lnij->nij", f.weights, out[2])


def mass_quadrature(f: GaussianMixture, tol=None) -> float:
    return float(integrate(lambda p: f.weights @ pdf_kernel(p, f.means, f.covs), _mixture_spec(f, tol)))


def mean_quadrature(f: GaussianMixture, tol=None) -> np.ndarray:
    def integrand(p):
        return (f.weights @ pdf_kernel(p, f.means, f.covs))[:, None] * p

    return np.atleast_1d(integrate(integrand, _mixture_spec(f, tol)))


def covariance_quadrature(f: GaussianMixture, tol=None) -> np.ndarray:
    mu = mean_quadrature(f, tol)
    d = f.dim

    def integrand(p):
        dens = f.weights @ pdf_kernel(p, f.means, f.covs)
        c = p - mu
        return (dens[:, None, None] * c[:, :, None] * c[:, None, :]).reshape(-1, d * d)

    return np.asarray(integrate(integrand, _mixture_spec(f, tol))).reshape(d, d)


def moment_quadrature_1d(f: GaussianMixture, k: int, central=True, tol=None) -> float:
    if f.dim != 1:
        raise UnsupportedError("1-D moments need a 1-D mixture")
    center = float(mean_quadrature(f, tol)[0]) if central else 0.0

    def integrand(p):
        return (f.weights @ pdf_kernel(p, f.means, f.covs)) * (p[:, 0] - center) ** k

    return float(integrate(integrand, _mixture_spec(f, tol)))


def fi_mixture_quadrature(f: GaussianMixture, tol=None) -> float:
    """``int |grad f|^2 / f`` over ``{f > 1e-300}``."""

    def integrand(p):
        dens, grad = _mix_derivs(f, p)
        safe = dens > DENSITY_FLOOR
        return np.where(safe, (grad * grad).sum(-1) / np.where(safe, dens, 1.0), 0.0)

    return float(integrate(integrand, _mixture_spec(f, tol)))


def fi_root_quadrature(rm: RootMixture, tol=None) -> float:
    """``4 int |grad r|^2`` for a normalized root mixture."""

    def integrand(p):
        _, g = derivatives_kernel(p, rm.means, rm.covs)
        grad = np.einsum("l,lnd->nd", rm.weights, g)
        return 4.0 * (grad * grad).sum(-1)

    return float(integrate(integrand, QuadratureSpec.for_components(rm.means, rm.covs, tol)))


def root_mass_quadrature(rm: RootMixture, tol=None) -> float:
    def integrand(p):
        r = rm.weights @ pdf_kernel(p, rm.means, rm.covs)
        return r * r

    return float(integrate(integrand, QuadratureSpec.for_components(rm.means, rm.covs, tol)))


def entropy_quadrature(f: GaussianMixture, tol=None) -> float:
    """Differential entropy ``-int f log f`` over ``{f > 1e-300}``."""

    def integrand(p):
        dens = f.weights @ pdf_kernel(p, f.means, f.covs)
        safe = dens > DENSITY_FLOOR
        return np.where(safe, -dens * np.log(np.where(safe, dens, 1.0)), 0.0)

    return float(integrate(integrand, _mixture_spec(f, tol)))


def curvature_quadrature(f: GaussianMixture, tol=None) -> float:
    """Squared Frobenius norm of the Hessian of ``f``, integrated."""

    def integrand(p):
        _, _, hess = _mix_derivs(f, p, order=2)
        return (hess * hess).sum((-1, -2))

    return float(integrate(integrand, _mixture_spec(f, tol)))


def curvature_objective(lo=-15.0, hi=15.0, panels=120, order=8):
    """Batched 1-D curvature functional for :func:`smoothmix.optimizer.solve`.

    Uses a fixed composite Gauss-Legendre rule so the objective is a smooth
    function of the parameters (an adaptive rule would not be).
    """
    nodes, weights = _gl_nodes(lo, hi, panels, order)
    pts = nodes[:, None]

    def objective(state):
        exp = state.expansion
        _, _, hess = derivatives_kernel(pts, exp.means, exp.covs, order=2)
        fpp = np.einsum("...l,...ln->...n", exp.weights, hess[..., 0, 0])
        return (fpp * fpp) @ weights

    return objective


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def sample_mixture(f: GaussianMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(f.n_components, size=n, p=f.weights / f.weights.sum())
    chol = np.linalg.cholesky(f.covs)
    z = rng.standard_normal((n, f.dim))
    return f.means[comp] + np.einsum("nij,nj->ni", chol[comp], z)


def sample_gaussian(g: Gaussian, n: int, rng: np.random.Generator) -> np.ndarray:
    return g.mean + rng.standard_normal((n, g.dim)) @ g.chol.T


def mc_mean(values):
    """Sample mean and its standard error along axis 0."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return values.mean(0), values.std(0, ddof=1) / math.sqrt(n)


def mc_moments(f: GaussianMixture, n=1_000_000, seed=0):
    """Monte-Carlo mean and covariance with standard errors."""
    rng = np.random.default_rng(seed)
    x = sample_mixture(f, n, rng)
    mean, mean_se = mc_mean(x)
    c = x - mean
    prods = c[:, :, None] * c[:, None, :]
    cov, cov_se = mc_mean(prods.reshape(n, -1))
    d = f.dim
    return mean, mean_se, cov.reshape(d, d), cov_se.reshape(d, d)


def mc_bilinear(M, a, b, g: Gaussian, n=1_000_000, seed=0):
    """Monte-Carlo ``E[(x-a)^T M (x-b)]`` with its standard error."""
    rng = np.random.default_rng(seed)
    x = sample_gaussian(g, n, rng)
    vals = np.einsum("ni,ij,nj->n", x - a, np.asarray(M, dtype=float), x - b)
    return mc_mean(vals)
