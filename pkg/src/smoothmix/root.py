"""Root mixtures: Gaussian sums whose square is a Gaussian mixture density.

For ``r(x) = sum_i v_i N(x; rho_i, P_i)`` every pairwise product
``r_i r_j = s_ij N(x; m_ij, S_ij)`` is Gaussian, which gives in closed form

* the squared norm ``int r^2 = v^T G v`` with ``G_ij = s_ij``,
* the exact expansion of ``r^2`` into ``R (R + 1) / 2`` mixture components,
* the Fisher information of ``f = r^2`` as ``4 v^T T v`` where
  ``T_ij = int grad r_i . grad r_j``.

With ``K = P_i + P_j`` and ``u = K^{-1} (rho_i - rho_j)`` the gradient
overlap reduces to ``T_ij = s_ij (tr K^{-1} - u^T u)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import quasi_newton
from .errors import ContractError, DimensionError, FitError, NumericError
from .gaussian import Gaussian, as_points, derivatives_kernel, pdf_kernel, product_kernel
from .mixture import GaussianMixture
from .params import ThetaLayout

NORM_TOL = 1e-10


class PairTerms(NamedTuple):
    gram: np.ndarray  # (..., R, R)
    grad_overlap: np.ndarray  # (..., R, R)
    means: np.ndarray  # (..., R, R, D)
    covs: np.ndarray  # (..., R, R, D, D)


def pair_terms(means, covs) -> PairTerms:
    """All pairwise products of root components; broadcasts over batch axes."""
    scale, m3, c3, kinv, u = product_kernel(
        means[..., :, None, :], covs[..., :, None, :, :], means[..., None, :, :], covs[..., None, :, :, :]
    )
    trace = np.trace(kinv, axis1=-2, axis2=-1)
    overlap = scale * (trace - np.einsum("...i,...i->...", u, u))
    return PairTerms(scale, overlap, m3, c3)


def quadratic(v, mat):
    return np.einsum("...i,...ij,...j->...", v, mat, v)


class Expansion(NamedTuple):
    weights: np.ndarray  # (..., L), sums to one
    means: np.ndarray  # (..., L, D)
    covs: np.ndarray  # (..., L, D, D)
    weight_sum: np.ndarray  # sum of emitted weights before renormalization
    pruned_mass: np.ndarray


def expansion_kernel(v, terms: PairTerms, prune_rel_threshold=0.0) -> Expansion:
    """Expand ``(sum v_i r_i)^2`` over pairs ``i <= j``.

    Pruned pairs keep their slot with weight zero so batch shapes stay fixed.
    """
    n = v.shape[-1]
    iu, ju = np.triu_indices(n)
    mult = np.where(iu == ju, 1.0, 2.0)
    w = mult * v[..., iu] * v[..., ju] * terms.gram[..., iu, ju]
    total = w.sum(-1)
    if prune_rel_threshold > 0:
        keep = w >= prune_rel_threshold * w.max(-1, keepdims=True)
        w = np.where(keep, w, 0.0)
    kept = w.sum(-1)
    return Expansion(
        w / kept[..., None],
        terms.means[..., iu, ju, :],
        terms.covs[..., iu, ju, :, :],
        total,
        total - kept,
    )


def component_count(n_root: int) -> int:
    """Mixture components produced by fully expanding ``n_root`` root components."""
    if n_root < 1:
        raise ValueError("need at least one root component")
    return n_root * (n_root + 1) // 2


def inverse_count(n_mix: int) -> int:
    """Smallest number of root components whose expansion has ``>= n_mix`` components."""
    if n_mix < 1:
        raise ValueError("need at least one mixture component")
    r = (math.isqrt(8 * n_mix + 1) - 1) // 2
    return r if component_count(r) >= n_mix else r + 1


@dataclass(frozen=True, eq=False)
class RootMixture:
    """``r(x) = sum_i v_i N(x; rho_i, P_i)`` with ``v_i > 0``."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        c = np.asarray(self.covs, dtype=float)
        if c.ndim == 1:
            c = c[:, None, None]
        if v.ndim != 1 or m.shape[0] != v.shape[0] or c.shape != (v.shape[0], m.shape[1], m.shape[1]):
            raise DimensionError(f"inconsistent root-mixture shapes {v.shape}, {m.shape}, {c.shape}")
        if v.shape[0] < 1:
            raise ValueError("a root mixture needs at least one component")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("root-mixture weights must be positive and finite")
        # validates each covariance
        for mk, ck in zip(m, c):
            Gaussian(mk, ck)
        for arr in (v, m, c):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", v)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)
        if self.normalized:
            norm2 = quadratic(v, pair_terms(m, c).gram)
            if abs(norm2 - 1.0) > NORM_TOL:
                raise ContractError(f"root mixture flagged normalized but v^T G v = {norm2:.15g}")

    @classmethod
    def from_components(cls, components, normalized=False):
        components = list(components)
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
        return [(float(v), Gaussian(m, c)) for v, m, c in zip(self.weights, self.means, self.covs)]

    def terms(self) -> PairTerms:
        return pair_terms(self.means, self.covs)

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        vals = self.weights @ pdf_kernel(pts, self.means, self.covs)
        return float(vals[0]) if single else vals

    def grad(self, x):
        pts, single = as_points(x, self.dim)
        _, g = derivatives_kernel(pts, self.means, self.covs)
        out = np.einsum("l,lnd->nd", self.weights, g)
        return out[0] if single else out

    def _require_normalized(self, what):
        if not self.normalized:
            raise ContractError(f"{what} requires a normalized root mixture; call normalize() first")


def gram_matrix(rm: RootMixture) -> np.ndarray:
    """``G_ij = int r_i r_j dx = N(0; rho_i - rho_j, P_i + P_j)``."""
    return rm.terms().gram


def normalize(rm: RootMixture) -> RootMixture:
    """Scale the weights onto the unit sphere, ``v^T G v = 1``."""
    norm2 = quadratic(rm.weights, gram_matrix(rm))
    if not np.isfinite(norm2) or norm2 <= 0:
        raise NumericError(f"root-mixture squared norm is {norm2}")
    if rm.normalized and abs(norm2 - 1.0) <= 1e-15:
        return rm
    return RootMixture(rm.weights / math.sqrt(norm2), rm.means, rm.covs, normalized=True)


def expand(rm: RootMixture, prune_rel_threshold: float = 0.0, full_output: bool = False):
    """Exact mixture ``f = r^2``.

    Pairs whose weight falls below ``prune_rel_threshold`` times the largest
    pair weight are dropped and the rest rescaled to unit sum.  With
    ``full_output`` a dict with ``weight_sum`` (before rescaling) and
    ``pruned_mass`` is returned as well.
    """
    rm._require_normalized("expand")
    if prune_rel_threshold < 0:
        raise ValueError("prune threshold must be non-negative")
    exp = expansion_kernel(rm.weights, rm.terms(), prune_rel_threshold)
    keep = exp.weights > 0
    mix = GaussianMixture(exp.weights[keep], exp.means[keep], exp.covs[keep]).validated()
    if full_output:
        return mix, {"weight_sum": float(exp.weight_sum), "pruned_mass": float(exp.pruned_mass)}
    return mix


def fisher_information_kernel(v, terms: PairTerms):
    """Fisher information of ``(r / |r|)^2`` for unnormalized weights ``v``."""
    return 4.0 * quadratic(v, terms.grad_overlap) / quadratic(v, terms.gram)


def fisher_information_root(rm: RootMixture) -> float:
    """Closed-form ``4 int |grad r|^2 dx`` of a normalized root mixture."""
    rm._require_normalized("fisher_information_root")
    return float(4.0 * quadratic(rm.weights, rm.terms().grad_overlap))


def grad_overlap_matrix(rm: RootMixture) -> np.ndarray:
    """``T_ij = int grad r_i . grad r_j dx``."""
    return rm.terms().grad_overlap


def split_to(rm: RootMixture, n_root: int) -> RootMixture:
    """Represent ``rm`` with ``n_root`` components without changing ``r``.

    The heaviest component is repeatedly split into two identical halves.
    """
    if n_root < rm.n_components:
        raise ValueError("cannot split into fewer components")
    v, m, c = list(rm.weights), list(rm.means), list(rm.covs)
    while len(v) < n_root:
        k = int(np.argmax(v))
        v[k] *= 0.5
        v.append(v[k])
        m.append(m[k])
        c.append(c[k])
    return RootMixture(np.array(v), np.array(m), np.array(c), normalized=rm.normalized)


def default_grid(target: GaussianMixture, n_1d=201, n_2d=41):
    """Regular grid over the target's +-5 sigma box."""
    sd = np.sqrt(np.diagonal(target.covs, axis1=1, axis2=2))
    lo = (target.means - 5 * sd).min(0)
    hi = (target.means + 5 * sd).max(0)
    if target.dim == 1:
        return np.linspace(lo[0], hi[0], n_1d)[:, None]
    axes = [np.linspace(a, b, n_2d) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, target.dim)


def fit_root_mixture(target: GaussianMixture, n_root: int, grid=None, init: RootMixture | None = None,
                     maxiter=500, gtol=1e-10):
    """Least-squares fit of ``r^2`` to ``target`` on a grid (initialization aid).

    Without ``init`` two starts are tried and the better fit kept: components
    equally spaced along the target's +-2 sd range (first axis in 2-D) with
    covariance ``2 * cov(target) / n_root``, and the ``n_root - 1`` fit with
    its heaviest component split in two.  The second start makes the grid
    residual non-increasing in ``n_root``.  No optimality guarantee.
    """
    if n_root < 1:
        raise ValueError("n_root must be at least 1")
    if not target.normalized:
        raise ContractError("target mixture must be normalized")
    if target.dim > 2:
        raise ValueError("fitting is only supported for D <= 2")
    pts = default_grid(target) if grid is None else as_points(grid, target.dim)[0]
    if init is not None:
        if init.n_components != n_root or init.dim != target.dim:
            raise ValueError("init does not match the requested shape")
        return _fit(target, pts, init, maxiter, gtol)[0]
    best = None
    for k in range(1, n_root + 1):
        fits = [_fit(target, pts, _spread_init(target, k), maxiter, gtol)]
        if best is not None:
            fits.append(_fit(target, pts, split_to(best[0], k), maxiter, gtol))
        best = min(fits, key=lambda fit: fit[1])
    return best[0]


def _spread_init(target, n_root):
    mu = target.mean()
    cov = target.covariance()
    sd = np.sqrt(np.diag(cov))
    offsets = np.linspace(-2.0, 2.0, n_root) if n_root > 1 else np.zeros(1)
    means = np.tile(mu, (n_root, 1))
    means[:, 0] += offsets * sd[0]
    covs = np.tile(2.0 * cov / n_root if n_root > 1 else 2.0 * cov, (n_root, 1, 1))
    return RootMixture(np.ones(n_root), means, covs)


def _fit(target, pts, init, maxiter, gtol):
    """Run the grid least-squares fit from ``init``; returns ``(rm, objective)``."""
    values = target.pdf(pts)
    layout = ThetaLayout(target.dim, init.n_components)
    theta0 = layout.encode(init.weights, init.means, init.covs)
    lower, upper = layout.bounds(50.0, -6.0)
    weight = 1.0 / max(values.max(), 1e-300) ** 2

    def batch_obj(theta):
        v, means, covs = layout.arrays(theta)
        terms = pair_terms(means, covs)
        v = v / np.sqrt(quadratic(v, terms.gram))[..., None]
        r = np.einsum("...l,...ln->...n", v, pdf_kernel(pts, means, covs))
        return weight * ((r * r - values) ** 2).sum(-1)

    res = quasi_newton.minimize(batch_obj, np.clip(theta0, lower, upper), lower, upper, gtol=gtol, maxiter=maxiter)
    if not np.isfinite(res.fun):
        raise FitError("root-mixture fit produced a non-finite objective", {"status": res.status, "nit": res.nit})
    v, means, covs = layout.arrays(res.x)
    return normalize(RootMixture(v, means, covs)), float(res.fun)
