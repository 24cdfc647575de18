"""Specifications on a mixture density and their residuals.

Each spec is either an equality ``attained == target`` or a tolerance band
``lo <= attained <= hi``.  ``attained`` works on raw mixture arrays with batch
axes so the optimizer can evaluate all finite-difference probes at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from . import mixture as mx
from .errors import DimensionError, UnsupportedError

DEFAULT_TOL = 1e-6

Band = Optional[Tuple[float, float]]


def _check_target(target, band, name):
    if (target is None) == (band is None):
        raise ValueError(f"{name}: give exactly one of a target value or a band")
    if band is not None:
        lo, hi = band
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"{name}: band limits must be finite")
        if lo > hi:
            raise ValueError(f"{name}: band lower limit {lo} exceeds upper limit {hi}")
    elif not math.isfinite(target):
        raise ValueError(f"{name}: target must be finite")


def _freeze_band(band):
    return None if band is None else (float(band[0]), float(band[1]))


class _Spec:
    target: Optional[float]
    band: Band

    @property
    def is_band(self) -> bool:
        return self.band is not None

    def check_dim(self, dim: int) -> None:  # pragma: no cover - overridden
        raise NotImplementedError

    def attained(self, weights, means, covs):  # pragma: no cover - overridden
        raise NotImplementedError


@dataclass(frozen=True)
class MomentSpec(_Spec):
    """Raw or central moment.

    In one dimension orders 1..4 are available.  For ``D > 1`` only order 1
    (mean entry ``axis``) and order 2 (second-moment/covariance entry
    ``axis = (p, q)``) are supported.
    """

    order: int
    target: Optional[float] = None
    kind: str = "raw"
    axis: Union[int, Tuple[int, int]] = 0
    band: Band = None

    def __post_init__(self):
        if self.kind not in ("raw", "central"):
            raise ValueError(f"moment kind must be 'raw' or 'central', not {self.kind!r}")
        if not 1 <= self.order <= 4:
            raise UnsupportedError(f"moment order {self.order} is outside 1..4")
        axis = self.axis
        if isinstance(axis, (list, tuple)):
            axis = tuple(int(a) for a in axis)
            if len(axis) != 2:
                raise ValueError("a moment axis pair needs two indices")
        else:
            axis = int(axis)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "band", _freeze_band(self.band))
        if self.target is not None:
            object.__setattr__(self, "target", float(self.target))
        _check_target(self.target, self.band, "moment spec")

    def _pair(self):
        return self.axis if isinstance(self.axis, tuple) else (self.axis, self.axis)

    def check_dim(self, dim):
        if dim == 1:
            if self._pair() != (0, 0):
                raise DimensionError("one-dimensional moments use axis 0")
            return
        if self.order > 2:
            raise UnsupportedError("multivariate moment specs are limited to order 2")
        if self.order == 1 and isinstance(self.axis, tuple):
            raise ValueError("first-order moments take a single axis")
        if any(not 0 <= a < dim for a in self._pair()):
            raise DimensionError(f"moment axis {self.axis} out of range for D={dim}")

    def attained(self, weights, means, covs):
        dim = means.shape[-1]
        if dim == 1:
            if self.kind == "raw":
                return mx.raw_moment_1d(weights, means, covs, self.order)
            return mx.central_moment_1d(weights, means, covs, self.order)
        p, q = self._pair()
        if self.order == 1:
            mu = mx.mean(weights, means)[..., p]
            return mu if self.kind == "raw" else np.zeros_like(mu)
        cov = mx.covariance(weights, means, covs)[..., p, q]
        if self.kind == "central":
            return cov
        mu = mx.mean(weights, means)
        return cov + mu[..., p] * mu[..., q]

    def describe(self):
        return f"{self.kind} moment order {self.order} axis {self.axis}"


@dataclass(frozen=True)
class ValueSpec(_Spec):
    """Density value ``f(x)``."""

    x: Tuple[float, ...]
    target: Optional[float] = None
    band: Band = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "band", _freeze_band(self.band))
        if self.target is not None:
            object.__setattr__(self, "target", float(self.target))
            if self.target < 0:
                raise ValueError("density values cannot be negative")
        _check_target(self.target, self.band, "value spec")

    @property
    def y(self):
        return self.target

    def check_dim(self, dim):
        if len(self.x) != dim:
            raise DimensionError(f"value spec point has length {len(self.x)}, mixture has D={dim}")

    def attained(self, weights, means, covs):
        return mx.pdf(weights, means, covs, np.array([self.x]))[..., 0]

    def describe(self):
        return f"value at x={list(self.x)}"


@dataclass(frozen=True)
class DerivativeSpec(_Spec):
    """Partial derivative ``df/dx_axis`` at ``x``."""

    x: Tuple[float, ...]
    target: Optional[float] = None
    axis: int = 0
    band: Band = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "axis", int(self.axis))
        object.__setattr__(self, "band", _freeze_band(self.band))
        if self.target is not None:
            object.__setattr__(self, "target", float(self.target))
        _check_target(self.target, self.band, "derivative spec")

    @property
    def d(self):
        return self.target

    def check_dim(self, dim):
        if len(self.x) != dim:
            raise DimensionError(f"derivative spec point has length {len(self.x)}, mixture has D={dim}")
        if not 0 <= self.axis < dim:
            raise DimensionError(f"derivative axis {self.axis} out of range for D={dim}")

    def attained(self, weights, means, covs):
        return mx.grad(weights, means, covs, np.array([self.x]))[..., 0, self.axis]

    def describe(self):
        return f"derivative d/dx{self.axis} at x={list(self.x)}"


@dataclass(frozen=True)
class IntervalProbSpec(_Spec):
    """Probability of ``a < x < b`` (one-dimensional only)."""

    a: float
    b: float
    target: Optional[float] = None
    band: Band = None

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "band", _freeze_band(self.band))
        if self.a > self.b:
            raise ValueError(f"empty interval: a={self.a} > b={self.b}")
        if self.target is not None:
            object.__setattr__(self, "target", float(self.target))
            if not 0.0 <= self.target <= 1.0:
                raise ValueError("interval probability must lie in [0, 1]")
        _check_target(self.target, self.band, "interval probability spec")

    @property
    def p(self):
        return self.target

    def check_dim(self, dim):
        if dim != 1:
            raise UnsupportedError("interval probability specs are only available for D = 1")

    def attained(self, weights, means, covs):
        return mx.interval_probability(weights, means, covs, self.a, self.b)

    def describe(self):
        return f"P({self.a} < x < {self.b})"


Specification = Union[MomentSpec, ValueSpec, DerivativeSpec, IntervalProbSpec]


@dataclass(frozen=True)
class ResidualEntry:
    attained: float
    residual: float
    satisfied: bool
    is_band: bool


def residual_from_attained(spec, attained):
    """Signed residual for equalities, non-negative band violation otherwise."""
    if spec.band is None:
        return attained - spec.target
    lo, hi = spec.band
    return np.maximum(0.0, lo - attained) + np.maximum(0.0, attained - hi)


def residual(spec, f, tol=DEFAULT_TOL) -> ResidualEntry:
    """Evaluate one specification on a normalized mixture."""
    spec.check_dim(f.dim)
    value = float(spec.attained(f.weights, f.means, f.covs))
    res = float(residual_from_attained(spec, value))
    return ResidualEntry(value, res, abs(res) <= tol, spec.is_band)


def residual_vector(specs, f):
    """``(equality residuals, band violations)`` in declaration order."""
    eq, band = [], []
    for spec in specs:
        entry = residual(spec, f)
        (band if entry.is_band else eq).append(entry.residual)
    return np.array(eq, dtype=float), np.array(band, dtype=float)


def attained_matrix(specs, weights, means, covs):
    """Attained values for all specs, shape ``(..., n_specs)``."""
    batch = weights.shape[:-1]
    if not specs:
        return np.zeros(batch + (0,))
    return np.stack([np.broadcast_to(s.attained(weights, means, covs), batch) for s in specs], axis=-1)


def _admits_zero(spec):
    if spec.band is None:
        return spec.target == 0.0
    return spec.band[0] <= 0.0 <= spec.band[1]


def fixes_scale(spec) -> bool:
    """Whether ``spec`` rules out widening the density without bound.

    Widening drives density values, derivatives and finite-interval masses to
    zero and blows up even-order moments; means, odd central moments and
    half-line probabilities can be kept fixed while widening.
    """
    if isinstance(spec, MomentSpec):
        if spec.order == 1:
            return False
        if spec.order % 2 == 1:
            return not _admits_zero(spec)
        return True
    if isinstance(spec, IntervalProbSpec):
        return math.isfinite(spec.a) and math.isfinite(spec.b) and not _admits_zero(spec)
    return not _admits_zero(spec)
