"""Smoothest Gaussian mixture under specifications.

The search runs over root mixtures.  A parameter vector is decoded to a
root mixture on the unit sphere, its Fisher information is taken in closed
form, and the specifications are evaluated on the exactly expanded mixture.
Constraints enter through an augmented Lagrangian whose inner problems are
solved by :func:`smoothmix.quasi_newton.minimize`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import constraints as cons
from . import mixture as mx
from . import quasi_newton as qn
from .constraints import DerivativeSpec, IntervalProbSpec, MomentSpec, ValueSpec
from .errors import DivergenceError, InfeasibleError
from .mixture import GaussianMixture
from .params import ThetaLayout
from .root import (
    Expansion,
    PairTerms,
    RootMixture,
    expansion_kernel,
    fisher_information_kernel,
    pair_terms,
    quadratic,
    split_to,
)

log = logging.getLogger(__name__)

FI_TIE = 1e-10
# after reaching eq_tol, extra multiplier updates to tighten feasibility
POLISH_FACTOR = 1e-6
POLISH_STEPS = 8
# relative size of an outward gradient at a bound that counts as "still decreasing"
DIVERGENCE_SLOPE = 1e-6
DILATION_STEP = math.log(2.0)
DILATION_TRIES = 12


@dataclass
class Options:
    max_outer: int = 30
    max_inner: int = 200
    mu0: float = 10.0
    penalty_growth: float = 10.0
    eq_tol: float = 1e-6
    grad_tol: float = 1e-8
    fd_step: float = 1e-6
    multistart: int = 5
    seed: int = 0
    prune_threshold: Optional[float] = None
    param_bound: float = 50.0
    log_scale_floor: float = -6.0
    max_penalty: float = 1e10

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("seed", "prune_threshold", "log_scale_floor"):
                continue
            if value <= 0:
                raise ValueError(f"option {f.name} must be positive, got {value}")
        if self.prune_threshold is not None and self.prune_threshold < 0:
            raise ValueError("prune_threshold must be non-negative")

    def prune_for(self, n_root: int) -> float:
        if self.prune_threshold is not None:
            return self.prune_threshold
        return 0.0 if n_root <= 6 else 1e-12


@dataclass
class Problem:
    dim: int
    n_root: int
    specs: Sequence = ()
    options: Options = field(default_factory=Options)

    def __post_init__(self):
        if self.dim < 1 or self.n_root < 1:
            raise ValueError("dim and n_root must be at least 1")
        self.specs = tuple(self.specs)
        for spec in self.specs:
            spec.check_dim(self.dim)


@dataclass
class Solution:
    root_mixture: RootMixture
    mixture: GaussianMixture
    fisher_information: float
    residuals: list
    converged: bool
    outer_iterations: int
    inner_iterations: int
    start_index: int
    diverged: bool = False
    status: str = ""
    pruned_mass: float = 0.0
    weight_sum: float = 1.0
    bound_hits: list = field(default_factory=list)
    theta: Optional[np.ndarray] = None
    history: list = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        return max((abs(r.residual) for r in self.residuals), default=0.0)


class BatchState(NamedTuple):
    weights: np.ndarray  # root weights on the unit sphere, (..., R)
    means: np.ndarray
    covs: np.ndarray
    terms: PairTerms
    expansion: Expansion
    fisher: np.ndarray  # (...,)
    attained: np.ndarray  # (..., n_specs)


class Evaluator:
    """Decode parameters and evaluate objective and specs, batched over rows."""

    def __init__(self, problem: Problem, objective: Optional[Callable] = None):
        self.problem = problem
        self.layout = ThetaLayout(problem.dim, problem.n_root)
        self.specs = problem.specs
        self.prune = problem.options.prune_for(problem.n_root)
        self.objective = objective
        eq = [i for i, s in enumerate(self.specs) if s.band is None]
        bd = [i for i, s in enumerate(self.specs) if s.band is not None]
        self.eq_idx = np.array(eq, dtype=int)
        self.band_idx = np.array(bd, dtype=int)
        self.targets = np.array([self.specs[i].target for i in eq], dtype=float)
        self.lo = np.array([self.specs[i].band[0] for i in bd], dtype=float)
        self.hi = np.array([self.specs[i].band[1] for i in bd], dtype=float)
        self.scale_fixed = any(cons.fixes_scale(s) for s in self.specs)

    def state(self, theta) -> BatchState:
        v, means, covs = self.layout.arrays(theta)
        terms = pair_terms(means, covs)
        v = v / np.sqrt(quadratic(v, terms.gram))[..., None]
        exp = expansion_kernel(v, terms, self.prune)
        fisher = fisher_information_kernel(v, terms)
        attained = cons.attained_matrix(self.specs, exp.weights, exp.means, exp.covs)
        return BatchState(v, means, covs, terms, exp, fisher, attained)

    def objective_values(self, st: BatchState):
        if self.objective is None:
            return st.fisher
        return self.objective(st)

    def constraint_values(self, st: BatchState):
        """``(c_eq, h)`` with equalities ``c_eq = 0`` and inequalities ``h <= 0``."""
        c = st.attained[..., self.eq_idx] - self.targets
        g = st.attained[..., self.band_idx]
        h = np.concatenate([self.lo - g, g - self.hi], axis=-1)
        return c, h

    def violation(self, st: BatchState):
        c, h = self.constraint_values(st)
        parts = [np.abs(c), np.maximum(h, 0.0)]
        return np.max(np.concatenate(parts, axis=-1), axis=-1, initial=0.0)

    def root_mixture(self, theta) -> RootMixture:
        return decode(theta, self.problem.dim, self.problem.n_root)


def decode(theta, dim: int, n_root: int) -> RootMixture:
    """Parameter vector -> normalized root mixture."""
    layout = ThetaLayout(dim, n_root)
    v, means, covs = layout.arrays(theta)
    terms = pair_terms(means, covs)
    v = v / math.sqrt(quadratic(v, terms.gram))
    return RootMixture(v, means, covs, normalized=True)


def encode(rm: RootMixture) -> np.ndarray:
    return ThetaLayout(rm.dim, rm.n_components).encode(rm.weights, rm.means, rm.covs)


def objective(theta, dim: int, n_root: int) -> float:
    """Closed-form Fisher information of the decoded root mixture."""
    layout = ThetaLayout(dim, n_root)
    v, means, covs = layout.arrays(theta)
    return float(fisher_information_kernel(v, pair_terms(means, covs)))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def spec_range(specs, dim):
    """Per-axis ``(lo, hi)`` suggested by the specifications."""
    pts = [s.x for s in specs if isinstance(s, (ValueSpec, DerivativeSpec))]
    for s in specs:
        if isinstance(s, IntervalProbSpec):
            pts.extend((e,) for e in (s.a, s.b) if math.isfinite(e))
    if pts:
        arr = np.array(pts, dtype=float)
        lo, hi = arr.min(0), arr.max(0)
        flat = hi - lo < 1e-12
        lo = np.where(flat, lo - 1.0, lo)
        hi = np.where(flat, hi + 1.0, hi)
        return lo, hi
    center = np.zeros(dim)
    sd = None
    for s in specs:
        if not isinstance(s, MomentSpec):
            continue
        value = s.target if s.band is None else 0.5 * (s.band[0] + s.band[1])
        pair = s.axis if isinstance(s.axis, tuple) else (s.axis, s.axis)
        if s.order == 1 and s.kind == "raw":
            center[pair[0]] = value
        elif s.order == 2 and s.kind == "central" and pair[0] == pair[1] and value > 0:
            sd = np.ones(dim) if sd is None else sd
            sd[pair[0]] = math.sqrt(value)
    if sd is None:
        return np.full(dim, -3.0), np.full(dim, 3.0)
    return center - 3 * sd, center + 3 * sd


def initial_thetas(problem: Problem):
    """Deterministic start plus seeded jittered starts."""
    dim, n = problem.dim, problem.n_root
    opts = problem.options
    layout = ThetaLayout(dim, n)
    lo, hi = spec_range(problem.specs, dim)
    width = hi - lo
    frac = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
    spacing = width / (n - 1) if n > 1 else width
    var = (width / n) ** 2
    lower, upper = layout.bounds(opts.param_bound, opts.log_scale_floor)
    starts = []
    for k in range(opts.multistart):
        means = lo + frac[:, None] * width
        log_var = np.tile(np.log(var), (n, 1))
        if k > 0:
            rng = np.random.default_rng([opts.seed, k])
            means = means + rng.uniform(-0.2, 0.2, size=(n, dim)) * spacing
            log_var = log_var + rng.uniform(-0.5, 0.5, size=(n, dim))
        covs = np.zeros((n, dim, dim))
        idx = np.arange(dim)
        covs[:, idx, idx] = np.exp(log_var)
        theta = layout.encode(np.ones(n), means, covs)
        starts.append(np.clip(theta, lower, upper))
    return starts


# ---------------------------------------------------------------------------
# augmented Lagrangian
# ---------------------------------------------------------------------------


@dataclass
class StartResult:
    index: int
    theta: np.ndarray
    fisher: float
    violation: float
    converged: bool
    diverged: bool = False
    infeasible: bool = False
    direction: Optional[str] = None
    outer: int = 0
    inner: int = 0
    status: str = ""
    bound_hits: list = field(default_factory=list)
    history: list = field(default_factory=list)


def _bound_hits(layout, x, lower, upper):
    labels = layout.labels()
    return [labels[k] for k in np.flatnonzero((x <= lower) | (x >= upper))]


def _divergent_direction(layout, res, lower, upper):
    """Label of a mean/scale parameter stuck at its outer bound while the objective still falls."""
    labels = layout.labels()
    watch = layout.scale_mask() | layout.mean_mask()
    slope = DIVERGENCE_SLOPE * max(abs(res.fun), np.finfo(float).tiny)
    at_upper = (res.x >= upper) & (res.grad < -slope)
    at_lower = (res.x <= lower) & (res.grad > slope) & layout.mean_mask()
    hits = np.flatnonzero(watch & (at_upper | at_lower))
    return labels[hits[0]] if hits.size else None


def dilate(layout: ThetaLayout, theta, delta, center):
    """Parameters of ``r`` stretched by ``exp(delta)`` about ``center``.

    The mixture mean is preserved and every central moment of order k is
    multiplied by ``exp(k * delta)``.
    """
    theta = theta.copy()
    stretch = math.exp(delta)
    scale, mean = layout.scale_mask(), layout.mean_mask()
    weight = np.zeros(layout.per_component, dtype=bool)
    weight[0] = True
    off_diag = ~(scale | mean | np.tile(weight, layout.n_root))
    centers = np.tile(center, layout.n_root)
    theta[mean] = centers + stretch * (theta[mean] - centers)
    theta[scale] += delta
    theta[off_diag] *= stretch
    return theta


def _dilation_direction(ev: Evaluator, theta, lower, upper):
    """Stretch the density about its mean until a parameter leaves the box.

    Only called when no spec fixes the scale, so stretching keeps the specs
    satisfiable while the Fisher information falls like ``1 / s**2``; the
    infimum 0 is not attained.  Steps grow geometrically.  Returns the label
    of the first width or location parameter to leave the box, or ``None``
    if the objective stops decreasing on the way (possible for a custom
    objective).
    """
    layout = ev.layout
    watch = layout.scale_mask() | layout.mean_mask()
    st = ev.state(theta[None, :])
    value = float(ev.objective_values(st)[0])
    delta = DILATION_STEP
    for _ in range(DILATION_TRIES):
        center = mx.mean(st.expansion.weights[0], st.expansion.means[0])
        trial = dilate(layout, theta, delta, center)
        outside = watch & ((trial > upper) | (trial < lower))
        if outside.any():
            return layout.labels()[int(np.flatnonzero(outside)[0])]
        st = ev.state(trial[None, :])
        trial_value = float(ev.objective_values(st)[0])
        if not trial_value < value:
            return None
        theta, value = trial, trial_value
        delta *= 2.0
    return None


def run_start(ev: Evaluator, theta0, index=0):
    opts = ev.problem.options
    layout = ev.layout
    lower, upper = layout.bounds(opts.param_bound, opts.log_scale_floor)
    n_eq, n_in = ev.eq_idx.size, 2 * ev.band_idx.size
    lam_eq = np.zeros(n_eq)
    lam_in = np.zeros(n_in)
    mu = opts.mu0
    theta = np.clip(np.asarray(theta0, dtype=float), lower, upper)
    prev_viol = math.inf
    total_inner = 0
    history = []
    result = None
    polished = 0

    for outer in range(1, opts.max_outer + 1):

        def batch_fun(thetas, lam_eq=lam_eq, lam_in=lam_in, mu=mu):
            st = ev.state(thetas)
            c, h = ev.constraint_values(st)
            value = ev.objective_values(st) + c @ lam_eq + 0.5 * mu * (c * c).sum(-1)
            if n_in:
                value = value + (np.maximum(0.0, lam_in + mu * h) ** 2 - lam_in**2).sum(-1) / (2 * mu)
            return np.where(np.isfinite(value), value, np.inf)

        res = qn.minimize(batch_fun, theta, lower, upper, gtol=opts.grad_tol,
                          maxiter=opts.max_inner, rel_step=opts.fd_step)
        theta = res.x
        total_inner += res.nit
        st = ev.state(theta[None, :])
        fisher = float(st.fisher[0])
        viol = float(ev.violation(st)[0])
        c, h = (a[0] for a in ev.constraint_values(st))
        history.append({
            "start": index, "outer": outer, "fisher": fisher, "objective": float(ev.objective_values(st)[0]),
            "violation": viol, "penalty": mu, "inner_status": res.status, "inner_iterations": res.nit,
            "theta": theta.copy(),
        })
        log.debug("start %d outer %d: FI=%.12g viol=%.3g mu=%.3g (%s, %d it)",
                  index, outer, fisher, viol, mu, res.status, res.nit)
        direction = None if ev.scale_fixed else _divergent_direction(layout, res, lower, upper)
        if direction is not None:
            result = StartResult(index, theta, fisher, viol, False, diverged=True, direction=direction,
                                 status="diverged")
            break
        if viol <= opts.eq_tol and res.stationary:
            polished += 1
            result = StartResult(index, theta, fisher, viol, True, status="converged")
            if viol <= POLISH_FACTOR * opts.eq_tol or polished > POLISH_STEPS:
                break
        elif result is not None:
            # polishing lost feasibility; keep the last converged iterate
            break
        if mu >= opts.max_penalty and viol > opts.eq_tol and viol > 0.25 * prev_viol:
            result = StartResult(index, theta, fisher, viol, False, infeasible=True, status="infeasible")
            break
        lam_eq = lam_eq + mu * c
        lam_in = np.maximum(0.0, lam_in + mu * h)
        if viol > 0.25 * prev_viol:
            mu = min(mu * opts.penalty_growth, opts.max_penalty)
        prev_viol = viol
    if result is None:
        result = StartResult(index, theta, fisher, viol, False, status="max_outer")
    if not ev.scale_fixed and not result.diverged and result.violation <= opts.eq_tol:
        # no spec pins the width: a feasible end point can be stretched
        # downhill until it leaves the box, so the infimum is not attained
        direction = _dilation_direction(ev, result.theta, lower, upper)
        if direction is not None:
            result = StartResult(index, result.theta, result.fisher, result.violation, False, diverged=True,
                                 direction=direction, status="diverged")
    result.outer = len(history)
    result.inner = total_inner
    result.history = history
    result.bound_hits = _bound_hits(layout, result.theta, lower, upper)
    return result


def _select(results, tol):
    candidates = [r for r in results if not r.diverged]
    converged = [r for r in candidates if r.converged]
    feasible = [r for r in candidates if r.violation <= tol]
    pool = converged or feasible
    # interior solutions first: a point on the parameter box is an artifact of the box
    pool = [r for r in pool if not r.bound_hits] or pool
    if pool:
        best = pool[0]
        for r in pool[1:]:
            if r.fisher < best.fisher - FI_TIE:
                best = r
        return best
    return min(candidates, key=lambda r: (r.violation, r.index)) if candidates else None


def solve(problem: Problem, initial: Sequence[RootMixture] = (), objective: Optional[Callable] = None,
          callback: Optional[Callable] = None) -> Solution:
    """Minimize the Fisher information subject to ``problem.specs``.

    Parameters
    ----------
    problem : Problem
    initial : sequence of RootMixture, optional
        Extra warm starts (e.g. a solution with fewer components, which is
        split into an equivalent ``n_root`` representation).  They are run
        after the regular multistarts.
    objective : callable, optional
        Replacement objective taking a :class:`BatchState` and returning one
        value per row.  Used for comparison studies.
    callback : callable, optional
        Called with each finished :class:`StartResult`.

    Raises
    ------
    DivergenceError
        Every start pushed a width or location parameter into its bound with
        the objective still decreasing.
    InfeasibleError
        No start reached feasibility and every start stalled at the maximum
        penalty.
    """
    ev = Evaluator(problem, objective)
    starts = initial_thetas(problem)
    for rm in initial:
        rm = split_to(rm, problem.n_root) if rm.n_components < problem.n_root else rm
        starts.append(encode(rm))
    results = []
    for k, theta0 in enumerate(starts):
        r = run_start(ev, theta0, k)
        results.append(r)
        if callback is not None:
            callback(r)
    if all(r.diverged for r in results):
        raise DivergenceError(
            f"objective decreases without bound along '{results[0].direction}': "
            "the specifications do not fix the scale or location of the density",
            direction=results[0].direction,
            diagnostics={"starts": len(results)},
        )
    best = _select(results, problem.options.eq_tol)
    solution = _make_solution(ev, best, results)
    if not solution.converged and all(r.infeasible or r.diverged for r in results):
        raise InfeasibleError(
            f"constraint violation stalled at {best.violation:.3g} with maximum penalty on every start",
            solution=solution,
        )
    return solution


def _make_solution(ev: Evaluator, best: StartResult, results) -> Solution:
    st = ev.state(best.theta[None, :])
    rm = RootMixture(st.weights[0], st.means[0], st.covs[0], normalized=True)
    exp = st.expansion
    keep = exp.weights[0] > 0
    mix = GaussianMixture(exp.weights[0][keep], exp.means[0][keep], exp.covs[0][keep]).validated()
    residuals = [cons.residual(s, mix, ev.problem.options.eq_tol) for s in ev.specs]
    history = [h for r in results for h in r.history]
    return Solution(
        root_mixture=rm,
        mixture=mix,
        fisher_information=float(st.fisher[0]),
        residuals=residuals,
        converged=best.converged,
        outer_iterations=best.outer,
        inner_iterations=best.inner,
        start_index=best.index,
        diverged=best.diverged,
        status=best.status,
        pruned_mass=float(exp.pruned_mass[0]),
        weight_sum=float(exp.weight_sum[0]),
        bound_hits=best.bound_hits,
        theta=best.theta.copy(),
        history=history,
    )
