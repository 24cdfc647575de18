"""Box-constrained BFGS with backtracking Armijo line search.

Gradients come from central differences evaluated as one batch: the caller
supplies ``batch_fun(X) -> values`` for a ``(B, n)`` stack of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ARMIJO = 1e-4
SHRINK = 0.5
MAX_HALVINGS = 60
MAX_STEP = 5.0
STALL_ITERS = 5

STATUS_GRADIENT = "gradient"
STATUS_STALLED = "stalled"
STATUS_LINESEARCH = "linesearch"
STATUS_MAXITER = "maxiter"


def central_difference(batch_fun, x, rel_step=1e-6):
    """Gradient of ``batch_fun`` at ``x``; step ``rel_step * (1 + |x_k|)``."""
    n = x.shape[0]
    h = rel_step * (1.0 + np.abs(x))
    eye = np.diag(h)
    vals = batch_fun(np.concatenate([x + eye, x - eye]))
    return (vals[:n] - vals[n:]) / (2.0 * h)


@dataclass
class QNResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    nfev: int
    status: str
    trace: list = field(default_factory=list)

    @property
    def stationary(self) -> bool:
        return self.status != STATUS_MAXITER


def minimize(
    batch_fun,
    x0,
    lower=None,
    upper=None,
    gtol=1e-8,
    maxiter=200,
    rel_step=1e-6,
    record=False,
):
    """Minimize ``batch_fun`` over the box ``[lower, upper]``.

    Variables sitting on a bound with the gradient pointing outward are held
    fixed for the step; the search direction on the free variables uses the
    matching block of the inverse-Hessian estimate.  Every accepted step
    satisfies the Armijo condition and never increases the objective.

    The gradient test is relative, ``|g_free|_inf <= gtol * |f|``, so a
    function that keeps shrinking towards zero (e.g. an unbounded widening)
    runs into the bound or the iteration limit instead of stopping early.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.shape[0]
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lower, upper)

    def fun(z):
        return float(batch_fun(z[None, :])[0])

    f = fun(x)
    g = central_difference(batch_fun, x, rel_step)
    nfev = 1 + 2 * n
    hinv = np.eye(n)
    scaled = False
    stall = 0
    trace = [f] if record else []
    status = STATUS_MAXITER
    nit = 0
    for nit in range(1, maxiter + 1):
        active = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        free = ~active
        g_free = np.where(free, g, 0.0)
        if np.max(np.abs(g_free), initial=0.0) <= gtol * max(abs(f), np.finfo(float).tiny):
            status = STATUS_GRADIENT
            nit -= 1
            break
        d = np.zeros(n)
        d[free] = -hinv[np.ix_(free, free)] @ g[free]
        if g @ d >= 0:
            hinv = np.eye(n)
            scaled = False
            d = -g_free
        alpha = min(1.0, MAX_STEP / np.max(np.abs(d)))
        accepted = False
        for _ in range(MAX_HALVINGS):
            xt = np.clip(x + alpha * d, lower, upper)
            ft = fun(xt)
            nfev += 1
            if np.isfinite(ft) and ft <= f + ARMIJO * min(0.0, g @ (xt - x)):
                accepted = True
                break
            alpha *= SHRINK
        if not accepted:
            status = STATUS_LINESEARCH
            break
        gt = central_difference(batch_fun, xt, rel_step)
        nfev += 2 * n
        s = xt - x
        y = gt - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                hinv = np.eye(n) * (sy / (y @ y))
                scaled = True
            rho = 1.0 / sy
            hy = hinv @ y
            hinv = hinv + (rho * rho * (y @ hy) + rho) * np.outer(s, s) - rho * (np.outer(hy, s) + np.outer(s, hy))
        stall = stall + 1 if f - ft <= 1e-15 * max(abs(f), np.finfo(float).tiny) else 0
        x, f, g = xt, ft, gt
        if record:
            trace.append(f)
        if stall >= STALL_ITERS:
            status = STATUS_STALLED
            break
    return QNResult(x=x, fun=f, grad=g, nit=nit, nfev=nfev, status=status, trace=trace)
