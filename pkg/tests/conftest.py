import numpy as np
import pytest

from smoothmix.gaussian import Gaussian
from smoothmix.mixture import GaussianMixture
from smoothmix.root import RootMixture, normalize


def random_cov(rng, dim, lo=0.3, hi=2.0):
    """Random SPD matrix with eigenvalues in ``[lo, hi]``."""
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return (q * rng.uniform(lo, hi, dim)) @ q.T


def random_gaussian(rng, dim):
    return Gaussian(rng.normal(size=dim), random_cov(rng, dim))


def random_mixture(rng, dim, n):
    w = rng.uniform(0.2, 1.0, n)
    means = rng.normal(scale=1.5, size=(n, dim))
    covs = np.stack([random_cov(rng, dim) for _ in range(n)])
    return GaussianMixture(w / w.sum(), means, covs).validated()


def random_root_mixture(rng, dim, n):
    means = rng.normal(size=(n, dim))
    covs = np.stack([random_cov(rng, dim, 0.4, 2.5) for _ in range(n)])
    return normalize(RootMixture(rng.uniform(0.2, 1.0, n), means, covs))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# shared solver runs (expensive, computed once per session)
# ---------------------------------------------------------------------------

import time

from smoothmix.constraints import MomentSpec, ValueSpec
from smoothmix.optimizer import Problem, solve

UNIT_VARIANCE_SPECS = (MomentSpec(1, 0.0), MomentSpec(2, 1.0, kind="central"))
VALUE_PAIRS = ((-2.0, 0.1), (-1.0, 0.25), (0.0, 0.25), (1.0, 0.4))
VALUE_PAIR_SPECS = (MomentSpec(1, 0.0),) + tuple(ValueSpec(x, y) for x, y in VALUE_PAIRS)


def solve_chain(specs, n_roots):
    """Solve for increasing R, warm-starting each run from the previous solution."""
    out, prev = {}, []
    for n in n_roots:
        t0 = time.perf_counter()
        sol = solve(Problem(1, n, specs), initial=prev)
        out[n] = (sol, time.perf_counter() - t0)
        prev = [sol.root_mixture]
    return out


@pytest.fixture(scope="session")
def unit_variance_chain():
    return solve_chain(UNIT_VARIANCE_SPECS, (3, 4, 5))


@pytest.fixture(scope="session")
def value_pair_chain():
    return solve_chain(VALUE_PAIR_SPECS, (3, 4, 5))


@pytest.fixture(scope="session")
def curvature_solution():
    from smoothmix.oracle import curvature_objective

    return solve(Problem(1, 5, UNIT_VARIANCE_SPECS), objective=curvature_objective())
