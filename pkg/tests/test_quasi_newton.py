import numpy as np
import pytest

from smoothmix import quasi_newton as qn


def rosenbrock(X):
    x, y = X[:, 0], X[:, 1]
    return (1 - x) ** 2 + 100 * (y - x * x) ** 2


def quadratic_bowl(X):
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    return 0.5 * np.einsum("ni,ij,nj->n", X, A, X) - X @ b + 10.0


class TestCentralDifference:
    def test_exact_for_quadratics(self):
        x = np.array([0.3, -1.2])
        g = qn.central_difference(quadratic_bowl, x)
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(g, A @ x - [1.0, -1.0], atol=1e-8)

    def test_single_batch_call(self):
        calls = []

        def fun(X):
            calls.append(X.shape)
            return (X**2).sum(1)

        qn.central_difference(fun, np.ones(3))
        assert calls == [(6, 3)]


class TestMinimize:
    def test_quadratic(self):
        res = qn.minimize(quadratic_bowl, np.array([4.0, 4.0]), gtol=1e-12)
        expected = np.linalg.solve([[3.0, 1.0], [1.0, 2.0]], [1.0, -1.0])
        np.testing.assert_allclose(res.x, expected, atol=1e-7)
        assert res.stationary

    def test_rosenbrock(self):
        res = qn.minimize(rosenbrock, np.array([-1.2, 1.0]), maxiter=500, gtol=1e-14)
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)

    def test_box_constraint_active(self):
        res = qn.minimize(quadratic_bowl, np.zeros(2), lower=np.array([1.0, -5.0]), upper=np.array([5.0, 5.0]))
        assert res.x[0] == 1.0
        # with x0 fixed at 1: minimize over y of 1*y + y^2 + y  -> y = -1
        np.testing.assert_allclose(res.x[1], -1.0, atol=1e-6)

    def test_never_increases(self):
        res = qn.minimize(rosenbrock, np.array([-1.2, 1.0]), maxiter=100, record=True)
        trace = np.array(res.trace)
        assert np.all(np.diff(trace) <= 0)
        assert np.all(np.isfinite(trace))

    def test_rejects_non_finite_trial_points(self):
        def guarded(X):
            out = (X**2).sum(1)
            return np.where(X[:, 0] < -0.5, np.inf, out)

        res = qn.minimize(guarded, np.array([3.0, 1.0]), record=True)
        np.testing.assert_allclose(res.x, 0.0, atol=1e-6)
        assert np.all(np.isfinite(res.trace))

    def test_iteration_limit(self):
        res = qn.minimize(rosenbrock, np.array([-1.2, 1.0]), maxiter=3)
        assert res.status == qn.STATUS_MAXITER and not res.stationary
        assert res.nit == 3

    def test_starting_point_clipped_to_box(self):
        res = qn.minimize(quadratic_bowl, np.array([10.0, 0.0]), lower=np.array([-1.0, -1.0]), upper=np.array([2.0, 2.0]))
        assert np.all(res.x <= 2.0) and np.all(res.x >= -1.0)
