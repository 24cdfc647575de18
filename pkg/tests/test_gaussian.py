import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothmix.errors import DimensionError, UnsupportedError
from smoothmix.gaussian import Gaussian, bilinear_expectation, interval_mass, product
from smoothmix.oracle import adaptive_simpson, mc_bilinear

from conftest import random_gaussian

# N(3; 1, 4) with 40-digit arithmetic
PDF_M1_C4_AT_3 = 0.12098536225957167
# N(0; -2, 2) = exp(-1) / sqrt(4 pi)
OVERLAP_0_2 = 0.10377687435514868
P_196 = 0.95000420970355913
PHI_AT_1 = 0.24197072451914335


def std_normal():
    return Gaussian([0.0], [[1.0]])


class TestConstruction:
    def test_fields(self):
        g = Gaussian([1.0, 2.0], [[2.0, 0.5], [0.5, 1.0]])
        assert g.dim == 2
        np.testing.assert_allclose(g.chol @ g.chol.T, g.cov)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            Gaussian([0.0, 0.0], [[1.0, 0.1], [0.0, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            Gaussian([0.0, 0.0], [[1.0]])

    def test_tiny_asymmetry_tolerated(self):
        Gaussian([0.0, 0.0], [[1.0, 0.3], [0.3 + 1e-14, 1.0]])


class TestEval:
    def test_standard_normal_at_mean(self):
        assert std_normal().pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)

    def test_bivariate_at_mean(self):
        g = Gaussian([0.0, 0.0], np.eye(2))
        assert g.pdf([0.0, 0.0]) == pytest.approx(1 / (2 * math.pi), rel=1e-15)

    def test_extended_precision_value(self):
        assert Gaussian([1.0], [[4.0]]).pdf(3.0) == pytest.approx(PDF_M1_C4_AT_3, rel=1e-13)

    def test_vectorized_points(self):
        x = np.linspace(-2, 2, 7)
        vals = std_normal().pdf(x)
        assert vals.shape == (7,)
        np.testing.assert_allclose(vals, np.exp(-x**2 / 2) / math.sqrt(2 * math.pi), rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises((DimensionError, ValueError)):
            Gaussian([0.0, 0.0], np.eye(2)).pdf([1.0, 2.0, 3.0])

    def test_quadrature_mass(self):
        g = Gaussian([1.0], [[4.0]])
        mass = adaptive_simpson(lambda x: g.pdf(x), -25.0, 27.0, 1e-13)
        assert mass == pytest.approx(1.0, abs=1e-12)


class TestGrad:
    def test_zero_at_mean(self, rng):
        g = random_gaussian(rng, 2)
        np.testing.assert_allclose(g.grad(g.mean), 0.0, atol=1e-15)

    def test_standard_normal_at_one(self):
        assert std_normal().grad(1.0)[0] == pytest.approx(-PHI_AT_1, rel=1e-14)

    def test_bivariate_identity(self):
        g = Gaussian([0.0, 0.0], np.eye(2))
        np.testing.assert_allclose(g.grad([1.0, 0.0]), [-g.pdf([1.0, 0.0]), 0.0], atol=1e-16)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_matches_central_differences(self, rng, dim):
        g = random_gaussian(rng, dim)
        for x in rng.normal(scale=1.5, size=(50, dim)):
            h = 1e-6 * (1 + np.abs(x))
            fd = np.array([(g.pdf(x + h[k] * e) - g.pdf(x - h[k] * e)) / (2 * h[k]) for k, e in enumerate(np.eye(dim))])
            np.testing.assert_allclose(g.grad(x), fd, rtol=1e-6, atol=1e-10)

    def test_hessian_matches_grad_differences(self, rng):
        g = random_gaussian(rng, 2)
        x = np.array([0.3, -0.4])
        h = 1e-6
        fd = np.stack([(g.grad(x + h * e) - g.grad(x - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(g.hessian(x), fd, atol=1e-8)


class TestProduct:
    def test_identical_standard_normals(self):
        scale, g3 = product(std_normal(), std_normal())
        assert scale == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-15)
        np.testing.assert_allclose(g3.mean, [0.0], atol=1e-16)
        np.testing.assert_allclose(g3.cov, [[0.5]], rtol=1e-15)

    def test_separated_means_scale_and_integral(self):
        g1, g2 = Gaussian([0.0], [[1.0]]), Gaussian([2.0], [[1.0]])
        scale, _ = product(g1, g2)
        assert scale == pytest.approx(OVERLAP_0_2, rel=1e-14)
        integral = adaptive_simpson(lambda x: g1.pdf(x) * g2.pdf(x), -12.0, 14.0, 1e-13)
        assert integral == pytest.approx(scale, abs=1e-10)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_symmetric(self, rng, dim):
        g1, g2 = random_gaussian(rng, dim), random_gaussian(rng, dim)
        s12, a = product(g1, g2)
        s21, b = product(g2, g1)
        assert s12 == pytest.approx(s21, rel=1e-12)
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(a.cov, b.cov, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_information_form(self, rng, dim):
        g1, g2 = random_gaussian(rng, dim), random_gaussian(rng, dim)
        _, g3 = product(g1, g2)
        p1, p2 = np.linalg.inv(g1.cov), np.linalg.inv(g2.cov)
        c3 = np.linalg.inv(p1 + p2)
        np.testing.assert_allclose(g3.cov, c3, rtol=1e-12)
        np.testing.assert_allclose(g3.mean, c3 @ (p1 @ g1.mean + p2 @ g2.mean), rtol=1e-11, atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5), st.floats(0.1, 5))
    def test_pointwise_identity_1d(self, m1, m2, c1, c2):
        g1, g2 = Gaussian([m1], [[c1]]), Gaussian([m2], [[c2]])
        scale, g3 = product(g1, g2)
        x = np.linspace(-6, 6, 41)
        lhs = g1.pdf(x) * g2.pdf(x)
        rhs = scale * g3.pdf(x)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(lhs)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            product(std_normal(), Gaussian([0.0, 0.0], np.eye(2)))


class TestBilinearExpectation:
    def test_centered_identity_is_trace(self, rng):
        g = random_gaussian(rng, 2)
        assert bilinear_expectation(np.eye(2), g.mean, g.mean, g) == pytest.approx(np.trace(g.cov), rel=1e-14)

    def test_scalar_case(self):
        assert bilinear_expectation([[1.0]], [1.0], [-1.0], std_normal()) == pytest.approx(0.0, abs=1e-15)

    def test_monte_carlo(self, rng):
        g = random_gaussian(rng, 2)
        M = rng.normal(size=(2, 2))
        a, b = rng.normal(size=2), rng.normal(size=2)
        est, se = mc_bilinear(M, a, b, g, n=1_000_000, seed=3)
        assert abs(bilinear_expectation(M, a, b, g) - est) <= 3 * se

    def test_linear_in_matrix_and_swap_symmetric(self, rng):
        g = random_gaussian(rng, 2)
        M1, M2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        a, b = rng.normal(size=2), rng.normal(size=2)
        combo = bilinear_expectation(2 * M1 - 3 * M2, a, b, g)
        parts = 2 * bilinear_expectation(M1, a, b, g) - 3 * bilinear_expectation(M2, a, b, g)
        assert combo == pytest.approx(parts, rel=1e-12)
        assert bilinear_expectation(M1.T, b, a, g) == pytest.approx(bilinear_expectation(M1, a, b, g), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            bilinear_expectation(np.eye(2), [0.0], [0.0], std_normal())


class TestIntervalMass:
    def test_half_line(self):
        assert interval_mass(std_normal(), -math.inf, 0.0) == pytest.approx(0.5, abs=1e-16)

    def test_whole_line(self):
        assert interval_mass(std_normal(), -math.inf, math.inf) == 1.0

    def test_central_interval(self):
        g = std_normal()
        p = interval_mass(g, -1.96, 1.96)
        assert p == pytest.approx(P_196, abs=1e-15)
        quad = adaptive_simpson(lambda x: g.pdf(x), -1.96, 1.96, 1e-13)
        assert p == pytest.approx(quad, abs=1e-10)

    def test_far_tail_accuracy(self):
        # the upper-tail form avoids cancellation in 1 - Phi
        p = interval_mass(std_normal(), 10.0, math.inf)
        assert p == pytest.approx(7.61985302416047e-24, rel=1e-12)

    def test_unsupported_dimension(self):
        with pytest.raises(UnsupportedError):
            interval_mass(Gaussian([0.0, 0.0], np.eye(2)), 0.0, 1.0)

    def test_reversed_interval(self):
        with pytest.raises(ValueError):
            interval_mass(std_normal(), 1.0, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5, 5), st.floats(0, 3), st.floats(0, 3))
    def test_monotone_and_additive(self, a, d1, d2):
        g = Gaussian([0.4], [[1.7]])
        b, c = a + d1, a + d1 + d2
        assert interval_mass(g, a, c) >= interval_mass(g, a, b) - 1e-16
        assert interval_mass(g, a, c) == pytest.approx(interval_mass(g, a, b) + interval_mass(g, b, c), abs=1e-12)
