import math
import unittest
from unittest import mock

import mpmath
import numpy as np
from scipy.spatial import distance

from slitwave.core.errors import NumericDomainError, SeriesConvergenceError
from slitwave.core.specfun import (SQRT_HALF_PI, SQRT_TWO_OVER_PI, T_LIMIT, cornu_curve, fresnel_c, fresnel_pair,
                                   fresnel_s, hyp1f2, oscillation_zeros, t1, t1_series, t2, t2_series)

mpmath.mp.dps = 40


def brute_hyp1f2(a, b1, b2, x, terms=200):
    """Plain partial sum of the defining series in extended precision."""
    a, b1, b2, x = (mpmath.mpf(v) for v in (a, b1, b2, x))
    total = mpmath.mpf(0)
    for n in range(terms):
        total += mpmath.rf(a, n) * x ** n / (mpmath.rf(b1, n) * mpmath.rf(b2, n) * mpmath.factorial(n))
    return float(total)


def oracle_t1(q):
    q = mpmath.mpf(q)
    return float(mpmath.sqrt(mpmath.pi / 2) * mpmath.fresnels(q * mpmath.sqrt(2 / mpmath.pi)))


def oracle_t2(q):
    q = mpmath.mpf(q)
    return float(mpmath.sqrt(mpmath.pi / 2) * mpmath.fresnelc(q * mpmath.sqrt(2 / mpmath.pi)))


class TestFresnel(unittest.TestCase):
    def test_oddness(self):
        z = np.linspace(0.0, 12.0, 241)
        s, c = fresnel_pair(z)
        s_neg, c_neg = fresnel_pair(-z)
        np.testing.assert_allclose(s_neg, -s, atol=1e-13, rtol=0)
        np.testing.assert_allclose(c_neg, -c, atol=1e-13, rtol=0)

    def test_against_mpmath(self):
        for z in (0.0, 0.3, 1.0, 2.5, 7.7, 40.0):
            self.assertAlmostEqual(fresnel_s(z), float(mpmath.fresnels(z)), delta=1e-13)
            self.assertAlmostEqual(fresnel_c(z), float(mpmath.fresnelc(z)), delta=1e-13)

    def test_derivative_matches_integrand(self):
        # Richardson-extrapolated central difference against sin/cos(pi z^2/2)
        h = 1e-4
        for z in np.linspace(-3.0, 3.0, 13):
            def central(f, step):
                return (f(z + step) - f(z - step)) / (2 * step)
            ds = (4 * central(fresnel_s, h / 2) - central(fresnel_s, h)) / 3
            dc = (4 * central(fresnel_c, h / 2) - central(fresnel_c, h)) / 3
            self.assertAlmostEqual(ds, math.sin(math.pi * z * z / 2), delta=1e-8)
            self.assertAlmostEqual(dc, math.cos(math.pi * z * z / 2), delta=1e-8)

    def test_large_argument_limit(self):
        self.assertAlmostEqual(fresnel_c(1000.0), 0.5, delta=1e-3)
        self.assertAlmostEqual(fresnel_s(1000.0), 0.5, delta=1e-3)
        self.assertAlmostEqual(fresnel_c(-1000.0), -0.5, delta=1e-3)

    def test_scalar_and_array_shapes(self):
        self.assertIsInstance(fresnel_s(0.5), float)
        self.assertEqual(fresnel_c(np.zeros((2, 3))).shape, (2, 3))

    def test_non_finite_argument(self):
        with self.assertRaises(NumericDomainError):
            fresnel_pair(float("nan"))


class TestHypergeometric(unittest.TestCase):
    def test_matches_brute_force_oracle(self):
        params = [(0.25, 0.5, 1.25), (0.75, 1.5, 1.75), (1.0, 2.0, 3.0)]
        for a, b1, b2 in params:
            for x in (-4.0, -1.0, -0.1, 0.0, 0.5, 3.0):
                expected = brute_hyp1f2(a, b1, b2, x)
                self.assertAlmostEqual(hyp1f2(a, b1, b2, x), expected, delta=1e-12 * max(1.0, abs(expected)))

    def test_whole_domain_against_mpmath(self):
        # both parameter sets behind t1 and t2; large negative x cancels heavily in float64
        x = np.linspace(-64.0, 16.0, 321)
        for a, b1, b2 in ((0.25, 0.5, 1.25), (0.75, 1.5, 1.75)):
            got = hyp1f2(a, b1, b2, x)
            expected = np.array([float(mpmath.hyp1f2(a, b1, b2, v)) for v in x])
            np.testing.assert_allclose(got, expected, atol=0, rtol=1e-12)

    def test_extended_sum_agrees_across_switch(self):
        x = np.array([-8.0, -8.000001, 8.0, 8.000001])
        got = hyp1f2(0.25, 0.5, 1.25, x)
        self.assertAlmostEqual(got[0], got[1], delta=1e-6)
        self.assertAlmostEqual(got[2], got[3], delta=1e-5 * got[2])

    def test_domain_errors(self):
        with self.assertRaises(NumericDomainError):
            hyp1f2(0.25, 0.5, 1.25, -65.0)
        with self.assertRaises(NumericDomainError):
            hyp1f2(0.25, 0.0, 1.25, 1.0)
        with self.assertRaises(NumericDomainError):
            hyp1f2(0.25, 0.5, -2.0, 1.0)
        with self.assertRaises(NumericDomainError):
            hyp1f2(0.25, 0.5, 1.25, float("inf"))

    def test_term_cap_is_reported(self):
        with mock.patch("slitwave.core.specfun.SERIES_MAX_TERMS", 3):
            with self.assertRaises(SeriesConvergenceError):
                hyp1f2(0.25, 0.5, 1.25, -10.0)


class TestTFunctions(unittest.TestCase):
    def test_series_against_oracle(self):
        for q in np.linspace(-4.0, 4.0, 33):
            self.assertAlmostEqual(t1_series(q), oracle_t1(q), delta=1e-9)
            self.assertAlmostEqual(t2_series(q), oracle_t2(q), delta=1e-9)

    def test_switched_functions_on_wide_range(self):
        for q in np.linspace(-6.0, 6.0, 49):
            self.assertAlmostEqual(t1(q), oracle_t1(q), delta=1e-12)
            self.assertAlmostEqual(t2(q), oracle_t2(q), delta=1e-12)

    def test_fresnel_identity(self):
        q = np.linspace(-3.0, 3.0, 121)
        np.testing.assert_allclose(t1_series(q), SQRT_HALF_PI * fresnel_s(q * SQRT_TWO_OVER_PI), atol=1e-11)
        np.testing.assert_allclose(t2_series(q), SQRT_HALF_PI * fresnel_c(q * SQRT_TWO_OVER_PI), atol=1e-11)

    def test_oddness(self):
        q = np.linspace(0.0, 6.0, 61)
        np.testing.assert_allclose(t1(-q), -t1(q), atol=1e-13, rtol=0)
        np.testing.assert_allclose(t2(-q), -t2(q), atol=1e-13, rtol=0)

    def test_series_domain(self):
        with self.assertRaises(NumericDomainError):
            t1_series(4.5)
        with self.assertRaises(NumericDomainError):
            t2_series(np.array([0.0, -5.0]))
        self.assertAlmostEqual(t1(10.0), T_LIMIT, delta=0.06)

    def test_oscillation_spacing_shrinks(self):
        for func in (t1, t2):
            zeros = oscillation_zeros(func, 2.0, 10.0, offset=T_LIMIT)
            self.assertGreater(len(zeros), 20)
            self.assertTrue(np.all(np.diff(np.diff(zeros)) < 0))
            for z in zeros:
                self.assertAlmostEqual(func(z), T_LIMIT, delta=1e-9)

    def test_levels_stay_positive(self):
        q = np.linspace(1.0, 10.0, 2001)
        self.assertTrue(np.all(t1(q) > 0))
        self.assertTrue(np.all(t2(q) > 0))


class TestCornu(unittest.TestCase):
    def test_curve(self):
        points = cornu_curve(0.0, 8.0, 801)
        self.assertEqual(len(points), 801)
        self.assertEqual((points[0].u, points[0].s, points[0].c), (0.0, 0.0, 0.0))
        self.assertAlmostEqual(points[-1].u, 8.0)
        self.assertAlmostEqual(points[-1].c, 0.5, delta=0.05)
        self.assertAlmostEqual(points[-1].s, 0.5, delta=0.05)

    def test_bad_ranges(self):
        with self.assertRaises(ValueError):
            cornu_curve(1.0, 1.0, 10)
        with self.assertRaises(ValueError):
            cornu_curve(0.0, 1.0, 1)
        with self.assertRaises(ValueError):
            cornu_curve(0.0, float("inf"), 10)

    def test_spiral_never_crosses_itself(self):
        points = cornu_curve(0.0, 8.0, 801)
        xy = np.array([(p.s, p.c) for p in points])
        # successive turns near u = 8 sit about 1e-3 apart
        self.assertGreater(float(distance.pdist(xy).min()), 1e-4)

    def test_point_symmetry(self):
        points = cornu_curve(-8.0, 8.0, 801)
        s = np.array([p.s for p in points])
        c = np.array([p.c for p in points])
        np.testing.assert_allclose(s[::-1], -s, atol=1e-13, rtol=0)
        np.testing.assert_allclose(c[::-1], -c, atol=1e-13, rtol=0)


if __name__ == '__main__':
    unittest.main()
