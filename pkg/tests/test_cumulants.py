import math
from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase

from mesolab.cumulants import (
    GENERIC_C1,
    IMAG_RATIONAL,
    CumulantExpansion,
    MesoscopicConfig,
    TestFunction,
    apply_scaled_function,
    bump,
    compare_cumulants,
    composition_weights,
    fredholm_cumulants,
    imag_rational,
    minimum_tail,
    parse_complex,
    parse_test_function,
    rational,
    sigma_f_squared,
    trace_cumulant,
    trace_mean,
    zero,
)
from mesolab.exceptions import ConfigurationError
from mesolab.jacobi import free_jacobi, from_preset, truncate


def random_symmetric(size, seed=0):
    A = np.random.default_rng(seed).standard_normal((size, size))
    return (A + A.T) / (2 * math.sqrt(size))


class TestFunctionTest(SimpleTestCase):
    def test_imag_rational(self):
        f = imag_rational((1, 1j))
        np.testing.assert_allclose(f(np.array([0.0, 1.0, 2.0])), [1.0, 0.5, 0.2])
        np.testing.assert_allclose(f.derivative(np.array([1.0])), [-0.5])
        self.assertTrue(f.is_real)
        self.assertFalse(f.is_zero)

    def test_rational_is_complex(self):
        f = rational((1, 1j), (0.5, -2j))
        self.assertFalse(f.is_real)
        self.assertAlmostEqual(complex(f(0.0)), 1 / -1j + 0.5 / 2j)

    def test_pole_on_real_line(self):
        with self.assertRaises(ValueError):
            rational((1, 0.5))

    def test_bump(self):
        f = bump(2.0)
        np.testing.assert_allclose(f(np.array([0.0, 1.0, 2.0, 3.0])), [1.0, 0.5625, 0.0, 0.0])
        np.testing.assert_allclose(f.derivative(np.array([1.0, 5.0])), [-0.75, 0.0])
        self.assertEqual(f.kind, GENERIC_C1)
        with self.assertRaises(ValueError):
            bump(0)

    def test_zero(self):
        f = zero()
        self.assertTrue(f.is_zero)
        self.assertFalse(f(np.linspace(-1, 1, 5)).any())

    def test_rescaled(self):
        f = imag_rational((1, 1j))
        g = f.rescaled(2.0)
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(g(x), f(2 * x))
        h = bump(1.0).rescaled(0.5)
        self.assertEqual(h.support, 2.0)
        np.testing.assert_allclose(h(x), bump(1.0)(0.5 * x))
        np.testing.assert_allclose(h.derivative(x), 0.5 * bump(1.0).derivative(0.5 * x))

    def test_generic_needs_callable(self):
        with self.assertRaises(ValueError):
            TestFunction(GENERIC_C1)
        with self.assertRaises(ValueError):
            TestFunction("polynomial")


class ParseTest(SimpleTestCase):
    def test_parse_complex(self):
        self.assertEqual(parse_complex("i"), 1j)
        self.assertEqual(parse_complex("-2i"), -2j)
        self.assertEqual(parse_complex("0.5 + i"), 0.5 + 1j)
        self.assertEqual(parse_complex("1j"), 1j)
        with self.assertRaises(ConfigurationError):
            parse_complex("x")

    def test_parse_test_function(self):
        f = parse_test_function("imag_rational(1:i, -0.5:2+i)")
        self.assertEqual(f.kind, IMAG_RATIONAL)
        self.assertEqual(f.poles, ((1.0, 1j), (-0.5, 2 + 1j)))
        self.assertEqual(str(f), "imag_rational(1:i, -0.5:2+i)")
        self.assertEqual(parse_test_function("bump(1.5)").support, 1.5)
        self.assertTrue(parse_test_function("zero").is_zero)
        self.assertFalse(parse_test_function("rational(1:i)").is_real)

    def test_parse_errors(self):
        for text in ("cubic", "bump", "bump(-1)", "imag_rational(1)", "imag_rational(1:0)", "zero(1)"):
            with self.assertRaises(ConfigurationError, msg=text):
                parse_test_function(text)


class MesoscopicConfigTest(SimpleTestCase):
    def test_default_truncation(self):
        cfg = MesoscopicConfig(0.3, 0.0, 100)
        self.assertEqual(minimum_tail(100, 0.3), 367)
        self.assertEqual(cfg.truncation_size, 467)
        self.assertEqual(cfg.doubled().truncation_size, 834)
        self.assertEqual(MesoscopicConfig(0.3, 0.0, 10).truncation_size, 210)
        self.assertEqual(minimum_tail(1, 0.3), 0)

    def test_short_tail(self):
        with self.assertRaises(ValueError):
            MesoscopicConfig(0.3, 0.0, 100, truncation_size=150)

    def test_ranges(self):
        with self.assertRaises(ValueError):
            MesoscopicConfig(1.0, 0.0, 100)
        with self.assertRaises(ValueError):
            MesoscopicConfig(0.3, 2.0, 100)
        with self.assertRaises(ValueError):
            MesoscopicConfig(0.3, 0.0, 0)


class ScaledFunctionTest(SimpleTestCase):
    def test_matches_dense_resolvent(self):
        cfg = MesoscopicConfig(0.5, 0.2, 4, truncation_size=300)
        T = truncate(free_jacobi(), 1, 300)
        F = apply_scaled_function(T, imag_rational((1, 1j)), cfg)
        A = cfg.scale * (T.to_dense() - 0.2 * np.eye(300))
        np.testing.assert_allclose(F, np.linalg.inv(A - 1j * np.eye(300)).imag, atol=1e-12)
        np.testing.assert_array_equal(F, F.T)

    def test_needs_leading_window(self):
        cfg = MesoscopicConfig(0.5, 0.0, 4)
        with self.assertRaises(ValueError):
            apply_scaled_function(truncate(free_jacobi(), 2, 300), zero(), cfg)


class TraceFormulaTest(SimpleTestCase):
    def test_composition_weights(self):
        self.assertEqual(composition_weights(2), (((1, 1), Fraction(-1, 2)),))
        self.assertEqual(
            composition_weights(3),
            (((1, 2), Fraction(-1, 4)), ((2, 1), Fraction(-1, 4)), ((1, 1, 1), Fraction(1, 3))),
        )

    def test_variance(self):
        F = random_symmetric(20)
        n = 8
        P = np.diag((np.arange(20) < n).astype(float))
        expected = 0.5 * (np.trace(F @ F @ P) - np.trace(P @ F @ P @ F))
        self.assertAlmostEqual(trace_cumulant(F, n, 2), expected)
        self.assertAlmostEqual(trace_mean(F, n), np.trace(F[:n, :n]))

    def test_commuting_function_has_no_fluctuations(self):
        F = np.diag(np.linspace(-1, 1, 15))
        expansion = CumulantExpansion(F, 6)
        for m in range(2, 7):
            self.assertAlmostEqual(expansion.cumulant(m), 0.0, places=12)

    def test_matches_fredholm_determinant(self):
        F = random_symmetric(30, seed=1)
        n = 10
        expansion = CumulantExpansion(F, n)
        oracle = fredholm_cumulants(F, n, 4)
        self.assertAlmostEqual(oracle[0], expansion.mean(), places=9)
        for m in (2, 3, 4):
            self.assertAlmostEqual(expansion.cumulant(m), oracle[m - 1], places=7)

    def test_matches_fredholm_on_random_matrices(self):
        rng = np.random.default_rng(2)
        for seed in range(100):
            size = int(rng.integers(2, 51))
            n = int(rng.integers(1, size))
            F = random_symmetric(size, seed)
            expansion = CumulantExpansion(F, n)
            oracle = fredholm_cumulants(F, n, 4)
            scale = np.linalg.norm(F, 2)
            self.assertLess(abs(expansion.mean() - oracle[0]), 1e-6 * max(abs(oracle[0]), scale))
            for m in (2, 3, 4):
                self.assertLess(
                    abs(expansion.cumulant(m) - oracle[m - 1]),
                    1e-6 * max(abs(oracle[m - 1]), scale**m),
                    "size %d, n %d, m %d" % (size, n, m),
                )

    def test_fredholm_zero(self):
        self.assertEqual(fredholm_cumulants(np.zeros((5, 5)), 2, 3), [0.0, 0.0, 0.0])

    def test_fredholm_arguments(self):
        F = random_symmetric(10)
        with self.assertRaises(ValueError):
            fredholm_cumulants(F, 4, 4, nodes=4)
        with self.assertRaises(ValueError):
            fredholm_cumulants(F, 4, 2, h=10.0)

    def test_order_limits(self):
        expansion = CumulantExpansion(random_symmetric(10), 4)
        with self.assertRaises(ValueError):
            expansion.cumulant(7)
        with self.assertRaises(ValueError):
            expansion.cumulant(1)
        with self.assertRaises(ValueError):
            CumulantExpansion(np.zeros((3, 3)), 4)


class CompareCumulantsTest(SimpleTestCase):
    def setUp(self):
        self.f = imag_rational((1, 1j))
        self.cfg = MesoscopicConfig(0.3, 0.0, 40)

    def test_zero_perturbation(self):
        J0 = free_jacobi()
        J = from_preset("sparse(0.5,0.1,zero)", 2000)
        reports = compare_cumulants(J0, J, self.f, self.cfg, [1, 2, 3])
        self.assertEqual([r.m for r in reports], [1, 2, 3])
        for report in reports:
            self.assertEqual(report.diff, 0.0)
            self.assertEqual(report.n, 40)
            self.assertEqual(report.truncation_size, self.cfg.truncation_size)

    def test_same_operator(self):
        J0 = free_jacobi()
        reports = compare_cumulants(J0, J0, self.f, self.cfg, [2])
        self.assertEqual(reports[0].value_mu0, reports[0].value_mu)
        self.assertLess(reports[0].truncation_estimate, 1e-6)
        self.assertFalse(reports[0].unconverged)

    def test_perturbed(self):
        J0 = free_jacobi()
        J = from_preset("sparse(0.5,0.1,inv_log)", 2000)
        (report,) = compare_cumulants(J0, J, self.f, self.cfg, [2])
        self.assertNotEqual(report.diff, 0.0)
        self.assertAlmostEqual(report.diff, report.value_mu0 - report.value_mu)

    def test_adaptive_grows_the_tail(self):
        J0 = free_jacobi()
        with self.settings(MESOLAB={"TAIL_TOLERANCE": 0.0, "TRUNCATION_MAX_DOUBLINGS": 2}):
            (report,) = compare_cumulants(J0, J0, self.f, self.cfg, [2], adaptive=True)
        self.assertEqual(report.truncation_size, self.cfg.doubled().truncation_size)

    def test_adaptive_reports_the_compared_truncation(self):
        J0 = free_jacobi()
        J = from_preset("sparse(0.5,0.1,inv_log)", 2000)
        with self.settings(MESOLAB={"TAIL_TOLERANCE": 0.0, "TRUNCATION_MAX_DOUBLINGS": 2}):
            (adaptive,) = compare_cumulants(J0, J, self.f, self.cfg, [2], adaptive=True)
        (fixed,) = compare_cumulants(J0, J, self.f, self.cfg.doubled(), [2])
        self.assertEqual(adaptive.truncation_size, fixed.truncation_size)
        self.assertEqual(adaptive.value_mu0, fixed.value_mu0)
        self.assertEqual(adaptive.value_mu, fixed.value_mu)
        self.assertEqual(adaptive.truncation_estimate, fixed.truncation_estimate)

    def test_tail_stability(self):
        cfg = MesoscopicConfig(0.5, 0.0, 100)
        J0 = free_jacobi()
        for report in compare_cumulants(J0, J0, self.f, cfg, [2, 3, 4]):
            self.assertLess(report.truncation_estimate, 1e-8)


class VarianceTargetTest(SimpleTestCase):
    def test_cauchy_kernel(self):
        target = sigma_f_squared(imag_rational((1, 1j)))
        self.assertAlmostEqual(target.sigma2, 1 / 8, places=7)
        self.assertLess(target.quadrature_error, 1e-6)

    def test_scale_invariance(self):
        f = imag_rational((1, 1j))
        self.assertAlmostEqual(sigma_f_squared(f.rescaled(3.0)).sigma2, 1 / 8, places=6)
        self.assertAlmostEqual(
            sigma_f_squared(bump(1.0)).sigma2, sigma_f_squared(bump(2.0)).sigma2, places=5
        )

    def test_zero(self):
        self.assertEqual(sigma_f_squared(zero()).sigma2, 0.0)

    def test_complex_function(self):
        with self.assertRaises(ValueError):
            sigma_f_squared(rational((1, 1j)))
