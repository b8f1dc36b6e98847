import io
import json
import math

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from mesolab.cumulants import MesoscopicConfig, apply_scaled_function, imag_rational, trace_mean
from mesolab.exceptions import ConfigurationError, PolynomialOverflowError
from mesolab.jacobi import free_jacobi, truncate
from mesolab.sampler import (
    MeasureDensity,
    cd_kernel,
    eval_polys,
    expected_count,
    intensity_integral,
    linear_statistic,
    mc_cumulants,
    parse_measure,
    sample_batch,
    sample_ope,
    sine_ratio,
)


class MeasureTest(SimpleTestCase):
    def test_semicircle(self):
        mu = MeasureDensity.semicircle()
        self.assertEqual((mu.lo, mu.hi, mu.name), (-2.0, 2.0, "semicircle"))
        np.testing.assert_allclose(mu.cdf(np.array([-2.0, 0.0, 2.0])), [0.0, 0.5, 1.0], atol=1e-15)
        self.assertAlmostEqual(float(mu.density(0.0)), 1 / math.pi)

    def test_shifted_semicircle(self):
        mu = parse_measure("semicircle(0.5,0.1)")
        self.assertEqual(mu.name, "semicircle(0.5,0.1)")
        self.assertAlmostEqual(mu.lo, -0.9)
        self.assertAlmostEqual(mu.hi, 1.1)
        x, w = mu.quadrature(50)
        self.assertAlmostEqual(np.sum(w), 1.0)
        self.assertAlmostEqual(np.sum(w * x), 0.1)

    def test_parse_errors(self):
        for text in ("gaussian", "semicircle(1)", "semicircle(0,0)", "semicircle(a,b)"):
            with self.assertRaises(ConfigurationError, msg=text):
                parse_measure(text)

    def test_bad_density(self):
        with self.assertRaises(ConfigurationError):
            MeasureDensity("half", lambda x: 0.5 * np.ones_like(x), -2, 2, free_jacobi())


class PolynomialTest(SimpleTestCase):
    def test_orthonormal(self):
        for mu in (MeasureDensity.semicircle(), MeasureDensity.semicircle(0.5, 0.1)):
            x, w = mu.quadrature(200)
            P = eval_polys(x, 12, mu.coefficients)
            np.testing.assert_allclose(P.T @ (w[:, None] * P), np.eye(12), atol=1e-12)

    def test_chebyshev_values(self):
        # p_k(2 cos t) = sin((k + 1) t) / sin(t) for the free operator.
        t = 0.7
        values = eval_polys(2 * math.cos(t), 6, free_jacobi())
        expected = [math.sin((k + 1) * t) / math.sin(t) for k in range(6)]
        np.testing.assert_allclose(values, expected, rtol=1e-12)

    def test_overflow(self):
        with self.assertRaises(PolynomialOverflowError) as caught:
            eval_polys(1e151, 5, free_jacobi())
        self.assertEqual(caught.exception.index, 2)

    def test_kernel_diagonal(self):
        # Only even degrees survive at the origin.
        self.assertAlmostEqual(float(cd_kernel(0.0, 0.0, 10, free_jacobi())), 5.0)

    def test_expected_count(self):
        mu = MeasureDensity.semicircle()
        self.assertAlmostEqual(expected_count(mu, 5, -2, 2), 5.0, places=6)
        self.assertAlmostEqual(expected_count(mu, 4, 0, 3), 2.0, places=6)

    def test_sine_kernel_limit(self):
        ratio = sine_ratio(0.0, 0.0, 1.0, 2000, free_jacobi())
        self.assertAlmostEqual(ratio, math.sin(0.5) / 0.5, delta=5e-3)
        self.assertEqual(sine_ratio(0.3, 0.0, 0.0, 100, free_jacobi()), 1.0)
        with self.assertRaises(ValueError):
            sine_ratio(1.99, 0.0, 20.0, 10, free_jacobi())


class SamplingTest(SimpleTestCase):
    def setUp(self):
        self.mu = MeasureDensity.semicircle()

    def test_sample_ope(self):
        points = sample_ope(self.mu, 5, 11)
        self.assertEqual(points.shape, (5,))
        self.assertTrue(np.all(np.diff(points) > 0))
        self.assertTrue(np.all((points > -2) & (points < 2)))
        np.testing.assert_array_equal(points, sample_ope(self.mu, 5, np.random.default_rng(11)))

    def test_single_point_follows_density(self):
        # One point of OPE_1 is distributed as the measure itself.
        batch = sample_batch(self.mu, 1, 400, 3)
        values = batch.points[:, 0]
        self.assertAlmostEqual(values.mean(), 0.0, delta=0.2)
        self.assertAlmostEqual(values.var(), 1.0, delta=0.25)

    def test_single_point_passes_ks(self):
        batch = sample_batch(self.mu, 1, 500, 21)
        self.assertGreater(stats.kstest(batch.points[:, 0], self.mu.cdf).pvalue, 0.01)

    def test_intensity_matches_kernel(self):
        n, samples = 4, 1000
        edges = np.linspace(-2, 2, 11)
        batch = sample_batch(self.mu, n, samples, 8)
        observed, _ = np.histogram(batch.points.ravel(), edges)
        expected = np.array(
            [samples * expected_count(self.mu, n, lo, hi) for lo, hi in zip(edges, edges[1:])]
        )
        expected *= observed.sum() / expected.sum()
        self.assertGreater(stats.chisquare(observed, expected).pvalue, 0.01)

    def test_batch_is_thread_independent(self):
        serial = sample_batch(self.mu, 4, 6, 7, threads=1)
        parallel = sample_batch(self.mu, 4, 6, 7, threads=3)
        np.testing.assert_array_equal(serial.points, parallel.points)
        self.assertEqual(serial.seeds, parallel.seeds)
        self.assertEqual(len(set(serial.seeds)), 6)

    def test_batch_files(self):
        batch = sample_batch(self.mu, 4, 6, 7)
        self.assertEqual(batch.num_samples, 6)
        self.assertEqual(
            batch.metadata(), {"seed": 7, "n": 4, "measure": "semicircle", "num_samples": 6}
        )
        stream = io.StringIO()
        batch.write_csv(stream)
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], "sample_id,point_index,value")
        self.assertEqual(len(lines), 1 + 6 * 4)
        self.assertEqual(float(lines[1].split(",")[2]), batch.points[0, 0])
        stream = io.StringIO()
        batch.write_metadata(stream)
        self.assertEqual(json.loads(stream.getvalue())["num_samples"], 6)


class StatisticTest(SimpleTestCase):
    def test_linear_statistic(self):
        f = imag_rational((1, 1j))
        values = linear_statistic([[0.0, 1.0]], f, 0.5, 0.0)
        np.testing.assert_allclose(values, [4 / 3])

    def test_mc_cumulants(self):
        values = np.random.default_rng(0).normal(1.0, 2.0, 20000)
        k1, k2 = mc_cumulants(values, 2)
        self.assertEqual((k1.order, k2.order), (1, 2))
        self.assertLess(abs(k1.estimate - 1.0), 5 * k1.stderr)
        self.assertLess(abs(k2.estimate - 4.0), 5 * k2.stderr)
        estimate, stderr = k2
        self.assertGreater(stderr, 0)

    def test_mc_cumulants_constant(self):
        results = mc_cumulants(np.zeros(100), 4)
        self.assertEqual([r.estimate for r in results], [0.0] * 4)
        self.assertEqual([r.stderr for r in results], [0.0] * 4)

    def test_mc_cumulants_limits(self):
        with self.assertRaises(ValueError):
            mc_cumulants(np.zeros(99))
        with self.assertRaises(ValueError):
            mc_cumulants(np.zeros(100), 5)

    def test_intensity_matches_trace(self):
        mu = MeasureDensity.semicircle()
        f = imag_rational((1, 1j))
        cfg = MesoscopicConfig(0.5, 0.3, 10)
        F = apply_scaled_function(truncate(free_jacobi(), 1, cfg.truncation_size), f, cfg)
        self.assertAlmostEqual(
            intensity_integral(mu, f, 10, 0.5, 0.3), trace_mean(F, 10), places=8
        )
