import math

from django.test import SimpleTestCase

from mesolab import __version__
from mesolab.config import ExperimentConfig
from mesolab.exceptions import ConfigurationError
from mesolab.experiments import (
    REGISTRY,
    fit_chain_constant,
    run_clt_check,
    run_decoupling_check,
    run_experiment,
    run_hankel_scaling,
    run_mc_crosscheck,
    run_resolvent_validation,
    run_stability_sweep,
)


def passed(result, name):
    (check,) = [check for check in result.checks if check.name == name]
    return check.passed


class ResolventExperimentTest(SimpleTestCase):
    def setUp(self):
        self.cfg = ExperimentConfig(experiment="resolvent", n_grid=(100, 200))

    def test_accepted(self):
        result = run_resolvent_validation(self.cfg)
        self.assertTrue(result.accepted, result.failed_checks)
        self.assertEqual(result.column("n"), [100, 200])
        for row in result.rows:
            self.assertLess(row["window_lo"], row["n"])
            self.assertGreater(row["window_hi"], row["n"])
            self.assertLess(row["max_error"], 1e-10)
            self.assertAlmostEqual(row["decay_predicted"], 0.5)
            self.assertAlmostEqual(row["decay_scaled"], 0.5, delta=0.05)

    def test_threads_do_not_change_rows(self):
        serial = run_resolvent_validation(self.cfg)
        parallel = run_resolvent_validation(self.cfg, threads=2)
        self.assertEqual(serial.rows, parallel.rows)

    def test_provenance(self):
        result = run_resolvent_validation(self.cfg.replace(n_grid=(100,)))
        self.assertEqual(result.provenance["experiment"], "resolvent")
        self.assertEqual(result.provenance["version"], __version__)
        self.assertEqual(result.provenance["config_hash"], self.cfg.replace(n_grid=(100,)).config_hash())


class DecouplingExperimentTest(SimpleTestCase):
    def test_free_operator(self):
        cfg = ExperimentConfig(experiment="decoupling", n_grid=(100,), operator="free")
        result = run_decoupling_check(cfg)
        (row,) = result.rows
        self.assertTrue(row["stand_in"])
        self.assertEqual(row["sites"], 0)
        self.assertEqual(row["norm_free"], row["norm_perturbed"])
        self.assertTrue(passed(result, "zero perturbation leaves the norm unchanged at n=100"))
        self.assertTrue(result.accepted, result.failed_checks)

    def test_rank_one_identity(self):
        cfg = ExperimentConfig(experiment="decoupling", n_grid=(100, 200))
        result = run_decoupling_check(cfg)
        self.assertTrue(passed(result, "rank-one identity"))
        for row in result.rows:
            self.assertLess(row["cut_lo"], row["n"])
            self.assertGreater(row["cut_hi"], row["n"])
            self.assertGreater(row["norm_free"], 0)
            self.assertGreater(row["bound"], 0)


    def test_default_window_drops_tenfold(self):
        cfg = ExperimentConfig(experiment="decoupling", n_grid=(500, 1000, 2000))
        self.assertEqual(cfg.window, 2)
        result = run_decoupling_check(cfg)
        for name in ("norm_free", "norm_perturbed"):
            norms = result.column(name)
            for a, b in zip(norms, norms[1:]):
                self.assertGreaterEqual(a / b, 10, name)
            self.assertTrue(passed(result, "%s drops 10x per doubling" % name))
        self.assertTrue(result.accepted, result.failed_checks)


class HankelExperimentTest(SimpleTestCase):
    def test_scaling(self):
        cfg = ExperimentConfig(experiment="hankel", n_grid=(100, 200, 400, 800), gamma_list=(0.2, 0.3))
        result = run_hankel_scaling(cfg)
        self.assertEqual(result.column("gamma"), [0.2] * 4 + [0.3] * 4)
        for row in result.rows:
            self.assertGreaterEqual(row["bound"], row["exact"])
            self.assertLess(row["assembly_error"], 1e-12)
            self.assertAlmostEqual(row["exact"], 1 / (1 - row["q_abs"] ** 2))
            self.assertFalse(math.isnan(row["exponent_exact"]))
        self.assertTrue(passed(result, "bound dominates exact norm"))
        self.assertTrue(passed(result, "Hankel assembly reproduces T"))

    def test_short_grid_skips_exponents(self):
        cfg = ExperimentConfig(experiment="hankel", n_grid=(100, 200))
        result = run_hankel_scaling(cfg)
        self.assertTrue(all(math.isnan(value) for value in result.column("exponent_bound")))
        self.assertEqual(result.column("gamma"), [0.3, 0.3])


class StabilityExperimentTest(SimpleTestCase):
    def test_zero_perturbation(self):
        cfg = ExperimentConfig(experiment="stability", n_grid=(50, 100), lambda_rule="zero", m_list=(2,))
        result = run_stability_sweep(cfg)
        self.assertEqual(result.column("diff"), [0.0, 0.0])
        self.assertEqual(result.column("m"), [2, 2])
        self.assertTrue(passed(result, "zero perturbation gives zero diff"))
        self.assertTrue(result.accepted, result.failed_checks)

    def test_bump_has_no_chain(self):
        cfg = ExperimentConfig(
            experiment="stability", n_grid=(50,), test_function="bump(1)", m_list=(2,)
        )
        result = run_stability_sweep(cfg)
        self.assertTrue(math.isnan(result.rows[0]["chain"]))


    def test_chain_constant(self):
        rows = [
            dict(n=500, abs_diff=1e-6, chain=1e-5),
            dict(n=1000, abs_diff=7e-4, chain=1e-3),
            dict(n=2000, abs_diff=4e-7, chain=1e-6),
            dict(n=4000, abs_diff=4e-6, chain=2e-5),
        ]
        C, C_head = fit_chain_constant(rows)
        self.assertAlmostEqual(C, 0.7)
        self.assertAlmostEqual(C_head, 0.7)
        C, C_head = fit_chain_constant(rows[:1] + rows[2:])
        self.assertAlmostEqual(C, 0.4)
        self.assertAlmostEqual(C_head, 0.1)
        C, _ = fit_chain_constant(rows + [dict(n=8000, abs_diff=1e-9, chain=0.0)])
        self.assertEqual(C, math.inf)

    def test_site_at_grid_point_makes_trend_advisory(self):
        # n = 200 is itself a site of the default sequence
        cfg = ExperimentConfig(experiment="stability", n_grid=(100, 200), m_list=(2,))
        result = run_stability_sweep(cfg)
        self.assertEqual(result.rows[1]["site_distance"], 0.0)
        trend = [check for check in result.checks if check.name.startswith("|diff|")]
        self.assertEqual(len(trend), 2)
        self.assertTrue(all(check.advisory for check in trend))
        self.assertFalse(any(check in result.failed_checks for check in trend))
        self.assertIn("bound chain constant stable", [check.name for check in result.checks])


class CltExperimentTest(SimpleTestCase):
    def test_variance_target(self):
        cfg = ExperimentConfig(experiment="clt", n_grid=(50, 100))
        result = run_clt_check(cfg)
        for row in result.rows:
            self.assertAlmostEqual(row["sigma2"], 1 / 8, places=7)
            self.assertLess(row["relative_gap"], 1)
        self.assertTrue(passed(result, "mu and mu0 columns differ by the reported diff"))

    def test_vanished_cumulants_count_as_halved(self):
        cfg = ExperimentConfig(experiment="clt", n_grid=(50, 100))
        with self.settings(MESOLAB={"CUMULANT_FLOOR": 1.0}):
            result = run_clt_check(cfg)
        self.assertTrue(passed(result, "|c3_mu0| halves over the grid"))
        self.assertTrue(passed(result, "|c4_mu0| halves over the grid"))


class MonteCarloExperimentTest(SimpleTestCase):
    def test_zero_function(self):
        cfg = ExperimentConfig(experiment="mc", n_grid=(3,), samples=100, test_function="zero", seed=4)
        result = run_mc_crosscheck(cfg)
        self.assertTrue(result.accepted, result.failed_checks)
        self.assertTrue(passed(result, "zero test function gives zero statistics"))
        batch = result.artifacts["samples"][3]
        self.assertEqual(batch.points.shape, (100, 3))
        self.assertEqual(batch.seed, (4, 3))

    def test_cumulants_match_trace_formulas(self):
        cfg = ExperimentConfig(experiment="mc", n_grid=(5,), samples=2000, seed=1)
        result = run_mc_crosscheck(cfg)
        self.assertTrue(result.accepted, result.failed_checks)
        (row,) = result.rows
        self.assertLessEqual(abs(row["kappa1"] - row["trace_mean"]), 3 * row["kappa1_se"])
        self.assertLessEqual(abs(row["kappa2"] - row["two_c2"]), 3 * row["kappa2_se"])

    def test_seeded_runs_repeat(self):
        cfg = ExperimentConfig(experiment="mc", n_grid=(2,), samples=100, seed=9)
        first, second = run_mc_crosscheck(cfg), run_mc_crosscheck(cfg, threads=2)
        self.assertEqual(first.rows, second.rows)
        self.assertAlmostEqual(first.rows[0]["trace_mean"], first.rows[0]["quadrature_mean"], places=8)


class RegistryTest(SimpleTestCase):
    def test_registry(self):
        self.assertEqual(
            list(REGISTRY), ["resolvent", "decoupling", "hankel", "stability", "clt", "mc"]
        )

    def test_unknown_experiment(self):
        with self.assertRaises(ConfigurationError):
            run_experiment("bogus", ExperimentConfig())

    def test_run_sets_experiment(self):
        result = run_experiment("resolvent", ExperimentConfig(n_grid=(100,)))
        self.assertEqual(result.experiment, "resolvent")
        self.assertEqual(result.provenance["experiment"], "resolvent")
