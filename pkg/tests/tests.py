import contextlib
import io
import json
import os
import tempfile

from django import forms
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from mesolab.__main__ import main
from mesolab.config import (
    ExperimentConfig,
    ExperimentConfigForm,
    parse_config_text,
    read_config_file,
    schema,
)
from mesolab.cumulants import IMAG_RATIONAL
from mesolab.exceptions import (
    ACCEPTANCE_ERROR_EXIT,
    CONFIG_ERROR_EXIT,
    NUMERICAL_ERROR_EXIT,
    ConfigurationError,
    DegenerateParameterError,
    exit_code_for,
)
from mesolab.forms import error_messages

from .forms import (
    ErrorMultiForm,
    GridMultiForm,
    LabelledGridMultiForm,
    OrderedGridMultiForm,
)


class MultiFormTest(SimpleTestCase):
    def test_fields(self):
        form = GridMultiForm()
        self.assertEqual(set(form.fields.keys()), {"n", "scale", "label"})
        self.assertTrue(all(isinstance(field, forms.Field) for field in form.fields.values()))

    def test_iter(self):
        # each child form yields its fieldsets
        form = GridMultiForm()
        self.assertEqual([fieldset.name for fieldset in form], ["grid", "label"])

    def test_getitem(self):
        form = GridMultiForm()
        self.assertIs(form["grid"], form.forms["grid"])
        with self.assertRaises(KeyError):
            form["missing"]

    def test_errors(self):
        form = ErrorMultiForm()
        self.assertEqual(form.errors, {})
        self.assertFalse(form.is_bound)
        self.assertFalse(form.is_valid())

    def test_non_field_errors(self):
        # we have to pass in a value for data to force real
        # validation.
        form = ErrorMultiForm(data={})

        self.assertFalse(form.is_valid())
        self.assertEqual(form.non_field_errors().as_text(), "* It broke\n* It broke")

    def test_is_not_valid(self):
        form = GridMultiForm({"scale": "2"})
        self.assertFalse(form.is_valid())
        self.assertFalse(form["grid"].is_valid())
        self.assertTrue(form["label"].is_valid())
        self.assertIn("n", form.errors)

        form = GridMultiForm({"n": "4"})
        self.assertTrue(form.is_valid())

    def test_unknown_keys(self):
        form = GridMultiForm({"n": "4", "bogus": "1", "other": "2"})
        self.assertFalse(form.is_valid())
        self.assertEqual(
            list(error_messages(form.non_field_errors())), ["Unknown key(s): bogus, other."]
        )

    def test_cleaned_data(self):
        form = GridMultiForm({"n": "4", "label": "x"})
        self.assertTrue(form.is_valid())
        self.assertEqual(form.cleaned_data, {"grid": {"n": 4, "scale": 1.0}, "label": {"label": "x"}})
        self.assertEqual(form.flat_cleaned_data, {"n": 4, "scale": 1.0, "label": "x"})

    def test_cleaned_data_skips_invalid_form(self):
        form = GridMultiForm({"n": "0"})
        self.assertFalse(form.is_valid())
        self.assertEqual(list(form.cleaned_data.keys()), ["label"])

    def test_custom_clean_errors(self):
        form = OrderedGridMultiForm({"n": "2", "scale": "3"})
        self.assertFalse(form.is_valid())
        self.assertTrue(form["grid"].is_valid())
        self.assertEqual(list(error_messages(form.non_field_errors())), ["scale must stay below n."])
        self.assertEqual(form.error_report(), "config: scale must stay below n.")

    def test_custom_clean_skipped_for_invalid_forms(self):
        form = OrderedGridMultiForm({"scale": "3"})
        self.assertFalse(form.is_valid())
        self.assertNotIn("__all__", form.errors)

    def test_custom_clean_data_change(self):
        form = LabelledGridMultiForm({"n": "8"})
        self.assertTrue(form.is_valid())
        self.assertEqual(form["label"].cleaned_data, {"label": "grid-8"})

    def test_cleaned_or_raise(self):
        with self.assertRaises(ConfigurationError) as ctx:
            GridMultiForm({"n": "x"}).cleaned_or_raise()
        self.assertIn("n: Enter a whole number.", str(ctx.exception))

    def test_as_text(self):
        text = GridMultiForm().as_text()
        self.assertIn("[Grid]", text)
        self.assertIn("[Label]", text)


class ConfigTest(SimpleTestCase):
    def test_defaults(self):
        cfg = ExperimentConfig.from_mapping({})
        self.assertEqual(cfg, ExperimentConfig())
        self.assertEqual(cfg.n_grid, (500, 1000, 2000, 4000))
        self.assertEqual(cfg.eta, 1j)
        self.assertEqual(cfg.m_list, (2, 3))

    def test_values_are_parsed(self):
        cfg = ExperimentConfig.from_mapping(
            {
                "n_grid": "100, 200",
                "gamma": "0.2",
                "gamma_list": "0.1,0.2",
                "eta": "0.5+2i",
                "adaptive": "true",
                "test_function": "bump(2)",
            }
        )
        self.assertEqual(cfg.n_grid, (100, 200))
        self.assertEqual(cfg.gamma_list, (0.1, 0.2))
        self.assertEqual(cfg.eta, complex(0.5, 2))
        self.assertTrue(cfg.adaptive)
        self.assertEqual(cfg.build_test_function().support, 2.0)

    def assertRejected(self, data, message):
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfig.from_mapping(data)
        self.assertIn(message, str(ctx.exception))

    def test_ordering(self):
        self.assertRejected({"gamma": "0.5", "beta_prime": "0.4"}, "config: Need 0 < gamma < beta_prime")

    def test_unit_interval(self):
        self.assertRejected({"beta": "1.2"}, "beta must lie strictly between 0 and 1.")

    def test_unknown_key(self):
        self.assertRejected({"gama": "0.3"}, "Unknown key(s): gama.")

    def test_grid(self):
        self.assertRejected({"n_grid": "100, 50"}, "n_grid: Sizes must be positive and strictly increasing.")

    def test_shift(self):
        self.assertRejected({"eta": "2"}, "eta: eta must have a nonzero imaginary part.")
        self.assertRejected({"x0": "2.5"}, "x0: x0 must lie in (-2, 2).")

    def test_presets(self):
        self.assertRejected({"test_function": "cubic"}, "test_function: Unknown test function")
        self.assertRejected({"lambda_rule": "inv_cube"}, "lambda_rule: Unknown lambda rule")
        self.assertRejected({"measure": "gauss"}, "measure: Measure `gauss` cannot be sampled")
        self.assertRejected({"m_list": "2,7"}, "m_list: Cumulant orders must lie in 1..6.")
        self.assertRejected({"samples": "10"}, "samples:")

    def test_operator(self):
        cfg = ExperimentConfig()
        self.assertEqual(cfg.operator_preset, "sparse(0.6,0.05,inv_log)")
        J = cfg.build_operator(1000)
        self.assertEqual(J.perturbation.beta, 0.6)
        self.assertIsNone(cfg.replace(operator="free").build_operator(10).perturbation)

    def test_shift_and_scales(self):
        cfg = ExperimentConfig(x0=0.5, gamma=0.5)
        self.assertEqual(cfg.shift(100).z, 0.5 + 0.1j)
        self.assertEqual(cfg.shift(100, gamma=0.25).gamma, 0.25)
        self.assertEqual(cfg.mesoscopic(100).scale, 10.0)
        self.assertEqual(cfg.build_test_function().kind, IMAG_RATIONAL)
        self.assertEqual(cfg.build_measure().name, "semicircle")

    def test_config_hash(self):
        cfg = ExperimentConfig()
        self.assertEqual(cfg.config_hash(), ExperimentConfig().config_hash())
        self.assertEqual(cfg.config_hash(), cfg.replace(output="out.csv").config_hash())
        self.assertNotEqual(cfg.config_hash(), cfg.replace(seed=1).config_hash())
        self.assertEqual(len(cfg.config_hash()), 64)

    def test_schema(self):
        text = schema()
        self.assertIn("[Scales]", text)
        self.assertIn("n_grid (integerlist) = [500, 1000, 2000, 4000]", text)
        self.assertIn("Requires 0 < gamma < beta_prime < beta < 1.", text)
        self.assertEqual(text, ExperimentConfigForm().as_text())


class ConfigFileTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, name, text):
        path = os.path.join(self.tmp.name, name)
        with open(path, "w", encoding="utf-8") as stream:
            stream.write(text)
        return path

    def test_parse(self):
        data = parse_config_text("# sweep\n\nn_grid = 100, 200  # sizes\ngamma=0.25\n")
        self.assertEqual(data, {"n_grid": "100, 200", "gamma": "0.25"})

    def test_parse_errors(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config_text("gamma 0.3", source="run.cfg")
        self.assertIn("run.cfg:1: expected `key = value`", str(ctx.exception))
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config_text("gamma = 0.3\ngamma = 0.2")
        self.assertIn("duplicate key `gamma`", str(ctx.exception))

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            read_config_file(os.path.join(self.tmp.name, "missing.cfg"))

    def test_from_file_with_overrides(self):
        path = self.write("run.cfg", "seed = 3\nsamples = 200\n")
        cfg = ExperimentConfig.from_file(path, seed=9, output=None)
        self.assertEqual((cfg.seed, cfg.samples, cfg.output), (9, 200, ""))


class ExitCodeTest(SimpleTestCase):
    def test_exit_codes(self):
        self.assertEqual(exit_code_for(ConfigurationError("x")), CONFIG_ERROR_EXIT)
        self.assertEqual(exit_code_for(DegenerateParameterError("x")), NUMERICAL_ERROR_EXIT)
        self.assertEqual(exit_code_for(RuntimeError("x")), 1)


class CommandTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def write_config(self, text):
        path = self.path("run.cfg")
        with open(path, "w", encoding="utf-8") as stream:
            stream.write(text)
        return path

    def test_schema(self):
        out = io.StringIO()
        call_command("mesolab", "schema", stdout=out)
        self.assertIn("[Observable]", out.getvalue())

    def test_resolvent_to_stdout(self):
        config = self.write_config("n_grid = 100, 200\n")
        out = io.StringIO()
        call_command("mesolab", "resolvent", "--config", config, stdout=out)
        lines = out.getvalue().splitlines()
        self.assertTrue(lines[0].startswith("n,z_real,z_imag,truncation"))
        self.assertEqual(len(lines), 3)

    def test_json_output_file(self):
        config = self.write_config("n_grid = 100, 200\n")
        out = self.path("result.json")
        call_command("mesolab", "resolvent", "--config", config, "--out", out, "--format", "json", "--seed", "5")
        with open(out, encoding="utf-8") as stream:
            data = json.load(stream)
        self.assertEqual(data["experiment"], "resolvent")
        self.assertEqual(data["provenance"]["seed"], 5)
        self.assertEqual([row["n"] for row in data["rows"]], [100, 200])
        self.assertTrue(all(check["passed"] for check in data["checks"]))

    def test_config_error(self):
        config = self.write_config("gamma = 0.9\n")
        with self.assertRaises(CommandError) as ctx:
            call_command("mesolab", "resolvent", "--config", config, stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, CONFIG_ERROR_EXIT)

    def test_numerical_error(self):
        config = self.write_config("n_grid = 100, 200\neta = 1e-13i\n")
        with self.assertRaises(CommandError) as ctx:
            call_command("mesolab", "resolvent", "--config", config, stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, NUMERICAL_ERROR_EXIT)
        self.assertIn("DegenerateParameterError", str(ctx.exception))

    def test_acceptance_failure_still_writes_output(self):
        # with m = 1 the decoupling norm cannot drop tenfold per doubling at these sizes
        config = self.write_config("n_grid = 100, 200\nwindow = 1\n")
        out = self.path("decoupling.csv")
        with self.assertRaises(CommandError) as ctx:
            call_command("mesolab", "decoupling", "--config", config, "--out", out)
        self.assertEqual(ctx.exception.returncode, ACCEPTANCE_ERROR_EXIT)
        with open(out, encoding="utf-8") as stream:
            self.assertEqual(len(stream.read().splitlines()), 3)

    def test_mc_writes_samples(self):
        config = self.write_config("n_grid = 3, 4\nsamples = 100\ntest_function = zero\n")
        out = self.path("mc.csv")
        call_command("mesolab", "mc", "--config", config, "--out", out, "--threads", "2")
        with open(out + ".samples-n4.csv", encoding="utf-8") as stream:
            lines = stream.read().splitlines()
        self.assertEqual(lines[0], "sample_id,point_index,value")
        self.assertEqual(len(lines), 1 + 100 * 4)
        with open(out + ".samples-n3.json", encoding="utf-8") as stream:
            metadata = json.load(stream)
        self.assertEqual(metadata["n"], 3)
        self.assertEqual(metadata["measure"], "semicircle")

    def test_console_entry_point(self):
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            main(["mesolab", "schema"])
        self.assertIn("[Run]", out.getvalue())
