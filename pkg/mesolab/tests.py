import io
import math

import numpy as np
import scipy.linalg as la
from django import forms
from django.core.exceptions import ImproperlyConfigured
from django.test import SimpleTestCase
from scipy import stats

from mesolab.exceptions import (
    ConfigurationError,
    DegenerateParameterError,
    FitError,
    IllConditionedError,
    IndexOverflowError,
    ResonanceError,
)
from mesolab.forms import (
    BetterForm,
    BoundFieldset,
    ComplexField,
    Fieldset,
    FloatListField,
    IntegerListField,
    flatten_to_tuple,
)
from mesolab.hankel import (
    besov_functionals,
    build_hankel,
    calibrate_bconst,
    hankel_trace_norm_exact,
    scaling_fit,
    section_size,
    trace_norm,
)
from mesolab.jacobi import (
    ProjectionWindow,
    RecurrenceCoefficients,
    SparsePerturbation,
    TruncatedJacobi,
    beta_spaced_sequence,
    constant_jacobi,
    free_jacobi,
    from_preset,
    is_beta_spaced,
    kls_singular_perturbation,
    lambda_rule,
    sparse_jacobi,
    sparse_perturbation,
    truncate,
)
from mesolab.resolvent import (
    SpectralShift,
    assemble_T_from_hankel,
    build_comparison_matrices,
    combes_thomas_fit,
    decouple,
    decoupling_difference,
    free_resolvent_block,
    free_resolvent_entry,
    numeric_resolvent,
    perturbation_difference,
    perturbed_resolvent,
    phi,
    rank_one_resolvent_diff,
    windowed_trace_norm,
)
from mesolab.results import Header, HeaderSet, RunResult, format_value


class TestUtils(SimpleTestCase):
    def test_flatten(self):
        fields1 = ("a", "b", "c")
        self.assertTupleEqual(flatten_to_tuple(fields1), fields1)

        fields2 = ("a", ("b", "c"), "d")
        self.assertTupleEqual(flatten_to_tuple(fields2), ("a", "b", "c", "d"))

        fields3 = ("a", ("b", "c"), "d", ("e", ("f", "g", ("h",)), "i"))
        self.assertTupleEqual(
            flatten_to_tuple(fields3), ("a", "b", "c", "d", "e", "f", "g", "h", "i")
        )


class TestFieldSets(SimpleTestCase):
    def test_basic_fieldset(self):
        fields = ("a", "b", "c")
        fieldset = Fieldset("the_name", fields=fields)
        self.assertEqual(fieldset.name, "the_name")
        self.assertTupleEqual(fields, fieldset.fields)

    def test_named_nested_fieldset(self):
        fields = ("a", ("sub_name", {"fields": ("b", "c")}), "d")
        fieldset = Fieldset("the_name", fields=fields)
        self.assertTupleEqual(fieldset.fields, ("a", "b", "c", "d"))
        fieldsets = tuple(iter(fieldset))
        self.assertTupleEqual(fieldsets[1].fields, ("b", "c"))
        self.assertEqual(fieldsets[1].name, "sub_name")

    def test_nonzero_fieldset(self):
        self.assertFalse(Fieldset("the_name", fields=[]))
        self.assertTrue(Fieldset("the_name", fields=["a"]))

    def test_duplicate_name_in_fieldset(self):
        with self.assertRaises(AttributeError):
            Fieldset("the_name", fields=("a", "a"))

    def test_legend_and_description(self):
        fieldset = Fieldset("the_name", fields=["a"], legend="Legend", description="Some text")
        self.assertEqual(fieldset.legend, "Legend")
        self.assertEqual(fieldset.description, "Some text")


class TestBetterForm(SimpleTestCase):
    def setUp(self):
        class TestForm(BetterForm):
            a = forms.IntegerField(initial=3, help_text="An integer.")
            b = forms.FloatField()
            c = forms.CharField(required=False, initial="x")

            class Meta:
                fieldsets = (
                    ("first", {"fields": ("a",), "legend": "First"}),
                    ("second", {"fields": ("b", "c"), "legend": "Second", "description": "More."}),
                )

        self.TestForm = TestForm

    def test_fieldset_lookups(self):
        form = self.TestForm()
        fieldsets = list(form.fieldsets)
        self.assertIsInstance(fieldsets[0], BoundFieldset)
        self.assertEqual(fieldsets[0].name, "first")
        self.assertTupleEqual(fieldsets[1].fieldset.fields, ("b", "c"))
        self.assertEqual(form["second"].legend, "Second")
        self.assertEqual(form["a"].name, "a")

    def test_missing_keys_take_initial(self):
        form = self.TestForm({"b": "1.5"})
        self.assertTrue(form.is_valid())
        self.assertEqual(form.cleaned_data, {"a": 3, "b": 1.5, "c": "x"})

    def test_required_field_without_initial(self):
        form = self.TestForm({})
        self.assertFalse(form.is_valid())
        self.assertIn("b", form.errors)
        with self.assertRaises(ConfigurationError) as ctx:
            form.cleaned_or_raise()
        self.assertIn("b: This field is required.", str(ctx.exception))

    def test_field_error(self):
        form = self.TestForm({"b": "1"})
        form.is_valid()
        form.field_error("a", "Wrong.")
        self.assertEqual(form.errors["a"], ["Wrong."])
        self.assertEqual(list(form["first"].errors), ["Wrong."])

    def test_form_error(self):
        form = self.TestForm({"b": "1"})
        form.is_valid()
        form.form_error("Whole form is wrong.")
        self.assertEqual(form.non_field_errors(), ["Whole form is wrong."])
        self.assertIn("config: Whole form is wrong.", form.error_report())

    def test_as_text(self):
        text = self.TestForm().as_text()
        self.assertIn("[First]", text)
        self.assertIn("a (integer) = 3", text)
        self.assertIn("An integer.", text)
        self.assertIn("b (float) [required]", text)
        self.assertIn("  More.", text)

    def test_no_fieldsets(self):
        class PlainForm(BetterForm):
            a = forms.CharField()

        form = PlainForm()
        self.assertEqual([field.name for field in form], ["a"])


class TestCustomFields(SimpleTestCase):
    def test_complex_field(self):
        field = ComplexField()
        self.assertEqual(field.clean("i"), 1j)
        self.assertEqual(field.clean("0.5-2i"), complex(0.5, -2))
        self.assertEqual(field.clean(field.prepare_value(complex(0.5, 2))), complex(0.5, 2))
        with self.assertRaises(forms.ValidationError):
            field.clean("one")

    def test_integer_list_field(self):
        field = IntegerListField()
        self.assertEqual(field.clean("500, 1000,2000"), [500, 1000, 2000])
        self.assertEqual(field.prepare_value([1, 2]), "1,2")
        with self.assertRaises(forms.ValidationError):
            field.clean("1, two")
        with self.assertRaises(forms.ValidationError):
            field.clean("")

    def test_float_list_field_may_be_empty(self):
        field = FloatListField(required=False, min_items=0)
        self.assertEqual(field.clean(""), [])
        self.assertEqual(field.clean("0.2,0.3"), [0.2, 0.3])


class TestHeaderSetAPI(SimpleTestCase):
    def test_header_bare_declaration(self):
        header = Header("max_error")
        self.assertEqual(header.label, "Max error")

    def test_header_names_must_be_unique(self):
        with self.assertRaises(ImproperlyConfigured):
            HeaderSet(("n", "n"))

    def test_header_set_mixed_declaration_styles(self):
        headers = HeaderSet((Header("n"), "gamma", ("ratio", {"help_text": "a / b"}), ("r2", "R squared")))
        self.assertEqual(headers.names, ["n", "gamma", "ratio", "r2"])
        self.assertEqual(headers["ratio"].help_text, "a / b")
        self.assertEqual(headers[3].label, "R squared")

    def test_bad_header_declaration(self):
        with self.assertRaises(ImproperlyConfigured):
            HeaderSet((1,))


class TestRunResult(SimpleTestCase):
    def make_result(self):
        result = RunResult("demo", HeaderSet(("n", "value", "flag")), {"seed": 0})
        result.add_row(n=1, value=0.1, flag=True)
        result.add_row(value=1 / 3, n=2, flag=False)
        return result

    def test_rows_follow_header_order(self):
        result = self.make_result()
        self.assertEqual(list(result.rows[1].keys()), ["n", "value", "flag"])
        self.assertEqual(result.column("n"), [1, 2])

    def test_row_must_match_columns(self):
        result = self.make_result()
        with self.assertRaises(ValueError):
            result.add_row(n=3, value=0.0)
        with self.assertRaises(ValueError):
            result.add_row(n=3, value=0.0, flag=True, extra=1)

    def test_checks(self):
        result = self.make_result()
        result.check("ok", True)
        self.assertTrue(result.accepted)
        with self.assertLogs("mesolab.results", "WARNING"):
            result.check("bad", False, "detail")
        self.assertFalse(result.accepted)
        self.assertEqual([c.name for c in result.failed_checks], ["bad"])

    def test_advisory_checks_are_reported_only(self):
        result = self.make_result()
        with self.assertLogs("mesolab.results", "INFO"):
            result.check("trend", False, "near a site", advisory=True)
        self.assertTrue(result.accepted)
        self.assertEqual(result.failed_checks, [])
        self.assertEqual(
            result.as_dict()["checks"],
            [{"name": "trend", "passed": False, "detail": "near a site", "advisory": True}],
        )

    def test_csv_is_exact(self):
        stream = io.StringIO()
        self.make_result().write(stream, "csv")
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], "n,value,flag")
        self.assertEqual(float(lines[2].split(",")[1]), 1 / 3)
        self.assertEqual(lines[1], "1,0.10000000000000001,true")

    def test_json(self):
        stream = io.StringIO()
        result = self.make_result()
        result.add_row(n=np.int64(3), value=math.nan, flag=False)
        result.write(stream, "json")
        self.assertIn('"value": "nan"', stream.getvalue())
        self.assertEqual(result.as_dict()["rows"][2]["n"], 3)

    def test_format_value(self):
        self.assertEqual(format_value(0.5), "0.5")
        self.assertEqual(format_value(1j), "0+1j")
        self.assertEqual(format_value(math.nan), "nan")


class TestBetaSpacing(SimpleTestCase):
    def test_sequence(self):
        self.assertEqual(beta_spaced_sequence(0.5, 0.1, 3), (1, 4, 10))

    def test_sequence_drops_repeats(self):
        sequence = beta_spaced_sequence(0.3, 0.05, 20)
        self.assertTrue(all(b > a for a, b in zip(sequence, sequence[1:])))

    def test_sequence_overflow(self):
        with self.assertRaises(IndexOverflowError):
            beta_spaced_sequence(0.99, 0.1, 10)

    def test_sequence_arguments(self):
        with self.assertRaises(ValueError):
            beta_spaced_sequence(1.0, 0.1, 3)
        with self.assertRaises(ValueError):
            beta_spaced_sequence(0.5, 0.0, 3)

    def test_powers_of_two_are_spaced(self):
        powers = [2**k for k in range(1, 41)]
        self.assertTrue(is_beta_spaced(powers, 0.3, 2, 10**6))

    def test_wide_windows_are_not_spaced(self):
        powers = [2**k for k in range(1, 41)]
        self.assertFalse(is_beta_spaced(powers, 0.9, 5, 10**6))

    def test_violation_is_reported(self):
        check = is_beta_spaced(range(1, 1000), 0.5, 1, 2000)
        self.assertFalse(check)
        self.assertEqual(check.violation, 100)

    def test_generated_sequence_is_spaced(self):
        sequence = beta_spaced_sequence(0.6, 0.05, 50)
        self.assertTrue(is_beta_spaced(sequence, 0.6, 1, sequence[-1]))

    def test_short_sequences_are_spaced(self):
        self.assertTrue(is_beta_spaced([5], 0.5, 10, 10**4))
        self.assertTrue(is_beta_spaced([], 0.5, 10, 10**4))


class TestJacobi(SimpleTestCase):
    def test_positive_off_diagonal(self):
        with self.assertRaises(ValueError):
            RecurrenceCoefficients.constant(0.0, 0.0)

    def test_declared_bound(self):
        coefficients = RecurrenceCoefficients(
            a=lambda k: np.ones(np.shape(k)), b=lambda k: np.asarray(k, dtype=float), bound=5
        )
        coefficients.values(1, 5)
        with self.assertRaises(ValueError):
            coefficients.values(1, 6)

    def test_truncation(self):
        T = truncate(free_jacobi(), 1, 5)
        self.assertEqual(T.size, 5)
        self.assertEqual(T.entry(2, 3), 1.0)
        self.assertEqual(T.entry(2, 4), 0.0)
        np.testing.assert_array_equal(T.to_dense(), np.eye(5, k=1) + np.eye(5, k=-1))
        with self.assertRaises(IndexError):
            T.entry(0, 1)

    def test_truncation_is_read_only(self):
        T = truncate(free_jacobi(), 1, 5)
        with self.assertRaises(ValueError):
            T.diag[0] = 1.0

    def test_window_keeps_absolute_indices(self):
        T = truncate(constant_jacobi(0.5, 0.25), 1, 20)
        W = T.window(5, 9)
        self.assertEqual((W.origin_offset, W.last), (5, 9))
        self.assertEqual(W.entry(5, 5), 0.25)
        self.assertEqual(W.entry(8, 9), 0.5)

    def test_banded_layout(self):
        T = TruncatedJacobi([1.0, 2.0, 3.0], [4.0, 5.0])
        np.testing.assert_array_equal(T.banded(1.0), [[0, 4, 5], [0, 1, 2], [4, 5, 0]])

    def test_perturbation(self):
        V = sparse_perturbation(0.5, 0.1, "inv_log", 1000)
        self.assertEqual(V.positions[:3], (1, 4, 10))
        self.assertAlmostEqual(V.values[0], 1 / math.log(2))
        J = sparse_jacobi(V)
        self.assertAlmostEqual(J.entry(4, 4), 1 / math.log(3))
        self.assertEqual(J.entry(5, 5), 0.0)
        self.assertEqual(J.entry(4, 5), 1.0)
        self.assertEqual(J.sites(3, 10), [(4, V.values[1]), (10, V.values[2])])

    def test_perturbation_horizon(self):
        V = sparse_perturbation(0.5, 0.1, "inv_log", 1000)
        with self.assertRaises(ValueError):
            V.sites(1, 1001)

    def test_perturbation_invariants(self):
        with self.assertRaises(ValueError):
            SparsePerturbation((4, 2), (0.5, 0.4), 0.5, "1/k", 10)
        with self.assertRaises(ValueError):
            SparsePerturbation((2, 4), (0.4, 0.5), 0.5, "1/k", 10)
        with self.assertRaises(ValueError):
            SparsePerturbation((200, 201), (0.5, 0.4), 0.5, "1/k", 1000)

    def test_lambda_rules(self):
        func, tag = lambda_rule("const_times_inv_log(2)")
        self.assertAlmostEqual(float(func(1.0)), 2 / math.log(2))
        self.assertEqual(tag, "2.0/log(k+1)")
        func, _ = lambda_rule("zero")
        self.assertEqual(float(func(3.0)), 0.0)
        with self.assertRaises(ConfigurationError):
            lambda_rule("inv_cube")

    def test_kls_singular(self):
        V = kls_singular_perturbation(10**5)
        self.assertEqual(V.positions, (2, 16, 512, 65536))
        self.assertAlmostEqual(V.values[0], 1 / math.sqrt(math.log(3)))

    def test_presets(self):
        self.assertIsNone(from_preset("free", 100).perturbation)
        self.assertEqual(from_preset("constant(0.5,0.1)", 100).entry(1, 1), 0.1)
        J = from_preset("sparse(0.5,0.1,zero)", 100)
        self.assertEqual(J.perturbation.positions[:2], (1, 4))
        self.assertEqual(from_preset("sparse", 100, beta=0.5, eps=0.1).perturbation.positions[1], 4)
        self.assertEqual(from_preset("kls_singular", 600).perturbation.positions, (2, 16, 512))
        with self.assertRaises(ConfigurationError):
            from_preset("bogus", 100)
        with self.assertRaises(ConfigurationError):
            from_preset("constant(1)", 100)

    def test_projection_window(self):
        window = ProjectionWindow.around(100, 1, 0.5)
        self.assertEqual((window.lo, window.hi), (80, 120))
        self.assertIn(80, window)
        self.assertNotIn(121, window)
        self.assertEqual(window.local(), slice(79, 120))
        self.assertEqual(ProjectionWindow.first(7).size, 7)
        self.assertEqual(ProjectionWindow.around(3, 1, 0.9).lo, 1)
        kept = ProjectionWindow(2, 3).apply(np.ones((4, 4)))
        self.assertEqual(kept.sum(), 4)
        self.assertEqual(kept[1, 2], 1)
        with self.assertRaises(ValueError):
            ProjectionWindow(0, 3)

    def test_spectrum_of_truncations(self):
        free = truncate(free_jacobi(), 1, 200)
        eigenvalues = la.eigvalsh_tridiagonal(free.diag, free.offdiag)
        self.assertTrue(np.all(np.abs(eigenvalues) <= 2 + 1e-8))
        shifted = truncate(constant_jacobi(0.5, 0.25), 1, 200)
        eigenvalues = la.eigvalsh_tridiagonal(shifted.diag, shifted.offdiag)
        self.assertTrue(np.all((eigenvalues >= 0.25 - 1 - 1e-8) & (eigenvalues <= 0.25 + 1 + 1e-8)))
        V = sparse_perturbation(0.6, 0.05, "inv_log", 2000)
        perturbed = truncate(sparse_jacobi(V), 1, 2000)
        eigenvalues = la.eigvalsh_tridiagonal(perturbed.diag, perturbed.offdiag)
        reach = 2 + max(abs(value) for value in V.values)
        self.assertTrue(np.all(np.abs(eigenvalues) <= reach + 1e-8))


class TestFreeResolvent(SimpleTestCase):
    def test_phi(self):
        self.assertAlmostEqual(phi(2.5), 0.5)
        self.assertAlmostEqual(phi(-2.5), -0.5)
        w = phi(0.3 + 0.2j)
        self.assertLess(abs(w), 1)
        self.assertAlmostEqual(w + 1 / w, 0.3 + 0.2j)

    def test_phi_on_random_points(self):
        rng = np.random.default_rng(5)
        zetas = rng.uniform(-5, 5, 1000) + 1j * rng.choice([-1, 1], 1000) * rng.uniform(1e-3, 5, 1000)
        for zeta in zetas:
            w = phi(zeta)
            self.assertLess(abs(w), 1)
            self.assertLess(abs(w * w - zeta * w + 1), 1e-12 * max(1.0, abs(zeta)))

    def test_phi_decay_rate(self):
        # 1 - |phi(x0 + i n^-gamma)| ~ n^-gamma / sqrt(4 - x0^2)
        x0, gamma = 0.5, 0.5
        ns = np.geomspace(5e3, 2e4, 9)
        gaps = [1 - abs(phi(x0 + 1j * n**-gamma)) for n in ns]
        fit = stats.linregress(np.log(ns), np.log(gaps))
        self.assertAlmostEqual(fit.slope / -gamma, 1.0, delta=0.02)
        amplitude = (1 - abs(phi(x0 + 1j * 1e4**-gamma))) * 1e4**gamma
        self.assertAlmostEqual(amplitude * math.sqrt(4 - x0**2), 1.0, delta=0.02)

    def test_phi_on_the_cut(self):
        with self.assertRaises(DegenerateParameterError):
            phi(1.0)
        with self.assertRaises(DegenerateParameterError):
            phi(2.0 + 1e-14j)

    def test_entry(self):
        self.assertAlmostEqual(free_resolvent_entry(1, 1, 3), -(3 - math.sqrt(5)) / 2)

    def test_closed_form_matches_inversion(self):
        z = 0.3 + 0.5j
        T = truncate(free_jacobi(), 1, 200)
        index = np.arange(1, 21)
        numeric = numeric_resolvent(T, z, index)[:20]
        np.testing.assert_allclose(numeric, free_resolvent_block(index, index, z), atol=1e-12)

    def test_full_inverse(self):
        T = truncate(constant_jacobi(0.5, 0.1), 1, 30)
        z = 0.2 + 0.3j
        R = numeric_resolvent(T, z)
        np.testing.assert_allclose(R, np.linalg.inv(T.to_dense() - z * np.eye(30)), atol=1e-12)

    def test_columns_outside(self):
        T = truncate(free_jacobi(), 5, 10)
        with self.assertRaises(ValueError):
            numeric_resolvent(T, 1j, [4])

    def test_ill_conditioned(self):
        T = TruncatedJacobi([0.0, 0.0], [1.0])
        with self.assertRaises(IllConditionedError):
            numeric_resolvent(T, 1 + 1e-15j)

    def test_residual_tolerance_is_absolute(self):
        T = truncate(constant_jacobi(0.5, 0.1), 1, 30)
        with self.settings(MESOLAB={"RESIDUAL_TOLERANCE": 1e-300}):
            with self.assertRaises(IllConditionedError):
                numeric_resolvent(T, 0.2 + 0.3j)

    def test_spectral_shift(self):
        shift = SpectralShift(0.5, 1j, 0.5, 100)
        self.assertEqual(shift.z, 0.5 + 0.1j)
        self.assertEqual(shift.conjugate().z, 0.5 - 0.1j)
        with self.assertRaises(ValueError):
            SpectralShift(2.0, 1j, 0.5, 100)
        with self.assertRaises(ValueError):
            SpectralShift(0.0, 1.0, 0.5, 100)


class TestCombesThomas(SimpleTestCase):
    def test_fit_recovers_decay(self):
        z = 0.5j
        index = np.arange(101, 301)
        fit = combes_thomas_fit(free_resolvent_block(index, index, z), 100, 0.3)
        self.assertAlmostEqual(fit.d_hat, -math.log(abs(phi(z))), places=6)
        self.assertGreater(fit.r2, 0.999)
        C, d, r2 = fit
        self.assertEqual(d, fit.d_hat)

    def test_too_few_pairs(self):
        index = np.arange(1, 6)
        with self.assertRaises(FitError):
            combes_thomas_fit(free_resolvent_block(index, index, 0.5j), 100, 0.3)


class TestDecoupling(SimpleTestCase):
    def test_cuts(self):
        H = decouple(truncate(free_jacobi(), 1, 400), 200, 1, 0.5)
        self.assertEqual((H.cut_lo, H.cut_hi), (171, 228))
        self.assertEqual(H.operator.entry(171, 172), 0.0)
        self.assertEqual(H.operator.entry(170, 171), 1.0)
        self.assertEqual(H.blocks, ((1, 171), (172, 228), (229, 400)))
        self.assertEqual((H.middle.origin_offset, H.middle.last), (172, 228))

    def test_cuts_inside_truncation(self):
        with self.assertRaises(ValueError):
            decouple(truncate(free_jacobi(), 1, 220), 200, 1, 0.5)

    def test_cut_before_the_first_site(self):
        # n - 2 m n^beta < 1 has no valid lower cut
        with self.assertRaises(ValueError):
            decouple(truncate(free_jacobi(), 1, 200), 20, 2, 0.6)
        with self.assertRaises(ValueError):
            decouple(truncate(free_jacobi(), 10, 200), 20, 1, 0.6)

    def test_difference_matches_direct_inversion(self):
        z = 0.5j
        T = truncate(sparse_jacobi(sparse_perturbation(0.5, 0.1, "inv_log", 400)), 1, 400)
        H = decouple(T, 200, 1, 0.5)
        window = ProjectionWindow.around(200, 1, 0.3)
        index = np.arange(window.lo, window.hi + 1)
        direct = (
            numeric_resolvent(T, z, index)[window.local()]
            - numeric_resolvent(H.operator, z, index)[window.local()]
        )
        np.testing.assert_allclose(decoupling_difference(H, z, window), direct, atol=1e-10)

    def test_perturbation_difference(self):
        z = 0.2 + 0.5j
        T0 = truncate(free_jacobi(), 1, 300)
        T = truncate(sparse_jacobi(sparse_perturbation(0.5, 0.1, "inv_log", 300)), 1, 300)
        window = ProjectionWindow.around(150, 1, 0.5)
        index = np.arange(window.lo, window.hi + 1)
        direct = (
            numeric_resolvent(T0, z, index)[window.local()]
            - numeric_resolvent(T, z, index)[window.local()]
        )
        np.testing.assert_allclose(perturbation_difference(T0, T, z, window), direct, atol=1e-10)
        self.assertFalse(perturbation_difference(T0, T0, z, window).any())


class TestRankOne(SimpleTestCase):
    def test_update_matches_inversion(self):
        z = 0.2 + 0.4j
        H0 = truncate(free_jacobi(), 11, 40)
        diag = np.array(H0.diag)
        diag[[9, 14]] += [0.5, -0.25]
        H = TruncatedJacobi(diag, H0.offdiag, 11)
        updated = perturbed_resolvent(numeric_resolvent(H0, z), [(20, 0.5), (25, -0.25)], 11)
        np.testing.assert_allclose(updated, numeric_resolvent(H, z), atol=1e-12)

    def test_single_difference(self):
        R0 = numeric_resolvent(truncate(free_jacobi(), 1, 10), 0.5j)
        diff = rank_one_resolvent_diff(R0, 3, 0.0)
        self.assertFalse(diff.any())
        with self.assertRaises(ValueError):
            rank_one_resolvent_diff(R0, 11, 0.5)

    def test_difference_has_rank_one(self):
        R0 = numeric_resolvent(truncate(free_jacobi(), 1, 60), 0.3 + 0.2j)
        s = la.svdvals(rank_one_resolvent_diff(R0, 30, 0.4))
        self.assertLess(s[1], 1e-10 * s[0])

    def test_resonance(self):
        with self.assertRaises(ResonanceError):
            rank_one_resolvent_diff(np.array([[1.0]]), 1, -1.0)


class TestComparison(SimpleTestCase):
    def test_decomposition(self):
        shift = SpectralShift(0.3, 1j, 0.3, 100)
        comparison = build_comparison_matrices(100, 1, 0.5, shift, 103, 0.4)
        np.testing.assert_allclose(
            comparison.G, comparison.lam * comparison.T + comparison.R, atol=1e-13
        )

    def test_site_outside_window(self):
        shift = SpectralShift(0.3, 1j, 0.3, 100)
        with self.assertRaises(ValueError):
            build_comparison_matrices(100, 1, 0.5, shift, 200, 0.4)

    def test_T_has_rank_one(self):
        shift = SpectralShift(0.0, 1j, 0.3, 100)
        s = la.svdvals(build_comparison_matrices(100, 1, 0.5, shift, 100, 0.3).T)
        self.assertLess(s[1], 1e-10 * s[0])

    def test_remainder_vanishes(self):
        norms = []
        for n in (2**j for j in range(8, 14)):
            shift = SpectralShift(0.0, 1j, 0.3, n)
            comparison = build_comparison_matrices(n, 1, 0.45, shift, n, 0.3)
            norms.append(trace_norm(comparison.R))
        self.assertLess(max(norms), 1e-12)
        self.assertEqual(norms, sorted(norms, reverse=True))

    def test_amplitude_in_the_small_coupling_limit(self):
        x0 = 0.3
        shift = SpectralShift(x0, 1j, 0.3, 10**6)
        comparison = build_comparison_matrices(10**6, 1, 0.2, shift, 10**6, 1e-8)
        self.assertAlmostEqual(abs(comparison.amplitude), 1 / (4 - x0**2), places=3)

    def test_hankel_assembly(self):
        shift = SpectralShift(0.0, 1j, 0.3, 100)
        for r in (100, 103, 80):
            T = assemble_T_from_hankel(100, 1, 0.5, shift, r)
            direct = build_comparison_matrices(100, 1, 0.5, shift, r, 0.0).T
            np.testing.assert_allclose(T, direct, atol=1e-12)

    def test_hankel_assembly_needs_site_in_window(self):
        shift = SpectralShift(0.0, 1j, 0.3, 100)
        with self.assertRaises(ValueError):
            assemble_T_from_hankel(100, 1, 0.5, shift, 200)

    def test_windowed_trace_norm(self):
        M = np.diag([1.0, -2.0, 3.0, 4.0])
        self.assertAlmostEqual(windowed_trace_norm(M, ProjectionWindow(2, 3)), 5.0)


class TestHankel(SimpleTestCase):
    def test_exact_trace_norm(self):
        self.assertAlmostEqual(hankel_trace_norm_exact(0.5), 4 / 3)
        self.assertAlmostEqual(hankel_trace_norm_exact(0.5, 2), 1.25)
        self.assertEqual(hankel_trace_norm_exact(0.0), 1.0)

    def test_matrix_trace_norm(self):
        H = build_hankel(0.5, 60)
        self.assertAlmostEqual(trace_norm(H.entries), 4 / 3, places=12)
        self.assertAlmostEqual(trace_norm(build_hankel(0.3 + 0.6j, 80).entries), hankel_trace_norm_exact(0.3 + 0.6j), places=10)

    def test_symbol(self):
        np.testing.assert_allclose(build_hankel(0.5, 3).symbol, [1, 0.5, 0.25])
        with self.assertRaises(ValueError):
            build_hankel(1.0, 3)
        with self.assertRaises(ValueError):
            build_hankel(0.5, 0)

    def test_section_size(self):
        self.assertEqual(section_size(0.5, 1e-14), 24)
        self.assertEqual(section_size(0.0), 1)

    def test_bound_dominates(self):
        for q in (0.5, 0.9, 0.99j, -0.999):
            report = besov_functionals(q, 0.3, 100)
            self.assertGreaterEqual(report.bound, report.exact)
            self.assertGreaterEqual(report.slack, 1)

    def test_calibration(self):
        symbols = [(0.9, 0.3, 100), (0.99, 0.3, 1000)]
        bconst = calibrate_bconst(symbols)
        self.assertTrue(math.log2(bconst).is_integer())
        for q, gamma, n in symbols:
            report = besov_functionals(q, gamma, n, bconst)
            self.assertGreaterEqual(report.bound, report.exact)
        halved = [besov_functionals(q, gamma, n, bconst / 2).slack for q, gamma, n in symbols]
        self.assertLess(min(halved), 1)

    def test_scaling_fit(self):
        exponent, r2 = scaling_fit([(n, 2 * n**0.3) for n in (100, 200, 400, 800)])
        self.assertAlmostEqual(exponent, 0.3)
        self.assertAlmostEqual(r2, 1.0)
        with self.assertRaises(FitError):
            scaling_fit([(100, 1.0), (200, 2.0), (400, 3.0)])
        with self.assertRaises(ValueError):
            scaling_fit([(100, 1.0), (100, 2.0), (400, 3.0), (800, 4.0)])
