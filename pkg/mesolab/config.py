"""
Experiment configuration.

A configuration is a flat ``key = value`` text file; every key is a field of
one of the forms below, and keys left out take the documented defaults.
``ExperimentConfigForm`` validates the four groups together and enforces the
ordering ``0 < gamma < beta_prime < beta < 1`` across them.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

from django import forms
from django.core.exceptions import ValidationError

from . import cumulants, jacobi, resolvent, sampler
from .exceptions import ConfigurationError
from .forms import BetterForm, ComplexField, FloatListField, IntegerListField
from .multiform import MultiForm

logger = logging.getLogger(__name__)

EXPERIMENTS = ("resolvent", "decoupling", "hankel", "stability", "clt", "mc")


def _open_unit_interval(name, value):
    if not 0 < value < 1:
        raise ValidationError(
            "%(name)s must lie strictly between 0 and 1.", code="range", params={"name": name}
        )
    return value


def _as_validation_error(func, value):
    try:
        func(value)
    except ConfigurationError as e:
        raise ValidationError(str(e), code="invalid")
    return value


class ScalesForm(BetterForm):
    experiment = forms.ChoiceField(
        choices=[("", "")] + [(e, e) for e in EXPERIMENTS],
        required=False,
        initial="",
        help_text="Experiment id; the command line subcommand takes precedence.",
    )
    n_grid = IntegerListField(
        initial=[500, 1000, 2000, 4000],
        help_text="Matrix sizes n, strictly increasing.",
    )
    gamma = forms.FloatField(initial=0.3, help_text="Mesoscopic exponent.")
    beta = forms.FloatField(initial=0.6, help_text="Spacing exponent of the perturbation sites.")
    beta_prime = forms.FloatField(initial=0.45, help_text="Exponent of the comparison window.")
    gamma_list = FloatListField(
        required=False,
        min_items=0,
        initial=[],
        help_text="Extra exponents swept by the hankel experiment (defaults to gamma).",
    )
    x0 = forms.FloatField(initial=0.0, help_text="Centre of the mesoscopic window, in (-2, 2).")
    eta = ComplexField(initial=1j, help_text="Shift direction, Im(eta) != 0.")
    window = forms.IntegerField(
        initial=2, min_value=1, help_text="Window multiplier m in n +/- 2 m n^beta."
    )

    class Meta:
        fieldsets = (
            ("experiment", {"fields": ("experiment", "n_grid"), "legend": "Experiment"}),
            (
                "scales",
                {
                    "fields": ("gamma", "beta", "beta_prime", "gamma_list", "window"),
                    "legend": "Scales",
                    "description": "Requires 0 < gamma < beta_prime < beta < 1.",
                },
            ),
            ("shift", {"fields": ("x0", "eta"), "legend": "Spectral shift z_n = x0 + eta / n^gamma"}),
        )

    def clean_n_grid(self):
        grid = self.cleaned_data["n_grid"]
        if any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("Sizes must be positive and strictly increasing.", code="grid")
        return grid

    def clean_gamma(self):
        return _open_unit_interval("gamma", self.cleaned_data["gamma"])

    def clean_beta(self):
        return _open_unit_interval("beta", self.cleaned_data["beta"])

    def clean_beta_prime(self):
        return _open_unit_interval("beta_prime", self.cleaned_data["beta_prime"])

    def clean_gamma_list(self):
        return [_open_unit_interval("gamma_list", g) for g in self.cleaned_data["gamma_list"]]

    def clean_x0(self):
        x0 = self.cleaned_data["x0"]
        if not -2 < x0 < 2:
            raise ValidationError("x0 must lie in (-2, 2).", code="range")
        return x0

    def clean_eta(self):
        eta = self.cleaned_data["eta"]
        if eta is None or eta.imag == 0:
            raise ValidationError("eta must have a nonzero imaginary part.", code="real")
        return eta


class OperatorForm(BetterForm):
    operator = forms.CharField(
        required=False,
        initial="",
        help_text="free, constant(a,b), sparse(beta,eps,rule) or kls_singular; "
        "empty means sparse(beta,eps,lambda_rule).",
    )
    lambda_rule = forms.CharField(
        initial="inv_log",
        help_text="inv_log, inv_sqrt, const_times_inv_log(c) or zero.",
    )
    eps = forms.FloatField(initial=0.05, help_text="Slack in n_k = floor(k^(1/(1-beta)+eps)).")

    class Meta:
        fieldsets = (
            ("operator", {"fields": ("operator", "lambda_rule", "eps"), "legend": "Operator"}),
        )

    def clean_lambda_rule(self):
        return _as_validation_error(jacobi.lambda_rule, self.cleaned_data["lambda_rule"])

    def clean_eps(self):
        eps = self.cleaned_data["eps"]
        if not eps > 0:
            raise ValidationError("eps must be positive.", code="range")
        return eps

    def clean_operator(self):
        preset = self.cleaned_data["operator"].strip()
        if preset:
            _as_validation_error(lambda text: jacobi._split_call(text), preset)
        return preset


class ObservableForm(BetterForm):
    test_function = forms.CharField(
        initial="imag_rational(1:i)",
        help_text="imag_rational(c:eta,...), rational(c:eta,...), bump(R) or zero.",
    )
    m_list = IntegerListField(initial=[2, 3], help_text="Cumulant orders.")
    measure = forms.CharField(initial="semicircle", help_text="Sampled measure, semicircle(a,b).")

    class Meta:
        fieldsets = (
            ("observable", {"fields": ("test_function", "m_list", "measure"), "legend": "Observable"}),
        )

    def clean_test_function(self):
        return _as_validation_error(cumulants.parse_test_function, self.cleaned_data["test_function"])

    def clean_m_list(self):
        orders = self.cleaned_data["m_list"]
        if any(not 1 <= m <= 6 for m in orders):
            raise ValidationError("Cumulant orders must lie in 1..6.", code="range")
        return orders

    def clean_measure(self):
        return _as_validation_error(sampler.parse_measure, self.cleaned_data["measure"])


class RunForm(BetterForm):
    seed = forms.IntegerField(initial=0, min_value=0, max_value=2**64 - 1)
    samples = forms.IntegerField(initial=10000, min_value=100, help_text="Monte Carlo sample count.")
    output = forms.CharField(required=False, initial="", help_text="Output path; empty for stdout.")
    adaptive = forms.BooleanField(
        required=False, initial=False, help_text="Keep doubling the truncation tail until it settles."
    )

    class Meta:
        fieldsets = (("run", {"fields": ("seed", "samples", "output", "adaptive"), "legend": "Run"}),)


class ExperimentConfigForm(MultiForm):
    form_classes = {
        "scales": ScalesForm,
        "operator": OperatorForm,
        "observable": ObservableForm,
        "run": RunForm,
    }

    def clean(self):
        scales = self.cleaned_data["scales"]
        gamma, beta_prime, beta = scales["gamma"], scales["beta_prime"], scales["beta"]
        if not 0 < gamma < beta_prime < beta < 1:
            raise ValidationError(
                "Need 0 < gamma < beta_prime < beta < 1, got gamma=%(gamma)s, "
                "beta_prime=%(beta_prime)s, beta=%(beta)s.",
                code="ordering",
                params={"gamma": gamma, "beta_prime": beta_prime, "beta": beta},
            )
        return self.cleaned_data


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = ""
    n_grid: tuple = (500, 1000, 2000, 4000)
    gamma: float = 0.3
    beta: float = 0.6
    beta_prime: float = 0.45
    gamma_list: tuple = ()
    x0: float = 0.0
    eta: complex = 1j
    window: int = 2
    operator: str = ""
    lambda_rule: str = "inv_log"
    eps: float = 0.05
    test_function: str = "imag_rational(1:i)"
    m_list: tuple = (2, 3)
    measure: str = "semicircle"
    seed: int = 0
    samples: int = 10000
    output: str = field(default="", compare=False)
    adaptive: bool = False

    @classmethod
    def from_mapping(cls, data):
        form = ExperimentConfigForm(dict(data))
        cleaned = form.cleaned_or_raise()
        values = {
            key: tuple(value) if isinstance(value, list) else value
            for key, value in cleaned.items()
        }
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides):
        data = read_config_file(path)
        data.update({key: value for key, value in overrides.items() if value is not None})
        return cls.from_mapping(data)

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return ExperimentConfig(**values)

    @property
    def operator_preset(self):
        return self.operator or "sparse({0},{1},{2})".format(self.beta, self.eps, self.lambda_rule)

    def build_operator(self, horizon):
        return jacobi.from_preset(
            self.operator_preset, horizon, beta=self.beta, eps=self.eps, rule=self.lambda_rule
        )

    def build_test_function(self):
        return cumulants.parse_test_function(self.test_function)

    def build_measure(self):
        return sampler.parse_measure(self.measure)

    def shift(self, n, gamma=None):
        return resolvent.SpectralShift(self.x0, self.eta, gamma or self.gamma, n)

    def mesoscopic(self, n, gamma=None):
        return cumulants.MesoscopicConfig(gamma or self.gamma, self.x0, n)

    def serializable(self):
        values = asdict(self)
        values["eta"] = [self.eta.real, self.eta.imag]
        values.pop("output")
        return values

    def config_hash(self):
        payload = json.dumps(self.serializable(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def parse_config_text(text, source="<config>"):
    """
    ``key = value`` per line; ``#`` starts a comment, blank lines are skipped.
    """
    data = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition("=")
        if not separator or not key.strip():
            raise ConfigurationError(
                "{0}:{1}: expected `key = value`, got `{2}`".format(source, number, raw.strip())
            )
        key = key.strip()
        if key in data:
            raise ConfigurationError("{0}:{1}: duplicate key `{2}`".format(source, number, key))
        data[key] = value.strip()
    return data


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as stream:
            text = stream.read()
    except OSError as e:
        raise ConfigurationError("Cannot read config `{0}`: {1}".format(path, e))
    logger.debug("Read configuration from %s", path)
    return parse_config_text(text, source=str(path))


def schema():
    """The documented configuration keys, grouped by fieldset."""
    return ExperimentConfigForm().as_text()
