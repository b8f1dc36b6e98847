"""
Cumulants of mesoscopic linear statistics.

Cumulants follow ``log E exp(t X) = sum_j C_j t^j``,
so ``C_j = kappa_j / j!`` and ``C_2`` is half the variance.
"""

import logging
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la
from scipy import integrate

from . import conf
from .exceptions import ConfigurationError, DeterminantError, QuadratureError
from .jacobi import truncate

logger = logging.getLogger(__name__)

RATIONAL = "rational"
IMAG_RATIONAL = "imag_rational"
GENERIC_C1 = "generic_c1"


@dataclass(frozen=True)
class TestFunction:
    """
    A mesoscopic test function.

    Rational kinds are ``sum c_j / (x - eta_j)`` over ``poles`` (or its
    imaginary part); ``generic_c1`` wraps a callable that vanishes outside
    ``[-support, support]``.
    """

    __test__ = False

    kind: str
    poles: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False)
    support: float = 0.0
    derivative_func: Optional[Callable] = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.kind in (RATIONAL, IMAG_RATIONAL):
            for c, eta in self.poles:
                if complex(eta).imag == 0:
                    raise ValueError("Pole {0} lies on the real line".format(eta))
        elif self.kind == GENERIC_C1:
            if self.func is None:
                raise ValueError("generic_c1 test functions need a callable")
            if self.support < 0:
                raise ValueError("Support radius must be non-negative")
        else:
            raise ValueError("Unknown test function kind `{0}`".format(self.kind))

    def __str__(self):
        return self.label or self.kind

    @property
    def is_real(self):
        return self.kind != RATIONAL

    @property
    def is_zero(self):
        if self.kind == GENERIC_C1:
            return self.support == 0
        return not any(c for c, eta in self.poles)

    def _rational(self, x, power):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape, dtype=complex)
        for c, eta in self.poles:
            total += c / (x - complex(eta)) ** power
        return total

    def __call__(self, x):
        if self.kind == RATIONAL:
            return self._rational(x, 1)
        if self.kind == IMAG_RATIONAL:
            return self._rational(x, 1).imag
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= self.support
        return np.where(inside, self.func(np.where(inside, x, 0.0)), 0.0)

    def derivative(self, x):
        if self.kind == RATIONAL:
            return -self._rational(x, 2)
        if self.kind == IMAG_RATIONAL:
            return (-self._rational(x, 2)).imag
        x = np.asarray(x, dtype=float)
        if self.derivative_func is None:
            step = 1e-6 * max(1.0, self.support)
            return (self(x + step) - self(x - step)) / (2 * step)
        inside = np.abs(x) <= self.support
        return np.where(inside, self.derivative_func(np.where(inside, x, 0.0)), 0.0)

    def rescaled(self, a):
        """``x -> f(a x)``."""
        if a <= 0:
            raise ValueError("Scale must be positive")
        label = "{0}@{1}".format(self, a)
        if self.kind != GENERIC_C1:
            poles = tuple((c / a, complex(eta) / a) for c, eta in self.poles)
            return TestFunction(self.kind, poles, label=label)
        func, derivative = self.func, self.derivative_func
        return TestFunction(
            GENERIC_C1,
            func=lambda x: func(a * np.asarray(x)),
            support=self.support / a,
            derivative_func=(lambda x: a * derivative(a * np.asarray(x))) if derivative else None,
            label=label,
        )


def rational(*poles, label=""):
    return TestFunction(RATIONAL, tuple((float(c), complex(eta)) for c, eta in poles), label=label)


def imag_rational(*poles, label=""):
    return TestFunction(IMAG_RATIONAL, tuple((float(c), complex(eta)) for c, eta in poles), label=label)


def bump(radius):
    """``(1 - (x/R)^2)^2`` on ``[-R, R]``."""
    if radius <= 0:
        raise ValueError("Bump radius must be positive")
    return TestFunction(
        GENERIC_C1,
        func=lambda x: (1 - (x / radius) ** 2) ** 2,
        support=float(radius),
        derivative_func=lambda x: -4 * x / radius**2 * (1 - (x / radius) ** 2),
        label="bump({0})".format(radius),
    )


def zero():
    return TestFunction(
        GENERIC_C1,
        func=lambda x: np.zeros(np.shape(x)),
        support=0.0,
        derivative_func=lambda x: np.zeros(np.shape(x)),
        label="zero",
    )


_BARE_I = re.compile(r"(?<![\d.])([ij])")


def parse_complex(text):
    """
    Accepts ``i`` or ``j`` for the imaginary unit: ``i``, ``-2i``, ``0.5+i``.
    """
    cleaned = _BARE_I.sub(r"1\1", text.strip().replace(" ", "")).replace("i", "j")
    try:
        return complex(cleaned)
    except ValueError:
        raise ConfigurationError("`{0}` is not a complex number".format(text))


def parse_test_function(text):
    """
    ``imag_rational(c:eta, ...)``, ``rational(c:eta, ...)``, ``bump(R)`` or
    ``zero``.
    """
    match = re.match(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$", text)
    if match is None:
        raise ConfigurationError("Cannot parse test function `{0}`".format(text))
    name, args = match.groups()
    try:
        if name in (RATIONAL, IMAG_RATIONAL) and args:
            poles = []
            for term in args.split(","):
                c, eta = term.split(":")
                poles.append((float(c), parse_complex(eta)))
            builder = rational if name == RATIONAL else imag_rational
            return builder(*poles, label=text.strip())
        if name == "bump" and args:
            return bump(float(args))
        if name == "zero" and not args:
            return zero()
    except ValueError as e:
        raise ConfigurationError("Unusable test function `{0}`: {1}".format(text, e))
    raise ConfigurationError(
        "Unknown test function `{0}`. Choices are: imag_rational(c:eta,...), "
        "rational(c:eta,...), bump(R), zero.".format(text)
    )


def minimum_tail(n, gamma):
    return math.ceil(conf.get("TRUNCATION_FACTOR") * n**gamma * math.log(n)) if n > 1 else 0


@dataclass(frozen=True)
class MesoscopicConfig:
    gamma: float
    x0: float
    n: int
    truncation_size: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1), got {0}".format(self.gamma))
        if not -2 < self.x0 < 2:
            raise ValueError("x0 must lie in (-2, 2), got {0}".format(self.x0))
        if self.n < 1:
            raise ValueError("n must be positive")
        tail = minimum_tail(self.n, self.gamma)
        if not self.truncation_size:
            size = self.n + max(tail, conf.get("TRUNCATION_FLOOR"))
            object.__setattr__(self, "truncation_size", size)
        elif self.truncation_size - self.n < tail or self.truncation_size <= self.n:
            raise ValueError(
                "Truncation {0} leaves a tail shorter than {1}".format(
                    self.truncation_size, tail
                )
            )

    @property
    def scale(self):
        return self.n**self.gamma

    def doubled(self):
        return replace(self, truncation_size=self.n + 2 * (self.truncation_size - self.n))


def apply_scaled_function(T, f, cfg):
    """
    ``f(n^gamma (T - x0))`` through the eigendecomposition of ``T``.
    """
    if T.origin_offset != 1 or T.size < cfg.n:
        raise ValueError("Truncation must cover [1, n] from the first index")
    eigenvalues, vectors = la.eigh_tridiagonal(T.diag, T.offdiag)
    values = f(cfg.scale * (eigenvalues - cfg.x0))
    F = (vectors * values) @ vectors.T
    return (F + F.T) / 2


@lru_cache(maxsize=None)
def composition_weights(m):
    """
    ``(parts, (-1)^(j+1) / (j l_1! ... l_j!))`` over every composition of
    ``m`` into ``j >= 2`` positive parts; ``j = 1`` contributes nothing.
    """
    weights = []
    for j in range(2, m + 1):
        for parts in product(range(1, m - j + 2), repeat=j):
            if sum(parts) != m:
                continue
            denominator = j
            for part in parts:
                denominator *= math.factorial(part)
            weights.append((parts, Fraction((-1) ** (j + 1), denominator)))
    return tuple(weights)


class CumulantExpansion:
    """
    Trace-formula cumulants of ``F`` against the projection onto the first
    ``n`` coordinates.  Blocks ``(F^l)[:n, :n]`` and products of them are
    cached, so asking for several orders reuses the work.
    """

    def __init__(self, F, n):
        F = np.asarray(F)
        if F.ndim != 2 or F.shape[0] != F.shape[1] or F.shape[0] < n:
            raise ValueError("F must be square of size at least n={0}".format(n))
        self.F = F
        self.n = n
        self._columns = {0: np.eye(F.shape[0], n, dtype=F.dtype)}
        self._products = {}

    def block(self, power):
        """``(F^power)[:n, :n]``."""
        for l in range(len(self._columns), power + 1):
            self._columns[l] = self.F @ self._columns[l - 1]
        return self._columns[power][: self.n]

    def _product(self, parts):
        if parts not in self._products:
            if len(parts) == 1:
                self._products[parts] = self.block(parts[0])
            else:
                self._products[parts] = self._product(parts[:-1]) @ self.block(parts[-1])
        return self._products[parts]

    def mean(self):
        return np.trace(self.F[: self.n, : self.n])

    def cumulant(self, m):
        max_order = conf.get("MAX_CUMULANT_ORDER")
        if m > max_order:
            raise ValueError("Cumulants above order {0} are not supported".format(max_order))
        if m < 2:
            raise ValueError("Use the mean for the first cumulant")
        reference = np.trace(self.block(m))
        total = 0.0
        for parts, weight in composition_weights(m):
            left = self._product(parts[:-1])
            right = self.block(parts[-1])
            total += float(weight) * (np.sum(left * right.T) - reference)
        return total


def trace_cumulant(F, n, m):
    return CumulantExpansion(F, n).cumulant(m)


def trace_mean(F, n):
    return CumulantExpansion(F, n).mean()


def fredholm_cumulants(F, n, m_max, h=None, nodes=None):
    """
    Taylor coefficients ``C_1..C_m_max`` of ``log det(I + (e^(tF) - I) P_n)``.

    The log-determinant is evaluated at ``t = h w^k`` on the roots of unity
    ``w`` as a sum of principal logarithms of the eigenvalues of
    ``(e^(tF))[:n, :n]``; the coefficients follow from the discrete Cauchy
    integral on that circle.
    """
    F = np.asarray(F, dtype=float)
    eigenvalues, vectors = la.eigh(F)
    norm = np.abs(eigenvalues).max() if eigenvalues.size else 0.0
    if norm == 0:
        return [0.0] * m_max
    if h is None:
        h = conf.get("FREDHOLM_RADIUS") / norm
    if nodes is None:
        nodes = conf.get("FREDHOLM_NODES")
    if h * norm >= math.log(2):
        raise ValueError("Stencil radius {0} leaves |e^(tF) - I| >= 1".format(h))
    if nodes <= m_max:
        raise ValueError("Need more stencil nodes than cumulant orders")

    head = vectors[:n]
    roots = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    logdets = np.empty(nodes, dtype=complex)
    for k, t in enumerate(h * roots):
        block = (head * np.exp(t * eigenvalues)) @ head.T
        spectrum = np.linalg.eigvals(block)
        logdets[k] = np.sum(np.log(spectrum))
    real_nodes = {0: h, nodes // 2: -h} if nodes % 2 == 0 else {0: h}
    for k, t in real_nodes.items():
        if not (np.isfinite(logdets[k]) and abs(logdets[k].imag) < 1e-8):
            raise DeterminantError("Fredholm determinant not positive at t={0}".format(t))

    coefficients = []
    for order in range(1, m_max + 1):
        c = np.mean(logdets * roots ** (-order)) / h**order
        coefficients.append(float(c.real))
    return coefficients


@dataclass(frozen=True)
class CumulantReport:
    m: int
    n: int
    value_mu0: float
    value_mu: float
    diff: float
    truncation_estimate: float
    truncation_size: int = 0
    unconverged: bool = False


def _cumulant_values(J, f, cfg, m_list):
    T = truncate(J, 1, cfg.truncation_size)
    expansion = CumulantExpansion(apply_scaled_function(T, f, cfg), cfg.n)
    return [expansion.mean() if m == 1 else expansion.cumulant(m) for m in m_list]


def compare_cumulants(J0, J, f, cfg, m_list, adaptive=False):
    """
    ``C_m`` under ``J0`` and ``J`` for every ``m`` in ``m_list``.

    ``truncation_estimate`` is the change under doubling of the truncation
    tail.  With ``adaptive`` the tail keeps doubling (up to the configured
    limit) until that change is below the tail tolerance.  The values and
    ``truncation_size`` reported are those of the last truncation that was
    compared against its doubling, never of the doubled one.
    """
    m_list = list(m_list)
    current = cfg
    mu0 = _cumulant_values(J0, f, current, m_list)
    mu = mu0 if J is J0 else _cumulant_values(J, f, current, m_list)
    doublings = 0
    while True:
        wider = current.doubled()
        mu0_wide = _cumulant_values(J0, f, wider, m_list)
        mu_wide = mu0_wide if J is J0 else _cumulant_values(J, f, wider, m_list)
        estimates = [
            max(abs(a - b), abs(c - d))
            for a, b, c, d in zip(mu0, mu0_wide, mu, mu_wide)
        ]
        doublings += 1
        if (
            not adaptive
            or max(estimates) < conf.get("TAIL_TOLERANCE")
            or doublings >= conf.get("TRUNCATION_MAX_DOUBLINGS")
        ):
            break
        current, mu0, mu = wider, mu0_wide, mu_wide

    threshold = conf.get("UNCONVERGED_THRESHOLD")
    reports = []
    for m, a, b, estimate in zip(m_list, mu0, mu, estimates):
        report = CumulantReport(
            m=m,
            n=cfg.n,
            value_mu0=float(a),
            value_mu=float(b),
            diff=float(a) - float(b),
            truncation_estimate=float(estimate),
            truncation_size=current.truncation_size,
            unconverged=estimate > threshold,
        )
        if report.unconverged:
            logger.warning(
                "C_%d at n=%d moved by %.3e under tail doubling", m, cfg.n, estimate
            )
        reports.append(report)
    return reports


@dataclass(frozen=True)
class QuadratureSpec:
    epsabs: float = 1e-11
    epsrel: float = 1e-9
    band: Optional[float] = None


@dataclass(frozen=True)
class VarianceTarget:
    sigma2: float
    quadrature_error: float


def _difference_quotient(f, band):
    def quotient(x, y):
        if abs(x - y) < band:
            return float(f.derivative(x)) ** 2
        return ((float(f(x)) - float(f(y))) / (x - y)) ** 2

    return quotient


def _checked(integration, *args, **kwargs):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, error = integration(*args, **kwargs)
    if not (np.isfinite(value) and np.isfinite(error)):
        raise QuadratureError("Quadrature returned a non-finite value")
    if caught and error > 1e-6 * max(1.0, abs(value)):
        raise QuadratureError(
            "Quadrature did not converge (error {0:.2e}): {1}".format(error, caught[0].message)
        )
    for warning in caught:
        logger.debug("Quadrature warning with acceptable error: %s", warning.message)
    return value, error


def sigma_f_squared(f, quad=None):
    """
    ``(1 / 4 pi^2) int int ((f(x) - f(y)) / (x - y))^2 dx dy``.

    Rational kinds are integrated over the whole plane after ``x = tan u``;
    compactly supported functions over ``[-R, R]^2`` plus the exact
    contribution of the outer strips.
    """
    quad = quad or QuadratureSpec()
    if not f.is_real:
        raise ValueError("The limiting variance needs a real-valued test function")
    if f.is_zero:
        return VarianceTarget(0.0, 0.0)
    band = quad.band if quad.band is not None else conf.get("DIAGONAL_BAND")
    quotient = _difference_quotient(f, band)
    tolerances = dict(epsabs=quad.epsabs, epsrel=quad.epsrel)

    if f.kind == GENERIC_C1:
        R = f.support
        square, square_error = _checked(
            integrate.dblquad, lambda y, x: quotient(x, y), -R, R, -R, R, **tolerances
        )
        strip, strip_error = _checked(
            integrate.quad,
            lambda x: float(f(x)) ** 2 * (1 / (R - x) + 1 / (R + x)),
            -R,
            R,
            **tolerances,
        )
        total, error = square + 2 * strip, square_error + 2 * strip_error
    else:
        half = np.pi / 2

        def integrand(v, u):
            x, y = math.tan(u), math.tan(v)
            return quotient(x, y) / (math.cos(u) ** 2 * math.cos(v) ** 2)

        total, error = _checked(integrate.dblquad, integrand, -half, half, -half, half, **tolerances)

    scale = 4 * np.pi**2
    logger.debug("sigma_f^2 for %s: %.12g (+/- %.2e)", f, total / scale, error / scale)
    return VarianceTarget(max(total / scale, 0.0), error / scale)
