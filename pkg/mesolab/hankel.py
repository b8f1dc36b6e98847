"""
Hankel matrices ``(q^(j+k))`` and the bounds on their trace norm.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special, stats

from . import conf
from .exceptions import FitError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HankelMatrix:
    q: complex
    size: int

    @cached_property
    def symbol(self):
        """``v_j = q^j`` for ``j = 0..size-1``; ``0^0 = 1``."""
        return np.power(complex(self.q), np.arange(self.size))

    @cached_property
    def entries(self):
        return np.outer(self.symbol, self.symbol)


def build_hankel(q, size):
    if not abs(q) < 1:
        raise ValueError("Hankel symbol needs |q| < 1, got |q|={0}".format(abs(q)))
    if size < 1:
        raise ValueError("size must be at least 1")
    return HankelMatrix(complex(q), int(size))


def trace_norm(M):
    return float(np.sum(np.linalg.svd(np.asarray(M), compute_uv=False)))


def hankel_trace_norm_exact(q, size=math.inf):
    """
    ``sum_{j < size} |q|^(2j)``, the trace norm of the rank-one ``v v^T``.
    """
    p = abs(q) ** 2
    if p == 0:
        return 1.0
    if math.isinf(size):
        return 1.0 / (1.0 - p)
    return (1.0 - p**size) / (1.0 - p)


def section_size(q, tail=None):
    """
    Smallest section with ``|q|^(2 size)`` below ``tail``.
    """
    if tail is None:
        tail = conf.get("HANKEL_TAIL")
    p = abs(q) ** 2
    if p == 0:
        return 1
    return max(1, math.ceil(math.log(tail) / math.log(p)))


@dataclass(frozen=True)
class BesovBoundReport:
    A_val: float
    B_val: float
    bound: float
    exact: float
    Bconst: float

    @property
    def slack(self):
        return self.bound / self.exact


def _weighted_tail(k, c):
    """``c^2 int_1^inf x^k exp(-2 c x) dx``."""
    rate = 2 * c
    return c**2 * special.gammaincc(k + 1, rate) * math.factorial(k) / rate ** (k + 1)


def besov_functionals(q, gamma, n, bconst=None):
    """
    The bound ``2 B (|h(0)| + sqrt(2) (A + sqrt(A B)))`` for the majorant
    ``h(x) = exp(-d x / n^gamma)`` with ``d = -n^gamma log|q|``.

    ``A`` and ``B`` use the closed geometric sums and incomplete gamma
    integrals of ``h``, so the report is exact up to rounding.
    """
    if not 0 < abs(q) < 1:
        raise ValueError("Majorant needs 0 < |q| < 1, got |q|={0}".format(abs(q)))
    if bconst is None:
        bconst = conf.get("HANKEL_BCONST")
    c = -math.log(abs(q))
    p = math.exp(-2 * c)
    mass = 1.0 / (1.0 - p)
    second_moment = p * (1.0 + p) / (1.0 - p) ** 3
    A = (mass * second_moment) ** 0.25
    B = math.sqrt(math.sqrt(_weighted_tail(2, c)) * math.sqrt(_weighted_tail(4, c)))
    bound = 2 * bconst * (1.0 + math.sqrt(2) * (A + math.sqrt(A * B)))
    report = BesovBoundReport(
        A_val=A,
        B_val=B,
        bound=bound,
        exact=hankel_trace_norm_exact(q),
        Bconst=bconst,
    )
    logger.debug(
        "Besov functionals at n=%d, gamma=%s: A=%.4g B=%.4g bound=%.4g exact=%.4g",
        n, gamma, A, B, bound, report.exact,
    )
    return report


def calibrate_bconst(symbols):
    """
    Smallest power of two for which the bound dominates the exact trace norm
    on every ``(q, gamma, n)`` in ``symbols``.
    """
    needed = max(
        besov_functionals(q, gamma, n, bconst=1.0).slack ** -1
        for q, gamma, n in symbols
    )
    return 2.0 ** math.ceil(math.log2(needed))


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    r2: float

    def __iter__(self):
        return iter((self.exponent, self.r2))


def scaling_fit(values):
    """
    Log-log slope of ``norm`` against ``n`` over ``(n, norm)`` pairs.
    """
    values = list(values)
    if len(values) < 4:
        raise FitError("Scaling fit needs at least 4 points, got {0}".format(len(values)))
    n, norm = (np.asarray(column, dtype=float) for column in zip(*values))
    if np.any(np.diff(n) <= 0):
        raise ValueError("n must be strictly increasing")
    if np.any(norm <= 0):
        raise ValueError("Norms must be positive for a log-log fit")
    fit = stats.linregress(np.log(n), np.log(norm))
    return ScalingFit(float(fit.slope), float(fit.rvalue**2))
