"""
Jacobi operators: the free matrix J0, constant-coefficient variants and
sparse diagonal perturbations J = J0 + V.

Indices are 1-based everywhere, as in the matrices they describe.  Finite
realizations (``TruncatedJacobi``) carry the absolute index of their first row
so that window algebra never renumbers silently.
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import conf
from .exceptions import ConfigurationError, IndexOverflowError

logger = logging.getLogger(__name__)

INT64_MAX = int(np.iinfo(np.int64).max)


def _constant(value):
    return lambda index: np.full(np.shape(index), float(value))


@dataclass(frozen=True)
class RecurrenceCoefficients:
    """
    Off-diagonal ``a`` and diagonal ``b`` sequences, evaluated on demand.

    ``a`` and ``b`` take an integer array of (1-based) indices and return the
    coefficients there.  ``bound`` is the declared sup-norm of both sequences;
    every materialized value is checked against it.
    """

    a: Callable
    b: Callable
    bound: float

    @classmethod
    def constant(cls, a, b):
        if not a > 0:
            raise ValueError("Off-diagonal coefficient must be positive, got {0}".format(a))
        return cls(a=_constant(a), b=_constant(b), bound=max(abs(a), abs(b)))

    def values(self, lo, hi):
        """
        Returns ``(a[lo..hi], b[lo..hi])`` as float arrays.
        """
        index = np.arange(lo, hi + 1)
        a = np.asarray(self.a(index), dtype=float)
        b = np.asarray(self.b(index), dtype=float)
        if np.any(a <= 0):
            bad = int(index[np.argmax(a <= 0)])
            raise ValueError("a_{0} is not positive".format(bad))
        if max(np.max(np.abs(a)), np.max(np.abs(b))) > self.bound:
            raise ValueError(
                "Coefficients on [{0}, {1}] exceed the declared bound {2}".format(
                    lo, hi, self.bound
                )
            )
        return a, b


@dataclass(frozen=True)
class SpacingCheck:
    spaced: bool
    violation: Optional[int] = None

    def __bool__(self):
        return self.spaced


def is_beta_spaced(seq, beta, M, horizon, start=None):
    """
    Finite-horizon check that every window ``[n - M n^beta, n + M n^beta]``
    with ``start <= n <= horizon`` holds at most one element of ``seq``.

    Returns a ``SpacingCheck`` carrying the first violating ``n``.
    """
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size > 1 and np.any(np.diff(seq) <= 0):
        raise ValueError("Sequence must be strictly increasing")
    if start is None:
        start = conf.get("SPACING_START")
    if seq.size < 2 or horizon < start:
        return SpacingCheck(True)

    chunk = 1 << 20
    for first in range(int(start), int(horizon) + 1, chunk):
        n = np.arange(first, min(first + chunk, int(horizon) + 1), dtype=float)
        reach = M * n**beta
        lo = np.searchsorted(seq, np.ceil(n - reach), side="left")
        hi = np.searchsorted(seq, np.floor(n + reach), side="right")
        crowded = np.flatnonzero(hi - lo >= 2)
        if crowded.size:
            violation = int(n[crowded[0]])
            logger.debug("Spacing violated at n=%d (beta=%s, M=%s)", violation, beta, M)
            return SpacingCheck(False, violation)
    return SpacingCheck(True)


def beta_spaced_sequence(beta, eps, count):
    """
    ``n_k = floor(k^(1/(1-beta) + eps))`` for ``k = 1..count``, with repeats
    (floor collisions at small k) dropped.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1), got {0}".format(beta))
    if not eps > 0:
        raise ValueError("eps must be positive, got {0}".format(eps))
    if count < 1:
        raise ValueError("count must be at least 1, got {0}".format(count))
    power = 1.0 / (1.0 - beta) + eps
    sequence = []
    for k in range(1, count + 1):
        try:
            value = k**power
        except OverflowError:
            value = math.inf
        if not value <= INT64_MAX:
            raise IndexOverflowError(
                "n_{0} = {1}^{2:.4f} does not fit a 64-bit index".format(k, k, power)
            )
        value = math.floor(value)
        if not sequence or value != sequence[-1]:
            sequence.append(value)
    return tuple(sequence)


LAMBDA_RULES = {
    "inv_log": lambda k: 1.0 / np.log(k + 1.0),
    "inv_sqrt": lambda k: 1.0 / np.sqrt(k),
    "zero": lambda k: np.zeros(np.shape(k)),
}

_CALL_RE = re.compile(r"^\s*(?P<name>\w+)\s*(?:\((?P<args>.*)\))?\s*$")


def _split_call(text):
    match = _CALL_RE.match(text)
    if match is None:
        raise ConfigurationError("Cannot parse preset `{0}`".format(text))
    return match.group("name"), match.group("args")


def lambda_rule(rule):
    """
    Resolves a rule id to ``(callable on k, decay tag)``.
    """
    name, args = _split_call(rule)
    if name == "const_times_inv_log":
        try:
            c = float(args)
        except (TypeError, ValueError):
            raise ConfigurationError(
                "`const_times_inv_log` takes one number, got `{0}`".format(args)
            )
        return (lambda k: c / np.log(k + 1.0)), "{0}/log(k+1)".format(c)
    if name in LAMBDA_RULES and args is None:
        tags = {"inv_log": "1/log(k+1)", "inv_sqrt": "1/sqrt(k)", "zero": "0"}
        return LAMBDA_RULES[name], tags[name]
    raise ConfigurationError(
        "Unknown lambda rule `{0}`. Choices are: inv_log, inv_sqrt, "
        "const_times_inv_log(c), zero.".format(rule)
    )


@dataclass(frozen=True)
class SparsePerturbation:
    """
    The diagonal operator V with ``V[n_k, n_k] = lambda_k``.

    Only the sites up to ``horizon`` are materialized; ``decay`` declares how
    ``lambda_k`` tends to zero and ``|lambda_k|`` must be non-increasing from
    the ``monotone_from``-th site on.
    """

    positions: tuple
    values: tuple
    beta: float
    decay: str
    horizon: int
    monotone_from: int = 0

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if positions.shape != values.shape:
            raise ValueError("Need exactly one value per position")
        if positions.size and (positions[0] < 1 or np.any(np.diff(positions) <= 0)):
            raise ValueError("Positions must be strictly increasing and >= 1")
        if positions.size and positions[-1] > self.horizon:
            raise ValueError("Position beyond the declared horizon")
        tail = np.abs(values[self.monotone_from :])
        if np.any(np.diff(tail) > 0):
            raise ValueError(
                "|lambda_k| must be non-increasing after site {0} "
                "(declared decay {1})".format(self.monotone_from, self.decay)
            )
        check = is_beta_spaced(
            positions,
            self.beta,
            conf.get("SPACING_M"),
            min(self.horizon, conf.get("SPACING_HORIZON")),
        )
        if not check:
            raise ValueError(
                "Positions are not {0}-spaced: window around n={1} holds two "
                "sites".format(self.beta, check.violation)
            )

    def sites(self, lo, hi):
        """
        ``(position, value)`` pairs with ``lo <= position <= hi``.
        """
        if hi > self.horizon:
            raise ValueError(
                "Perturbation is materialized up to {0}, asked for {1}".format(
                    self.horizon, hi
                )
            )
        positions = np.asarray(self.positions, dtype=np.int64)
        first = np.searchsorted(positions, lo, side="left")
        last = np.searchsorted(positions, hi, side="right")
        return [(int(p), float(v)) for p, v in zip(self.positions[first:last], self.values[first:last])]


def sparse_perturbation(beta, eps, rule, horizon):
    power = 1.0 / (1.0 - beta) + eps
    count = int(math.ceil(horizon ** (1.0 / power))) + 2
    positions = [p for p in beta_spaced_sequence(beta, eps, count) if p <= horizon]
    func, tag = lambda_rule(rule)
    values = func(np.arange(1, len(positions) + 1, dtype=float))
    return SparsePerturbation(
        positions=tuple(positions),
        values=tuple(float(v) for v in values),
        beta=beta,
        decay=tag,
        horizon=horizon,
    )


def kls_singular_perturbation(horizon, beta=0.5):
    """
    Sites ``2^(k^2)`` with ``lambda_k = 1/sqrt(log(k+2))``: not square
    summable, with ``n_{k+1}/n_k -> infinity``.
    """
    positions = []
    k = 1
    while 2 ** (k * k) <= horizon:
        positions.append(2 ** (k * k))
        k += 1
    k = np.arange(1, len(positions) + 1, dtype=float)
    values = 1.0 / np.sqrt(np.log(k + 2.0))
    return SparsePerturbation(
        positions=tuple(positions),
        values=tuple(float(v) for v in values),
        beta=beta,
        decay="1/sqrt(log(k+2))",
        horizon=horizon,
    )


@dataclass(frozen=True)
class TruncatedJacobi:
    """
    The finite window ``[origin_offset, origin_offset + size - 1]`` of a
    Jacobi operator.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    origin_offset: int = 1

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float)
        offdiag = np.array(self.offdiag, dtype=float)
        if offdiag.shape != (max(diag.size - 1, 0),):
            raise ValueError("Need size - 1 off-diagonal entries")
        diag.setflags(write=False)
        offdiag.setflags(write=False)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def size(self):
        return self.diag.size

    @property
    def last(self):
        return self.origin_offset + self.size - 1

    def entry(self, i, j):
        if not (self.origin_offset <= min(i, j) and max(i, j) <= self.last):
            raise IndexError("({0}, {1}) outside the retained window".format(i, j))
        if i == j:
            return self.diag[i - self.origin_offset]
        if abs(i - j) == 1:
            return self.offdiag[min(i, j) - self.origin_offset]
        return 0.0

    def window(self, lo, hi):
        if not self.origin_offset <= lo <= hi <= self.last:
            raise ValueError(
                "[{0}, {1}] is not inside [{2}, {3}]".format(
                    lo, hi, self.origin_offset, self.last
                )
            )
        start = lo - self.origin_offset
        stop = hi - self.origin_offset + 1
        return TruncatedJacobi(self.diag[start:stop], self.offdiag[start : stop - 1], lo)

    def to_dense(self):
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def banded(self, shift=0):
        """
        ``T - shift`` in the (3, N) layout of :func:`scipy.linalg.solve_banded`.
        """
        dtype = complex if np.iscomplexobj(shift) else float
        bands = np.zeros((3, self.size), dtype=dtype)
        bands[0, 1:] = self.offdiag
        bands[1] = self.diag - shift
        bands[2, :-1] = self.offdiag
        return bands


@dataclass(frozen=True)
class JacobiOperator:
    base: RecurrenceCoefficients
    perturbation: Optional[SparsePerturbation] = None

    def sites(self, lo, hi):
        if self.perturbation is None:
            return []
        return self.perturbation.sites(lo, hi)

    def coefficients(self, lo, hi):
        """
        Off-diagonal ``a[lo..hi]`` and perturbed diagonal ``b[lo..hi] + V``.
        """
        a, b = self.base.values(lo, hi)
        for position, value in self.sites(lo, hi):
            b[position - lo] += value
        return a, b

    def entry(self, i, j):
        if min(i, j) < 1:
            raise IndexError("Indices start at 1")
        if abs(i - j) > 1:
            return 0.0
        a, b = self.coefficients(min(i, j), min(i, j))
        return float(b[0] if i == j else a[0])


@dataclass(frozen=True)
class ProjectionWindow:
    """
    The diagonal 0/1 operator keeping coordinates ``lo..hi``; ``lo = 1`` is
    the projection onto the first ``hi`` coordinates.
    """

    lo: int
    hi: int

    def __post_init__(self):
        if not 1 <= self.lo <= self.hi:
            raise ValueError("Need 1 <= lo <= hi, got [{0}, {1}]".format(self.lo, self.hi))

    @classmethod
    def first(cls, n):
        return cls(1, n)

    @classmethod
    def around(cls, n, m, exponent):
        """
        ``[n - 2 m n^exponent, n + 2 m n^exponent]`` with floored ends.
        """
        reach = 2 * m * n**exponent
        return cls(max(1, math.floor(n - reach)), math.floor(n + reach))

    @property
    def size(self):
        return self.hi - self.lo + 1

    def __contains__(self, index):
        return self.lo <= index <= self.hi

    def local(self, origin_offset=1):
        """
        Slice selecting the window from arrays whose first index is
        ``origin_offset``.
        """
        if self.lo < origin_offset:
            raise ValueError("Window starts before the array origin")
        return slice(self.lo - origin_offset, self.hi - origin_offset + 1)

    def apply(self, matrix, origin_offset=1):
        """
        ``P M P`` on a square array whose first index is ``origin_offset``.
        """
        keep = np.zeros(matrix.shape[0], dtype=bool)
        keep[self.local(origin_offset)] = True
        return matrix * np.outer(keep, keep)


def free_jacobi():
    return JacobiOperator(RecurrenceCoefficients.constant(1.0, 0.0))


def constant_jacobi(a, b):
    return JacobiOperator(RecurrenceCoefficients.constant(a, b))


def sparse_jacobi(perturbation, base=None):
    return JacobiOperator(base or RecurrenceCoefficients.constant(1.0, 0.0), perturbation)


def truncate(J, lo, hi):
    if not 1 <= lo <= hi:
        raise ValueError("Need 1 <= lo <= hi, got [{0}, {1}]".format(lo, hi))
    a, b = J.coefficients(lo, hi)
    return TruncatedJacobi(b, a[:-1], lo)


def from_preset(preset, horizon, beta=0.5, eps=0.05, rule="inv_log"):
    """
    Builds an operator from a preset id: ``free``, ``constant(a,b)``,
    ``sparse(beta,eps,lambda_rule)``, ``sparse`` (arguments taken from the
    keywords) or ``kls_singular``.
    """
    name, args = _split_call(preset)
    try:
        if name == "free" and args is None:
            return free_jacobi()
        if name == "constant":
            a, b = (float(part) for part in args.split(","))
            return constant_jacobi(a, b)
        if name == "sparse":
            if args is not None:
                beta, eps, rule = (part.strip() for part in args.split(",", 2))
                beta, eps = float(beta), float(eps)
            return sparse_jacobi(sparse_perturbation(beta, eps, rule, horizon))
        if name == "kls_singular" and args is None:
            return sparse_jacobi(kls_singular_perturbation(horizon, beta))
    except (AttributeError, TypeError, ValueError) as e:
        raise ConfigurationError("Unusable preset `{0}`: {1}".format(preset, e))
    raise ConfigurationError(
        "Unknown preset `{0}`. Choices are: free, constant(a,b), "
        "sparse(beta,eps,rule), kls_singular.".format(preset)
    )
