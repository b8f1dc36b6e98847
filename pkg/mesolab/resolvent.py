"""
Resolvents of Jacobi matrices.

The closed form ``(phi^|k-j| - phi^(j+k)) / (phi - 1/phi)`` of the free
resolvent, banded numeric inversion of truncations, Combes-Thomas decay fits,
decoupled operators and the rank-one comparison ``G = lambda T + R``.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy import stats

from . import conf
from .exceptions import (
    DegenerateParameterError,
    FitError,
    IllConditionedError,
    ResonanceError,
)
from .hankel import build_hankel, trace_norm
from .jacobi import ProjectionWindow, TruncatedJacobi

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralShift:
    """
    ``z_n = x0 + eta / n^gamma``, approaching the real axis at rate ``n^-gamma``.
    """

    x0: float
    eta: complex
    gamma: float
    n: int

    def __post_init__(self):
        if not -2 < self.x0 < 2:
            raise ValueError("x0 must lie in (-2, 2), got {0}".format(self.x0))
        if complex(self.eta).imag == 0:
            raise ValueError("eta must have a nonzero imaginary part")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1), got {0}".format(self.gamma))
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def z(self):
        return self.x0 + complex(self.eta) / self.n**self.gamma

    def conjugate(self):
        return SpectralShift(self.x0, complex(self.eta).conjugate(), self.gamma, self.n)


def _distance_to_cut(zeta):
    if -2 <= zeta.real <= 2:
        return abs(zeta.imag)
    return math.hypot(abs(zeta.real) - 2, zeta.imag)


def phi(zeta):
    """
    The root of ``w^2 - zeta w + 1 = 0`` inside the unit disk.

    The two roots multiply to 1; the larger one is picked by magnitude and
    inverted, which keeps full relative precision for large ``|zeta|``.
    """
    zeta = complex(zeta)
    if _distance_to_cut(zeta) < conf.get("PHI_DEGENERACY"):
        raise DegenerateParameterError(
            "zeta={0} is numerically on the cut [-2, 2]".format(zeta)
        )
    root = np.sqrt(zeta * zeta - 4)
    plus, minus = (zeta + root) / 2, (zeta - root) / 2
    big = plus if abs(plus) >= abs(minus) else minus
    return complex(1 / big)


@dataclass(frozen=True)
class JoukowskiValue:
    zeta: complex
    phi: complex

    @classmethod
    def of(cls, zeta):
        return cls(complex(zeta), phi(zeta))


def free_resolvent_block(rows, cols, z):
    """
    Entries ``(J0 - z)^-1`` on absolute index arrays ``rows`` x ``cols``.
    """
    rows = np.asarray(rows)[:, None]
    cols = np.asarray(cols)[None, :]
    if rows.min() < 1 or cols.min() < 1:
        raise ValueError("Indices start at 1")
    w = phi(z)
    return (w ** np.abs(cols - rows) - w ** (rows + cols)) / (w - 1 / w)


def free_resolvent_entry(j, k, z):
    return complex(free_resolvent_block([j], [k], z)[0, 0])


def _shifted_product(T, shift, X):
    """``(T - shift) @ X`` using the tridiagonal structure."""
    Y = (T.diag - shift)[:, None] * X
    Y[:-1] += T.offdiag[:, None] * X[1:]
    Y[1:] += T.offdiag[:, None] * X[:-1]
    return Y


def numeric_resolvent(T, z, columns=None):
    """
    ``(T - z)^-1`` by banded solves against identity columns.

    ``columns`` restricts the solve to the given absolute indices; the result
    then has one column per requested index.  Raises ``IllConditionedError``
    when the 1-norm condition estimate or the residual is out of bounds.
    """
    z = complex(z)
    size = T.size
    if columns is None:
        local = np.arange(size)
    else:
        local = np.asarray(columns) - T.origin_offset
        if local.min() < 0 or local.max() >= size:
            raise ValueError("Requested columns outside the truncation")
    rhs = np.zeros((size, local.size), dtype=complex)
    rhs[local, np.arange(local.size)] = 1.0

    try:
        R = la.solve_banded((1, 1), T.banded(z), rhs, check_finite=False)
    except la.LinAlgError as e:
        raise IllConditionedError("Resolvent solve failed at z={0}: {1}".format(z, e))

    bands = np.abs(T.diag - z)
    bands[:-1] += np.abs(T.offdiag)
    bands[1:] += np.abs(T.offdiag)
    norm_A = bands.max()
    norm_R = np.abs(R).sum(axis=0).max()
    condition = norm_A * norm_R
    if not np.isfinite(condition) or condition > conf.get("CONDITION_LIMIT"):
        raise IllConditionedError(
            "Condition estimate {0:.3e} at z={1} exceeds the limit".format(condition, z)
        )
    residual = np.abs(_shifted_product(T, z, R) - rhs).max()
    if residual > conf.get("RESIDUAL_TOLERANCE"):
        raise IllConditionedError(
            "Resolvent residual {0:.3e} at z={1}".format(residual, z)
        )
    logger.debug("Resolvent of size %d at z=%s, condition %.3e", size, z, condition)
    return R


@dataclass(frozen=True)
class CombesThomasFit:
    C_hat: float
    d_hat: float
    r2: float
    pairs: int

    def __iter__(self):
        return iter((self.C_hat, self.d_hat, self.r2))


def combes_thomas_fit(R, n, gamma):
    """
    Fits ``log|R_jk| ~ log C - d |j - k|`` over the upper-triangle pairs with
    ``|j - k| >= n^gamma``.
    """
    R = np.asarray(R)
    magnitude = np.abs(R)
    j, k = np.triu_indices(R.shape[0], k=1, m=R.shape[1])
    distance = (k - j).astype(float)
    values = magnitude[j, k]
    floor = 1e-12 * magnitude.max() if magnitude.size else 0.0
    usable = (distance >= n**gamma) & (values > floor)
    pairs = int(usable.sum())
    if pairs < conf.get("MIN_FIT_PAIRS") or np.unique(distance[usable]).size < 2:
        raise FitError(
            "Only {0} usable off-diagonal pairs with |j-k| >= {1:.1f}".format(
                pairs, n**gamma
            )
        )
    fit = stats.linregress(distance[usable], np.log(values[usable]))
    result = CombesThomasFit(
        C_hat=float(np.exp(fit.intercept)),
        d_hat=float(-fit.slope),
        r2=float(fit.rvalue**2),
        pairs=pairs,
    )
    logger.debug("Combes-Thomas fit at n=%d: %s", n, result)
    return result


@dataclass(frozen=True)
class DecoupledOperator:
    """
    The parent truncation with the couplings ``(cut, cut + 1)`` removed at both
    cuts, a direct sum of three Jacobi blocks.
    """

    parent: TruncatedJacobi
    cut_lo: int
    cut_hi: int
    n: int
    m: int
    beta: float

    @property
    def operator(self):
        offdiag = np.array(self.parent.offdiag)
        for cut in (self.cut_lo, self.cut_hi):
            offdiag[cut - self.parent.origin_offset] = 0.0
        return TruncatedJacobi(self.parent.diag, offdiag, self.parent.origin_offset)

    @property
    def blocks(self):
        return (
            (self.parent.origin_offset, self.cut_lo),
            (self.cut_lo + 1, self.cut_hi),
            (self.cut_hi + 1, self.parent.last),
        )

    @property
    def middle(self):
        return self.parent.window(self.cut_lo + 1, self.cut_hi)

    def distance(self, j, k):
        """
        Distance from the pair to the nearest removed coupling, the quantity
        the decoupling error decays in.
        """
        return min(abs(j - c) + abs(k - c) for c in (self.cut_lo, self.cut_hi + 1))


def decouple(T, n, m, beta):
    reach = 2 * m * n**beta
    cut_lo, cut_hi = math.floor(n - reach), math.floor(n + reach)
    if cut_lo < max(1, T.origin_offset) or cut_hi + 1 > T.last:
        raise ValueError(
            "Cuts {0}, {1} fall outside the truncation [{2}, {3}]".format(
                cut_lo, cut_hi, T.origin_offset, T.last
            )
        )
    return DecoupledOperator(T, cut_lo, cut_hi, n, m, beta)


def decoupling_difference(H, z, window):
    """
    ``P(R_T - R_H)P`` on ``window`` for the decoupled operator ``H``.

    Uses ``R_T - R_H = -R_T (T - H) R_H`` with the four columns adjacent to the
    cuts, which keeps full precision when the difference is exponentially
    small.
    """
    T, decoupled = H.parent, H.operator
    columns = [H.cut_lo, H.cut_lo + 1, H.cut_hi, H.cut_hi + 1]
    R_T = numeric_resolvent(T, z, columns)
    R_H = numeric_resolvent(decoupled, z, columns)
    rows = window.local(T.origin_offset)
    difference = np.zeros((window.size, window.size), dtype=complex)
    for c, (left, right) in zip((H.cut_lo, H.cut_hi), ((0, 1), (2, 3))):
        a = T.offdiag[c - T.origin_offset]
        difference -= a * np.outer(R_T[rows, left], R_H[rows, right])
        difference -= a * np.outer(R_T[rows, right], R_H[rows, left])
    return difference


def perturbation_difference(T0, T, z, window):
    """
    ``P(R_T0 - R_T)P`` for two truncations differing only on the diagonal,
    as ``sum_r lambda_r R_T0[:, r] R_T[r, :]`` over the differing sites.
    """
    if T0.size != T.size or T0.origin_offset != T.origin_offset:
        raise ValueError("Truncations must cover the same indices")
    if np.any(T0.offdiag != T.offdiag):
        raise ValueError("Truncations differ off the diagonal")
    shifts = T.diag - T0.diag
    local = np.flatnonzero(shifts)
    difference = np.zeros((window.size, window.size), dtype=complex)
    if not local.size:
        return difference
    columns = local + T.origin_offset
    R0 = numeric_resolvent(T0, z, columns)
    R = numeric_resolvent(T, z, columns)
    rows = window.local(T.origin_offset)
    for i, lam in enumerate(shifts[local]):
        difference += lam * np.outer(R0[rows, i], R[rows, i])
    return difference


def decoupling_bound(fit, n, m, beta, beta_prime, gamma):
    """
    ``4 m^2 n^(2 beta) n^(2 gamma) D exp(-2 d m (n^beta - n^beta') / n^gamma)``
    with ``D = C_hat`` and ``d = d_hat n^gamma``.
    """
    d = fit.d_hat * n**gamma
    prefactor = 4 * m**2 * n ** (2 * beta) * n ** (2 * gamma) * fit.C_hat
    return prefactor * math.exp(-2 * d * m * (n**beta - n**beta_prime) / n**gamma)


def _resonance_guard(denominator, r):
    if abs(denominator) < conf.get("RESONANCE_THRESHOLD"):
        raise ResonanceError(
            "1 + lambda R0_rr = {0:.3e} at r={1}".format(denominator, r)
        )


def rank_one_resolvent_diff(R0, r, lam, origin_offset=1):
    """
    ``R_H0 - R_H`` for ``H = H0 + lam e_r e_r^T`` given ``R0 = (H0 - z)^-1``.
    """
    R0 = np.asarray(R0)
    i = r - origin_offset
    if not 0 <= i < R0.shape[0]:
        raise ValueError("Site {0} outside the resolvent window".format(r))
    denominator = 1 + lam * R0[i, i]
    _resonance_guard(denominator, r)
    return lam * np.outer(R0[:, i], R0[i, :]) / denominator


def perturbed_resolvent(R0, sites, origin_offset=1):
    """
    Resolvent after adding every ``(position, value)`` in ``sites`` to the
    diagonal, one rank-one update per site.
    """
    R = np.array(R0, dtype=complex)
    for position, value in sites:
        R = R - rank_one_resolvent_diff(R, position, value, origin_offset)
    return R


@dataclass(frozen=True)
class ComparisonMatrices:
    G: np.ndarray
    T: np.ndarray
    R: np.ndarray
    amplitude: complex
    r: int
    lam: float
    window: ProjectionWindow


def comparison_amplitude(q, r, lam):
    g = q - 1 / q
    denominator = 1 + lam * (1 - q ** (2 * r)) / g
    _resonance_guard(denominator, r)
    return g**-2 / denominator


def build_comparison_matrices(n, m, beta_prime, shift, r, lam):
    """
    ``G = lam T + R`` on the window ``[n - 2 m n^beta', n + 2 m n^beta']``.

    ``G`` is the rank-one update of the closed-form free resolvent,
    ``T = A phi^(|r-j| + |r-l|)`` and ``R`` is assembled from the remaining
    cross terms rather than as ``G - lam T``.
    """
    if r < 1:
        raise ValueError("Site must be a positive index")
    window = ProjectionWindow.around(n, m, beta_prime)
    if r not in window:
        raise ValueError("Site {0} outside the window [{1}, {2}]".format(r, window.lo, window.hi))
    q = phi(shift.z)
    if not abs(q) < 1:
        raise DegenerateParameterError("|phi(z_n)| = {0} is not below 1".format(abs(q)))
    amplitude = comparison_amplitude(q, r, lam)

    index = np.arange(window.lo, window.hi + 1)
    column = free_resolvent_block(index, [r], shift.z)[:, 0]
    R0_rr = free_resolvent_entry(r, r, shift.z)
    G = lam * np.outer(column, column) / (1 + lam * R0_rr)

    near = q ** np.abs(r - index)
    far = q ** (r + index)
    T = amplitude * np.outer(near, near)
    R = lam * amplitude * (np.outer(far, far) - np.outer(near, far) - np.outer(far, near))
    return ComparisonMatrices(G, T, R, complex(amplitude), r, lam, window)


def shift_operator(size, k):
    """``S^k``: moves coordinate ``i`` to ``i + k``, dropping what falls off."""
    return np.eye(size, k=-k)


def corner_deletion(size):
    """``Q1``: drops the leading coordinate and moves the rest up by one."""
    return np.eye(size, k=1)


def flip_operator(size, k):
    """``E_k``: reverses the first ``k`` coordinates, zero elsewhere."""
    E = np.zeros((size, size))
    E[np.arange(k), np.arange(k)[::-1]] = 1.0
    return E


def leading_projection(size, k):
    return np.diag((np.arange(size) < k).astype(float))


def assemble_T_from_hankel(n, m, beta_prime, shift, r, lam=0.0):
    """
    ``T`` from the Hankel matrix ``(q^(j+k))`` sized to the window.

    With ``rho`` the window-local position of ``r``, the decaying profile
    ``q^|rho - j|`` splits into ``D u`` and ``U u`` (``u_j = q^j``), where
    ``D = S^(rho-1)`` places the tail below the site and ``U = E P Q1`` reflects
    the head above it.  ``T`` is then ``A`` times the four Hankel products
    ``D H D^T + D H U^T + U H D^T + U H U^T``.
    """
    window = ProjectionWindow.around(n, m, beta_prime)
    if r not in window:
        raise ValueError("Site {0} outside the window [{1}, {2}]".format(r, window.lo, window.hi))
    q = phi(shift.z)
    amplitude = comparison_amplitude(q, r, lam)
    size = window.size
    rho = r - window.lo + 1

    H = build_hankel(q, size).entries
    down = shift_operator(size, rho - 1)
    up = flip_operator(size, rho - 1) @ leading_projection(size, rho - 1) @ corner_deletion(size)
    terms = (
        down @ H @ down.T,
        down @ H @ up.T,
        up @ H @ down.T,
        up @ H @ up.T,
    )
    return amplitude * sum(terms)


def windowed_trace_norm(matrix, window, origin_offset=1):
    part = window.local(origin_offset)
    return trace_norm(np.asarray(matrix)[part, part])
