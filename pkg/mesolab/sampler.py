"""
Orthogonal polynomial ensembles of absolutely continuous measures: the
orthonormal polynomials, the Christoffel-Darboux kernel, exact projection-DPP
sampling and Monte Carlo cumulant estimates.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.random import SeedSequence, default_rng
from scipy import integrate, special, stats

from . import conf
from .exceptions import (
    ConfigurationError,
    DegenerateParameterError,
    EnvelopeError,
    PolynomialOverflowError,
)
from .jacobi import JacobiOperator, constant_jacobi

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasureDensity:
    """
    A probability measure ``density(x) dx`` on ``[lo, hi]`` paired with the
    Jacobi operator of its orthonormal polynomials.
    """

    name: str
    density: Callable
    lo: float
    hi: float
    coefficients: JacobiOperator
    cdf: Optional[Callable] = field(default=None, compare=False)
    chebyshev: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError("Measure support must be a bounded interval")
        mass, _ = integrate.quad(self.density, self.lo, self.hi, limit=200)
        if abs(mass - 1.0) > 1e-8:
            raise ConfigurationError(
                "Density of `{0}` integrates to {1!r}, not 1".format(self.name, mass)
            )

    @classmethod
    def semicircle(cls, a=1.0, b=0.0):
        """
        ``sqrt(4a^2 - (x-b)^2) / (2 pi a^2)`` on ``[b - 2a, b + 2a]``; ``a = 1,
        b = 0`` is the spectral measure of the free Jacobi matrix.
        """
        if a <= 0:
            raise ConfigurationError("Semicircle scale must be positive")

        def density(x):
            u = (np.asarray(x, dtype=float) - b) / a
            return np.sqrt(np.clip(4 - u * u, 0, None)) / (2 * np.pi * a)

        def cdf(x):
            u = np.clip((np.asarray(x, dtype=float) - b) / a, -2, 2)
            return 0.5 + u * np.sqrt(4 - u * u) / (4 * np.pi) + np.arcsin(u / 2) / np.pi

        name = "semicircle" if (a, b) == (1.0, 0.0) else "semicircle({0},{1})".format(a, b)
        return cls(name, density, b - 2 * a, b + 2 * a, constant_jacobi(a, b), cdf, chebyshev=True)

    def quadrature(self, order):
        """
        Nodes and weights with ``sum w g(x) ~ int g dmu``.
        """
        if self.chebyshev:
            t, w = special.roots_chebyu(order)
            centre, half = (self.lo + self.hi) / 2, (self.hi - self.lo) / 2
            return centre + half * t, 2 / np.pi * w
        t, w = special.roots_legendre(order)
        centre, half = (self.lo + self.hi) / 2, (self.hi - self.lo) / 2
        x = centre + half * t
        return x, half * w * self.density(x)


def parse_measure(text):
    text = text.strip()
    if text == "semicircle":
        return MeasureDensity.semicircle()
    if text.startswith("semicircle(") and text.endswith(")"):
        try:
            a, b = (float(part) for part in text[len("semicircle(") : -1].split(","))
        except ValueError:
            raise ConfigurationError("Unusable measure `{0}`".format(text))
        return MeasureDensity.semicircle(a, b)
    raise ConfigurationError(
        "Measure `{0}` cannot be sampled; only semicircle(a,b) densities are "
        "available".format(text)
    )


def eval_polys(x, n, coeffs):
    """
    ``p_0(x), ..., p_{n-1}(x)`` along the last axis, from
    ``x p_k = a_{k+1} p_{k+1} + b_{k+1} p_k + a_k p_{k-1}``.
    """
    x = np.asarray(x, dtype=float)
    a, b = coeffs.coefficients(1, max(n, 1))
    limit = conf.get("OVERFLOW_LIMIT")
    p = np.empty(x.shape + (n,))
    previous = np.zeros(x.shape)
    current = np.ones(x.shape)
    for k in range(n):
        p[..., k] = current
        if k + 1 == n:
            break
        coupling = a[k - 1] * previous if k else 0.0
        previous, current = current, ((x - b[k]) * current - coupling) / a[k]
        peak = np.max(np.abs(current))
        if not peak <= limit:
            raise PolynomialOverflowError(k + 1, peak)
    return p


def cd_kernel(x, y, n, coeffs):
    """``K_n(x, y) = sum_{k<n} p_k(x) p_k(y)``, broadcasting ``x`` against ``y``."""
    return np.sum(eval_polys(x, n, coeffs) * eval_polys(y, n, coeffs), axis=-1)


class ProjectionSampler:
    """
    Sequential sampler for the rank-``n`` projection kernel of ``mu``.

    Point ``i`` is drawn from ``|(I - Pi) phi(x)|^2 density(x) / (n - i)``
    where ``phi = (p_0, ..., p_{n-1})`` and ``Pi`` projects onto the span of
    the points already drawn.  Each step rejects against a piecewise-constant
    envelope rebuilt from residuals kept on a fixed grid.
    """

    def __init__(self, mu, n):
        if n < 1:
            raise ValueError("Need at least one point")
        self.mu = mu
        self.n = n
        cells = conf.get("ENVELOPE_CELLS")
        points = conf.get("ENVELOPE_POINTS")
        self.edges = np.linspace(mu.lo, mu.hi, cells + 1)
        offsets = np.linspace(0.0, 1.0, points)
        grid = self.edges[:-1, None] + offsets[None, :] * np.diff(self.edges)[:, None]
        self.grid_basis = eval_polys(grid, n, mu.coefficients)
        self.grid_density = mu.density(grid)
        self.headroom = conf.get("ENVELOPE_HEADROOM")

    def _target(self, x, basis):
        phi = eval_polys(x, self.n, self.mu.coefficients)
        residual = phi @ phi - np.sum((basis @ phi) ** 2) if len(basis) else phi @ phi
        return max(residual, 0.0) * float(self.mu.density(x)), phi

    def draw(self, rng):
        n = self.n
        basis = np.empty((0, n))
        residual = np.sum(self.grid_basis**2, axis=-1)
        points = np.empty(n)
        width = self.edges[1] - self.edges[0]
        for i in range(n):
            heights = self.headroom * np.max(residual * self.grid_density, axis=1)
            cumulative = np.cumsum(heights)
            while True:
                cell = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
                cell = min(cell, heights.size - 1)
                x = self.edges[cell] + rng.random() * width
                target, phi = self._target(x, basis)
                if target > heights[cell]:
                    raise EnvelopeError(
                        "Target {0:.6g} above envelope {1:.6g} at x={2!r}".format(
                            target, heights[cell], x
                        )
                    )
                if rng.random() * heights[cell] < target:
                    break
            points[i] = x
            direction = phi - basis.T @ (basis @ phi)
            direction -= basis.T @ (basis @ direction)
            direction /= np.linalg.norm(direction)
            basis = np.vstack([basis, direction])
            residual = np.clip(residual - (self.grid_basis @ direction) ** 2, 0.0, None)
        return np.sort(points)


def sample_ope(mu, n, rng):
    """One OPE_n(mu) configuration; ``rng`` is a Generator or a seed."""
    if not isinstance(rng, np.random.Generator):
        rng = default_rng(rng)
    return ProjectionSampler(mu, n).draw(rng)


@dataclass(frozen=True)
class SampleBatch:
    n: int
    points: np.ndarray
    seeds: tuple
    seed: int
    measure: str

    @property
    def num_samples(self):
        return self.points.shape[0]

    def metadata(self):
        return {
            "seed": self.seed,
            "n": self.n,
            "measure": self.measure,
            "num_samples": self.num_samples,
        }

    def write_csv(self, stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["sample_id", "point_index", "value"])
        for sample_id, configuration in enumerate(self.points):
            for point_index, value in enumerate(configuration):
                writer.writerow([sample_id, point_index, "%.17g" % value])

    def write_metadata(self, stream):
        json.dump(self.metadata(), stream, indent=2, sort_keys=True)


def sample_batch(mu, n, num_samples, seed, threads=1):
    """
    ``num_samples`` configurations, sample ``i`` drawn from the ``i``-th child
    of ``SeedSequence(seed)`` so the batch does not depend on ``threads``.
    """
    children = SeedSequence(seed).spawn(num_samples)
    sampler = ProjectionSampler(mu, n)

    def draw(child):
        return sampler.draw(default_rng(child))

    logger.info("Sampling %d configurations of OPE_%d(%s)", num_samples, n, mu.name)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        configurations = list(executor.map(draw, children))
    points = np.array(configurations).reshape(num_samples, n)
    seeds = tuple(int(child.generate_state(1, np.uint64)[0]) for child in children)
    return SampleBatch(n, points, seeds, seed, mu.name)


def linear_statistic(points, f, gamma, x0):
    """
    ``sum_k f(n^gamma (x_k - x0))`` over the last axis, ``n`` its length.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[-1]
    return np.sum(f(n**gamma * (points - x0)), axis=-1)


@dataclass(frozen=True)
class MonteCarloCumulant:
    order: int
    estimate: float
    stderr: float

    def __iter__(self):
        return iter((self.estimate, self.stderr))


def mc_cumulants(values, m_max=4):
    """
    Unbiased k-statistics of orders ``1..m_max`` with grouped jackknife
    standard errors, in the standard cumulant convention.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 100:
        raise ValueError("Need at least 100 values, got {0}".format(values.size))
    if not 1 <= m_max <= 4:
        raise ValueError("k-statistics are available for orders 1..4")
    groups = np.array_split(values, min(conf.get("JACKKNIFE_GROUPS"), values.size))
    results = []
    for order in range(1, m_max + 1):
        estimate = stats.kstat(values, order)
        leave_out = np.array(
            [
                stats.kstat(np.concatenate(groups[:g] + groups[g + 1 :]), order)
                for g in range(len(groups))
            ]
        )
        g = len(groups)
        stderr = math.sqrt((g - 1) / g * np.sum((leave_out - leave_out.mean()) ** 2))
        results.append(MonteCarloCumulant(order, float(estimate), stderr))
    return results


def sine_ratio(x, a, b, n, coeffs):
    """``K_n(x + a/n, x + b/n) / K_n(x, x)``."""
    reach = max(abs(a), abs(b)) / n
    if not (-2 < x - reach and x + reach < 2):
        raise ValueError("Scaled points leave (-2, 2)")
    diagonal = float(cd_kernel(x, x, n, coeffs))
    if diagonal < 1e-300:
        raise DegenerateParameterError("K_n(x, x) = {0:.3e} vanishes".format(diagonal))
    return float(cd_kernel(x + a / n, x + b / n, n, coeffs)) / diagonal


def intensity_integral(mu, f, n, gamma, x0, order=None):
    """
    ``int f(n^gamma (x - x0)) K_n(x, x) dmu(x)``, the mean of the linear
    statistic computed by quadrature.
    """
    order = order or max(8 * n, 2000)
    x, w = mu.quadrature(order)
    intensity = np.sum(eval_polys(x, n, mu.coefficients) ** 2, axis=-1)
    return float(np.sum(w * intensity * f(n**gamma * (x - x0))))


def expected_count(mu, n, lo, hi):
    """Expected number of points in ``[lo, hi]``."""

    def intensity(x):
        return float(cd_kernel(x, x, n, mu.coefficients) * mu.density(x))

    value, _ = integrate.quad(intensity, max(lo, mu.lo), min(hi, mu.hi), limit=200)
    return value
