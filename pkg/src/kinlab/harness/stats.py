"""Streaming ensemble statistics and bootstrap fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class StreamingMoments:
    """Numerically stable running mean/variance with associative merge."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0  # sum of squared deviations from the running mean

    def push(self, x: float):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        if other.n == 0:
            return StreamingMoments(self.n, self.mean, self.m2)
        if self.n == 0:
            return StreamingMoments(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta**2 * self.n * other.n / n
        return StreamingMoments(n, mean, m2)

    @property
    def variance(self) -> float:
        """Unbiased sample variance; NaN when undefined (n < 2)."""
        if self.n < 2:
            return float("nan")
        return self.m2 / (self.n - 1)

    @property
    def stderr_mean(self) -> float:
        if self.n < 2:
            return float("nan")
        return math.sqrt(self.variance / self.n)


@dataclass
class EnsembleStats:
    """Per-coupling statistics of the Wigner observable over disorder realizations.

    Statistics run over the real part; the imaginary part is tracked as a
    sanity channel.  Raw per-realization values are retained.
    """

    lam: float
    eta: float
    values: list = field(default_factory=list)  # complex, realization order
    truncation_errors: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def variance_defined(self) -> bool:
        return self.n >= 2

    def real_parts(self) -> np.ndarray:
        return np.array([v.real for v in self.values])

    def moments(self) -> StreamingMoments:
        acc = StreamingMoments()
        for v in self.values:
            acc.push(v.real)
        return acc

    @property
    def mean(self) -> complex:
        return complex(np.mean(np.asarray(self.values))) if self.values else complex("nan")

    @property
    def variance(self) -> float:
        return self.moments().variance

    @property
    def stderr_mean(self) -> float:
        return self.moments().stderr_mean

    def central_moment(self, r: int) -> float:
        x = self.real_parts()
        if len(x) < 2:
            return float("nan")
        return float(np.mean((x - x.mean()) ** r))

    @property
    def max_rel_imag(self) -> float:
        if not self.values:
            return float("nan")
        vals = np.asarray(self.values)
        scale = max(float(np.max(np.abs(vals.real))), 1e-300)
        return float(np.max(np.abs(vals.imag))) / scale

    @property
    def max_truncation(self) -> float:
        return max(self.truncation_errors) if self.truncation_errors else 0.0


def variance_stderr(values: np.ndarray) -> float:
    """Standard error of the sample variance (normal-theory sqrt(2/(n-1)) s^2)."""
    n = len(values)
    if n < 2:
        return float("nan")
    return float(np.var(values, ddof=1) * math.sqrt(2.0 / (n - 1)))


def fit_loglog_slope(lams, variances) -> float:
    x = np.log(np.asarray(lams, dtype=float))
    y = np.log(np.asarray(variances, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def bootstrap_slope(
    lams, values_per_lam, n_boot: int, rng: np.random.Generator
) -> tuple:
    """Bootstrap CI for the slope of log variance against log lambda.

    Resamples realizations within each coupling; returns (slope, lo95, hi95).
    """
    lams = np.asarray(lams, dtype=float)
    arrays = [np.asarray(v, dtype=float) for v in values_per_lam]
    point = fit_loglog_slope(lams, [np.var(a, ddof=1) for a in arrays])
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        vs = []
        for a in arrays:
            idx = rng.integers(0, len(a), len(a))
            vs.append(max(np.var(a[idx], ddof=1), 1e-300))
        slopes[b] = fit_loglog_slope(lams, vs)
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return point, float(lo), float(hi)
