"""Interval estimates and small regression helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z95 = 1.959963984540054


def wilson_interval(hits: int, samples: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    With zero hits the lower end is exactly 0 and the upper end is the
    one-sided bound.
    """
    if samples <= 0:
        return 0.0, 1.0
    p = hits / samples
    z2 = z * z
    denom = 1.0 + z2 / samples
    centre = (p + z2 / (2 * samples)) / denom
    half = z * math.sqrt(p * (1 - p) / samples + z2 / (4 * samples * samples)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == samples else min(1.0, centre + half)
    return min(lo, p), max(hi, p)


def binomial_sigma(p: float, samples: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / samples)


def batch_means(values, weights=None, z: float = Z95):
    """Self-normalized ratio estimate with a batch-means interval.

    ``values`` and ``weights`` are per-batch sums (numerator and denominator).
    Returns (estimate, lo, hi, stderr).
    """
    num = np.asarray(values, dtype=float)
    den = np.ones_like(num) if weights is None else np.asarray(weights, dtype=float)
    total = den.sum()
    est = num.sum() / total if total > 0 else 0.0
    k = len(num)
    if k < 2:
        return est, est, est, float("nan")
    ratios = num / np.where(den > 0, den, 1.0)
    # weight batches by their share of the denominator
    w = den / total
    var = np.sum(w * w * (ratios - est) ** 2) * k / (k - 1)
    se = math.sqrt(var)
    return est, max(0.0, est - z * se), est + z * se, se


def linear_fit(x, y):
    """Least squares y = slope*x + intercept; returns (slope, intercept, r2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        r2 = max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2


@dataclass(frozen=True)
class DeviationEstimate:
    """Monte Carlo volume of a rare set, with its interval and seed."""

    horizon: float
    threshold: float
    hits: float
    samples: int
    estimate: float
    ci_lo: float
    ci_hi: float
    seed: int

    def __post_init__(self):
        if self.hits > self.samples:
            raise ValueError("hits exceed samples")
        if not self.ci_lo <= self.estimate <= self.ci_hi:
            raise ValueError("interval does not contain the estimate")

    @classmethod
    def from_counts(cls, horizon, threshold, hits, samples, seed):
        lo, hi = wilson_interval(int(hits), int(samples))
        return cls(horizon, threshold, int(hits), int(samples), hits / samples, lo, hi, seed)

    @property
    def sigma(self) -> float:
        return binomial_sigma(self.estimate, self.samples)

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


CSV_FIELDS = ("horizon", "threshold", "hits", "samples", "estimate", "ci_lo", "ci_hi", "seed")
