"""Deviation-set volumes for base maps and suspension flows, escape rates, rate fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateFit, RegionUnsupported
from .maps import MapDescriptor, Observable, OrbitBatch
from .semiflow import (FlowObservable, RoofFunction, Suspension, SuspensionPoint,
                       lambda_sample_batch, time_integral)
from .stats import DeviationEstimate, batch_means, linear_fit, wilson_interval, Z95
from .streams import DEFAULT_CHUNK, mix64, run_chunks

# thresholds are compared with this slack so that exact lattice values
# such as k/n - 1/2 = 0.1 land on the correct side of >= and > despite rounding
THRESHOLD_TOL = 1e-12
SUB_BATCHES = 16


def truncate_observable(phi: Observable, k: float) -> Observable:
    if not k > 0:
        raise ValueError("k must be positive")
    return Observable(lambda x: np.clip(phi(x), -k, k), phi.log_growth_K, float(k),
                      f"{phi.name}|{k:g}" if phi.name else "")


# -- base maps -----------------------------------------------------------------


def _deviates(avg, mean, omega):
    return np.abs(avg - mean) >= omega - THRESHOLD_TOL


def _base_pass(m, phi, mu_phi, n, omega, budget, seed, workers, chunk, k=1):
    """Tallies for {|S_n phi / n - mu| >= omega} and, for k > 1, the k
    interleaved sums S_{n/k}^{f^k}(phi o f^i) on the same samples."""

    def work(rng, size, _):
        ob = OrbitBatch(m, rng, size)
        per = np.zeros((k, size))
        for j in range(n):
            per[j % k] += np.asarray(phi(ob.x), dtype=float)
            if j < n - 1:
                ob.step()
        total = per.sum(axis=0)
        hit = _deviates(total / n, mu_phi, omega) | ob.bad
        if k == 1:
            return int(hit.sum()), None
        branch = _deviates(per / (n // k), mu_phi, omega / (2 * k)) | ob.bad
        union = branch.any(axis=0)
        return int(hit.sum()), (branch.sum(axis=1), int(union.sum()), int((hit & ~union).sum()))

    return run_chunks(work, budget, seed, workers, chunk)


def base_deviation_volume(m: MapDescriptor, phi, mu_phi: float, n: int, omega: float,
                          budget: int, seed: int, workers: int = 1,
                          chunk: int = DEFAULT_CHUNK) -> DeviationEstimate:
    """Leb{x : |S_n phi(x)/n - mu(phi)| >= omega}, uniform sampling, Wilson interval.

    Orbits that hit a discontinuity count as hits.
    """
    if budget < 1000:
        raise ValueError("budget must be at least 1000")
    parts = _base_pass(m, phi, mu_phi, n, omega, budget, seed, workers, chunk)
    hits = sum(p[0] for p in parts)
    return DeviationEstimate.from_counts(n, omega, hits, budget, seed)


@dataclass
class PowerMapReport:
    k: int
    direct: DeviationEstimate
    branches: list
    union: DeviationEstimate
    g_route: DeviationEstimate
    inclusion_violations: int
    union_bound_ok: bool


def power_map_deviation(m: MapDescriptor, k: int, phi, mu_phi: float, n: int, omega: float,
                        budget: int, seed: int, workers: int = 1,
                        chunk: int = DEFAULT_CHUNK) -> PowerMapReport:
    """Deviation of f over n*k steps against its k-th power g = f^k over n steps.

    ``direct`` is the f-route (identical to base_deviation_volume over n*k
    steps). ``branches[i]`` is the volume of {|S_n^g(phi o f^i)/n - mu| >=
    omega/2k}; the direct set must lie inside their union on every sample.
    ``g_route`` iterates g itself on an independent stream with the
    observable sum_i phi o f^i and should agree with ``direct``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    N = n * k
    parts = _base_pass(m, phi, mu_phi, N, omega, budget, seed, workers, chunk, k)
    hits = sum(p[0] for p in parts)
    direct = DeviationEstimate.from_counts(N, omega, hits, budget, seed)
    if k == 1:
        return PowerMapReport(1, direct, [direct], direct, direct, 0, True)
    br_hits = np.sum([p[1][0] for p in parts], axis=0)
    branches = [DeviationEstimate.from_counts(n, omega / (2 * k), int(h), budget, seed) for h in br_hits]
    union = DeviationEstimate.from_counts(n, omega / (2 * k), sum(p[1][1] for p in parts), budget, seed)
    violations = sum(p[1][2] for p in parts)
    g_seed = mix64(seed ^ 0x6A09E667F3BCC908)
    g_route = _g_route(m, k, phi, mu_phi, n, omega, budget, g_seed, workers, chunk)
    slack = sum(b.ci_hi - b.estimate for b in branches) + (direct.estimate - direct.ci_lo)
    ok = direct.estimate <= sum(b.estimate for b in branches) + slack
    return PowerMapReport(k, direct, branches, union, g_route, int(violations), bool(ok))


def _g_route(m, k, phi, mu_phi, n, omega, budget, seed, workers, chunk):
    def big_phi(y):
        # sum_{i<k} phi(f^i y), evaluated from y alone
        acc = np.zeros_like(y)
        for _ in range(k):
            acc = acc + np.asarray(phi(y), dtype=float)
            y = m.f(y)
        return acc

    def work(rng, size, _):
        ob = OrbitBatch(m, rng, size)
        total = np.zeros(size)
        for j in range(n):
            total += big_phi(ob.x)
            if j < n - 1:
                for _ in range(k):
                    ob.step()
        return int((_deviates(total / (n * k), mu_phi, omega) | ob.bad).sum())

    hits = sum(run_chunks(work, budget, seed, workers, chunk))
    return DeviationEstimate.from_counts(n * k, omega, hits, budget, seed)


# -- suspension flows ------------------------------------------------------------------


def _weighted_estimate(horizon, threshold, parts, budget, seed, constant_weights):
    """parts: per-chunk (hit_count, weighted_hits[sub], weights[sub])."""
    hits = sum(p[0] for p in parts)
    if constant_weights:
        return DeviationEstimate.from_counts(horizon, threshold, hits, budget, seed)
    num = np.concatenate([p[1] for p in parts])
    den = np.concatenate([p[2] for p in parts])
    est, lo, hi, _ = batch_means(num, den)
    est = min(max(est, 0.0), 1.0)
    if hits == 0:
        lo, hi = 0.0, wilson_upper(budget)
    return DeviationEstimate(horizon, threshold, hits, budget, est, min(lo, est), max(min(hi, 1.0), est), seed)


def wilson_upper(samples: int) -> float:
    return wilson_interval(0, samples)[1]


def _sub_sums(values, weights):
    idx = np.arange(len(values)) % SUB_BATCHES
    num = np.bincount(idx, weights=values * weights, minlength=SUB_BATCHES)
    den = np.bincount(idx, weights=weights, minlength=SUB_BATCHES)
    return num, den


def flow_deviation_volume(m: MapDescriptor, roof: RoofFunction, psi: FlowObservable,
                          nu_psi: float, T: float, epsilon: float, budget: int,
                          quad_step: float, seed: int, workers: int = 1,
                          chunk: int = DEFAULT_CHUNK) -> DeviationEstimate:
    """lambda{z : |(1/T) int_0^T psi(X^t z) dt - nu(psi)| > epsilon}.

    lambda-sampling is self-normalized with weights r(x); the interval comes
    from batch means over fixed sub-batches of every chunk, so it does not
    depend on the worker count.
    """
    if budget < 1000:
        raise ValueError("budget must be at least 1000")

    def work(rng, size, _):
        fb, w = lambda_sample_batch(m, roof, rng, size)
        integral = fb.integrate(psi, T, quad_step)
        hit = (np.abs(integral / T - nu_psi) > epsilon + THRESHOLD_TOL) | fb.orbits.bad
        num, den = _sub_sums(hit.astype(float), w)
        return int(hit.sum()), num, den

    parts = run_chunks(work, budget, seed, workers, chunk)
    return _weighted_estimate(T, epsilon, parts, budget, seed, roof.constant)


# -- escape ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """[xlo, xhi] x [slo, shi) in the suspension space."""

    xlo: float
    xhi: float
    slo: float = 0.0
    shi: float = math.inf

    def __post_init__(self):
        if not (self.xlo <= self.xhi and 0 <= self.slo <= self.shi):
            raise ValueError("box bounds are not ordered")


def as_region(region) -> tuple:
    """Normalize a Box, a 4-tuple, or a list of either into a tuple of boxes."""
    if isinstance(region, Box):
        return (region,)
    if isinstance(region, tuple) and len(region) in (2, 4) and all(isinstance(v, (int, float)) for v in region):
        return (Box(*map(float, region)),)
    if isinstance(region, (list, tuple)) and region:
        out = []
        for b in region:
            out.extend(as_region(b))
        return tuple(out)
    raise RegionUnsupported(f"cannot interpret {region!r} as a union of boxes")


def region_contains(boxes, x, s):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    inside = np.zeros(np.broadcast(x, s).shape, dtype=bool)
    for b in boxes:
        inside |= (x >= b.xlo) & (x <= b.xhi) & (s >= b.slo) & (s < b.shi)
    return inside


def _covered_end(boxes, x, s):
    """Largest e such that [s, e) lies in the region on the fiber above x
    (e == s when (x, s) is outside)."""
    e = np.array(s, dtype=float)
    for _ in range(len(boxes)):
        for b in boxes:
            on = (x >= b.xlo) & (x <= b.xhi) & (e >= b.slo) & (e < b.shi)
            e = np.where(on, b.shi, e)
    return e


def _fiber_fraction(boxes, x, r):
    """|{s in [0, r) : (x, s) in region}| / r for box regions."""
    covered = np.zeros_like(r)
    cuts = sorted({0.0} | {b.slo for b in boxes} | {b.shi for b in boxes if math.isfinite(b.shi)})
    edges = np.array(cuts + [math.inf])
    for a, c in zip(edges[:-1], edges[1:]):
        lo = np.minimum(a, r)
        hi = np.minimum(c, r)
        mid = np.where(hi > lo, (lo + hi) / 2, lo)
        covered += np.where(region_contains(boxes, x, mid), hi - lo, 0.0)
    return covered / r


def exit_times(fb, boxes, horizon: float) -> np.ndarray:
    """First t > 0 with X^t z outside the region (0 if z is outside), capped at horizon."""
    susp = fb.susp
    n = len(fb.s)
    tau = np.zeros(n)
    elapsed = np.zeros(n)
    alive = region_contains(boxes, fb.x, fb.s)
    s = fb.s.copy()
    while alive.any():
        x = fb.x
        r = np.asarray(susp.roof(x), dtype=float)
        e = _covered_end(boxes, x, s)
        through = alive & (e >= r)
        stop = alive & ~through
        tau = np.where(stop, elapsed + (e - s), tau)
        elapsed = elapsed + (r - s)
        alive = through & (elapsed < horizon)
        tau = np.where(through & ~alive, horizon, tau)
        if not alive.any():
            break
        fb.orbits.step()
        s = np.zeros(n)
    return np.minimum(tau, horizon)


class EscapeResult(NamedTuple):
    estimates: list
    fit: Optional["RateFit"]
    nu_K: float
    precondition_ok: bool


def region_nu(m: MapDescriptor, roof: RoofFunction, region, ensemble: int = 64, n: int = 2000,
              seed: int = 0) -> tuple[float, float]:
    """(nu(K), standard error) with the region's fiber measure computed exactly."""
    return _region_nu_value(m, roof, as_region(region), ensemble, n, seed)


def escape_rate(m: MapDescriptor, roof: RoofFunction, K_region, T_list, budget: int, seed: int,
                workers: int = 1, chunk: int = DEFAULT_CHUNK, nu_ensemble: int = 64,
                nu_n: int = 2000) -> EscapeResult:
    """lambda{z in K : X^t z in K for 0 < t < T} for each T, plus a rate fit.

    Exit is exact for box regions: on each fiber the covered stretch of s is
    computed from the box heights. ``precondition_ok`` records whether
    nu(K) is below 1 by a margin of three interval widths.
    """
    boxes = as_region(K_region)
    T_list = sorted(float(t) for t in T_list)
    horizon = T_list[-1]

    def work(rng, size, _):
        fb, w = lambda_sample_batch(m, roof, rng, size)
        tau = exit_times(fb, boxes, horizon)
        out = []
        for T in T_list:
            alive = tau >= T
            num, den = _sub_sums(alive.astype(float), w)
            out.append((int(alive.sum()), num, den))
        return out

    parts = run_chunks(work, budget, seed, workers, chunk)
    ests = [_weighted_estimate(T, 0.0, [p[i] for p in parts], budget, seed, roof.constant)
            for i, T in enumerate(T_list)]
    nu = _region_nu_value(m, roof, boxes, nu_ensemble, nu_n, seed)
    margin = 3 * 2 * Z95 * (nu[1] if math.isfinite(nu[1]) else 0.0)
    ok = nu[0] + margin < 1.0
    try:
        fit = rate_fit([(e.horizon, e.estimate) for e in ests])
    except DegenerateFit:
        fit = None
    return EscapeResult(ests, fit, nu[0], bool(ok))


def _region_nu_value(m, roof, boxes, ensemble, n, seed, burn_in=100):
    """nu(K) = mu(r * fiber fraction) / mu(r) by Birkhoff averaging."""
    rng = np.random.default_rng(seed)
    ob = OrbitBatch(m, rng, ensemble)
    for _ in range(burn_in):
        ob.step()
    num = np.zeros(ensemble)
    den = np.zeros(ensemble)
    for _ in range(n):
        x = ob.x
        r = np.asarray(roof(x), dtype=float)
        num += r * _fiber_fraction(boxes, x, r)
        den += r
        ob.step()
    per = num / den
    value = float(num.sum() / den.sum())
    se = float(np.std(per) / math.sqrt(ensemble)) if ensemble > 1 else math.nan
    return value, se


@dataclass
class BumpReport:
    T: float
    survivors: int
    checked: int
    violations: int
    min_average: float
    nonsurvivor_below_one: int
    nonsurvivors_checked: int
    vacuous: bool

    @property
    def passed(self) -> bool:
        return self.violations == 0


def region_bump(region, eps: float) -> FlowObservable:
    """1 on the region, 0 outside its eps-enlargement (sup metric), linear between."""
    boxes = as_region(region)

    def handle(x, s):
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        best = np.zeros(np.broadcast(x, s).shape)
        for b in boxes:
            dx = np.maximum(np.maximum(b.xlo - x, x - b.xhi), 0.0)
            ds = np.maximum(np.maximum(b.slo - s, s - b.shi), 0.0)
            best = np.maximum(best, np.clip(1.0 - np.maximum(dx, ds) / eps, 0.0, 1.0))
        return best

    return FlowObservable(handle, 1.0, name="bump")


def bump_inclusion_check(m: MapDescriptor, roof: RoofFunction, K_region, T: float,
                         sample_budget: int, seed: int, eps: float = 0.05,
                         quad_step: float = 0.01, max_checked: int = 200,
                         quad_tol: float = 1e-9) -> BumpReport:
    """Every survivor up to time T must have bump time-average >= 1."""
    boxes = as_region(K_region)
    bump = region_bump(boxes, eps)
    rng = np.random.default_rng(seed)
    fb, _ = lambda_sample_batch(m, roof, rng, sample_budget)
    x0, s0 = fb.x.copy(), fb.s.copy()
    tau = exit_times(fb, boxes, T)
    susp = Suspension(m, roof)
    surv = np.flatnonzero(tau >= T)
    others = np.flatnonzero(tau < T)
    worst, bad = math.inf, 0
    for i in surv[:max_checked]:
        avg = time_integral(susp, bump, SuspensionPoint(float(x0[i]), float(s0[i])), T, quad_step) / T
        worst = min(worst, avg)
        if avg < 1 - quad_tol:
            bad += 1
    below = 0
    checked_others = others[:max_checked]
    for i in checked_others:
        avg = time_integral(susp, bump, SuspensionPoint(float(x0[i]), float(s0[i])), T, quad_step) / T
        below += avg < 1 - quad_tol
    n_checked = min(len(surv), max_checked)
    return BumpReport(T, int(len(surv)), n_checked, bad, worst, int(below), len(checked_others),
                      n_checked == 0)


# -- rate fitting ----------------------------------------------------------------------


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: list
    excluded: list = field(default_factory=list)
    curvature: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.window) < 3 or any(b <= a for a, b in zip(self.window, self.window[1:])):
            raise ValueError("window must be strictly increasing with at least 3 horizons")

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
                "window": list(self.window), "excluded": list(self.excluded),
                "curvature": list(self.curvature)}


def rate_fit(series) -> RateFit:
    """Least squares fit of log(estimate) on horizon over the positive entries.

    ``curvature`` holds second differences of log-estimates divided by the
    squared mean spacing; persistent negative values suggest faster than
    exponential decay.
    """
    pts = sorted((float(h), float(e)) for h, e in series)
    excluded = [h for h, e in pts if not e > 0]
    pos = [(h, e) for h, e in pts if e > 0]
    if len(pos) < 3:
        raise DegenerateFit(f"{len(pos)} positive entries, need 3")
    h = np.array([p[0] for p in pos])
    y = np.log([p[1] for p in pos])
    slope, intercept, r2 = linear_fit(h, y)
    curv = []
    for i in range(1, len(h) - 1):
        d1 = (y[i] - y[i - 1]) / (h[i] - h[i - 1])
        d2 = (y[i + 1] - y[i]) / (h[i + 1] - h[i])
        curv.append(float((d2 - d1) / ((h[i + 1] - h[i - 1]) / 2)))
    return RateFit(slope, intercept, r2, [float(v) for v in h], excluded, curv)
