"""Suspension semiflows over a base map: roofs, laps, evolution, integrals.

A point of the suspension space is a pair (x, s) with 0 <= s < r(x). The
flow moves s at unit speed; when s reaches r(x) the point jumps to
(f(x), 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonConvergent, SingularOrbit, SingularPoint
from .maps import SINGULAR_TOL, MapDescriptor, Observable, OrbitBatch
from .recurrence import delta_from_dist
from .stats import batch_means
from .streams import DEFAULT_CHUNK, run_chunks


# -- roofs ----------------------------------------------------------------


@dataclass(frozen=True)
class RoofFunction:
    handle: Callable
    r0: float
    growth_C: float
    K: float
    name: str = ""

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("roof lower bound r0 must be positive")
        if self.growth_C < 0:
            raise ValueError("growth_C must be nonnegative")

    def __call__(self, x):
        return self.handle(x)

    @property
    def constant(self) -> bool:
        return self.growth_C == 0


def constant_roof(value: float = 1.0) -> RoofFunction:
    value = float(value)
    return RoofFunction(lambda x: np.full(np.shape(x), value), value, 0.0, 0.0, "constant")


def default_roof(m: MapDescriptor, r0: float = 1.0, growth_C: float = 0.5) -> RoofFunction:
    """r0 + C * Delta(x) with the truncation radius at an eighth of the domain."""
    dbar = m.length / 8

    def handle(x):
        with np.errstate(invalid="ignore"):
            return r0 + growth_C * delta_from_dist(m.dist(x), dbar)

    return RoofFunction(handle, float(r0), float(growth_C), float(growth_C), "default")


def log_distance_roof(m: MapDescriptor, r0: float = 1.0, growth_C: float = 0.5,
                      points=None) -> RoofFunction:
    """r0 - C log min(dist(x, points), 1); points default to the interior singular set."""
    pts = tuple(m.singular_set.points if points is None else points)

    def handle(x):
        d = np.minimum(m.dist(x, pts), 1.0)
        with np.errstate(divide="ignore"):
            return r0 - growth_C * np.log(d)

    return RoofFunction(handle, float(r0), float(growth_C), float(growth_C), "log_distance")


ROOFS = {"constant": constant_roof, "default": default_roof, "log_distance": log_distance_roof}


def make_roof(name: str, m: MapDescriptor, **params) -> RoofFunction:
    if name not in ROOFS:
        raise KeyError(f"unknown roof {name!r}")
    if name == "constant":
        return constant_roof(**params)
    return ROOFS[name](m, **params)


# -- points and observables -------------------------------------------------------


@dataclass(frozen=True)
class SuspensionPoint:
    x: float
    s: float

    def __post_init__(self):
        if not self.s >= 0:
            raise ValueError("fiber coordinate s must be nonnegative")

    def is_valid(self, roof: RoofFunction) -> bool:
        return 0 <= self.s < float(roof(self.x))


@dataclass(frozen=True)
class FlowObservable:
    """psi(x, s), vectorized in both arguments, with a sup-norm bound."""

    handle: Callable
    sup_norm: float
    s_independent: bool = False
    name: str = ""

    def __call__(self, x, s):
        return self.handle(x, s)


def constant_psi(c: float) -> FlowObservable:
    c = float(c)
    return FlowObservable(lambda x, s: np.full(np.broadcast(x, s).shape, c), abs(c), True, "constant")


def base_psi(phi, bound: float, name: str = "") -> FlowObservable:
    """Lift phi(x) to the suspension, constant along fibers."""
    return FlowObservable(lambda x, s: phi(np.asarray(x, dtype=float)) + 0.0 * np.asarray(s),
                          float(bound), True, name)


# -- scalar flow ---------------------------------------------------------------------


@dataclass(frozen=True)
class Suspension:
    m: MapDescriptor
    roof: RoofFunction

    def r(self, x) -> float:
        return float(self.roof(float(x)))

    def step(self, x: float, laps: int) -> float:
        if self.m.discontinuities and float(self.m.dist(x, self.m.discontinuities)) <= SINGULAR_TOL:
            raise SingularOrbit(laps, x)
        return float(self.m.f(x))

    def check(self, z: SuspensionPoint):
        if not 0 <= z.s < self.r(z.x):
            raise ValueError(f"s={z.s} outside [0, r(x)) at x={z.x}")


def lap_number(susp: Suspension, x: float, s: float, T: float) -> tuple[int, float]:
    """(n, s + T - S_n r(x)) with S_n r(x) <= s + T < S_{n+1} r(x)."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    n, _, u = _run_laps(susp, float(x), float(s) + float(T))
    return n, u


def _run_laps(susp: Suspension, x: float, u: float):
    n = 0
    r = susp.r(x)
    while u >= r:
        u -= r
        x = susp.step(x, n)
        n += 1
        r = susp.r(x)
    return n, x, u


def evolve(susp: Suspension, z: SuspensionPoint, t: float) -> SuspensionPoint:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return z
    _, x, u = _run_laps(susp, z.x, z.s + float(t))
    return SuspensionPoint(x, u)


def _simpson(values, h) -> float:
    return h / 3 * (values[0] + values[-1] + 4 * values[1:-1:2].sum() + 2 * values[2:-1:2].sum())


def _segment_integral(psi: FlowObservable, x: float, a: float, b: float, step: float) -> float:
    if b <= a:
        return 0.0
    if psi.s_independent:
        return float(psi(x, a)) * (b - a)
    k = max(2, 2 * math.ceil((b - a) / (2 * step)))
    s = np.linspace(a, b, k + 1)
    return float(_simpson(np.asarray(psi(np.full_like(s, x), s), dtype=float), (b - a) / k))


def time_integral(susp: Suspension, psi: FlowObservable, z: SuspensionPoint, T: float,
                  quad_step: float = 0.01) -> float:
    """Integral of psi along the flow line of z over [0, T], fiber by fiber."""
    if not T > 0:
        raise ValueError("T must be positive")
    parts = []
    x, s, left = z.x, z.s, float(T)
    laps = 0
    while True:
        r = susp.r(x)
        if left <= r - s:
            parts.append(_segment_integral(psi, x, s, s + left, min(quad_step, r / 8)))
            break
        # decide on left vs r - s: s + (r - s) can round below r
        parts.append(_segment_integral(psi, x, s, r, min(quad_step, r / 8)))
        left -= r - s
        x = susp.step(x, laps)
        laps += 1
        s = 0.0
    return math.fsum(parts)


def fiber_observable(psi: FlowObservable, m: MapDescriptor, roof: RoofFunction,
                     quad_step: float = 0.01) -> Observable:
    """phi(x) = integral of psi(x, s) over 0 <= s < r(x)."""

    def handle(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        r = np.asarray(roof(x), dtype=float)
        if psi.s_independent:
            out = np.asarray(psi(x, np.zeros_like(x)), dtype=float) * r
        else:
            out = _batch_fiber_integral(psi, x, np.zeros_like(x), r, quad_step, r)
        return out

    return Observable(handle, log_growth_K=psi.sup_norm * roof.K, name=f"fiber({psi.name})")


def _batch_fiber_integral(psi, x, a, b, quad_step, r):
    """Simpson over [a_i, b_i] on the fiber above x_i, one common node count."""
    length = b - a
    if psi.s_independent:
        return np.asarray(psi(x, a), dtype=float) * length
    h = np.minimum(quad_step, r / 8)
    k = int(max(2, 2 * math.ceil(float(np.max(length / h)) / 2))) if len(x) else 2
    t = np.linspace(0.0, 1.0, k + 1)
    s = a[:, None] + length[:, None] * t[None, :]
    vals = np.asarray(psi(np.broadcast_to(x[:, None], s.shape), s), dtype=float)
    w = np.ones(k + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return vals @ w * (length / k) / 3


# -- batch flow over Lebesgue-random bases -------------------------------------------


@dataclass
class FlowBatch:
    """Lockstep flow of many suspension points over one OrbitBatch."""

    susp: Suspension
    orbits: OrbitBatch
    s: np.ndarray
    laps: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.laps is None:
            self.laps = np.zeros(len(self.s), dtype=np.int64)

    @property
    def x(self):
        return self.orbits.x

    def integrate(self, psi: FlowObservable, T: float, quad_step: float = 0.01, on_lap=None):
        """Integral of psi over [0, T] from the current points; advances the batch.

        ``on_lap(batch, elapsed)`` is called after each base step so callers
        can test exit conditions along the way.
        """
        susp = self.susp
        n = len(self.s)
        total = np.zeros(n)
        left = np.full(n, float(T))
        active = np.ones(n, dtype=bool)
        while True:
            x = self.x
            r = np.asarray(susp.roof(x), dtype=float)
            seg = np.where(active, np.minimum(r - self.s, left), 0.0)
            if active.any():
                idx = np.flatnonzero(active)
                total[idx] += _batch_fiber_integral(psi, x[idx], self.s[idx], self.s[idx] + seg[idx],
                                                    quad_step, r[idx])
            left = left - seg
            jumping = active & ((left > 0) | (self.s + seg >= r))
            self.s = np.where(active & ~jumping, self.s + seg, self.s)
            if not jumping.any():
                break
            # every orbit steps; finished samples are frozen by ``active``
            self.orbits.step()
            self.laps += jumping
            self.s = np.where(jumping, 0.0, self.s)
            active = jumping
            if on_lap is not None:
                on_lap(self, float(T) - left, active)
        return total


def lambda_sample(m: MapDescriptor, roof: RoofFunction, rng, size: Optional[int] = None):
    """x uniform, s uniform on [0, r(x)), weight r(x).

    Averages of weight * indicator, normalized by the total weight, estimate
    lambda. With ``size=None`` a single (SuspensionPoint, weight) is returned.
    """
    if size is None:
        x, s, w = lambda_sample(m, roof, rng, 1)
        return SuspensionPoint(float(x[0]), float(s[0])), float(w[0])
    x = m.sample_uniform(rng, size)
    x = _resample_singular(m, x, rng)
    r = np.asarray(roof(x), dtype=float)
    s = rng.uniform(0.0, 1.0, size) * r
    return x, s, r


def _resample_singular(m: MapDescriptor, x, rng):
    pts = m.singular_set.points
    if not pts:
        return x
    for _ in range(8):
        hit = m.dist(x, pts) <= 0
        if not hit.any():
            return x
        x = np.where(hit, m.sample_uniform(rng, len(x)), x)
    raise SingularPoint(float(x[hit][0]), 0.0)


def lambda_sample_batch(m: MapDescriptor, roof: RoofFunction, rng, size: int) -> tuple[FlowBatch, np.ndarray]:
    """lambda-distributed starts on exact dyadic orbits where available."""
    ob = OrbitBatch(m, rng, size)
    x = ob.x
    if ob.k is None:
        x = _resample_singular(m, x, rng)
        ob._x = x
    r = np.asarray(roof(x), dtype=float)
    s = rng.uniform(0.0, 1.0, size) * r
    return FlowBatch(Suspension(m, roof), ob, s), r


def lambda_measure(m: MapDescriptor, roof: RoofFunction, indicator, budget: int, seed: int,
                   workers: int = 1, chunk: int = DEFAULT_CHUNK):
    """lambda(A) for A = {indicator(x, s)}: (estimate, lo, hi, se) by batch means."""

    def work(rng, size, _):
        x, s, w = lambda_sample(m, roof, rng, size)
        hit = np.asarray(indicator(x, s), dtype=bool)
        return float(np.sum(w * hit)), float(np.sum(w))

    parts = run_chunks(work, budget, seed, workers, chunk)
    num = [p[0] for p in parts]
    den = [p[1] for p in parts]
    return batch_means(num, den)


# -- nu -------------------------------------------------------------------------------


@dataclass
class NuEstimate:
    value: float
    se: float
    spread: float
    per_orbit: np.ndarray
    nonconvergent: bool

    def __float__(self):
        return self.value


def nu_estimate(psi: FlowObservable, m: MapDescriptor, roof: RoofFunction, burn_in: int, n: int,
                ensemble: int, seed: int, quad_step: float = 0.01, spread_threshold: float = 0.05,
                strict: bool = False) -> NuEstimate:
    """nu(psi) = mu(phi) / mu(r), mu realized by Birkhoff averages.

    Each orbit contributes its own ratio; the pooled value weights orbits by
    their roof sums. ``nonconvergent`` is set when the per-orbit spread
    exceeds ``spread_threshold``.
    """
    rng = np.random.default_rng(seed)
    ob = OrbitBatch(m, rng, ensemble)
    for _ in range(burn_in):
        ob.step()
    phi_sum = np.zeros(ensemble)
    r_sum = np.zeros(ensemble)
    mean0 = None
    for _ in range(n):
        x = ob.x
        r = np.asarray(roof(x), dtype=float)
        mean = _fiber_mean(psi, x, r, quad_step)
        if mean0 is None:
            mean0 = float(mean[0])
        # deviations from a reference value keep constant psi exact
        phi_sum += r * (mean - mean0)
        r_sum += r
        ob.step()
    per = mean0 + phi_sum / r_sum
    value = mean0 + float(phi_sum.sum() / r_sum.sum())
    spread = float(np.std(per)) if ensemble > 1 else 0.0
    se = spread / math.sqrt(ensemble) if ensemble > 1 else float("nan")
    flag = spread > spread_threshold
    if flag and strict:
        raise NonConvergent(f"ensemble spread {spread:.3g} exceeds {spread_threshold}")
    return NuEstimate(value, se, spread, per, flag)


def _fiber_mean(psi: FlowObservable, x, r, quad_step):
    if psi.s_independent:
        return np.asarray(psi(x, np.zeros_like(x)), dtype=float)
    return _batch_fiber_integral(psi, x, np.zeros_like(x), r, quad_step, r) / r
