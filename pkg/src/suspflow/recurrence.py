"""Birkhoff sums, truncated log distance, recurrence volumes, hyperbolic times."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import BranchMismatch, SingularOrbit, SingularPoint, UnknownEntropy
from .maps import SINGULAR_TOL, Family, MapDescriptor, OrbitBatch
from .stats import DeviationEstimate
from .streams import DEFAULT_CHUNK, run_chunks

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class HyperbolicParams:
    sigma: float
    delta: float
    b: float

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not (self.delta > 0 and self.b > 0):
            raise ValueError("delta and b must be positive")


@dataclass
class OrbitRecord:
    x0: float
    n: int
    xs: np.ndarray
    log_df: np.ndarray
    hit_index: int | None = None

    @property
    def truncated(self) -> bool:
        return self.hit_index is not None


def orbit(m: MapDescriptor, x0: float, n: int) -> OrbitRecord:
    """Iterates x_0..x_{n-1}, stopping early if an iterate lands in S."""
    xs = np.empty(n)
    x = float(x0)
    hit = None
    pts = m.singular_set.points
    for j in range(n):
        if pts and min(abs(x - p) for p in pts) <= SINGULAR_TOL:
            hit = j
            xs = xs[:j]
            break
        xs[j] = x
        x = float(m.f(x))
    return OrbitRecord(float(x0), n, xs, m.log_abs_df(xs), hit)


def _require_full(rec: OrbitRecord):
    if rec.truncated:
        raise SingularOrbit(rec.hit_index, rec.xs[-1] if len(rec.xs) else rec.x0)


# -- truncated log distance ------------------------------------------------


def delta_from_dist(d, delta):
    """Truncated log distance as a function of dist(x, S); vectorized."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_log = -np.log(d)
        mid = neg_log * (2 * delta - d) / delta
    out = np.where(d <= delta, neg_log, np.where(d >= 2 * delta, 0.0, mid))
    return out


def truncated_log_distance(m: MapDescriptor, x, delta: float) -> float:
    if not delta < m.length / 4:
        raise ValueError("delta must be below a quarter of the domain length")
    d = float(m.dist(float(x)))
    if d <= 0.0:
        raise SingularPoint(x, d)
    return float(delta_from_dist(d, delta))


def truncated_log_distance_array(m: MapDescriptor, x, delta: float):
    return delta_from_dist(m.dist(x), delta)


def truncated_dist(d, delta):
    """d_delta: the distance itself inside B(S, delta), 1 outside."""
    d = np.asarray(d, dtype=float)
    return np.where(d <= delta, d, 1.0)


# -- ergodic sums --------------------------------------------------------------


def _stable_mean(values) -> float:
    # mean = v0 + mean(v - v0): exact when every term agrees
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0
    v0 = float(v[0])
    return v0 + math.fsum(v - v0) / v.size


def birkhoff_sum(m: MapDescriptor, phi, x, n: int) -> float:
    rec = orbit(m, x, n)
    _require_full(rec)
    return math.fsum(np.asarray(phi(rec.xs), dtype=float))


def nue_diagnostic(m: MapDescriptor, x, n: int) -> float:
    rec = orbit(m, x, n)
    _require_full(rec)
    return -_stable_mean(rec.log_df)


# -- slow recurrence ------------------------------------------------------------


def slow_recurrence_volume(m: MapDescriptor, n: int, delta: float, epsilon: float,
                           sample_budget: int, seed: int, workers: int = 1,
                           chunk: int = DEFAULT_CHUNK) -> DeviationEstimate:
    """Leb{x : (1/n) S_n Delta_delta(x) > epsilon} by uniform sampling.

    Lebesgue measure is normalized to total mass 1 on the domain.
    """
    if sample_budget < 1000:
        raise ValueError("sample_budget must be at least 1000")
    if not m.singular_points:
        return DeviationEstimate.from_counts(n, epsilon, 0, sample_budget, seed)

    def work(rng, size, _idx):
        ob = OrbitBatch(m, rng, size)
        total = np.zeros(size)
        for j in range(n):
            total += truncated_log_distance_array(m, ob.x, delta)
            if j < n - 1:
                ob.step()
        hits = (total > n * epsilon) | ob.bad
        return int(hits.sum())

    hits = sum(run_chunks(work, sample_budget, seed, workers, chunk))
    return DeviationEstimate.from_counts(n, epsilon, hits, sample_budget, seed)


# -- hyperbolic times -----------------------------------------------------------


def _hyperbolic_scan(log_df, dists, params: HyperbolicParams):
    """Times n in 1..N meeting both backward conditions for every k <= n.

    Product: sum_{j=n-k}^{n-1} (-log|f'(x_j)| - log sigma) <= 0 for all k,
    i.e. the prefix sum P_n is at most every earlier P_m. Distance:
    log d_delta(x_m) >= -b (n - m) for all m < n, i.e. n >= max_m
    (m - log d_delta(x_m) / b).
    """
    tol = 1e-12
    log_sigma = math.log(params.sigma)
    logd = np.log(truncated_dist(dists, params.delta))
    times = []
    prefix = 0.0
    running_min = prefix
    need = -math.inf
    for m in range(len(log_df)):
        prefix += -log_df[m] - log_sigma
        need = max(need, m - logd[m] / params.b)
        n = m + 1
        if prefix <= running_min + tol and n >= need - tol:
            times.append(n)
        running_min = min(running_min, prefix)
    return times


def detect_hyperbolic_times(m: MapDescriptor, x, N: int, params: HyperbolicParams) -> list:
    rec = orbit(m, x, N)
    _require_full(rec)
    return _hyperbolic_scan(rec.log_df, m.dist(rec.xs), params)


def hyperbolic_frequency(m: MapDescriptor, x, N: int, params: HyperbolicParams) -> float:
    return len(detect_hyperbolic_times(m, x, N, params)) / N


def _first_product_failure(log_df, n, sigma):
    acc = 0.0
    for k in range(1, n + 1):
        acc += -log_df[n - k]
        if acc > k * math.log(sigma) + 1e-12:
            return k
    return None


@dataclass
class PreballReport:
    n: int
    max_ratio: float
    witness_k: int | None
    is_hyperbolic: bool
    passed: bool
    pairs: int
    ratios: list = field(default_factory=list)


def _mp_f(m: MapDescriptor, x):
    fam = m.family
    if fam is Family.DOUBLING:
        y = 2 * x
        return y - mpmath.floor(y)
    if fam is Family.TENT_FULL:
        return 1 - abs(2 * x - 1)
    if fam is Family.LORENZ_LIKE:
        a, b = m.param("alpha"), m.param("b_coef")
        s = 1 if x >= 0 else -1
        return s * (b * abs(x) ** a - 1)
    if fam is Family.QUADRATIC:
        return m.param("a") - x * x
    raise NotImplementedError(fam)


def _branch_label(m: MapDescriptor, x):
    pts = m.singular_set.points
    if m.family is Family.DOUBLING:
        return int(2 * x >= 1)
    return sum(1 for p in pts if x >= p)


def verify_preball_contraction(m: MapDescriptor, x, n: int, params: HyperbolicParams,
                               pair_budget: int = 32, seed: int = 0,
                               image_radius: float = 1e-6, tol: float = 1e-6) -> PreballReport:
    """Backward contraction of nearby pairs along the orbit of x up to time n.

    Pairs are drawn so that their time-n images are about ``image_radius``
    apart; iteration runs in multiprecision wide enough to resolve the
    initial separation.
    """
    rec = orbit(m, x, n)
    _require_full(rec)
    fail_k = _first_product_failure(rec.log_df, n, params.sigma)
    if fail_k is None:
        hyper = n in _hyperbolic_scan(rec.log_df, m.dist(rec.xs), params)
    else:
        hyper = False
    log_growth = float(np.sum(rec.log_df))
    dps = int(30 + (log_growth + abs(math.log(image_radius))) / math.log(10))
    rng = np.random.default_rng(seed)
    worst, worst_k, ratios = 0.0, None, []
    with mpmath.workdps(dps):
        h = mpmath.mpf(image_radius) * mpmath.exp(-mpmath.mpf(log_growth))
        x0 = mpmath.mpf(float(x))
        for _ in range(pair_budget):
            u = rng.uniform(-1, 1, 2)
            y, z = x0 + h * u[0], x0 + h * u[1]
            if y == z:
                continue
            ys, zs = [y], [z]
            for j in range(n):
                if _branch_label(m, ys[-1]) != _branch_label(m, zs[-1]):
                    raise BranchMismatch(f"pair straddles a singular point at step {j}")
                ys.append(_mp_f(m, ys[-1]))
                zs.append(_mp_f(m, zs[-1]))
            dn = abs(ys[n] - zs[n])
            for k in range(1, n + 1):
                r = float(abs(ys[n - k] - zs[n - k]) / (mpmath.mpf(params.sigma) ** (mpmath.mpf(k) / 2) * dn))
                if r > worst:
                    worst, worst_k = r, k
            ratios.append(worst)
    passed = hyper and worst <= 1 + tol
    witness = fail_k if fail_k is not None else worst_k
    return PreballReport(n, worst, witness, hyper, passed, len(ratios), ratios)


# -- entropy formula -------------------------------------------------------------

REFERENCE_ENTROPY = {Family.DOUBLING: LOG2, Family.TENT_FULL: LOG2}


def reference_entropy(m: MapDescriptor):
    if m.family in REFERENCE_ENTROPY:
        return REFERENCE_ENTROPY[m.family]
    if m.family is Family.QUADRATIC and m.param("a") == 2.0:
        return LOG2
    return None


@dataclass
class EntropyReport:
    estimate: float
    reference: float | None
    abs_error: float | None
    restarts: int
    per_orbit: np.ndarray


def entropy_formula_check(m: MapDescriptor, burn_in: int, n: int, ensemble: int,
                          seed: int = 0, report_only: bool = False) -> EntropyReport:
    """Time average of log|f'| over an ensemble of Lebesgue-random orbits.

    Float orbits that fall onto the critical point or an endpoint fixed
    point are restarted from a fresh uniform draw; the count is reported.
    """
    ref = reference_entropy(m)
    if ref is None and not report_only:
        raise UnknownEntropy(f"no reference entropy for {m.family.value}")
    rng = np.random.default_rng(seed)
    ob = OrbitBatch(m, rng, ensemble)
    lo, hi = m.domain
    restarts = 0
    acc = np.zeros(ensemble)
    ref0 = None
    for j in range(burn_in + n):
        if ob.k is None:
            xx = ob.x
            edge = 8 * np.finfo(float).eps * max(abs(lo), abs(hi))
            stuck = (xx <= lo + edge) | (xx >= hi - edge) | (m.dist(xx, m.singular_set.points) < 1e-300 if m.singular_set.points else False)
            if np.any(stuck):
                restarts += int(stuck.sum())
                xx = np.where(stuck, m.sample_uniform(rng, ensemble), xx)
                ob._x = xx
        if j >= burn_in:
            v = m.log_abs_df(ob.x)
            if ref0 is None:
                ref0 = float(v[0])
            acc += v - ref0
        ob.step()
    per = ref0 + acc / n
    est = _stable_mean(per)
    err = None if ref is None else abs(est - ref)
    return EntropyReport(est, ref, err, restarts, per)
