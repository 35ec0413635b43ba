"""Base transformations: the interval and circle maps the semiflows sit over.

Every family evaluates on numpy arrays. The scalar entry points ``eval``,
``derivative`` and ``dist_to_singular`` validate their input; the
``MapDescriptor.f`` / ``df`` / ``dist`` methods skip validation and are what
the estimators call in their inner loops.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InsufficientSamples, OutOfDomain, SingularPoint

SINGULAR_TOL = 1e-30
DYADIC_BITS = 53
_DYADIC_MASK = (1 << DYADIC_BITS) - 1
_DYADIC_HALF = 1 << (DYADIC_BITS - 1)


class Family(str, enum.Enum):
    DOUBLING = "doubling"
    PIECEWISE_LINEAR = "piecewise_linear"
    LORENZ_LIKE = "lorenz_like"
    QUADRATIC = "quadratic"
    TENT_FULL = "tent_full"


@dataclass(frozen=True)
class SingularSet:
    points: tuple = ()
    includes_endpoints: bool = False

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("singular points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def empty(self) -> bool:
        return not self.points and not self.includes_endpoints

    def all_points(self, domain) -> tuple:
        """Interior points plus the flagged endpoints, sorted."""
        pts = set(self.points)
        if self.includes_endpoints:
            pts.update(domain)
        return tuple(sorted(pts))


@dataclass(frozen=True)
class NonFlatnessParams:
    B: float
    beta: float
    kappa: float = 1.0
    C_kappa: float = 2.0

    def __post_init__(self):
        if not self.B > 1:
            raise ValueError("B must exceed 1")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not (self.kappa > 0 and self.C_kappa > 0):
            raise ValueError("kappa and C_kappa must be positive")


@dataclass(frozen=True)
class Observable:
    """A real function on the domain minus the singular set."""

    handle: Callable
    log_growth_K: Optional[float] = None
    bound: Optional[float] = None
    name: str = ""

    def __call__(self, x):
        return self.handle(x)


@dataclass(frozen=True)
class MapDescriptor:
    family: Family
    domain: tuple
    singular_set: SingularSet
    nonflatness: Optional[NonFlatnessParams] = None
    expansion_floor: Optional[float] = None
    params: tuple = ()
    circle: bool = False

    # -- parameters -----------------------------------------------------

    def param(self, name):
        return dict(self.params)[name]

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def is_dyadic(self) -> bool:
        """Families whose orbits are shifts on binary expansions."""
        return self.family in (Family.DOUBLING, Family.TENT_FULL)

    @property
    def discontinuities(self) -> tuple:
        if self.family in (Family.LORENZ_LIKE, Family.PIECEWISE_LINEAR):
            return self.singular_set.points
        return ()

    @property
    def singular_points(self) -> tuple:
        return self.singular_set.all_points(self.domain)

    # -- vectorized kernels --------------------------------------------

    def f(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam is Family.DOUBLING:
            y = 2.0 * x
            return y - np.floor(y)
        if fam is Family.TENT_FULL:
            return 1.0 - np.abs(2.0 * x - 1.0)
        if fam is Family.LORENZ_LIKE:
            a, b = self.param("alpha"), self.param("b_coef")
            return np.where(x >= 0, 1.0, -1.0) * (b * np.abs(x) ** a - 1.0)
        if fam is Family.QUADRATIC:
            return self.param("a") - x * x
        if fam is Family.PIECEWISE_LINEAR:
            br = np.asarray(self.param("breaks"))
            i = np.clip(np.searchsorted(br, x, side="right") - 1, 0, len(br) - 2)
            return (x - br[i]) / (br[i + 1] - br[i])
        raise NotImplementedError(fam)

    def branch_f(self, x, side):
        """One-sided evaluation: the branch on ``side`` (+1/-1) of 0.

        Only the Lorenz-like family needs this, to evaluate f(0+) and f(0-).
        """
        a, b = self.param("alpha"), self.param("b_coef")
        return side * (b * np.abs(x) ** a - 1.0)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam is Family.DOUBLING:
            return np.full_like(x, 2.0)
        if fam is Family.TENT_FULL:
            return np.where(x < 0.5, 2.0, -2.0)
        if fam is Family.LORENZ_LIKE:
            a, b = self.param("alpha"), self.param("b_coef")
            with np.errstate(divide="ignore"):
                return a * b * np.abs(x) ** (a - 1.0)
        if fam is Family.QUADRATIC:
            return -2.0 * x
        if fam is Family.PIECEWISE_LINEAR:
            br = np.asarray(self.param("breaks"))
            i = np.clip(np.searchsorted(br, x, side="right") - 1, 0, len(br) - 2)
            return 1.0 / (br[i + 1] - br[i])
        raise NotImplementedError(fam)

    def log_abs_df(self, x):
        x = np.asarray(x, dtype=float)
        if self.family is Family.LORENZ_LIKE:
            a, b = self.param("alpha"), self.param("b_coef")
            with np.errstate(divide="ignore"):
                return math.log(a * b) + (a - 1.0) * np.log(np.abs(x))
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.df(x)))

    def dist(self, x, points=None):
        x = np.asarray(x, dtype=float)
        pts = self.singular_points if points is None else points
        if not pts:
            return np.full_like(x, np.inf)
        pts = np.asarray(pts)
        if self.circle:
            pts = np.concatenate([pts - self.length, pts, pts + self.length])
        return np.min(np.abs(x[..., None] - pts), axis=-1)

    def inverse_branches(self):
        """Inverse branch callables keyed by branch label (Lorenz-like only)."""
        a, b = self.param("alpha"), self.param("b_coef")
        return {
            1: lambda y: ((y + 1.0) / b) ** (1.0 / a),
            -1: lambda y: -(((1.0 - y) / b) ** (1.0 / a)),
        }

    def sample_uniform(self, rng, size):
        lo, hi = self.domain
        return rng.uniform(lo, hi, size)


# -- constructors ---------------------------------------------------------


def doubling(nonflatness=None) -> MapDescriptor:
    return MapDescriptor(
        Family.DOUBLING,
        (0.0, 1.0),
        SingularSet(),
        nonflatness or NonFlatnessParams(B=2.0, beta=0.5, kappa=1.0, C_kappa=1.0),
        expansion_floor=2.0,
        circle=True,
    )


def tent_full(includes_endpoints=True) -> MapDescriptor:
    return MapDescriptor(
        Family.TENT_FULL,
        (0.0, 1.0),
        SingularSet((0.5,), includes_endpoints),
        NonFlatnessParams(B=2.0, beta=0.5, kappa=1.0, C_kappa=4.0),
        expansion_floor=2.0,
    )


def lorenz_like(alpha=0.6, b_coef=1.9, includes_endpoints=True, B=4.0) -> MapDescriptor:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 1 < b_coef < 2:
        raise ValueError("b_coef must lie in (1, 2)")
    if not alpha * b_coef > 1:
        raise ValueError("alpha*b_coef must exceed 1")
    return MapDescriptor(
        Family.LORENZ_LIKE,
        (-1.0, 1.0),
        SingularSet((0.0,), includes_endpoints),
        NonFlatnessParams(B=B, beta=1.0 - alpha, kappa=1.0, C_kappa=4.0),
        expansion_floor=alpha * b_coef,
        params=(("alpha", float(alpha)), ("b_coef", float(b_coef))),
    )


def quadratic(a=2.0) -> MapDescriptor:
    # Domain [-a, a]: f_a(0) = a leaves [-1, 1].
    if not 1 < a <= 2:
        raise ValueError("a must lie in (1, 2]")
    return MapDescriptor(
        Family.QUADRATIC,
        (-float(a), float(a)),
        SingularSet((0.0,), False),
        NonFlatnessParams(B=4.0, beta=0.9, kappa=1.0, C_kappa=2.0),
        expansion_floor=None,
        params=(("a", float(a)),),
    )


def piecewise_linear(breaks=(0.0, 0.4, 1.0)) -> MapDescriptor:
    """Full-branch increasing piecewise linear map on [0, 1]."""
    br = tuple(float(b) for b in breaks)
    if br[0] != 0.0 or br[-1] != 1.0 or len(br) < 3:
        raise ValueError("breaks must start at 0, end at 1 and have >= 3 entries")
    widths = np.diff(br)
    if np.any(widths <= 0):
        raise ValueError("breaks must be strictly increasing")
    return MapDescriptor(
        Family.PIECEWISE_LINEAR,
        (0.0, 1.0),
        SingularSet(br[1:-1], True),
        NonFlatnessParams(B=max(2.0, 1.0 / widths.min() + 1.0), beta=0.5, kappa=1.0,
                          C_kappa=2.0 * (len(br) - 1)),
        expansion_floor=float(1.0 / widths.max()),
        params=(("breaks", br),),
    )


FAMILIES = {
    "doubling": doubling,
    "tent_full": tent_full,
    "lorenz_like": lorenz_like,
    "quadratic": quadratic,
    "piecewise_linear": piecewise_linear,
}


def make_map(name: str, **params) -> MapDescriptor:
    try:
        ctor = FAMILIES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown map family {name!r}") from None
    return ctor(**params)


# -- validated scalar operations -------------------------------------------


def _check_domain(m: MapDescriptor, x: float):
    lo, hi = m.domain
    if not (lo <= x <= hi) or math.isnan(x):
        raise OutOfDomain(f"{x!r} outside domain [{lo}, {hi}]")


def eval(m: MapDescriptor, x: float) -> float:  # noqa: A001 - mirrors f(x)
    x = float(x)
    _check_domain(m, x)
    if m.discontinuities:
        d = float(m.dist(x, m.discontinuities))
        if d <= SINGULAR_TOL:
            raise SingularPoint(x, d)
    return float(m.f(x))


def derivative(m: MapDescriptor, x: float) -> float:
    x = float(x)
    _check_domain(m, x)
    if m.singular_set.points:
        d = float(m.dist(x, m.singular_set.points))
        if d <= SINGULAR_TOL:
            raise SingularPoint(x, d)
    return float(m.df(x))


def dist_to_singular(m: MapDescriptor, x: float) -> float:
    return float(m.dist(float(x)))


def singular_neighborhood_volume(m: MapDescriptor, rho: float) -> float:
    """Lebesgue measure of {x in domain : dist(x, S) < rho}."""
    if not rho < m.length / 2:
        raise ValueError("rho must be below half the domain length")
    lo, hi = m.domain
    intervals = sorted((max(lo, b - rho), min(hi, b + rho)) for b in m.singular_points)
    total, cur_lo, cur_hi = 0.0, None, None
    for a, b in intervals:
        if cur_hi is None or a > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = a, b
        else:
            cur_hi = max(cur_hi, b)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


@dataclass
class NonFlatnessReport:
    ratios: dict
    witnesses: dict
    passed: dict
    valid_pairs: int

    @property
    def all_pass(self) -> bool:
        return all(self.passed.values())


def _sample_near_singular(m, rng, size):
    pts = np.asarray(m.singular_points)
    lo, hi = m.domain
    base = pts[rng.integers(0, len(pts), size)]
    side = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    offs = 10.0 ** (-rng.uniform(0.5, 12.0, size)) * m.length
    x = base + side * offs
    bad = (x <= lo) | (x >= hi)
    x[bad] = base[bad] - side[bad] * offs[bad]
    return x


def check_nonflatness(m: MapDescriptor, sample_count: int, rng_seed) -> NonFlatnessReport:
    """Sampled maximal ratios for the non-flatness conditions.

    A ratio <= 1 means the declared (B, beta) held on every sample. This is a
    diagnostic, never a proof.
    """
    nf = m.nonflatness
    if nf is None:
        raise ValueError("map has no non-flatness parameters")
    rng = np.random.default_rng(rng_seed)
    n = int(sample_count)
    lo, hi = m.domain
    if m.singular_points:
        x = np.concatenate([m.sample_uniform(rng, n - n // 2),
                            _sample_near_singular(m, rng, n // 2)])
    else:
        x = m.sample_uniform(rng, n)
    d = m.dist(x)
    finite_d = np.where(np.isfinite(d), d, m.length)
    y = x + rng.uniform(-0.5, 0.5, x.shape) * finite_d
    ok = (y > lo) & (y < hi) & (d > SINGULAR_TOL) & (y != x)
    if m.circle:
        ok &= np.abs(y - x) < 0.25  # stay on one lift branch
    x, y, d = x[ok], y[ok], finite_d[ok]
    if len(x) < 100:
        raise InsufficientSamples(f"only {len(x)} valid pairs")
    B, beta = nf.B, nf.beta
    absdf = np.abs(m.df(x))
    ratios, wit = {}, {}
    if not m.singular_points:
        for key in ("S1", "S2", "S3", "S5"):
            ratios[key], wit[key] = 0.0, None
    else:
        upper = absdf * d ** beta / B
        lower = (d ** beta / B) / absdf
        s1 = np.maximum(upper, lower)
        dlog = np.abs(m.log_abs_df(x) - m.log_abs_df(y))
        s2 = dlog * d ** beta / (B * np.abs(x - y))
        interior = m.singular_set.points
        if interior:
            dp = m.dist(x, interior)
            with np.errstate(divide="ignore"):
                s5 = (dp ** (-beta) / B) / absdf
        else:
            s5 = np.zeros_like(x)
        for key, arr in (("S1", s1), ("S2", s2), ("S3", s2), ("S5", s5)):
            i = int(np.argmax(arr))
            ratios[key], wit[key] = float(arr[i]), float(x[i])
    passed = {k: v <= 1.0 for k, v in ratios.items()}
    return NonFlatnessReport(ratios, wit, passed, int(len(x)))


# -- orbit batches ----------------------------------------------------------


class OrbitBatch:
    """Lockstep orbits of a batch of Lebesgue-random initial points.

    For the dyadic families the state is a 53-bit integer numerator
    ``k`` with ``x = (k + 1/2) 2^-53``; each step shifts out the top bit and
    draws a fresh bottom bit. That is an exact sampler for the orbit of a
    uniformly distributed real number, which plain floating-point doubling
    is not (it collapses to 0 after 53 steps).

    ``bad`` flags samples whose orbit came within ``SINGULAR_TOL`` of a
    discontinuity; their later iterates are meaningless.
    """

    def __init__(self, m: MapDescriptor, rng, size=None, x0=None):
        self.m = m
        self.rng = rng
        if m.is_dyadic and x0 is None:
            self.k = rng.integers(0, 1 << DYADIC_BITS, size, dtype=np.uint64)
            self._x = None
        else:
            self.k = None
            self._x = np.array(m.sample_uniform(rng, size) if x0 is None else x0, dtype=float)
        n = len(self.k) if self.k is not None else len(self._x)
        self.bad = np.zeros(n, dtype=bool)
        self.time = 0

    @property
    def x(self):
        if self.k is not None:
            return (self.k.astype(float) + 0.5) * 2.0 ** -DYADIC_BITS
        return self._x

    def step(self):
        m = self.m
        if self.k is not None:
            bits = self.rng.integers(0, 2, len(self.k), dtype=np.uint64)
            shifted = ((self.k << np.uint64(1)) & np.uint64(_DYADIC_MASK)) | bits
            if m.family is Family.TENT_FULL:
                top = self.k >= np.uint64(_DYADIC_HALF)
                shifted = np.where(top, np.uint64(_DYADIC_MASK) - shifted, shifted)
            self.k = shifted
        else:
            x = self._x
            if m.discontinuities:
                hit = m.dist(x, m.discontinuities) <= SINGULAR_TOL
                if hit.any():
                    self.bad |= hit
                    x = np.where(hit, 0.5 * (m.domain[0] + m.domain[1]) + 0.123, x)
            self._x = m.f(x)
        self.time += 1
        return self.x


# -- monotone branches ------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    """One smoothness domain (lo, hi) with the map and its inverse there.

    The callables accept floats or mpmath numbers.
    """

    lo: float
    hi: float
    fwd: Callable
    inv: Callable
    increasing: bool


def branches(m: MapDescriptor) -> list:
    fam = m.family
    if fam is Family.DOUBLING:
        return [Branch(0.0, 0.5, lambda x: 2 * x, lambda y: y / 2, True),
                Branch(0.5, 1.0, lambda x: 2 * x - 1, lambda y: (y + 1) / 2, True)]
    if fam is Family.TENT_FULL:
        return [Branch(0.0, 0.5, lambda x: 2 * x, lambda y: y / 2, True),
                Branch(0.5, 1.0, lambda x: 2 - 2 * x, lambda y: 1 - y / 2, False)]
    if fam is Family.LORENZ_LIKE:
        a, b = m.param("alpha"), m.param("b_coef")

        def neg_inv(y):
            return -(max(1 - y, 0) / b) ** (1 / a)

        def pos_inv(y):
            return (max(y + 1, 0) / b) ** (1 / a)

        return [Branch(-1.0, 0.0, lambda x: 1 - b * (-x) ** a, neg_inv, True),
                Branch(0.0, 1.0, lambda x: b * x ** a - 1, pos_inv, True)]
    if fam is Family.PIECEWISE_LINEAR:
        br = m.param("breaks")
        out = []
        for lo, hi in zip(br, br[1:]):
            w = hi - lo
            out.append(Branch(lo, hi, lambda x, lo=lo, w=w: (x - lo) / w,
                              lambda y, lo=lo, w=w: lo + y * w, True))
        return out
    raise ValueError(f"{fam.value} has no finite monotone branch structure")


def with_singular_set(m: MapDescriptor, points, includes_endpoints=False) -> MapDescriptor:
    """Copy of ``m`` with a different (possibly artificial) singular set."""
    from dataclasses import replace
    return replace(m, singular_set=SingularSet(tuple(points), includes_endpoints))
