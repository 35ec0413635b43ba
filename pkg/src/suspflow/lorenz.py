"""Geometric Lorenz model and the classical Lorenz ODE.

The geometric model is a skew product on the square [-1, 1]^2:
R(u, v) = (f(u), g(u, v)) with f the Lorenz-like quotient map and g a
contraction along vertical lines. The ODE side only produces empirical
return data; everything that needs ground truth runs on the model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CalibrationFailed, Diverged, EmptyBin, NoReturn, SingularLine
from .maps import SINGULAR_TOL, MapDescriptor, lorenz_like
from .recurrence import delta_from_dist
from .semiflow import RoofFunction, log_distance_roof

DIVERGENCE_BOUND = 1e3
SIGMA, RHO, BETA = 10.0, 28.0, 8.0 / 3.0
SECTION_Z = RHO - 1.0
DOWN = -1.0
_Q = math.sqrt(BETA * (RHO - 1.0))
EQUILIBRIA = ((0.0, 0.0, 0.0), (_Q, _Q, RHO - 1.0), (-_Q, -_Q, RHO - 1.0))


# -- geometric model -------------------------------------------------------------


@dataclass(frozen=True)
class SectionPoint:
    u: float
    v: float

    def __post_init__(self):
        if not (abs(self.u) <= 1 and abs(self.v) <= 1):
            raise ValueError("section point outside the square")


@dataclass(frozen=True)
class GeometricModelParams:
    alpha: float = 0.6
    b_coef: float = 1.9
    lam_y: float = 0.3
    C0: float = 0.5
    tau0: float = 1.0

    def __post_init__(self):
        if not 0 <= self.lam_y < 1:
            raise ValueError("lam_y must lie in [0, 1)")
        if not self.alpha * self.b_coef > 1:
            raise ValueError("alpha * b_coef must exceed 1")
        if not (self.C0 > 0 and self.tau0 > 0):
            raise ValueError("roof constants must be positive")

    def quotient(self) -> MapDescriptor:
        return lorenz_like(self.alpha, self.b_coef)


def _check_line(u):
    u = np.asarray(u, dtype=float)
    if np.any(u == 0):
        raise SingularLine("u = 0 lies on the singular line")
    return u


def poincare_arrays(u, v, params: GeometricModelParams):
    """R on arrays; no singular-line check."""
    a = np.abs(u) ** params.alpha
    sgn = np.sign(u)
    fu = sgn * (params.b_coef * a - 1.0)
    g = params.lam_y * v * a + 0.5 * sgn * (1.0 - a)
    return fu, g


def geometric_poincare(p: SectionPoint, params: GeometricModelParams) -> SectionPoint:
    _check_line(p.u)
    fu, g = poincare_arrays(p.u, p.v, params)
    return SectionPoint(float(fu), float(g))


def project(p: SectionPoint) -> float:
    return p.u


def geometric_roof(p: SectionPoint, params: GeometricModelParams) -> float:
    _check_line(p.u)
    return params.tau0 - params.C0 * math.log(abs(p.u))


def model_roof(params: GeometricModelParams) -> RoofFunction:
    """The section roof as a roof over the quotient map (it depends on u only)."""
    return log_distance_roof(params.quotient(), params.tau0, params.C0, points=(0.0,))


def roof_mean(params: GeometricModelParams, cutoff: float = 0.0, nodes: int = 64) -> float:
    """Average of tau over {cutoff <= |u| <= 1} x [-1, 1], by Gauss-Legendre in log u.

    The closed form for cutoff -> 0 is tau0 + C0.
    """
    if cutoff < 0 or cutoff >= 1:
        raise ValueError("cutoff must lie in [0, 1)")
    lo = math.log(cutoff) if cutoff > 0 else -60.0
    w, t = np.polynomial.legendre.leggauss(nodes)[::-1]
    # integrate over w = log u on [lo, 0]; du = e^w dw
    ws = 0.5 * lo * (1 - t)
    vals = (params.tau0 - params.C0 * ws) * np.exp(ws)
    integral = float(np.sum(vals * w) * (-lo) / 2)
    return integral  # equals the mean over the square by symmetry in u and v


@dataclass
class ContractionReport:
    n: int
    distances: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    C: float
    passed: bool
    hit_index: Optional[int] = None


def contraction_check(p1: SectionPoint, p2: SectionPoint, params: GeometricModelParams,
                      n: int) -> ContractionReport:
    """dist(R^k p1, R^k p2) / lam_y^k for k <= n, with C the initial distance."""
    if p1.u != p2.u:
        raise ValueError("points must share a vertical line")
    u, v1, v2 = p1.u, p1.v, p2.v
    d = [abs(v1 - v2)]
    for k in range(n):
        if u == 0:
            raise SingularLine(f"orbit hits the singular line at step {k}")
        (u2, a), (_, b) = poincare_arrays(u, v1, params), poincare_arrays(u, v2, params)
        u, v1, v2 = float(u2), float(a), float(b)
        d.append(abs(v1 - v2))
    d = np.array(d)
    lam = params.lam_y
    if lam == 0:
        ratios = np.where(d[1:] == 0, 0.0, np.inf)
        ratios = np.concatenate([[d[0]], ratios])
    else:
        ratios = d / lam ** np.arange(n + 1)
    C = float(d[0])
    top = float(ratios.max())
    return ContractionReport(n, d, ratios, top, C, top <= C * (1 + 1e-12))


def section_orbits(params: GeometricModelParams, length: int, ensemble: int, seed: int,
                   burn_in: int = 200):
    """Points (u, v) along R-orbits from Lebesgue-random starts, burn-in dropped."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, ensemble)
    v = rng.uniform(-1, 1, ensemble)
    us = np.empty((length, ensemble))
    vs = np.empty((length, ensemble))
    for j in range(burn_in + length):
        u = np.where(np.abs(u) <= SINGULAR_TOL, rng.uniform(-1, 1, ensemble), u)
        if j >= burn_in:
            us[j - burn_in] = u
            vs[j - burn_in] = v
        u, v = poincare_arrays(u, v, params)
    return us.ravel(), vs.ravel()


@dataclass
class FiberAverage:
    value: float
    count: int
    se: float

    def __float__(self):
        return self.value


def fiber_average(phi: Callable, u: float, points, bandwidth: float = 1e-3) -> FiberAverage:
    """Mean of phi(u, v_i) over stored points with |u_i - u| < bandwidth."""
    us, vs = points
    sel = np.abs(np.asarray(us) - u) < bandwidth
    k = int(sel.sum())
    if k == 0:
        raise EmptyBin(f"no stored points within {bandwidth:g} of u = {u:g}")
    vals = np.asarray(phi(np.full(k, float(u)), np.asarray(vs)[sel]), dtype=float)
    se = float(vals.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
    return FiberAverage(float(vals.mean()), k, se)


# -- reduction to the quotient ------------------------------------------------------


@dataclass(frozen=True)
class ModelObservable:
    """psi(u, v, s) on the model suspension, vectorized."""

    handle: Callable
    sup_norm: float
    s_independent: bool = False

    def __call__(self, u, v, s):
        return self.handle(u, v, s)


def section_integral(psi: ModelObservable, params: GeometricModelParams, quad_nodes: int = 64):
    """phi(u, v) = integral of psi over one roof interval above (u, v)."""

    def phi(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        tau = params.tau0 - params.C0 * np.log(np.abs(u))
        if psi.s_independent:
            return np.asarray(psi(u, v, np.zeros_like(u)), dtype=float) * tau
        t = np.linspace(0.0, 1.0, quad_nodes + 1)
        w = np.ones(quad_nodes + 1)
        w[1:-1:2], w[2:-1:2] = 4, 2
        s = tau[..., None] * t
        vals = np.asarray(psi(u[..., None], v[..., None], s), dtype=float)
        return vals @ w * tau / (3 * quad_nodes)

    return phi


@dataclass
class _FiberTable:
    """Up to ``per_bin`` empirical v-values for each of ``bins`` u-bins."""

    edges: np.ndarray
    vs: np.ndarray          # (bins, per_bin)
    widened: int

    def lookup(self, u):
        i = np.clip(np.searchsorted(self.edges, u, side="right") - 1, 0, len(self.vs) - 1)
        return self.vs[i]


def _fiber_table(points, bins: int, per_bin: int) -> _FiberTable:
    us, vs = points
    edges = np.linspace(-1.0, 1.0, bins + 1)
    idx = np.clip(np.searchsorted(edges, us, side="right") - 1, 0, bins - 1)
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.searchsorted(sorted_idx, np.arange(bins))
    ends = np.searchsorted(sorted_idx, np.arange(bins), side="right")
    table = np.full((bins, per_bin), np.nan)
    for b in range(bins):
        take = order[starts[b]:min(ends[b], starts[b] + per_bin)]
        if len(take):
            table[b, :] = np.resize(vs[take], per_bin)
    filled = ~np.isnan(table[:, 0])
    widened = int((~filled).sum())
    if widened:
        good = np.flatnonzero(filled)
        for b in np.flatnonzero(~filled):
            table[b] = table[good[np.argmin(np.abs(good - b))]]
    return _FiberTable(edges, table, widened)


@dataclass
class ReductionReport:
    gamma: float
    delta: float
    j0: int
    shift_a: float
    samples: int
    lhs: int
    rhs_recurrence: int
    rhs_averaged: int
    violations: int
    calibration_violations: int
    lhs_empty: bool
    grid: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _lemma_sets(phi_c, l_fn, params, u, v, n, k, delta, epsilon):
    """Per-sample sums along R^k: centered phi, Delta_delta and l on the quotient."""
    N = len(u)
    s_phi = np.zeros(N)
    s_delta = np.zeros(N)
    s_l = np.zeros(N)
    bad = np.zeros(N, dtype=bool)
    for j in range(n):
        bad |= np.abs(u) <= SINGULAR_TOL
        uu = np.where(bad, 0.5, u)
        s_phi += phi_c(uu, v)
        s_delta += delta_from_dist(np.abs(uu), delta)
        s_l += l_fn(uu)
        for _ in range(k):
            u, v = poincare_arrays(np.where(bad, 0.5, u), v, params)
    return s_phi / n, s_delta / n, s_l / n, bad


def lemma_reduction_check(psi: ModelObservable, params: GeometricModelParams, epsilon: float,
                          n: int, k: int, budget: int, seed: int, grid=None,
                          constants: Optional[tuple] = None, orbit_length: int = 2000,
                          ensemble: int = 64, bins: int = 2000, per_bin: int = 8,
                          max_rate: float = 1e-3) -> ReductionReport:
    """Sampled check of {|S_n^{R^k} phi / n| > 3 eps} inside
    P^{-1}({S_n^{f^k} Delta_delta / n > eps / gamma} or {|S_n^{f^k} l / n| > eps}).

    phi is the roof integral of psi, centered by its Birkhoff mean. l is the
    fiber average of phi o R^{j0} over empirically visited v-values, shifted
    so its mean under the empirical measure matches that of phi (zero).
    Constants (gamma, delta, j0) are calibrated on one stream, choosing the
    smallest gamma that keeps violations at or below ``max_rate``, and then
    checked on a second, independent stream.
    """
    if epsilon <= 0 or n < 1 or k < 1:
        raise ValueError("epsilon, n and k must be positive")
    phi = section_integral(psi, params)
    pts = section_orbits(params, orbit_length, ensemble, seed)
    mu_phi = float(np.mean(phi(*pts)))

    def phi_c(u, v):
        return phi(u, v) - mu_phi

    table = _fiber_table(pts, bins, per_bin)

    def make_l(j0):
        def raw(u):
            vv = table.lookup(u)
            uu = np.repeat(np.asarray(u, dtype=float)[:, None], vv.shape[1], axis=1)
            for _ in range(j0):
                uu, vv = poincare_arrays(uu, vv, params)
            return phi_c(uu, vv).mean(axis=1)

        a = -float(np.mean(raw(pts[0])))
        return (lambda u: raw(u) + a), a

    if grid is None:
        grid = [(g, d, j) for g in (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
                for d in (0.1, 0.03, 0.01) for j in (1, 2, 4)]
    rng_cal = np.random.default_rng([seed, 1])
    rng_chk = np.random.default_rng([seed, 2])
    uc, vc = rng_cal.uniform(-1, 1, (2, budget))
    uk, vk = rng_chk.uniform(-1, 1, (2, budget))
    l_cache = {}
    sums_cache = {}

    def tallies(g, d, j, u, v, tag):
        if j not in l_cache:
            l_cache[j] = make_l(j)
        key = (d, j, tag)
        if key not in sums_cache:
            sums_cache[key] = _lemma_sets(phi_c, l_cache[j][0], params, u, v, n, k, d, epsilon)
        a_phi, a_delta, a_l, bad = sums_cache[key]
        lhs = (np.abs(a_phi) > 3 * epsilon) & ~bad
        r1 = a_delta > epsilon / g
        r2 = np.abs(a_l) > epsilon
        return lhs, r1, r2, int((lhs & ~(r1 | r2)).sum())

    tried = []
    chosen = constants
    cal_viol = None
    if chosen is None:
        for g, d, j in sorted(grid):
            viol = tallies(g, d, j, uc, vc, "cal")[3]
            tried.append((g, d, j, viol))
            if viol <= max_rate * budget:
                chosen, cal_viol = (g, d, j), viol
                break
        if chosen is None:
            raise CalibrationFailed("no (gamma, delta, j0) in the grid meets the violation rate")
    g, d, j = chosen
    lhs, r1, r2, viol = tallies(g, d, j, uk, vk, "chk")
    return ReductionReport(g, d, j, l_cache[j][1], budget, int(lhs.sum()), int((lhs & r1).sum()),
                       int((lhs & r2).sum()), viol, -1 if cal_viol is None else cal_viol,
                       not lhs.any(), tried)


# -- Lorenz ODE ------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowState:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError("state must be finite")

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.z)


def lorenz_field(x, y, z):
    return SIGMA * (y - x), RHO * x - y - x * z, x * y - BETA * z


def _rk4(x, y, z, h):
    a1, b1, c1 = lorenz_field(x, y, z)
    a2, b2, c2 = lorenz_field(x + 0.5 * h * a1, y + 0.5 * h * b1, z + 0.5 * h * c1)
    a3, b3, c3 = lorenz_field(x + 0.5 * h * a2, y + 0.5 * h * b2, z + 0.5 * h * c2)
    a4, b4, c4 = lorenz_field(x + h * a3, y + h * b3, z + h * c3)
    h6 = h / 6.0
    return (x + h6 * (a1 + 2 * a2 + 2 * a3 + a4),
            y + h6 * (b1 + 2 * b2 + 2 * b3 + b4),
            z + h6 * (c1 + 2 * c2 + 2 * c3 + c4))


def _guard(x, y, z):
    if max(abs(x), abs(y), abs(z)) > DIVERGENCE_BOUND:
        raise Diverged(f"state ({x:g}, {y:g}, {z:g}) left the trapping bound")


def _step_plan(t: float, step: float):
    if not step > 0 or step > 1e-2:
        raise ValueError("step must lie in (0, 1e-2]")
    if t < 0:
        raise ValueError("t must be nonnegative")
    full = int(math.floor(t / step + 1e-9))
    rest = t - full * step
    return full, (rest if rest > 1e-15 else 0.0)


def ode_integrate(state: FlowState, t: float, step: float = 1e-3) -> FlowState:
    """Classical RK4 over t; the last, partial step is scaled to land on t."""
    full, rest = _step_plan(t, step)
    x, y, z = state.as_tuple()
    for _ in range(full):
        x, y, z = _rk4(x, y, z, step)
        _guard(x, y, z)
    if rest:
        x, y, z = _rk4(x, y, z, rest)
        _guard(x, y, z)
    return FlowState(x, y, z)


def ode_trajectory(state: FlowState, t: float, step: float = 1e-3, every: int = 1):
    """Rows (t, x, y, z) sampled every ``every`` steps."""
    full, rest = _step_plan(t, step)
    x, y, z = state.as_tuple()
    rows = [(0.0, x, y, z)]
    for i in range(1, full + 1):
        x, y, z = _rk4(x, y, z, step)
        _guard(x, y, z)
        if i % every == 0:
            rows.append((i * step, x, y, z))
    if rest:
        x, y, z = _rk4(x, y, z, rest)
        rows.append((t, x, y, z))
    return rows


def richardson_ratio(state: FlowState, t: float = 1.0, step: float = 1e-3) -> float:
    """|y(h) - y(h/2)| / |y(h/2) - y(h/4)|; about 16 for a fourth-order scheme."""
    a = np.array(ode_integrate(state, t, step).as_tuple())
    b = np.array(ode_integrate(state, t, step / 2).as_tuple())
    c = np.array(ode_integrate(state, t, step / 4).as_tuple())
    return float(np.linalg.norm(a - b) / np.linalg.norm(b - c))


def ode_section_return(state: FlowState, step: float = 1e-3, t_max: float = 50.0,
                       z0: float = SECTION_Z, time_tol: float = 1e-10,
                       orient: Optional[float] = None) -> tuple[FlowState, float]:
    """Next crossing of z = z0 in direction ``orient`` (+1 upward, -1 downward), and its time.

    ``orient`` defaults to the sign of dz/dt at the start; crossings the
    other way are skipped. The crossing time is refined by bisecting the
    length of one partial RK4 step.
    """
    x, y, z = state.as_tuple()
    if orient is None:
        orient = 1.0 if lorenz_field(x, y, z)[2] > 0 else -1.0
    t = 0.0
    prev = z - z0
    n_steps = int(math.ceil(t_max / step))
    for _ in range(n_steps):
        nx, ny, nz = _rk4(x, y, z, step)
        _guard(nx, ny, nz)
        cur = nz - z0
        if t > 0 and orient * prev < 0 <= orient * cur:
            lo, hi = 0.0, step
            while hi - lo > time_tol:
                mid = 0.5 * (lo + hi)
                if orient * (_rk4(x, y, z, mid)[2] - z0) < 0:
                    lo = mid
                else:
                    hi = mid
            cx, cy, cz = _rk4(x, y, z, hi)
            return FlowState(cx, cy, cz), t + hi
        x, y, z, prev = nx, ny, nz, cur
        t += step
    raise NoReturn(f"no return to z = {z0} within t = {t_max}")


def on_section(x: float, y: float) -> FlowState:
    return FlowState(float(x), float(y), SECTION_Z)


def section_returns(state: FlowState, count: int, step: float = 1e-3, t_max: float = 50.0,
                    orient: float = DOWN):
    """Successive crossings in one direction: rows (u, v, time since the previous one)."""
    rows = []
    s = state
    for _ in range(count):
        s, tr = ode_section_return(s, step, t_max, orient=orient)
        rows.append((s.x, s.y, tr))
    return rows


def _lobe(x: float, y: float, step: float, t_max: float = 50.0) -> float:
    """Sign of x at the next local maximum of z (the wing the orbit winds around next).

    Unlike the sign at the next section crossing, this label can only flip
    across the stable set of the origin.
    """
    if not x * y < BETA * SECTION_Z:
        raise ValueError("point is not a downward crossing of the section")
    px, py, pz = x, y, SECTION_Z
    rising = False
    for _ in range(int(math.ceil(t_max / step))):
        px, py, pz = _rk4(px, py, pz, step)
        _guard(px, py, pz)
        dz = px * py - BETA * pz
        if dz > 0:
            rising = True
        elif rising:
            return math.copysign(1.0, px)
    raise NoReturn(f"no maximum of z within t = {t_max}")


@dataclass
class StableTraceReport:
    trace_point: tuple
    direction: tuple
    distances: np.ndarray
    return_times: np.ndarray
    correlation: float
    slope: float


def stable_trace_scan(p: tuple, q: tuple, step: float = 1e-3,
                      distances=None, tol: float = 1e-13) -> StableTraceReport:
    """Locate where the segment pq on z = 27 crosses the stable set of the
    origin (the next-wing label flips there), then time downward returns
    from points at distance d from that crossing.

    Return time should grow like -log d / (unstable rate at the origin).
    """
    lp, lq = _lobe(*p, step), _lobe(*q, step)
    if lp == lq:
        raise ValueError("segment endpoints go to the same lobe")
    a, b = np.array(p, dtype=float), np.array(q, dtype=float)
    la = lp
    lo, hi = 0.0, 1.0
    length = float(np.linalg.norm(b - a))
    while (hi - lo) * length > tol:
        mid = 0.5 * (lo + hi)
        pt = a + mid * (b - a)
        if _lobe(pt[0], pt[1], step) == la:
            lo = mid
        else:
            hi = mid
    star = a + lo * (b - a)
    e = (a - b) / length  # stay on the side that keeps label la
    if distances is None:
        distances = np.logspace(-2, -10, 17)
    times = []
    for d in distances:
        pt = star + d * e
        _, tr = ode_section_return(on_section(*pt), step, orient=DOWN)
        times.append(tr)
    times = np.array(times)
    nl = -np.log(distances)
    corr = float(np.corrcoef(nl, times)[0, 1])
    slope = float(np.polyfit(nl, times, 1)[0])
    return StableTraceReport(tuple(star), tuple(e), np.asarray(distances), times, corr, slope)


def find_lobe_pair(state: FlowState, step: float = 1e-3, max_returns: int = 50):
    """Two consecutive downward returns of an attractor orbit whose next lobes differ."""
    s = state
    pts = []
    for _ in range(max_returns):
        s, _ = ode_section_return(s, step, orient=DOWN)
        pts.append((s.x, s.y))
    labels = [_lobe(x, y, step) for x, y in pts]
    for p, q, lp, lq in zip(pts, pts[1:], labels, labels[1:]):
        if lp != lq:
            return p, q
    raise NoReturn("no lobe switch found along the orbit")
