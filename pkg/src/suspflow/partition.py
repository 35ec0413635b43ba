"""Dynamically refined partitions near the singular set.

The level-0 partition cuts each gap side of the singular set into
geometric pieces M(k, p) of relative size e^{-p}. Refinement follows images
of atoms forward and cuts an atom whenever its image spreads over more than
three level-0 atoms, recording the cut time and the depth (k, p) it landed
at. Endpoints are held in multiprecision so that atoms down to e^{-120}
next to a singular point stay distinct.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

from fractions import Fraction

import gmpy2
from gmpy2 import mpfr
import numpy as np

from .errors import DegenerateGap, LedgerMissing, RateNotNegative, SingularImage
from .maps import Branch, Family, MapDescriptor, SingularSet, branches
from .streams import DEFAULT_CHUNK, run_chunks

PREC = 256
CHECK_PREC = 320
P_MAX = 120
GAP_FLOOR = 1e-8


def _lhs_rho(rho: int) -> float:
    return (1 + 2 / rho) * (1 + rho / 2) ** (2 / rho)


def choose_rho0(beta: float) -> int:
    """Smallest integer rho >= 2 with the two threshold inequalities."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    rho = 2
    while not (math.exp(-beta * rho) < 1 and _lhs_rho(rho) < math.exp(beta)):
        rho += 1
    return rho


# -- level 0 -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class P0Atom:
    lo: object
    hi: object
    k: int
    p: int
    core: bool = False

    @property
    def length(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class InitialPartition:
    atoms: tuple
    sides: tuple  # d_k indexed by k
    rho0: int
    p_max: int
    domain: tuple
    anchors: tuple

    def __post_init__(self):
        object.__setattr__(self, "_los", [a.lo for a in self.atoms])
        object.__setattr__(self, "_index", {(a.k, a.p): i for i, a in enumerate(self.atoms)})

    def d(self, k):
        return self.sides[k]

    def index(self, address) -> int:
        return self._index[tuple(address)]

    def locate(self, y) -> int:
        return max(0, bisect.bisect_right(self._los, y) - 1)

    def meeting(self, lo, hi) -> range:
        """Indices of atoms whose interior meets the open interval (lo, hi)."""
        i = self.locate(lo)
        if self.atoms[i].hi <= lo:
            i += 1
        j = self.locate(hi)
        if self.atoms[j].lo >= hi:
            j -= 1
        return range(i, j + 1)


def initial_partition(singular_set: SingularSet, domain, rho0: int,
                      p_max: int = P_MAX, floor: float = GAP_FLOOR) -> InitialPartition:
    """Level-0 partition; domain endpoints always bound a gap."""
    pts = list(singular_set.points) if isinstance(singular_set, SingularSet) else list(singular_set)
    if len(set(pts)) != len(pts):
        raise DegenerateGap("two singular points coincide")
    if not pts and not getattr(singular_set, "includes_endpoints", False):
        raise ValueError("singular set must be nonempty")
    lo, hi = float(domain[0]), float(domain[1])
    anchors = [lo]
    for q in sorted(pts):
        if q <= lo or q >= hi:
            continue
        if q - anchors[-1] < 2 * floor:
            continue  # gap below the truncation floor
        anchors.append(q)
    if hi - anchors[-1] < 2 * floor and len(anchors) > 1:
        anchors.pop()
    anchors.append(hi)
    atoms, sides = [], []
    with gmpy2.context(precision=PREC):
        A = [mpfr(a) for a in anchors]
        for i in range(len(A) - 1):
            b0, b1 = A[i], A[i + 1]
            d = (b1 - b0) / 2
            c = b0 + d
            kr, kl = len(sides), len(sides) + 1
            sides += [d, d]
            # right side of b0, ascending
            atoms.append(P0Atom(b0, b0 + d * gmpy2.exp(-p_max), kr, p_max + 1, True))
            for p in range(p_max, rho0 - 1, -1):
                atoms.append(P0Atom(b0 + d * gmpy2.exp(-p), b0 + d * gmpy2.exp(-(p - 1)), kr, p))
            atoms.append(P0Atom(b0 + d * gmpy2.exp(-(rho0 - 1)), c, kr, rho0 - 1))
            # left side of b1, ascending
            atoms.append(P0Atom(c, b1 - d * gmpy2.exp(-(rho0 - 1)), kl, rho0 - 1))
            for p in range(rho0, p_max + 1):
                atoms.append(P0Atom(b1 - d * gmpy2.exp(-(p - 1)), b1 - d * gmpy2.exp(-p), kl, p))
            atoms.append(P0Atom(b1 - d * gmpy2.exp(-p_max), b1, kl, p_max + 1, True))
    return InitialPartition(tuple(atoms), tuple(sides), rho0, p_max, (lo, hi), tuple(anchors))


def enlarged_atom(P0: InitialPartition, address) -> tuple:
    """The atom joined with its (one or two) neighbours."""
    i = P0.index(address)
    lo = P0.atoms[max(i - 1, 0)].lo
    hi = P0.atoms[min(i + 1, len(P0.atoms) - 1)].hi
    return lo, hi


def enlarged_ratio(P0: InitialPartition, address) -> float:
    lo, hi = enlarged_atom(P0, address)
    a = P0.atoms[P0.index(address)]
    return float((hi - lo) / a.length)


# -- refinement ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Atom:
    lo: object
    hi: object
    image_lo: object
    image_hi: object
    itinerary: tuple
    R: tuple
    D: tuple
    ancestor: tuple
    core: bool = False

    @property
    def length(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class PartitionLevel:
    n: int
    atoms: tuple
    p0: InitialPartition
    beta: float
    sigma0: float | None

    @cached_property
    def float_bounds(self) -> np.ndarray:
        return np.array([float(a.lo) for a in self.atoms])

    def locate(self, x) -> np.ndarray:
        bounds = self.float_bounds
        return np.clip(np.searchsorted(bounds, x, side="right") - 1, 0, len(bounds) - 1)

    def depth_sums(self, delta: float) -> np.ndarray:
        return np.array([depth_sum(a.D, delta, self.p0) for a in self.atoms])


def _ratio(alpha: float) -> Fraction | None:
    fr = Fraction(alpha).limit_denominator(64)
    return fr if abs(float(fr) - alpha) < 1e-15 else None


def mp_branches(m: MapDescriptor) -> list:
    """Branches evaluated in mpfr; rational Lorenz exponents use exact roots."""
    if m.family is not Family.LORENZ_LIKE:
        return branches(m)
    alpha = m.param("alpha")
    b = mpfr(float(m.param("b_coef")))  # exact double, independent of context precision
    fr = _ratio(alpha)
    if fr is not None:
        num, den = fr.numerator, fr.denominator

        def pw(x):  # x ** alpha
            return gmpy2.root(x ** num, den)

        if num == 3:
            def ipw(y):  # y ** (1 / alpha)
                return gmpy2.cbrt(y ** den)
        else:
            def ipw(y):
                return gmpy2.root(y ** den, num)
    else:
        a = mpfr(alpha)

        def pw(x):
            return x ** a

        def ipw(y):
            return y ** (1 / a)
    zero = mpfr(0)
    return [Branch(-1.0, 0.0, lambda x: 1 - b * pw(-x), lambda y: -ipw(max((1 - y) / b, zero)), True),
            Branch(0.0, 1.0, lambda x: b * pw(x) - 1, lambda y: ipw(max((y + 1) / b, zero)), True)]


def _cuts(m: MapDescriptor) -> list:
    brs = branches(m)
    cuts = {b.lo for b in brs} | {b.hi for b in brs} | set(m.singular_set.points)
    return sorted(cuts)


@lru_cache(maxsize=64)
def level_zero(m: MapDescriptor, rho0: int | None = None, p_max: int = P_MAX) -> PartitionLevel:
    beta = m.nonflatness.beta
    rho0 = rho0 or choose_rho0(beta)
    P0 = initial_partition(m.singular_set, m.domain, rho0, p_max)
    stops = set(P0.anchors) | {float(P0.anchors[i] + P0.anchors[i + 1]) / 2
                               for i in range(len(P0.anchors) - 1)}
    for q in _cuts(m):
        if not any(abs(q - s) < 1e-15 for s in stops):
            raise ValueError(f"branch boundary {q} is not a level-0 atom boundary")
    atoms = tuple(Atom(a.lo, a.hi, a.lo, a.hi, (), (), (), (a.k, a.p), a.core) for a in P0.atoms)
    return PartitionLevel(0, atoms, P0, beta, m.expansion_floor)


def _branch_index(brs, y) -> int:
    for i, b in enumerate(brs):
        if b.lo <= y < b.hi:
            return i
    return len(brs) - 1


def _preimage(brs, y, itinerary):
    for bi in reversed(itinerary):
        y = brs[bi].inv(y)
    return y


def _plan(w: Atom, P0: InitialPartition, brs, cuts, cut_set, n: int):
    """Image decomposition of one atom at the next level.

    Returns (jlo, jhi, itinerary, pieces, increasing) where pieces is None if
    the atom survives unsplit; otherwise each piece is [y_lo, y_hi, level-0
    index, partial-and-unjoined].
    """
    bi = _branch_index(brs, (w.image_lo + w.image_hi) / 2)
    br = brs[bi]
    if w.image_lo < br.lo or w.image_hi > br.hi:
        raise SingularImage(f"level-{n} image crosses a branch boundary")
    ya, yb = br.fwd(w.image_lo), br.fwd(w.image_hi)
    jlo, jhi = (ya, yb) if br.increasing else (yb, ya)
    it = w.itinerary + (bi,)
    met = P0.meeting(jlo, jhi)
    straddle = any(jlo < q < jhi for q in cuts)
    if len(met) <= 3 and not straddle:
        return jlo, jhi, it, None, None
    pieces = [[max(P0.atoms[i].lo, jlo), min(P0.atoms[i].hi, jhi), i, False] for i in met]
    first, last = pieces[0], pieces[-1]
    if first[0] > P0.atoms[first[2]].lo:
        if len(pieces) > 1 and first[1] not in cut_set:
            pieces[1][0] = first[0]
            pieces.pop(0)
        else:
            first[3] = True
    if last[1] < P0.atoms[last[2]].hi:
        if len(pieces) > 1 and last[0] not in cut_set:
            pieces[-2][1] = last[1]
            pieces.pop()
        else:
            last[3] = True
    increasing = all(brs[b].increasing for b in it)
    return jlo, jhi, it, pieces, increasing


def _child(w: Atom, P0: InitialPartition, brs, it, pieces, increasing, i: int, n1: int) -> Atom:
    pc = pieces[i]
    ends = (w.lo, w.hi) if increasing else (w.hi, w.lo)
    x0 = ends[0] if i == 0 else _preimage(brs, pc[0], it)
    x1 = ends[1] if i == len(pieces) - 1 else _preimage(brs, pc[1], it)
    if x1 < x0:
        x0, x1 = x1, x0
    a = P0.atoms[pc[2]]
    core = w.core or a.core or pc[3]
    return Atom(x0, x1, pc[0], pc[1], it, w.R + (n1,), w.D + ((a.k, a.p),), w.ancestor, core)


def _split_context(m: MapDescriptor):
    cuts = [mpfr(q) for q in _cuts(m)]
    return mp_branches(m), cuts, set(cuts)


def refine(level: PartitionLevel, m: MapDescriptor) -> PartitionLevel:
    P0 = level.p0
    n1 = level.n + 1
    out = []
    with gmpy2.context(precision=PREC):
        brs, cuts, cut_set = _split_context(m)
        for w in level.atoms:
            if w.core:
                out.append(w)  # frozen: below the representable depth
                continue
            jlo, jhi, it, pieces, inc = _plan(w, P0, brs, cuts, cut_set, level.n)
            if pieces is None:
                out.append(Atom(w.lo, w.hi, jlo, jhi, it, w.R, w.D, w.ancestor, w.core))
                continue
            # shared boundaries: one preimage per interior cut point
            ys = [pieces[0][0]] + [pc[1] for pc in pieces]
            xs = [None] * len(ys)
            xs[0], xs[-1] = (w.lo, w.hi) if inc else (w.hi, w.lo)
            for i in range(1, len(ys) - 1):
                xs[i] = _preimage(brs, ys[i], it)
            for i, pc in enumerate(pieces):
                a = P0.atoms[pc[2]]
                x0, x1 = xs[i], xs[i + 1]
                if x1 < x0:
                    x0, x1 = x1, x0
                core = w.core or a.core or pc[3]
                out.append(Atom(x0, x1, pc[0], pc[1], it, w.R + (n1,), w.D + ((a.k, a.p),),
                                w.ancestor, core))
    out.sort(key=lambda a: a.lo)
    return PartitionLevel(n1, tuple(out), P0, level.beta, level.sigma0)


def point_atom(m: MapDescriptor, x, n: int, rho0: int | None = None, p_max: int = P_MAX) -> Atom:
    """The level-n atom containing x, refined along x's own chain only.

    Agrees with ``build_levels(m, n)[n].atoms[...]`` but costs O(n^2) branch
    evaluations instead of the full level.
    """
    lev = level_zero(m, rho0, p_max)
    P0 = lev.p0
    with gmpy2.context(precision=PREC):
        xm = mpfr(x)
        w = lev.atoms[int(lev.locate(float(x)))]
        if not w.lo <= xm <= w.hi:
            w = next(a for a in lev.atoms if a.lo <= xm <= a.hi)
        brs, cuts, cut_set = _split_context(m)
        y = xm
        for k in range(n):
            bi = _branch_index(brs, y)
            y = brs[bi].fwd(y)  # f^{k+1}(x)
            if w.core:
                continue
            jlo, jhi, it, pieces, inc = _plan(w, P0, brs, cuts, cut_set, k)
            if pieces is None:
                w = Atom(w.lo, w.hi, jlo, jhi, it, w.R, w.D, w.ancestor, w.core)
                continue
            i = next((i for i, pc in enumerate(pieces) if pc[0] <= y <= pc[1]), None)
            if i is None:
                raise SingularImage(f"orbit image left its atom image at level {k + 1}")
            w = _child(w, P0, brs, it, pieces, inc, i, k + 1)
    return w


@lru_cache(maxsize=16)
def build_levels(m: MapDescriptor, n: int, rho0: int | None = None, p_max: int = P_MAX) -> tuple:
    """Levels 0..n, cached per (map, n, rho0, p_max)."""
    levels = [level_zero(m, rho0, p_max)]
    for _ in range(n):
        levels.append(refine(levels[-1], m))
    return tuple(levels)


# -- ledgers and bounds ---------------------------------------------------------


def depth_of(P0: InitialPartition, k, p) -> float:
    """-log(d_k e^{-p})."""
    return p - math.log(float(P0.d(k)))


def depth_sum(ledger, delta: float, P0: InitialPartition | None = None, d=None) -> float:
    """Sum of -log(d_k e^{-p}) over the ledger entries with d_k e^{-p} < delta.

    ``d`` may map k to d_k directly when no level-0 partition is at hand.
    """
    total = 0.0
    for k, p in ledger:
        dk = float(P0.d(k)) if P0 is not None else float(d[k])
        depth = p - math.log(dk)
        if depth > -math.log(delta):
            total += depth
    return total


def _forward_image(brs, lo, hi, itinerary):
    imgs = []
    a, b = lo, hi
    for bi in itinerary:
        br = brs[bi]
        imgs.append((a, b))
        ya, yb = br.fwd(a), br.fwd(b)
        a, b = (ya, yb) if br.increasing else (yb, ya)
    return a, b, imgs


@dataclass
class ContainmentReport:
    checked: int
    violations: list
    exempt: int
    crossing: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and not self.crossing


def verify_containment(level: PartitionLevel, m: MapDescriptor, rel_tol: float = 1e-12,
                       crossings: bool = False) -> ContainmentReport:
    """Recompute f^r(zeta) for atoms split at time r = level.n and check
    eta <= f^r(zeta) <= eta+.

    With ``crossings`` every atom's forward images f^j(omega), j < n, are
    also checked to avoid the interior of a branch boundary.
    """
    brs = mp_branches(m)
    cuts = _cuts(m)
    P0 = level.p0
    viol, crossing, checked, exempt = [], [], 0, 0
    with gmpy2.context(precision=CHECK_PREC):
        for idx, w in enumerate(level.atoms):
            fresh = bool(w.R) and w.R[-1] == level.n
            if not (fresh or crossings):
                continue
            ilo, ihi, imgs = _forward_image(brs, mpfr(w.lo), mpfr(w.hi), w.itinerary)
            if crossings:
                for j, (a, b) in enumerate(imgs):
                    if any(a < q < b for q in cuts):
                        crossing.append((idx, j))
            if not fresh:
                continue
            if w.core:
                exempt += 1
                continue
            checked += 1
            eta = P0.atoms[P0.index(w.D[-1])]
            plo, phi = enlarged_atom(P0, w.D[-1])
            tol = rel_tol * eta.length
            ok = (ilo <= eta.lo + tol and ihi >= eta.hi - tol
                  and ilo >= plo - tol and ihi <= phi + tol)
            if not ok:
                viol.append(idx)
    return ContainmentReport(checked, viol, exempt, crossing)


def atom_log_distortion(m: MapDescriptor, atom: Atom, n: int) -> float:
    """Exact sup over x, y in the atom of log|(f^n)'(x) / (f^n)'(y)|.

    log|f'| is monotone on every branch of the shipped families, so the
    supremum is the sum of its variations over the successive images.
    """
    if m.family is not Family.LORENZ_LIKE:
        return 0.0  # piecewise linear branches
    alpha = m.param("alpha")
    total = mpfr(0)
    with gmpy2.context(precision=PREC):
        _, _, imgs = _forward_image(mp_branches(m), atom.lo, atom.hi, atom.itinerary[:n])
        for a, b in imgs:
            if a == 0 or b == 0:
                return math.inf
            total += abs(gmpy2.log(abs(b)) - gmpy2.log(abs(a)))
    return float((1 - alpha) * total)


@dataclass
class MeasureBoundReport:
    n: int
    checked: int
    violations: list
    unsplit_checked: int
    max_distortion: float
    total_length: float
    literal_violations: int

    @property
    def passed(self) -> bool:
        return not self.violations


def omega0_bound(atom: Atom, P0: InitialPartition, beta: float, literal: bool = False) -> float:
    """exp(-beta * sum (p_i + q_i)) over the ancestor and the first s-1 depths.

    Entries coming from outer pieces (p = rho0 - 1) are skipped unless
    ``literal`` is set: their length is not of the geometric form the
    bound assumes.
    """
    entries = (atom.ancestor,) + atom.D[:-1]
    total = 0
    for k, p in entries:
        if p < P0.rho0 and not literal:
            continue
        q = math.floor(-math.log(float(P0.d(k))))
        total += p + q
    return math.exp(-beta * total)


def verify_measure_bound(level: PartitionLevel, m: MapDescriptor,
                         distortion_samples: int = 500) -> MeasureBoundReport:
    """Per-atom length bounds from the ledgers.

    Split atoms: Leb(omega) <= exp(-beta sum(p_i + q_i)). Unsplit atoms:
    Leb(omega) <= sigma0^{-n} Leb(f^n omega), which is the expansion
    inequality the unsplit bound rests on (Leb(f^n omega) <= |M| gives the
    normalized form).
    """
    P0 = level.p0
    sigma0 = m.expansion_floor
    viol, checked, unsplit, literal = [], 0, 0, 0
    total = mpfr(0)
    max_dist = 0.0
    stride = max(1, len(level.atoms) // max(distortion_samples, 1))
    with gmpy2.context(precision=PREC):
        for idx, w in enumerate(level.atoms):
            total += w.length
            if w.core:
                continue
            L = float(w.length)
            if not w.R:
                unsplit += 1
                img = float(w.image_hi - w.image_lo)
                if sigma0 is not None and L > img * sigma0 ** (-level.n) * (1 + 1e-12):
                    viol.append(idx)
            else:
                checked += 1
                if L > omega0_bound(w, P0, level.beta) * (1 + 1e-12):
                    viol.append(idx)
                if L > omega0_bound(w, P0, level.beta, literal=True) * (1 + 1e-12):
                    literal += 1
            if distortion_samples and level.n and idx % stride == 0:
                max_dist = max(max_dist, atom_log_distortion(m, w, level.n))
        total = float(total)
    return MeasureBoundReport(level.n, checked, viol, unsplit, max_dist, total, literal)


# -- depth statistics --------------------------------------------------------------


@dataclass
class DominationReport:
    lhs: float
    rhs: float
    const: float
    passed: bool


def orbit_log_distance_sum(m: MapDescriptor, x, n: int, delta: float) -> float:
    """sum_{j<n} -log d_delta(f^j x)."""
    from .recurrence import orbit, truncated_dist, _require_full
    rec = orbit(m, x, n)
    _require_full(rec)
    return float(-np.sum(np.log(truncated_dist(m.dist(rec.xs), delta))))


def depth_at(level: PartitionLevel, x, delta: float) -> float:
    i = int(level.locate(np.array([float(x)]))[0])
    return depth_sum(level.atoms[i].D, delta, level.p0)


def point_depth(m: MapDescriptor, x, n: int, delta: float) -> float:
    return depth_sum(point_atom(m, x, n).D, delta, level_zero(m).p0)


def verify_depth_domination(m: MapDescriptor, x, n: int, delta: float, const: float,
                            level: PartitionLevel | None = None) -> DominationReport:
    """S_n(-log d_delta)(x) <= const * D_n^delta(x).

    Without a prebuilt level the ledger is refined along x's chain only.
    """
    if level is not None and level.n < n:
        raise LedgerMissing(f"partition built to level {level.n}, need {n}")
    lhs = orbit_log_distance_sum(m, x, n, delta)
    rhs = depth_at(level, x, delta) if level is not None else point_depth(m, x, n, delta)
    return DominationReport(lhs, rhs, const, lhs <= const * rhs + 1e-9)


def calibrate_domination_constant(m: MapDescriptor, n: int, delta: float, samples: int, seed: int) -> float:
    """Smallest constant making every sampled point satisfy the domination."""
    rng = np.random.default_rng(seed)
    xs = m.sample_uniform(rng, samples)
    worst = 0.0
    for x in xs:
        lhs = orbit_log_distance_sum(m, x, n, delta)
        if lhs > 0:
            rhs = point_depth(m, x, n, delta)
            worst = max(worst, lhs / rhs if rhs > 0 else math.inf)
    return worst


def moment_estimate(m: MapDescriptor, n: int, delta: float, z: float, sample_budget: int,
                    seed: int, level: PartitionLevel | None = None, workers: int = 1,
                    chunk: int = DEFAULT_CHUNK) -> float:
    """Empirical theta = (1/n) log E[exp(z D_n^delta)] under uniform sampling.

    With a prebuilt level, samples are looked up in it; otherwise each sample
    gets its own chain-refined ledger, which is slower per sample but has no
    2^n memory cost.
    """
    if not z > 0:
        raise ValueError("z must be positive")
    if level is not None and level.n < n:
        raise LedgerMissing(f"partition built to level {level.n}, need {n}")
    if level is not None:
        D = level.depth_sums(delta)
        bounds = level.float_bounds

        def depths(x):
            i = np.clip(np.searchsorted(bounds, x, side="right") - 1, 0, len(bounds) - 1)
            return D[i]
    else:
        def depths(x):
            return np.array([point_depth(m, xi, n, delta) for xi in x])

    def work(rng, size, _idx):
        d = depths(m.sample_uniform(rng, size))
        top = float(d.max())
        return top, math.fsum(np.exp(z * (d - top)))

    parts = run_chunks(work, sample_budget, seed, workers, chunk)
    shift = max(t for t, _ in parts)
    total = math.fsum(s * math.exp(z * (t - shift)) for t, s in parts)
    return (shift * z + math.log(total / sample_budget)) / n


@dataclass(frozen=True)
class TailBound:
    bound: float
    slope: float
    vacuous: bool


def chebyshev_tail_bound(theta_emp: float, epsilon: float, const_C: float, n: int,
                         strict: bool = False) -> TailBound:
    """exp(-n (epsilon / C - theta)); vacuous when the exponent is not negative."""
    rate = epsilon / const_C - theta_emp
    vacuous = rate <= 0
    if vacuous and strict:
        raise RateNotNegative(f"epsilon/C - theta = {rate:g} is not positive")
    return TailBound(min(1.0, math.exp(-n * rate)), -rate, vacuous)


# -- export ---------------------------------------------------------------------------

CSV_HEADER = ("atom_lo", "atom_hi", "R", "D")


def level_rows(level: PartitionLevel):
    for a in level.atoms:
        yield (format(a.lo, ".25g"), format(a.hi, ".25g"),
               ";".join(str(r) for r in a.R),
               ";".join(f"{k}:{p}" for k, p in a.D))
