"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are printed
even under output capture.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from suspflow import deviation as dev
from suspflow import lorenz as lz
from suspflow import maps
from suspflow import partition as part
from suspflow import recurrence as rec
from suspflow import semiflow as sf
from suspflow.errors import DegenerateFit
from suspflow.recurrence import HyperbolicParams
from suspflow.semiflow import Suspension, SuspensionPoint
from suspflow.stats import linear_fit

LOG2 = math.log(2)
LORENZ = maps.lorenz_like()
DOUBLING = maps.doubling()
UNIT = sf.constant_roof(1.0)
DOMINATION_CONST = 0.09


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail, started):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail} ({time.time() - started:.1f}s)"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def left_half(x):
    return (np.asarray(x) < 0.5).astype(float)


def exact_binomial_tail(n, omega):
    """Leb{|S_n 1_[0,1/2) / n - 1/2| >= omega} for the doubling map, exactly."""
    w = Fraction(omega).limit_denominator(10**6)
    hits = sum(math.comb(n, k) for k in range(n + 1) if abs(Fraction(k, n) - Fraction(1, 2)) >= w)
    return Fraction(hits, 2 ** n)


def test_criterion_1_binomial_oracle(verdict):
    t0 = time.time()
    ns = (10, 15, 20, 25)
    exact = {n: float(exact_binomial_tail(n, 0.1)) for n in ns}
    ests = [dev.base_deviation_volume(DOUBLING, left_half, 0.5, n, 0.1, 1_000_000, 11) for n in ns]
    z = max(abs(e.estimate - exact[e.horizon]) / e.sigma for e in ests)
    target = linear_fit(np.array(ns, float), np.log([exact[n] for n in ns]))[0]
    slope = dev.rate_fit([(e.horizon, e.estimate) for e in ests]).slope
    rel = abs(slope - target) / abs(target)
    verdict(1, z <= 3 and rel <= 0.15 and time.time() - t0 < 120,
            f"max |est-exact|/sigma={z:.2f}, slope={slope:.4f} vs exact-tail slope {target:.4f} "
            f"(rel {rel:.3f})", t0)


def test_criterion_2_escape_oracle(verdict):
    t0 = time.time()
    res = dev.escape_rate(DOUBLING, UNIT, dev.Box(0.0, 0.5, 0.0, 1.0), list(range(5, 21)),
                          10_000_000, 5)
    z_lit = max(abs(e.estimate - 2.0 ** -e.horizon) / e.sigma for e in res.estimates)
    z_half = max(abs(e.estimate - 2.0 ** -(e.horizon + 1)) / e.sigma for e in res.estimates)
    rel = abs(-res.fit.slope - LOG2) / LOG2
    verdict(2, z_lit <= 3 and rel <= 0.1 and time.time() - t0 < 120,
            f"max z vs 2^-T={z_lit:.1f}, max z vs 2^-(T+1)={z_half:.2f}, rate={-res.fit.slope:.4f} "
            f"(rel {rel:.3f})", t0)


def test_criterion_3_entropy_formula(verdict):
    t0 = time.time()
    d = rec.entropy_formula_check(DOUBLING, 10, 1000, 16).estimate
    t = rec.entropy_formula_check(maps.tent_full(), 10, 1000, 16).estimate
    q = rec.entropy_formula_check(maps.quadratic(2.0), 1000, 100_000, 10, seed=3)
    rel = abs(q.estimate - LOG2) / LOG2
    verdict(3, d == LOG2 and t == LOG2 and rel < 0.01 and time.time() - t0 < 60,
            f"doubling={d!r}, tent={t!r}, quadratic(2)={q.estimate:.6f} at n=1e6 (rel {rel:.2e})", t0)


def test_criterion_4_semiflow_algebra(verdict):
    t0 = time.time()
    rng = np.random.default_rng(4)
    roof = sf.log_distance_roof(LORENZ)
    susp = Suspension(LORENZ, roof)
    unit_susp = Suspension(DOUBLING, UNIT)
    psi = sf.FlowObservable(lambda x, s: np.cos(3 * np.asarray(s)) * np.asarray(x), 1.0, False)
    one = sf.constant_psi(1.0)
    worst_group = worst_add = worst_one = 0.0
    cases = 10_000
    for _ in range(cases):
        x = float(rng.uniform(-1, 1))
        if abs(x) < 1e-6:
            continue
        z = SuspensionPoint(x, float(rng.uniform(0, 0.999)) * float(roof(x)))
        t1, t2 = rng.uniform(0, 3, 2)
        a = sf.evolve(susp, z, t1 + t2)
        b = sf.evolve(susp, sf.evolve(susp, z, t1), t2)
        worst_group = max(worst_group, abs(a.x - b.x), abs(a.s - b.s))
        whole = sf.time_integral(susp, psi, z, t1 + t2)
        parts = sf.time_integral(susp, psi, z, t1) + sf.time_integral(susp, psi, sf.evolve(susp, z, t1), t2)
        worst_add = max(worst_add, abs(whole - parts))
        T = t1 + t2
        w = SuspensionPoint(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
        worst_one = max(worst_one, abs(sf.time_integral(unit_susp, one, w, T) - T),
                        abs(sf.time_integral(susp, one, z, T) - T))
    ok = max(worst_group, worst_add, worst_one) <= 1e-9 and time.time() - t0 < 60
    verdict(4, ok, f"{cases} cases: semigroup {worst_group:.1e}, additivity {worst_add:.1e}, "
                   f"psi=1 {worst_one:.1e}", t0)


def independent_hyperbolic(m, xs, n, params):
    """Both backward conditions at time n, from the raw orbit and plain math."""
    acc = 0.0
    for k in range(1, n + 1):
        x = xs[n - k]
        acc += math.log(abs(float(m.df(x))))
        if -acc > k * math.log(params.sigma) + 1e-9:
            return False
        d = float(m.dist(x))
        if (d if d <= params.delta else 1.0) < math.exp(-params.b * k) * (1 - 1e-10):
            return False
    return True


def test_criterion_5_hyperbolic_times(verdict):
    t0 = time.time()
    hi = rec.hyperbolic_frequency(DOUBLING, 0.3, 50, HyperbolicParams(0.6, 0.1, 0.5))
    lo = rec.hyperbolic_frequency(DOUBLING, 0.3, 50, HyperbolicParams(0.4, 0.1, 0.5))
    params = HyperbolicParams(0.95, 0.01, 0.1)
    N = 200
    rng = np.random.default_rng(5)
    freqs, checked, bad = [], 0, 0
    for x0 in LORENZ.sample_uniform(rng, 100):
        times = rec.detect_hyperbolic_times(LORENZ, float(x0), N, params)
        freqs.append(len(times) / N)
        xs = [float(x0)]
        for _ in range(N):
            xs.append(float(LORENZ.f(xs[-1])))
        for n in times:
            checked += 1
            bad += not independent_hyperbolic(LORENZ, xs, n, params)
    med = float(np.median(freqs))
    ok = hi == 1.0 and lo == 0.0 and med > 0 and bad == 0 and time.time() - t0 < 120
    verdict(5, ok, f"doubling 1.0/0.0 -> {hi}/{lo}, LorenzLike median frequency {med:.3f}, "
                   f"{bad} of {checked} reported times fail re-verification", t0)


def test_criterion_6_partition_integrity(verdict):
    t0 = time.time()
    lv = part.level_zero(LORENZ)
    P0 = lv.p0
    worst_ratio = max(part.enlarged_ratio(P0, (a.k, a.p)) for a in P0.atoms if not a.core)
    coverage, containment, measure = 0.0, 0, []
    for n in range(1, 13):
        lv = part.refine(lv, LORENZ)
        c = part.verify_containment(lv, LORENZ)
        containment += len(c.violations) + len(c.crossing)
        mb = part.verify_measure_bound(lv, LORENZ, 0)
        coverage = max(coverage, abs(float(mb.total_length) - LORENZ.length) / LORENZ.length)
        measure.append(len(mb.violations))
    ok = (coverage <= 1e-10 and worst_ratio <= 9 and not any(measure) and containment == 0
          and time.time() - t0 < 300)
    verdict(6, ok, f"coverage {coverage:.1e}, max enlarged ratio {worst_ratio:.3g}, "
                   f"measure-bound violations by level {measure}, containment violations {containment}", t0)


def test_criterion_7_exponential_recurrence(verdict):
    t0 = time.time()
    delta, eps = math.exp(-10), 0.5
    ns = (10, 20, 40, 80)
    vols = [rec.slow_recurrence_volume(LORENZ, n, delta, eps, 200_000, 7).estimate for n in ns]
    decreasing = all(b < a for a, b in zip(vols, vols[1:]))
    try:
        fit = dev.rate_fit(list(zip(ns, vols)))
        slope, r2 = fit.slope, fit.r_squared
    except DegenerateFit:
        slope, r2 = math.nan, math.nan
    z = 0.5
    theta = part.moment_estimate(LORENZ, 10, delta, z, 20_000, 7)
    # S_n Delta <= C D_n, so Markov at z bounds the volume by exp(-n (z eps / C - theta))
    predicted = part.chebyshev_tail_bound(theta, z * eps, DOMINATION_CONST, 1).slope
    within = (predicted < 0 and slope < 0 and max(slope / predicted, predicted / slope) <= 2)
    ok = decreasing and slope < 0 and r2 > 0.9 and within and time.time() - t0 < 600
    verdict(7, ok, f"volumes {vols}, slope {slope:.3g}, r2 {r2:.3g}, theta {theta:.3g}, "
                   f"predicted slope {predicted:.3g}", t0)


def test_criterion_8_flow_deviation(verdict):
    t0 = time.time()
    roof = sf.log_distance_roof(LORENZ)
    psi = sf.base_psi(lambda x: x, 1.0, "x")
    nu = sf.nu_estimate(psi, LORENZ, roof, 100, 5000, 64, 8).value
    Ts = (50, 100, 200, 400)
    ests = [dev.flow_deviation_volume(LORENZ, roof, psi, nu, T, 0.1, 100_000, 0.01, 8) for T in Ts]
    # a later value may exceed an earlier one only within overlapping intervals
    monotone = all(b.estimate <= a.estimate or b.ci_lo <= a.ci_hi for a, b in zip(ests, ests[1:]))
    fit = dev.rate_fit([(e.horizon, e.estimate) for e in ests])
    ok = monotone and fit.slope < 0 and time.time() - t0 < 900
    verdict(8, ok, f"volumes {[round(float(e.estimate), 6) for e in ests]}, slope {fit.slope:.4g}, "
                   f"curvature {[round(c, 6) for c in fit.curvature]}", t0)


def test_criterion_9_lorenz_model(verdict):
    t0 = time.time()
    params = lz.GeometricModelParams()
    q = params.quotient()
    rng = np.random.default_rng(9)
    u, v = rng.uniform(-1, 1, (2, 100_000))
    fu, _ = lz.poincare_arrays(u, v, params)
    semiconj = int(np.count_nonzero(fu != q.f(u)))
    contraction = lz.contraction_check(lz.SectionPoint(0.3, -0.9), lz.SectionPoint(0.3, 0.8), params, 50)
    psi = lz.ModelObservable(lambda u, v, s: v + 0.0 * s, 1.0, True)
    lemma = lz.lemma_reduction_check(psi, params, 0.01, 200, 1, 10_000, 9, max_rate=0.0)
    eq_err = max(max(abs(a - b) for a, b in zip(lz.ode_integrate(lz.FlowState(*eq), 10.0, 1e-2).as_tuple(), eq))
                 for eq in lz.EQUILIBRIA[1:])
    ratio = lz.richardson_ratio(lz.FlowState(1.0, 1.0, 20.0))
    start = lz.ode_integrate(lz.FlowState(1.0, 1.0, 20.0), 5.0)
    first, _ = lz.ode_section_return(start, orient=lz.DOWN)
    p, pq = lz.find_lobe_pair(first)
    trace = lz.stable_trace_scan(p, pq, distances=np.logspace(-2, -8, 7))
    ok = (semiconj == 0 and contraction.passed and lemma.violations == 0 and not lemma.lhs_empty
          and eq_err <= 1e-8 and 12 <= ratio <= 20 and trace.correlation > 0.9
          and time.time() - t0 < 600)
    verdict(9, ok, f"semiconjugacy mismatches {semiconj}, contraction {contraction.passed}, "
                   f"lemma violations {lemma.violations} of lhs {lemma.lhs}, equilibria {eq_err:.1e}, "
                   f"richardson {ratio:.2f}, trace correlation {trace.correlation:.4f}", t0)


def test_criterion_10_determinism(verdict):
    t0 = time.time()
    roof = sf.log_distance_roof(LORENZ)
    psi = sf.base_psi(lambda x: x, 1.0, "x")
    box = dev.Box(0.0, 0.5, 0.0, 1.0)
    runs = {
        "base_deviation": lambda w: dev.base_deviation_volume(DOUBLING, left_half, 0.5, 20, 0.1, 50_000, 3, w).as_row(),
        "flow_deviation": lambda w: dev.flow_deviation_volume(LORENZ, roof, psi, 0.0, 20, 0.1, 20_000, 0.01, 3, w).as_row(),
        "escape": lambda w: [e.as_row() for e in dev.escape_rate(DOUBLING, UNIT, box, [2, 4, 6], 50_000, 3, w).estimates],
        "slow_recurrence": lambda w: rec.slow_recurrence_volume(LORENZ, 20, 0.01, 1.0, 50_000, 3, w).as_row(),
        "moment": lambda w: part.moment_estimate(LORENZ, 4, 0.01, 0.5, 5_000, 3, workers=w),
    }
    differing = [name for name, fn in runs.items() if len({repr(fn(w)) for w in (1, 4, 8)}) != 1]
    verdict(10, not differing, f"{len(runs)} estimators across 1/4/8 workers, differing: {differing or 'none'}", t0)
