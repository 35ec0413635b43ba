import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from suspflow import maps, recurrence as rec
from suspflow.errors import SingularOrbit, UnknownEntropy
from suspflow.recurrence import HyperbolicParams

LORENZ = maps.lorenz_like()
DOUBLING = maps.doubling()
LOG2 = math.log(2)


def test_truncated_log_distance_examples():
    delta = 0.01
    m = maps.lorenz_like()
    assert rec.truncated_log_distance(m, 3 * delta, delta) == 0.0
    assert rec.truncated_log_distance(m, delta / 2, delta) == pytest.approx(-math.log(delta / 2))
    assert rec.truncated_log_distance(m, 2 * delta, delta) == pytest.approx(0.0, abs=1e-15)
    assert rec.truncated_log_distance(m, delta, delta) == pytest.approx(-math.log(delta))


@given(st.floats(1e-6, 0.2))
def test_truncated_log_distance_bounds(d):
    delta = 0.05
    v = float(rec.delta_from_dist(d, delta))
    assert 0.0 <= v <= max(0.0, -math.log(d)) + 1e-12


def test_birkhoff_examples():
    const = lambda x: np.full_like(np.asarray(x, float), 2.5)
    assert rec.birkhoff_sum(DOUBLING, const, 0.3, 7) == pytest.approx(17.5)
    assert rec.birkhoff_sum(DOUBLING, DOUBLING.log_abs_df, 0.3, 9) == pytest.approx(9 * LOG2)
    ind = lambda x: (np.asarray(x) < 0.5).astype(float)
    assert rec.birkhoff_sum(DOUBLING, ind, 1 / 3, 4) == 2.0


def test_birkhoff_singular_orbit():
    with pytest.raises(SingularOrbit):
        rec.birkhoff_sum(LORENZ, lambda x: x, 0.0, 3)


def test_nue_examples():
    assert rec.nue_diagnostic(DOUBLING, 0.123, 50) == -LOG2
    assert rec.nue_diagnostic(maps.tent_full(), 0.2137, 40) == -LOG2
    v = rec.nue_diagnostic(LORENZ, 0.3141, 100_000)
    assert v <= -math.log(1.14)


def test_slow_recurrence_empty_singular_set():
    est = rec.slow_recurrence_volume(DOUBLING, 20, 0.01, 0.1, 5000, 1)
    assert est.estimate == 0.0 and est.ci_lo == 0.0 and est.ci_hi > 0


def test_slow_recurrence_one_step_oracle():
    delta, eps = math.exp(-10), 0.5
    # root of the interpolation branch -log d (2 delta - d)/delta = eps
    with mpmath.workdps(40):
        dl = mpmath.mpf(delta)
        root = mpmath.findroot(lambda d: -mpmath.log(d) * (2 * dl - d) / dl - eps, 1.99 * dl)
    # |x| < d*, plus half-neighborhoods of both endpoints, normalized by |domain| = 2
    volume = 4 * float(root) / 2
    est = rec.slow_recurrence_volume(LORENZ, 1, delta, eps, 1_000_000, 4)
    assert abs(est.estimate - volume) <= 3 * est.sigma + 1e-12


def test_slow_recurrence_decreasing_trend():
    vals = [rec.slow_recurrence_volume(LORENZ, n, 0.01, 1.0, 200_000, 9).estimate
            for n in (10, 20, 40)]
    assert vals[0] > vals[1] > vals[2]


def test_slow_recurrence_budget_precondition():
    with pytest.raises(ValueError):
        rec.slow_recurrence_volume(LORENZ, 5, 0.01, 0.1, 999, 0)


def test_hyperbolic_doubling():
    p_hi = HyperbolicParams(0.6, 0.1, 0.5)
    p_lo = HyperbolicParams(0.4, 0.1, 0.5)
    assert rec.detect_hyperbolic_times(DOUBLING, 0.3, 50, p_hi) == list(range(1, 51))
    assert rec.detect_hyperbolic_times(DOUBLING, 0.3, 50, p_lo) == []
    assert rec.hyperbolic_frequency(DOUBLING, 0.3, 50, p_hi) == 1.0
    assert rec.hyperbolic_frequency(DOUBLING, 0.3, 50, p_lo) == 0.0


def brute_force_hyperbolic(m, x0, n, params):
    """Check both backward conditions at time n directly, in multiprecision."""
    a, b = m.param("alpha"), m.param("b_coef")
    xs = [float(x0)]
    for _ in range(n - 1):
        xs.append(float(m.f(xs[-1])))
    with mpmath.workdps(40):
        for k in range(1, n + 1):
            prod = mpmath.mpf(1)
            for j in range(n - k, n):
                prod *= 1 / (a * b * abs(mpmath.mpf(xs[j])) ** (a - 1))
            if prod > mpmath.mpf(params.sigma) ** k * (1 + mpmath.mpf("1e-10")):
                return False
            d = float(m.dist(xs[n - k]))
            dd = d if d <= params.delta else 1.0
            if dd < math.exp(-params.b * k) * (1 - 1e-10):
                return False
    return True


def test_hyperbolic_lorenz_brute_force():
    params = HyperbolicParams(0.95, 0.1, 0.1)
    rng = np.random.default_rng(21)
    for x0 in rng.uniform(-1, 1, 3):
        times = rec.detect_hyperbolic_times(LORENZ, x0, 300, params)
        assert times
        all_times = set(times)
        for n in range(1, 301, 7):
            assert brute_force_hyperbolic(LORENZ, x0, n, params) == (n in all_times)


def test_preball_doubling():
    params = HyperbolicParams(0.6, 0.1, 0.5)
    r = rec.verify_preball_contraction(DOUBLING, 0.3, 12, params, pair_budget=8)
    assert r.passed and r.max_ratio < 1
    bad = rec.verify_preball_contraction(DOUBLING, 0.3, 12, HyperbolicParams(0.4, 0.1, 0.5), pair_budget=4)
    assert not bad.passed and bad.witness_k == 1


def test_preball_lorenz_detected_time():
    params = HyperbolicParams(0.95, 0.1, 0.1)
    times = rec.detect_hyperbolic_times(LORENZ, 0.377, 200, params)
    n = times[len(times) // 2]
    r = rec.verify_preball_contraction(LORENZ, 0.377, n, params, pair_budget=8)
    assert r.is_hyperbolic and r.passed


def test_entropy_examples():
    assert rec.entropy_formula_check(DOUBLING, 10, 1000, 16).estimate == LOG2
    assert rec.entropy_formula_check(maps.tent_full(), 10, 1000, 16).estimate == LOG2
    q = rec.entropy_formula_check(maps.quadratic(2.0), 1000, 100_000, 10, seed=3)
    assert abs(q.estimate - LOG2) / LOG2 < 0.01


def test_entropy_unknown_reference():
    with pytest.raises(UnknownEntropy):
        rec.entropy_formula_check(LORENZ, 10, 100, 4)
    assert rec.entropy_formula_check(LORENZ, 10, 100, 4, report_only=True).reference is None
