import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from suspflow import maps
from suspflow.errors import OutOfDomain, SingularPoint
from suspflow.maps import NonFlatnessParams


LORENZ = maps.lorenz_like()
QUAD = maps.quadratic(2.0)
DOUBLING = maps.doubling()
ALL_MAPS = [DOUBLING, maps.tent_full(), LORENZ, QUAD, maps.piecewise_linear()]


def test_eval_examples():
    assert maps.eval(DOUBLING, 0.3) == pytest.approx(0.6, abs=1e-15)
    assert maps.eval(LORENZ, 1.0) == pytest.approx(0.9, abs=1e-15)
    assert maps.eval(QUAD, 0.0) == 2.0


def test_eval_rejects_bad_points():
    with pytest.raises(SingularPoint):
        maps.eval(LORENZ, 0.0)
    with pytest.raises(OutOfDomain):
        maps.eval(LORENZ, 1.5)
    with pytest.raises(OutOfDomain):
        maps.eval(DOUBLING, float("nan"))


def test_derivative_examples():
    assert maps.derivative(DOUBLING, 0.77) == 2.0
    assert maps.derivative(LORENZ, 1.0) == pytest.approx(1.14, rel=1e-15)
    with mpmath.workdps(50):
        ref = mpmath.mpf("0.6") * mpmath.mpf("1.9") * mpmath.mpf("1e-6") ** (mpmath.mpf("0.6") - 1)
    assert maps.derivative(LORENZ, 1e-6) == pytest.approx(float(ref), rel=1e-12)
    assert maps.derivative(LORENZ, 1e-8) > maps.derivative(LORENZ, 1e-6)
    with pytest.raises(SingularPoint):
        maps.derivative(LORENZ, 0.0)


def test_dist_examples():
    assert maps.dist_to_singular(DOUBLING, 0.5) == math.inf
    assert maps.dist_to_singular(LORENZ, 0.25) == 0.25
    assert maps.dist_to_singular(QUAD, -0.1) == pytest.approx(0.1)
    assert maps.dist_to_singular(LORENZ, 0.9) == pytest.approx(0.1)


def test_neighborhood_volume_examples():
    zero_only = maps.with_singular_set(LORENZ, (0.0,), includes_endpoints=False)
    assert maps.singular_neighborhood_volume(zero_only, 0.1) == pytest.approx(0.2)
    assert maps.singular_neighborhood_volume(DOUBLING, 0.1) == 0.0
    assert maps.singular_neighborhood_volume(LORENZ, 0.1) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        maps.singular_neighborhood_volume(LORENZ, 1.0)


@pytest.mark.parametrize("m", ALL_MAPS, ids=lambda m: m.family.value)
def test_neighborhood_volume_power_bound(m):
    nf = m.nonflatness
    for k in range(1, 7):
        rho = 10.0 ** -k
        assert maps.singular_neighborhood_volume(m, rho) <= nf.C_kappa * rho ** nf.kappa + 1e-15


def test_nonflatness_doubling_passes():
    assert maps.check_nonflatness(DOUBLING, 2000, 1).all_pass


def test_nonflatness_lorenz_exponent():
    good = replace(LORENZ, nonflatness=NonFlatnessParams(B=4.0, beta=0.4))
    rep = maps.check_nonflatness(good, 20000, 3)
    assert rep.passed["S1"] and rep.passed["S5"]
    # The log-derivative oscillation scales like dist^-1, so the Lipschitz-type
    # conditions fail at any beta < 1, which the sampler must reveal.
    assert not rep.passed["S2"]
    bad = replace(LORENZ, nonflatness=NonFlatnessParams(B=4.0, beta=0.1))
    rep = maps.check_nonflatness(bad, 20000, 3)
    assert not rep.passed["S1"]
    assert abs(rep.witnesses["S1"]) < 1e-3


@pytest.mark.parametrize("m", ALL_MAPS, ids=lambda m: m.family.value)
def test_image_stays_in_domain(m):
    rng = np.random.default_rng(11)
    x = m.sample_uniform(rng, 200_000)
    if m.discontinuities:
        x = x[m.dist(x, m.discontinuities) > maps.SINGULAR_TOL]
    y = m.f(x)
    lo, hi = m.domain
    assert np.all((y >= lo) & (y <= hi))


@pytest.mark.parametrize("m", [DOUBLING, maps.tent_full(), LORENZ, maps.piecewise_linear()],
                         ids=lambda m: m.family.value)
def test_expansion_floor(m):
    rng = np.random.default_rng(5)
    x = m.sample_uniform(rng, 100_000)
    x = x[m.dist(x) > 1e-9]
    assert np.all(np.abs(m.df(x)) >= m.expansion_floor * (1 - 1e-12))


def test_lorenz_like_conditions():
    assert LORENZ.branch_f(1e-12, 1) == pytest.approx(-1.0, abs=1e-6)
    assert LORENZ.branch_f(-1e-12, -1) == pytest.approx(1.0, abs=1e-6)
    assert 0 < maps.eval(LORENZ, 1.0) < 1
    assert -1 < maps.eval(LORENZ, -1.0) < 0
    assert LORENZ.expansion_floor > 1


@given(st.floats(0.0, 1.0, exclude_max=True))
def test_doubling_matches_exact_rationals(x):
    from fractions import Fraction
    exact = (2 * Fraction(x)) % 1
    assert float(DOUBLING.f(x)) == float(exact)


@given(st.floats(-1.0, 1.0).filter(lambda v: abs(v) > 1e-12))
def test_lorenz_odd_symmetry(x):
    assert float(LORENZ.f(-x)) == -float(LORENZ.f(x))
    assert float(LORENZ.df(-x)) == float(LORENZ.df(x))


@given(st.floats(1e-9, 1.0))
def test_lorenz_inverse_branches(x):
    inv = LORENZ.inverse_branches()
    y = float(LORENZ.f(x))
    assert inv[1](y) == pytest.approx(x, rel=1e-9, abs=1e-12)


def test_quadratic_domain_invariant():
    assert maps.eval(QUAD, 2.0) == -2.0
    assert maps.eval(QUAD, -2.0) == -2.0


def test_dyadic_orbit_batch_stays_uniform():
    rng = np.random.default_rng(2)
    ob = maps.OrbitBatch(DOUBLING, rng, 100_000)
    for _ in range(200):
        ob.step()
    x = ob.x
    assert 0.48 < np.mean(x < 0.5) < 0.52
    assert np.all((x > 0) & (x < 1))


def test_make_map_rejects_unknown():
    with pytest.raises(ValueError):
        maps.make_map("baker")
    assert maps.make_map("lorenz_like", alpha=0.7, b_coef=1.8).param("alpha") == 0.7
