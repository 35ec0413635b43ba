import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from suspflow import lorenz as lz, maps
from suspflow.errors import CalibrationFailed, Diverged, EmptyBin, NoReturn, SingularLine
from suspflow.lorenz import FlowState, GeometricModelParams, SectionPoint

PARAMS = GeometricModelParams()
QUOTIENT = PARAMS.quotient()
unit = st.floats(-1, 1)
nonzero = unit.filter(lambda u: abs(u) > 1e-12)


def test_semiconjugacy_exact():
    rng = np.random.default_rng(0)
    u, v = rng.uniform(-1, 1, (2, 100_000))
    fu, g = lz.poincare_arrays(u, v, PARAMS)
    assert np.array_equal(fu, QUOTIENT.f(u))
    assert np.all(np.abs(g) <= PARAMS.lam_y + 0.5)


@given(nonzero, unit, unit)
def test_fiber_contraction(u, v1, v2):
    a = lz.geometric_poincare(SectionPoint(u, v1), PARAMS)
    b = lz.geometric_poincare(SectionPoint(u, v2), PARAMS)
    assert a.u == b.u == float(QUOTIENT.f(u))
    gap = abs(a.v - b.v)
    assert gap == pytest.approx(PARAMS.lam_y * abs(u) ** PARAMS.alpha * abs(v1 - v2), abs=1e-15)
    assert gap <= PARAMS.lam_y * abs(v1 - v2) + 1e-15


def test_singular_line():
    with pytest.raises(SingularLine):
        lz.geometric_poincare(SectionPoint(0.0, 0.3), PARAMS)
    with pytest.raises(SingularLine):
        lz.geometric_roof(SectionPoint(0.0, 0.3), PARAMS)
    with pytest.raises(ValueError):
        SectionPoint(1.5, 0.0)


def test_roof_examples():
    assert lz.geometric_roof(SectionPoint(1.0, 0.2), PARAMS) == PARAMS.tau0
    assert lz.geometric_roof(SectionPoint(-math.exp(-1), 0.2), PARAMS) == pytest.approx(PARAMS.tau0 + PARAMS.C0)


@given(nonzero, unit)
def test_roof_floor(u, v):
    assert lz.geometric_roof(SectionPoint(u, v), PARAMS) >= PARAMS.tau0


def test_roof_integral_converges():
    exact = PARAMS.tau0 + PARAMS.C0
    assert lz.roof_mean(PARAMS) == pytest.approx(exact, abs=1e-6)
    # truncated mean: int_c^1 (tau0 - C0 log u) du = (1-c) tau0 + C0 (1 - c + c log c)
    for c in (1e-2, 1e-4, 1e-8):
        tail = (1 - c) * PARAMS.tau0 + PARAMS.C0 * (1 - c + c * math.log(c))
        assert lz.roof_mean(PARAMS, cutoff=c) == pytest.approx(tail, abs=1e-9)


def test_contraction_examples():
    same = lz.contraction_check(SectionPoint(0.3, 0.1), SectionPoint(0.3, 0.1), PARAMS, 10)
    assert np.all(same.distances == 0) and same.passed
    one = lz.contraction_check(SectionPoint(0.3, -0.9), SectionPoint(0.3, 0.8), PARAMS, 1)
    assert one.distances[1] <= PARAMS.lam_y * one.distances[0]
    rng = np.random.default_rng(4)
    for _ in range(20):
        u, v1, v2 = rng.uniform(-1, 1, 3)
        rep = lz.contraction_check(SectionPoint(u, v1), SectionPoint(u, v2), PARAMS, 50)
        assert rep.passed and rep.C == pytest.approx(abs(v1 - v2))
    with pytest.raises(SingularLine):
        lz.contraction_check(SectionPoint(0.0, 0.1), SectionPoint(0.0, 0.2), PARAMS, 3)


def test_fiber_average_v_independent():
    pts = lz.section_orbits(PARAMS, 200, 64, 1)
    fa = lz.fiber_average(lambda u, v: u ** 2, 0.2, pts, bandwidth=0.01)
    assert fa.value == pytest.approx(0.04) and fa.count > 0
    with pytest.raises(EmptyBin):
        lz.fiber_average(lambda u, v: v, 0.2, (np.array([0.9]), np.array([0.0])))


def test_fiber_average_degenerate_contraction():
    flat = GeometricModelParams(lam_y=0.0)
    pts = lz.section_orbits(flat, 2000, 64, 2)
    u0, bw = 0.2, 1e-3
    b, a = flat.b_coef, flat.alpha
    # with no fiber memory, v is 0.5 sign(w)(1-|w|^a) for the preimage w of u
    v_plus = 0.5 * (1 - (u0 + 1) / b)
    v_minus = -0.5 * (1 - (1 - u0) / b)
    us, vs = pts
    near = vs[np.abs(us - u0) < bw]
    slack = bw / b
    assert np.all((np.abs(near - v_plus) < slack) | (np.abs(near - v_minus) < slack))
    fa = lz.fiber_average(lambda u, v: v, u0, pts, bw)
    assert v_minus - slack <= fa.value <= v_plus + slack


def test_fiber_average_bandwidth_stable():
    pts = lz.section_orbits(PARAMS, 2000, 64, 3)
    wide = lz.fiber_average(lambda u, v: v, 0.4, pts, 2e-3)
    narrow = lz.fiber_average(lambda u, v: v, 0.4, pts, 1e-3)
    assert abs(wide.value - narrow.value) <= 1.96 * math.hypot(wide.se, narrow.se)


def test_lemma_zero_psi_vacuous():
    zero = lz.ModelObservable(lambda u, v, s: np.zeros(np.broadcast(u, v, s).shape), 0.0, True)
    rep = lz.lemma_reduction_check(zero, PARAMS, 0.1, 20, 1, 2000, 1, orbit_length=200, ensemble=16)
    assert rep.lhs_empty and rep.passed


def test_lemma_degenerate_contraction():
    flat = GeometricModelParams(lam_y=0.0)
    psi = lz.ModelObservable(lambda u, v, s: v + 0.0 * s, 1.0, True)
    rep = lz.lemma_reduction_check(psi, flat, 0.05, 20, 1, 4000, 5, orbit_length=500, ensemble=32)
    assert rep.passed and rep.lhs > 0


def test_lemma_calibration_failure():
    psi = lz.ModelObservable(lambda u, v, s: v + 0.0 * s, 1.0, True)
    with pytest.raises(CalibrationFailed):
        lz.lemma_reduction_check(psi, PARAMS, 0.01, 5, 1, 2000, 5, grid=[(1e-6, 1e-9, 1)],
                                 orbit_length=200, ensemble=16, max_rate=0.0)


def test_quotient_is_lorenz_like():
    assert QUOTIENT.family is maps.Family.LORENZ_LIKE
    with pytest.raises(ValueError):
        GeometricModelParams(lam_y=1.0)


# -- ODE ------------------------------------------------------------------------


def test_origin_fixed():
    assert lz.ode_integrate(FlowState(0.0, 0.0, 0.0), 3.0).as_tuple() == (0.0, 0.0, 0.0)


def test_equilibria_vanish_and_persist():
    for eq in lz.EQUILIBRIA:
        assert max(abs(c) for c in lz.lorenz_field(*eq)) < 1e-12
    for eq in lz.EQUILIBRIA[1:]:
        end = lz.ode_integrate(FlowState(*eq), 10.0, 1e-2)
        assert max(abs(a - b) for a, b in zip(end.as_tuple(), eq)) < 1e-8


def test_richardson_fourth_order():
    assert 12 <= lz.richardson_ratio(FlowState(1.0, 1.0, 20.0)) <= 20


def test_step_precondition_and_divergence():
    with pytest.raises(ValueError):
        lz.ode_integrate(FlowState(1, 1, 1), 1.0, 0.02)
    with pytest.raises(Diverged):
        lz.ode_integrate(FlowState(900.0, -900.0, 900.0), 1.0, 1e-3)


def test_partial_last_step():
    s = FlowState(1.0, 2.0, 20.0)
    a = lz.ode_integrate(s, 0.0105, 1e-3)
    b = lz.ode_integrate(lz.ode_integrate(s, 0.01, 1e-3), 0.0005, 1e-3)
    assert np.allclose(a.as_tuple(), b.as_tuple(), atol=1e-13)


def test_section_return_orientation():
    start = lz.ode_integrate(FlowState(1.0, 1.0, 20.0), 5.0)
    first, _ = lz.ode_section_return(start)
    up = lz.lorenz_field(*first.as_tuple())[2] > 0
    nxt, tr = lz.ode_section_return(first)
    assert tr > 0
    assert abs(nxt.z - lz.SECTION_Z) < 1e-8
    assert (lz.lorenz_field(*nxt.as_tuple())[2] > 0) == up


def test_section_return_ceiling():
    # the origin's stable axis never returns to the section
    with pytest.raises(NoReturn):
        lz.ode_section_return(FlowState(0.0, 0.0, 0.5), t_max=2.0)


def test_stable_trace_log_growth():
    start = lz.ode_integrate(FlowState(1.0, 1.0, 20.0), 5.0)
    first, _ = lz.ode_section_return(start, orient=lz.DOWN)
    p, q = lz.find_lobe_pair(first)
    rep = lz.stable_trace_scan(p, q, distances=np.logspace(-2, -8, 7))
    assert np.all(rep.return_times > 0)
    assert rep.correlation > 0.9
    # passage time near the origin grows like -log d over the unstable eigenvalue
    unstable = (-(lz.SIGMA + 1) + math.sqrt((lz.SIGMA - 1) ** 2 + 4 * lz.SIGMA * lz.RHO)) / 2
    assert rep.slope == pytest.approx(1 / unstable, rel=0.1)
