import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eikolab.errors import ConfigurationError, NumericalFailure, PreconditionError
from eikolab.flow import (
    BC_Q_MIN,
    RELEASE_C,
    STOP_LEFT,
    STOP_MODULUS,
    STOP_TIME,
    Curve,
    StripSpec,
    alpha_p,
    bc_delta,
    bc_experiment,
    calibrate_constant,
    check_bc_exponent,
    curve_invariants,
    delta_exponents,
    delta_formula,
    maximal_curve_endpoints,
    mollified_gradient,
    required_constant,
    segment_distance,
    straightness_audit,
    strip_cross,
    trace_batch,
    trace_curve,
    truncate_to_window,
    zigzag_curve,
)
from eikolab.grid import Disk, VectorField, crop
from eikolab.mollify import MollifiedField, cone_kernel, mollify
from eikolab.solutions import constant_field, jump_field, vortex_field
from eikolab.suite import shifted_grid


def gradient_of(m, eps):
    return mollified_gradient(mollify(m, cone_kernel(eps)))


@pytest.fixture(scope="module")
def grid():
    # half-cell shifted: no node on the axes
    return shifted_grid(1.0, 0.01)


@pytest.fixture(scope="module")
def vortex_grad(grid):
    return gradient_of(vortex_field(grid), 0.02)


@pytest.fixture(scope="module")
def bc_field():
    g = shifted_grid(2.2, 0.01)
    return vortex_field(g)


@pytest.fixture(scope="module")
def bc_mollified(bc_field):
    return mollify(crop(bc_field, (-2.1, -2.1, 2.1, 2.1)), cone_kernel(0.02))


def test_constant_field_vertical_segment(grid):
    grad = gradient_of(constant_field(grid, (1.0, 0.0)), 0.04)
    c = trace_curve(grad, (0.0, 0.0), 0.5, 0.5)
    assert c.stop_reason == STOP_TIME
    assert c.T == pytest.approx(0.5)
    assert np.abs(c.points[:, 0]).max() <= 1e-15
    assert c.points[-1, 1] == pytest.approx(0.5)
    assert c.increase == pytest.approx(c.chord, abs=1e-12)
    assert curve_invariants(c) == (True, True)
    rep = straightness_audit(c, 2.0, 0.0, RELEASE_C)
    assert not rep.violated and rep.geometry_ok
    assert rep.max_deviation <= 1e-12


def test_vortex_radial_curve(vortex_grad):
    eps = 0.02
    c = trace_curve(vortex_grad, (0.0, 0.9), 0.5, 2.0)
    # grad u_eps = -x/|x| away from the core: straight in toward the origin
    assert c.stop_reason == STOP_MODULUS
    assert np.abs(c.points[:, 0]).max() <= 1e-12
    assert math.hypot(*c.points[-1]) <= eps
    assert c.chord - eps <= c.increase <= c.chord + 1e-6
    assert curve_invariants(c) == (True, True)
    rep = straightness_audit(c, 2.0, 0.01, RELEASE_C)
    assert not rep.violated and rep.geometry_ok


def test_jump_line_start_stops_immediately(grid, jump_spec):
    grad = gradient_of(jump_field(grid, jump_spec), 0.05)
    c = trace_curve(grad, (0.0, 0.1), 0.6, 1.0)
    assert c.stop_reason == STOP_MODULUS
    assert len(c.t) == 1
    # the line sits midway between node columns: |m_eps| = 1/2 exactly
    assert c.modulus[0] == pytest.approx(0.5, abs=1e-12)


def test_trace_rejects(grid):
    grad = gradient_of(constant_field(grid, (1.0, 0.0)), 0.04)
    with pytest.raises(ConfigurationError):
        trace_curve(grad, (5.0, 0.0), 0.5, 1.0)
    with pytest.raises(ConfigurationError):
        trace_curve(grad, (0.0, 0.0), 0.5, 1.0, dt=0.02)  # dt > eps/4
    with pytest.raises(ConfigurationError):
        trace_curve(grad, (0.0, 0.0), 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        trace_curve(grad, (0.0, 0.0), 0.5, 0.0)
    plain = VectorField(grad.grid, grad.values, grad.mask)
    with pytest.raises(ConfigurationError):
        trace_curve(plain, (0.0, 0.0), 0.5, 1.0)


def test_trace_leaves_window(grid):
    grad = gradient_of(constant_field(grid, (1.0, 0.0)), 0.04)
    win = Disk((0.0, 0.0), 0.3)
    c = trace_curve(grad, (0.0, 0.0), 0.5, 2.0, window=win)
    assert c.stop_reason == STOP_LEFT
    cut = truncate_to_window(c, win)
    assert math.hypot(*cut.points[-1]) == pytest.approx(0.3, abs=1e-12)
    assert cut.increase == pytest.approx(0.3, abs=1e-12)


def test_backward_batch_matches_reversed_forward(vortex_grad):
    seeds = [(0.3, 0.4), (-0.5, 0.2), (0.1, -0.6)]
    fwd = trace_batch(vortex_grad, seeds, 0.5, 0.2, 0.0025, 0.02)
    bwd = trace_batch(vortex_grad, seeds, 0.5, 0.2, 0.0025, 0.02, backward=True)
    # |m_eps| falls short of 1 by O((eps/r)^2), hence the 1e-3 tolerance
    for f, b, s in zip(fwd, bwd, seeds):
        r0 = math.hypot(*s)
        assert math.hypot(*f.points[-1]) == pytest.approx(r0 - 0.2, abs=1e-3)
        assert math.hypot(*b.points[-1]) == pytest.approx(r0 + 0.2, abs=1e-3)
        assert f.increase == pytest.approx(0.2, abs=1e-3)
        assert b.increase == pytest.approx(-0.2, abs=1e-3)
        # distance is int |m_eps| dt, the increase int |m_eps|^2 dt
        assert f.increase <= r0 - math.hypot(*f.points[-1]) <= f.increase + 1e-4
        assert curve_invariants(b) == (True, True)


@settings(max_examples=15, deadline=None)
@given(x=st.floats(-0.8, 0.8), y=st.floats(-0.8, 0.8))
def test_curve_invariants_hold_on_vortex(vortex_grad, x, y):
    if math.hypot(x, y) < 0.1 or math.hypot(x, y) > 0.85:
        return
    c = trace_curve(vortex_grad, (x, y), 0.5, 0.5)
    speed_ok, monotone_ok = curve_invariants(c)
    assert speed_ok and monotone_ok
    assert c.increase <= c.chord + 1e-6


def test_delta_formula_examples():
    assert delta_exponents(2.0) == pytest.approx((1 / 6, 1 / 12, 11 / 12))
    assert delta_formula(2.0, 1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0)
    ex = [delta_exponents(p) for p in (2.0, 10.0, 100.0)]
    for k, limit in enumerate((1 / 9, 1 / 9, 1.0)):
        dist = [abs(e[k] - limit) for e in ex]
        assert dist[0] > dist[1] > dist[2]
    assert ex[0][0] > ex[1][0] > ex[2][0] > 1 / 9
    assert ex[0][1] < ex[1][1] < ex[2][1] < 1 / 9


@settings(max_examples=30, deadline=None)
@given(
    p=st.floats(1.1, 50),
    nu=st.floats(0.01, 10),
    c0=st.floats(0.1, 1),
    eps=st.floats(0.001, 1),
    T=st.floats(0.01, 5),
    C=st.floats(0.01, 5),
)
def test_delta_formula_scaling(p, nu, c0, eps, T, C):
    a, b, c = delta_exponents(p)
    d = delta_formula(p, nu, c0, eps, T, C)
    assert d == pytest.approx(C * (nu / c0**2) ** a * eps**b * T**c, rel=1e-12)
    assert delta_formula(p, nu, c0, eps, T, 2 * C) == pytest.approx(2 * d, rel=1e-12)


@pytest.mark.parametrize(
    "args",
    [(1.0, 1, 1, 1, 1, 1), (2.0, 1, 0.0, 1, 1, 1), (2.0, 1, 1, 2.0, 1, 1), (2.0, 1, 1, 1, 0.0, 1), (2.0, -1, 1, 1, 1, 1)],
)
def test_delta_formula_rejects(args):
    with pytest.raises(ConfigurationError):
        delta_formula(*args)


def test_zigzag_is_violated():
    z = zigzag_curve()
    assert z.chord == pytest.approx(0.5)
    assert z.increase == pytest.approx(0.25)
    rep = straightness_audit(z, 2.0, 0.1, RELEASE_C)
    assert rep.violated
    assert rep.required_C > RELEASE_C


def test_required_constant_is_tight():
    z = zigzag_curve()
    nu = 0.1
    c = calibrate_constant([z], 2.0, nu)
    assert not straightness_audit(z, 2.0, nu, c * (1 + 1e-6)).violated
    assert straightness_audit(z, 2.0, nu, c * (1 - 1e-3)).violated
    assert required_constant(1.0, 1.0, 0.0, 0.0, 1.0) == 0.0
    assert required_constant(1.0, 0.5, 0.0, 0.0, 1.0) == math.inf


def test_segment_distance():
    pts = np.array([[0.0, 1.0], [2.0, 0.0], [-1.0, 0.0], [0.5, -0.25]])
    np.testing.assert_allclose(segment_distance(pts, (0.0, 0.0), (1.0, 0.0)), [1.0, 1.0, 1.0, 0.25])


def test_maximal_curve_constant(grid):
    grad = gradient_of(constant_field(grid, (1.0, 0.0)), 0.04)
    mc = maximal_curve_endpoints(grad, (0.0, 0.0), 0.5, 0.5)
    assert np.hypot(*(mc.X - mc.Y)) == pytest.approx(1.0, abs=1e-9)
    assert mc.increase == pytest.approx(1.0, abs=1e-9)
    assert mc.duration <= 2 * 0.5 / 0.5**2


def test_maximal_curve_vortex(vortex_grad):
    mc = maximal_curve_endpoints(vortex_grad, (0.75, 0.0), 0.2, 0.5)
    np.testing.assert_allclose(mc.X, [0.95, 0.0], atol=1e-9)
    np.testing.assert_allclose(mc.Y, [0.55, 0.0], atol=1e-9)
    assert mc.increase == pytest.approx(0.4, abs=0.02)


def test_maximal_curve_slow_field_time_bound(grid):
    # |grad| = 0.55, just above c0 = 0.5
    c0 = 0.5
    g = grid
    slow = MollifiedField(g, np.broadcast_to([0.0, 0.55], g.shape + (2,)), g.mask, epsilon=0.04)
    mc = maximal_curve_endpoints(slow, (0.0, 0.0), 0.3, c0)
    assert mc.duration <= 2 * 0.3 / c0**2
    assert mc.duration == pytest.approx(0.6 / 0.55, abs=1e-9)
    assert mc.increase == pytest.approx(0.55 * 0.6, abs=1e-9)


def test_maximal_curve_stalls(vortex_grad):
    with pytest.raises(NumericalFailure):
        maximal_curve_endpoints(vortex_grad, (0.005, 0.005), 0.3, 0.5)


def test_strip_cross_symmetric(bc_mollified):
    cr = strip_cross(bc_mollified, StripSpec(0.6, 0.8, 0.02, alpha_p(2.0)), 0.0)
    np.testing.assert_allclose(cr.entry, [0.0, 0.8], atol=1e-9)
    np.testing.assert_allclose(cr.exit, [0.0, 0.6], atol=1e-9)
    assert cr.increase == pytest.approx(0.2, abs=1e-3)
    assert cr.all_top_to_bottom and cr.xi1_monotone and cr.xi2_monotone


def test_strip_cross_radial_map(bc_mollified):
    eps = 0.02
    cr = strip_cross(bc_mollified, StripSpec(0.6, 0.8, 0.02, alpha_p(2.0)), 0.3)
    assert cr.exit[1] == pytest.approx(0.6, abs=1e-9)
    assert cr.exit[0] == pytest.approx(0.3 * 0.6 / 0.8, abs=eps)
    # the exact radial image of the actual entry point
    assert cr.exit[0] == pytest.approx(cr.entry[0] * 0.6 / cr.entry[1], abs=1e-4)
    assert cr.radial_error <= eps
    assert curve_invariants(cr.curve) == (True, True)
    assert cr.increase == pytest.approx(math.hypot(*cr.entry) - math.hypot(*cr.exit), abs=1e-3)


def test_strip_cross_rejects_thin_strip(bc_mollified):
    with pytest.raises(ConfigurationError, match="too thin"):
        strip_cross(bc_mollified, StripSpec(0.6, 0.61, 1.0, alpha_p(2.0)), 0.0)
    with pytest.raises(ConfigurationError):
        strip_cross(bc_mollified, StripSpec(0.6, 0.8, 0.02, alpha_p(2.0)), 0.7)


def test_strip_cross_modulus_precondition():
    # a vortex core inside the strip drives |m_eps| to zero there
    g = shifted_grid(2.2, 0.02)
    me = mollify(vortex_field(g, (0.0, 0.5)), cone_kernel(0.08))
    with pytest.raises(PreconditionError, match="< 1/2"):
        strip_cross(me, StripSpec(0.3, 0.7, 0.02, alpha_p(2.0)), 0.0)


def test_strip_spec_rejects():
    with pytest.raises(ConfigurationError):
        StripSpec(0.8, 0.6, 1.0, 0.1)
    with pytest.raises(ConfigurationError):
        StripSpec(0.1, 0.5, 0.0, 0.1)


def test_bc_exponents():
    assert BC_Q_MIN == pytest.approx(5.876329336, abs=1e-9)
    assert alpha_p(2.0) == pytest.approx(1 / 24)
    assert bc_delta(6.0) == pytest.approx(1 / 48)
    check_bc_exponent(6.0)
    check_bc_exponent(5.9)
    for q in (5.0, BC_Q_MIN, 6.5):
        with pytest.raises(ConfigurationError):
            check_bc_exponent(q)


def test_bc_experiment_vortex(bc_field):
    eps = 0.04
    r = bc_experiment(bc_field, eps, 6.0)
    assert r.delta == pytest.approx(1 / 48)
    assert r.strips and len(r.crossings) == len(r.strips)
    assert all(c.all_top_to_bottom for c in r.crossings)
    # the chained crossings certify a lower bound on sup u_eps
    assert 0 < r.lower_bound <= r.sup_u
    assert r.sup_u >= 0.95
    assert r.c_fit == pytest.approx((1 - r.lower_bound) / eps ** (1 / 48))
    assert r.csv_row()[:2] == [eps, 6.0]


def test_bc_experiment_rejects_q5(bc_field):
    with pytest.raises(ConfigurationError, match="outside the admissible range"):
        bc_experiment(bc_field, 0.04, 5.0)


def test_curve_csv(grid):
    grad = gradient_of(constant_field(grid, (1.0, 0.0)), 0.04)
    c = trace_curve(grad, (0.0, 0.0), 0.5, 0.02)
    lines = c.to_csv().splitlines()
    assert lines[0] == "t,x,y,u_eps,modulus"
    assert len(lines) == 1 + len(c.t)


def test_curve_invariants_detect_fast_step():
    t = np.array([0.0, 0.01])
    pts = np.array([[0.0, 0.0], [0.0, 0.02]])
    c = Curve(t, pts, np.array([0.0, 0.02]), np.ones(2), 0.04, 0.5, 0.01, STOP_TIME)
    assert curve_invariants(c) == (False, True)
    c = Curve(t, pts / 2, np.array([0.0, 0.001]), np.ones(2), 0.04, 0.5, 0.01, STOP_TIME)
    assert curve_invariants(c) == (True, False)
