import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eikolab import _stencil
from eikolab.errors import ConfigurationError, ResolutionError
from eikolab.grid import Rectangle, ScalarField, VectorField, make_grid
from eikolab.mollify import (
    CONE_HEIGHT,
    FFT_MIN_TAPS,
    Kernel,
    cone_kernel,
    convolve,
    defect_moments,
    grad_potential,
    gradient_norm,
    mollify,
)
from eikolab.solutions import constant_field, jump_field, vortex_field

# Frozen oracle: for the jump with states (1/2, +-sqrt3/2) the modulus of the
# mollified field depends on the distance t to the line through the cone
# kernel's 1D marginal; integrating (1 - |m_eps|)^(3/2) over t in eps units
# with scipy.integrate.quad and dividing by 3 sqrt3 (the |D^h m|^3 rate per
# unit length) gives the limit of ratio32.
JUMP_RATIO32 = 0.04504529266938506

# Frozen oracle: dblquad of the cone kernel against i x/|x| around (0.5, 0)
# with eps = 0.05 gives m_eps = (0, 0.99924933), hence grad u_eps = (-0.99924933, 0).
VORTEX_GRAD_X = -0.9992493287236864


def box(corner=(-1.0, -1.0), size=2.0, n=81):
    return make_grid(Rectangle(corner, (size, size)), n)


def test_cone_kernel_audit():
    audit = cone_kernel(0.1).check()
    assert audit["support_ok"]
    assert audit["mass"] == pytest.approx(1.0, abs=1e-6)
    assert audit["max"] == pytest.approx(3 / math.pi)
    assert audit["max"] <= 1.0
    assert audit["min"] == 0.0
    assert audit["max_slope"] == pytest.approx(3 / math.pi, rel=1e-9)
    assert CONE_HEIGHT == pytest.approx(0.954929658551372)


def test_kernel_scaling_and_support():
    k = cone_kernel(0.2)
    assert k((0.0, 0.0)) == pytest.approx(3 / math.pi / 0.04)
    assert k((0.2, 0.0)) == 0.0
    assert k((0.1, 0.0)) == pytest.approx(0.5 * 3 / math.pi / 0.04)


@pytest.mark.parametrize("eps", [0.0, -0.1])
def test_kernel_rejects_non_positive(eps):
    with pytest.raises(ConfigurationError):
        Kernel(eps)


@settings(max_examples=30, deadline=None)
@given(ratio=st.floats(2.0, 12.0))
def test_stencil_is_partition_of_unity(ratio):
    offs, w = cone_kernel(ratio * 0.01).stencil(0.01)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(w > 0)
    # symmetric under z -> -z
    lookup = {tuple(o): x for o, x in zip(offs.tolist(), w)}
    for o, x in lookup.items():
        assert lookup[(-o[0], -o[1])] == pytest.approx(x, rel=1e-14)


def test_mollify_constant_scalar_is_one():
    g = box(n=61)
    one = ScalarField(g, np.ones(g.shape), g.mask)
    out = mollify(one, cone_kernel(0.2))
    assert out.mask.any()
    np.testing.assert_allclose(out.values[out.mask], 1.0, atol=1e-14)


def test_mollify_constant_field_unchanged():
    g = box(n=61)
    m = constant_field(g, (0.6, 0.8))
    me = mollify(m, cone_kernel(0.1))
    np.testing.assert_allclose(me.values[me.mask], np.tile([0.6, 0.8], (me.mask.sum(), 1)), atol=1e-14)
    assert me.epsilon == 0.1


def test_mollify_drops_nodes_near_boundary():
    g = box(n=41)
    me = mollify(constant_field(g, (1.0, 0.0)), cone_kernel(0.2))
    # taps at |z| = eps carry zero weight, so the dropped margin is one node thinner
    r = int(round(0.2 / g.dx)) - 1
    assert not me.mask[:r, :].any() and not me.mask[:, -r:].any()
    assert me.mask[r:-r, r:-r].all()


def test_mollify_jump_far_from_line(jump_spec):
    g = box(n=81)
    eps = 0.1
    me = mollify(jump_field(g, jump_spec), cone_kernel(eps))
    X, _ = g.mesh()
    far = me.mask & (np.abs(X) > eps + 1e-9)
    m = jump_field(g, jump_spec)
    np.testing.assert_allclose(me.values[far], m.values[far], atol=1e-14)


def test_mollify_jump_on_line(jump_spec):
    # half-cell shifted grid: the line runs midway between two node columns,
    # and by symmetry their average is the continuum value on the line
    n = 80
    g = box(n=n)
    me = mollify(jump_field(g, jump_spec), cone_kernel(0.1))
    j = n // 2
    avg = 0.5 * (me.values[j, n // 2 - 1] + me.values[j, n // 2])
    np.testing.assert_allclose(avg, [0.5, 0.0], atol=1e-12)
    assert math.hypot(*avg) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("n", [81, 161])
def test_mollify_jump_node_on_line_bias(n, jump_spec):
    # a node on the line puts the whole kernel column through it on the plus
    # side; that column carries (3/pi) dx/eps of the mass
    g = box(n=n)
    eps = 0.1
    me = mollify(jump_field(g, jump_spec), cone_kernel(eps))
    i, j = g.nearest((0.0, 0.0))
    assert me.values[j, i, 0] == pytest.approx(0.5, abs=1e-12)
    expected = math.sqrt(3) / 2 * (3 / math.pi) * g.dx / eps
    assert me.values[j, i, 1] == pytest.approx(expected, rel=0.01)


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    ratio=st.sampled_from([2.0, 3.5, 9.0]),
)
def test_mollify_is_linear(seed, a, b, ratio):
    g = box(n=31)
    rng = np.random.default_rng(seed)
    f = VectorField(g, rng.normal(size=g.shape + (2,)), g.mask)
    h = VectorField(g, rng.normal(size=g.shape + (2,)), g.mask)
    k = cone_kernel(ratio * g.dx)
    lhs = mollify(VectorField(g, a * f.values + b * h.values, g.mask), k)
    rhs = a * mollify(f, k).values + b * mollify(h, k).values
    np.testing.assert_allclose(lhs.values, rhs, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), ratio=st.floats(2.0, 6.0))
def test_mollified_unit_field_has_modulus_at_most_one(seed, ratio):
    g = box(n=25)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * math.pi, g.shape)
    m = VectorField(g, np.stack([np.cos(theta), np.sin(theta)], axis=-1), g.mask)
    me = mollify(m, cone_kernel(ratio * g.dx))
    assert np.all(me.modulus()[me.mask] <= 1.0 + 1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), holes=st.integers(0, 40))
def test_fft_path_matches_shifted_sums(seed, holes):
    # the cone stencil at eps = 9 dx has more than FFT_MIN_TAPS taps
    g = box(n=40)
    rng = np.random.default_rng(seed)
    mask = g.mask.copy()
    mask[rng.integers(0, 40, holes), rng.integers(0, 40, holes)] = False
    values = rng.normal(size=g.shape)
    k = cone_kernel(9 * g.dx)
    offs, w = k.stencil(g.dx)
    assert len(offs) >= FFT_MIN_TAPS
    fast, v_fast = convolve(values, mask, k, g.dx)
    slow, v_slow = _stencil.shift_sum(values, mask, -offs, w)
    np.testing.assert_array_equal(v_fast, v_slow)
    np.testing.assert_allclose(fast[v_fast], slow[v_slow], atol=1e-12)


def test_mollify_resolution_guard():
    g = box(n=41)
    with pytest.raises(ResolutionError):
        mollify(constant_field(g, (1.0, 0.0)), cone_kernel(1.5 * g.dx))


def test_grad_potential_examples():
    g = box(n=11)
    for v, expected in (((1.0, 0.0), (0.0, 1.0)), ((0.5, 0.0), (0.0, 0.5))):
        f = VectorField(g, np.broadcast_to(v, g.shape + (2,)), g.mask)
        np.testing.assert_allclose(grad_potential(f).values[3, 4], expected)


def test_grad_potential_of_mollified_vortex():
    g = box(corner=(0.0, -0.5), size=1.0, n=201)
    gp = grad_potential(mollify(vortex_field(g), cone_kernel(0.05)))
    i, j = g.nearest((0.5, 0.0))
    np.testing.assert_allclose(gp.values[j, i], [-1.0, 0.0], atol=1e-3)
    assert gp.values[j, i, 0] == pytest.approx(VORTEX_GRAD_X, abs=1e-5)


def test_gradient_norm_of_linear_field():
    g = box(n=21)
    X, Y = g.mesh()
    f = VectorField(g, np.stack([2 * X + Y, -X], axis=-1), g.mask)
    gn = gradient_norm(f)
    np.testing.assert_allclose(gn.values[gn.mask], math.sqrt(6.0), rtol=1e-12)
    assert not gn.mask[0].any()


def test_defect_moments_constant_is_zero():
    g = box(n=81)
    d = defect_moments(constant_field(g, (0.6, 0.8)), 0.1, 0.3, [(0.1, 0.0), (0.0, 0.05)])
    assert d.lhs32 == pytest.approx(0.0, abs=1e-20)
    assert d.lhs_grad3 == pytest.approx(0.0, abs=1e-20)
    assert d.rhs == 0.0


def test_defect_moments_jump(jump_spec):
    g = box(corner=(-1.2, -1.2), size=2.4, n=481)
    m = jump_field(g, jump_spec)
    ratios = []
    for eps in (0.02, 0.04, 0.08):
        d = defect_moments(m, eps, 0.5, [(eps, 0.0), (eps / 2, 0.0), (0.0, eps)])
        # the line meets B_1 in a chord of length 2
        assert d.rhs == pytest.approx(3 * math.sqrt(3) * 2, rel=0.01)
        assert d.best_shift == (eps, 0.0)
        assert d.ratio32 == pytest.approx(JUMP_RATIO32, rel=0.03)
        ratios.append((d.ratio32, d.ratio_grad3))
    r32 = [r[0] for r in ratios]
    rg = [r[1] for r in ratios]
    assert max(r32) / min(r32) < 1.1
    assert max(rg) / min(rg) < 1.2


def test_defect_moments_vortex_bounded():
    g = box(corner=(-0.2, -0.8), size=1.6, n=321)
    m = vortex_field(g)
    r32, rg = [], []
    for eps in (0.01, 0.02, 0.04):
        d = defect_moments(m, eps, 0.25, [(eps, 0.0), (0.0, eps)], center=(0.5, 0.0))
        r32.append(d.ratio32)
        rg.append(d.ratio_grad3)
    assert max(r32) < 0.1 and max(rg) < 3.0
    # no growth as eps halves
    assert r32[0] <= 1.5 * r32[-1] and rg[0] <= 1.5 * rg[-1]


def test_defect_moments_rejects():
    g = box(n=81)
    m = constant_field(g, (1.0, 0.0))
    with pytest.raises(ConfigurationError):
        defect_moments(m, 0.2, 0.1, [(0.1, 0.0)])
    with pytest.raises(ConfigurationError):
        defect_moments(m, 0.1, 0.3, [(0.2, 0.0)])
    with pytest.raises(ConfigurationError):
        defect_moments(m, 0.1, 0.3, [])
