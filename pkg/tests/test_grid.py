import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eikolab.errors import ConfigurationError, FormatError
from eikolab.grid import (
    Annulus,
    Disk,
    Grid2,
    Rectangle,
    ScalarField,
    UnitVectorField,
    VectorField,
    bilinear,
    cell_weights,
    crop,
    make_grid,
    read_field,
    write_field,
)
from eikolab.solutions import constant_field, vortex_field


def test_make_grid_disk_three_nodes():
    g = make_grid(Disk((0.0, 0.0), 1.0), 3)
    assert g.origin == (-1.0, -1.0)
    assert g.dx == g.dy == 1.0
    assert (g.nx, g.ny) == (3, 3)
    np.testing.assert_array_equal(g.x, [-1.0, 0.0, 1.0])


def test_make_grid_rectangle_aspect():
    g = make_grid(Rectangle((0.0, 0.0), (2.0, 1.0)), 5)
    assert g.dx == g.dy == 0.5
    assert (g.nx, g.ny) == (5, 3)


def test_make_grid_padding():
    g = make_grid(Disk((0.0, 0.0), 1.0), 2, padding=1.0)
    assert g.origin == (-2.0, -2.0)
    assert g.x[-1] == 2.0 and g.y[-1] == 2.0


@pytest.mark.parametrize("n,pad", [(1, 0.0), (0, 0.0), (5, -0.1)])
def test_make_grid_rejects(n, pad):
    with pytest.raises(ConfigurationError):
        make_grid(Disk((0.0, 0.0), 1.0), n, padding=pad)


def test_domain_invariants():
    with pytest.raises(ConfigurationError):
        Disk((0, 0), 0.0)
    with pytest.raises(ConfigurationError):
        Annulus((0, 0), 0.5, 0.5)
    with pytest.raises(ConfigurationError):
        Rectangle((0, 0), (1.0, 0.0))
    with pytest.raises(ConfigurationError):
        Grid2(1, 4, (0, 0), (1, 1))


def test_disk_mask():
    g = make_grid(Disk((0.0, 0.0), 1.0), 21)
    X, Y = g.mesh()
    np.testing.assert_array_equal(g.mask, np.hypot(X, Y) <= 1.0 + 1e-12)


@given(nx=st.integers(2, 30), ny=st.integers(2, 30), data=st.data())
def test_index_bijection(nx, ny, data):
    g = Grid2(nx, ny, (0.3, -1.0), (0.1, 0.1))
    i = data.draw(st.integers(0, nx - 1))
    j = data.draw(st.integers(0, ny - 1))
    k = g.index(i, j)
    assert k == j * nx + i
    assert g.ij(k) == (i, j)
    assert g.nearest(g.node(i, j)) == (i, j)


def test_unit_field_contract():
    g = Grid2(3, 3, (0, 0), (1, 1))
    with pytest.raises(ConfigurationError):
        UnitVectorField(g, np.full((3, 3, 2), 0.5), np.ones((3, 3), bool))


def test_cell_weights_integrate_rectangle():
    g = make_grid(Rectangle((0.0, 0.0), (2.0, 1.0)), 41)
    w = cell_weights(np.ones(g.shape, bool), g.dx, g.dy)
    assert w.sum() == pytest.approx(2.0, rel=1e-12)
    X, Y = g.mesh()
    # bilinear functions are integrated exactly by the trapezoid rule
    assert np.sum(w * X * Y) == pytest.approx(1.0, rel=1e-12)


def test_bilinear_exact_on_bilinear_functions():
    g = Grid2(6, 5, (-1.0, 0.0), (0.5, 0.5))
    X, Y = g.mesh()
    vals = 1 + 2 * X - Y + 0.5 * X * Y
    pts = np.array([[-0.8, 0.3], [0.9, 1.7], [1.5, 2.0]])
    out, ok = bilinear(g, vals, np.ones(g.shape, bool), pts)
    assert ok.all()
    expect = 1 + 2 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 0] * pts[:, 1]
    np.testing.assert_allclose(out, expect, atol=1e-13)
    _, ok = bilinear(g, vals, np.ones(g.shape, bool), [[5.0, 0.0]])
    assert not ok[0]


def test_crop_keeps_values():
    g = make_grid(Rectangle((-1.0, -1.0), (2.0, 2.0)), 21)
    m = vortex_field(g, (0.05, 0.05))
    c = crop(m, (-0.5, -0.5, 0.5, 0.5))
    assert isinstance(c, UnitVectorField)
    assert (c.grid.nx, c.grid.ny) == (11, 11)
    assert c.grid.origin == pytest.approx((-0.5, -0.5))
    np.testing.assert_array_equal(c.values, m.values[5:16, 5:16])


def test_roundtrip_constant(tmp_path):
    g = Grid2(4, 4, (0.0, 0.0), (0.25, 0.25))
    m = constant_field(g, (0.6, 0.8))
    write_field(m, tmp_path / "c.eikf")
    back = read_field(tmp_path / "c.eikf")
    assert isinstance(back, UnitVectorField)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, m.values)


def test_roundtrip_vortex_with_mask(tmp_path):
    g = make_grid(Disk((0.0, 0.0), 1.0), 64)
    m = vortex_field(g, (0.013, -0.02))
    write_field(m, tmp_path / "v.eikf")
    back = read_field(tmp_path / "v.eikf")
    np.testing.assert_array_equal(back.mask, m.mask)
    assert np.abs(back.values - m.values).max() <= 1e-9


def test_roundtrip_scalar(tmp_path):
    g = Grid2(5, 3, (0.0, 0.0), (1.0, 1.0))
    rng = np.random.default_rng(3)
    mask = rng.random(g.shape) > 0.3
    f = ScalarField(g, rng.normal(size=g.shape), mask)
    write_field(f, tmp_path / "s.eikf")
    back = read_field(tmp_path / "s.eikf")
    assert isinstance(back, ScalarField)
    np.testing.assert_array_equal(back.mask, mask)
    np.testing.assert_array_equal(back.values, f.values)


@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_roundtrip_any_mask(tmp_path_factory, data):
    nx = data.draw(st.integers(2, 6))
    ny = data.draw(st.integers(2, 6))
    bits = data.draw(st.lists(st.booleans(), min_size=nx * ny, max_size=nx * ny))
    theta = data.draw(st.lists(st.floats(-math.pi, math.pi), min_size=nx * ny, max_size=nx * ny))
    g = Grid2(nx, ny, (0.0, 0.0), (0.5, 0.5))
    th = np.array(theta).reshape(g.shape)
    v = np.stack([np.cos(th), np.sin(th)], axis=-1)
    f = VectorField(g, v, np.array(bits).reshape(g.shape))
    path = tmp_path_factory.mktemp("rt") / "f.eikf"
    write_field(f, path)
    back = read_field(path)
    np.testing.assert_array_equal(back.mask, f.mask)
    assert np.abs(back.values - f.values).max() <= 1e-12


def test_row_count_mismatch(tmp_path):
    rows = ["EIKF1 vector", "4 4", "0 0 1 1"] + ["1 0 1 0 1 0 1 0"] * 3
    p = tmp_path / "bad.eikf"
    p.write_text("\n".join(rows) + "\n")
    with pytest.raises(FormatError):
        read_field(p)


@pytest.mark.parametrize(
    "lines,lineno",
    [
        (["EIKF2 vector", "2 2", "0 0 1 1", "1 0 1 0", "1 0 1 0"], 1),
        (["EIKF1 vector", "2 x", "0 0 1 1", "1 0 1 0", "1 0 1 0"], 2),
        (["EIKF1 vector", "2 2", "0 0 1 1", "1 0 1 0", "1 0 inf 0"], 5),
        (["EIKF1 vector", "2 2", "0 0 1 1", "1 0 1", "1 0 1 0"], 4),
    ],
)
def test_format_errors_carry_line(tmp_path, lines, lineno):
    p = tmp_path / "bad.eikf"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as exc:
        read_field(p)
    assert exc.value.line == lineno
