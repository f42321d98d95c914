"""Canonical weak solutions of the eikonal equation and their potentials."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _stencil
from .errors import ConfigurationError, NumericalFailure, ResolutionError
from .grid import UNIT_TOL, Grid2, ScalarField, UnitVectorField, VectorField


def rot(v: np.ndarray) -> np.ndarray:
    """Rotation by +pi/2 on the last axis: ``i (a, b) = (-b, a)``."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _unit(direction, what="direction") -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    if d.shape != (2,) or abs(math.hypot(*d) - 1.0) > UNIT_TOL:
        raise ConfigurationError(f"{what} {tuple(d)} is not a unit vector")
    return d


@dataclass(frozen=True)
class JumpSpec:
    """Two-state field ``m_plus`` on ``{x . normal > 0}``, ``m_minus`` elsewhere."""

    m_plus: tuple[float, float]
    m_minus: tuple[float, float]
    normal: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        mp = _unit(self.m_plus, "m_plus")
        mm = _unit(self.m_minus, "m_minus")
        n = _unit(self.normal, "normal")
        if abs(mp @ n - mm @ n) > 1e-12:
            raise ConfigurationError(
                "jump is not divergence-free: normal components "
                f"{mp @ n:.6g} and {mm @ n:.6g} differ"
            )


@dataclass(frozen=True, eq=False)
class Potential:
    u: ScalarField
    lipschitz_tolerance: float
    max_loop_residual: float
    residual_location: tuple[float, float] | None


def constant_field(grid: Grid2, direction) -> UnitVectorField:
    d = _unit(direction)
    values = np.broadcast_to(d, grid.shape + (2,))
    return UnitVectorField(grid, values, grid.mask)


def vortex_field(grid: Grid2, center=(0.0, 0.0)) -> UnitVectorField:
    """``m(x) = i (x - c) / |x - c|``; a node sitting on ``c`` is masked out."""
    X, Y = grid.mesh()
    dxs = X - center[0]
    dys = Y - center[1]
    r = np.hypot(dxs, dys)
    singular = r <= 1e-12 * max(grid.dx, grid.dy)
    safe = np.where(singular, 1.0, r)
    values = np.stack([np.where(singular, 1.0, -dys / safe), np.where(singular, 0.0, dxs / safe)], axis=-1)
    values = values / np.hypot(values[..., 0], values[..., 1])[..., None]
    return UnitVectorField(grid, values, grid.mask & ~singular)


def jump_field(grid: Grid2, spec: JumpSpec) -> UnitVectorField:
    # tie-break: nodes on the line take m_plus
    X, Y = grid.mesh()
    side = X * spec.normal[0] + Y * spec.normal[1]
    plus = side >= -1e-12 * grid.dx
    values = np.where(plus[..., None], np.asarray(spec.m_plus), np.asarray(spec.m_minus))
    return UnitVectorField(grid, values, grid.mask)


def bc_extended_field(grid: Grid2, inner: UnitVectorField | None = None, cover_radius: float = 4.0) -> UnitVectorField:
    """Vortex ``i x/|x|`` outside the unit disk, ``inner`` (or the vortex) inside.

    ``inner`` must live on the same lattice as ``grid`` (it may be a sub-box).
    """
    if not grid.covers_box(-cover_radius, -cover_radius, cover_radius, cover_radius):
        raise ConfigurationError(f"grid does not cover the disk of radius {cover_radius}")
    m = vortex_field(grid)
    if inner is None:
        return m
    values = np.array(m.values)
    mask = np.array(m.mask)
    X, Y = grid.mesh()
    inside = np.hypot(X, Y) < 1.0
    ig = inner.grid
    if abs(ig.dx - grid.dx) > 1e-12 * grid.dx or abs(ig.dy - grid.dy) > 1e-12 * grid.dy:
        raise ConfigurationError("inner field must share the grid spacing")
    oi = (ig.origin[0] - grid.origin[0]) / grid.dx
    oj = (ig.origin[1] - grid.origin[1]) / grid.dy
    if abs(oi - round(oi)) > 1e-6 or abs(oj - round(oj)) > 1e-6:
        raise ConfigurationError("inner field is not aligned with the grid lattice")
    oi, oj = int(round(oi)), int(round(oj))
    jj, ii = np.nonzero(inside)
    li, lj = ii - oi, jj - oj
    ok = (li >= 0) & (li < ig.nx) & (lj >= 0) & (lj < ig.ny)
    if not np.all(ok):
        raise ConfigurationError("inner field does not cover the unit disk")
    values[jj, ii] = inner.values[lj, li]
    mask[jj, ii] = inner.mask[lj, li] & grid.mask[jj, ii]
    return UnitVectorField(grid, values, mask)


# ---------------------------------------------------------------------------
# Potential reconstruction
# ---------------------------------------------------------------------------


def _edge_increments(g: np.ndarray, mask: np.ndarray, dx: float, dy: float):
    """Trapezoidal increments of ``u`` along horizontal and vertical grid edges."""
    ex = 0.5 * dx * (g[:, 1:, 0] + g[:, :-1, 0])
    ey = 0.5 * dy * (g[1:, :, 1] + g[:-1, :, 1])
    okx = mask[:, 1:] & mask[:, :-1]
    oky = mask[1:, :] & mask[:-1, :]
    return ex, ey, okx, oky


def _sweep_1d(u, reached, inc, ok):
    """Extend ``reached`` along each row of a 1D run structure.

    Every row is split into runs of consecutive connected nodes; inside a run
    holding at least one reached node, values propagate from the first reached
    node by cumulative trapezoidal sums.
    """
    nrow, ncol = u.shape
    grew = False
    for r in range(nrow):
        rr = reached[r]
        if rr.all() or not rr.any():
            continue
        okr = ok[r]
        # run boundaries: a run breaks where the edge to the next node is unusable
        breaks = np.nonzero(~okr)[0]
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks + 1, [ncol]))
        cum = np.concatenate(([0.0], np.cumsum(np.where(okr, inc[r], 0.0))))
        for s, e in zip(starts, ends):
            seg = rr[s:e]
            if seg.all() or not seg.any():
                continue
            k = s + int(np.argmax(seg))
            base = u[r, k] - cum[k]
            fill = ~seg
            idx = np.arange(s, e)[fill]
            u[r, idx] = base + cum[idx]
            rr[idx] = True
            grew = True
    return grew


def _integrate(g, mask, anchor, anchor_value, dx, dy, horizontal_first):
    ny, nx = mask.shape
    ex, ey, okx, oky = _edge_increments(g, mask, dx, dy)
    u = np.zeros((ny, nx))
    reached = np.zeros((ny, nx), dtype=bool)
    ai, aj = anchor
    u[aj, ai] = anchor_value
    reached[aj, ai] = True
    order = ("x", "y") if horizontal_first else ("y", "x")
    while True:
        grew = False
        for axis in order:
            if axis == "x":
                grew |= _sweep_1d(u, reached, ex, okx)
            else:
                ut, rt = u.T.copy(), reached.T.copy()
                g2 = _sweep_1d(ut, rt, ey.T, oky.T)
                u[:], reached[:] = ut.T, rt.T
                grew |= g2
        if not grew:
            break
    return u, reached


def loop_residuals(gradient: np.ndarray, mask: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Circulation of the trapezoidal edge increments around every grid cell."""
    ex, ey, _, _ = _edge_increments(gradient, mask, dx, dy)
    res = ex[:-1, :] + ey[:, 1:] - ex[1:, :] - ey[:, :-1]
    cells = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    return np.where(cells, res, 0.0)


def reconstruct_potential(
    m: VectorField,
    anchor: tuple[int, int],
    anchor_value: float = 0.0,
    residual_tol: float | None = None,
) -> Potential:
    """Recover ``u`` with ``grad u = i m`` by line integration from ``anchor``.

    ``anchor`` is a node index pair ``(i, j)``.  Values come from the average of
    two sweep orders (horizontal-then-vertical and the transpose); on a convex
    domain these are exactly the two L-shaped paths.
    """
    g = m.grid
    ai, aj = anchor
    if not (0 <= ai < g.nx and 0 <= aj < g.ny) or not m.mask[aj, ai]:
        raise ConfigurationError(f"anchor {anchor} is not a masked-in node")
    grad = rot(m.values)
    u1, r1 = _integrate(grad, m.mask, anchor, anchor_value, g.dx, g.dy, True)
    u2, r2 = _integrate(grad, m.mask, anchor, anchor_value, g.dx, g.dy, False)
    if np.any(m.mask & ~(r1 & r2)):
        raise NumericalFailure("masked region is disconnected from the anchor")
    u = 0.5 * (u1 + u2)
    res = loop_residuals(grad, m.mask, g.dx, g.dy)
    k = int(np.argmax(np.abs(res)))
    jmax, imax = divmod(k, g.nx)
    max_res = float(np.abs(res).max()) if res.size else 0.0
    loc = g.node(imax + 0.5, jmax + 0.5) if max_res > 0 else None
    if residual_tol is None:
        residual_tol = 10 * g.dx * g.dy
    if max_res > residual_tol:
        warnings.warn(
            f"loop residual {max_res:.3e} above {residual_tol:.3e} near {loc}",
            RuntimeWarning,
            stacklevel=2,
        )
    return Potential(ScalarField(g, u, m.mask), 2 * g.dx, max_res, loc)


def lipschitz_excess(p: Potential) -> float:
    """Largest ``|u(a) - u(b)| - |a - b|`` over neighbouring masked-in node pairs."""
    u, mask, g = p.u.values, p.u.mask, p.u.grid
    worst = -np.inf
    for a, b, d in ((1, 0, g.dx), (0, 1, g.dy), (1, 1, math.hypot(g.dx, g.dy)), (1, -1, math.hypot(g.dx, g.dy))):
        diff, ok = _stencil.shift_pair(u, mask, a, b)
        if ok.any():
            worst = max(worst, float(np.abs(diff[ok]).max() - d))
    return worst


# ---------------------------------------------------------------------------
# Weak divergence
# ---------------------------------------------------------------------------


def _cone_gradient_stencil(scale: float, dx: float):
    from .mollify import cone_kernel

    # same support and discrete normalisation as the mollifier
    offs, raw = cone_kernel(scale).raw_stencil(dx)
    norm = 1.0 / raw.sum()
    z = offs * dx
    r = np.hypot(z[:, 0], z[:, 1])
    slope = -(3.0 / math.pi) / scale**3
    safe = np.where(r > 0, r, 1.0)
    gx = np.where(r > 0, slope * z[:, 0] / safe, 0.0) * dx * dx * norm
    gy = np.where(r > 0, slope * z[:, 1] / safe, 0.0) * dx * dx * norm
    return offs, gx, gy


def weak_divergence(m: VectorField, scale: float) -> ScalarField:
    """``x -> -integral m . grad(phi_x)`` with ``phi_x`` the cone bump of radius ``scale`` at x."""
    g = m.grid
    if scale < 2 * max(g.dx, g.dy) * (1 - 1e-12):
        raise ResolutionError(f"test scale {scale} < 2 dx = {2 * g.dx}")
    offs, gx, gy = _cone_gradient_stencil(scale, g.dx)
    px, v1 = _stencil.shift_sum(m.values[..., 0], m.mask, offs, gx)
    py, v2 = _stencil.shift_sum(m.values[..., 1], m.mask, offs, gy)
    return ScalarField(g, -(px + py), v1 & v2)
