"""Uniform 2D grids, sampled fields and the EIKF1 on-disk format.

Storage convention: arrays are indexed ``[j, i]`` (y outer, x inner), so the
flat C-order index of node ``(i, j)`` is ``j * nx + i``.  That is also the
order in which EIKF1 files list their entries.

Nodes outside the domain carry ``mask == False``.  Their in-memory values are
set to zero and must be ignored; in files they are written as ``nan``.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

UNIT_TOL = 1e-12
_GEOM_TOL = 1e-12


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError(f"disk radius must be positive, got {self.radius}")

    def contains(self, x, y):
        cx, cy = self.center
        r = np.hypot(np.asarray(x) - cx, np.asarray(y) - cy)
        return r <= self.radius * (1 + _GEOM_TOL)

    def bbox(self):
        cx, cy = self.center
        return (cx - self.radius, cy - self.radius, cx + self.radius, cy + self.radius)


@dataclass(frozen=True)
class Rectangle:
    corner: tuple[float, float]
    extents: tuple[float, float]

    def __post_init__(self):
        if not (self.extents[0] > 0 and self.extents[1] > 0):
            raise ConfigurationError(f"rectangle extents must be positive, got {self.extents}")

    def contains(self, x, y):
        x0, y0 = self.corner
        lx, ly = self.extents
        x = np.asarray(x)
        y = np.asarray(y)
        tx, ty = _GEOM_TOL * max(lx, 1.0), _GEOM_TOL * max(ly, 1.0)
        return (x >= x0 - tx) & (x <= x0 + lx + tx) & (y >= y0 - ty) & (y <= y0 + ly + ty)

    def bbox(self):
        x0, y0 = self.corner
        return (x0, y0, x0 + self.extents[0], y0 + self.extents[1])


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, float]
    r_in: float
    r_out: float

    def __post_init__(self):
        if not (self.r_out > self.r_in > 0):
            raise ConfigurationError(
                f"annulus needs r_out > r_in > 0, got r_in={self.r_in}, r_out={self.r_out}"
            )

    def contains(self, x, y):
        cx, cy = self.center
        r = np.hypot(np.asarray(x) - cx, np.asarray(y) - cy)
        return (r >= self.r_in * (1 - _GEOM_TOL)) & (r <= self.r_out * (1 + _GEOM_TOL))

    def bbox(self):
        cx, cy = self.center
        return (cx - self.r_out, cy - self.r_out, cx + self.r_out, cy + self.r_out)


Domain = Disk | Rectangle | Annulus


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid2:
    """Uniform node lattice ``(x0 + i dx, y0 + j dy)``.

    ``domain`` only feeds the default :attr:`mask`; it does not take part in
    equality, so a grid read back from disk compares equal to the original.
    """

    nx: int
    ny: int
    origin: tuple[float, float]
    spacing: tuple[float, float]
    domain: Domain | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError(f"grid needs nx, ny >= 2, got {self.nx}x{self.ny}")
        if not (self.spacing[0] > 0 and self.spacing[1] > 0):
            raise ConfigurationError(f"grid spacing must be positive, got {self.spacing}")

    @property
    def dx(self) -> float:
        return self.spacing[0]

    @property
    def dy(self) -> float:
        return self.spacing[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.dy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two ``(ny, nx)`` arrays."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    @property
    def mask(self) -> np.ndarray:
        if self.domain is None:
            return np.ones(self.shape, dtype=bool)
        X, Y = self.mesh()
        return np.asarray(self.domain.contains(X, Y), dtype=bool)

    def node(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + i * self.dx, self.origin[1] + j * self.dy)

    def index(self, i: int, j: int) -> int:
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise IndexError(f"node ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def ij(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.nx * self.ny:
            raise IndexError(index)
        j, i = divmod(index, self.nx)
        return i, j

    def nearest(self, point) -> tuple[int, int]:
        """Indices of the node closest to ``point`` (clamped to the grid)."""
        i = int(round((point[0] - self.origin[0]) / self.dx))
        j = int(round((point[1] - self.origin[1]) / self.dy))
        return min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1)

    def covers_box(self, xmin, ymin, xmax, ymax) -> bool:
        tol = 1e-9 * max(self.dx, self.dy)
        x1 = self.origin[0] + (self.nx - 1) * self.dx
        y1 = self.origin[1] + (self.ny - 1) * self.dy
        return (
            self.origin[0] <= xmin + tol
            and self.origin[1] <= ymin + tol
            and x1 >= xmax - tol
            and y1 >= ymax - tol
        )

    def with_domain(self, domain: Domain | None) -> Grid2:
        return Grid2(self.nx, self.ny, self.origin, self.spacing, domain)


def make_grid(domain: Domain, n: int, padding: float = 0.0) -> Grid2:
    """Square-cell grid with ``n`` nodes along the longer side of the padded bbox."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ConfigurationError(f"n must be an integer >= 2, got {n!r}")
    if padding < 0:
        raise ConfigurationError(f"padding must be non-negative, got {padding}")
    xmin, ymin, xmax, ymax = domain.bbox()
    xmin, ymin, xmax, ymax = xmin - padding, ymin - padding, xmax + padding, ymax + padding
    lx, ly = xmax - xmin, ymax - ymin
    h = max(lx, ly) / (n - 1)

    def count(length):
        k = length / h
        # cover the box, but do not add a node for round-off
        return int(math.ceil(k - 1e-9)) + 1

    nx, ny = (n, count(ly)) if lx >= ly else (count(lx), n)
    return Grid2(nx, ny, (xmin, ymin), (h, h), domain)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid2
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != self.grid.shape or mask.shape != self.grid.shape:
            raise ConfigurationError(
                f"scalar field shape {values.shape}/{mask.shape} != grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values[mask])):
            raise ConfigurationError("scalar field has non-finite values at masked-in nodes")
        values = np.where(mask, values, 0.0)
        object.__setattr__(self, "values", _frozen(values))
        m = mask.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid2
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != self.grid.shape + (2,) or mask.shape != self.grid.shape:
            raise ConfigurationError(
                f"vector field shape {values.shape}/{mask.shape} != grid {self.grid.shape}+(2,)"
            )
        if not np.all(np.isfinite(values[mask])):
            raise ConfigurationError("vector field has non-finite values at masked-in nodes")
        values = np.where(mask[..., None], values, 0.0)
        object.__setattr__(self, "values", _frozen(values))
        m = mask.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    def modulus(self) -> np.ndarray:
        return np.hypot(self.values[..., 0], self.values[..., 1])


@dataclass(frozen=True, eq=False)
class UnitVectorField(VectorField):
    """Vector field with ``| |m| - 1 | <= 1e-12`` at masked-in nodes."""

    def __post_init__(self):
        super().__post_init__()
        dev = np.abs(self.modulus()[self.mask] - 1.0)
        if dev.size and dev.max() > UNIT_TOL:
            raise ConfigurationError(f"field is not unit-modulus (max deviation {dev.max():.3e})")


def crop(f, box):
    """Restrict a field to the nodes inside ``box = (xmin, ymin, xmax, ymax)``."""
    g = f.grid
    xs, ys = g.x, g.y
    tol = 1e-9 * g.dx
    ii = np.nonzero((xs >= box[0] - tol) & (xs <= box[2] + tol))[0]
    jj = np.nonzero((ys >= box[1] - tol) & (ys <= box[3] + tol))[0]
    if ii.size < 2 or jj.size < 2:
        raise ConfigurationError(f"crop box {box} leaves fewer than 2x2 nodes")
    sl = (slice(jj[0], jj[-1] + 1), slice(ii[0], ii[-1] + 1))
    sub = Grid2(ii.size, jj.size, (float(xs[ii[0]]), float(ys[jj[0]])), g.spacing, g.domain)
    if isinstance(f, ScalarField):
        return ScalarField(sub, f.values[sl], f.mask[sl])
    cls = UnitVectorField if type(f) is UnitVectorField else VectorField
    return cls(sub, f.values[sl], f.mask[sl])


# ---------------------------------------------------------------------------
# Quadrature and interpolation
# ---------------------------------------------------------------------------


def cell_weights(mask: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Trapezoidal node weights restricted to cells whose four corners are in ``mask``.

    On a fully masked rectangle these are the tensor trapezoid weights; in
    general they integrate exactly over the union of fully masked-in cells.
    """
    mask = np.asarray(mask, dtype=bool)
    cells = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    count = np.zeros(mask.shape)
    c = cells.astype(float)
    count[:-1, :-1] += c
    count[1:, :-1] += c
    count[:-1, 1:] += c
    count[1:, 1:] += c
    return count * (dx * dy / 4.0)


def bilinear(grid: Grid2, values: np.ndarray, mask: np.ndarray, points) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear interpolation of node data at ``points`` (shape ``(k, 2)``).

    Returns ``(samples, ok)``; ``ok`` is False when the point is off the grid or
    a corner carrying nonzero weight is masked out.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fx = (pts[:, 0] - grid.origin[0]) / grid.dx
    fy = (pts[:, 1] - grid.origin[1]) / grid.dy
    finite = np.isfinite(fx) & np.isfinite(fy)
    eps = 1e-9
    inside = finite & (fx >= -eps) & (fx <= grid.nx - 1 + eps) & (fy >= -eps) & (fy <= grid.ny - 1 + eps)
    fx = np.where(inside, np.clip(fx, 0, grid.nx - 1), 0.0)
    fy = np.where(inside, np.clip(fy, 0, grid.ny - 1), 0.0)
    i0 = np.minimum(np.floor(fx).astype(int), grid.nx - 2)
    j0 = np.minimum(np.floor(fy).astype(int), grid.ny - 2)
    tx = fx - i0
    ty = fy - j0
    w = [(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty]
    corners = [(j0, i0), (j0, i0 + 1), (j0 + 1, i0), (j0 + 1, i0 + 1)]
    extra = values.shape[2:]
    out = np.zeros((pts.shape[0],) + extra)
    ok = inside.copy()
    for wk, (jj, ii) in zip(w, corners):
        ok &= (wk <= 1e-12) | mask[jj, ii]
        out += wk.reshape((-1,) + (1,) * len(extra)) * values[jj, ii]
    return out, ok


# ---------------------------------------------------------------------------
# EIKF1 format
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field(f: ScalarField | VectorField, path) -> None:
    """Write ``f`` as EIKF1 (17 significant digits, so round trips are exact)."""
    g = f.grid
    vector = isinstance(f, VectorField)
    lines = [
        "EIKF1 vector" if vector else "EIKF1 scalar",
        f"{g.nx} {g.ny}",
        " ".join(_fmt(v) for v in (g.origin[0], g.origin[1], g.dx, g.dy)),
    ]
    for j in range(g.ny):
        row = []
        for i in range(g.nx):
            if not f.mask[j, i]:
                row.append("nan nan" if vector else "nan")
            elif vector:
                row.append(f"{_fmt(f.values[j, i, 0])} {_fmt(f.values[j, i, 1])}")
            else:
                row.append(_fmt(f.values[j, i]))
        lines.append(" ".join(row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_floats(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"not a number ({exc})", lineno) from None


def read_field(path) -> ScalarField | VectorField:
    """Read an EIKF1 file.

    Vector files whose masked-in entries are unit within 1e-6 are returned as
    :class:`UnitVectorField` (renormalised when the stored precision is coarser
    than 1e-12); other vector files come back as plain :class:`VectorField`.
    """
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty file", 1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "EIKF1" or head[1] not in ("scalar", "vector"):
        raise FormatError(f"bad header {lines[0]!r}", 1)
    vector = head[1] == "vector"
    if len(lines) < 3:
        raise FormatError("truncated header", len(lines) + 1)
    dims = lines[1].split()
    if len(dims) != 2:
        raise FormatError("expected 'nx ny'", 2)
    try:
        nx, ny = int(dims[0]), int(dims[1])
    except ValueError:
        raise FormatError("nx ny must be integers", 2) from None
    if nx < 2 or ny < 2:
        raise FormatError("nx, ny must be >= 2", 2)
    geo = lines[2].split()
    if len(geo) != 4:
        raise FormatError("expected 'x0 y0 dx dy'", 3)
    x0, y0, dx, dy = _parse_floats(geo, 3)
    if not all(math.isfinite(v) for v in (x0, y0, dx, dy)) or dx <= 0 or dy <= 0:
        raise FormatError("invalid geometry", 3)
    rows = [ln for ln in lines[3:]]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != ny:
        raise FormatError(f"expected {ny} value rows, found {len(rows)}", 3 + min(len(rows), ny) + 1)
    per = 2 if vector else 1
    values = np.zeros((ny, nx, per))
    mask = np.ones((ny, nx), dtype=bool)
    for j, row in enumerate(rows):
        lineno = 4 + j
        tokens = row.split()
        if len(tokens) != nx * per:
            raise FormatError(f"expected {nx * per} entries, found {len(tokens)}", lineno)
        vals = np.array(_parse_floats(tokens, lineno)).reshape(nx, per)
        nan = np.isnan(vals)
        if np.any(nan.any(axis=1) != nan.all(axis=1)):
            raise FormatError("partially masked vector entry", lineno)
        if np.any(np.isinf(vals)):
            raise FormatError("non-finite entry", lineno)
        mask[j] = ~nan[:, 0]
        values[j] = np.where(nan, 0.0, vals)
    grid = Grid2(nx, ny, (x0, y0), (dx, dy))
    if not vector:
        return ScalarField(grid, values[..., 0], mask)
    mod = np.hypot(values[..., 0], values[..., 1])
    dev = np.abs(mod[mask] - 1.0)
    if dev.size == 0 or dev.max() <= UNIT_TOL:
        return UnitVectorField(grid, values, mask)
    if dev.max() <= 1e-6:
        safe = np.where(mask, mod, 1.0)
        return UnitVectorField(grid, values / safe[..., None], mask)
    return VectorField(grid, values, mask)
