"""Bad-set detection by local oscillation, greedy Vitali selection and degenerate points."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _stencil
from .besov import fit_loglog
from .errors import ConfigurationError, ResolutionError
from .grid import Grid2, VectorField
from .mollify import cone_kernel, mollify

OSC_CHUNK_PAIRS = 2_000_000


def _ball(epsilon: float, dx: float) -> np.ndarray:
    return _stencil.disk_offsets(epsilon / dx)


def _footprint(offs: np.ndarray) -> np.ndarray:
    r = int(np.abs(offs).max())
    fp = np.zeros((2 * r + 1, 2 * r + 1), dtype=bool)
    fp[offs[:, 1] + r, offs[:, 0] + r] = True
    return fp


def _ball_valid(mask: np.ndarray, offs: np.ndarray) -> np.ndarray:
    _, valid = _stencil.shift_sum(np.zeros(mask.shape), mask, offs, np.zeros(len(offs)))
    return valid


def _range_bound(values: np.ndarray, offs: np.ndarray, q: float) -> np.ndarray:
    """Upper bound ``(R_1^2 + R_2^2)^{q/2}`` of the double average from component ranges."""
    fp = _footprint(offs)
    tot = np.zeros(values.shape[:2])
    for c in range(values.shape[-1]):
        v = values[..., c]
        rng = ndimage.maximum_filter(v, footprint=fp, mode="nearest") - ndimage.minimum_filter(v, footprint=fp, mode="nearest")
        tot += rng**2
    return tot ** (q / 2)


def _check_eps(grid: Grid2, epsilon: float):
    if epsilon < 2 * grid.dx * (1 - 1e-12):
        raise ResolutionError(f"epsilon = {epsilon} is below 2 dx = {2 * grid.dx}")


def _double_average(values: np.ndarray, nodes_j, nodes_i, offs: np.ndarray, q: float) -> np.ndarray:
    k = len(offs)
    chunk = max(1, OSC_CHUNK_PAIRS // (k * k))
    out = np.empty(len(nodes_j))
    for s in range(0, len(nodes_j), chunk):
        jj = nodes_j[s:s + chunk, None] + offs[None, :, 1]
        ii = nodes_i[s:s + chunk, None] + offs[None, :, 0]
        v = values[jj, ii]  # (c, k, 2)
        d = v[:, :, None, :] - v[:, None, :, :]
        dist = np.sqrt(np.einsum("abcd,abcd->abc", d, d))
        out[s:s + chunk] = (dist**q).mean(axis=(1, 2))
    return out


def local_oscillation(m: VectorField, epsilon: float, q: float, floor: float | None = None):
    """``avg_{B_eps} avg_{B_eps} |m(x+y) - m(x+z)|^q`` over the lattice ball (uniform weights).

    Nodes whose ball leaves the mask are invalid.  Where ``m`` is constant on
    the ball the value is exactly 0; with ``floor`` given, nodes whose range
    bound does not exceed ``floor`` are reported as 0 without evaluation.
    Returns ``(values, valid)`` arrays.
    """
    g = m.grid
    _check_eps(g, epsilon)
    offs = _ball(epsilon, g.dx)
    valid = _ball_valid(m.mask, offs)
    bound = _range_bound(m.values, offs, q)
    cand = valid & (bound > (floor if floor is not None else 0.0))
    out = np.zeros(g.shape)
    jj, ii = np.nonzero(cand)
    if jj.size:
        out[jj, ii] = _double_average(m.values, jj, ii, offs, q)
    return out, valid


def default_alpha(q: float) -> float:
    return 2.0 ** (-q)


def bad_set(m: VectorField, epsilon: float, q: float, alpha: float | None = None) -> np.ndarray:
    """Nodes where the local oscillation exceeds ``alpha`` (default ``2^-q``)."""
    alpha = default_alpha(q) if alpha is None else alpha
    if not alpha > 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    osc, valid = local_oscillation(m, epsilon, q, floor=alpha)
    return valid & (osc > alpha)


@dataclass(frozen=True, eq=False)
class CoveringResult:
    epsilon: float
    alpha: float
    q: float
    centers: np.ndarray
    bad_fraction: float
    modulus_floor_ok: bool | None = None
    bad_points: np.ndarray | None = None

    @property
    def count(self) -> int:
        return len(self.centers)

    def check_invariants(self) -> None:
        """Assert disjointness of the eps-balls and the 5 eps cover of every bad node."""
        c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        if len(c) > 1:
            d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
            np.fill_diagonal(d, np.inf)
            assert d.min() > 2 * self.epsilon, "selected balls overlap"
        if self.bad_points is not None and len(self.bad_points):
            assert len(c), "bad nodes but no centers"
            near = _nearest_distance(self.bad_points, c, 5 * self.epsilon)
            assert np.all(near <= 5 * self.epsilon * (1 + 1e-12)), "bad node outside every 5 eps ball"

    def csv_row(self) -> list:
        return [self.epsilon, self.alpha, self.q, self.count, self.bad_fraction, self.modulus_floor_ok]

    def centers_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in self.centers:
            w.writerow([repr(float(x)), repr(float(y))])
        return buf.getvalue()


COVER_CSV_HEADER = ["epsilon", "alpha", "q", "count", "bad_fraction", "modulus_floor_ok"]


class _Buckets:
    def __init__(self, size: float):
        self.size = size
        self.cells: dict[tuple[int, int], list] = {}

    def key(self, p):
        return (math.floor(p[0] / self.size), math.floor(p[1] / self.size))

    def near(self, p, radius: float) -> bool:
        kx, ky = self.key(p)
        r2 = radius * radius
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                for c in self.cells.get((kx + a, ky + b), ()):
                    if (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2 <= r2:
                        return True
        return False

    def add(self, p):
        self.cells.setdefault(self.key(p), []).append(p)


def _nearest_distance(points: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    out = np.full(len(points), np.inf)
    for s in range(0, len(points), 4096):
        p = points[s:s + 4096]
        d = np.hypot(p[:, None, 0] - centers[None, :, 0], p[:, None, 1] - centers[None, :, 1])
        out[s:s + 4096] = d.min(axis=1)
    return out


def vitali_select(bad: np.ndarray, grid: Grid2, epsilon: float, alpha: float = math.nan, q: float = math.nan) -> CoveringResult:
    """Greedy row-major scan: keep a bad node when its eps-ball misses all kept balls."""
    bad = np.asarray(bad, dtype=bool)
    X, Y = grid.mesh()
    pts = np.stack([X[bad], Y[bad]], axis=1)  # boolean indexing is row-major
    buckets = _Buckets(2 * epsilon)
    chosen = []
    for p in pts:
        tp = (float(p[0]), float(p[1]))
        # disjoint closed balls need distance > 2 eps
        if not buckets.near(tp, 2 * epsilon):
            buckets.add(tp)
            chosen.append(tp)
    centers = np.array(chosen, dtype=float).reshape(-1, 2)
    frac = float(bad.sum() / bad.size) if bad.size else 0.0
    res = CoveringResult(float(epsilon), float(alpha), float(q), centers, frac, None, pts)
    return res


def subsample(m: VectorField, epsilon: float, target: float = 4.0) -> VectorField:
    """Stride-subsample ``m`` so that the ball radius spans about ``target`` cells."""
    g = m.grid
    stride = max(1, int(math.floor(epsilon / (target * g.dx) + 1e-9)))
    if stride == 1:
        return m
    sub = Grid2(len(range(0, g.nx, stride)), len(range(0, g.ny, stride)), g.origin, (g.dx * stride, g.dy * stride), g.domain)
    return VectorField(sub, m.values[::stride, ::stride], m.mask[::stride, ::stride])


def modulus_floor(m: VectorField, epsilon: float, covering: CoveringResult) -> bool:
    """``|m_eps| >= 1/2`` at every node where ``m_eps`` is defined, outside the 5 eps balls."""
    m_eps = mollify(m, cone_kernel(epsilon))
    g = m.grid
    X, Y = g.mesh()
    keep = m_eps.mask.copy()
    c = np.asarray(covering.centers).reshape(-1, 2)
    if len(c):
        pts = np.stack([X[keep], Y[keep]], axis=1)
        d = _nearest_distance(pts, c, 5 * epsilon)
        inside = np.zeros(g.shape, dtype=bool)
        inside[keep] = d <= 5 * epsilon
        keep &= ~inside
    mod = m_eps.modulus()
    return bool(np.all(mod[keep] >= 0.5))


def cover(m: VectorField, epsilon: float, q: float, alpha: float | None = None, target: float = 4.0) -> CoveringResult:
    """Bad set, greedy selection and floor check for one ``(eps, q, alpha)``."""
    alpha = default_alpha(q) if alpha is None else alpha
    ms = subsample(m, epsilon, target)
    bad = bad_set(ms, epsilon, q, alpha)
    res = vitali_select(bad, ms.grid, epsilon, alpha, q)
    res.check_invariants()
    ok = modulus_floor(m, epsilon, res)
    return CoveringResult(res.epsilon, res.alpha, res.q, res.centers, res.bad_fraction, ok, res.bad_points)


@dataclass(frozen=True, eq=False)
class ScalingReport:
    q: float
    s: float
    alpha: float
    results: tuple
    fitted_slope: float
    expected_slope: float
    zero_counts: bool

    @property
    def counts(self) -> list[int]:
        return [r.count for r in self.results]


def covering_scaling(m: VectorField, q: float, s: float, eps_list, alpha: float | None = None) -> ScalingReport:
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3 or max(eps_list) / min(eps_list) < 4 * (1 - 1e-9):
        raise ConfigurationError("eps_list must span at least three dyadic values")
    alpha = default_alpha(q) if alpha is None else alpha
    results = tuple(cover(m, e, q, alpha) for e in eps_list)
    counts = [r.count for r in results]
    slope = fit_loglog(eps_list, counts)
    return ScalingReport(q, s, alpha, results, slope, s * q - 2, any(c == 0 for c in counts))


@dataclass(frozen=True, eq=False)
class DegenerateReport:
    mask: np.ndarray
    centroids: np.ndarray
    sizes: tuple


def _cell_min_modulus(me, sub: int) -> np.ndarray:
    """Minimum of ``|m_eps|`` over each cell's bilinear interpolant, stored at its lower-left node.

    Nodal values alone miss an isolated zero between nodes; the bilinear
    interpolant reproduces the locally linear profile around such a zero.
    """
    v = me.values
    ok = me.mask[:-1, :-1] & me.mask[:-1, 1:] & me.mask[1:, :-1] & me.mask[1:, 1:]
    a, b, c, d = v[:-1, :-1], v[:-1, 1:], v[1:, :-1], v[1:, 1:]
    out = np.full(ok.shape, np.inf)
    ts = np.linspace(0.0, 1.0, sub + 1)
    for ty in ts:
        for tx in ts:
            w = (1 - tx) * (1 - ty) * a + tx * (1 - ty) * b + (1 - tx) * ty * c + tx * ty * d
            np.minimum(out, np.hypot(w[..., 0], w[..., 1]), out=out)
    out[~ok] = np.inf
    full = np.full(me.mask.shape, np.inf)
    full[:-1, :-1] = out
    return full


def degenerate_points(m: VectorField, eps_list, r: float, threshold: float = 0.25, sub: int = 8) -> DegenerateReport:
    """Nodes where ``max_eps inf_{B_r(x)} |m_eps| < threshold``, clustered by connectivity.

    The infimum runs over the cells (bilinear interpolant sampled ``sub``
    times per side) whose lower-left node lies in the ball.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps_list must be strictly decreasing with at least three entries")
    g = m.grid
    offs = _stencil.disk_offsets(r / g.dx)
    fp = _footprint(offs)
    best = np.full(g.shape, -np.inf)
    defined = np.ones(g.shape, dtype=bool)
    for e in eps_list:
        me = mollify(m, cone_kernel(e))
        mod = _cell_min_modulus(me, sub)
        inf_ball = ndimage.minimum_filter(mod, footprint=fp, mode="constant", cval=np.inf)
        best = np.maximum(best, inf_ball)
        defined &= me.mask
    hit = defined & (best < threshold)
    labels, n = ndimage.label(hit, structure=np.ones((3, 3)))
    X, Y = g.mesh()
    cents, sizes = [], []
    for k in range(1, n + 1):
        sel = labels == k
        cents.append((float(X[sel].mean()), float(Y[sel].mean())))
        sizes.append(int(sel.sum()))
    return DegenerateReport(hit, np.array(cents, dtype=float).reshape(-1, 2), tuple(sizes))
