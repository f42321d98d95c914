"""Finite differences, L^p norms and Besov seminorm estimates on sampled fields."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _stencil
from .errors import ConfigurationError
from .grid import Disk, ScalarField, VectorField, bilinear, cell_weights
from .mollify import cone_kernel, mollify

LATTICE_DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def _lattice(h, grid):
    a = h[0] / grid.dx
    b = h[1] / grid.dy
    ra, rb = round(a), round(b)
    if abs(a - ra) <= 1e-9 * max(1.0, abs(a)) and abs(b - rb) <= 1e-9 * max(1.0, abs(b)):
        return int(ra), int(rb)
    return None


def _same_kind(f, values, mask):
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, values, mask)
    return VectorField(f.grid, values, mask)


def finite_difference(f, h) -> ScalarField | VectorField:
    """``D^h f(x) = f(x + h) - f(x)`` on nodes where both ends are masked in.

    Lattice shifts are exact; other shifts sample ``f(x + h)`` bilinearly.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (2,) or not np.hypot(*h) > 0:
        raise ConfigurationError(f"shift must be a nonzero 2-vector, got {h}")
    g = f.grid
    lat = _lattice(h, g)
    if lat is not None:
        out, valid = _stencil.shift_pair(f.values, f.mask, *lat)
    else:
        X, Y = g.mesh()
        pts = np.stack([X.ravel() + h[0], Y.ravel() + h[1]], axis=1)
        shifted, ok = bilinear(g, f.values, f.mask, pts)
        valid = ok.reshape(g.shape) & f.mask
        out = shifted.reshape(f.values.shape) - f.values
        out[~valid] = 0.0
    if not valid.any():
        raise ConfigurationError(f"empty intersection of the domain with its shift by {tuple(h)}")
    return _same_kind(f, out, valid)


def _magnitude(f) -> np.ndarray:
    if isinstance(f, ScalarField):
        return np.abs(f.values)
    return np.hypot(f.values[..., 0], f.values[..., 1])


def _region_mask(f, region) -> np.ndarray:
    if region is None:
        return f.mask
    if isinstance(region, np.ndarray):
        return f.mask & region.astype(bool)
    X, Y = f.grid.mesh()
    return f.mask & np.asarray(region.contains(X, Y), dtype=bool)


def integrate_power(f, p: float, region=None) -> float:
    """``sum |f|^p w`` with trapezoidal cell weights over masked-in nodes of ``region``."""
    mask = _region_mask(f, region)
    if not mask.any():
        raise ConfigurationError("region does not intersect the field mask")
    w = cell_weights(mask, f.grid.dx, f.grid.dy)
    return float(np.sum(w * _magnitude(f) ** p))


def lp_norm(f, p: float, region=None) -> float:
    if not p >= 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    return integrate_power(f, p, region) ** (1.0 / p)


def third_moment_rate(m, h, region=None) -> float:
    """``(1/|h|) * integral |D^h m|^3``."""
    d = finite_difference(m, h)
    return integrate_power(d, 3.0, region) / float(np.hypot(*h))


# ---------------------------------------------------------------------------
# Seminorm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftSample:
    h: tuple[float, float]
    lp_norm: float
    rate: float


@dataclass(frozen=True)
class BesovReport:
    s: float
    p: float
    samples: tuple[ShiftSample, ...]
    seminorm_estimate: float
    fit_slope: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hx", "hy", "h_norm", "p", "lp_norm", "rate"])
        for smp in self.samples:
            hn = math.hypot(*smp.h)
            w.writerow([repr(smp.h[0]), repr(smp.h[1]), repr(hn), repr(float(self.p)), repr(smp.lp_norm), repr(smp.rate)])
        return buf.getvalue()


def default_shifts(dx: float, levels: int = 5, base: int = 1, directions=LATTICE_DIRECTIONS):
    """Lattice shifts ``k * d * dx`` for ``k = base * 2^l`` and the 8 lattice directions."""
    out = []
    for lvl in range(levels):
        k = base * 2**lvl
        for a, b in directions:
            out.append((k * a * dx, k * b * dx))
    return out


def shifts_up_to(dx: float, hmax: float, directions=LATTICE_DIRECTIONS):
    """All lattice shifts ``k d dx`` (``k >= 1``) with length at most ``hmax``."""
    out = []
    for a, b in directions:
        step = math.hypot(a, b) * dx
        k = 1
        while k * step <= hmax * (1 + 1e-12):
            out.append((k * a * dx, k * b * dx))
            k += 1
    return out


def _check_shift_set(h_set):
    hs = np.asarray(h_set, dtype=float)
    if hs.ndim != 2 or hs.shape[1] != 2 or hs.shape[0] == 0:
        raise ConfigurationError("h_set must be a nonempty list of 2-vectors")
    norms = np.hypot(hs[:, 0], hs[:, 1])
    if np.any(norms <= 0):
        raise ConfigurationError("h_set contains a zero shift")
    mags = np.unique(np.round(np.log(norms), 9))
    angles = np.unique(np.round(np.mod(np.arctan2(hs[:, 1], hs[:, 0]), 2 * np.pi), 9) % np.round(2 * np.pi, 9))
    if mags.size < 3 or angles.size < 4:
        raise ConfigurationError(
            f"degenerate h_set: {mags.size} magnitudes, {angles.size} directions (need >= 3 and >= 4)"
        )
    return hs


def fit_loglog(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x`` over positive entries."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2 or np.unique(x[keep]).size < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def besov_seminorm(m, s: float, p: float, h_set=None, region=None, threads: int = 1) -> BesovReport:
    """Sampled ``sup_h |h|^-s ||D^h m||_p`` (a lower bound) and the log-log slope."""
    if h_set is None:
        h_set = default_shifts(m.grid.dx)
    hs = _check_shift_set(h_set)
    if not p >= 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")

    def one(h):
        return lp_norm(finite_difference(m, h), p, region)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            norms = list(ex.map(one, [tuple(h) for h in hs]))
    else:
        norms = [one(tuple(h)) for h in hs]
    samples = []
    for h, nrm in zip(hs, norms):
        hn = float(np.hypot(*h))
        samples.append(ShiftSample((float(h[0]), float(h[1])), nrm, nrm / hn**s))
    est = max(smp.rate for smp in samples)
    slope = fit_loglog([math.hypot(*smp.h) for smp in samples], [smp.lp_norm for smp in samples])
    return BesovReport(float(s), float(p), tuple(samples), est, slope)


# ---------------------------------------------------------------------------
# Column-sup estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSupEstimate:
    lhs: float
    rhs: float
    ratio: float


def column_sup_estimate(m, epsilon: float, r: float, center=(0.0, 0.0), shifts=None) -> ColumnSupEstimate:
    """Column maxima of ``(1 - |m_eps|)^2`` on ``(-r, r)^2`` against the third-moment rate on ``B_{2r}``."""
    if not 0 < epsilon <= r:
        raise ConfigurationError(f"need 0 < eps <= r, got eps={epsilon}, r={r}")
    g = m.grid
    m_eps = mollify(m, cone_kernel(epsilon))
    X, Y = g.mesh()
    lim = r * (1 - 1e-12)
    window = (np.abs(X - center[0]) < lim) & (np.abs(Y - center[1]) < lim)
    if not np.all(m_eps.mask[window]):
        raise ConfigurationError("mollified field is not defined on the whole window")
    defect = np.where(window, (1.0 - m_eps.modulus()) ** 2, -np.inf)
    colmax = defect.max(axis=0)
    cols = np.isfinite(colmax)
    lhs = float(np.sum(np.clip(colmax[cols], 0.0, None)) * g.dx)
    if shifts is None:
        shifts = shifts_up_to(g.dx, epsilon)
    if not shifts:
        raise ConfigurationError("no lattice shift with |h| <= eps")
    disk = Disk(tuple(center), 2 * r)
    rhs = max(third_moment_rate(m, h, disk) for h in shifts)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return ColumnSupEstimate(lhs, rhs, ratio)
