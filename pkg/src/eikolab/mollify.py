"""Mollification ``m_eps = m * rho_eps`` by the cone kernel, and the modulus-defect moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _stencil
from .errors import ConfigurationError, ResolutionError
from .grid import Disk, Grid2, ScalarField, VectorField, cell_weights

CONE_HEIGHT = 3.0 / math.pi


def cone_profile(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, CONE_HEIGHT * (1.0 - r), 0.0)


@dataclass(frozen=True)
class Kernel:
    """Radial kernel ``rho_eps(z) = eps^-2 profile(|z| / eps)``."""

    epsilon: float
    profile: Callable = field(default=cone_profile, compare=False)
    name: str = "cone"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.hypot(z[..., 0], z[..., 1]) / self.epsilon
        return self.profile(r) / self.epsilon**2

    def raw_stencil(self, dx: float) -> tuple[np.ndarray, np.ndarray]:
        """Lattice offsets with positive kernel value and their weights ``rho_eps(z) dx^2``."""
        offs = _stencil.disk_offsets(self.epsilon / dx)
        w = self(offs * dx) * dx * dx
        keep = w > 0
        return offs[keep], w[keep]

    def stencil(self, dx: float) -> tuple[np.ndarray, np.ndarray]:
        """Offsets and weights renormalised to sum to exactly one."""
        offs, w = self.raw_stencil(dx)
        return offs, w / w.sum()

    def check(self, samples: int = 20001) -> dict:
        """Numerical audit of support, bounds, slope and mass on a radial sample."""
        r = np.linspace(0.0, 1.5, samples)
        prof = self.profile(r)
        slope = np.abs(np.diff(prof) / np.diff(r))
        rr = np.linspace(0.0, 1.0, samples)
        mass = 2 * math.pi * np.trapezoid(self.profile(rr) * rr, rr)
        return {
            "support_ok": bool(np.all(prof[r >= 1.0] == 0.0)),
            "max": float(prof.max()),
            "min": float(prof.min()),
            "max_slope": float(slope.max()),
            "mass": float(mass),
        }


def cone_kernel(epsilon: float) -> Kernel:
    """The cone ``(3/pi)(1 - |z|)``: unit mass, height 3/pi, slope 3/pi."""
    return Kernel(float(epsilon))


@dataclass(frozen=True, eq=False)
class MollifiedField(VectorField):
    epsilon: float = 0.0
    source: str = ""


# stencils with more taps than this go through an FFT instead of shifted sums
FFT_MIN_TAPS = 200


def convolve(values: np.ndarray, mask: np.ndarray, kernel: Kernel, dx: float):
    """Discrete ``sum_z values(x - z) w(z)``; nodes whose eps-ball leaves ``mask`` are dropped."""
    offs, w = kernel.stencil(dx)
    if len(offs) < FFT_MIN_TAPS:
        # rho is even, but keep the convolution orientation explicit
        return _stencil.shift_sum(values, mask, -offs, w)
    return _stencil.fft_sum(values, mask, offs, w)


def _check_resolution(grid: Grid2, eps: float, what: str = "epsilon"):
    if abs(grid.dx - grid.dy) > 1e-12 * grid.dx:
        raise ConfigurationError("mollification needs square cells")
    if eps < 2 * grid.dx * (1 - 1e-12):
        raise ResolutionError(f"{what} = {eps} is below 2 dx = {2 * grid.dx}")


def mollify(f, kernel: Kernel, source: str = ""):
    """Mollify a scalar or vector field; vector input yields a :class:`MollifiedField`."""
    g = f.grid
    _check_resolution(g, kernel.epsilon)
    out, valid = convolve(f.values, f.mask, kernel, g.dx)
    if isinstance(f, ScalarField):
        return ScalarField(g, out, valid)
    return MollifiedField(g, out, valid, epsilon=kernel.epsilon, source=source or type(f).__name__)


def grad_potential(m_eps: VectorField) -> VectorField:
    """``grad u_eps = i m_eps``."""
    v = m_eps.values
    return VectorField(m_eps.grid, np.stack([-v[..., 1], v[..., 0]], axis=-1), m_eps.mask)


def gradient_norm(f: VectorField) -> ScalarField:
    """Frobenius norm of the centred-difference Jacobian of a vector field."""
    g = f.grid
    total = np.zeros(g.shape)
    valid = np.ones(g.shape, dtype=bool)
    for c in range(2):
        gx, gy, ok = _stencil.centered_gradient(f.values[..., c], f.mask, g.dx, g.dy)
        total += gx**2 + gy**2
        valid &= ok
    return ScalarField(g, np.sqrt(total), valid)


def _region_weights(grid: Grid2, mask: np.ndarray, region) -> np.ndarray:
    X, Y = grid.mesh()
    inside = mask & np.asarray(region.contains(X, Y), dtype=bool)
    return cell_weights(inside, grid.dx, grid.dy)


@dataclass(frozen=True)
class DefectMoments:
    lhs32: float
    lhs_grad3: float
    rhs: float
    ratio32: float
    ratio_grad3: float
    best_shift: tuple[float, float] | None


def defect_moments(m: VectorField, epsilon: float, r: float, h_samples, center=(0.0, 0.0)) -> DefectMoments:
    """Modulus defect of ``m_eps`` against the third-moment rate of ``m`` on ``B_{2r}``.

    ``h_samples`` are lattice shifts given as ``(hx, hy)`` lengths with
    ``|h| <= eps``; every integral runs over the same node set, namely nodes of
    ``B_{2r}(center)`` where ``m_eps``, its gradient and all the differences are defined.
    """
    from .besov import finite_difference  # local import: besov builds on this module

    if epsilon > r:
        raise ConfigurationError(f"need eps <= r, got eps={epsilon}, r={r}")
    g = m.grid
    m_eps = mollify(m, cone_kernel(epsilon))
    dm = gradient_norm(m_eps)
    shifts = [np.asarray(h, dtype=float) for h in h_samples]
    if not shifts:
        raise ConfigurationError("h_samples is empty")
    for h in shifts:
        if not 0 < np.hypot(*h) <= epsilon * (1 + 1e-9):
            raise ConfigurationError(f"shift {tuple(h)} not in 0 < |h| <= eps")
    diffs = [finite_difference(m, h) for h in shifts]
    common = m_eps.mask & dm.mask
    for d in diffs:
        common &= d.mask
    w = _region_weights(g, common, Disk(tuple(center), 2 * r))
    modulus = m_eps.modulus()
    lhs32 = float(np.sum(w * np.clip(1.0 - modulus, 0.0, None) ** 1.5))
    lhs_grad3 = float(np.sum(w * dm.values**3))
    rhs, best = 0.0, None
    for h, d in zip(shifts, diffs):
        val = float(np.sum(w * np.hypot(d.values[..., 0], d.values[..., 1]) ** 3)) / float(np.hypot(*h))
        if val > rhs:
            rhs, best = val, (float(h[0]), float(h[1]))
    ratio32 = lhs32 / (epsilon * rhs) if rhs > 0 else 0.0
    ratio_g = lhs_grad3 * epsilon**2 / rhs if rhs > 0 else 0.0
    return DefectMoments(lhs32, lhs_grad3, rhs, ratio32, ratio_g, best)
