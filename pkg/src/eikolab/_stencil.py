"""Shifted-sum kernels on masked node arrays."""

from __future__ import annotations

import numpy as np
from scipy import ndimage, signal


def disk_offsets(radius: float, closed: bool = True) -> np.ndarray:
    """Integer offsets ``(a, b)`` with ``a^2 + b^2 <= radius^2`` (``<`` if not closed).

    Rows are sorted by ``(b, a)`` so every accumulation has a fixed order.
    """
    r = int(np.floor(radius + 1e-9))
    a, b = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="xy")
    d2 = a**2 + b**2
    lim = radius**2
    keep = d2 <= lim * (1 + 1e-12) if closed else d2 < lim * (1 - 1e-12)
    return np.stack([a[keep], b[keep]], axis=1)


def shift_sum(values: np.ndarray, mask: np.ndarray, offsets: np.ndarray, weights) -> tuple[np.ndarray, np.ndarray]:
    """``out[x] = sum_k weights[k] * values[x + offsets[k]]``.

    ``offsets[k] = (a, b)`` shifts by ``a`` columns and ``b`` rows.  A node is
    valid only when every shifted node lies on the grid and is masked in.
    Trailing axes of ``values`` beyond the first two are carried along.
    """
    offsets = np.asarray(offsets, dtype=int)
    weights = np.asarray(weights, dtype=float)
    ny, nx = mask.shape
    ra = int(np.abs(offsets[:, 0]).max())
    rb = int(np.abs(offsets[:, 1]).max())
    out = np.zeros(values.shape)
    valid = np.zeros(mask.shape, dtype=bool)
    if ny - 2 * rb <= 0 or nx - 2 * ra <= 0:
        return out, valid
    core = (slice(rb, ny - rb), slice(ra, nx - ra))
    acc = np.zeros(values[core].shape)
    ok = np.ones(mask[core].shape, dtype=bool)
    for (a, b), w in zip(offsets, weights):
        sl = (slice(rb + b, ny - rb + b), slice(ra + a, nx - ra + a))
        ok &= mask[sl]
        if w != 0.0:
            acc += w * values[sl]
    out[core] = acc
    valid[core] = ok
    out[~valid] = 0.0
    return out, valid


def fft_sum(values: np.ndarray, mask: np.ndarray, offsets: np.ndarray, weights) -> tuple[np.ndarray, np.ndarray]:
    """``out[x] = sum_k weights[k] * values[x - offsets[k]]`` via FFT, same validity rule as
    :func:`shift_sum` (every ``x - offsets[k]`` on the grid and masked in)."""
    offsets = np.asarray(offsets, dtype=int)
    r = int(np.abs(offsets).max())
    ker = np.zeros((2 * r + 1, 2 * r + 1))
    ker[offsets[:, 1] + r, offsets[:, 0] + r] = weights
    foot = np.zeros(ker.shape, dtype=bool)
    foot[-offsets[:, 1] + r, -offsets[:, 0] + r] = True
    extra = values.ndim - 2
    masked = np.where(mask.reshape(mask.shape + (1,) * extra), values, 0.0)
    out = signal.fftconvolve(masked, ker.reshape(ker.shape + (1,) * extra), mode="same", axes=(0, 1))
    valid = ndimage.binary_erosion(mask, structure=foot, border_value=0)
    out[~valid] = 0.0
    return out, valid


def centered_gradient(values: np.ndarray, mask: np.ndarray, dx: float, dy: float):
    """Second-order centred differences; returns ``(d/dx, d/dy, valid)``."""
    gx = np.zeros(values.shape)
    gy = np.zeros(values.shape)
    valid = np.zeros(mask.shape, dtype=bool)
    gx[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / (2 * dx)
    gy[1:-1, :] = (values[2:, :] - values[:-2, :]) / (2 * dy)
    valid[1:-1, 1:-1] = (
        mask[1:-1, 1:-1] & mask[1:-1, 2:] & mask[1:-1, :-2] & mask[2:, 1:-1] & mask[:-2, 1:-1]
    )
    gx[~valid] = 0.0
    gy[~valid] = 0.0
    return gx, gy, valid


def shift_pair(values: np.ndarray, mask: np.ndarray, a: int, b: int):
    """``(values[x + (a, b)] - values[x], valid)`` for an integer lattice shift."""
    ny, nx = mask.shape
    out = np.zeros(values.shape)
    valid = np.zeros(mask.shape, dtype=bool)
    if abs(a) >= nx or abs(b) >= ny:
        return out, valid
    src = (slice(max(0, -b), ny - max(0, b)), slice(max(0, -a), nx - max(0, a)))
    dst = (slice(max(0, b), ny - max(0, -b)), slice(max(0, a), nx - max(0, -a)))
    out[src] = values[dst] - values[src]
    valid[src] = mask[dst] & mask[src]
    out[~valid] = 0.0
    return out, valid
