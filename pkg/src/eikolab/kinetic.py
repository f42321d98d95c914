"""Entropies and their productions, the kinetic function and the kinetic measure.

Angles are sampled on an :class:`AngularGrid`; kinetic arrays carry the angle
as a trailing axis, i.e. shape ``(ny, nx, n_s)``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _stencil
from .besov import lp_norm
from .errors import ConfigurationError
from .grid import ScalarField, VectorField, cell_weights
from .mollify import Kernel, _check_resolution, cone_kernel, convolve, mollify

TIE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Entropies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Entropy:
    """``Phi`` with ``Phi'(theta) = alpha(theta) i e^{i theta}`` and ``Phi(0) = 0``.

    ``coeffs`` maps ``k`` to the complex Fourier coefficient ``c_k`` of the
    real generator ``alpha(theta) = sum_k c_k e^{ik theta}``.  Complex numbers
    stand for planar vectors.
    """

    coeffs: dict = field(hash=False)
    name: str = ""

    def alpha(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape, dtype=complex)
        for k, c in self.coeffs.items():
            out += c * np.exp(1j * k * theta)
        return out.real

    def _complex(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape, dtype=complex)
        for k, c in self.coeffs.items():
            out += c * (np.exp(1j * (k + 1) * theta) - 1.0) / (k + 1)
        return out

    def __call__(self, theta) -> np.ndarray:
        z = self._complex(theta)
        return np.stack([z.real, z.imag], axis=-1)

    def derivative(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        z = self.alpha(theta) * 1j * np.exp(1j * theta)
        return np.stack([z.real, z.imag], axis=-1)


def entropy_from_generator(a0: float = 0.0, cos=None, sin=None, name: str = "") -> Entropy:
    """Build an entropy from a real generator ``a0 + sum a_k cos k + b_k sin k``.

    ``cos`` and ``sin`` map mode ``k >= 2`` to its coefficient.  A mode-1 term
    would make ``Phi`` non-periodic and is rejected.
    """
    cos = dict(cos or {})
    sin = dict(sin or {})
    coeffs: dict[int, complex] = {}
    if a0:
        coeffs[0] = complex(a0)
    for k in sorted(set(cos) | set(sin)):
        if int(k) != k or k < 0:
            raise ConfigurationError(f"Fourier mode must be a non-negative integer, got {k}")
        k = int(k)
        a, b = float(cos.get(k, 0.0)), float(sin.get(k, 0.0))
        if a == 0.0 and b == 0.0:
            continue
        if k == 1:
            raise ConfigurationError("non-periodic entropy: generator has a mode-1 component")
        if k == 0:
            coeffs[0] = coeffs.get(0, 0) + a
            continue
        coeffs[k] = complex(a, -b) / 2
        coeffs[-k] = complex(a, b) / 2
    return Entropy(coeffs, name)


def entropy_eval(phi: Entropy, theta) -> np.ndarray:
    return phi(theta)


def default_generators(n: int = 12) -> list[Entropy]:
    """First ``n`` real Fourier generators with mode 1 skipped: 1, cos 2, sin 2, cos 3, ..."""
    if n < 1:
        raise ConfigurationError("need at least one generator")
    out = [entropy_from_generator(1.0, name="one")]
    k = 2
    while len(out) < n:
        out.append(entropy_from_generator(cos={k: 1.0}, name=f"cos{k}"))
        if len(out) < n:
            out.append(entropy_from_generator(sin={k: 1.0}, name=f"sin{k}"))
        k += 1
    return out


def _angle(m: VectorField) -> np.ndarray:
    return np.arctan2(m.values[..., 1], m.values[..., 0])


def divergence(f: VectorField) -> ScalarField:
    g = f.grid
    gx, _, ok1 = _stencil.centered_gradient(f.values[..., 0], f.mask, g.dx, g.dy)
    _, gy, ok2 = _stencil.centered_gradient(f.values[..., 1], f.mask, g.dx, g.dy)
    return ScalarField(g, gx + gy, ok1 & ok2)


def entropy_production(m: VectorField, phi: Entropy, eps_test: float) -> ScalarField:
    """``div (Phi(m) * rho_eps)`` by centred differences."""
    composite = VectorField(m.grid, phi(_angle(m)), m.mask)
    return divergence(mollify(composite, cone_kernel(eps_test)))


@dataclass(frozen=True)
class BatteryRow:
    entropy_id: str
    l1_production: float
    l2_production: float


@dataclass(frozen=True)
class BatteryReport:
    eps_test: float
    rows: tuple[BatteryRow, ...]

    @property
    def total_l1(self) -> float:
        return float(sum(r.l1_production for r in self.rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entropy_id", "l1_production", "l2_production"])
        for r in self.rows:
            w.writerow([r.entropy_id, repr(r.l1_production), repr(r.l2_production)])
        return buf.getvalue()


def production_battery(m: VectorField, eps_test: float, n_generators: int = 12, region=None) -> BatteryReport:
    """L1 and L2 norms of the production of every default generator."""
    rows = []
    for phi in default_generators(n_generators):
        prod = entropy_production(m, phi, eps_test)
        rows.append(BatteryRow(phi.name, lp_norm(prod, 1, region), lp_norm(prod, 2, region)))
    return BatteryReport(float(eps_test), tuple(rows))


# ---------------------------------------------------------------------------
# Kinetic function and measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngularGrid:
    n_s: int

    def __post_init__(self):
        if self.n_s < 16 or self.n_s % 2:
            raise ConfigurationError(f"n_s must be even and >= 16, got {self.n_s}")

    @property
    def ds(self) -> float:
        return 2 * math.pi / self.n_s

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.n_s) * self.ds


@dataclass(frozen=True, eq=False)
class KineticDensity:
    grid: object
    values: np.ndarray
    mask: np.ndarray
    angular: AngularGrid
    epsilon: float | None = None

    @property
    def raw(self) -> bool:
        return self.epsilon is None

    def angular_moment(self) -> np.ndarray:
        """``sum_k e^{i s_k} chi(x, s_k) ds`` as a planar vector field array."""
        s = self.angular.s
        ds = self.angular.ds
        return np.stack([self.values @ np.cos(s), self.values @ np.sin(s)], axis=-1) * ds


def kinetic_density(m: VectorField, angular: AngularGrid) -> KineticDensity:
    """Raw ``chi(x, s) = 1_{m(x) . e^{is} > 0}``, with value 1/2 on ties."""
    s = angular.s
    dot = m.values[..., 0:1] * np.cos(s) + m.values[..., 1:2] * np.sin(s)
    chi = np.where(dot > TIE_TOL, 1.0, np.where(dot < -TIE_TOL, 0.0, 0.5))
    chi[~m.mask] = 0.0
    return KineticDensity(m.grid, chi, m.mask.copy(), angular)


def mollify_chi(chi: KineticDensity, kernel: Kernel) -> KineticDensity:
    g = chi.grid
    _check_resolution(g, kernel.epsilon)
    out, valid = convolve(chi.values, chi.mask, kernel, g.dx)
    return KineticDensity(g, out, valid, chi.angular, kernel.epsilon)


@dataclass(frozen=True, eq=False)
class KineticMeasure:
    sigma: np.ndarray
    nu: ScalarField
    angular: AngularGrid
    epsilon: float
    defect: ScalarField
    norms: dict

    def nu_norm(self, p: float, region=None) -> float:
        return lp_norm(self.nu, p, region)

    def to_csv_row(self, p: float = 2.0) -> list:
        return [self.epsilon, self.norms.get(1.0), self.norms.get(2.0), self.norms.get(float(p))]


def _transport_rate(chi_eps: KineticDensity):
    g = chi_eps.grid
    gx, gy, valid = _stencil.centered_gradient(chi_eps.values, chi_eps.mask, g.dx, g.dy)
    s = chi_eps.angular.s
    return np.cos(s) * gx + np.sin(s) * gy, valid


def sigma_from_rate(rate: np.ndarray, ds: float, base: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean angular antiderivative of ``rate`` (last axis), after removing its mean.

    Returns ``(sigma, defect)`` where ``defect = |sum_k rate_k ds|``.
    """
    total = rate.sum(axis=-1) * ds
    centred = rate - rate.mean(axis=-1, keepdims=True)
    rolled = np.roll(centred, -base, axis=-1)
    cum = np.concatenate([np.zeros(rolled.shape[:-1] + (1,)), np.cumsum(rolled, axis=-1)[..., :-1]], axis=-1) * ds
    sigma = np.roll(cum, base, axis=-1)
    sigma = sigma - sigma.mean(axis=-1, keepdims=True)
    return sigma, np.abs(total)


def kinetic_measure(
    m: VectorField,
    angular: AngularGrid,
    eps_x: float,
    p_list=(1.0, 2.0),
    defect_tol: float | None = None,
    base: int = 0,
) -> KineticMeasure:
    """``sigma`` with ``d_s sigma = e^{is} . grad chi_eps`` (zero angular mean) and ``nu = int |sigma| ds``.

    The angular mean of the transport rate equals ``div(2 m_eps)`` up to
    quadrature; it is reported as the compatibility defect and removed before
    the angular integration.  A defect above ``defect_tol`` (default
    ``1 / eps_x``, i.e. order one relative to the jump scale) raises a warning.
    """
    chi = mollify_chi(kinetic_density(m, angular), cone_kernel(eps_x))
    rate, valid = _transport_rate(chi)
    sigma, defect = sigma_from_rate(rate, angular.ds, base)
    sigma[~valid] = 0.0
    defect[~valid] = 0.0
    nu = ScalarField(m.grid, np.abs(sigma).sum(axis=-1) * angular.ds, valid)
    dfield = ScalarField(m.grid, defect, valid)
    if defect_tol is None:
        defect_tol = 1.0 / eps_x
    worst = float(defect.max()) if valid.any() else 0.0
    if worst > defect_tol:
        warnings.warn(
            f"field not weakly divergence-free at this resolution: defect {worst:.3e} > {defect_tol:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    norms = {float(p): lp_norm(nu, p) for p in p_list}
    return KineticMeasure(sigma, nu, angular, float(eps_x), dfield, norms)


def jump_line_density(m_plus, m_minus, n_bins: int = 200_000) -> float:
    """``int |S(s)| ds`` with ``S' = cos(s) (chi_+ - chi_-)`` and zero mean: the per-length
    mass of ``nu`` along a straight jump with normal ``e_1``.  Fine midpoint quadrature."""
    ds = 2 * math.pi / n_bins
    s = (np.arange(n_bins) + 0.5) * ds
    cp = (m_plus[0] * np.cos(s) + m_plus[1] * np.sin(s) > 0).astype(float)
    cm = (m_minus[0] * np.cos(s) + m_minus[1] * np.sin(s) > 0).astype(float)
    rate = np.cos(s) * (cp - cm)
    S = np.cumsum(rate) * ds
    S -= S.mean()
    return float(np.abs(S).sum() * ds)


# ---------------------------------------------------------------------------
# Refined Besov machinery
# ---------------------------------------------------------------------------


def _cone_cdf(u):
    u = np.clip(u, -1.0, 1.0)
    return np.where(u < 0, 0.5 * (1 + u) ** 2, 1 - 0.5 * (1 - u) ** 2)


def phi_delta(t, delta: float) -> np.ndarray:
    """``sign(cos t sin t)`` smoothed by the even 1D cone kernel of half-width ``delta < pi/4``."""
    if not 0 < delta < math.pi / 4:
        raise ConfigurationError(f"need 0 < delta < pi/4, got {delta}")
    t = np.mod(np.asarray(t, dtype=float), 2 * math.pi)
    k = np.rint(t / (math.pi / 2))
    t0 = k * math.pi / 2
    u = (t - t0) / delta
    sign_k = np.where(np.mod(k, 2) == 0, 1.0, -1.0)
    near = sign_k * (2 * _cone_cdf(u) - 1)
    far = np.sign(np.sin(2 * t))
    return np.where(np.abs(u) < 1, near, far)


@dataclass(frozen=True)
class ConeBump:
    """``phi(x) = (1 - |x - c| / R)_+``."""

    center: tuple[float, float]
    radius: float

    def value(self, X, Y):
        r = np.hypot(X - self.center[0], Y - self.center[1])
        return np.clip(1 - r / self.radius, 0.0, None)

    def grad_norm(self, X, Y):
        r = np.hypot(X - self.center[0], Y - self.center[1])
        return np.where(r < self.radius, 1.0 / self.radius, 0.0)


@dataclass(frozen=True, eq=False)
class RefinedCheck:
    lhs: float
    lhs_delta: float
    rhs1: float
    rhs2: float
    ratio: float
    delta_field: ScalarField
    lower_c: float


def _lattice_shift(h, g):
    a, b = h[0] / g.dx, h[1] / g.dy
    if abs(a - round(a)) > 1e-9 or abs(b - round(b)) > 1e-9:
        raise ConfigurationError(f"shift {tuple(h)} is not a lattice vector")
    return int(round(a)), int(round(b))


def delta_weights(angular: AngularGrid, delta: float) -> np.ndarray:
    s = angular.s
    diff = s[None, :] - s[:, None]
    return phi_delta(diff, delta) * np.sin(diff) * angular.ds**2


def refined_besov_check(
    m: VectorField,
    test: ConeBump,
    eta: float,
    epsilon: float,
    delta_ang: float,
    h,
    angular: AngularGrid | None = None,
    max_shifts: int = 441,
) -> RefinedCheck:
    """Both sides of the refined third-moment inequality for one shift ``h``."""
    g = m.grid
    angular = angular or AngularGrid(96)
    h = np.asarray(h, dtype=float)
    hn = float(np.hypot(*h))
    if not 0 < hn <= eta * (1 + 1e-12):
        raise ConfigurationError(f"need 0 < |h| <= eta, got |h|={hn}, eta={eta}")
    if delta_ang < 2 * angular.ds or not delta_ang < math.pi / 4:
        raise ConfigurationError(f"angular width {delta_ang} not resolvable (need 2 ds <= delta < pi/4)")
    X, Y = g.mesh()
    reach = np.hypot(X - test.center[0], Y - test.center[1]) <= test.radius + eta
    if not g.covers_box(test.center[0] - test.radius - eta, test.center[1] - test.radius - eta,
                        test.center[0] + test.radius + eta, test.center[1] + test.radius + eta) or not np.all(m.mask[reach]):
        raise ConfigurationError("eta reaches outside the domain from the test-function support")
    a, b = _lattice_shift(h, g)

    chi = mollify_chi(kinetic_density(m, angular), cone_kernel(epsilon))
    d, dvalid = _stencil.shift_pair(chi.values, chi.mask, a, b)
    W = delta_weights(angular, delta_ang)
    delta = np.einsum("...k,...k->...", d @ W, d)
    delta[~dvalid] = 0.0
    dm, mvalid = _stencil.shift_pair(m.values, m.mask, a, b)
    dm3 = np.hypot(dm[..., 0], dm[..., 1]) ** 3

    phi = test.value(X, Y)
    w = cell_weights(mvalid, g.dx, g.dy)
    lhs = float(np.sum(w * dm3 * phi**2))
    wd = cell_weights(dvalid & mvalid, g.dx, g.dy)
    lhs_delta = float(np.sum(wd * delta * phi**2))

    km = kinetic_measure(m, angular, epsilon, p_list=(1.0,), defect_tol=np.inf)
    wn = cell_weights(km.nu.mask, g.dx, g.dy) * km.nu.values
    kmax = int(math.floor(eta / g.dx + 1e-9))
    stride = max(1, int(math.ceil((2 * kmax + 1) / math.sqrt(max_shifts))))
    best = 0.0
    for bb in range(-kmax, kmax + 1, stride):
        for aa in range(-kmax, kmax + 1, stride):
            if math.hypot(aa * g.dx, bb * g.dy) > eta * (1 + 1e-12):
                continue
            val = float(np.sum(wn * test.value(X + aa * g.dx, Y + bb * g.dy) ** 2))
            best = max(best, val)
    rhs1 = eta * best
    wall = cell_weights(m.mask, g.dx, g.dy)
    rhs2 = eta**1.5 * float(np.sum(wall * np.sqrt(phi) * test.grad_norm(X, Y) ** 1.5))
    ratio = lhs / (rhs1 + rhs2)

    strip = dvalid & mvalid & (dm3 > 1e-9)
    lower_c = float(np.min(delta[strip] / dm3[strip])) if strip.any() else float("nan")
    return RefinedCheck(lhs, lhs_delta, rhs1, rhs2, ratio, ScalarField(g, delta, dvalid), lower_c)
