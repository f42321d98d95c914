"""Integral curves of ``grad u_eps = i m_eps``, straightness audits and the strip experiment.

Curves are integrated by classical RK4 on bilinearly interpolated gradients,
many seeds at once.  The potential along a curve is accumulated from the RK
stages, ``du = dt/6 (|k1|^2 + 2|k2|^2 + 2|k3|^2 + |k4|^2)``, i.e. by
integrating ``grad u . gamma'`` rather than from a global reconstruction.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalFailure, PreconditionError, SearchFailure
from .grid import Disk, Rectangle, VectorField, bilinear, crop
from .mollify import MollifiedField, cone_kernel, grad_potential, mollify

STOP_LEFT = "left_window"
STOP_MODULUS = "modulus_below_c0"
STOP_TIME = "max_time"

BC_Q_MIN = (47 + math.sqrt(553)) / 12
BC_RANGE = "(47+sqrt(553))/12 < q <= 6"


@dataclass(frozen=True, eq=False)
class Curve:
    """Samples ``points[i] = gamma(t[i])`` with ``u_rel[i] = u_eps(gamma(t_i)) - u_eps(gamma(0))``."""

    t: np.ndarray
    points: np.ndarray
    u_rel: np.ndarray
    modulus: np.ndarray
    epsilon: float
    c0: float
    dt: float
    stop_reason: str
    backward: bool = False

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def increase(self) -> float:
        return float(self.u_rel[-1] - self.u_rel[0])

    @property
    def chord(self) -> float:
        return float(np.hypot(*(self.points[-1] - self.points[0])))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "u_eps", "modulus"])
        for t, (x, y), u, mod in zip(self.t, self.points, self.u_rel, self.modulus):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(u)), repr(float(mod))])
        return buf.getvalue()


def _window(window):
    if window is None or hasattr(window, "contains"):
        return window
    xmin, ymin, xmax, ymax = window
    return Rectangle((xmin, ymin), (xmax - xmin, ymax - ymin))


def trace_batch(
    gradient: VectorField,
    starts,
    c0: float,
    max_T: float,
    dt: float,
    epsilon: float | None = None,
    backward: bool = False,
    window=None,
) -> list[Curve]:
    """Trace ``gamma' = +-gradient(gamma)`` from every start point simultaneously.

    A curve stops before a step whose RK stages leave the interpolable region
    (``left_window``) or see ``|gradient| < c0`` (``modulus_below_c0``); it
    stops after a step that lands outside ``window`` or reaches ``max_T``.
    """
    g = gradient.grid
    if epsilon is None:
        epsilon = getattr(gradient, "epsilon", 0.0) or 4 * dt
    if not 0 < c0 <= 1:
        raise ConfigurationError(f"c0 must lie in (0, 1], got {c0}")
    if not dt > 0 or dt > epsilon / 4 * (1 + 1e-12):
        raise ConfigurationError(f"need 0 < dt <= eps/4, got dt={dt}, eps={epsilon}")
    if not max_T > 0:
        raise ConfigurationError("max_T must be positive")
    win = _window(window)
    sign = -1.0 if backward else 1.0
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    vals, mask = gradient.values, gradient.mask

    def sample(p):
        v, ok = bilinear(g, vals, mask, p)
        return sign * v, ok

    k0, ok0 = sample(starts)
    if not np.all(ok0):
        bad = starts[~ok0][0]
        raise ConfigurationError(f"start point {tuple(bad)} is outside the field mask")
    if win is not None and not np.all(win.contains(starts[:, 0], starts[:, 1])):
        raise ConfigurationError("start point outside the tracing window")

    n = len(starts)
    max_steps = int(math.ceil(max_T / dt - 1e-9))
    pts = [starts.copy()]
    us = [np.zeros(n)]
    mods = [np.hypot(k0[:, 0], k0[:, 1])]
    alive = mods[0] >= c0
    reason = np.where(alive, "", STOP_MODULUS).astype(object)
    nsteps = np.zeros(n, dtype=int)
    cur = starts.copy()
    ucur = np.zeros(n)
    c2 = c0 * c0
    for step in range(max_steps):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        p = cur[idx]
        k1, o1 = sample(p)
        k2, o2 = sample(p + 0.5 * dt * k1)
        k3, o3 = sample(p + 0.5 * dt * k2)
        k4, o4 = sample(p + dt * k3)
        ok = o1 & o2 & o3 & o4
        n1, n2, n3, n4 = (np.einsum("ij,ij->i", k, k) for k in (k1, k2, k3, k4))
        strong = (n1 >= c2) & (n2 >= c2) & (n3 >= c2) & (n4 >= c2)
        stop_left = ~ok
        stop_mod = ok & ~strong
        go = ok & strong
        reason[idx[stop_left]] = STOP_LEFT
        reason[idx[stop_mod]] = STOP_MODULUS
        alive[idx[~go]] = False
        gi = idx[go]
        newp = cur.copy()
        newu = ucur.copy()
        newp[gi] = p[go] + dt / 6 * (k1[go] + 2 * k2[go] + 2 * k3[go] + k4[go])
        newu[gi] = ucur[gi] + sign * dt / 6 * (n1[go] + 2 * n2[go] + 2 * n3[go] + n4[go])
        nsteps[gi] += 1
        kend, okend = sample(newp[gi])
        mod = np.full(n, np.nan)
        mod[gi] = np.where(okend, np.hypot(kend[:, 0], kend[:, 1]), np.nan)
        if win is not None:
            out = ~np.asarray(win.contains(newp[gi, 0], newp[gi, 1]), dtype=bool)
            reason[gi[out]] = STOP_LEFT
            alive[gi[out]] = False
        cur, ucur = newp, newu
        pts.append(cur.copy())
        us.append(ucur.copy())
        mods.append(mod)
    reason[alive] = STOP_TIME
    P = np.stack(pts, axis=1)
    U = np.stack(us, axis=1)
    M = np.stack(mods, axis=1)
    curves = []
    for c in range(n):
        k = nsteps[c] + 1
        curves.append(
            Curve(
                t=np.arange(k) * dt,
                points=P[c, :k].copy(),
                u_rel=U[c, :k].copy(),
                modulus=M[c, :k].copy(),
                epsilon=float(epsilon),
                c0=float(c0),
                dt=float(dt),
                stop_reason=str(reason[c]),
                backward=backward,
            )
        )
    return curves


SPEED_RTOL = 1e-6
RATE_RTOL = 1e-3


def curve_invariants(curve: Curve) -> tuple[bool, bool]:
    """``(speed_ok, monotone_ok)``: per-step displacement ``<= dt (1 + 1e-6)`` and
    potential gain ``>= c0^2 dt (1 - 1e-3)`` on every step."""
    if len(curve.t) < 2:
        return True, True
    steps = np.hypot(*np.diff(curve.points, axis=0).T)
    dts = np.diff(curve.t)
    gain = np.diff(curve.u_rel)
    if curve.backward:
        gain = -gain
    speed_ok = bool(np.all(steps <= dts * (1 + SPEED_RTOL)))
    monotone_ok = bool(np.all(gain >= curve.c0**2 * dts * (1 - RATE_RTOL)))
    return speed_ok, monotone_ok


def trace_curve(gradient: VectorField, start, c0: float, max_T: float, dt: float | None = None,
                backward: bool = False, window=None, epsilon: float | None = None) -> Curve:
    """Single-seed :func:`trace_batch`; ``dt`` defaults to ``eps/8``."""
    if epsilon is None:
        epsilon = getattr(gradient, "epsilon", None)
        if not epsilon:
            raise ConfigurationError("epsilon is required for a gradient without one attached")
    if dt is None:
        dt = epsilon / 8
    return trace_batch(gradient, [start], c0, max_T, dt, epsilon, backward, window)[0]


def mollified_gradient(m_eps: MollifiedField) -> VectorField:
    """``grad u_eps = i m_eps`` keeping the mollification scale attached."""
    g = grad_potential(m_eps)
    return MollifiedField(g.grid, g.values, g.mask, epsilon=m_eps.epsilon, source="grad_potential")


def truncate_to_window(curve: Curve, window, iters: int = 60) -> Curve:
    """Cut a ``left_window`` curve where its last step crosses the window boundary.

    The final sample moves to the crossing point found by bisection; its
    potential increment and time are scaled by the same step fraction.
    """
    win = _window(window)
    if curve.stop_reason != STOP_LEFT or len(curve.t) < 2:
        return curve
    a, b = curve.points[-2], curve.points[-1]
    if win.contains(b[0], b[1]):
        return curve
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        q = a + mid * (b - a)
        if win.contains(q[0], q[1]):
            lo = mid
        else:
            hi = mid
    lam = hi
    pts = curve.points.copy()
    pts[-1] = a + lam * (b - a)
    u = curve.u_rel.copy()
    u[-1] = u[-2] + lam * (u[-1] - u[-2])
    t = curve.t.copy()
    t[-1] = t[-2] + lam * curve.dt
    return Curve(t, pts, u, curve.modulus.copy(), curve.epsilon, curve.c0, curve.dt, curve.stop_reason, curve.backward)


# ---------------------------------------------------------------------------
# Straightness
# ---------------------------------------------------------------------------


def delta_formula(p: float, nu_lp: float, c0: float, epsilon: float, T: float, C: float) -> float:
    """``C (||nu||_p / c0^2)^{p/(9p-6)} eps^{(p-1)/(9p-6)} T^{(9p-7)/(9p-6)}``."""
    if not p > 1:
        raise ConfigurationError(f"p must exceed 1, got {p}")
    if not 0 < c0 <= 1:
        raise ConfigurationError(f"c0 must lie in (0, 1], got {c0}")
    if not 0 < epsilon <= 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1], got {epsilon}")
    if not T > 0 or not C > 0:
        raise ConfigurationError("T and C must be positive")
    if not nu_lp >= 0:
        raise ConfigurationError("nu_lp must be non-negative")
    d = 9 * p - 6
    return C * (nu_lp / c0**2) ** (p / d) * epsilon ** ((p - 1) / d) * T ** ((9 * p - 7) / d)


def delta_exponents(p: float) -> tuple[float, float, float]:
    d = 9 * p - 6
    return p / d, (p - 1) / d, (9 * p - 7) / d


def segment_distance(points: np.ndarray, a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return np.hypot(*(points - a).T)
    s = np.clip((points - a) @ ab / L2, 0.0, 1.0)
    proj = a + s[:, None] * ab
    return np.hypot(*(points - proj).T)


@dataclass(frozen=True)
class StraightnessReport:
    chord: float
    increase: float
    max_deviation: float
    delta_bound: float
    T: float
    slack: float
    violated: bool
    geometry_ok: bool
    required_C: float


AUDIT_ATOL = 1e-9

# Release calibration of the absolute constant in the straightness bound: the
# largest required C over constant, vortex and smooth off-centre vortex
# batteries (eps in {0.02, 0.04}, dx down to 0.005) was 0.039; rounded up.
RELEASE_C = 0.1


def required_constant(chord: float, increase: float, deviation: float, delta_unit: float, T: float) -> float:
    """Smallest ``C`` for which an audit with ``delta = C * delta_unit`` passes."""
    if delta_unit <= 0:
        return 0.0 if (chord - increase <= AUDIT_ATOL and deviation <= AUDIT_ATOL) else math.inf
    c1 = max(0.0, (chord - increase) / delta_unit)
    r = math.sqrt(delta_unit * T)
    s = (-r + math.sqrt(r * r + 4 * delta_unit * max(deviation, 0.0))) / (2 * delta_unit)
    return max(c1, s * s)


def _ellipse_excess(points, a, b) -> np.ndarray:
    """``|P - a| + |P - b| - |a - b|`` without cancellation for near-collinear points."""
    u = points - a
    v = points - b
    nu = np.hypot(u[:, 0], u[:, 1])
    nv = np.hypot(v[:, 0], v[:, 1])
    c = float(np.hypot(*(b - a)))
    dot = u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    between = dot < 0
    # (|u|+|v|)^2 - c^2 = 2(|u||v| + u.v) = 2 (u x v)^2 / (|u||v| - u.v) when u.v < 0
    num = np.where(between, 2 * cross**2 / np.where(between, nu * nv - dot, 1.0), 2 * (nu * nv + dot))
    return np.maximum(num / (nu + nv + c), 0.0)


def straightness_audit(curve: Curve, p: float, nu_lp: float, C: float) -> StraightnessReport:
    """Audit one curve against ``increase >= chord - delta`` and the ``delta + sqrt(delta T)`` band."""
    if len(curve.t) < 2:
        raise ConfigurationError("curve needs at least two samples")
    a, b = curve.points[0], curve.points[-1]
    chord = curve.chord
    inc = curve.increase
    if curve.backward:
        inc = -inc
    T = curve.T
    dev = float(segment_distance(curve.points, a, b).max())
    delta = delta_formula(p, nu_lp, curve.c0, curve.epsilon, T, C)
    violated = (inc < chord - delta - AUDIT_ATOL) or (dev > delta + math.sqrt(delta * T) + AUDIT_ATOL)
    # reverse-triangle slack of the sampled polyline
    slack = float(_ellipse_excess(curve.points, a, b).max()) / 2
    geometry_ok = dev <= 2 * slack + math.sqrt(6 * slack * T) + AUDIT_ATOL
    unit = delta_formula(p, nu_lp, curve.c0, curve.epsilon, T, 1.0)
    req = required_constant(chord, inc, dev, unit, T)
    return StraightnessReport(chord, inc, dev, delta, T, slack, bool(violated), bool(geometry_ok), req)


def calibrate_constant(curves, p: float, nu_lp: float) -> float:
    """Smallest ``C`` passing every audit in ``curves`` (the empirical calibration)."""
    return max((straightness_audit(c, p, nu_lp, 1.0).required_C for c in curves), default=0.0)


def zigzag_curve(start=(0.0, 0.0), direction=(0.0, 1.0), length: float = 0.5, teeth: int = 8,
                 epsilon: float = 0.02, c0: float = 0.5, dt: float | None = None) -> Curve:
    """Synthetic negative control: a zig-zag at 60 degrees to its chord, so ``increase = chord / 2``.

    Unit speed along the teeth; the fake potential grows like the projection on
    the chord direction rotated by 60 degrees, i.e. at rate ``cos 60 = 1/2``.
    """
    dt = dt or epsilon / 8
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(*d)
    nrm = np.array([-d[1], d[0]])
    tooth = length / teeth
    # each tooth goes out and back at 60 degrees, covering `tooth` along d
    leg = tooth / (2 * math.cos(math.pi / 3))
    total = 2 * teeth * leg
    t = np.arange(int(math.ceil(total / dt)) + 1) * dt
    t[-1] = total
    phase = np.mod(t, 2 * leg)
    side = np.where(phase <= leg, phase, 2 * leg - phase)
    along = t * math.cos(math.pi / 3)
    pts = np.asarray(start, dtype=float) + along[:, None] * d + (side * math.sin(math.pi / 3))[:, None] * nrm
    u = 0.5 * along
    return Curve(t, pts, u, np.full(t.shape, 1.0), float(epsilon), float(c0), float(dt), STOP_TIME)


# ---------------------------------------------------------------------------
# Maximal curves in a window
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MaximalCurve:
    X: np.ndarray
    Y: np.ndarray
    increase: float
    duration: float
    curve_forward: Curve
    curve_backward: Curve


def maximal_curve_endpoints(gradient: VectorField, center, window_radius: float, c0: float,
                            dt: float | None = None, epsilon: float | None = None) -> MaximalCurve:
    """Trace through ``center`` both ways until the curve leaves ``B_R(center)``."""
    eps = epsilon or getattr(gradient, "epsilon", None)
    if not eps:
        raise ConfigurationError("epsilon is required")
    dt = dt or eps / 8
    win = Disk(tuple(center), window_radius)
    max_T = 2 * window_radius / c0**2 + dt
    legs = []
    for backward in (False, True):
        cv = trace_curve(gradient, center, c0, max_T, dt, backward, win, eps)
        if cv.stop_reason == STOP_MODULUS:
            raise NumericalFailure(f"curve stalls: |m_eps| < c0 = {c0} near {tuple(cv.points[-1])}")
        if cv.stop_reason == STOP_TIME:
            raise NumericalFailure(f"curve did not leave the window within the time bound {max_T:.4g}")
        legs.append(truncate_to_window(cv, win))
    fwd, bwd = legs
    inc = fwd.increase - bwd.increase
    return MaximalCurve(bwd.points[-1].copy(), fwd.points[-1].copy(), float(inc), fwd.T + bwd.T, fwd, bwd)


# ---------------------------------------------------------------------------
# Strips
# ---------------------------------------------------------------------------


def alpha_p(p: float) -> float:
    return (p - 1) / (18 * p - 12)


@dataclass(frozen=True)
class StripSpec:
    a: float
    b: float
    K: float
    alpha: float

    def __post_init__(self):
        if not 0 < self.a < self.b <= 1:
            raise ConfigurationError(f"strip needs 0 < a < b <= 1, got a={self.a}, b={self.b}")
        if not self.K > 0:
            raise ConfigurationError("K must be positive")

    def radius(self, epsilon: float) -> float:
        return self.K * epsilon**self.alpha


@dataclass(frozen=True, eq=False)
class StripCrossing:
    strip: StripSpec
    xi: float
    entry: np.ndarray
    exit: np.ndarray
    increase: float
    zeta: float
    curve: Curve
    seeds: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    all_top_to_bottom: bool
    xi1_monotone: bool
    xi2_monotone: bool
    radial_error: float


def _strip_modulus_check(m_eps, strip: StripSpec, radius: float = 2.0):
    g = m_eps.grid
    X, Y = g.mesh()
    zone = (Y > strip.a) & (Y < strip.b) & (np.hypot(X, Y) < radius)
    if not zone.any():
        raise PreconditionError("strip contains no grid node")
    if not np.all(m_eps.mask[zone]):
        raise PreconditionError("mollified field undefined somewhere in the strip")
    mod = m_eps.modulus()[zone]
    if mod.min() < 0.5:
        k = int(np.argmin(mod))
        raise PreconditionError(
            f"|m_eps| = {mod[k]:.4f} < 1/2 in the strip at {(float(X[zone][k]), float(Y[zone][k]))}"
        )


def strip_cross(m_eps: MollifiedField, strip: StripSpec, xi: float, c0: float = 0.5,
                seed_spacing: float | None = None, dt: float | None = None) -> StripCrossing:
    """Cross ``{a < x2 < b}`` from near ``(xi, b)`` down to height ``a`` along ``grad u_eps``."""
    eps = m_eps.epsilon
    a, b = strip.a, strip.b
    if b - a < 2 * strip.radius(eps):
        raise ConfigurationError(
            f"strip too thin: b - a = {b - a:.4g} < 2 K eps^alpha = {2 * strip.radius(eps):.4g}"
        )
    if not abs(xi) < math.sqrt(1 - b * b):
        raise ConfigurationError(f"|xi| = {abs(xi)} must be below sqrt(1 - b^2) = {math.sqrt(1 - b * b)}")
    _strip_modulus_check(m_eps, strip)
    dt = dt or eps / 8
    spacing = seed_spacing or eps / 4
    y = 0.5 * (a + b)
    half = math.sqrt(1 - y * y)
    nseed = int(math.floor(2 * half / spacing))
    seeds_x = spacing * (np.arange(nseed) - (nseed - 1) / 2)
    seeds = np.stack([seeds_x, np.full(seeds_x.shape, y)], axis=1)
    win = Rectangle((-3.0, a), (6.0, b - a))
    grad = mollified_gradient(m_eps)
    # the time to cross is at most (b - a) / c0^2 (potential rate >= c0^2, 1-Lipschitz)
    max_T = 2 * (b - a) / c0**2
    fwd = [truncate_to_window(c, win) for c in trace_batch(grad, seeds, c0 * (1 - 1e-9), max_T, dt, eps, False, win)]
    bwd = [truncate_to_window(c, win) for c in trace_batch(grad, seeds, c0 * (1 - 1e-9), max_T, dt, eps, True, win)]
    tol = 1e-9
    top = np.array([c.stop_reason == STOP_LEFT and abs(c.points[-1, 1] - b) <= tol for c in bwd])
    bottom = np.array([c.stop_reason == STOP_LEFT and abs(c.points[-1, 1] - a) <= tol for c in fwd])
    xi1 = np.array([c.points[-1, 0] for c in bwd])
    xi2 = np.array([c.points[-1, 0] for c in fwd])
    full = top & bottom
    target = np.array([xi, b])
    best = (math.inf, -1, -1)
    for s in np.nonzero(full)[0]:
        d = np.hypot(*(bwd[s].points - target).T)
        k = int(np.argmin(d))
        if d[k] < best[0]:
            best = (float(d[k]), int(s), k)
    R = strip.radius(eps)
    if best[1] < 0 or best[0] >= R:
        gaps = np.diff(np.sort(xi1[full])) if full.sum() > 1 else np.array([])
        raise SearchFailure(
            f"no crossing enters B_(K eps^alpha)(({xi}, {b})) (radius {R:.4g}, closest {best[0]:.4g}); "
            f"{int(full.sum())}/{len(seeds)} full crossings, largest entry gap {gaps.max() if gaps.size else float('nan'):.4g}"
        )
    _, s, k = best
    bc, fc = bwd[s], fwd[s]
    # stitch gamma from the chosen point on the backward leg to the exit
    head = bc.points[k::-1][:-1] if k > 0 else np.empty((0, 2))
    pts = np.vstack([head, fc.points])
    # both legs carry u_eps relative to the seed (negative along the backward leg)
    u_head = bc.u_rel[k::-1][:-1] if k > 0 else np.empty(0)
    u = np.concatenate([u_head, fc.u_rel])
    u = u - u[0]
    t_head = bc.t[k] - bc.t[k::-1][:-1] if k > 0 else np.empty(0)
    t = np.concatenate([t_head, bc.t[k] + fc.t])
    mods = np.concatenate([bc.modulus[k::-1][:-1] if k > 0 else np.empty(0), fc.modulus])
    curve = Curve(t, pts, u, mods, eps, c0, dt, fc.stop_reason)
    idx = np.nonzero(full)[0]
    radial = float(np.max(np.abs(xi2[idx] - xi1[idx] * a / b))) if idx.size else math.nan
    mono1 = bool(np.all(np.diff(xi1[idx]) > 0))
    mono2 = bool(np.all(np.diff(xi2[idx]) > 0))
    return StripCrossing(
        strip, float(xi), pts[0].copy(), pts[-1].copy(), float(u[-1]), float(seeds[s, 0]), curve,
        seeds, xi1, xi2, bool(full.all()), mono1, mono2, radial,
    )


# ---------------------------------------------------------------------------
# Disk boundary-condition experiment
# ---------------------------------------------------------------------------


def check_bc_exponent(q: float) -> None:
    if not (BC_Q_MIN < q <= 6):
        raise ConfigurationError(f"q = {q} outside the admissible range {BC_RANGE} (lower end ~ {BC_Q_MIN:.4f})")


def bc_delta(q: float) -> float:
    return (alpha_p(q / 3) - 2 + q / 3) / 2


def _merge(intervals):
    out = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [tuple(iv) for iv in out]


@dataclass(frozen=True, eq=False)
class BCResult:
    epsilon: float
    q: float
    alpha: float
    delta: float
    K: float
    strips: tuple
    crossings: tuple
    excluded: tuple
    uncovered_measure: float
    n_centers: int
    lower_bound: float
    sup_u: float
    c_fit: float

    def csv_row(self) -> list:
        return [self.epsilon, self.q, self.lower_bound, self.sup_u, len(self.strips), len(self.crossings)]


BC_CSV_HEADER = ["epsilon", "q", "lower_bound", "sup_u", "n_strips", "n_crossings"]

DEFAULT_K_FLOOR = 0.02


def bc_experiment(
    m_bc: VectorField,
    epsilon: float,
    q: float = 6.0,
    K: float | None = None,
    kappa: float = 0.0,
    alpha_cover: float | None = None,
    c0: float = 0.5,
    dt: float | None = None,
    seed_spacing: float | None = None,
    top_gap: float | None = None,
) -> BCResult:
    """Chain strip crossings from ``(0, b_1)`` down to height ``a_N`` and bound ``u_eps`` from below.

    ``K`` defaults to ``max(3 kappa, DEFAULT_K_FLOOR)``; the strip argument only needs
    ``K`` above a multiple of the band constant ``kappa``, and ``K >= 1`` leaves
    no admissible strip at desk-scale ``eps``.
    """
    from .covering import cover  # covering depends on mollify only; keep import local to avoid cycles
    from .solutions import reconstruct_potential

    check_bc_exponent(q)
    p = q / 3
    alpha = alpha_p(p)
    delta = bc_delta(q)
    if K is None:
        K = max(3 * kappa, DEFAULT_K_FLOOR)
    g = m_bc.grid
    reach = 2.0 + 2 * epsilon
    if not g.covers_box(-reach, -reach, reach, reach):
        raise ConfigurationError(f"field must cover [-{reach}, {reach}]^2")
    m = crop(m_bc, (-reach, -reach, reach, reach))
    m_eps = mollify(m, cone_kernel(epsilon), source="bc")

    res = cover(crop(m_bc, (-2.0, -2.0, 2.0, 2.0)), epsilon, q, alpha_cover)
    centers = [c for c in res.centers if math.hypot(*c) < 2.0]
    excluded = [(cy - 5 * epsilon, cy + 5 * epsilon) for _, cy in centers]
    # safety net: rows of B_2 where the floor fails outside the covering balls
    X, Y = m_eps.grid.mesh()
    in_b2 = np.hypot(X, Y) < 2.0
    low = in_b2 & (~m_eps.mask | (m_eps.modulus() < 0.5))
    for y in np.unique(Y[low]):
        excluded.append((y - m_eps.grid.dy, y + m_eps.grid.dy))
    top = 1.0 - (top_gap if top_gap is not None else epsilon)
    bottom = epsilon
    excluded = [(max(lo, bottom), min(hi, top)) for lo, hi in _merge(excluded) if hi > bottom and lo < top]
    free, cur = [], top
    for lo, hi in sorted(excluded, key=lambda iv: -iv[1]):
        if hi < cur:
            free.append((hi, cur))
        cur = min(cur, lo)
    if cur > bottom:
        free.append((bottom, cur))
    need = 2 * K * epsilon**alpha
    strips = [(lo, hi) for lo, hi in free if hi - lo > need * (1 + 1e-12)]
    nmax = max(1, len(centers))
    if len(strips) > nmax:
        strips = sorted(sorted(strips, key=lambda iv: iv[0] - iv[1])[:nmax], key=lambda iv: -iv[1])
    if not strips:
        hist = ", ".join(f"({lo:.4f}, {hi:.4f})" for lo, hi in free)
        raise SearchFailure(f"no valid strip decomposition at eps = {epsilon}: need width > {need:.4g}; free gaps: {hist}")
    strips = sorted(strips, key=lambda iv: -iv[1])
    covered = sum(hi - lo for lo, hi in strips)
    uncovered = 1.0 - covered

    xi = 0.0
    crossings = []
    prev_exit = np.array([0.0, 1.0])
    gaps = 0.0
    total_inc = 0.0
    for lo, hi in strips:
        spec = StripSpec(lo, hi, K, alpha)
        cr = strip_cross(m_eps, spec, xi, c0, seed_spacing, dt)
        crossings.append(cr)
        gaps += float(np.hypot(*(cr.entry - prev_exit)))
        total_inc += cr.increase
        prev_exit = cr.exit
        xi = float(cr.exit[0])
    a_last = strips[-1][0]
    lower = -epsilon + total_inc - gaps - a_last

    mr = crop(m_eps, (-1.2, -1.2, 1.2, 1.2))
    anchor = mr.grid.nearest((1.0, 0.0))
    # u = 0 on the unit circle with grad u = -n there, so u(x_a) ~ 1 - |x_a| at the anchor node
    xa, ya = mr.grid.node(*anchor)
    pot = reconstruct_potential(mr, anchor, 1.0 - math.hypot(xa, ya), residual_tol=math.inf)
    Xr, Yr = mr.grid.mesh()
    inside = pot.u.mask & (np.hypot(Xr, Yr) < 1.0)
    sup_u = float(pot.u.values[inside].max())
    c_fit = (1 - lower) / epsilon**delta
    return BCResult(
        float(epsilon), float(q), alpha, delta, float(K), tuple(strips), tuple(crossings), tuple(excluded),
        float(uncovered), len(centers), float(lower), sup_u, float(c_fit),
    )
