# convex_energy/services.py
# conjugates, envelopes and the e <-> z coupling constructions
import logging
import math
from dataclasses import dataclass

import numpy as np

from core.conf import growthlab_setting
from core.exceptions import ConvexityError, CouplingRelationError, DomainViolation
from core.numerics import bisect_monotone, cumulative_integral, uniform_nodes
from .functions import INF, tabulate

logger = logging.getLogger(__name__)

# pressure window used when no scenario supplies 4 * B_p
DEFAULT_B_MAX = 4.0
# density window used for energies with an unbounded domain
DEFAULT_A_MAX = 4.0


def _probe_points(f):
    lo = f.domain_lo if math.isfinite(f.domain_lo) else min(-1.0, f.domain_hi - 2.0)
    hi = f.domain_hi if math.isfinite(f.domain_hi) else max(1.0, lo + 2.0)
    return np.linspace(lo, hi, 65)


def _check_proper(f):
    if f.domain_lo > f.domain_hi or (f.domain_lo == f.domain_hi and not (f.lo_closed and f.hi_closed)):
        raise ConvexityError(f"{f.name} is +inf everywhere")
    probe = _probe_points(f)
    values = f.value_at(probe)
    if np.any(np.isnan(values)) or np.any(values == -INF):
        raise ConvexityError(f"{f.name} takes the value -inf or is undefined somewhere")
    if not np.any(np.isfinite(values)):
        raise ConvexityError(f"{f.name} is +inf everywhere")


def density_window(f, a_max=None):
    """[0, a_max] inside dom(f): the density range tabulated constructions cover."""
    if a_max is not None:
        return 0.0, float(a_max)
    if math.isfinite(f.domain_hi):
        if f.hi_closed:
            return 0.0, float(f.domain_hi)
        return 0.0, float(f.domain_hi) * (1.0 - 1e-6)
    return 0.0, DEFAULT_A_MAX


def _bracket(f, targets, outward):
    """
    Bracket end for the subgradient search: the closed domain end when finite,
    otherwise grow outward until the slope passes every target.
    """
    end = f.domain_hi if outward > 0 else f.domain_lo
    if math.isfinite(end):
        return float(end)
    x = 1.0 * outward
    for _ in range(200):
        lo, hi = f.subdiff_bounds(x)
        slope = (hi if outward < 0 else lo)[()]
        if (outward > 0 and slope >= np.max(targets)) or (outward < 0 and slope <= np.min(targets)):
            return x
        x *= 2.0
    raise ConvexityError(f"{f.name}: conjugate is +inf on part of the requested window")


def argmax_points(f, b):
    """a(b) with b in df(a): the maximizer of a*b - f(a), vectorized over b."""
    b = np.asarray(b, dtype=float)
    a_lo = _bracket(f, b, -1)
    a_hi = _bracket(f, b, +1)

    def classify(a):
        lo, hi = f.subdiff_bounds(a)
        return np.where(hi < b, -1, np.where(lo > b, 1, 0))

    a = bisect_monotone(classify, np.full(b.shape, a_lo), np.full(b.shape, a_hi))
    # rounding the last midpoint can land on an open domain end
    return np.where(f.in_domain(a), a, np.nextafter(a, -INF))


def conjugate(f, window=None, points=None):
    """
    f*(b) = sup_a ab - f(a).

    Closed-form laws return their closed-form conjugate. Anything else is
    tabulated on ``window`` (default [0, 4]): the maximizer a(b) is found by
    bisection on the subdifferential, f*(b) = b a(b) - f(a(b)) and f*'(b) = a(b).
    """
    closed = f.closed_conjugate()
    if closed is not None:
        return closed
    _check_proper(f)
    lo, hi = window or (0.0, DEFAULT_B_MAX)
    b = uniform_nodes(lo, hi, points)
    a = argmax_points(f, b)
    values = b * a - f.value_at(a)
    if not np.all(np.isfinite(values)):
        raise ConvexityError(f"{f.name}: conjugate is not finite on [{lo}, {hi}]")
    logger.debug(f"tabulated conjugate of {f.name} on [{lo}, {hi}] with {b.size} nodes")
    return tabulate(f"conjugate[{f.name}]", b, values, a)


def subdifferential(f, a):
    """[inf df(a), sup df(a)]; empty interval where df(a) is empty."""
    return f.subdiff_at(a)


def moreau_conjugate(f_star, delta, window=None, points=None):
    """
    Moreau envelope inf_t f*(t) + |t - b|^2 / (2 delta), tabulated.

    The proximal point t(b) solves b in t + delta df*(t); the envelope slope
    is (b - t(b)) / delta.
    """
    delta = float(delta)
    if not delta > 0:
        raise ConvexityError(f"Moreau envelope needs delta > 0, got {delta}")
    lo, hi = window or (0.0, DEFAULT_B_MAX)
    b = uniform_nodes(lo, hi, points)

    def reach(t, side):
        s_lo, s_hi = f_star.subdiff_bounds(t)
        return t + delta * (s_hi if side > 0 else s_lo)[()]

    t_lo = f_star.domain_lo if math.isfinite(f_star.domain_lo) else lo - 1.0
    while not math.isfinite(f_star.domain_lo) and reach(t_lo, +1) > lo:
        t_lo = lo - 2.0 * (lo - t_lo) - 1.0
    t_hi = f_star.domain_hi if math.isfinite(f_star.domain_hi) else hi + 1.0
    while not math.isfinite(f_star.domain_hi) and reach(t_hi, -1) < hi:
        t_hi = hi + 2.0 * (t_hi - hi) + 1.0

    def classify(t):
        s_lo, s_hi = f_star.subdiff_bounds(t)
        return np.where(t + delta * s_hi < b, -1, np.where(t + delta * s_lo > b, 1, 0))

    theta = bisect_monotone(classify, np.full(b.shape, t_lo), np.full(b.shape, t_hi))
    values = f_star.value_at(theta) + (theta - b) ** 2 / (2.0 * delta)
    slopes = (b - theta) / delta
    return tabulate(f"moreau[{f_star.name}, delta={delta:g}]", b, values, slopes)


def h_energy(f, window=None, points=None):
    """h(a) = a f(a) - 2 int_0^a f, with h'(a) = a f'(a) - f(a)."""
    lo, hi = density_window(f, None if window is None else window[1])
    a = uniform_nodes(lo, hi, points)
    fv = f.value_at(a)
    if not np.all(np.isfinite(fv)):
        raise DomainViolation(f"{f.name} is not finite on [0, {hi}]", value=hi)
    fd = f.derivative_at(a)
    integral = cumulative_integral(a, fv, fd)
    values = a * fv - 2.0 * integral
    slopes = a * fd - fv
    return tabulate(f"h[{f.name}]", a, values, slopes, like=f)


@dataclass(frozen=True)
class CouplingCheck:
    residual: float
    worst_a: float

    def passed(self, tol=None):
        tol = growthlab_setting('COUPLING_TOL') if tol is None else tol
        return self.residual <= tol


def check_coupling(e, z, f, samples=None):
    """
    Worst relative residual of a c - e(a) = z'(b) over sampled a, with b at
    both ends of df(a) and the best c in de(a).
    """
    if samples is None:
        # stay where both tables are populated
        _, hi = density_window(f)
        if hasattr(z, 'window'):
            hi = min(hi, float(argmax_points(f, np.array([z.window[1]]))[0]))
        if hasattr(e, 'window'):
            hi = min(hi, e.window[1])
        samples = np.linspace(0.0, hi, 258)[1:-1]
    a = np.asarray(samples, dtype=float)
    a = a[a > 0]
    e_val = e.value_at(a)
    c_lo, c_hi = e.subdiff_bounds(a)
    b_lo, b_hi = f.subdiff_bounds(a)
    worst = np.zeros(a.shape)
    for b in (b_lo, b_hi):
        usable = np.isfinite(b)
        zb = np.where(usable, z.derivative_at(np.where(usable, b, 0.0)), 0.0)
        c = np.clip((zb + e_val) / a, c_lo, c_hi)
        scale = np.maximum(1.0, np.maximum(np.abs(zb), np.abs(e_val)))
        r = np.where(usable, np.abs(a * c - e_val - zb) / scale, 0.0)
        worst = np.maximum(worst, r)
    k = int(np.argmax(worst))
    return CouplingCheck(residual=float(worst[k]), worst_a=float(a[k]))


def _check_compatible(e, S, f, a_hi):
    a = np.linspace(0.0, a_hi, 66)[1:-1]
    b = f.derivative_at(a)
    sb = np.asarray(S(b), dtype=float)
    c_lo, c_hi = e.subdiff_bounds(a)
    gap = np.abs(np.clip(sb, c_lo, c_hi) - sb) / np.maximum(1.0, np.abs(sb))
    worst = float(np.max(gap))
    if worst > growthlab_setting('COUPLING_TOL') * 10:
        k = int(np.argmax(gap))
        raise CouplingRelationError(
            f"de(a) != S(df(a)) at a={a[k]:.6g} (gap {worst:.3g})", residual=worst)


def z_from_e(e, S, f, window=None, points=None):
    """
    z'(b) = int_0^b f*'(beta) dS(beta), z(b) = int_0^b z'.

    The Stieltjes integral runs on the S values of the b grid, so S only has
    to be monotone, not differentiable. The canonical selection S o R with
    R = identity is used at singular points.
    """
    tol = growthlab_setting('COUPLING_TOL')
    e0 = e.value_at(0.0)
    if not (math.isfinite(e0) and abs(e0) <= tol):
        raise ConvexityError(f"{e.name}: e(0) must be 0, got {e0}")
    _, hi = window or (0.0, DEFAULT_B_MAX)
    if hasattr(S, 'value_at'):
        S = S.value_at
    b = uniform_nodes(0.0, hi, points)
    s = np.asarray(S(b), dtype=float)
    if np.any(np.diff(s) < -tol * max(1.0, float(np.max(np.abs(s))))):
        raise ConvexityError("S must be nondecreasing")
    f_star = conjugate(f, window=(0.0, hi), points=points)
    a_hi = float(f_star.derivative_at(hi))
    if hasattr(e, 'window'):
        a_hi = min(a_hi, e.window[1])
    _check_compatible(e, S, f, a_hi)
    # cell average of f*' is exact from f* values, which keeps the
    # quadrature accurate where f*' is singular (power laws at b = 0)
    mean_density = np.diff(f_star.value_at(b)) / np.diff(b)
    z_prime = np.concatenate(([0.0], np.cumsum(mean_density * np.diff(s))))
    z_values = cumulative_integral(b, z_prime)
    return tabulate(f"z[{e.name}]", b, z_values, z_prime)


def e_from_z(z, f, a1, window=None, points=None):
    """
    e(a) = a int_{a1}^a z'(f'(alpha)) / alpha^2 d alpha, e(0) = 0.

    Different a1 only add a linear term to e.
    """
    a1 = float(a1)
    if not (f.domain_lo < a1 < f.domain_hi):
        raise ConvexityError(f"a1={a1} is not interior to dom({f.name})")
    tol = growthlab_setting('COUPLING_TOL')
    if abs(z.value_at(0.0)) > tol or abs(z.derivative_at(0.0)) > tol:
        raise ConvexityError(f"{z.name}: need z(0) = z'(0) = 0")
    lo, hi = density_window(f, None if window is None else window[1])
    a = uniform_nodes(lo, hi, points)
    interior = a[1:]
    if not interior[0] <= a1 <= interior[-1]:
        raise ConvexityError(f"a1={a1} is outside the tabulation window [{interior[0]}, {interior[-1]}]")
    integrand = z.derivative_at(f.derivative_at(interior)) / interior ** 2
    running = cumulative_integral(interior, integrand)
    running = running - np.interp(a1, interior, running)
    values = np.concatenate(([0.0], interior * running))
    slopes = running + interior * integrand
    # secant slope at the origin keeps the node slopes monotone
    slopes = np.concatenate(([values[1] / interior[0]], slopes))
    return tabulate(f"e[{z.name}, a1={a1:g}]", a, values, slopes, like=f)


def affine_gap(reference, other, samples):
    """Least-squares affine fit of other - reference; returns (slope, worst residual)."""
    x = np.asarray(samples, dtype=float)
    diff = other.value_at(x) - reference.value_at(x)
    slope, intercept = np.polyfit(x, diff, 1)
    residual = diff - (slope * x + intercept)
    return float(slope), float(np.max(np.abs(residual)))
