"""
Convex scalar functions on the real line.

Two representations share one interface:
  - ClosedFormFunction: analytic value (and, when known, slopes, curvature and
    conjugate). Slopes fall back to one-sided difference quotients.
  - TabulatedFunction: node values plus nondecreasing node slopes on a uniform
    grid; the slope is interpolated linearly and the value is the matching
    piecewise quadratic.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from core.conf import growthlab_setting
from core.exceptions import DomainViolation, ConvexityError

CLOSED_FORM = 'closed_form'
TABULATED = 'tabulated'

INF = math.inf


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]; lo > hi signals the empty set."""
    lo: float
    hi: float

    @property
    def is_empty(self):
        return not (self.lo <= self.hi)

    def contains(self, x, tol=0.0):
        return (not self.is_empty) and (self.lo - tol <= x <= self.hi + tol)

    def clip(self, x):
        return min(max(x, self.lo), self.hi)


EMPTY_INTERVAL = Interval(INF, -INF)


def _as_array(a):
    arr = np.asarray(a, dtype=float)
    return arr, arr.ndim == 0


def _unwrap(result, scalar):
    return float(result) if scalar else result


class ConvexScalarFunction(ABC):
    """
    Proper, lower semicontinuous, convex f: R -> (-inf, +inf].

    Subclasses provide the evaluation hooks on the interior of the domain;
    this class handles the domain bookkeeping (+inf outside, unbounded
    subdifferential at closed endpoints, empty subdifferential at open ones).
    """

    name: str
    domain_lo: float
    domain_hi: float
    lo_closed: bool
    hi_closed: bool

    @property
    @abstractmethod
    def representation(self):
        ...

    @abstractmethod
    def _value(self, a):
        ...

    @abstractmethod
    def _one_sided(self, a):
        """(left slope, right slope) at points of the domain."""

    @abstractmethod
    def _curvature(self, a):
        ...

    def closed_conjugate(self):
        return None

    # domain ---------------------------------------------------------------

    def in_domain(self, a):
        a = np.asarray(a, dtype=float)
        above = (a > self.domain_lo) | (self.lo_closed & (a == self.domain_lo))
        below = (a < self.domain_hi) | (self.hi_closed & (a == self.domain_hi))
        return above & below

    def in_closure(self, a):
        a = np.asarray(a, dtype=float)
        return (a >= self.domain_lo) & (a <= self.domain_hi)

    # evaluation -----------------------------------------------------------

    def value_at(self, a):
        a, scalar = _as_array(a)
        out = np.full(a.shape, INF)
        inside = self.in_domain(a)
        if np.any(inside):
            out[inside] = self._value(a[inside])
        return _unwrap(out, scalar)

    def subdiff_bounds(self, a):
        """Vectorized [inf df(a), sup df(a)]; empty (inf, -inf) off the domain."""
        a, _ = _as_array(a)
        lo = np.full(a.shape, INF)
        hi = np.full(a.shape, -INF)
        inside = self.in_domain(a)
        if np.any(inside):
            left, right = self._one_sided(a[inside])
            left = np.array(left, dtype=float, copy=True)
            right = np.array(right, dtype=float, copy=True)
            pts = a[inside]
            if self.lo_closed and math.isfinite(self.domain_lo):
                left = np.where(pts == self.domain_lo, -INF, left)
            if self.hi_closed and math.isfinite(self.domain_hi):
                right = np.where(pts == self.domain_hi, INF, right)
            lo[inside] = left
            hi[inside] = right
        return lo, hi

    def subdiff_at(self, a):
        a = float(a)
        if not self.in_closure(a):
            raise DomainViolation(f"{self.name}: {a} is outside the closure of its domain", value=a)
        lo, hi = self.subdiff_bounds(a)
        if lo[()] > hi[()]:
            return EMPTY_INTERVAL
        return Interval(float(lo[()]), float(hi[()]))

    def derivative_at(self, a):
        """Minimal finite selection of the subdifferential; nan off the domain."""
        a, scalar = _as_array(a)
        lo, hi = self.subdiff_bounds(a)
        out = np.where(np.isfinite(lo), lo, hi)
        out = np.where(lo > hi, np.nan, out)
        return _unwrap(out, scalar)

    def curvature_at(self, a):
        """Second derivative (density part); zero off the domain."""
        a, scalar = _as_array(a)
        out = np.zeros(a.shape)
        inside = self.in_domain(a)
        if np.any(inside):
            out[inside] = self._curvature(a[inside])
        return _unwrap(out, scalar)

    def __repr__(self):
        return (f"<{type(self).__name__} {self.name} on "
                f"{'[' if self.lo_closed else '('}{self.domain_lo}, {self.domain_hi}"
                f"{']' if self.hi_closed else ')'}>")


@dataclass(frozen=True, repr=False, eq=False)
class ClosedFormFunction(ConvexScalarFunction):
    name: str
    value: Callable
    domain_lo: float = -INF
    domain_hi: float = INF
    lo_closed: bool = False
    hi_closed: bool = False
    slope: Optional[Callable] = None
    left_slope: Optional[Callable] = None
    right_slope: Optional[Callable] = None
    curvature: Optional[Callable] = None
    conjugate_factory: Optional[Callable] = None
    kink_threshold: Optional[float] = None

    @property
    def representation(self):
        return CLOSED_FORM

    def closed_conjugate(self):
        if self.conjugate_factory is None:
            return None
        return self.conjugate_factory()

    def _value(self, a):
        return np.asarray(self.value(a), dtype=float)

    def _one_sided(self, a):
        if self.left_slope is not None and self.right_slope is not None:
            return (np.asarray(self.left_slope(a), dtype=float),
                    np.asarray(self.right_slope(a), dtype=float))
        if self.slope is not None:
            s = np.asarray(self.slope(a), dtype=float)
            return s, s
        return self._difference_quotients(a)

    def _difference_quotients(self, a):
        eps = 1e-7 * np.maximum(1.0, np.abs(a))
        fa = self._value(a)
        with np.errstate(invalid='ignore', over='ignore'):
            right = (self.value_at(a + eps) - fa) / eps
            left = (fa - self.value_at(a - eps)) / eps
        threshold = self.kink_threshold
        if threshold is None:
            threshold = growthlab_setting('KINK_THRESHOLD')
        both = np.isfinite(left) & np.isfinite(right)
        scale = np.maximum(1.0, np.maximum(np.abs(np.where(both, left, 0.0)),
                                           np.abs(np.where(both, right, 0.0))))
        kink = both & ((right - left) > threshold * scale)
        # smooth points: both quotients estimate one derivative
        mean = 0.5 * (left + right)
        left = np.where(both & ~kink, mean, left)
        right = np.where(both & ~kink, mean, right)
        return left, right

    def _curvature(self, a):
        if self.curvature is not None:
            return np.asarray(self.curvature(a), dtype=float)
        eps = 1e-4 * np.maximum(1.0, np.abs(a))
        up = np.where(self.in_domain(a + eps), a + eps, a)
        down = np.where(self.in_domain(a - eps), a - eps, a)
        width = np.where(up > down, up - down, 1.0)
        if self.slope is not None:
            diff = np.asarray(self.slope(up), dtype=float) - np.asarray(self.slope(down), dtype=float)
            return np.where(up > down, diff / width, 0.0)
        mid = 0.5 * (up + down)
        half = 0.5 * width
        second = (self._value(up) - 2.0 * self._value(mid) + self._value(down)) / half ** 2
        return np.where(up > down, np.maximum(second, 0.0), 0.0)


@dataclass(frozen=True, repr=False, eq=False)
class TabulatedFunction(ConvexScalarFunction):
    name: str
    nodes: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    domain_lo: float = -INF
    domain_hi: float = INF
    lo_closed: bool = False
    hi_closed: bool = False
    spacing: float = field(init=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        slopes = np.asarray(self.slopes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ConvexityError(f"{self.name}: a tabulation needs at least 3 nodes")
        if values.shape != nodes.shape or slopes.shape != nodes.shape:
            raise ConvexityError(f"{self.name}: nodes, values and slopes must have one entry each")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(slopes))):
            raise ConvexityError(f"{self.name}: tabulated data must be finite")
        spacing = (nodes[-1] - nodes[0]) / (nodes.size - 1)
        if spacing <= 0 or not np.allclose(np.diff(nodes), spacing, rtol=1e-9, atol=0.0):
            raise ConvexityError(f"{self.name}: tabulation nodes must be uniform and increasing")
        # convexity: node slopes are made nondecreasing
        slopes = np.maximum.accumulate(slopes)
        for attr, arr in (('nodes', nodes), ('values', values), ('slopes', slopes)):
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, 'spacing', float(spacing))

    @property
    def representation(self):
        return TABULATED

    @property
    def window(self):
        return float(self.nodes[0]), float(self.nodes[-1])

    def _locate(self, a):
        k = np.floor((a - self.nodes[0]) / self.spacing).astype(int)
        k = np.clip(k, 0, self.nodes.size - 2)
        t = np.clip(a - self.nodes[k], 0.0, self.spacing)
        return k, t

    def _value(self, a):
        x0, x1 = self.window
        k, t = self._locate(a)
        h = self.spacing
        v0, v1 = self.values[k], self.values[k + 1]
        d0, d1 = self.slopes[k], self.slopes[k + 1]
        inner = v0 + (v1 - v0) * t / h - (d1 - d0) * t * (h - t) / (2.0 * h)
        left = self.values[0] + self.slopes[0] * (a - x0)
        right = self.values[-1] + self.slopes[-1] * (a - x1)
        return np.where(a < x0, left, np.where(a > x1, right, inner))

    def _slope(self, a):
        x0, x1 = self.window
        k, t = self._locate(a)
        d0, d1 = self.slopes[k], self.slopes[k + 1]
        inner = d0 + (d1 - d0) * t / self.spacing
        return np.where(a < x0, self.slopes[0], np.where(a > x1, self.slopes[-1], inner))

    def _one_sided(self, a):
        s = self._slope(a)
        return s, s

    def _curvature(self, a):
        x0, x1 = self.window
        k, _ = self._locate(a)
        inner = (self.slopes[k + 1] - self.slopes[k]) / self.spacing
        return np.where((a < x0) | (a > x1), 0.0, inner)


def tabulate(name, nodes, values, slopes, like=None, **domain):
    """Build a TabulatedFunction, inheriting the domain of ``like`` unless given."""
    if like is not None:
        domain = {
            'domain_lo': like.domain_lo,
            'domain_hi': like.domain_hi,
            'lo_closed': like.lo_closed,
            'hi_closed': like.hi_closed,
            **domain,
        }
    return TabulatedFunction(name=name, nodes=nodes, values=values, slopes=slopes, **domain)


# closed-form catalog --------------------------------------------------------

def quadratic():
    """a^2/2 on the whole line (self-dual)."""
    return ClosedFormFunction(
        name='quadratic',
        value=lambda a: 0.5 * a * a,
        slope=lambda a: a,
        curvature=lambda a: np.ones_like(a),
        conjugate_factory=quadratic,
    )


def power_energy(q):
    """a^(q+1)/(q+1) on [0, inf), so that the slope is a^q."""
    q = float(q)
    if q <= 0:
        raise ConvexityError(f"power energy needs a positive exponent, got {q}")

    def curvature(a):
        with np.errstate(divide='ignore'):
            return np.where(a > 0, q * np.power(a, q - 1.0), 0.0 if q >= 1 else INF)

    return ClosedFormFunction(
        name=f'power(q={q:g})',
        value=lambda a: np.power(a, q + 1.0) / (q + 1.0),
        domain_lo=0.0,
        lo_closed=True,
        slope=lambda a: np.power(a, q),
        curvature=curvature,
        conjugate_factory=lambda: power_conjugate(q),
    )


def power_conjugate(q):
    """(q/(q+1)) b_+^((q+1)/q), the conjugate of power_energy(q)."""
    q = float(q)

    def curvature(b):
        bp = np.maximum(b, 0.0)
        with np.errstate(divide='ignore'):
            return np.where(b > 0, np.power(bp, 1.0 / q - 1.0) / q, 0.0)

    return ClosedFormFunction(
        name=f'power_conjugate(q={q:g})',
        value=lambda b: q / (q + 1.0) * np.power(np.maximum(b, 0.0), (q + 1.0) / q),
        slope=lambda b: np.power(np.maximum(b, 0.0), 1.0 / q),
        curvature=curvature,
        conjugate_factory=lambda: power_energy(q),
    )


def log_energy(nu):
    """-nu (a + ln(1 - a)) on [0, 1)."""
    nu = float(nu)
    return ClosedFormFunction(
        name=f'log(nu={nu:g})',
        value=lambda a: -nu * (a + np.log1p(-a)),
        domain_lo=0.0,
        domain_hi=1.0,
        lo_closed=True,
        hi_closed=False,
        slope=lambda a: nu * a / (1.0 - a),
        curvature=lambda a: nu / (1.0 - a) ** 2,
        conjugate_factory=lambda: log_conjugate(nu),
    )


def log_conjugate(nu):
    """b_+ - nu ln(1 + b_+/nu), the conjugate of log_energy(nu)."""
    nu = float(nu)

    def value(b):
        bp = np.maximum(b, 0.0)
        return bp - nu * np.log1p(bp / nu)

    return ClosedFormFunction(
        name=f'log_conjugate(nu={nu:g})',
        value=value,
        slope=lambda b: np.maximum(b, 0.0) / (np.maximum(b, 0.0) + nu),
        curvature=lambda b: np.where(b > 0, nu / (np.maximum(b, 0.0) + nu) ** 2, 0.0),
        conjugate_factory=lambda: log_energy(nu),
    )


def incompressible_energy():
    """Indicator of [0, 1]: 0 there, +inf elsewhere. Stored exactly."""
    return ClosedFormFunction(
        name='incompressible',
        value=lambda a: np.zeros_like(a),
        domain_lo=0.0,
        domain_hi=1.0,
        lo_closed=True,
        hi_closed=True,
        slope=lambda a: np.zeros_like(a),
        curvature=lambda a: np.zeros_like(a),
        conjugate_factory=positive_part,
    )


def positive_part():
    """b_+ with the kink [0, 1] at the origin."""
    return ClosedFormFunction(
        name='positive_part',
        value=lambda b: np.maximum(b, 0.0),
        left_slope=lambda b: np.where(b > 0, 1.0, 0.0),
        right_slope=lambda b: np.where(b >= 0, 1.0, 0.0),
        curvature=lambda b: np.zeros_like(b),
        conjugate_factory=incompressible_energy,
    )


def from_callable(name, value, domain_lo=-INF, domain_hi=INF, lo_closed=False,
                  hi_closed=False, kink_threshold=None):
    """Value-only convex function; slopes come from one-sided difference quotients."""
    return ClosedFormFunction(
        name=name,
        value=value,
        domain_lo=domain_lo,
        domain_hi=domain_hi,
        lo_closed=lo_closed,
        hi_closed=hi_closed,
        kink_threshold=kink_threshold,
    )
