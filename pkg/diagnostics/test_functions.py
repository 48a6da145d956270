"""
Space-time weights psi(t, x) = eta(t) phi(x) for the weak identities.

eta is either constant or a smooth plateau, phi either constant or a radial
bump (1 - r^2/R^2)_+^4. Both are evaluated in closed form; only the spatial
derivatives that enter the identities are taken on the grid.
"""
import math
from dataclasses import dataclass

import numpy as np

from core.exceptions import InvalidParameter

CONSTANT = 'constant'
PLATEAU = 'plateau'
BUMP = 'bump'


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)


def _smoothstep_slope(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x ** 2 * (1.0 - x) ** 2, 0.0)


@dataclass(frozen=True)
class TimeWeight:
    """eta(t): constant ``level``, or a C^2 plateau rising on [start, start+ramp] and falling on [end-ramp, end]."""
    kind: str = CONSTANT
    level: float = 1.0
    start: float = 0.0
    end: float = math.inf
    ramp: float = 0.0

    def __post_init__(self):
        if self.kind not in (CONSTANT, PLATEAU):
            raise InvalidParameter(f"unknown time weight {self.kind!r}")
        if self.level < 0:
            raise InvalidParameter("time weights must be nonnegative")
        if self.kind == PLATEAU and not (self.ramp > 0 and self.start + 2 * self.ramp <= self.end):
            raise InvalidParameter(f"plateau needs 0 < 2 ramp <= end - start, got ramp={self.ramp}")

    def __call__(self, t):
        if self.kind == CONSTANT:
            return self.level
        up = _smoothstep((t - self.start) / self.ramp)
        down = _smoothstep((self.end - t) / self.ramp)
        return float(self.level * up * down)

    def derivative(self, t):
        if self.kind == CONSTANT:
            return 0.0
        xu = (t - self.start) / self.ramp
        xd = (self.end - t) / self.ramp
        up, down = _smoothstep(xu), _smoothstep(xd)
        return float(self.level * (_smoothstep_slope(xu) * down - up * _smoothstep_slope(xd)) / self.ramp)


def constant_weight(level=1.0):
    return TimeWeight(CONSTANT, float(level))


def plateau_weight(T, ramp_fraction=0.25):
    """Plateau supported in [0, T]: eta(0) = eta(T) = 0."""
    return TimeWeight(PLATEAU, 1.0, 0.0, float(T), ramp_fraction * float(T))


@dataclass(frozen=True)
class SpatialWeight:
    kind: str = CONSTANT
    center: float = 0.0
    radius: float = math.inf

    def __post_init__(self):
        if self.kind not in (CONSTANT, BUMP):
            raise InvalidParameter(f"unknown spatial weight {self.kind!r}")
        if self.kind == BUMP and not (0 < self.radius < math.inf):
            raise InvalidParameter(f"bump radius must be positive and finite, got {self.radius}")

    @property
    def is_constant(self):
        return self.kind == CONSTANT

    def values(self, grid):
        if self.is_constant:
            return np.ones(grid.shape)
        s = (grid.radius(self.center) / self.radius) ** 2
        return np.where(s < 1.0, (1.0 - s) ** 4, 0.0)

    def gradient_ratio(self, grid):
        """|grad phi|^2 / phi, zero off the support."""
        if self.is_constant:
            return np.zeros(grid.shape)
        r = grid.radius(self.center)
        s = (r / self.radius) ** 2
        return np.where(s < 1.0, 64.0 * (1.0 - s) ** 2 * r ** 2 / self.radius ** 4, 0.0)


@dataclass(frozen=True)
class TestFunction:
    time: TimeWeight = TimeWeight()
    space: SpatialWeight = SpatialWeight()

    @property
    def spatially_constant(self):
        return self.space.is_constant

    def values(self, grid, t):
        return self.time(t) * self.space.values(grid)

    def time_derivative(self, grid, t):
        return self.time.derivative(t) * self.space.values(grid)

    def n_psi(self, grid, times, weights):
        """
        ||psi(0)||_1 + ||psi||_1 + ||d_t psi||_1 + || |grad psi|^2 / psi ||_1,
        the time integrals taken with the run's own step weights.
        """
        phi = self.space.values(grid)
        volume = grid.cell_volume
        phi_l1 = float(np.sum(phi)) * volume
        ratio_l1 = float(np.sum(self.space.gradient_ratio(grid))) * volume
        eta = np.array([self.time(t) for t in times])
        eta_dot = np.array([abs(self.time.derivative(t)) for t in times])
        w = np.asarray(weights, dtype=float)
        return (self.time(0.0) * phi_l1 + float(np.sum(w * eta)) * phi_l1
                + float(np.sum(w * eta_dot)) * phi_l1 + float(np.sum(w * eta)) * ratio_l1)


def total_energy_weight(eta=None):
    """psi = eta(t): the spatially constant form of the identities."""
    return TestFunction(eta or constant_weight(), SpatialWeight())


def default_test_function(rho, T, spread=None):
    """
    eta a plateau on [0, T] times a bump centred on the box centre covering
    the support of ``rho`` dilated by ``spread`` (default a quarter box).
    """
    grid = rho.grid
    center = grid.origin + 0.5 * grid.length
    r = grid.radius(center)
    occupied = rho.values > 0
    support = float(np.max(r[occupied])) if np.any(occupied) else 0.0
    spread = 0.25 * grid.length if spread is None else float(spread)
    radius = min(0.5 * grid.length, max(support + spread, 4.0 * grid.spacing))
    return TestFunction(plateau_weight(T) if T > 0 else constant_weight(), SpatialWeight(BUMP, center, radius))
