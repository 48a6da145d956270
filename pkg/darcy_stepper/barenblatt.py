"""
Barenblatt self-similar solutions of the porous medium equation.

For p = rho^q the growth-free Darcy equation is rho_t = c Lap(rho^m) with
m = q + 1 and c = q / (q + 1). The source-type solution of u_t = Lap(u^m) is

    u(t, x) = t^-alpha (C - k |x|^2 t^(-2 alpha / d))_+^(1 / (m - 1))

with alpha = d / (d (m - 1) + 2) and k = alpha (m - 1) / (2 m d); the factor
c only rescales time. Profiles are started at a positive time ``t0`` so the
initial datum is bounded and compactly supported.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from core.exceptions import InvalidParameter
from field_grid.grids import ScalarField
from pressure_laws.laws import InitialData
from .services import pressure_exponent


@dataclass(frozen=True)
class BarenblattProfile:
    exponent: float
    dim: int
    height: float = 1.0
    t0: float = 1.0

    def __post_init__(self):
        if not self.exponent > 0:
            raise InvalidParameter(f"Barenblatt profile needs a positive pressure exponent, got {self.exponent}")
        if not (self.height > 0 and self.t0 > 0):
            raise InvalidParameter("Barenblatt height and start time must be positive")

    @property
    def m(self):
        return self.exponent + 1.0

    @property
    def coefficient(self):
        return self.exponent / (self.exponent + 1.0)

    @property
    def alpha(self):
        return self.dim / (self.dim * (self.m - 1.0) + 2.0)

    @property
    def k(self):
        return self.alpha * (self.m - 1.0) / (2.0 * self.m * self.dim)

    def _tau(self, t):
        # time on the u_t = Lap(u^m) clock, shifted so t = 0 is the start of a run
        return self.t0 + self.coefficient * t

    def density(self, r, t):
        tau = self._tau(t)
        core = self.height - self.k * np.asarray(r, dtype=float) ** 2 * tau ** (-2.0 * self.alpha / self.dim)
        return tau ** -self.alpha * np.power(np.maximum(core, 0.0), 1.0 / (self.m - 1.0))

    def support_radius(self, t):
        tau = self._tau(t)
        return math.sqrt(self.height / self.k) * tau ** (self.alpha / self.dim)

    def mass(self):
        """Conserved total mass (time independent)."""
        s = 1.0 / (self.m - 1.0)
        radius = math.sqrt(self.height / self.k)
        # int_{|y| < R} (C - k|y|^2)^s dy in d dimensions
        ball = math.pi ** (self.dim / 2.0) / gamma_fn(self.dim / 2.0 + 1.0)
        beta_factor = gamma_fn(s + 1.0) * gamma_fn(self.dim / 2.0 + 1.0) / gamma_fn(s + self.dim / 2.0 + 1.0)
        return float(ball * radius ** self.dim * self.height ** s * beta_factor)

    def field(self, grid, t, center=0.0):
        """Cell-center samples of the profile on ``grid``."""
        if grid.dim != self.dim:
            raise InvalidParameter(f"{self.dim}D profile sampled on a {grid.dim}D grid")
        return ScalarField(grid, self.density(grid.radius(center), t), density=True)

    def initial_data(self, grid, bound_B=0.0):
        return InitialData((self.field(grid, 0.0),), bound_B)


def barenblatt_for(law, dim, height=1.0, t0=1.0):
    return BarenblattProfile(pressure_exponent(law), dim, height, t0)
