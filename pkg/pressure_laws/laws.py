"""
Pressure laws: an internal energy f, the viscosity nu and a growth term G.

A law is immutable. The pressure bound B of the initial datum travels with it
(``with_bound``) because the a-priori level B_p = max(p_H, B) and the density
cap sup df*(B_p) are what every stepper and monitor compares against.
"""
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from convex_energy.functions import ConvexScalarFunction, incompressible_energy, log_energy, power_energy
from convex_energy.services import conjugate
from core.exceptions import InvalidParameter
from field_grid.grids import ScalarField

POWER = 'power'
LOG = 'log'
INCOMPRESSIBLE = 'incompressible'
FAMILIES = (POWER, LOG, INCOMPRESSIBLE)

# p = f'(rho) = rho^gamma, or f = rho^gamma / gamma (so p = rho^(gamma - 1))
PRESSURE_NORMALIZATION = 'pressure'
ENERGY_NORMALIZATION = 'energy'

LINEAR = 'linear'
CLAMPED = 'clamped'
ZERO = 'zero'


@dataclass(frozen=True)
class GrowthLaw:
    """G(p) = g0 (1 - p / p_H), optionally clamped at 0, or G = 0."""
    kind: str
    p_H: float
    g0: float

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == ZERO:
            return np.zeros_like(p)
        g = self.g0 * (1.0 - p / self.p_H)
        if self.kind == CLAMPED:
            g = np.maximum(g, 0.0)
        return g

    @property
    def is_zero(self):
        return self.kind == ZERO

    def sup_abs(self, p_max):
        """max |G| over [0, p_max] (G is monotone)."""
        if self.is_zero:
            return 0.0
        return float(max(abs(self(0.0)), abs(self(p_max))))

    def describe(self):
        return {'kind': self.kind, 'p_H': self.p_H, 'g0': self.g0}


def linear_growth(p_H, g0):
    if not (p_H > 0 and g0 > 0):
        raise InvalidParameter(f"linear growth needs p_H > 0 and g0 > 0, got p_H={p_H}, g0={g0}")
    return GrowthLaw(LINEAR, float(p_H), float(g0))


def clamped_growth(p_H, g0):
    """max(G, 0): no resorption above the homeostatic pressure."""
    if not (p_H > 0 and g0 > 0):
        raise InvalidParameter(f"clamped growth needs p_H > 0 and g0 > 0, got p_H={p_H}, g0={g0}")
    return GrowthLaw(CLAMPED, float(p_H), float(g0))


def zero_growth():
    """G = 0. p_H is taken as 0 so that B_p reduces to the datum bound B."""
    return GrowthLaw(ZERO, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class PressureLaw:
    name: str
    family: str
    energy: ConvexScalarFunction
    nu: float
    growth: GrowthLaw
    gamma: Optional[float] = None
    normalization: str = PRESSURE_NORMALIZATION
    a0: float = 1.0
    # B of the initial datum (well-prepared level)
    bound_B: float = 0.0
    # per-species growth; empty means every species uses ``growth``
    species_growth: tuple = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown law family {self.family!r}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise InvalidParameter(f"viscosity must be a finite nu >= 0, got {self.nu}")
        if self.bound_B < 0:
            raise InvalidParameter(f"pressure bound B must be >= 0, got {self.bound_B}")

    @property
    def multivalued(self):
        return self.family == INCOMPRESSIBLE

    @property
    def p_H(self):
        return self.growth.p_H

    @cached_property
    def conjugate(self):
        return conjugate(self.energy)

    @property
    def pressure_bound(self):
        """B_p = max(p_H, B); with several species the largest p_H counts."""
        p_h = max([self.p_H] + [g.p_H for g in self.species_growth])
        return max(p_h, self.bound_B)

    def density_cap(self, level=None):
        """sup df*(level), by default at B_p."""
        level = self.pressure_bound if level is None else float(level)
        _, hi = self.conjugate.subdiff_bounds(level)
        return float(hi[()])

    def growth_for(self, species):
        if self.species_growth:
            return self.species_growth[species]
        return self.growth

    def with_bound(self, bound_B):
        return replace(self, bound_B=float(bound_B))

    def with_species_growth(self, *growths):
        return replace(self, species_growth=tuple(growths))

    def with_growth(self, growth):
        return replace(self, growth=growth)

    def describe(self):
        return {
            'name': self.name,
            'family': self.family,
            'gamma': self.gamma,
            'nu': self.nu,
            'normalization': self.normalization,
            'growth': self.growth.describe(),
            'species_growth': [g.describe() for g in self.species_growth],
            'bound_B': self.bound_B,
            'pressure_bound': self.pressure_bound,
            'density_cap': self.density_cap(),
        }


def power_law(gamma, nu, growth, normalization=PRESSURE_NORMALIZATION, a0=1.0):
    """
    Power law. With the default normalization f(a) = a^(gamma+1)/(gamma+1) so
    p = rho^gamma and gamma >= 1; the ``energy`` normalization uses
    f(a) = a^gamma/gamma (p = rho^(gamma-1)) and needs gamma > 1.
    """
    gamma = float(gamma)
    if normalization == PRESSURE_NORMALIZATION:
        if gamma < 1:
            raise InvalidParameter(f"power law needs gamma >= 1, got {gamma}")
        exponent = gamma
    elif normalization == ENERGY_NORMALIZATION:
        if gamma <= 1:
            raise InvalidParameter(f"energy-normalized power law needs gamma > 1, got {gamma}")
        exponent = gamma - 1.0
    else:
        raise InvalidParameter(f"unknown normalization {normalization!r}")
    return PressureLaw(
        name=f'power(gamma={gamma:g}, nu={float(nu):g})',
        family=POWER,
        energy=power_energy(exponent),
        nu=float(nu),
        growth=growth,
        gamma=gamma,
        normalization=normalization,
        a0=float(a0),
    )


def log_law(nu, growth, a0=0.5):
    nu = float(nu)
    if not nu > 0:
        raise InvalidParameter(f"log law needs nu > 0, got {nu}")
    if not 0 < a0 < 1:
        raise InvalidParameter(f"log law needs a0 in (0, 1), got {a0}")
    return PressureLaw(
        name=f'log(nu={nu:g})',
        family=LOG,
        energy=log_energy(nu),
        nu=nu,
        growth=growth,
        a0=float(a0),
    )


def incompressible_law(growth):
    """Hele-Shaw reference: f_0 = indicator of [0, 1]. Never a stepper input."""
    return PressureLaw(
        name='incompressible',
        family=INCOMPRESSIBLE,
        energy=incompressible_energy(),
        nu=0.0,
        growth=growth,
    )


def joint_limit_schedule(nu):
    """Default gamma(nu) = 1/nu for the joint limit."""
    return 1.0 / float(nu)


def joint_limit_law(nu, growth, schedule=joint_limit_schedule):
    nu = float(nu)
    if not nu > 0:
        raise InvalidParameter(f"joint limit needs nu > 0, got {nu}")
    return power_law(max(1.0, schedule(nu)), nu, growth)


@dataclass(frozen=True, eq=False)
class InitialData:
    """Per-species initial densities and the level B they are prepared for."""
    densities: tuple
    bound_B: float = 0.0

    def __post_init__(self):
        densities = tuple(self.densities)
        if not densities:
            raise InvalidParameter("initial data needs at least one species")
        grid = densities[0].grid
        if any(rho.grid != grid for rho in densities):
            raise InvalidParameter("all species must live on one grid")
        if self.bound_B < 0:
            raise InvalidParameter(f"pressure bound B must be >= 0, got {self.bound_B}")
        object.__setattr__(self, 'densities', tuple(
            rho if rho.density else rho.with_values(rho.values, density=True) for rho in densities))

    @property
    def grid(self):
        return self.densities[0].grid

    @property
    def species(self):
        return len(self.densities)

    def total(self):
        return ScalarField(self.grid, sum(rho.values for rho in self.densities), density=True)

    def mass(self):
        return self.total().integral()
