# darcy_stepper/services.py
# nu = 0 limit: rho_t = Lap Phi(rho) + rho G(p) with Phi = f* o f'
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from brinkman_stepper.services import (
    choose_dt, complete_state, default_observers, growth_arrays, integrate, pressure_from_density,
)
from brinkman_stepper import services as brinkman
from brinkman_stepper.state import StepControls, StepRecord
from convex_energy.functions import ClosedFormFunction
from core.checks import CheckReport
from core.conf import growthlab_setting
from core.exceptions import InvalidParameter, MultivaluedPressureError, TimeStepUnderflow
from field_grid.grids import ScalarField
from field_grid.operators import gradient, laplacian
from pressure_laws.laws import POWER, PRESSURE_NORMALIZATION
from pressure_laws.services import validate_well_prepared

logger = logging.getLogger(__name__)

DARCY = 'darcy'
DIVERGENCE = 'divergence'
UPWIND = 'upwind'
TRANSPORTS = (DIVERGENCE, UPWIND)

# power laws at or above this exponent are treated as Hele-Shaw proxies
HELE_SHAW_GAMMA = 20.0


@dataclass(frozen=True, eq=False)
class DarcyFlux:
    """Phi with grad Phi(rho) = rho grad p; Phi(a) = f*(f'(a)) = a f'(a) - f(a)."""
    law: object
    potential: ClosedFormFunction

    def __call__(self, rho):
        return self.potential.value_at(rho)

    def slope(self, rho):
        """Phi'(a) = a f''(a)."""
        return self.potential.derivative_at(rho)


def flux_potential(law):
    if law.multivalued:
        raise MultivaluedPressureError(f"{law.name} has no single-valued flux potential; use a large-gamma power law")
    f = law.energy
    f_star = law.conjugate

    def value(a):
        a = np.asarray(a, dtype=float)
        return f_star.value_at(f.derivative_at(a))

    def slope(a):
        a = np.asarray(a, dtype=float)
        return a * f.curvature_at(a)

    potential = ClosedFormFunction(
        name=f'flux[{law.name}]',
        value=value,
        domain_lo=f.domain_lo,
        domain_hi=f.domain_hi,
        lo_closed=f.lo_closed,
        hi_closed=f.hi_closed,
        slope=slope,
    )
    return DarcyFlux(law, potential)


def darcy_law(law):
    """The same law with the Brinkman viscosity switched off (w = p)."""
    return law if law.nu == 0 else replace(law, nu=0.0)


def pressure_exponent(law):
    """q in p = rho^q for a power law."""
    if law.family != POWER:
        raise InvalidParameter(f"{law.name} is not a power law")
    return law.gamma if law.normalization == PRESSURE_NORMALIZATION else law.gamma - 1.0


def _darcy_limits(state, law, flux, controls):
    grid = state.grid
    limits = {'max_dt': controls.max_dt}
    slope_max = float(np.max(flux.slope(state.total().values)))
    if slope_max > 0:
        limits['parabolic'] = controls.cfl_fraction * grid.spacing ** 2 / (2 * grid.dim * slope_max)
    g_max = max(float(np.max(np.abs(g))) for g in growth_arrays(state, law))
    if g_max > 0:
        limits['reaction'] = controls.reaction_fraction / g_max
    return limits


def suggested_cells(grid, slope_max, T, controls):
    """Finest cell count whose parabolic step reaches T inside the step budget."""
    if slope_max <= 0 or T <= 0:
        return grid.cells
    budget = int(growthlab_setting('MAX_STEPS'))
    h_min = math.sqrt(2 * grid.dim * slope_max * T / (controls.cfl_fraction * budget))
    return max(8, min(grid.cells, int(grid.length / h_min)))


def species_shares(state):
    """
    rho_i / rho per cell. Empty cells take the mix of their neighbours, the
    cells the diffusive inflow comes from; an isolated empty cell splits evenly.
    """
    if state.species == 1:
        return [np.ones(state.grid.shape)]
    values = [rho.values for rho in state.densities]
    grid = state.grid
    around = []
    for v in values:
        near = np.zeros_like(v)
        for axis in range(grid.dim):
            near += np.roll(v, 1, axis=axis) + np.roll(v, -1, axis=axis)
        around.append(near)
    total = np.sum(values, axis=0)
    near_total = np.sum(around, axis=0)
    even = 1.0 / state.species
    shares = []
    for v, near in zip(values, around):
        from_neighbours = np.where(near_total > 0, near / np.where(near_total > 0, near_total, 1.0), even)
        shares.append(np.where(total > 0, v / np.where(total > 0, total, 1.0), from_neighbours))
    return shares


def advance_darcy(state, law, controls, dt_cap=math.inf, flux=None):
    """
    Divergence-form step, split as diffusion then growth:

        rho* = rho + dt Lap_h Phi(rho),    rho_new = rho* (1 + dt G(p))

    which agrees with the unsplit rho + dt (Lap_h Phi(rho) + rho G(p)) to
    first order in dt. The split form stays nonnegative whenever each half
    does (cfl_fraction <= 1, reaction_fraction < 1); the unsplit form needs
    the two fractions to add up to at most 1.
    """
    flux = flux or flux_potential(law)
    dt, limiter = choose_dt(_darcy_limits(state, law, flux, controls), dt_cap)
    total = state.total()
    diffused = laplacian(ScalarField(state.grid, flux(total.values))).values
    volume = state.grid.cell_volume
    densities, rate = [], 0.0
    for rho, g, share in zip(state.densities, growth_arrays(state, law), species_shares(state)):
        moved = rho.values + dt * share * diffused
        rate += float(np.sum(moved * g)) * volume
        densities.append(ScalarField(state.grid, moved * (1.0 + dt * g), density=True))
    new_state = complete_state(state.t + dt, densities, law, state.step + 1)
    brinkman.check_boundary(new_state.total())
    record = StepRecord(
        index=state.step,
        t=state.t,
        dt=dt,
        mass=state.mass(),
        mass_after=new_state.mass(),
        growth_rate=rate,
        max_pressure=state.pressure.max(),
        max_density=total.max(),
        limiter=limiter,
    )
    return new_state, record


def step_darcy(state, law, controls, transport=DIVERGENCE):
    law = darcy_law(law)
    if transport == UPWIND:
        return brinkman.advance(state, law, controls)[0]
    return advance_darcy(state, law, controls)[0]


def formulation_gap(rho, law):
    """
    L1 norm over faces of grad Phi(rho) - rho_face grad p, with rho_face the
    mean of the two cells. Zero in the continuum; O(h) on smooth data.
    """
    flux = flux_potential(law)
    grid = rho.grid
    direct = gradient(ScalarField(grid, flux(rho.values)))
    p_grad = gradient(pressure_from_density(rho, law))
    total = 0.0
    for axis, (a, b) in enumerate(zip(direct.components, p_grad.components)):
        rho_face = 0.5 * (rho.values + np.roll(rho.values, -1, axis=axis))
        total += float(np.sum(np.abs(a - rho_face * b)))
    return total * grid.cell_volume


def check_proxy_data(data, law):
    """Large-gamma runs stand in for the incompressible limit only from data with rho <= 1."""
    report = CheckReport('hele_shaw_proxy', advisory=True)
    peak = data.total().max()
    report.add('density_at_most_one', peak <= 1.0, peak, 1.0)
    report.metadata['gamma'] = law.gamma
    return report


def run_darcy(initial, law, T, controls=None, observers=(), snapshot_times=None, transport=DIVERGENCE):
    """Darcy run; ``transport='upwind'`` reuses the Brinkman step at nu = 0 as a cross-check."""
    if transport not in TRANSPORTS:
        raise InvalidParameter(f"transport must be one of {TRANSPORTS}, got {transport!r}")
    controls = controls or StepControls()
    law = darcy_law(law)
    flux = flux_potential(law)
    if not validate_well_prepared(initial, law).passed:
        logger.warning(f"running {law.name} (darcy) from data that is not well prepared")
    if law.family == POWER and law.gamma >= HELE_SHAW_GAMMA and not check_proxy_data(initial, law).checks[0].passed:
        logger.warning(f"gamma={law.gamma:g} proxy started above density 1; the Hele-Shaw comparison does not apply")
    state = complete_state(0.0, initial.densities, law, 0)
    brinkman.check_boundary(state.total())
    slope_max = float(np.max(flux.slope(state.total().values)))
    if transport == UPWIND:
        advance_fn = brinkman.advance
    else:
        def advance_fn(s, lw, c, dt_cap):
            return advance_darcy(s, lw, c, dt_cap, flux=flux)
    logger.info(f"darcy run ({transport}): {law.name}, N={state.grid.cells}, dim={state.grid.dim}, T={T:g}")
    try:
        return integrate(state, law, T, controls,
                         default_observers(law, controls, T, snapshot_times, observers), advance_fn, DARCY)
    except TimeStepUnderflow as exc:
        if exc.suggested_cells is not None:
            raise
        cells = suggested_cells(state.grid, slope_max, T, controls)
        logger.error(f"darcy run for {law.name} underflowed; try N={cells}")
        raise TimeStepUnderflow(f"{exc} (suggested grid: {cells} cells per axis)",
                                dt=exc.dt, suggested_cells=cells) from exc
