# brinkman_stepper/services.py
# explicit upwind transport along -grad w plus pressure-dependent growth
import logging
import math
from dataclasses import replace

import numpy as np

from core.conf import growthlab_setting
from core.exceptions import DomainTooSmall, DomainViolation, MultivaluedPressureError, TimeStepUnderflow
from field_grid.grids import ScalarField
from field_grid.operators import boundary_band_max, gradient
from helmholtz_solver.services import solve_w
from pressure_laws.services import validate_well_prepared
from .observers import MassLedger, SnapshotObserver, StepRecorder
from .state import SolverState, StepControls, StepRecord, Trajectory

logger = logging.getLogger(__name__)

BRINKMAN = 'brinkman'


def pressure_from_density(rho_total, law):
    """p = f'(rho) cellwise. Multivalued laws and densities at the cap are rejected."""
    if law.multivalued:
        raise MultivaluedPressureError(f"{law.name} has a multivalued pressure; use a large-gamma power law")
    f = law.energy
    values = rho_total.values
    if math.isfinite(f.domain_hi):
        limit = f.domain_hi - growthlab_setting('DOMAIN_GUARD')
        bad = values >= limit
        if np.any(bad):
            cell = tuple(int(i) for i in np.argwhere(bad)[0])
            logger.error(f"density {values[cell]:.15g} at cell {cell} reached the cap of {law.name}")
            raise DomainViolation(f"density {values[cell]:.15g} at cell {cell} is at the edge of dom(f)",
                                  value=float(values[cell]), cell=cell)
    outside = ~f.in_domain(values)
    if np.any(outside):
        cell = tuple(int(i) for i in np.argwhere(outside)[0])
        raise DomainViolation(f"density {values[cell]:.6g} at cell {cell} is outside dom(f)",
                              value=float(values[cell]), cell=cell)
    return ScalarField(rho_total.grid, f.derivative_at(values))


def flux_slope(law, rho):
    """rho f''(rho): the diffusivity of the nu = 0 flux rho grad f'(rho)."""
    rho = np.asarray(rho, dtype=float)
    return rho * law.energy.curvature_at(rho)


def growth_arrays(state, law):
    return [law.growth_for(i)(state.pressure.values) for i in range(state.species)]


def effective_growth(state, law):
    """sum_i rho_i G_i(p) / rho cellwise; G_0(p) where the cell is empty."""
    growths = growth_arrays(state, law)
    if state.species == 1 or not law.species_growth:
        return np.array(growths[0])
    total = state.total().values
    weighted = np.sum([rho.values * g for rho, g in zip(state.densities, growths)], axis=0)
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, weighted / safe, growths[0])


def growth_rate(state, law):
    """sum_i int rho_i G_i(p)."""
    volume = state.grid.cell_volume
    return float(sum(np.sum(rho.values * g) for rho, g in zip(state.densities, growth_arrays(state, law))) * volume)


def face_rates(potential):
    """Per axis, (rightward, leftward) face speeds divided by h, from u = -grad w."""
    h = potential.grid.spacing
    rates = []
    for comp in gradient(potential).components:
        u = -comp
        rates.append((np.maximum(u, 0.0) / h, np.maximum(-u, 0.0) / h))
    return rates


def outflow_rate(rates):
    out = 0.0
    for axis, (right, left) in enumerate(rates):
        # leftward flow through the left face of cell i sits at face index i-1
        out = out + right + np.roll(left, 1, axis=axis)
    return out


def upwind_transport(values, rates, dt):
    """
    Donor-cell update in coefficient form: rho_i (1 - dt * outflow_i) plus
    the inflow from upwind neighbours. Every term is nonnegative when
    dt * outflow <= 1.
    """
    inflow = np.zeros_like(values)
    for axis, (right, left) in enumerate(rates):
        inflow += np.roll(values * right, 1, axis=axis)
        inflow += np.roll(values, -1, axis=axis) * left
    keep = np.maximum(1.0 - dt * outflow_rate(rates), 0.0)
    return values * keep + dt * inflow


def _stability_limits(state, law, controls, rates):
    """
    Candidate steps keyed by limiter name:

    transport   cfl h / max|grad w|
    positivity  1 / max outflow, the donor-cell bound; binds only when
                cfl_fraction > 1 / (2 dim)
    parabolic   cfl (h^2 / 2d + nu) / max rho f''(rho); the velocity follows
                rho through p, so a steep pressure needs this bound as well
    reaction    reaction_fraction / max|G|
    """
    grid = state.grid
    h = grid.spacing
    limits = {'max_dt': controls.max_dt}
    speed = max(float(max(np.max(right), np.max(left))) * h for right, left in rates)
    if speed > 0:
        limits['transport'] = controls.cfl_fraction * h / speed
    max_out = float(np.max(outflow_rate(rates)))
    if max_out > 0:
        limits['positivity'] = 1.0 / max_out
    phi_max = float(np.max(flux_slope(law, state.total().values)))
    if phi_max > 0:
        limits['parabolic'] = controls.cfl_fraction * (h ** 2 / (2 * grid.dim) + law.nu) / phi_max
    g_max = max(float(np.max(np.abs(g))) for g in growth_arrays(state, law))
    if g_max > 0:
        limits['reaction'] = controls.reaction_fraction / g_max
    return limits


def choose_dt(limits, dt_cap):
    limiter = min(limits, key=limits.get)
    dt = limits[limiter]
    if dt_cap <= dt:
        return dt_cap, 'landing'
    if dt < growthlab_setting('MIN_DT'):
        logger.error(f"time step {dt:.3e} below MIN_DT (limited by {limiter})")
        raise TimeStepUnderflow(f"time step {dt:.3e} fell below the floor ({limiter} limit)", dt=dt)
    return dt, limiter


def check_boundary(total):
    if total.grid.periodic:
        return
    cells = int(growthlab_setting('BOUNDARY_GUARD_CELLS'))
    level = float(growthlab_setting('BOUNDARY_GUARD_LEVEL'))
    band = boundary_band_max(total, cells)
    if band >= level:
        logger.error(f"density {band:.3e} within {cells} cells of the box wall")
        raise DomainTooSmall(f"density {band:.3e} reached the boundary band; enlarge the box",
                             level=band, cell=cells)


def complete_state(t, densities, law, step, previous=None):
    """Build a state with p and w recomputed from the densities."""
    grid = densities[0].grid
    total = densities[0] if len(densities) == 1 else ScalarField(
        grid, np.sum([rho.values for rho in densities], axis=0), density=True)
    pressure = pressure_from_density(total, law)
    potential = solve_w(pressure, law.nu, x0=None if previous is None else previous.potential)
    return SolverState(t, tuple(densities), pressure, potential, step)


def initial_state(data, law):
    return complete_state(0.0, data.densities, law, 0)


def advance(state, law, controls, dt_cap=math.inf):
    """One Brinkman step; returns the new state and the step record."""
    rates = face_rates(state.potential)
    dt, limiter = choose_dt(_stability_limits(state, law, controls, rates), dt_cap)
    growths = growth_arrays(state, law)
    volume = state.grid.cell_volume
    densities, rate = [], 0.0
    for rho, g in zip(state.densities, growths):
        moved = upwind_transport(rho.values, rates, dt)
        rate += float(np.sum(moved * g)) * volume
        densities.append(ScalarField(state.grid, moved * (1.0 + dt * g), density=True))
    new_state = complete_state(state.t + dt, densities, law, state.step + 1, previous=state)
    check_boundary(new_state.total())
    record = StepRecord(
        index=state.step,
        t=state.t,
        dt=dt,
        mass=state.mass(),
        mass_after=new_state.mass(),
        growth_rate=rate,
        max_pressure=state.pressure.max(),
        max_density=state.total().max(),
        limiter=limiter,
    )
    return new_state, record


def step(state, law, controls):
    return advance(state, law, controls)[0]


def integrate(state, law, T, controls, observers, advance_fn, model):
    """
    Drive ``advance_fn`` from ``state`` to time T, landing exactly on every
    time an observer requests, and feed the observers.
    """
    T = float(T)
    trajectory = Trajectory(law=law, grid=state.grid, controls=controls, model=model, initial=state)
    targets = sorted({t for obs in observers for t in obs.requested_times(T)} | {T})
    targets = [t for t in targets if t >= state.t]
    max_steps = int(growthlab_setting('MAX_STEPS'))
    for obs in observers:
        obs.on_start(state, trajectory)

    def take_snapshot(s):
        trajectory.snapshots.append(s)
        for obs in observers:
            obs.on_snapshot(s, trajectory)

    if targets and targets[0] == state.t:
        take_snapshot(state)
        targets.pop(0)
    taken = 0
    while targets:
        if taken >= max_steps:
            logger.error(f"{model} run used its budget of {max_steps} steps at t={state.t:.6g}")
            raise TimeStepUnderflow(f"step budget of {max_steps} exhausted at t={state.t:.6g}")
        new_state, record = advance_fn(state, law, controls, targets[0] - state.t)
        for obs in observers:
            obs.on_step(state, record, trajectory)
        state = new_state
        taken += 1
        if record.limiter == 'landing':
            state = replace(state, t=targets[0])
            take_snapshot(state)
            targets.pop(0)
    for obs in observers:
        obs.on_finish(state, trajectory)
    logger.info(f"{model} run finished: {taken} steps to T={T:g}, {len(trajectory.snapshots)} snapshots")
    return trajectory


def default_observers(law, controls, T, snapshot_times, observers):
    times = snapshot_times if snapshot_times is not None else (0.0, T)
    return [
        SnapshotObserver(times),
        StepRecorder(controls.record_stride, lambda s: effective_growth(s, law)),
        MassLedger(lambda s: growth_rate(s, law)),
        *observers,
    ]


def run(initial, law, T, controls=None, observers=(), snapshot_times=None):
    """Brinkman run from well-prepared data; snapshots default to t = 0 and t = T."""
    controls = controls or StepControls()
    if law.multivalued:
        raise MultivaluedPressureError(f"{law.name} cannot drive the Brinkman stepper")
    report = validate_well_prepared(initial, law)
    if not report.passed:
        logger.warning(f"running {law.name} from data that is not well prepared")
    state = initial_state(initial, law)
    check_boundary(state.total())
    logger.info(f"brinkman run: {law.name}, N={state.grid.cells}, dim={state.grid.dim}, T={T:g}")
    return integrate(state, law, T, controls, default_observers(law, controls, T, snapshot_times, observers),
                     advance, BRINKMAN)
