import filecmp
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from core.exceptions import (
    DomainTooSmall, DomainViolation, InvalidParameter, MultivaluedPressureError, TimeStepUnderflow,
)
from field_grid.grids import PERIODIC, Grid, ScalarField
from field_grid.operators import gradient
from pressure_laws.laws import InitialData, incompressible_law, linear_growth, log_law, power_law, zero_growth
from .observers import TrajectoryWriter
from .services import advance, initial_state, pressure_from_density, run, upwind_transport, face_rates
from .state import LEDGER_COLUMNS, StepControls
from .storage import load_trajectory, write_trajectory

G = linear_growth(1.0, 1.0)
GRID = Grid(1, 64, 4.0)


def bump(grid=GRID, height=0.5, width=0.8, center=0.0):
    r = grid.radius(center)
    return ScalarField(grid, np.where(r < width, height * (1.0 - (r / width) ** 2), 0.0), density=True)


def bump_data(grid=GRID, height=0.5, bound=1.0):
    return InitialData((bump(grid, height),), bound)


class PressureTests(SimpleTestCase):

    def test_power_law_pressure(self):
        p = pressure_from_density(GRID.constant(0.5, density=True), power_law(2, 0.1, G))
        np.testing.assert_allclose(p.values, 0.25, rtol=1e-14)

    def test_log_law_pressure(self):
        p = pressure_from_density(GRID.constant(0.5, density=True), log_law(1.0, G))
        np.testing.assert_allclose(p.values, 1.0, rtol=1e-14)

    def test_empty_density_has_zero_pressure(self):
        for law in (power_law(3, 0.1, G), log_law(0.5, G)):
            self.assertEqual(pressure_from_density(GRID.zeros(density=True), law).max(), 0.0)

    def test_incompressible_law_is_rejected(self):
        with self.assertRaises(MultivaluedPressureError):
            pressure_from_density(GRID.zeros(density=True), incompressible_law(G))

    def test_log_law_cap_names_the_cell(self):
        values = np.full(GRID.shape, 0.2)
        values[17] = 1.0 - 1e-13
        with self.assertRaises(DomainViolation) as ctx:
            pressure_from_density(ScalarField(GRID, values, density=True), log_law(1.0, G))
        self.assertEqual(ctx.exception.cell, (17,))


class ControlsTests(SimpleTestCase):

    def test_out_of_range_controls(self):
        for kwargs in ({'cfl_fraction': 0.0}, {'cfl_fraction': 1.5}, {'max_dt': -1.0},
                       {'reaction_fraction': 1.0}, {'record_stride': 0}):
            with self.assertRaises(InvalidParameter):
                StepControls(**kwargs)


class TransportTests(SimpleTestCase):

    def test_upwind_is_conservative_and_positive(self):
        grid = Grid(2, 16, 2.0)
        rng = np.random.default_rng(3)
        rho = rng.uniform(0.0, 1.0, grid.shape)
        potential = ScalarField(grid, rng.standard_normal(grid.shape))
        rates = face_rates(potential)
        out = sum(r + np.roll(l, 1, axis=a) for a, (r, l) in enumerate(rates))
        moved = upwind_transport(rho, rates, 1.0 / float(np.max(out)))
        self.assertGreaterEqual(moved.min(), 0.0)
        self.assertAlmostEqual(moved.sum(), rho.sum(), delta=1e-12 * rho.sum())


class LimiterTests(SimpleTestCase):

    def test_smooth_potential_is_transport_limited(self):
        law = power_law(1, 1.0, zero_growth())
        state = initial_state(bump_data(), law)
        _, record = advance(state, law, StepControls(max_dt=1.0))
        speed = max(float(np.max(np.abs(c))) for c in gradient(state.potential).components)
        self.assertEqual(record.limiter, 'transport')
        self.assertAlmostEqual(record.dt / (0.5 * GRID.spacing / speed), 1.0, places=12)

    def test_steep_pressure_is_parabolic_limited(self):
        law = power_law(80, 1e-3, G)
        state = initial_state(bump_data(height=0.95), law)
        _, record = advance(state, law, StepControls())
        self.assertEqual(record.limiter, 'parabolic')

    def test_max_dt_and_landing(self):
        law = power_law(1, 1.0, zero_growth())
        state = initial_state(bump_data(height=0.05), law)
        self.assertEqual(advance(state, law, StepControls(max_dt=1e-4))[1].limiter, 'max_dt')
        _, record = advance(state, law, StepControls(max_dt=1e-4), dt_cap=5e-5)
        self.assertEqual((record.limiter, record.dt), ('landing', 5e-5))


class StepTests(SimpleTestCase):

    def test_zero_density_stays_zero(self):
        data = InitialData((GRID.zeros(density=True),))
        traj = run(data, power_law(2, 0.1, G), 0.2)
        self.assertEqual(traj.final.total().max(), 0.0)

    def test_uniform_density_is_stationary_without_growth(self):
        grid = Grid(1, 32, 1.0, PERIODIC)
        data = InitialData((grid.constant(0.5, density=True),))
        traj = run(data, power_law(1, 0.1, zero_growth()), 0.1)
        np.testing.assert_allclose(traj.final.total().values, 0.5, atol=1e-13)

    def test_positivity_is_exact(self):
        traj = run(bump_data(), power_law(3, 1e-2, G), 0.3)
        self.assertGreaterEqual(float(np.min(traj.steps.arrays()['rho'])), 0.0)
        self.assertGreaterEqual(traj.final.total().min(), 0.0)

    def test_mass_is_conserved_without_growth(self):
        for grid in (GRID, Grid(2, 24, 4.0)):
            data = bump_data(grid)
            traj = run(data, power_law(1, 1e-2, zero_growth()), 0.2)
            self.assertLess(abs(traj.final.mass() - data.mass()) / data.mass(), 1e-12)

    def test_mass_ledger_identity(self):
        law = power_law(2, 1e-2, G)
        state = initial_state(bump_data(), law)
        for _ in range(20):
            new_state, record = advance(state, law, StepControls())
            expected = record.mass + record.dt * record.growth_rate
            self.assertAlmostEqual(new_state.mass(), expected, delta=1e-13 * max(1.0, expected))
            state = new_state

    def test_ledger_rows_telescope(self):
        traj = run(bump_data(), power_law(2, 1e-2, G), 0.2)
        ledger = np.asarray(traj.ledger)
        self.assertEqual(ledger.shape[1], len(LEDGER_COLUMNS))
        mass, dt, rate = ledger[:, 3], ledger[:, 2], ledger[:, 4]
        np.testing.assert_allclose(mass[1:], mass[:-1] + dt[:-1] * rate[:-1], rtol=1e-12)

    def test_mass_grows_at_most_exponentially(self):
        data = bump_data()
        T = 0.5
        traj = run(data, power_law(1, 1e-2, G), T)
        self.assertLessEqual(traj.final.mass(), math.exp(G(0.0) * T) * data.mass() * (1 + 1e-9))

    def test_pressure_stays_below_the_bound(self):
        data = bump_data(height=0.8, bound=0.8)
        law = power_law(1, 1e-2, G)
        traj = run(data, law, 1.0)
        bound = max(law.p_H, data.bound_B)
        self.assertLessEqual(float(np.max(traj.steps.arrays()['pressure'])), bound + 1e-3)

    def test_two_species_sum_matches_one_species(self):
        law = power_law(2, 1e-2, G)
        rho = bump()
        split = InitialData((rho * 0.3, rho * 0.7))
        two = run(split, law, 0.2)
        one = run(InitialData((rho,)), law, 0.2)
        np.testing.assert_allclose(two.final.total().values, one.final.total().values, atol=1e-12)

    def test_distinct_species_growth_keeps_the_ledger(self):
        law = power_law(2, 1e-2, G).with_species_growth(linear_growth(1.0, 1.0), linear_growth(0.5, 2.0))
        state = initial_state(InitialData((bump() * 0.5, bump() * 0.5)), law)
        new_state, record = advance(state, law, StepControls())
        self.assertAlmostEqual(new_state.mass(), record.mass + record.dt * record.growth_rate, delta=1e-13)
        self.assertNotAlmostEqual(new_state.densities[0].integral(), new_state.densities[1].integral(), places=8)


class RunTests(SimpleTestCase):

    def test_zero_horizon_returns_the_initial_snapshot(self):
        data = bump_data()
        traj = run(data, power_law(2, 0.1, G), 0.0)
        self.assertEqual(traj.snapshot_times(), [0.0])
        np.testing.assert_array_equal(traj.final.total().values, data.total().values)

    def test_snapshots_land_on_requested_times(self):
        traj = run(bump_data(), power_law(2, 0.1, G), 0.1, snapshot_times=[0.0, 0.0375, 0.1])
        self.assertEqual(traj.snapshot_times(), [0.0, 0.0375, 0.1])

    def test_recorded_weights_cover_the_horizon(self):
        traj = run(bump_data(), power_law(2, 0.1, G), 0.2, controls=StepControls(record_stride=3))
        self.assertAlmostEqual(sum(traj.steps.weights), 0.2, places=12)

    def test_incompressible_law_cannot_run(self):
        with self.assertRaises(MultivaluedPressureError):
            run(bump_data(), incompressible_law(G), 0.1)

    def test_density_at_the_wall_is_too_small_a_box(self):
        data = InitialData((GRID.constant(0.1, density=True),))
        with self.assertRaises(DomainTooSmall):
            run(data, power_law(2, 0.1, G), 0.1)

    @override_settings(GROWTHLAB={'MAX_STEPS': 3})
    def test_step_budget(self):
        with self.assertRaises(TimeStepUnderflow):
            run(bump_data(), power_law(2, 0.1, G), 1.0)

    @override_settings(GROWTHLAB={'MIN_DT': 1.0})
    def test_time_step_floor(self):
        with self.assertRaises(TimeStepUnderflow) as ctx:
            run(bump_data(), power_law(2, 0.1, G), 1.0)
        self.assertLess(ctx.exception.dt, 1.0)


class StorageTests(SimpleTestCase):

    def test_written_run_reads_back(self):
        traj = run(bump_data(), power_law(2, 0.1, G), 0.1, snapshot_times=[0.0, 0.05, 0.1])
        with tempfile.TemporaryDirectory() as tmp:
            write_trajectory(traj, tmp, scenario='bump')
            stored = load_trajectory(tmp)
            self.assertEqual(stored.times, [0.0, 0.05, 0.1])
            self.assertEqual(stored.grid, GRID)
            self.assertEqual(stored.snapshots[-1].shape, (3,) + GRID.shape)
            np.testing.assert_array_equal(stored.snapshots[-1][0], traj.final.densities[0].values)
            self.assertEqual(stored.ledger.shape, (len(traj.ledger), len(LEDGER_COLUMNS)))
            self.assertEqual(set(stored.steps), {'times', 'dts', 'rho', 'pressure', 'potential', 'growth'})
            self.assertTrue((Path(tmp) / 'snapshots' / 't_2_pressure.csv').exists())

    def test_streamed_and_written_runs_are_identical(self):
        law = power_law(2, 0.1, G)
        with tempfile.TemporaryDirectory() as streamed, tempfile.TemporaryDirectory() as written:
            run(bump_data(), law, 0.05, observers=[TrajectoryWriter(streamed)])
            write_trajectory(run(bump_data(), law, 0.05), written)
            for name in ('manifest.json', 'ledger.csv', 'snapshots/t_1.npy', 'steps/rho.npy'):
                self.assertTrue(filecmp.cmp(Path(streamed) / name, Path(written) / name, shallow=False), name)
