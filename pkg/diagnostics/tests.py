import math
import tempfile

import numpy as np
from django.test import SimpleTestCase, tag

from brinkman_stepper.services import run
from brinkman_stepper.state import StepControls
from brinkman_stepper.storage import load_trajectory, write_trajectory
from convex_energy.functions import ClosedFormFunction, quadratic
from core.exceptions import CouplingRelationError, InvalidParameter
from darcy_stepper.services import darcy_law, run_darcy
from experiments.rates import fit_slope
from field_grid.grids import PERIODIC, Grid, ScalarField
from field_grid.operators import cell_gradient_sq, gradient
from pressure_laws.laws import InitialData, linear_growth, power_law, zero_growth
from .reports import INFO, RHS, DissipationReport
from .services import (
    ENTROPY, bound_energy_report, bound_monitor, complementarity_residual, derivative_budget,
    derivative_identity_report, eee_residual, flux_swap_error, friction_identity_gap, gradient_control,
    h1_energy_report, h1_pair, internal_energy_report, internal_pair, interval_measure, power_entropy_report,
    power_pair, pressure_gap, singular_mass, singular_mass_ratio, step_series, velocity_gap,
)
from .test_functions import (
    BUMP, SpatialWeight, TestFunction, constant_weight, default_test_function, plateau_weight,
    total_energy_weight,
)

G = linear_growth(1.0, 1.0)
GRID = Grid(1, 64, 6.0)


def bump(grid=GRID, height=0.5, width=0.8):
    r = grid.radius()
    return ScalarField(grid, np.where(r < width, height * (1.0 - (r / width) ** 2) ** 2, 0.0), density=True)


def bump_data(grid=GRID, height=0.5, bound=1.0):
    return InitialData((bump(grid, height),), bound)


def uniform_run(law, T=0.1):
    grid = Grid(1, 32, 1.0, PERIODIC)
    return run(InitialData((grid.constant(0.5, density=True),)), law, T)


LINEAR = ClosedFormFunction(name='linear', value=lambda a: a, slope=lambda a: np.ones_like(a),
                            curvature=lambda a: np.zeros_like(a))
ZERO = ClosedFormFunction(name='zero', value=lambda b: np.zeros_like(b), slope=lambda b: np.zeros_like(b),
                          curvature=lambda b: np.zeros_like(b))


class TestFunctionTests(SimpleTestCase):

    def test_plateau_vanishes_at_both_ends(self):
        eta = plateau_weight(1.0)
        self.assertEqual(eta(0.0), 0.0)
        self.assertEqual(eta(1.0), 0.0)
        self.assertEqual(eta(0.5), 1.0)

    def test_plateau_derivative_matches_difference_quotient(self):
        eta = plateau_weight(2.0)
        for t in (0.1, 0.3, 1.7):
            quotient = (eta(t + 1e-6) - eta(t - 1e-6)) / 2e-6
            self.assertAlmostEqual(eta.derivative(t), quotient, places=5)

    def test_constant_weight_n_psi(self):
        psi = total_energy_weight()
        # ||psi(0)|| + T ||psi|| with psi = 1 on a box of length 6
        self.assertAlmostEqual(psi.n_psi(GRID, [0.0, 0.5], [0.5, 0.5]), 6.0 + 6.0, places=12)

    def test_bump_ratio_matches_grid_gradient(self):
        phi = SpatialWeight(BUMP, 0.0, 2.0)
        grid = Grid(1, 2048, 6.0)
        values = phi.values(grid)
        sq = cell_gradient_sq(gradient(ScalarField(grid, values)))
        inside = values > 1e-3
        np.testing.assert_allclose(sq[inside] / values[inside], phi.gradient_ratio(grid)[inside],
                                   rtol=5e-2, atol=1e-3)

    def test_default_test_function_covers_the_support(self):
        psi = default_test_function(bump(), 1.0)
        self.assertGreater(psi.space.radius, 0.8)
        self.assertLessEqual(psi.space.radius, 3.0)
        self.assertFalse(psi.spatially_constant)

    def test_invalid_weights(self):
        with self.assertRaises(InvalidParameter):
            SpatialWeight(BUMP, 0.0, math.inf)
        with self.assertRaises(InvalidParameter):
            plateau_weight(1.0, ramp_fraction=0.75)


class ReportTests(SimpleTestCase):

    def test_residual_is_lhs_minus_rhs(self):
        report = DissipationReport('demo')
        report.add_term('a', 2.0)
        report.add_term('b', 0.5, side=RHS)
        report.add_term('extra', 100.0, side=INFO)
        self.assertEqual(report.residual, 1.5)
        self.assertEqual(report.normalized_residual, 0.75)

    def test_csv_columns(self):
        report = DissipationReport('demo')
        report.add_term('a', 1.0, nonnegative_min=0.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = report.write_csv(f'{tmp}/reports/demo.csv')
            lines = path.read_text().splitlines()
        self.assertEqual(lines[0], 'term,value,side,nonnegative_min')
        self.assertEqual(lines[1], 'a,1.0,lhs,0.0')
        self.assertTrue(lines[-1].startswith('residual,'))


class EnergyIdentityTests(SimpleTestCase):

    def test_linear_energy_with_zero_pressure_function(self):
        law = power_law(2, 0.05, zero_growth())
        traj = run(bump_data(), law, 0.1)
        report = eee_residual(traj, law, LINEAR, ZERO, total_energy_weight())
        self.assertEqual(report.term('dissipation_gradient'), 0.0)
        self.assertEqual(report.term('dissipation_friction'), 0.0)
        self.assertEqual(report.term('growth'), 0.0)
        self.assertLess(abs(report.residual), 1e-11)

    def test_uniform_steady_state_has_no_dissipation(self):
        law = power_law(1, 0.1, zero_growth())
        for report in (internal_energy_report(uniform_run(law), law),
                       h1_energy_report(uniform_run(law), law),
                       power_entropy_report(uniform_run(law), law, 2.0)):
            self.assertAlmostEqual(report.term('dissipation_gradient'), 0.0, delta=1e-12)
            self.assertAlmostEqual(report.term('dissipation_friction'), 0.0, delta=1e-12)
            self.assertLess(abs(report.residual), 1e-10)
            self.assertTrue(report.passed, report.summary())

    def test_zero_data_passes(self):
        law = power_law(3, 0.01, G)
        traj = run(InitialData((GRID.zeros(density=True),)), law, 0.1)
        report = internal_energy_report(traj, law)
        self.assertTrue(report.passed, report.summary())
        self.assertEqual(report.residual, 0.0)

    def test_dissipation_is_nonnegative_on_a_growing_run(self):
        law = power_law(2, 1e-2, G)
        traj = run(bump_data(height=0.9), law, 0.2)
        for report in (internal_energy_report(traj, law), h1_energy_report(traj, law),
                       power_entropy_report(traj, law, 2.0), derivative_identity_report(traj, law)):
            self.assertTrue(report.get('dissipation_gradient_nonnegative').passed, report.summary())
            self.assertTrue(report.get('dissipation_friction_nonnegative').passed, report.summary())
            self.assertGreater(report.term('dissipation_gradient'), 0.0)

    def test_space_time_weight_adds_transport_terms(self):
        law = power_law(2, 1e-2, G)
        traj = run(bump_data(), law, 0.2)
        pair = internal_pair(law, 2.0)
        psi = default_test_function(bump(), 0.2)
        report = eee_residual(traj, law, pair.e, pair.z, psi, growth_factor=pair.growth_factor)
        self.assertNotEqual(report.term('transport'), 0.0)
        self.assertNotEqual(report.term('pressure_laplacian'), 0.0)
        # the plateau vanishes at both ends
        self.assertEqual(report.term('final_energy'), 0.0)
        self.assertEqual(report.term('initial_energy'), 0.0)

    def test_residual_decreases_under_refinement(self):
        law = power_law(2, 0.05, G)
        residuals = []
        for cells in (32, 64, 128):
            grid = Grid(1, cells, 6.0)
            controls = StepControls(max_dt=0.2 * grid.spacing)
            traj = run(bump_data(grid), law, 0.2, controls=controls)
            residuals.append(internal_energy_report(traj, law).normalized_residual)
        self.assertLess(residuals[1], residuals[0])
        self.assertLess(residuals[2], residuals[1])

    @tag('slow')
    def test_identities_close_at_first_order(self):
        law = power_law(2, 0.05, G)
        cells = (256, 512, 1024)
        reports = {
            'internal': lambda traj: internal_energy_report(traj, law),
            'h1': lambda traj: h1_energy_report(traj, law),
            'power_m2': lambda traj: power_entropy_report(traj, law, 2.0),
        }
        residuals = {name: [] for name in reports}
        for n in cells:
            grid = Grid(1, n, 6.0)
            traj = run(bump_data(grid), law, 0.2, controls=StepControls(max_dt=0.2 * grid.spacing))
            for name, report in reports.items():
                residuals[name].append(report(traj).normalized_residual)
        for name, values in residuals.items():
            with self.subTest(report=name):
                self.assertLessEqual(values[0], 0.1)
                slope, _, _, flag = fit_slope(cells, values)
                self.assertEqual(flag, '')
                self.assertLessEqual(slope, -0.8)

    def test_mismatched_pair_is_rejected_before_integration(self):
        law = power_law(2, 0.05, G)
        traj = run(bump_data(), law, 0.05)
        with self.assertRaises(CouplingRelationError):
            eee_residual(traj, law, law.energy, quadratic(), total_energy_weight())

    def test_stored_run_gives_the_same_report(self):
        law = power_law(2, 0.05, G)
        traj = run(bump_data(), law, 0.1)
        with tempfile.TemporaryDirectory() as tmp:
            write_trajectory(traj, tmp)
            stored = load_trajectory(tmp)
            self.assertEqual(len(step_series(stored)), len(step_series(traj)))
            self.assertAlmostEqual(internal_energy_report(stored, law).residual,
                                   internal_energy_report(traj, law).residual, places=12)

    def test_time_weight_is_accepted(self):
        law = power_law(2, 0.05, G)
        traj = run(bump_data(), law, 0.1)
        report = internal_energy_report(traj, law, eta=plateau_weight(0.1))
        self.assertEqual(report.term('final_energy'), 0.0)
        self.assertNotEqual(report.term('time_derivative'), 0.0)


class ClosedFormPairTests(SimpleTestCase):

    def test_h1_pair_at_gamma_one(self):
        law = power_law(1, 0.1, G)
        pair = h1_pair(law, 4.0)
        a = np.linspace(0.0, 2.0, 41)
        np.testing.assert_allclose(pair.e.value_at(a), a ** 3 / 6.0, atol=1e-8)
        b = np.linspace(0.0, 3.0, 31)
        np.testing.assert_allclose(pair.z.derivative_at(b), b ** 3 / 3.0, atol=1e-8)
        np.testing.assert_allclose(pair.z.curvature_at(b), b ** 2, atol=1e-12)

    def test_power_pair_at_gamma_one(self):
        law = power_law(1, 0.1, G)
        pair = power_pair(law, 2.0, 4.0)
        b = np.linspace(0.0, 3.0, 31)
        np.testing.assert_allclose(pair.z.derivative_at(b), b ** 2, rtol=1e-12)
        np.testing.assert_allclose(pair.z.value_at(b), b ** 3 / 3.0, rtol=1e-5, atol=1e-8)
        a = np.linspace(0.0, 2.0, 21)
        np.testing.assert_allclose(pair.e.value_at(a), a ** 2 - a, rtol=1e-12)

    def test_power_pair_needs_m_above_one(self):
        with self.assertRaises(InvalidParameter):
            power_pair(power_law(1, 0.1, G), 1.0, 4.0)

    def test_friction_term_expands_through_the_laplacian(self):
        law = power_law(1, 0.05, G)
        traj = run(bump_data(height=0.8), law, 0.1)
        self.assertLess(friction_identity_gap(traj, law, internal_pair(law, 4.0).z), 1e-6)

    def test_power_and_entropy_dissipation_agree_near_one(self):
        law = power_law(1, 0.05, zero_growth())
        traj = run(bump_data(height=0.8), law, 0.1)
        near = power_entropy_report(traj, law, 1.01)
        entropy = power_entropy_report(traj, law, ENTROPY)
        self.assertTrue(entropy.get('second_moment_finite').passed)
        for name in ('dissipation_gradient', 'dissipation_friction'):
            self.assertAlmostEqual(near.term(name) / entropy.term(name), 1.0, delta=0.05)


class BoundTests(SimpleTestCase):

    def test_zero_data_passes_trivially(self):
        law = power_law(3, 1e-3, G)
        data = InitialData((GRID.zeros(density=True),), 1.0)
        report = bound_monitor(run(data, law, 0.1), law, data)
        self.assertTrue(report.passed, report.summary())

    def test_well_prepared_bump(self):
        law = power_law(3, 1e-3, G)
        data = bump_data(height=0.9)
        report = bound_monitor(run(data, law, 0.5), law, data)
        self.assertTrue(report.passed, report.summary())
        self.assertEqual(report.metadata['B_p'], 1.0)

    def test_ill_prepared_datum_is_flagged_at_start(self):
        law = power_law(3, 1e-3, G)
        data = bump_data(height=0.9, bound=0.1)
        report = bound_monitor(run(data, law, 0.05), law, data)
        self.assertFalse(report.get('initial_density_below_cap').passed)

    def test_bound_energy_terms_vanish_below_the_bound(self):
        law = power_law(2, 1e-2, G)
        data = bump_data(height=0.5)
        report = bound_energy_report(run(data, law, 0.1), law, data)
        self.assertTrue(report.get('terms_vanish').passed, report.summary())

    def test_derivative_budget_on_empty_run(self):
        law = power_law(3, 1e-2, G)
        traj = run(InitialData((GRID.zeros(density=True),)), law, 0.1)
        report = derivative_budget(traj, law)
        self.assertEqual(report.lhs, 0.0)
        self.assertTrue(report.passed)

    def test_derivative_budget_records_a_ratio(self):
        law = power_law(3, 1e-2, G)
        traj = run(bump_data(height=0.9), law, 0.2)
        report = derivative_budget(traj, law)
        self.assertGreater(report.lhs, 0.0)
        self.assertGreater(report.metadata['n_psi'], 0.0)
        self.assertGreater(report.metadata['ratio'], 0.0)

    def test_gradient_control_is_advisory(self):
        law = power_law(2, 1e-2, G)
        traj = run(bump_data(), law, 0.1)
        report = gradient_control(traj, law, quadratic())
        self.assertTrue(report.advisory)
        self.assertGreater(report.get('ratio').value, 0.0)


class ComplementarityTests(SimpleTestCase):

    def test_uniform_state_has_no_residual(self):
        law = power_law(1, 0.1, zero_growth())
        report = complementarity_residual(uniform_run(law), law)
        self.assertLess(report.get('residual_l1').value, 1e-8)
        self.assertFalse(report.metadata['empty'])

    def test_pressure_below_level_gives_an_empty_report(self):
        law = power_law(2, 1e-2, G)
        report = complementarity_residual(run(bump_data(), law, 0.05), law, V_p=10.0)
        self.assertTrue(report.metadata['empty'])
        self.assertEqual(report.get('residual_l1').value, 0.0)

    def test_ordinary_law_above_level_is_advisory(self):
        law = power_law(2, 1e-2, G)
        report = complementarity_residual(run(bump_data(), law, 0.05), law)
        self.assertTrue(report.advisory)

    @tag('slow')
    def test_residual_decreases_under_refinement(self):
        law = power_law(80, 1e-3, G)
        residuals = []
        for cells in (256, 512, 1024):
            grid = Grid(1, cells, 6.0)
            traj = run(bump_data(grid, height=0.95), law, 0.5)
            residuals.append(complementarity_residual(traj, law).get('residual_l1').value)
        self.assertLess(residuals[2], residuals[0])


class SingularMassTests(SimpleTestCase):

    def setUp(self):
        self.law = power_law(3, 1e-2, G)
        self.traj = run(bump_data(height=0.9), self.law, 0.1)

    def test_empty_set(self):
        self.assertEqual(singular_mass(self.traj, []), 0.0)

    def test_full_range_is_the_plain_integral(self):
        series = step_series(self.traj)
        plain = sum(r.weight * float(np.sum(cell_gradient_sq(gradient(ScalarField(GRID, r.potential)))))
                    * GRID.cell_volume for r in series.records())
        self.assertAlmostEqual(singular_mass(self.traj, [(-1.0, 10.0)]), plain, delta=1e-12 * max(plain, 1.0))

    def test_intervals_are_merged(self):
        self.assertAlmostEqual(interval_measure([(0.0, 0.2), (0.1, 0.3), (0.5, 0.6)]), 0.4, places=14)

    def test_ratio_needs_positive_measure(self):
        with self.assertRaises(InvalidParameter):
            singular_mass_ratio(self.traj, [(0.1, 0.1)])


class FluxSwapTests(SimpleTestCase):

    def test_inviscid_run_has_no_swap_error(self):
        law = darcy_law(power_law(2, 0.0, G))
        traj = run_darcy(bump_data(), law, 0.1)
        result = flux_swap_error(traj, law)
        self.assertLess(result.error, 1e-12)
        self.assertEqual(result.i1, 0.0)
        self.assertEqual(result.bound, 0.0)

    def test_viscous_run_decomposes(self):
        law = power_law(3, 1e-2, G)
        traj = run(bump_data(height=0.9), law, 0.1)
        result = flux_swap_error(traj, law)
        self.assertGreater(result.error, 0.0)
        self.assertGreater(result.i1, 0.0)
        self.assertAlmostEqual(result.delta, 1e-2 ** (1.0 / 3.0))
        # f*' = b^(1/3) is steep near 0, so the steep set is never empty
        self.assertGreater(result.s_measure, 0.0)
        self.assertEqual(float(result), result.error)

    def test_error_decays_with_viscosity(self):
        errors = []
        for nu in (1e-1, 1e-2, 1e-3):
            law = power_law(3, nu, G)
            errors.append(flux_swap_error(run(bump_data(height=0.9), law, 0.1), law).error)
        self.assertLess(errors[1], errors[0])
        self.assertLess(errors[2], errors[1])


class VelocityGapTests(SimpleTestCase):

    def test_identical_runs(self):
        traj = run(bump_data(), power_law(2, 1e-2, G), 0.1)
        gap = velocity_gap(traj, traj)
        self.assertEqual(gap.gradient_gap, 0.0)
        self.assertEqual(gap.flux_gap, 0.0)
        self.assertEqual(pressure_gap(traj, traj), 0.0)

    def test_gap_to_darcy_shrinks_with_viscosity(self):
        times = [0.0, 0.05, 0.1]
        reference = run_darcy(bump_data(), power_law(2, 0.0, G), 0.1, snapshot_times=times)
        gaps = [float(velocity_gap(run(bump_data(), power_law(2, nu, G), 0.1, snapshot_times=times), reference))
                for nu in (1e-1, 1e-2)]
        self.assertLess(gaps[1], gaps[0])

    def test_runs_on_nested_grids_are_compared_on_the_coarse_one(self):
        law = power_law(2, 1e-2, G)
        coarse = run(bump_data(), law, 0.05)
        fine = run(bump_data(GRID.refined(2)), law, 0.05)
        self.assertTrue(math.isfinite(velocity_gap(fine, coarse).gradient_gap))

    def test_no_common_times(self):
        law = power_law(2, 1e-2, G)
        a = run(bump_data(), law, 0.05)
        b = run(bump_data(), law, 0.1, snapshot_times=[0.1])
        with self.assertRaises(InvalidParameter):
            velocity_gap(a, b, t0=0.01)

    def test_sparse_common_times_warn(self):
        law = power_law(2, 1e-2, G)
        a = run(bump_data(), law, 0.05)
        with self.assertLogs('diagnostics.services', 'WARNING') as logs:
            velocity_gap(a, a)
        self.assertIn('2 common snapshot(s)', logs.output[0])

    def test_dense_common_times_are_quiet(self):
        law = power_law(2, 1e-2, G)
        a = run(bump_data(), law, 0.05, snapshot_times=[0.0, 0.025, 0.05])
        with self.assertNoLogs('diagnostics.services', 'WARNING'):
            gap = velocity_gap(a, a)
        self.assertEqual(len(gap.times), 3)
