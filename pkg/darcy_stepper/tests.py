import math

import numpy as np
from django.test import SimpleTestCase, override_settings, tag

from brinkman_stepper.services import initial_state, run
from brinkman_stepper.state import StepControls
from core.exceptions import InvalidParameter, MultivaluedPressureError, TimeStepUnderflow
from experiments.rates import fit_slope
from field_grid.grids import Grid, ScalarField
from field_grid.operators import l1_norm, laplacian, restrict
from pressure_laws.laws import (
    ENERGY_NORMALIZATION, InitialData, incompressible_law, linear_growth, log_law, power_law, zero_growth,
)
from .barenblatt import BarenblattProfile, barenblatt_for
from .services import (
    UPWIND, advance_darcy, darcy_law, flux_potential, formulation_gap, run_darcy, step_darcy,
)

G = linear_growth(1.0, 1.0)


def bump(grid, height=0.5, width=0.8):
    r = grid.radius()
    return ScalarField(grid, np.where(r < width, height * (1.0 - (r / width) ** 2) ** 2, 0.0), density=True)


def gaussian(grid, height=0.5, width=0.4):
    return ScalarField(grid, height * np.exp(-(grid.radius() / width) ** 2), density=True)


class FluxPotentialTests(SimpleTestCase):

    def test_linear_pressure(self):
        flux = flux_potential(power_law(1, 0.0, G))
        a = np.linspace(0.0, 3.0, 13)
        np.testing.assert_allclose(flux(a), 0.5 * a ** 2, rtol=1e-13, atol=1e-15)

    def test_cubic_pressure_at_one(self):
        self.assertAlmostEqual(float(flux_potential(power_law(3, 0.0, G))(1.0)), 0.75, places=13)

    def test_power_closed_form_and_slope(self):
        flux = flux_potential(power_law(2.5, 0.1, G))
        a = np.linspace(0.1, 2.0, 9)
        np.testing.assert_allclose(flux(a), 2.5 / 3.5 * a ** 3.5, rtol=1e-12)
        np.testing.assert_allclose(flux.slope(a), 2.5 * a ** 2.5, rtol=1e-12)

    def test_flux_vanishes_at_zero(self):
        for law in (power_law(1, 0.0, G), power_law(10, 0.0, G), log_law(0.3, G),
                    power_law(3, 0.0, G, normalization=ENERGY_NORMALIZATION)):
            self.assertEqual(float(flux_potential(law)(0.0)), 0.0)

    def test_log_law_flux_is_young_equality(self):
        law = log_law(0.5, G)
        a = np.array([0.1, 0.4, 0.8])
        f = law.energy
        np.testing.assert_allclose(flux_potential(law)(a), a * f.derivative_at(a) - f.value_at(a), rtol=1e-12)

    def test_incompressible_law_is_rejected(self):
        with self.assertRaises(MultivaluedPressureError):
            flux_potential(incompressible_law(G))


class StepDarcyTests(SimpleTestCase):
    grid = Grid(1, 64, 4.0)

    def test_zero_density_is_stationary(self):
        data = InitialData((self.grid.zeros(density=True),))
        traj = run_darcy(data, power_law(2, 0.0, G), 0.1)
        self.assertEqual(traj.final.total().max(), 0.0)

    def test_viscosity_is_switched_off(self):
        law = darcy_law(power_law(2, 0.3, G))
        self.assertEqual(law.nu, 0.0)
        state = initial_state(InitialData((bump(self.grid),)), law)
        np.testing.assert_array_equal(state.potential.values, state.pressure.values)

    def test_step_is_positive_and_keeps_the_ledger(self):
        law = darcy_law(power_law(3, 0.0, G))
        state = initial_state(InitialData((bump(self.grid, height=0.9),)), law)
        for _ in range(50):
            new_state, record = advance_darcy(state, law, StepControls())
            self.assertGreaterEqual(new_state.total().min(), 0.0)
            self.assertAlmostEqual(new_state.mass(), record.mass + record.dt * record.growth_rate, delta=1e-13)
            state = new_state

    def test_step_is_diffusion_then_growth(self):
        law = darcy_law(power_law(2, 0.0, G))
        state = initial_state(InitialData((bump(self.grid, height=0.8),)), law)
        new_state, record = advance_darcy(state, law, StepControls(cfl_fraction=1.0, reaction_fraction=0.9))
        rho = state.total().values
        diffused = laplacian(ScalarField(self.grid, flux_potential(law)(rho))).values
        g = law.growth_for(0)(state.pressure.values)
        expected = (rho + record.dt * diffused) * (1.0 + record.dt * g)
        np.testing.assert_allclose(new_state.total().values, expected, rtol=1e-13, atol=1e-15)
        self.assertGreaterEqual(new_state.total().min(), 0.0)

    def test_front_spreads_into_empty_cells(self):
        law = darcy_law(power_law(2, 0.0, zero_growth()))
        rho = bump(self.grid)
        edge = int(np.flatnonzero(rho.values > 0)[-1]) + 1
        self.assertEqual(rho.values[edge], 0.0)
        for data in (InitialData((rho,)), InitialData((rho * 0.25, rho * 0.75))):
            new_state, _ = advance_darcy(initial_state(data, law), law, StepControls())
            self.assertGreater(new_state.total().values[edge], 0.0)
            self.assertAlmostEqual(new_state.mass(), data.mass(), delta=1e-13)
        # the front cell inherits the species mix of the cell it is fed from
        _, second = new_state.densities
        self.assertAlmostEqual(second.values[edge] / new_state.total().values[edge], 0.75, places=12)

    def test_step_wrapper_advances_with_both_transports(self):
        law = power_law(2, 0.0, G)
        state = initial_state(InitialData((bump(self.grid),)), law)
        for transport in ('divergence', UPWIND):
            self.assertGreater(step_darcy(state, law, StepControls(), transport=transport).t, 0.0)

    def test_mass_is_conserved_without_growth(self):
        for grid in (self.grid, Grid(2, 24, 4.0)):
            data = InitialData((bump(grid),))
            traj = run_darcy(data, power_law(2, 0.0, zero_growth()), 0.1)
            self.assertLess(abs(traj.final.mass() - data.mass()) / data.mass(), 1e-12)

    def test_zero_horizon(self):
        traj = run_darcy(InitialData((bump(self.grid),)), power_law(2, 0.0, G), 0.0)
        self.assertEqual(traj.snapshot_times(), [0.0])

    def test_unknown_transport(self):
        with self.assertRaises(InvalidParameter):
            run_darcy(InitialData((bump(self.grid),)), power_law(2, 0.0, G), 0.1, transport='spectral')

    @override_settings(GROWTHLAB={'MAX_STEPS': 10})
    def test_underflow_suggests_a_grid(self):
        data = InitialData((bump(self.grid, height=0.95),))
        with self.assertRaises(TimeStepUnderflow) as ctx:
            run_darcy(data, power_law(40, 0.0, G), 0.5)
        self.assertIsNotNone(ctx.exception.suggested_cells)
        self.assertLess(ctx.exception.suggested_cells, self.grid.cells)

    def test_upwind_mode_is_the_inviscid_brinkman_step(self):
        data = InitialData((bump(self.grid),))
        law = power_law(2, 0.0, G)
        darcy = run_darcy(data, law, 0.1, transport=UPWIND)
        brinkman = run(data, law, 0.1)
        np.testing.assert_array_equal(darcy.final.total().values, brinkman.final.total().values)


class BarenblattTests(SimpleTestCase):

    def test_profile_mass_matches_quadrature(self):
        for dim, cells in ((1, 4096), (2, 512)):
            profile = BarenblattProfile(1.0, dim, height=0.5, t0=0.5)
            grid = Grid(dim, cells, 8.0)
            self.assertAlmostEqual(profile.field(grid, 0.3).integral() / profile.mass(), 1.0, places=3)

    def test_support_grows(self):
        profile = barenblatt_for(power_law(2, 0.0, zero_growth()), 1)
        self.assertGreater(profile.support_radius(1.0), profile.support_radius(0.0))
        self.assertEqual(float(profile.density(profile.support_radius(0.5) * 1.01, 0.5)), 0.0)

    def test_darcy_run_converges_to_the_profile(self):
        law = power_law(1, 0.0, zero_growth())
        profile = barenblatt_for(law, 1, height=0.5, t0=0.5)
        errors = []
        for cells in (64, 128, 256):
            grid = Grid(1, cells, 8.0)
            traj = run_darcy(profile.initial_data(grid), law, 0.5)
            errors.append(l1_norm(traj.final.total() - profile.field(grid, 0.5)))
        self.assertLess(errors[-1], errors[0])
        self.assertLess(errors[-1], 2e-2)
        # first order or better between the two finest grids
        self.assertGreater(math.log2(errors[1] / errors[2]), 0.7)

    @tag('slow')
    def test_darcy_error_decays_at_first_order(self):
        law = power_law(1, 0.0, zero_growth())
        profile = barenblatt_for(law, 1, height=0.5, t0=0.5)
        cells = (128, 256, 512)
        errors = []
        for n in cells:
            grid = Grid(1, n, 8.0)
            traj = run_darcy(profile.initial_data(grid), law, 0.5)
            errors.append(l1_norm(traj.final.total() - profile.field(grid, 0.5)))
        slope, _, _, flag = fit_slope(cells, errors)
        self.assertEqual(flag, '')
        self.assertLessEqual(slope, -0.8)


class FormulationTests(SimpleTestCase):

    def test_flux_forms_agree_under_refinement(self):
        law = power_law(2, 0.0, G)
        gaps = [formulation_gap(gaussian(Grid(1, cells, 6.0)), law) for cells in (32, 64, 128)]
        self.assertLess(gaps[1], gaps[0])
        self.assertLess(gaps[2], gaps[1])

    def test_inviscid_brinkman_matches_darcy_to_first_order(self):
        law = power_law(1, 0.0, zero_growth())
        coarse = Grid(1, 32, 6.0)
        gaps = []
        for cells in (32, 64, 128):
            grid = Grid(1, cells, 6.0)
            data = InitialData((gaussian(grid),))
            diff = run(data, law, 0.1).final.total() - run_darcy(data, law, 0.1).final.total()
            gaps.append(l1_norm(restrict(diff, coarse)))
        self.assertLess(gaps[2], gaps[0])


class HeleShawProxyTests(SimpleTestCase):
    grid = Grid(1, 48, 4.0)

    def test_large_gamma_plateau_stays_near_one(self):
        data = InitialData((bump(self.grid, height=0.9),), 1.0)
        traj = run_darcy(data, power_law(40, 0.0, G), 0.2)
        self.assertLessEqual(traj.final.total().max(), 1.02)

    @tag('slow')
    def test_gamma_sweep_is_cauchy(self):
        data = InitialData((bump(self.grid, height=0.9),), 1.0)
        finals = [run_darcy(data, power_law(gamma, 0.0, G), 0.2).final.total() for gamma in (10, 20, 40, 80)]
        gaps = [l1_norm(a - b) for a, b in zip(finals, finals[1:])]
        self.assertTrue(all(later < earlier for earlier, later in zip(gaps, gaps[1:])), gaps)
