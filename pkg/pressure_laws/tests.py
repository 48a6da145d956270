import numpy as np
from django.test import SimpleTestCase

from convex_energy.functions import TABULATED, from_callable
from convex_energy.services import argmax_points, conjugate
from core.exceptions import InvalidParameter
from field_grid.grids import Grid
from .laws import (
    ENERGY_NORMALIZATION, InitialData, clamped_growth, incompressible_law, joint_limit_law,
    linear_growth, log_law, power_law, zero_growth,
)
from .services import check_assumptions, validate_well_prepared

G = linear_growth(1.0, 1.0)

CATALOG = [
    power_law(1, 1e-2, G),
    power_law(3, 1e-3, G),
    power_law(10, 1e-3, G),
    power_law(80, 1e-3, G),
    log_law(1.0, G),
    log_law(0.1, G),
    incompressible_law(G),
    joint_limit_law(1e-2, G),
    power_law(3, 1e-3, clamped_growth(2.0, 0.5)),
]


class GrowthTests(SimpleTestCase):

    def test_linear_growth_values(self):
        G = linear_growth(2.0, 3.0)
        self.assertEqual(float(G(0.0)), 3.0)
        self.assertEqual(float(G(2.0)), 0.0)
        self.assertEqual(float(G(4.0)), -3.0)

    def test_clamped_growth_stops_at_zero(self):
        G = clamped_growth(2.0, 3.0)
        self.assertEqual(float(G(4.0)), 0.0)
        self.assertEqual(G.sup_abs(4.0), 3.0)

    def test_growth_parameters_must_be_positive(self):
        with self.assertRaises(InvalidParameter):
            linear_growth(0.0, 1.0)
        with self.assertRaises(InvalidParameter):
            linear_growth(1.0, -1.0)

    def test_zero_growth_fails_the_growth_assumption(self):
        report = check_assumptions(power_law(2, 0.1, zero_growth()))
        self.assertFalse(report.get('growth_positive_at_zero').passed)


class CatalogTests(SimpleTestCase):

    def test_every_catalog_law_passes_its_assumptions(self):
        for law in CATALOG:
            report = check_assumptions(law)
            self.assertTrue(report.passed, report.summary())

    def test_power_law_pressure(self):
        law = power_law(3, 0.0, G)
        self.assertEqual(law.energy.derivative_at(2.0), 8.0)
        self.assertEqual(power_law(1, 0.0, G).energy.value_at(3.0), 4.5)

    def test_power_law_rejects_small_gamma(self):
        with self.assertRaises(InvalidParameter):
            power_law(0.5, 0.1, G)
        with self.assertRaises(InvalidParameter):
            power_law(1.0, 0.1, G, normalization=ENERGY_NORMALIZATION)

    def test_energy_normalization(self):
        law = power_law(3, 0.1, G, normalization=ENERGY_NORMALIZATION)
        # f = a^3 / 3, p = a^2
        self.assertAlmostEqual(law.energy.value_at(2.0), 8.0 / 3.0)
        self.assertAlmostEqual(law.energy.derivative_at(2.0), 4.0)

    def test_power_conjugate_closed_form(self):
        law = power_law(3, 0.0, G)
        b = np.linspace(0.0, 2.0, 9)
        np.testing.assert_allclose(law.conjugate.value_at(b), 0.75 * b ** (4.0 / 3.0))

    def test_power_conjugate_agrees_with_tabulation(self):
        for gamma in (1, 3, 10):
            law = power_law(gamma, 0.0, G)
            f = law.energy
            stripped = from_callable('stripped', f.value, f.domain_lo, f.domain_hi, f.lo_closed, f.hi_closed)
            B_p = law.pressure_bound
            table = conjugate(stripped, window=(0.0, B_p), points=2 ** 12)
            self.assertEqual(table.representation, TABULATED)
            exact = law.conjugate.value_at(table.nodes)
            scale = np.maximum(np.abs(exact), 1e-300)
            rel = np.abs(table.values - exact) / scale
            self.assertLess(np.max(rel[1:]), 1e-8, gamma)

    def test_log_law_pressure_and_inverse(self):
        law = log_law(1.0, G)
        self.assertAlmostEqual(law.energy.derivative_at(0.5), 1.0)
        self.assertAlmostEqual(law.energy.derivative_at(1e-9), 0.0, places=8)
        self.assertAlmostEqual(float(argmax_points(law.energy, np.array([1.0]))[0]), 0.5, places=10)
        self.assertAlmostEqual(law.conjugate.derivative_at(1.0), 0.5)

    def test_log_law_is_infinite_past_one(self):
        law = log_law(1.0, G)
        self.assertEqual(law.energy.value_at(1.0), np.inf)
        self.assertEqual(law.energy.value_at(1.5), np.inf)
        self.assertLess(law.density_cap(), 1.0)

    def test_incompressible_law(self):
        law = incompressible_law(G)
        self.assertTrue(law.multivalued)
        self.assertEqual(law.energy.value_at(0.5), 0.0)
        self.assertEqual(law.energy.value_at(1.5), np.inf)
        self.assertEqual(law.conjugate.value_at(2.0), 2.0)
        sub = law.energy.subdiff_at(1.0)
        self.assertEqual((sub.lo, sub.hi), (0.0, np.inf))
        sub = law.energy.subdiff_at(0.5)
        self.assertEqual((sub.lo, sub.hi), (0.0, 0.0))

    def test_pressure_bound_and_cap(self):
        law = power_law(3, 0.0, linear_growth(0.5, 1.0)).with_bound(1.0)
        self.assertEqual(law.pressure_bound, 1.0)
        self.assertAlmostEqual(law.density_cap(), 1.0)
        self.assertAlmostEqual(law.density_cap(8.0), 2.0)
        self.assertEqual(law.with_bound(0.0).pressure_bound, 0.5)

    def test_joint_limit_family_approaches_the_constraint(self):
        inside, outside = 0.8, 1.2
        values_in, values_out = [], []
        for nu in (1e-1, 1e-2, 1e-3):
            law = joint_limit_law(nu, G)
            self.assertAlmostEqual(law.gamma, 1.0 / nu)
            values_in.append(law.energy.value_at(inside))
            values_out.append(law.energy.value_at(outside))
        self.assertTrue(values_in[0] > values_in[1] > values_in[2])
        self.assertLess(values_in[-1], 1e-12)
        self.assertTrue(values_out[0] < values_out[1] < values_out[2])
        self.assertGreater(values_out[-1], 1e6)


class WellPreparedTests(SimpleTestCase):

    def setUp(self):
        self.grid = Grid(1, 32, 2.0)

    def test_zero_datum_passes_with_zero_mass(self):
        data = InitialData((self.grid.zeros(),), bound_B=0.0)
        report = validate_well_prepared(data, power_law(3, 1e-3, G))
        self.assertTrue(report.passed)
        self.assertEqual(report.metadata['M0'], 0.0)

    def test_power_law_datum_at_the_cap_passes(self):
        data = InitialData((self.grid.constant(1.0),), bound_B=1.0)
        report = validate_well_prepared(data, power_law(3, 1e-3, G))
        self.assertTrue(report.passed, report.summary())
        self.assertAlmostEqual(report.get('density_below_cap').bound, 1.0)

    def test_log_law_datum_above_the_cap_fails(self):
        data = InitialData((self.grid.constant(0.9),), bound_B=1.0)
        report = validate_well_prepared(data, log_law(1.0, G))
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.get('density_below_cap').bound, 0.5)

    def test_species_are_summed(self):
        half = self.grid.constant(0.5)
        data = InitialData((half, half), bound_B=1.0)
        self.assertAlmostEqual(data.mass(), 2.0)
        law = power_law(3, 1e-3, G).with_species_growth(G, linear_growth(1.0, 2.0))
        self.assertTrue(validate_well_prepared(data, law).passed)

    def test_species_must_share_a_grid(self):
        with self.assertRaises(InvalidParameter):
            InitialData((self.grid.zeros(), Grid(1, 16, 2.0).zeros()))
