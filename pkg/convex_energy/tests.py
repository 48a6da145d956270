import os
import tempfile

import numpy as np
from django.test import SimpleTestCase, tag
from hypothesis import given, settings, strategies as st

from core.exceptions import ConvexityError, CouplingRelationError, DomainViolation
from .functions import (
    TABULATED, CLOSED_FORM, from_callable, incompressible_energy, log_conjugate, log_energy,
    positive_part, power_conjugate, power_energy, quadratic,
)
from .serialization import read_function_csv, write_function_csv
from .services import (
    affine_gap, argmax_points, check_coupling, conjugate, e_from_z, h_energy, moreau_conjugate,
    subdifferential, z_from_e,
)

# laws used across the duality suite: power gamma in {1, 3, 10}, log nu in {1, 0.1}
LAW_ENERGIES = [power_energy(1), power_energy(3), power_energy(10), log_energy(1.0), log_energy(0.1)]


def strip(f):
    """Same values, no closed-form help: forces the tabulated code paths."""
    return from_callable(f'stripped[{f.name}]', f.value, f.domain_lo, f.domain_hi, f.lo_closed, f.hi_closed)


def brute_conjugate(value, b, a_grid):
    return np.max(np.outer(b, a_grid) - value(a_grid)[None, :], axis=1)


class ConjugateTests(SimpleTestCase):

    def test_quadratic_is_self_dual(self):
        g = conjugate(quadratic())
        self.assertEqual(g.representation, CLOSED_FORM)
        b = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(g.value_at(b), 0.5 * b ** 2)

    def test_incompressible_conjugate_is_positive_part(self):
        g = conjugate(incompressible_energy())
        self.assertEqual(g.value_at(2.0), 2.0)
        self.assertEqual(g.value_at(-1.5), 0.0)

    def test_cubic_matches_brute_force_supremum(self):
        cubic = from_callable('cubic', lambda a: a ** 3 / 3.0, domain_lo=0.0, lo_closed=True)
        g = conjugate(cubic, window=(0.0, 4.0))
        self.assertEqual(g.representation, TABULATED)
        b = np.linspace(0.0, 4.0, 41)
        a_grid = np.arange(0.0, 10.0 + 1e-12, 1e-4)
        np.testing.assert_allclose(g.value_at(b), brute_conjugate(cubic.value, b, a_grid), atol=1e-6)
        np.testing.assert_allclose(g.value_at(b), (2.0 / 3.0) * b ** 1.5, atol=1e-6)
        # below the window the maximizer stays at a = 0
        self.assertAlmostEqual(g.value_at(-1.0), 0.0, places=9)

    def test_power_law_conjugates_agree_with_tabulation(self):
        for gamma in (1.0, 3.0, 10.0):
            f = power_energy(gamma)
            closed = conjugate(f)
            tabulated = conjugate(strip(f), window=(0.0, 4.0))
            b = np.linspace(0.0, 4.0, 97)
            scale = np.maximum(1.0, np.abs(closed.value_at(b)))
            self.assertLess(np.max(np.abs(tabulated.value_at(b) - closed.value_at(b)) / scale), 1e-8)

    def test_rejects_minus_infinity_and_empty_domain(self):
        with self.assertRaises(ConvexityError):
            conjugate(from_callable('bad', lambda a: -np.inf * np.ones_like(a)))
        with self.assertRaises(ConvexityError):
            conjugate(from_callable('nowhere', lambda a: a, domain_lo=1.0, domain_hi=0.0))

    def test_conjugate_of_internal_energy_is_nonnegative_and_nondecreasing(self):
        for f in LAW_ENERGIES:
            g = conjugate(strip(f), window=(0.0, 4.0))
            b = np.linspace(0.0, 4.0, 200)
            values = g.value_at(b)
            self.assertTrue(np.all(values >= -1e-12))
            self.assertTrue(np.all(np.diff(values) >= -1e-12))


class SubdifferentialTests(SimpleTestCase):

    def test_kink_of_incompressible_energy(self):
        interval = subdifferential(incompressible_energy(), 1.0)
        self.assertEqual(interval.lo, 0.0)
        self.assertEqual(interval.hi, np.inf)

    def test_smooth_point(self):
        interval = subdifferential(quadratic(), 3.0)
        self.assertEqual((interval.lo, interval.hi), (3.0, 3.0))

    def test_sum_rule_kink_from_difference_quotients(self):
        f = from_callable('abs_plus_quadratic', lambda a: np.abs(a - 1.0) + 0.5 * a ** 2)
        interval = subdifferential(f, 1.0)
        self.assertAlmostEqual(interval.lo, 0.0, delta=1e-5)
        self.assertAlmostEqual(interval.hi, 2.0, delta=1e-5)

    def test_domain_violation_carries_the_point(self):
        with self.assertRaises(DomainViolation) as ctx:
            subdifferential(incompressible_energy(), 1.5)
        self.assertEqual(ctx.exception.value, 1.5)

    def test_open_domain_end_gives_empty_interval(self):
        self.assertTrue(subdifferential(log_energy(1.0), 1.0).is_empty)
        self.assertEqual(log_energy(1.0).value_at(1.0), np.inf)

    def test_internal_energies_are_infinite_for_negative_densities(self):
        for f in LAW_ENERGIES + [incompressible_energy()]:
            self.assertEqual(f.value_at(-1e-3), np.inf)


class MoreauTests(SimpleTestCase):

    def test_positive_part_envelope(self):
        envelope = moreau_conjugate(positive_part(), 1.0)
        self.assertAlmostEqual(envelope.value_at(1.0), 0.5, places=6)

    def test_quadratic_envelope(self):
        envelope = moreau_conjugate(power_conjugate(1.0), 1.0)
        b = np.linspace(0.0, 3.0, 31)
        np.testing.assert_allclose(envelope.value_at(b), 0.25 * b ** 2, atol=1e-6)

    def test_affine_piece_keeps_its_slope(self):
        envelope = moreau_conjugate(positive_part(), 0.01)
        self.assertAlmostEqual(envelope.derivative_at(2.0), 1.0, places=6)

    def test_envelope_below_function_with_smaller_slope(self):
        f_star = log_conjugate(0.5)
        envelope = moreau_conjugate(f_star, 0.3)
        b = np.linspace(0.0, 4.0, 101)
        self.assertTrue(np.all(envelope.value_at(b) <= f_star.value_at(b) + 1e-9))
        lo, _ = f_star.subdiff_bounds(b)
        self.assertTrue(np.all(envelope.derivative_at(b) <= lo + 1e-9))

    def test_rejects_nonpositive_delta(self):
        with self.assertRaises(ConvexityError):
            moreau_conjugate(positive_part(), 0.0)


class CouplingConstructionTests(SimpleTestCase):

    def test_internal_energy_pair(self):
        f = power_energy(3.0)
        z = z_from_e(f, lambda b: b, f)
        b = np.linspace(0.0, 4.0, 81)
        np.testing.assert_allclose(z.derivative_at(b), conjugate(f).value_at(b), atol=1e-5)
        self.assertEqual(z.value_at(0.0), 0.0)
        self.assertLess(check_coupling(f, z, f).residual, 5e-5)

    def test_quadratic_pair_closed_form(self):
        f = power_energy(1.0)
        z = z_from_e(f, lambda b: b, f)
        b = np.linspace(0.0, 4.0, 81)
        np.testing.assert_allclose(z.derivative_at(b), 0.5 * b ** 2, atol=1e-6)

    def test_h_energy_pair_matches_composition(self):
        f = power_energy(1.0)
        h = h_energy(f)
        f_star = conjugate(f)
        z = z_from_e(h, f_star, f, points=2 ** 14)
        b = np.linspace(0.0, 2.0, 41)
        # gamma = 1: h*(f*(b)) = b^3 / 3
        np.testing.assert_allclose(z.derivative_at(b), b ** 3 / 3.0, atol=1e-6)
        composed = conjugate(h, window=(0.0, 8.0), points=2 ** 14).value_at(f_star.value_at(b))
        np.testing.assert_allclose(composed, b ** 3 / 3.0, atol=1e-6)

    def test_rejects_non_monotone_map(self):
        f = power_energy(1.0)
        with self.assertRaises(ConvexityError):
            z_from_e(f, lambda b: np.sin(3.0 * b), f)

    def test_rejects_energy_not_vanishing_at_zero(self):
        f = power_energy(1.0)
        shifted = from_callable('shifted', lambda a: 0.5 * a ** 2 + 1.0, domain_lo=0.0, lo_closed=True)
        with self.assertRaises(ConvexityError):
            z_from_e(shifted, lambda b: b, f)

    def test_rejects_incompatible_map(self):
        f = power_energy(1.0)
        with self.assertRaises(CouplingRelationError):
            z_from_e(f, lambda b: 2.0 * b, f)

    def test_e_from_identity_pressure_function(self):
        f = power_energy(3.0)
        e = e_from_z(quadratic(), f, a1=1.0)
        a = np.linspace(0.05, 2.0, 40)
        np.testing.assert_allclose(e.value_at(a), (a ** 3 - a) / 2.0, atol=1e-5)
        self.assertEqual(e.value_at(0.0), 0.0)

    def test_zero_pressure_function_gives_linear_energy(self):
        zero = from_callable('zero', lambda b: 0.0 * b)
        e = e_from_z(zero, power_energy(3.0), a1=1.0)
        a = np.linspace(0.0, 3.0, 31)
        np.testing.assert_allclose(e.value_at(a), 0.0, atol=1e-9)

    def test_round_trip_up_to_linear_factor(self):
        f = power_energy(3.0)
        z = z_from_e(f, lambda b: b, f)
        e_back = e_from_z(z, f, a1=0.7)
        a = np.linspace(0.05, 1.5, 60)
        _, residual = affine_gap(f, e_back, a)
        self.assertLess(residual, 1e-5)

    def test_changing_a1_is_a_linear_shift(self):
        f = log_energy(1.0)
        e1 = e_from_z(quadratic(), f, a1=0.25)
        e2 = e_from_z(quadratic(), f, a1=0.5)
        _, residual = affine_gap(e1, e2, np.linspace(0.05, 0.9, 50))
        self.assertLess(residual, 1e-6)

    def test_rejects_a1_outside_interior(self):
        with self.assertRaises(ConvexityError):
            e_from_z(quadratic(), power_energy(3.0), a1=-1.0)
        with self.assertRaises(ConvexityError):
            e_from_z(quadratic(), log_energy(1.0), a1=1.5)


class HEnergyTests(SimpleTestCase):

    def test_quadratic_gives_cubic(self):
        h = h_energy(power_energy(1.0))
        a = np.linspace(0.0, 3.0, 31)
        np.testing.assert_allclose(h.value_at(a), a ** 3 / 6.0, atol=1e-9)

    def test_linear_energy_gives_zero(self):
        h = h_energy(from_callable('linear', lambda a: 2.0 * a, domain_lo=0.0, lo_closed=True))
        np.testing.assert_allclose(h.value_at(np.linspace(0.0, 3.0, 31)), 0.0, atol=1e-6)

    def test_power_two(self):
        h = h_energy(power_energy(2.0))
        a = np.linspace(0.0, 2.0, 21)
        np.testing.assert_allclose(h.value_at(a), a ** 4 / 6.0, atol=1e-8)

    def test_young_slope_is_a_subgradient(self):
        f = power_energy(3.0)
        h = h_energy(f)
        a = np.linspace(0.1, 2.0, 20)
        c = a * f.derivative_at(a) - f.value_at(a)
        np.testing.assert_allclose(h.derivative_at(a), c, rtol=1e-6, atol=1e-8)


@tag('slow')
class DualitySuiteTests(SimpleTestCase):
    """Residuals below 1e-6 on 10^3 points per law."""

    def sample(self, f, count=1000):
        hi = min(2.0, 0.95 * float(argmax_points(f, np.array([4.0]))[0]))
        return np.linspace(0.0, hi, count + 1)[1:]

    def test_young_equality_on_the_graph(self):
        for f in LAW_ENERGIES:
            a = self.sample(f)
            b = f.derivative_at(a)
            gap = np.abs(a * b - f.value_at(a) - conjugate(f).value_at(b))
            self.assertLess(np.max(gap / np.maximum(1.0, np.abs(a * b))), 1e-6, f.name)

    def test_biconjugation_through_tables(self):
        for f in LAW_ENERGIES:
            table = conjugate(strip(f), window=(0.0, 4.0), points=2 ** 17)
            a = self.sample(f)
            back = conjugate(table, window=(0.0, float(a[-1])), points=2 ** 17)
            scale = np.maximum(1.0, np.abs(f.value_at(a)))
            self.assertLess(np.max(np.abs(back.value_at(a) - f.value_at(a)) / scale), 1e-6, f.name)

    def test_coupling_for_all_pairs(self):
        for f in LAW_ENERGIES:
            points = 2 ** 17
            a = self.sample(f)
            f_star = conjugate(f)
            internal = z_from_e(f, lambda b: b, f, points=points)
            self.assertLess(check_coupling(f, internal, f, a).residual, 1e-6, f.name)
            h = h_energy(f, window=(0.0, float(a[-1]) * 1.05), points=points)
            h_pressure = z_from_e(h, f_star, f, points=points)
            self.assertLess(check_coupling(h, h_pressure, f, a).residual, 1e-6, f.name)
            derivative = e_from_z(quadratic(), f, a1=float(a[len(a) // 4]), points=points)
            self.assertLess(check_coupling(derivative, quadratic(), f, a).residual, 1e-6, f.name)
            round_trip = e_from_z(internal, f, a1=float(a[len(a) // 2]), points=points)
            self.assertLess(affine_gap(f, round_trip, a[10:])[1], 1e-6, f.name)


class ConvexityPropertyTests(SimpleTestCase):

    @settings(deadline=None, max_examples=60)
    @given(st.sampled_from(range(len(LAW_ENERGIES))),
           st.lists(st.floats(0.0, 0.95), min_size=3, max_size=3, unique=True))
    def test_random_triples(self, index, triple):
        f = LAW_ENERGIES[index]
        a1, a2, a3 = sorted(triple)
        theta = (a3 - a2) / (a3 - a1)
        interpolant = theta * f.value_at(a1) + (1.0 - theta) * f.value_at(a3)
        self.assertLessEqual(f.value_at(a2), interpolant + 1e-12 * max(1.0, abs(interpolant)))

    @settings(deadline=None, max_examples=60)
    @given(st.floats(0.0, 0.9), st.floats(1e-4, 0.09))
    def test_subdifferential_endpoints_are_monotone(self, a, step):
        for f in LAW_ENERGIES + [h_energy(power_energy(2.0)), incompressible_energy()]:
            _, hi_left = f.subdiff_bounds(a)
            lo_right, _ = f.subdiff_bounds(a + step)
            self.assertLessEqual(hi_left[()], lo_right[()] + 1e-12)


class SerializationTests(SimpleTestCase):

    def test_golden_table_for_tabulated_conjugate(self):
        table = conjugate(strip(power_energy(2.0)), window=(0.0, 2.0), points=64)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'conjugate.csv')
            write_function_csv(table, path)
            with open(path) as handle:
                self.assertEqual(handle.readline().strip(), 'a,f,inf_subdiff,sup_subdiff')
            loaded = read_function_csv(path)
        np.testing.assert_array_equal(loaded.values, table.values)
        np.testing.assert_array_equal(loaded.slopes, table.slopes)
