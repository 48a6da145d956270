import os
import tempfile

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from core.exceptions import DomainViolation, InvalidParameter
from .grids import NEUMANN, PERIODIC, Grid, ScalarField, VectorField
from .operators import (
    boundary_band_max, cell_gradient_sq, divergence, face_inner, face_l2_norm, gradient, inner,
    l1_norm, laplacian, masked_integral, restrict,
)
from .serialization import read_field_csv, read_field_npy, write_field_csv, write_field_npy


def random_field(grid, seed):
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.standard_normal(grid.shape))


def random_vector(grid, seed):
    rng = np.random.default_rng(seed + 1)
    return VectorField(grid, tuple(rng.standard_normal(grid.shape) for _ in range(grid.dim)))


class GridTests(SimpleTestCase):

    def test_spacing_and_centered_origin(self):
        grid = Grid(1, 64, 4.0)
        self.assertEqual(grid.spacing, 4.0 / 64)
        self.assertEqual(grid.origin, -2.0)
        self.assertAlmostEqual(grid.centers()[0], -2.0 + grid.spacing / 2)

    def test_rejects_coarse_or_odd_grids(self):
        with self.assertRaises(InvalidParameter):
            Grid(1, 4, 1.0)
        with self.assertRaises(InvalidParameter):
            Grid(3, 16, 1.0)
        with self.assertRaises(InvalidParameter):
            Grid(1, 16, 1.0, boundary='dirichlet')
        with self.assertRaises(ValueError):
            Grid(2, 16, -1.0)

    def test_grids_are_hashable_values(self):
        self.assertEqual(Grid(2, 16, 1.0), Grid(2, 16, 1.0))
        self.assertEqual(len({Grid(2, 16, 1.0), Grid(2, 16, 1.0)}), 1)

    def test_density_fields_reject_negative_cells(self):
        grid = Grid(1, 16, 1.0)
        values = np.zeros(16)
        values[5] = -1e-3
        with self.assertRaises(DomainViolation) as ctx:
            ScalarField(grid, values, density=True)
        self.assertEqual(ctx.exception.cell, (5,))

    def test_fields_reject_non_finite_values(self):
        grid = Grid(1, 16, 1.0)
        values = np.zeros(16)
        values[2] = np.nan
        with self.assertRaises(DomainViolation):
            ScalarField(grid, values)


class GradientTests(SimpleTestCase):

    def test_constant_has_zero_gradient(self):
        for boundary in (NEUMANN, PERIODIC):
            grid = Grid(2, 16, 1.0, boundary)
            self.assertEqual(gradient(grid.constant(3.0)).max_abs(), 0.0)

    def test_linear_ramp_on_neumann_grid(self):
        grid = Grid(1, 32, 1.0, NEUMANN, origin=0.0)
        (x,) = grid.mesh()
        g = gradient(ScalarField(grid, x)).components[0]
        np.testing.assert_allclose(g[:-1], 1.0, rtol=1e-12)
        self.assertEqual(g[-1], 0.0)

    def test_periodic_sine_matches_discrete_difference(self):
        grid = Grid(1, 64, 2.0, PERIODIC)
        x = grid.centers()
        k = 2.0 * np.pi / grid.length
        g = gradient(ScalarField(grid, np.sin(k * x))).components[0]
        expected = (np.sin(k * (x + grid.spacing)) - np.sin(k * x)) / grid.spacing
        np.testing.assert_allclose(g, expected, atol=1e-12)


class DivergenceTests(SimpleTestCase):

    def test_zero_field(self):
        grid = Grid(2, 16, 1.0)
        self.assertEqual(np.max(np.abs(divergence(VectorField.zeros(grid)).values)), 0.0)

    def test_periodic_divergence_sums_to_zero(self):
        grid = Grid(2, 16, 1.0, PERIODIC)
        div = divergence(random_vector(grid, 3))
        self.assertAlmostEqual(float(np.sum(div.values)), 0.0, places=10)

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2]), st.sampled_from([NEUMANN, PERIODIC]))
    def test_adjoint_of_gradient(self, seed, dim, boundary):
        grid = Grid(dim, 12, 1.5, boundary)
        u = random_field(grid, seed)
        F = random_vector(grid, seed)
        lhs = inner(divergence(F), u)
        rhs = -face_inner(F, gradient(u))
        self.assertAlmostEqual(lhs, rhs, delta=1e-11 * max(1.0, abs(lhs)))

    def test_divergence_of_gradient_is_laplacian(self):
        for boundary in (NEUMANN, PERIODIC):
            grid = Grid(2, 16, 1.0, boundary)
            u = random_field(grid, 11)
            lap = laplacian(u).values
            # five-point stencil written out directly
            h2 = grid.spacing ** 2
            v = u.values
            if boundary == PERIODIC:
                direct = (np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1) - 4 * v) / h2
            else:
                padded = np.pad(v, 1, mode='edge')
                direct = (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:] - 4 * v) / h2
            np.testing.assert_allclose(lap, direct, rtol=1e-12, atol=1e-12 * np.max(np.abs(direct)))


class LaplacianTests(SimpleTestCase):

    def test_constant_is_in_the_kernel(self):
        grid = Grid(2, 16, 1.0)
        self.assertEqual(np.max(np.abs(laplacian(grid.constant(2.5)).values)), 0.0)

    def test_periodic_sine_mode_eigenvalue(self):
        grid = Grid(1, 64, 1.0, PERIODIC)
        x = grid.centers()
        for mode in (1, 3, 7):
            k = 2.0 * np.pi * mode / grid.length
            u = ScalarField(grid, np.sin(k * x))
            eigenvalue = -(2.0 - 2.0 * np.cos(k * grid.spacing)) / grid.spacing ** 2
            np.testing.assert_allclose(laplacian(u).values, eigenvalue * u.values, atol=1e-9)

    def test_quadratic_interior_is_exact(self):
        grid = Grid(1, 32, 1.0, NEUMANN)
        (x,) = grid.mesh()
        lap = laplacian(ScalarField(grid, x ** 2)).values
        np.testing.assert_allclose(lap[1:-1], 2.0, rtol=1e-8)

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2]), st.sampled_from([NEUMANN, PERIODIC]))
    def test_summation_by_parts(self, seed, dim, boundary):
        grid = Grid(dim, 10, 1.0, boundary)
        u = random_field(grid, seed)
        v = random_field(grid, seed + 7)
        lhs = inner(laplacian(u), v)
        rhs = -face_inner(gradient(u), gradient(v))
        self.assertAlmostEqual(lhs, rhs, delta=1e-10 * max(1.0, abs(lhs)))
        self.assertLessEqual(inner(laplacian(u), u), 1e-10)

    def test_gradient_norm_converges_at_second_order(self):
        exact = 2.0 * np.pi / np.sqrt(2.0)
        errors = []
        for cells in (32, 64, 128):
            grid = Grid(1, cells, 1.0, PERIODIC)
            u = ScalarField(grid, np.sin(2.0 * np.pi * grid.centers()))
            errors.append(abs(face_l2_norm(gradient(u)) - exact))
        self.assertGreater(errors[0] / errors[1], 3.5)
        self.assertGreater(errors[1] / errors[2], 3.5)


class QuadratureTests(SimpleTestCase):

    def test_masked_integral_extremes(self):
        grid = Grid(1, 32, 1.0)
        u = random_field(grid, 5)
        self.assertAlmostEqual(masked_integral(u, u, lambda w: np.ones_like(w, dtype=bool)),
                               u.integral())
        self.assertEqual(masked_integral(u, u, lambda w: np.zeros_like(w, dtype=bool)), 0.0)
        self.assertAlmostEqual(masked_integral(u), u.integral())

    def test_masked_integral_on_a_ramp(self):
        grid = Grid(1, 200, 1.0, origin=0.0)
        ramp = ScalarField(grid, grid.centers())
        value = masked_integral(grid.constant(1.0), ramp, lambda w: (w >= 0.2) & (w <= 0.4))
        self.assertAlmostEqual(value, 0.2, delta=grid.spacing)

    def test_cell_gradient_sq_of_uniform_slope(self):
        grid = Grid(1, 16, 1.0, PERIODIC)
        F = VectorField(grid, (np.full(grid.shape, 3.0),))
        np.testing.assert_allclose(cell_gradient_sq(F), 9.0)

    def test_restriction_conserves_mass(self):
        fine = Grid(2, 32, 2.0)
        coarse = Grid(2, 8, 2.0)
        u = ScalarField(fine, np.abs(random_field(fine, 2).values), density=True)
        r = restrict(u, coarse)
        self.assertAlmostEqual(r.integral(), u.integral(), places=12)
        self.assertTrue(r.density)
        np.testing.assert_allclose(r.values[0, 0], u.values[:4, :4].mean())

    def test_restriction_needs_nested_grids(self):
        with self.assertRaises(InvalidParameter):
            restrict(Grid(1, 30, 1.0).zeros(), Grid(1, 16, 1.0))

    def test_boundary_band(self):
        grid = Grid(1, 32, 1.0)
        values = np.zeros(32)
        values[16] = 1.0
        self.assertEqual(boundary_band_max(ScalarField(grid, values), 5), 0.0)
        values[30] = 0.5
        self.assertEqual(boundary_band_max(ScalarField(grid, values), 5), 0.5)

    def test_l1_norm(self):
        grid = Grid(1, 10, 2.0)
        self.assertAlmostEqual(l1_norm(grid.constant(-1.5)), 3.0)


class SerializationTests(SimpleTestCase):

    def test_csv_headers_and_values(self):
        with tempfile.TemporaryDirectory() as tmp:
            for grid, header in ((Grid(1, 16, 1.0), 'x,value'), (Grid(2, 8, 1.0), 'x,y,value')):
                u = random_field(grid, 9)
                path = os.path.join(tmp, f'u{grid.dim}.csv')
                write_field_csv(u, path)
                with open(path) as fh:
                    self.assertEqual(fh.readline().strip(), header)
                np.testing.assert_array_equal(read_field_csv(path, grid).values, u.values)

    def test_npy_dump(self):
        grid = Grid(2, 8, 1.0)
        u = random_field(grid, 4)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_field_npy(u, os.path.join(tmp, 'u.npy'))
            np.testing.assert_array_equal(read_field_npy(path, grid).values, u.values)
