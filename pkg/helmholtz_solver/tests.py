import numpy as np
from django.test import SimpleTestCase, override_settings
from hypothesis import given, settings, strategies as st

from core.exceptions import SolverDivergence
from field_grid.grids import NEUMANN, PERIODIC, Grid, ScalarField
from field_grid.operators import inner, l2_norm, laplacian
from .services import HelmholtzOperator, helmholtz_operator, solve_w

GRIDS = [
    Grid(1, 64, 2.0, NEUMANN),
    Grid(1, 64, 2.0, PERIODIC),
    Grid(2, 24, 2.0, NEUMANN),
    Grid(2, 24, 2.0, PERIODIC),
]


def bump(grid, width=0.5):
    r = grid.radius()
    return ScalarField(grid, np.where(r < width, (1.0 - (r / width) ** 2) ** 3, 0.0))


class SolveTests(SimpleTestCase):

    def test_zero_viscosity_returns_the_pressure(self):
        for grid in GRIDS:
            p = bump(grid)
            np.testing.assert_array_equal(solve_w(p, 0.0).values, p.values)

    def test_constants_are_fixed_points(self):
        for grid in GRIDS:
            w = solve_w(grid.constant(1.7), 0.05)
            np.testing.assert_allclose(w.values, 1.7, rtol=1e-9)

    def test_periodic_sine_mode(self):
        grid = Grid(1, 128, 1.0, PERIODIC)
        x = grid.centers()
        nu = 0.01
        for mode in (1, 5):
            k = 2.0 * np.pi * mode
            p = ScalarField(grid, np.sin(k * x))
            eigenvalue = (2.0 - 2.0 * np.cos(k * grid.spacing)) / grid.spacing ** 2
            np.testing.assert_allclose(solve_w(p, nu).values, p.values / (1.0 + nu * eigenvalue), atol=1e-12)

    def test_residual_meets_tolerance(self):
        for grid in GRIDS:
            p = bump(grid)
            op = HelmholtzOperator(grid, 1e-2)
            w = op.solve(p)
            self.assertLessEqual(op.residual(w, p), 1e-10 * np.max(np.abs(p.values)))

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 10_000), st.sampled_from(range(len(GRIDS))), st.sampled_from([1e-3, 1e-1, 1.0]))
    def test_maximum_principle(self, seed, index, nu):
        grid = GRIDS[index]
        p = ScalarField(grid, np.random.default_rng(seed).uniform(0.0, 2.0, grid.shape))
        w = solve_w(p, nu)
        tol = 1e-9 * p.max()
        self.assertGreaterEqual(w.min(), -tol)
        self.assertGreaterEqual(w.min(), p.min() - tol)
        self.assertLessEqual(w.max(), p.max() + tol)

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 10_000), st.sampled_from(range(len(GRIDS))))
    def test_self_adjoint(self, seed, index):
        grid = GRIDS[index]
        rng = np.random.default_rng(seed)
        p1 = ScalarField(grid, rng.standard_normal(grid.shape))
        p2 = ScalarField(grid, rng.standard_normal(grid.shape))
        lhs = inner(solve_w(p1, 0.05), p2)
        rhs = inner(p1, solve_w(p2, 0.05))
        self.assertAlmostEqual(lhs, rhs, delta=1e-8 * max(1.0, abs(lhs)))

    def test_small_viscosity_consistency(self):
        for grid in GRIDS:
            p = bump(grid, width=0.8)
            for nu in (1e-2, 1e-3, 1e-4):
                gap = l2_norm(solve_w(p, nu) - p)
                self.assertLessEqual(gap, nu * l2_norm(laplacian(p)) * (1.0 + 1e-8))

    def test_warm_start_gives_the_same_answer(self):
        grid = GRIDS[2]
        p = bump(grid)
        cold = solve_w(p, 0.1)
        warm = solve_w(p, 0.1, x0=cold)
        np.testing.assert_allclose(warm.values, cold.values, atol=1e-10)


class OperatorCacheTests(SimpleTestCase):

    def test_operators_are_shared_per_grid_and_viscosity(self):
        grid = Grid(1, 32, 1.0)
        self.assertIs(helmholtz_operator(grid, 0.1), helmholtz_operator(Grid(1, 32, 1.0), 0.1))
        self.assertIsNot(helmholtz_operator(grid, 0.1), helmholtz_operator(grid, 0.2))

    @override_settings(GROWTHLAB={'HELMHOLTZ_MAXITER': 1, 'HELMHOLTZ_RTOL': 1e-14})
    def test_divergence_carries_the_residual(self):
        grid = Grid(2, 32, 2.0)
        op = HelmholtzOperator(grid, 1.0)
        with self.assertRaises(SolverDivergence) as ctx:
            op.solve(bump(grid))
        self.assertGreater(ctx.exception.residual, 0.0)
        self.assertEqual(ctx.exception.iterations, 1)
