# helmholtz_solver/services.py
# Brinkman potential: solve (I - nu Delta_h) w = p
import logging
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import cg

from core.conf import growthlab_setting
from core.exceptions import InvalidParameter, SolverDivergence
from field_grid.grids import ScalarField
from field_grid.operators import laplacian

logger = logging.getLogger(__name__)


def _laplacian_1d(grid):
    """Sparse 1D Delta_h with the grid's boundary rule."""
    n, h2 = grid.cells, grid.spacing ** 2
    main = np.full(n, -2.0)
    if not grid.periodic:
        main[0] = main[-1] = -1.0
    lap = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format='lil')
    if grid.periodic:
        lap[0, n - 1] = 1.0
        lap[n - 1, 0] = 1.0
    return lap.tocsr() / h2


class HelmholtzOperator:
    """
    I - nu Delta_h on one grid, set up once and reused for every solve.

    1D grids use a banded Cholesky factorization (periodic grids add a
    Sherman-Morrison correction for the two corner entries). 2D grids use
    Jacobi-preconditioned conjugate gradients.
    """

    def __init__(self, grid, nu):
        nu = float(nu)
        if not nu >= 0:
            raise InvalidParameter(f"Helmholtz viscosity must be >= 0, got {nu}")
        self.grid = grid
        self.nu = nu
        self.rtol = float(growthlab_setting('HELMHOLTZ_RTOL'))
        self.maxiter = int(growthlab_setting('HELMHOLTZ_MAXITER'))
        if nu == 0:
            return
        if grid.dim == 1:
            self._factor_1d()
        else:
            lap = _laplacian_1d(grid)
            eye = sp.identity(grid.cells, format='csr')
            self.matrix = (sp.identity(grid.size, format='csr')
                           - nu * (sp.kron(eye, lap) + sp.kron(lap, eye))).tocsr()
            self.preconditioner = sp.diags(1.0 / self.matrix.diagonal())

    def _factor_1d(self):
        n = self.grid.cells
        s = self.nu / self.grid.spacing ** 2
        diag = np.full(n, 1.0 + 2.0 * s)
        if not self.grid.periodic:
            diag[0] = diag[-1] = 1.0 + s
        banded = np.zeros((2, n))
        banded[0, 1:] = -s
        banded[1] = diag
        self._corner = None
        if self.grid.periodic:
            # A = T + u v^T with gamma = -diag[0]
            gamma = -diag[0]
            banded[1, 0] -= gamma
            banded[1, -1] -= s * s / gamma
            u = np.zeros(n)
            u[0], u[-1] = gamma, -s
            v = np.zeros(n)
            v[0], v[-1] = 1.0, -s / gamma
            self._factor = cholesky_banded(banded)
            q = cho_solve_banded((self._factor, False), u)
            self._corner = (v, q, 1.0 + v @ q)
        else:
            self._factor = cholesky_banded(banded)

    def apply(self, w):
        """(I - nu Delta_h) w."""
        if self.nu == 0:
            return w
        return w - self.nu * laplacian(w)

    def residual(self, w, p):
        return float(np.max(np.abs(self.apply(w).values - p.values)))

    def solve(self, p, x0=None):
        if p.grid != self.grid:
            raise InvalidParameter("right-hand side lives on another grid")
        if self.nu == 0:
            return ScalarField(self.grid, p.values)
        if self.grid.dim == 1:
            y = cho_solve_banded((self._factor, False), p.values)
            if self._corner is not None:
                v, q, denom = self._corner
                y = y - (v @ y) / denom * q
            return ScalarField(self.grid, y)
        return self._solve_cg(p, x0)

    def _solve_cg(self, p, x0):
        rhs = p.values.ravel()
        scale = float(np.max(np.abs(rhs)))
        if scale == 0.0:
            return ScalarField(self.grid, np.zeros(self.grid.shape))
        iterations = [0]

        def count(_):
            iterations[0] += 1

        start = None if x0 is None else np.asarray(x0.values if isinstance(x0, ScalarField) else x0).ravel()
        # cg measures the 2-norm; the contract is on the sup norm
        solution, info = cg(self.matrix, rhs, x0=start, rtol=self.rtol / np.sqrt(rhs.size),
                            atol=0.0, maxiter=self.maxiter, M=self.preconditioner, callback=count)
        w = ScalarField(self.grid, solution.reshape(self.grid.shape))
        residual = self.residual(w, p)
        if residual > self.rtol * scale:
            logger.error(f"Helmholtz CG stalled: residual {residual:.3e} after {iterations[0]} iterations "
                         f"(nu={self.nu:g}, N={self.grid.cells}, info={info})")
            raise SolverDivergence(f"Helmholtz solve did not converge (residual {residual:.3e})",
                                   residual=residual, iterations=iterations[0])
        logger.debug(f"Helmholtz CG converged in {iterations[0]} iterations, residual {residual:.3e}")
        return w


@lru_cache(maxsize=32)
def helmholtz_operator(grid, nu):
    """Cached operator per (grid, nu) so sweeps reuse factorizations."""
    return HelmholtzOperator(grid, nu)


def solve_w(p, nu, x0=None):
    """w with -nu Delta_h w + w = p. nu = 0 returns p."""
    return helmholtz_operator(p.grid, float(nu)).solve(p, x0)
