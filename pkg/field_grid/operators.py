# field_grid/operators.py
# finite-volume difference operators, quadratures and norms
import numpy as np

from core.exceptions import InvalidParameter
from .grids import ScalarField, VectorField


def _boundary_slice(dim, axis, index):
    sl = [slice(None)] * dim
    sl[axis] = index
    return tuple(sl)


def _wall_free(grid, comp, axis):
    """Copy of a face component with the Neumann wall face zeroed."""
    if grid.periodic:
        return comp
    comp = np.array(comp, copy=True)
    comp[_boundary_slice(grid.dim, axis, -1)] = 0.0
    return comp


def gradient(u):
    """(u_{i+1} - u_i) / h on right faces; Neumann walls carry zero."""
    grid = u.grid
    h = grid.spacing
    comps = []
    for axis in range(grid.dim):
        diff = (np.roll(u.values, -1, axis=axis) - u.values) / h
        comps.append(_wall_free(grid, diff, axis))
    return VectorField(grid, tuple(comps))


def divergence(F):
    """(F_{i+1/2} - F_{i-1/2}) / h; wall faces are ignored on Neumann grids."""
    grid = F.grid
    h = grid.spacing
    out = np.zeros(grid.shape)
    for axis, comp in enumerate(F.components):
        right = _wall_free(grid, comp, axis)
        left = np.roll(right, 1, axis=axis)
        if not grid.periodic:
            left[_boundary_slice(grid.dim, axis, 0)] = 0.0
        out += (right - left) / h
    return ScalarField(grid, out)


def laplacian(u):
    return divergence(gradient(u))


def inner(u, v):
    return float(np.sum(u.values * v.values) * u.grid.cell_volume)


def face_inner(F, G):
    grid = F.grid
    total = 0.0
    for axis, (a, b) in enumerate(zip(F.components, G.components)):
        total += float(np.sum(_wall_free(grid, a, axis) * _wall_free(grid, b, axis)))
    return total * grid.cell_volume


def cell_inner(F, G):
    """F . G at cell centers: per axis, the mean of the face products on the two adjacent faces."""
    grid = F.grid
    out = np.zeros(grid.shape)
    for axis, (a, b) in enumerate(zip(F.components, G.components)):
        prod = _wall_free(grid, a, axis) * _wall_free(grid, b, axis)
        left = np.roll(prod, 1, axis=axis)
        if not grid.periodic:
            left[_boundary_slice(grid.dim, axis, 0)] = 0.0
        out += 0.5 * (prod + left)
    return out


def cell_gradient_sq(F):
    """|F|^2 at cell centers."""
    return cell_inner(F, F)


def cell_magnitude(F):
    return np.sqrt(cell_gradient_sq(F))


def masked_integral(u, where=None, predicate=None):
    """
    h^d times the sum of u over the cells where ``predicate(where.values)`` holds.

    ``where`` may also be a boolean array; with neither argument this is the
    plain integral.
    """
    values = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    volume = (u.grid if isinstance(u, ScalarField) else where.grid).cell_volume
    if where is None:
        mask = np.ones(values.shape, dtype=bool)
    elif predicate is None:
        mask = np.asarray(where, dtype=bool)
    else:
        mask = np.asarray(predicate(where.values), dtype=bool)
    return float(np.sum(values[mask]) * volume)


def l1_norm(u):
    return float(np.sum(np.abs(u.values)) * u.grid.cell_volume)


def l2_norm(u):
    return float(np.sqrt(np.sum(u.values ** 2) * u.grid.cell_volume))


def linf_norm(u):
    return float(np.max(np.abs(u.values)))


def face_l2_norm(F):
    return float(np.sqrt(face_inner(F, F)))


def restrict(u, coarse):
    """Conservative block average of a fine field onto a nested coarse grid."""
    fine = u.grid
    if fine == coarse:
        return u
    if not coarse.nests_in(fine):
        raise InvalidParameter(f"{coarse.cells}-cell grid does not nest in the {fine.cells}-cell grid")
    r = fine.cells // coarse.cells
    blocks = u.values.reshape(sum(((coarse.cells, r) for _ in range(fine.dim)), ()))
    averaged = blocks.mean(axis=tuple(range(1, 2 * fine.dim, 2)))
    return ScalarField(coarse, averaged, density=u.density)


def boundary_band_max(u, cells):
    """Largest value within ``cells`` cells of any box wall."""
    band = np.zeros(u.grid.shape, dtype=bool)
    for axis in range(u.grid.dim):
        band[_boundary_slice(u.grid.dim, axis, slice(0, cells))] = True
        band[_boundary_slice(u.grid.dim, axis, slice(-cells, None))] = True
    return float(np.max(u.values[band]))
