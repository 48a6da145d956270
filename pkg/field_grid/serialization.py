import numpy as np

from core.exceptions import InvalidParameter
from .grids import ScalarField

CSV_HEADERS = {1: 'x,value', 2: 'x,y,value'}


def field_table(u):
    """Rows (x, value) in 1D or (x, y, value) in 2D, C order over cells."""
    coords = [c.ravel() for c in u.grid.mesh()]
    return np.column_stack(coords + [u.values.ravel()])


def write_field_csv(u, path):
    np.savetxt(path, field_table(u), delimiter=',', header=CSV_HEADERS[u.grid.dim],
               comments='', fmt='%.17g')
    return path


def read_field_csv(path, grid, density=False):
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    if data.shape != (grid.size, grid.dim + 1):
        raise InvalidParameter(f"{path}: {data.shape[0]} rows do not match a {grid.shape} grid")
    return ScalarField(grid, data[:, -1].reshape(grid.shape), density=density)


def write_field_npy(u, path):
    np.save(path, np.asarray(u.values), allow_pickle=False)
    return path


def read_field_npy(path, grid, density=False):
    return ScalarField(grid, np.load(path, allow_pickle=False), density=density)
