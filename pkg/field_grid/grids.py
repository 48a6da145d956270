"""
Uniform Cartesian grids in one or two dimensions and the fields living on them.

Scalar fields hold one value per cell. Vector fields are staggered: component
``k`` holds the value on the face to the right of each cell along axis ``k``.
On Neumann grids the last face of every axis is the box wall and carries zero
flux; on periodic grids it is the face shared with the first cell.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DomainViolation, InvalidParameter

PERIODIC = 'periodic'
NEUMANN = 'neumann'
BOUNDARIES = (NEUMANN, PERIODIC)

MIN_CELLS = 8


@dataclass(frozen=True)
class Grid:
    dim: int
    cells: int
    length: float
    boundary: str = NEUMANN
    # left edge on every axis; None centers the box on the origin
    origin: float = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidParameter(f"grid dimension must be 1 or 2, got {self.dim}")
        if int(self.cells) != self.cells or self.cells < MIN_CELLS:
            raise InvalidParameter(f"grid needs at least {MIN_CELLS} cells per axis, got {self.cells}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise InvalidParameter(f"grid length must be positive, got {self.length}")
        if self.boundary not in BOUNDARIES:
            raise InvalidParameter(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        object.__setattr__(self, 'cells', int(self.cells))
        object.__setattr__(self, 'length', float(self.length))
        origin = -0.5 * self.length if self.origin is None else float(self.origin)
        object.__setattr__(self, 'origin', origin)

    @property
    def spacing(self):
        return self.length / self.cells

    @property
    def shape(self):
        return (self.cells,) * self.dim

    @property
    def size(self):
        return self.cells ** self.dim

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    @property
    def periodic(self):
        return self.boundary == PERIODIC

    def centers(self):
        """Cell-center coordinates along one axis."""
        return self.origin + (np.arange(self.cells) + 0.5) * self.spacing

    def faces(self):
        """Right-face coordinates along one axis."""
        return self.origin + (np.arange(self.cells) + 1.0) * self.spacing

    def mesh(self):
        """Cell-center coordinate arrays, one per axis, each of ``shape``."""
        axes = [self.centers()] * self.dim
        return tuple(np.meshgrid(*axes, indexing='ij'))

    def radius(self, center=0.0):
        """Distance of each cell center from ``center`` (same on every axis)."""
        squared = sum((x - center) ** 2 for x in self.mesh())
        return np.sqrt(squared)

    def refined(self, factor):
        return Grid(self.dim, self.cells * int(factor), self.length, self.boundary, self.origin)

    def nests_in(self, fine):
        """True when every cell of self is a whole block of cells of ``fine``."""
        return (self.dim == fine.dim and self.boundary == fine.boundary
                and math.isclose(self.length, fine.length) and math.isclose(self.origin, fine.origin)
                and fine.cells % self.cells == 0)

    def zeros(self, density=False):
        return ScalarField(self, np.zeros(self.shape), density=density)

    def constant(self, value, density=False):
        return ScalarField(self, np.full(self.shape, float(value)), density=density)

    def describe(self):
        return {
            'dim': self.dim,
            'cells': self.cells,
            'length': self.length,
            'boundary': self.boundary,
            'origin': self.origin,
            'spacing': self.spacing,
        }


def _frozen_array(values, shape, what):
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise InvalidParameter(f"{what} has shape {arr.shape}, grid expects {shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One finite value per cell. ``density`` fields are also checked for sign."""
    grid: Grid
    values: np.ndarray
    density: bool = False

    def __post_init__(self):
        arr = _frozen_array(self.values, self.grid.shape, 'scalar field')
        bad = ~np.isfinite(arr)
        if np.any(bad):
            cell = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DomainViolation(f"non-finite field value at cell {cell}", value=float(arr[cell]), cell=cell)
        if self.density and np.any(arr < 0):
            cell = tuple(int(i) for i in np.unravel_index(np.argmin(arr), arr.shape))
            raise DomainViolation(f"negative density {arr[cell]:.3g} at cell {cell}",
                                  value=float(arr[cell]), cell=cell)
        object.__setattr__(self, 'values', arr)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise InvalidParameter("fields live on different grids")
            return other.values
        return other

    def with_values(self, values, density=None):
        return ScalarField(self.grid, values, self.density if density is None else density)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def integral(self):
        return float(np.sum(self.values) * self.grid.cell_volume)

    def max(self):
        return float(np.max(self.values))

    def min(self):
        return float(np.min(self.values))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Staggered face values: ``components[k]`` is the right-face value along axis k."""
    grid: Grid
    components: tuple = field(default=())

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise InvalidParameter(f"vector field needs {self.grid.dim} components, got {len(self.components)}")
        comps = tuple(_frozen_array(c, self.grid.shape, 'vector component') for c in self.components)
        for comp in comps:
            if not np.all(np.isfinite(comp)):
                raise DomainViolation("non-finite face value in vector field")
        object.__setattr__(self, 'components', comps)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, tuple(np.zeros(grid.shape) for _ in range(grid.dim)))

    def max_abs(self):
        return float(max(np.max(np.abs(c)) for c in self.components))

    def __sub__(self, other):
        return VectorField(self.grid, tuple(a - b for a, b in zip(self.components, other.components)))

    def __mul__(self, scalar):
        return VectorField(self.grid, tuple(c * scalar for c in self.components))

    __rmul__ = __mul__
