"""
Solver state, step controls and the trajectory a run produces.

A SolverState is one instant of a run: per-species densities plus the
pressure and potential derived from their sum. States are immutable; a step
builds a new one, so p and w are never stale.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.exceptions import InvalidParameter
from field_grid.grids import ScalarField
from field_grid.operators import gradient


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    densities: tuple
    pressure: ScalarField
    potential: ScalarField
    step: int = 0

    @property
    def grid(self):
        return self.pressure.grid

    @property
    def species(self):
        return len(self.densities)

    def total(self):
        if len(self.densities) == 1:
            return self.densities[0]
        return ScalarField(self.grid, np.sum([rho.values for rho in self.densities], axis=0), density=True)

    def velocity(self):
        """-grad w on the faces."""
        return gradient(self.potential) * -1.0

    def mass(self):
        return sum(rho.integral() for rho in self.densities)


@dataclass(frozen=True)
class StepControls:
    cfl_fraction: float = 0.5
    max_dt: float = 1e-2
    reaction_fraction: float = 0.5
    # keep every n-th step state for the diagnostics
    record_stride: int = 1

    def __post_init__(self):
        if not 0 < self.cfl_fraction <= 1:
            raise InvalidParameter(f"cfl_fraction must be in (0, 1], got {self.cfl_fraction}")
        if not (self.max_dt > 0 and math.isfinite(self.max_dt)):
            raise InvalidParameter(f"max_dt must be positive, got {self.max_dt}")
        if not 0 < self.reaction_fraction < 1:
            raise InvalidParameter(f"reaction_fraction must be in (0, 1), got {self.reaction_fraction}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise InvalidParameter(f"record_stride must be a positive integer, got {self.record_stride}")


@dataclass(frozen=True)
class StepRecord:
    """One step n -> n+1. ``growth_rate`` satisfies mass_after - mass = dt * growth_rate."""
    index: int
    t: float
    dt: float
    mass: float
    mass_after: float
    growth_rate: float
    max_pressure: float
    max_density: float
    # which limit set dt: transport, parabolic, reaction, max_dt or landing
    limiter: str = ''

    def ledger_row(self):
        return (self.index, self.t, self.dt, self.mass, self.growth_rate, self.max_pressure, self.max_density)


LEDGER_COLUMNS = ('step', 't', 'dt', 'mass', 'growth_rate', 'max_pressure', 'max_density')


@dataclass
class StepHistory:
    """
    Recorded step states for time quadrature. ``weights[k]`` is the time from
    record k to record k+1 (the sum of the dts in between), so left-endpoint
    sums over records integrate over [0, T].
    """
    times: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    pressure: list = field(default_factory=list)
    potential: list = field(default_factory=list)
    # effective growth sum_i rho_i G_i(p) / rho, per cell
    growth: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def arrays(self):
        return {
            'times': np.asarray(self.times, dtype=float),
            'dts': np.asarray(self.weights, dtype=float),
            'rho': np.asarray(self.rho, dtype=float),
            'pressure': np.asarray(self.pressure, dtype=float),
            'potential': np.asarray(self.potential, dtype=float),
            'growth': np.asarray(self.growth, dtype=float),
        }


@dataclass
class Trajectory:
    """What a run leaves behind: snapshots at requested times, step records and the ledger."""
    law: object
    grid: object
    controls: StepControls
    model: str
    snapshots: list = field(default_factory=list)
    steps: StepHistory = field(default_factory=StepHistory)
    ledger: list = field(default_factory=list)
    initial: Optional[SolverState] = None

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def horizon(self):
        return self.final.t

    def snapshot_times(self):
        return [s.t for s in self.snapshots]

    def snapshot_near(self, t):
        """Snapshot with the closest time."""
        return min(self.snapshots, key=lambda s: abs(s.t - t))
