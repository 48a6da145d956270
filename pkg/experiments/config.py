"""
Experiment configuration: a YAML file validated by the DRF serializers in
``serializers.py`` into immutable dataclasses.

Every problem in a file is collected into one ConfigError as
``path: message`` strings; a config object is only ever built from a file
that validated completely.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from brinkman_stepper.services import BRINKMAN
from brinkman_stepper.state import StepControls
from core.conf import growthlab_setting
from core.exceptions import ConfigError, InvalidParameter
from field_grid.grids import NEUMANN, Grid, ScalarField
from pressure_laws.laws import (
    CLAMPED, INCOMPRESSIBLE, LINEAR, LOG, POWER, PRESSURE_NORMALIZATION, InitialData, clamped_growth,
    incompressible_law, joint_limit_law, linear_growth, log_law, power_law, zero_growth,
)
from .serializers import BUMP, PLATEAU, TWO_BUMPS, TWO_SPECIES, ExperimentConfigSerializer

logger = logging.getLogger(__name__)

# uniform snapshots per horizon in sweep members and their references
GAP_SAMPLES = 16


@dataclass(frozen=True)
class GridSpec:
    cells: int
    dim: int = 1
    length: float = 6.0
    boundary: str = NEUMANN

    def build(self, refinement=1):
        return Grid(self.dim, self.cells, self.length, self.boundary).refined(refinement)


@dataclass(frozen=True)
class LawSpec:
    nu: float
    family: str = POWER
    gamma: Optional[float] = None
    normalization: str = PRESSURE_NORMALIZATION
    a0: Optional[float] = None


@dataclass(frozen=True)
class GrowthSpec:
    kind: str = LINEAR
    p_H: float = 1.0
    g0: float = 1.0

    def build(self, g0=None):
        g0 = self.g0 if g0 is None else g0
        if self.kind == LINEAR:
            return linear_growth(self.p_H, g0)
        if self.kind == CLAMPED:
            return clamped_growth(self.p_H, g0)
        return zero_growth()


@dataclass(frozen=True)
class DatumSpec:
    shape: str = BUMP
    height: float = 0.5
    width: float = 0.8
    center: float = 0.0
    separation: float = 1.0
    bound: float = 1.0
    species_g0: Optional[float] = None

    def _bump(self, grid, center):
        r = grid.radius(center)
        return np.where(r < self.width, self.height * (1.0 - (r / self.width) ** 2) ** 2, 0.0)

    def build(self, grid):
        half = 0.5 * self.separation
        if self.shape == BUMP:
            densities = [self._bump(grid, self.center)]
        elif self.shape == TWO_BUMPS:
            densities = [self._bump(grid, self.center - half) + self._bump(grid, self.center + half)]
        elif self.shape == PLATEAU:
            densities = [np.where(grid.radius(self.center) < self.width, self.height, 0.0)]
        elif self.shape == TWO_SPECIES:
            densities = [self._bump(grid, self.center - half), self._bump(grid, self.center + half)]
        else:
            raise InvalidParameter(f"unknown datum shape {self.shape!r}")
        return InitialData(tuple(ScalarField(grid, rho, density=True) for rho in densities), self.bound)


@dataclass(frozen=True)
class ControlsSpec:
    cfl_fraction: float = 0.5
    max_dt: float = 1e-2
    reaction_fraction: float = 0.5
    record_stride: int = 1

    def build(self):
        return StepControls(self.cfl_fraction, self.max_dt, self.reaction_fraction, self.record_stride)


@dataclass(frozen=True)
class SweepSpec:
    nu: tuple = ()
    gamma: tuple = ()
    joint_nu: tuple = ()
    gamma_fixed: Optional[float] = None
    nu_fixed: Optional[float] = None
    reference_gamma: float = 80.0
    reference_refinement: int = 1

    @property
    def empty(self):
        return not (self.nu or self.gamma or self.joint_nu)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    grid: GridSpec
    law: LawSpec
    horizon: float
    model: str = BRINKMAN
    growth: GrowthSpec = field(default_factory=GrowthSpec)
    datum: DatumSpec = field(default_factory=DatumSpec)
    observer_times: tuple = ()
    controls: ControlsSpec = field(default_factory=ControlsSpec)
    diagnostics: tuple = ()
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output_dir: str = ''

    def as_dict(self):
        return asdict(self)

    def digest(self):
        """sha256 of the canonical JSON form."""
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def output_path(self, out=None):
        if out:
            return Path(out)
        if self.output_dir:
            return Path(self.output_dir)
        return Path(growthlab_setting('OUTPUT_DIR')) / self.scenario

    def snapshot_times(self):
        return tuple(sorted({0.0, *self.observer_times, self.horizon}))

    def comparison_times(self, samples=GAP_SAMPLES):
        """Snapshot times plus ``samples`` equal steps of the horizon, for time-integrated gaps."""
        uniform = (self.horizon * k / samples for k in range(samples + 1))
        return tuple(sorted({*self.snapshot_times(), *uniform}))

    def build_grid(self, refinement=1):
        return self.grid.build(refinement)

    def build_data(self, grid=None):
        return self.datum.build(grid or self.build_grid())

    def build_law(self, gamma=None, nu=None, joint=False):
        """
        The configured law with the datum bound attached. ``gamma`` and ``nu``
        override the configured values; ``joint`` takes gamma = 1/nu.
        """
        spec = self.law
        nu = spec.nu if nu is None else float(nu)
        growth = self.growth.build()
        if joint:
            law = joint_limit_law(nu, growth)
        elif spec.family == INCOMPRESSIBLE:
            law = incompressible_law(growth)
        elif spec.family == LOG:
            law = log_law(nu, growth) if spec.a0 is None else log_law(nu, growth, spec.a0)
        else:
            gamma = spec.gamma if gamma is None else float(gamma)
            law = power_law(gamma, nu, growth, spec.normalization, 1.0 if spec.a0 is None else spec.a0)
        law = law.with_bound(self.datum.bound)
        if self.datum.shape == TWO_SPECIES:
            law = law.with_species_growth(growth, self.growth.build(self.datum.species_g0))
        return law

    @property
    def incompressible(self):
        return self.law.family == INCOMPRESSIBLE

    def stepper_law(self, gamma=None, nu=None, joint=False):
        """
        The law a stepper integrates. The incompressible law has no stepper of
        its own; it runs as the Darcy power law at ``sweep.reference_gamma``.
        """
        if self.incompressible and not joint and gamma is None:
            law = power_law(self.sweep.reference_gamma, 0.0, self.growth.build()).with_bound(self.datum.bound)
            if self.datum.shape == TWO_SPECIES:
                law = law.with_species_growth(self.growth.build(), self.growth.build(self.datum.species_g0))
            return law
        return self.build_law(gamma, nu, joint)


def flatten_errors(detail, path=''):
    """DRF error detail -> 'path: message' strings, depth first."""
    if isinstance(detail, dict):
        out = []
        for key, value in detail.items():
            if key == 'non_field_errors':
                child = path
            elif isinstance(key, int):
                child = f"{path}[{key}]"
            else:
                child = f"{path}.{key}" if path else str(key)
            out.extend(flatten_errors(value, child))
        return out
    if isinstance(detail, list):
        out = []
        for item in detail:
            out.extend(flatten_errors(item, path))
        return out
    return [f"{path or 'config'}: {detail}"]


def _from_validated(data):
    sweep = data['sweep']
    return ExperimentConfig(
        scenario=data['scenario'],
        model=data['model'],
        grid=GridSpec(**data['grid']),
        law=LawSpec(**data['law']),
        growth=GrowthSpec(**data['growth']),
        datum=DatumSpec(**data['datum']),
        horizon=data['horizon'],
        observer_times=tuple(data['observer_times']),
        controls=ControlsSpec(**data['controls']),
        diagnostics=tuple(dict.fromkeys(data['diagnostics'])),
        sweep=SweepSpec(**{**sweep, 'nu': tuple(sweep['nu']), 'gamma': tuple(sweep['gamma']),
                           'joint_nu': tuple(sweep['joint_nu'])}),
        output_dir=data['output_dir'],
    )


def parse_config(text):
    """YAML text -> ExperimentConfig, or ConfigError listing every problem."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"yaml: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config: expected a mapping of sections at the top level"])
    serializer = ExperimentConfigSerializer(data=raw)
    if not serializer.is_valid():
        errors = flatten_errors(serializer.errors)
        logger.error(f"config rejected with {len(errors)} problem(s)")
        raise ConfigError(errors)
    config = _from_validated(serializer.validated_data)
    # typed values re-check their own ranges; report those as config errors too
    problems = []
    for path, build in (('controls', config.controls.build), ('grid', config.build_grid),
                        ('law', config.build_law), ('law', config.stepper_law)):
        try:
            build()
        except InvalidParameter as exc:
            problems.append(f"{path}: {exc}")
    if config.incompressible and not problems:
        peak = config.build_data().total().max()
        if peak > 1.0:
            problems.append(f"datum: the incompressible law runs from densities <= 1, the datum peaks at {peak:g}")
    if problems:
        raise ConfigError(problems)
    return config


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    return parse_config(text)
