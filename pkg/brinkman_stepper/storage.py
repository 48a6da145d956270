# brinkman_stepper/storage.py
# on-disk layout of a run: manifest.json, ledger.csv, snapshots/ and steps/
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from field_grid.grids import Grid
from field_grid.serialization import write_field_csv
from .state import LEDGER_COLUMNS

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.json'
LEDGER = 'ledger.csv'
SNAPSHOT_DIR = 'snapshots'
STEPS_DIR = 'steps'


def prepare_directory(directory):
    directory = Path(directory)
    (directory / SNAPSHOT_DIR).mkdir(parents=True, exist_ok=True)
    (directory / STEPS_DIR).mkdir(parents=True, exist_ok=True)
    return directory


def snapshot_fields(state):
    """(name, field) pairs in file order: rho_<i>..., pressure, potential."""
    named = [(f'rho_{i}', rho) for i, rho in enumerate(state.densities)]
    return named + [('pressure', state.pressure), ('potential', state.potential)]


def write_snapshot(directory, index, state):
    """Per-field CSVs plus one stacked .npy for snapshot ``index``."""
    directory = Path(directory) / SNAPSHOT_DIR
    files = []
    for name, u in snapshot_fields(state):
        path = directory / f't_{index}_{name}.csv'
        write_field_csv(u, path)
        files.append(path.name)
    stacked = np.stack([np.asarray(u.values) for _, u in snapshot_fields(state)])
    npy = directory / f't_{index}.npy'
    np.save(npy, stacked, allow_pickle=False)
    files.append(npy.name)
    return {'index': index, 't': state.t, 'step': state.step, 'files': files}


def write_ledger(trajectory, path):
    np.savetxt(path, np.asarray(trajectory.ledger, dtype=float).reshape(-1, len(LEDGER_COLUMNS)),
               delimiter=',', header=','.join(LEDGER_COLUMNS), comments='', fmt='%.17g')
    return path


def write_steps(trajectory, directory):
    for name, values in trajectory.steps.arrays().items():
        np.save(Path(directory) / STEPS_DIR / f'{name}.npy', values, allow_pickle=False)


def write_trajectory(trajectory, directory, snapshots=True, scenario='', digest=''):
    """
    Write a finished run. With ``snapshots=False`` the snapshot files are
    assumed to be streamed already (TrajectoryWriter) and only the
    manifest, ledger and step records are written.
    """
    directory = prepare_directory(directory)
    entries = []
    for index, state in enumerate(trajectory.snapshots):
        if snapshots:
            entries.append(write_snapshot(directory, index, state))
        else:
            entries.append({'index': index, 't': state.t, 'step': state.step,
                            'files': _snapshot_files(index, state)})
    write_ledger(trajectory, directory / LEDGER)
    write_steps(trajectory, directory)
    manifest = {
        'scenario': scenario,
        'config_digest': digest,
        'model': trajectory.model,
        'grid': trajectory.grid.describe(),
        'law': trajectory.law.describe(),
        'species': trajectory.final.species,
        'controls': {
            'cfl_fraction': trajectory.controls.cfl_fraction,
            'max_dt': trajectory.controls.max_dt,
            'reaction_fraction': trajectory.controls.reaction_fraction,
            'record_stride': trajectory.controls.record_stride,
        },
        'snapshots': entries,
    }
    with open(directory / MANIFEST, 'w') as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    logger.info(f"wrote {len(entries)} snapshots and {len(trajectory.ledger)} ledger rows to {directory}")
    return directory


def _snapshot_files(index, state):
    return [f't_{index}_{name}.csv' for name, _ in snapshot_fields(state)] + [f't_{index}.npy']


@dataclass
class StoredRun:
    """A run read back from disk: arrays only, no law objects."""
    manifest: dict
    snapshots: list = field(default_factory=list)
    steps: dict = field(default_factory=dict)
    ledger: np.ndarray = None

    @property
    def grid(self):
        described = self.manifest['grid']
        return Grid(described['dim'], described['cells'], described['length'],
                    described['boundary'], described['origin'])

    @property
    def times(self):
        return [entry['t'] for entry in self.manifest['snapshots']]


def load_trajectory(directory):
    directory = Path(directory)
    with open(directory / MANIFEST) as handle:
        manifest = json.load(handle)
    snapshots = [np.load(directory / SNAPSHOT_DIR / f"t_{entry['index']}.npy", allow_pickle=False)
                 for entry in manifest['snapshots']]
    steps = {path.stem: np.load(path, allow_pickle=False) for path in sorted((directory / STEPS_DIR).glob('*.npy'))}
    ledger = np.loadtxt(directory / LEDGER, delimiter=',', skiprows=1, ndmin=2)
    return StoredRun(manifest, snapshots, steps, ledger)
