# brinkman_stepper/observers.py
# hooks that watch a run: snapshots, step records, the mass ledger, streaming to disk
import logging

import numpy as np

from .storage import prepare_directory, write_snapshot, write_trajectory

logger = logging.getLogger(__name__)


class Observer:
    """Base hook. ``requested_times`` are instants the stepper must land on exactly."""

    def requested_times(self, horizon):
        return ()

    def on_start(self, state, trajectory):
        pass

    def on_step(self, state, record, trajectory):
        """``state`` is the state at the start of the step described by ``record``."""

    def on_snapshot(self, state, trajectory):
        pass

    def on_finish(self, state, trajectory):
        pass


class SnapshotObserver(Observer):
    def __init__(self, times):
        self.times = sorted({float(t) for t in times})

    def requested_times(self, horizon):
        return [t for t in self.times if 0.0 <= t <= horizon]


class StepRecorder(Observer):
    """Keeps every ``stride``-th step state; weights carry the skipped dts."""

    def __init__(self, stride=1, growth_field=None):
        self.stride = int(stride)
        self.growth_field = growth_field

    def on_step(self, state, record, trajectory):
        history = trajectory.steps
        if record.index % self.stride == 0:
            history.times.append(state.t)
            history.weights.append(0.0)
            history.rho.append(np.array(state.total().values))
            history.pressure.append(np.array(state.pressure.values))
            history.potential.append(np.array(state.potential.values))
            history.growth.append(self.growth_field(state))
        history.weights[-1] += record.dt


class MassLedger(Observer):
    """Ledger rows per step plus a closing row for the final state."""

    def __init__(self, growth_rate=None):
        self.growth_rate = growth_rate
        self.worst_defect = 0.0

    def on_step(self, state, record, trajectory):
        trajectory.ledger.append(record.ledger_row())
        defect = abs(record.mass_after - record.mass - record.dt * record.growth_rate)
        self.worst_defect = max(self.worst_defect, defect / max(1.0, abs(record.mass)))

    def on_finish(self, state, trajectory):
        rate = self.growth_rate(state) if self.growth_rate else 0.0
        trajectory.ledger.append((state.step, state.t, 0.0, state.mass(), rate,
                                  state.pressure.max(), state.total().max()))
        logger.debug(f"mass ledger closed with worst relative defect {self.worst_defect:.3e}")


class TrajectoryWriter(Observer):
    """Streams each snapshot to disk as it is taken."""

    def __init__(self, directory, scenario='', digest=''):
        self.directory = directory
        self.scenario = scenario
        self.digest = digest
        self.index = 0

    def on_start(self, state, trajectory):
        prepare_directory(self.directory)

    def on_snapshot(self, state, trajectory):
        write_snapshot(self.directory, self.index, state)
        self.index += 1

    def on_finish(self, state, trajectory):
        write_trajectory(trajectory, self.directory, snapshots=False, scenario=self.scenario, digest=self.digest)
