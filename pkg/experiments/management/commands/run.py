from experiments.services import cmd_run, store_reports
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Runs the configured Brinkman or Darcy simulation and writes the trajectory'
    command_name = 'run'

    def execute_command(self, config, options, record):
        self.stdout.write(f"Running {config.scenario} ({config.model}, N={config.grid.cells}, T={config.horizon:g})")
        directory, report = cmd_run(config, options['out'])
        store_reports(record, [report])
        self.stdout.write(report.summary())
        if not report.passed:
            return False, f"{config.scenario}: a-priori bounds violated, see {directory}"
        return True, f"{config.scenario}: trajectory written to {directory}"
