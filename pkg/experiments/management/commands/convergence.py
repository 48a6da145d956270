from experiments.services import cmd_convergence, store_reports
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Runs the nu, gamma and joint-limit sweeps and fits convergence rates'
    command_name = 'convergence'

    def execute_command(self, config, options, record):
        result = cmd_convergence(config, options['out'], options['jobs'])
        store_reports(record, [result.checks])
        for row in result.table.rows:
            slope = f"slope {row.slope:.3f} [{row.slope_lo:.3f}, {row.slope_hi:.3f}]" if row.fitted else row.flag
            self.stdout.write(f"  {row.arm:6s} {row.metric:16s} {row.points} points  {slope}")
        self.stdout.write(result.checks.summary())
        if not result.checks.passed:
            return False, f"{config.scenario}: convergence checks failed"
        return True, f"{config.scenario}: {len(result.files)} convergence files written"
