from experiments.services import cmd_diagnose, store_reports
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Evaluates the enabled diagnostics on a stored trajectory'
    command_name = 'diagnose'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--run', default=None, dest='run_dir',
                            help='Trajectory directory (default: the output directory)')

    def execute_command(self, config, options, record):
        directory = options['run_dir'] or config.output_path(options['out'])
        reports = cmd_diagnose(config, directory, options['check'], options['no_check'])
        store_reports(record, reports)
        for report in reports:
            style = self.style.SUCCESS if report.passed else self.style.ERROR
            self.stdout.write(style(report.summary()))
        failed = [r.name for r in reports if not r.passed]
        if failed:
            return False, f"{config.scenario}: {len(failed)} of {len(reports)} diagnostics failed: {failed}"
        return True, f"{config.scenario}: {len(reports)} diagnostics passed"
