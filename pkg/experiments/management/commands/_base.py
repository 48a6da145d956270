import logging

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ConfigError, GrowthLabError
from experiments.config import load_config
from experiments.registry import CHECK_NAMES
from experiments.services import finish_record, start_record

logger = logging.getLogger(__name__)

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2


class ExperimentCommand(BaseCommand):
    """
    Shared flags and exit codes: 0 success, 1 failed check or solver error,
    2 usage or config error.
    """
    command_name = ''

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment config (YAML)')
        parser.add_argument('--out', default=None, help='Output directory (default: from the config)')
        parser.add_argument('--jobs', type=int, default=1, help='Worker threads for sweeps')
        parser.add_argument('--check', action='append', default=[], metavar='NAME',
                            help='Run only this diagnostic (repeatable)')
        parser.add_argument('--no-check', action='append', default=[], metavar='NAME', dest='no_check',
                            help='Skip this diagnostic (repeatable)')

    def load(self, options):
        unknown = [name for name in options['check'] + options['no_check'] if name not in CHECK_NAMES]
        if unknown:
            raise CommandError(f"unknown diagnostics {unknown}; choose from {list(CHECK_NAMES)}",
                               returncode=EXIT_CONFIG)
        if options['jobs'] < 1:
            raise CommandError("--jobs must be at least 1", returncode=EXIT_CONFIG)
        try:
            return load_config(options['config'])
        except ConfigError as exc:
            for error in exc.errors:
                self.stderr.write(self.style.ERROR(error))
            raise CommandError(f"{len(exc.errors)} config problem(s)", returncode=EXIT_CONFIG) from exc

    def execute_command(self, config, options, record):
        """Run the command body; returns (passed, message)."""
        raise NotImplementedError

    def handle(self, *args, **options):
        config = self.load(options)
        directory = config.output_path(options['out'])
        record = start_record(config, self.command_name, directory)
        try:
            passed, message = self.execute_command(config, options, record)
        except ConfigError as exc:
            finish_record(record, 'ERROR', str(exc))
            for error in exc.errors:
                self.stderr.write(self.style.ERROR(error))
            raise CommandError(f"{len(exc.errors)} config problem(s)", returncode=EXIT_CONFIG) from exc
        except OSError as exc:
            # missing trajectory directory or unwritable output
            finish_record(record, 'ERROR', str(exc))
            raise CommandError(str(exc), returncode=EXIT_CONFIG) from exc
        except GrowthLabError as exc:
            logger.error(f"{self.command_name} for {config.scenario} failed: {exc}")
            finish_record(record, 'ERROR', str(exc))
            raise CommandError(str(exc), returncode=EXIT_CHECK_FAILED) from exc
        finish_record(record, 'PASSED' if passed else 'FAILED', message)
        if not passed:
            self.stdout.write(self.style.ERROR(message))
            raise CommandError(message, returncode=EXIT_CHECK_FAILED)
        self.stdout.write(self.style.SUCCESS(message))
