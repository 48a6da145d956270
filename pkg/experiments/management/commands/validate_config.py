from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ConfigError
from experiments.config import load_config

EXIT_CONFIG = 2


class Command(BaseCommand):
    help = 'Validates an experiment config without running anything (also documented as validate-config)'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment config (YAML)')

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
        except ConfigError as exc:
            for error in exc.errors:
                self.stderr.write(self.style.ERROR(error))
            raise CommandError(f"{len(exc.errors)} config problem(s)", returncode=EXIT_CONFIG) from exc
        self.stdout.write(self.style.SUCCESS(f"{config.scenario}: config is valid (digest {config.digest()[:12]})"))
