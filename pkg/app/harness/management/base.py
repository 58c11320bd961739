from django.core.management.base import BaseCommand, CommandError

from transport.exceptions import TransportError

from ..exceptions import ScenarioParseException
from ..runner import run

CONFIG_ERROR = 2
NUMERICAL_ERROR = 3


class ScenarioCommand(BaseCommand):
    """Run one mode of a scenario file; ``mode = None`` takes it from the file."""
    mode = None

    def add_arguments(self, parser):
        parser.add_argument('--scenario', required=True, help='Path to the scenario file.')
        parser.add_argument('--out', required=True, help='Directory receiving the CSV files and manifest.')
        parser.add_argument('--threads', type=int, default=None,
                            help='Upper bound on worker threads (defaults to THREADS).')

    def handle(self, *args, **options):
        threads = options.get('threads')
        if threads is not None and threads < 1:
            raise CommandError('--threads must be at least 1', returncode=CONFIG_ERROR)
        try:
            result = run(options['scenario'], options['out'], mode=self.mode, threads=threads)
        except ScenarioParseException as err:
            raise CommandError(err.detail, returncode=CONFIG_ERROR)
        except OSError as err:
            raise CommandError(f'Cannot use scenario or output directory: {err}', returncode=CONFIG_ERROR)
        except TransportError as err:
            raise CommandError(f'Solver failed ({err.code}): {err.detail}', returncode=NUMERICAL_ERROR)

        for message in result.messages:
            self.stdout.write(message)
        if not result.passed:
            raise CommandError(f'{result.mode} failed, see {options["out"]}', returncode=NUMERICAL_ERROR)
        self.stdout.write(self.style.SUCCESS(f'{result.mode} finished, {len(result.files)} files in {options["out"]}'))
