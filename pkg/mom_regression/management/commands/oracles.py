from django.core.management.base import BaseCommand, CommandError

from mom_regression.cli import EXIT_ASSERTION, command_errors, configure_verbosity, emit, json_text
from mom_regression.oracles import run_oracle_suite


class Command(BaseCommand):
    help = 'Run the exact numerical oracle suite (binomial tails, bagged weights, g quadrature, MNN).'

    def add_arguments(self, parser):
        parser.add_argument('--monte-carlo', action='store_true',
                            help='Also run the nearest-neighbour distance Monte Carlo check (slow)')
        parser.add_argument('--mc-trials', type=int, default=50_000)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--json', help='Write the report as JSON')

    def handle(self, *args, **options):
        configure_verbosity(options['verbosity'])
        with command_errors():
            results = run_oracle_suite(options['monte_carlo'], options['seed'], options['mc_trials'])

        for result in results:
            status = self.style.SUCCESS('PASS') if result.passed else self.style.ERROR('FAIL')
            self.stdout.write(f"{status} {result.name:<18} max ratio {result.max_ratio:.6g} "
                              f"over {result.cases} case(s)  {result.detail}")
        if options['json']:
            emit(self, json_text({'oracles': [r.as_dict() for r in results]}), options['json'])

        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CommandError(f"oracle failure: {', '.join(failed)}", returncode=EXIT_ASSERTION)
