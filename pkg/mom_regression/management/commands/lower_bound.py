import logging

from django.core.management.base import BaseCommand, CommandError

from mom_regression.cli import (
    EXIT_ASSERTION, FAMILY_CHOICES, RESULT_COLUMNS, command_errors, configure_verbosity, csv_text, emit, json_text,
    record_results, result_rows,
)
from mom_regression.harness import EstimatorSpec, default_jobs, lower_bound_experiment

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Exceedance probability of an estimator on the worst adversarial instance found.'

    def add_arguments(self, parser):
        parser.add_argument('--d', type=int, default=1, help='Dimension (default 1)')
        parser.add_argument('--sigma', type=float, required=True, help='Gaussian noise standard deviation')
        parser.add_argument('--n', type=int, required=True, help='Sample size')
        parser.add_argument('--delta', type=float, required=True, help='Confidence level, at most 2^-(d+3)')
        parser.add_argument('--estimator', choices=FAMILY_CHOICES, default='knn')
        parser.add_argument('--trials', type=int, default=10_000)
        parser.add_argument('--pilot-trials', type=int, help='Trials per sign candidate in the search')
        parser.add_argument('--seed', type=int, required=True)
        parser.add_argument('--jobs', type=int)
        parser.add_argument('--out', help='Results CSV (default: standard output)')
        parser.add_argument('--json', help='Report JSON')
        parser.add_argument('--no-timing', action='store_true')
        parser.add_argument('--record', action='store_true')
        parser.add_argument('--assert', dest='assert_bound', action='store_true',
                            help='Exit with status 4 unless the exceedance frequency reaches delta')

    def handle(self, *args, **options):
        configure_verbosity(options['verbosity'])
        with command_errors():
            estimator = EstimatorSpec(options['estimator'], delta=options['delta'], clamp=True,
                                      label=f"mom-{options['estimator']}")
            report = lower_bound_experiment(
                d=options['d'], sigma=options['sigma'], n=options['n'], delta=options['delta'],
                trials=options['trials'], seed=options['seed'], estimator=estimator,
                pilot_trials=options['pilot_trials'], jobs=options['jobs'] or default_jobs(),
                timing=False if options['no_timing'] else None,
            )

        logger.info("h=%.6g, %d cell(s), threshold %.6g, Gaussian floor %.6g, exceedance %.6g vs delta %.6g",
                    report.h, report.cells, report.threshold, report.bayes_floor, report.tail.point, report.delta)
        rows = result_rows([report.result])
        emit(self, csv_text(RESULT_COLUMNS, rows), options['out'])
        config = {
            'd': report.d, 'sigma': report.sigma, 'n': report.n, 'delta': report.delta,
            'estimator': options['estimator'], 'trials': options['trials'], 'seed': options['seed'],
            'h': report.h, 'cells': report.cells, 'threshold': report.threshold,
            'bayes_floor': report.bayes_floor, 'signs': list(report.signs),
        }
        if options['json']:
            emit(self, json_text({'config': config, 'results': rows}), options['json'])
        if options['record']:
            record_results('lower_bound', [report.result], config)
        if options['assert_bound'] and not report.exceeds_delta:
            raise CommandError(f"exceedance frequency {report.tail.point:.4g} is below delta={report.delta:.4g}",
                               returncode=EXIT_ASSERTION)
