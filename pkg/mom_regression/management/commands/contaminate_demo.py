import logging
import math
from dataclasses import replace

from django.core.management.base import BaseCommand

from mom_regression.cli import (
    RESULT_COLUMNS, assert_certified, command_errors, configure_verbosity, csv_text, emit, json_text,
    record_results, result_rows,
)
from mom_regression.harness import (
    EstimatorSpec, NoiseSpec, ScenarioSpec, contamination_experiment, default_jobs, rho_unit_cube,
)
from mom_regression.mom import ModelClass
from mom_regression.scenarios import load_scenario, scenario_to_dict

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Median-of-means versus the pooled k-NN estimate when outliers sit at the query point.'

    def add_arguments(self, parser):
        parser.add_argument('--scenario', help='Base scenario TOML (defaults describe d=1, n=4096, sigma=0.5)')
        parser.add_argument('--d', type=int, default=1)
        parser.add_argument('--n', type=int, default=4096)
        parser.add_argument('--sigma', type=float, default=0.5)
        parser.add_argument('--rho', type=float, help='Small-ball constant (default: uniform law on the cube)')
        parser.add_argument('--outliers', type=int, default=1, help='Number of corrupted samples')
        parser.add_argument('--delta', type=float, default=math.exp(-4))
        parser.add_argument('--magnitude', type=float, help='Outlier response (default 1e6 sigma)')
        parser.add_argument('--placement', choices=['block', 'uniform'], default='block')
        parser.add_argument('--trials', type=int, default=10_000)
        parser.add_argument('--seed', type=int, required=True)
        parser.add_argument('--jobs', type=int)
        parser.add_argument('--out', help='Results CSV (default: standard output)')
        parser.add_argument('--json', help='Results JSON with the configuration echo')
        parser.add_argument('--no-timing', action='store_true')
        parser.add_argument('--record', action='store_true')
        parser.add_argument('--assert', dest='assert_bound', action='store_true',
                            help='Exit with status 4 unless the robust estimator is certified at delta')

    def handle(self, *args, **options):
        configure_verbosity(options['verbosity'])
        with command_errors():
            if options['scenario']:
                base = replace(load_scenario(options['scenario']), seed=options['seed'], trials=options['trials'])
            else:
                d = options['d']
                rho = options['rho'] if options['rho'] is not None else rho_unit_cube(d)
                base = ScenarioSpec(
                    scenario_id=f"contamination-d{d}-n{options['n']}",
                    d=d,
                    n=options['n'],
                    model=ModelClass(rho=rho, sigma=options['sigma'], d=d, diameter=math.sqrt(d)),
                    estimators=(EstimatorSpec('knn', delta=options['delta']),),
                    noise=NoiseSpec('gaussian', options['sigma']),
                    trials=options['trials'],
                    seed=options['seed'],
                )
            results = contamination_experiment(
                base, options['outliers'], options['delta'], magnitude=options['magnitude'],
                placement=options['placement'], jobs=options['jobs'] or default_jobs(),
                timing=False if options['no_timing'] else None,
            )

        robust, pooled = results
        logger.info("robust MoM exceedance %.6g (cp_upper %.6g); pooled k-NN exceedance %.6g",
                    robust.tail.point, robust.tail.upper, pooled.tail.point)
        rows = result_rows(results)
        emit(self, csv_text(RESULT_COLUMNS, rows), options['out'])
        config = scenario_to_dict(base)
        config['outliers'] = options['outliers']
        config['placement'] = options['placement']
        if options['json']:
            emit(self, json_text({'config': config, 'results': rows}), options['json'])
        if options['record']:
            record_results('contaminate_demo', results, config)
        if options['assert_bound']:
            assert_certified([robust])
