import logging

from django.core.management.base import BaseCommand

from mom_regression.adaptive import adaptive_predict
from mom_regression.cli import (
    add_estimator_arguments, command_errors, configure_verbosity, csv_text, emit, estimator_from_options,
    model_from_options, parse_point, usage_error,
)
from mom_regression.core import derive_seed, read_dataset_csv, read_points_csv
from mom_regression.mom import mom_predict

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Predict r(x) at one or more query points with a median-of-means estimator.'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Training CSV with header x1,...,xd,y')
        parser.add_argument('--query', action='append', default=[],
                            help='Comma-separated query coordinates (repeatable)')
        parser.add_argument('--queries', help='CSV of query points with header x1,...,xd')
        parser.add_argument('--seed', type=int, default=0, help='Tie-breaking seed (default 0)')
        parser.add_argument('--adaptive', action='store_true',
                            help='Use the confidence-level-free estimator (needs --sigma and --rho)')
        parser.add_argument('--out', help='Output CSV (default: standard output)')
        add_estimator_arguments(parser)

    def handle(self, *args, **options):
        configure_verbosity(options['verbosity'])
        with command_errors():
            dataset = read_dataset_csv(options['data'])
            queries = [parse_point(q, dataset.d) for q in options['query']]
            if options['queries']:
                points = read_points_csv(options['queries'])
                if points.shape[1] != dataset.d:
                    raise usage_error(f"query file has dimension {points.shape[1]}, the data has {dataset.d}")
                queries.extend(points)
            if not queries:
                raise usage_error('give at least one --query or a --queries file')

            rows = []
            if options['adaptive']:
                model = model_from_options(options, dataset.d)
                for index, x in enumerate(queries):
                    result = adaptive_predict(dataset, x, options['estimator'], model,
                                              derive_seed(options['seed'], index),
                                              with_replacement=not options['without_replacement'])
                    rows.append(self._row(x, result.estimate, result.m_hat, (result.upper - result.lower) / 2))
            else:
                config, radius, _ = estimator_from_options(options, dataset.n, dataset.d)
                logger.info("m=%d blocks of %d points, base %s", config.m, dataset.n // config.m, config.base)
                for index, x in enumerate(queries):
                    estimate = mom_predict(dataset, x, config, derive_seed(options['seed'], index))
                    rows.append(self._row(x, estimate, config.m, radius))

        columns = [f"x{j + 1}" for j in range(dataset.d)] + ['y', 'm', 'radius']
        emit(self, csv_text(columns, rows), options['out'])

    @staticmethod
    def _row(x, estimate, m, radius):
        row = {f"x{j + 1}": float(v) for j, v in enumerate(x)}
        row.update({'y': float(estimate), 'm': int(m), 'radius': radius})
        return row
