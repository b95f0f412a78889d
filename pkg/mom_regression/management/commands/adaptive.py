from django.core.management.base import BaseCommand

from mom_regression.adaptive import adaptive_predict
from mom_regression.cli import (
    FAMILY_CHOICES, add_model_arguments, command_errors, configure_verbosity, csv_text, emit, json_text,
    model_from_options, parse_point, usage_error,
)
from mom_regression.core import derive_seed, read_dataset_csv, read_points_csv


class Command(BaseCommand):
    help = 'Confidence-level-free estimate: midpoint of the first nonempty suffix intersection of intervals.'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Training CSV with header x1,...,xd,y')
        parser.add_argument('--query', action='append', default=[], help='Comma-separated query coordinates')
        parser.add_argument('--queries', help='CSV of query points with header x1,...,xd')
        parser.add_argument('--estimator', choices=FAMILY_CHOICES, default='knn')
        parser.add_argument('--without-replacement', action='store_true')
        parser.add_argument('--seed', type=int, default=0, help='Tie-breaking seed (default 0)')
        parser.add_argument('--out', help='Output CSV (default: standard output)')
        parser.add_argument('--json', help='Also write every interval per query as JSON')
        add_model_arguments(parser)

    def handle(self, *args, **options):
        configure_verbosity(options['verbosity'])
        with command_errors():
            dataset = read_dataset_csv(options['data'])
            model = model_from_options(options, dataset.d)
            queries = [parse_point(q, dataset.d) for q in options['query']]
            if options['queries']:
                queries.extend(read_points_csv(options['queries']))
            if not queries:
                raise usage_error('give at least one --query or a --queries file')

            rows, details = [], []
            for index, x in enumerate(queries):
                if x.size != dataset.d:
                    raise usage_error(f"query {index} has dimension {x.size}, the data has {dataset.d}")
                result = adaptive_predict(dataset, x, options['estimator'], model, derive_seed(options['seed'], index),
                                          with_replacement=not options['without_replacement'])
                row = {f"x{j + 1}": float(v) for j, v in enumerate(x)}
                row.update({'y': result.estimate, 'm_hat': result.m_hat, 'lower': result.lower, 'upper': result.upper})
                rows.append(row)
                details.append({
                    'query': [float(v) for v in x],
                    'estimate': result.estimate,
                    'm_hat': result.m_hat,
                    'skipped': list(result.skipped),
                    'intervals': [{'m': i.m, 'center': i.center, 'half_width': i.half_width}
                                  for i in result.intervals],
                })

        columns = [f"x{j + 1}" for j in range(dataset.d)] + ['y', 'm_hat', 'lower', 'upper']
        emit(self, csv_text(columns, rows), options['out'])
        if options['json']:
            emit(self, json_text({'estimator': options['estimator'], 'n': dataset.n, 'queries': details}),
                 options['json'])
