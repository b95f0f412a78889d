import logging
from dataclasses import replace

from django.core.management.base import BaseCommand

from mom_regression.cli import (
    RESULT_COLUMNS, assert_certified, command_errors, configure_verbosity, csv_text, emit, gnuplot_script,
    json_text, record_results, result_rows,
)
from mom_regression.harness import cp_level, default_jobs, tail_report
from mom_regression.scenarios import load_scenario, scenario_to_dict

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Monte Carlo tail probability of a scenario, with exact binomial confidence bounds.'

    def add_arguments(self, parser):
        parser.add_argument('--scenario', required=True, help='Scenario TOML file')
        parser.add_argument('--seed', type=int, required=True, help='Master seed for all trials')
        parser.add_argument('--trials', type=int, help='Override the number of trials')
        parser.add_argument('--jobs', type=int, help='Worker processes (default MOM_DEFAULT_JOBS)')
        parser.add_argument('--out', help='Results CSV (default: standard output)')
        parser.add_argument('--json', help='Results JSON with the full configuration echo')
        parser.add_argument('--assert', dest='assert_bound', action='store_true',
                            help='Exit with status 4 unless cp_upper <= delta for every estimator')
        parser.add_argument('--no-timing', action='store_true', help='Write wall_time_ms = 0')
        parser.add_argument('--gnuplot', help='Write a static gnuplot script for the results CSV')
        parser.add_argument('--record', action='store_true', help='Store the results in the database')

    def handle(self, *args, **options):
        configure_verbosity(options['verbosity'])
        with command_errors():
            spec = load_scenario(options['scenario'])
            changes = {'seed': options['seed']}
            if options['trials'] is not None:
                changes['trials'] = options['trials']
            spec = replace(spec, **changes)
            jobs = options['jobs'] or default_jobs()
            logger.info("scenario %s: %d trials, %d estimator(s), %d job(s)",
                        spec.scenario_id, spec.trials, len(spec.estimators), jobs)
            results = tail_report(spec, jobs=jobs, timing=False if options['no_timing'] else None)

        rows = result_rows(results)
        emit(self, csv_text(RESULT_COLUMNS, rows), options['out'])
        config = scenario_to_dict(spec)
        if options['json']:
            emit(self, json_text({'config': config, 'cp_level': cp_level(), 'results': rows}), options['json'])
        if options['gnuplot']:
            emit(self, gnuplot_script(options['out'] or 'results.csv', spec.scenario_id), options['gnuplot'])
        if options['record']:
            saved = record_results('tail', results, config)
            logger.info("recorded %d run(s)", saved)
        if options['assert_bound']:
            assert_certified(results)
