"""Shared plumbing for the management commands: flags, exit codes and output writers."""
import contextlib
import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
from django.core.management.base import CommandError

from .base import EstimatorFamily, make_kind
from .core import (
    ConfigurationError, ConsistencyError, InvalidArgumentError, MoMError, ResourceLimitError, format_float,
)
from .mom import ROBUST_INFLATION, ModelClass, MoMConfig, bound_radius, select_base, select_m, tuned_radius

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIGURATION = 3
EXIT_ASSERTION = 4

RESULT_COLUMNS = ('scenario_id', 'estimator', 'n', 'd', 'delta', 'threshold', 'exceedances', 'trials',
                  'cp_lower', 'cp_upper', 'wall_time_ms')

FAMILY_CHOICES = [f.value for f in EstimatorFamily if f is not EstimatorFamily.WEIGHTED]


def usage_error(message: str) -> CommandError:
    return CommandError(message, returncode=EXIT_USAGE)


@contextlib.contextmanager
def command_errors():
    """Translate library errors into CommandError with the exit-code contract."""
    try:
        yield
    except ConfigurationError as exc:
        raise CommandError(f"configuration error: {exc} [{exc.constraint}: lhs={exc.lhs!r}, rhs={exc.rhs!r}]",
                           returncode=EXIT_CONFIGURATION) from exc
    except ResourceLimitError as exc:
        raise CommandError(f"resource limit: {exc}", returncode=EXIT_CONFIGURATION) from exc
    except InvalidArgumentError as exc:
        raise CommandError(str(exc), returncode=EXIT_USAGE) from exc
    except ConsistencyError as exc:
        raise CommandError(f"consistency check failed: {exc}", returncode=EXIT_ASSERTION) from exc
    except MoMError as exc:
        raise CommandError(str(exc), returncode=EXIT_FAILURE) from exc


def configure_verbosity(verbosity: int) -> None:
    package = logging.getLogger('mom_regression')
    if verbosity >= 2:
        package.setLevel(logging.DEBUG)
    elif verbosity == 0:
        package.setLevel(logging.ERROR)


# ---------------------------------------------------------------------------
# Arguments
# ---------------------------------------------------------------------------

def add_model_arguments(parser) -> None:
    parser.add_argument('--sigma', type=float, help='Noise standard deviation bound sigma')
    parser.add_argument('--rho', type=float, help='Small-ball constant rho')
    parser.add_argument('--alpha', type=float, help='Doubling constant (mutual neighbours only)')
    parser.add_argument('--diameter', type=float, default=1.0, help='Support diameter D (default 1)')


def add_estimator_arguments(parser) -> None:
    parser.add_argument('--estimator', choices=FAMILY_CHOICES, default='knn')
    parser.add_argument('--k', type=int, help='Neighbours (knn, mnn) or subsample size (bagged)')
    parser.add_argument('--h', type=float, help='Kernel bandwidth')
    parser.add_argument('--K', type=int, help='Partition cells per axis')
    parser.add_argument('--m', type=int, help='Number of blocks')
    parser.add_argument('--without-replacement', action='store_true',
                        help='Bagged subsamples drawn without replacement')
    parser.add_argument('--auto', action='store_true',
                        help='Select m and the tuning parameter from --sigma, --rho and --delta')
    parser.add_argument('--delta', type=float, help='Confidence level delta')
    parser.add_argument('--robust', action='store_true', help='Report the contamination-robust radius')
    add_model_arguments(parser)


def model_from_options(options, d: int, required: bool = True) -> Optional[ModelClass]:
    sigma, rho = options.get('sigma'), options.get('rho')
    if sigma is None or rho is None:
        if required:
            raise usage_error('--sigma and --rho are required here')
        return None
    return ModelClass(rho=rho, sigma=sigma, d=d, diameter=options.get('diameter') or 1.0,
                      alpha=options.get('alpha'))


def _explicit_parameter(family: str, options):
    name = {'kernel': 'h', 'partition': 'K'}.get(family, 'k')
    value = options.get(name)
    if value is None:
        raise usage_error(f"--{name} is required for --estimator {family} (or pass --auto)")
    return value


def estimator_from_options(options, n: int, d: int):
    """(MoMConfig, confidence radius or None, ModelClass or None) from the estimator flags."""
    family = options.get('estimator') or 'knn'
    with_replacement = not options.get('without_replacement')
    robust = bool(options.get('robust'))
    if options.get('auto'):
        delta = options.get('delta')
        if delta is None:
            raise usage_error('--auto needs --delta')
        model = model_from_options(options, d)
        m = options.get('m') or select_m(delta)
        base = select_base(family, model, n, m, with_replacement=with_replacement)
        config = MoMConfig(m, base)
        config.validate(n)
        if options.get('m') is None:
            radius = bound_radius(family, model, n, delta, robust=robust).radius
        else:
            radius = _tuned(base, model, n, m, robust)
        return config, radius, model
    parameter = _explicit_parameter(family, options)
    m = options.get('m') or (select_m(options['delta']) if options.get('delta') else 1)
    config = MoMConfig(m, make_kind(family, parameter, with_replacement=with_replacement))
    config.validate(n)
    model = model_from_options(options, d, required=False)
    radius = _tuned(config.base, model, n, m, robust) if model is not None else None
    return config, radius, model


def _tuned(base, model, n, m, robust):
    try:
        radius = tuned_radius(base, model, n, m)
    except InvalidArgumentError as exc:
        logger.info("no radius reported: %s", exc)
        return None
    return radius * ROBUST_INFLATION if robust else radius


def parse_point(text: str, d: Optional[int] = None) -> np.ndarray:
    try:
        point = np.array([float(v) for v in text.split(',')])
    except ValueError:
        raise usage_error(f"query {text!r} is not a comma-separated list of numbers")
    if d is not None and point.size != d:
        raise usage_error(f"query {text!r} has {point.size} coordinates, the data has {d}")
    if not np.all(np.isfinite(point)):
        raise usage_error(f"query {text!r} has non-finite coordinates")
    return point


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def _json_ready(value):
    if isinstance(value, dict):
        return {key: _json_ready(v) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def json_text(document: dict) -> str:
    return json.dumps(_json_ready(document), sort_keys=True, indent=2) + '\n'


def emit(command, text: str, path: Optional[str] = None) -> None:
    """Write ``text`` to ``path`` or, for None and '-', to the command's stdout."""
    if path in (None, '-'):
        command.stdout.write(text, ending='')
        return
    Path(path).write_text(text)
    logger.info("wrote %s", path)


def gnuplot_script(csv_path: str, title: str = 'Exceedance frequencies') -> str:
    """Static gnuplot script: exceedance frequency with its exact interval against delta."""
    col = {name: RESULT_COLUMNS.index(name) + 1 for name in RESULT_COLUMNS}
    return '\n'.join([
        "set datafile separator ','",
        f"set title '{title}'",
        "set logscale y",
        "set xlabel 'estimator'",
        "set ylabel 'P(|error| >= threshold)'",
        "set key top left",
        f"plot '{csv_path}' every ::1 using 0:(${col['exceedances']}/${col['trials']}):"
        f"{col['cp_lower']}:{col['cp_upper']}:xticlabels({col['estimator']}) "
        "with yerrorbars title 'exceedances (exact interval)', \\",
        f"     '' every ::1 using 0:{col['delta']} with points pointtype 7 title 'delta'",
        '',
    ])


def result_rows(results) -> List[dict]:
    return [result.as_row() for result in results]


def record_results(command_name: str, results, config: dict) -> int:
    """Store result rows as ExperimentRun records; returns how many were saved."""
    from .models import ExperimentRun

    saved = 0
    for result in results:
        run = ExperimentRun(command=command_name, config=config, **result.as_row())
        run.full_clean()
        run.save()
        saved += 1
    return saved


def assert_certified(results) -> None:
    failing = [r for r in results if r.delta is not None and not r.tail.upper <= r.delta]
    if failing:
        names = ', '.join(f"{r.estimator} (cp_upper={r.tail.upper:.4g} > delta={r.delta:.4g})" for r in failing)
        raise CommandError(f"certification failed: {names}", returncode=EXIT_ASSERTION)
