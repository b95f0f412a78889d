"""Scenario files: TOML documents whose keys mirror the ScenarioSpec fields.

Example::

    scenario_id = "headline"
    d = 1
    n = 4096
    target = "linear"
    trials = 20000
    seed = 7

    [noise]
    family = "gaussian"

    [model]
    rho = 1.0
    sigma = 0.5

    [estimator]
    family = "knn"
    log_delta = -3
"""
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Mapping

from .core import InvalidArgumentError
from .harness import (
    AdversarialRegression, ContaminationSpec, EstimatorSpec, NoiseSpec, QuerySpec, ScenarioSpec, rho_unit_cube,
)
from .mom import ModelClass

ESTIMATOR_KEYS = {'family', 'delta', 'log_delta', 'm', 'parameter', 'k', 'h', 'K', 'with_replacement',
                  'adaptive', 'robust', 'clamp', 'label', 'radius'}
TOP_LEVEL_KEYS = {'scenario_id', 'd', 'n', 'target', 'trials', 'seed', 'threshold', 'support_side',
                  'noise', 'model', 'estimator', 'query', 'contamination'}


def _check_keys(section: str, data: Mapping, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise InvalidArgumentError(f"[{section}] unknown key(s): {', '.join(sorted(unknown))}")


def _estimator_from_mapping(data: Mapping[str, Any]) -> EstimatorSpec:
    _check_keys('estimator', data, ESTIMATOR_KEYS)
    data = dict(data)
    if 'log_delta' in data:
        if 'delta' in data:
            raise InvalidArgumentError("[estimator] give either delta or log_delta")
        data['delta'] = math.exp(data.pop('log_delta'))
    aliases = [key for key in ('k', 'h', 'K') if key in data]
    if aliases:
        if len(aliases) > 1 or 'parameter' in data:
            raise InvalidArgumentError("[estimator] give a single tuning parameter")
        data['parameter'] = data.pop(aliases[0])
    return EstimatorSpec(**data)


def scenario_from_mapping(data: Mapping[str, Any]) -> ScenarioSpec:
    _check_keys('scenario', data, TOP_LEVEL_KEYS)
    try:
        d = int(data['d'])
        n = int(data['n'])
        model_data = dict(data['model'])
        estimator_data = data['estimator']
    except KeyError as exc:
        raise InvalidArgumentError(f"scenario is missing {exc.args[0]!r}")
    side = float(data.get('support_side', 1.0))
    _check_keys('model', model_data, {'rho', 'sigma', 'diameter', 'alpha'})
    rho = model_data.get('rho', 'unit_cube')
    if rho == 'unit_cube':
        rho = rho_unit_cube(d) / side ** d
    model = ModelClass(
        rho=float(rho),
        sigma=float(model_data['sigma']),
        d=d,
        diameter=float(model_data.get('diameter', side * math.sqrt(d))),
        alpha=model_data.get('alpha'),
    )
    noise_data = dict(data.get('noise', {}))
    _check_keys('noise', noise_data, {'family', 'sigma', 'df', 'tail_index'})
    noise_data.setdefault('sigma', model.sigma)
    if isinstance(estimator_data, Mapping):
        estimator_data = [estimator_data]
    query_data = dict(data.get('query', {}))
    _check_keys('query', query_data, {'policy', 'point'})
    contamination = None
    if 'contamination' in data:
        _check_keys('contamination', data['contamination'],
                    {'n_outliers', 'placement', 'magnitude', 'location', 'blocks'})
        contamination = ContaminationSpec(**data['contamination'])
    return ScenarioSpec(
        scenario_id=str(data.get('scenario_id', 'scenario')),
        d=d,
        n=n,
        model=model,
        estimators=tuple(_estimator_from_mapping(e) for e in estimator_data),
        noise=NoiseSpec(**noise_data),
        target=data.get('target', 'linear'),
        trials=int(data.get('trials', 1000)),
        seed=int(data.get('seed', 0)),
        query=QuerySpec(**query_data),
        contamination=contamination,
        threshold=data.get('threshold'),
        support_side=side,
    )


def load_scenario(path) -> ScenarioSpec:
    try:
        with open(path, 'rb') as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read scenario {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from exc
    return scenario_from_mapping(data)


def _target_name(target) -> str:
    if isinstance(target, str):
        return target
    if isinstance(target, AdversarialRegression):
        return f"adversarial(h={target.h!r}, cells={target.cells})"
    return getattr(target, '__name__', type(target).__name__)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    """JSON-ready echo of the full configuration."""
    model = spec.model
    return {
        'scenario_id': spec.scenario_id,
        'd': spec.d,
        'n': spec.n,
        'target': _target_name(spec.target),
        'trials': spec.trials,
        'seed': spec.seed,
        'threshold': spec.threshold,
        'support_side': spec.support_side,
        'model': {'rho': model.rho, 'sigma': model.sigma, 'diameter': model.diameter, 'alpha': model.alpha},
        'noise': {'family': spec.noise.family, 'sigma': spec.noise.sigma, 'df': spec.noise.df,
                  'tail_index': spec.noise.tail_index},
        'estimators': [
            {'family': e.family, 'delta': e.delta, 'm': e.m, 'parameter': e.parameter,
             'with_replacement': e.with_replacement, 'adaptive': e.adaptive, 'robust': e.robust,
             'clamp': e.clamp, 'label': e.name, 'radius': e.radius}
            for e in spec.estimators
        ],
        'query': {'policy': spec.query.policy, 'point': list(spec.query.point) if spec.query.point else None},
        'contamination': None if spec.contamination is None else {
            'n_outliers': spec.contamination.n_outliers,
            'placement': spec.contamination.placement,
            'magnitude': spec.contamination.magnitude,
            'location': list(spec.contamination.location) if spec.contamination.location else None,
            'blocks': spec.contamination.blocks,
        },
    }
