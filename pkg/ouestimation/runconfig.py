"""
Run configuration: defaults, a Python configuration file, and overrides.

A configuration file is a Python module (see config_template.py) defining
any of the dictionaries OU, CODING, SOLVER, SIMULATION, SWEEP and the
strings SCHEME and OUTPUT_DIR. Values are merged in this order:

    defaults < configuration file < command-line overrides < environment

where the environment variable OUESTIMATION_OUTPUT_DIR only sets OUTPUT_DIR.
Everything is validated before any computation; invalid fields raise
ConfigError with the dotted path of the field (e.g. 'CODING.epsilon').
"""

import os
import copy
import importlib.util
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple
import h5py
import numpy as np
from ouestimation.penalty import OUParams
from ouestimation.channel import CodingConfig
from ouestimation.simulator import SimConfig
from ouestimation.experiments import SweepSpec
from ouestimation.utils import ConfigError, SCHEME_LABELS
from ouestimation import utils

OUTPUT_DIR_ENV = 'OUESTIMATION_OUTPUT_DIR'
CONFIG_BASENAME = 'config.py'

DEFAULTS = {
    'OU': {'theta': 0.5, 'sigma': 1.0},
    'CODING': {'ell': 2, 'n': 4, 't_b': 0.05, 'beta': 0.15, 'epsilon': 0.1},
    'SCHEME': 'IIR',
    'SOLVER': {'tol': 1e-9, 'tail_tol': 1e-12, 'method': 'auto', 'pipelined': True},
    'SIMULATION': {'num_epochs': 100_000, 'seed': 0, 'warmup_epochs': None,
                   'batches': 100, 'keep_trace': False, 'replications': 1},
    'SWEEP': {'thetas': [0.5], 'epsilons': [0.1, 0.4], 'ell_min': 1, 'ell_max': 8,
              'n_extra': 24, 't_b': 0.05, 'betas': [0.15], 'schemes': ['IIR', 'FR'],
              'n_values': None, 'min_redundancy': 0, 'workers': None},
    'OUTPUT_DIR': '/tmp/ouestimation/',
}
SECTIONS = [name for name, value in DEFAULTS.items() if isinstance(value, dict)]
SOLVER_METHODS = ('auto', 'closed_form', 'numeric')


def default_config_path() -> str:
    """config.py one directory above the package (may not exist)."""
    package_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(os.path.split(package_dir)[0], CONFIG_BASENAME)


@dataclass(frozen=True)
class SolverSettings:
    tol: float
    tail_tol: float
    method: str
    pipelined: bool


@dataclass(frozen=True)
class RunConfig:
    """
    Validated settings of a run.

    Attributes:
        ou: OU process parameters.
        coding: Coding configuration of single-point commands.
        scheme: 'IIR' or 'FR'.
        solver: Solver tolerances and options.
        simulation: Simulation settings (scheme taken from `scheme`).
        replications: Independent simulation runs to pool.
        sweeps: One sweep spec per theta of the SWEEP section.
        workers: Worker processes for sweeps (None uses all cores).
        output_dir: Directory for result files.
        values: The merged raw values (for display and saving).
    """
    ou: OUParams
    coding: CodingConfig
    scheme: str
    solver: SolverSettings
    simulation: SimConfig
    replications: int
    sweeps: Tuple[SweepSpec, ...]
    workers: Optional[int]
    output_dir: str
    values: Mapping[str, Any]

    def append_to_file(self, h5file: h5py.File) -> h5py.Group:
        """Save every configuration section under '/config'."""
        config_group = h5file.create_group('/config')
        for section in SECTIONS:
            utils.append_dict_to_hdf5(config_group, section, dict(self.values[section]))
        config_group.attrs['SCHEME'] = self.scheme
        config_group.attrs['OUTPUT_DIR'] = self.output_dir
        return config_group


def _load_module(path: str):
    if not os.path.isfile(path):
        raise ConfigError('--config', f'file does not exist: {path}')
    spec = importlib.util.spec_from_file_location('ouestimation_runconfig', path)
    module = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(module)
    except Exception as exc:
        raise ConfigError(os.path.basename(path), f'cannot be loaded ({type(exc).__name__}: {exc})')
    return module


def _merge(values: Dict[str, Any], name: str, new_value: Any) -> None:
    if name not in DEFAULTS:
        raise ConfigError(name, 'unknown setting')
    if name in SECTIONS:
        if not isinstance(new_value, Mapping):
            raise ConfigError(name, f'must be a dictionary, got {type(new_value).__name__}')
        for key, val in new_value.items():
            if key not in DEFAULTS[name]:
                raise ConfigError(f'{name}.{key}', 'unknown field')
            values[name][key] = val
    else:
        values[name] = new_value


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


def _is_integer(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _number(values, path, positive=False, nonneg=False, low=None, high=None) -> float:
    section, key = path.split('.')
    value = values[section][key]
    if not _is_number(value) or not np.isfinite(value):
        raise ConfigError(path, f'must be a finite number, got {value!r}')
    if positive and not value > 0:
        raise ConfigError(path, f'must be positive, got {value}')
    if nonneg and not value >= 0:
        raise ConfigError(path, f'must be non-negative, got {value}')
    if low is not None and not low < value < high:
        raise ConfigError(path, f'must be in ({low}, {high}), got {value}')
    return float(value)


def _integer(values, path, minimum=None, optional=False) -> Optional[int]:
    section, key = path.split('.')
    value = values[section][key]
    if optional and value is None:
        return None
    if not _is_integer(value):
        raise ConfigError(path, f'must be an integer, got {value!r}')
    if minimum is not None and value < minimum:
        raise ConfigError(path, f'must be at least {minimum}, got {value}')
    return int(value)


def _boolean(values, path) -> bool:
    section, key = path.split('.')
    value = values[section][key]
    if not isinstance(value, bool):
        raise ConfigError(path, f'must be True or False, got {value!r}')
    return value


def _number_list(values, path, check) -> List[float]:
    section, key = path.split('.')
    items = values[section][key]
    if np.isscalar(items):
        items = [items]
    items = list(items)
    if not items:
        raise ConfigError(path, 'must not be empty')
    for ind, item in enumerate(items):
        if not _is_number(item) or not check(item):
            raise ConfigError(f'{path}[{ind}]', f'invalid value {item!r}')
    return [float(item) for item in items]


def _scheme(value, path) -> str:
    if not isinstance(value, str) or value.upper() not in SCHEME_LABELS:
        raise ConfigError(path, f'must be one of {list(SCHEME_LABELS)}, got {value!r}')
    return value.upper()


def _validate(values: Dict[str, Any]) -> RunConfig:
    ou = OUParams(theta=_number(values, 'OU.theta', positive=True),
                  sigma=_number(values, 'OU.sigma', positive=True))

    ell = _integer(values, 'CODING.ell', minimum=1)
    n = _integer(values, 'CODING.n', minimum=ell)
    coding = CodingConfig(ell=ell, n=n,
                          t_b=_number(values, 'CODING.t_b', positive=True),
                          beta=_number(values, 'CODING.beta', nonneg=True),
                          epsilon=_number(values, 'CODING.epsilon', low=0.0, high=0.5))
    scheme = _scheme(values['SCHEME'], 'SCHEME')

    method = values['SOLVER']['method']
    if method not in SOLVER_METHODS:
        raise ConfigError('SOLVER.method', f'must be one of {SOLVER_METHODS}, got {method!r}')
    solver = SolverSettings(tol=_number(values, 'SOLVER.tol', positive=True),
                            tail_tol=_number(values, 'SOLVER.tail_tol', low=0.0, high=1.0),
                            method=method,
                            pipelined=_boolean(values, 'SOLVER.pipelined'))

    simulation = SimConfig(num_epochs=_integer(values, 'SIMULATION.num_epochs', minimum=1),
                           seed=_integer(values, 'SIMULATION.seed', minimum=0),
                           scheme=scheme,
                           warmup_epochs=_integer(values, 'SIMULATION.warmup_epochs',
                                                  minimum=0, optional=True),
                           batches=_integer(values, 'SIMULATION.batches', minimum=1),
                           keep_trace=_boolean(values, 'SIMULATION.keep_trace'))
    replications = _integer(values, 'SIMULATION.replications', minimum=1)

    thetas = _number_list(values, 'SWEEP.thetas', lambda val: val > 0)
    epsilons = _number_list(values, 'SWEEP.epsilons', lambda val: 0 < val < 0.5)
    betas = _number_list(values, 'SWEEP.betas', lambda val: val >= 0)
    ell_min = _integer(values, 'SWEEP.ell_min', minimum=1)
    ell_max = _integer(values, 'SWEEP.ell_max', minimum=ell_min)
    schemes = values['SWEEP']['schemes']
    if isinstance(schemes, str) or not schemes:
        raise ConfigError('SWEEP.schemes', f'must be a non-empty list, got {schemes!r}')
    schemes = tuple(_scheme(item, f'SWEEP.schemes[{ind}]') for ind, item in enumerate(schemes))
    n_extra = _integer(values, 'SWEEP.n_extra', minimum=0)
    min_redundancy = _integer(values, 'SWEEP.min_redundancy', minimum=0)
    if min_redundancy > n_extra:
        raise ConfigError('SWEEP.min_redundancy', f'must not exceed n_extra, got {min_redundancy}')
    n_values = values['SWEEP']['n_values']
    if n_values is not None:
        if not all(_is_integer(item) and item >= 1 for item in n_values) or not any(
                item >= ell_min + min_redundancy for item in n_values):
            raise ConfigError('SWEEP.n_values', f'must be integers with at least one >= '
                              f'ell_min + min_redundancy, got {n_values!r}')
        n_values = tuple(int(item) for item in n_values)
    sweeps = tuple(SweepSpec(ou=OUParams(theta=theta, sigma=ou.sigma), epsilons=tuple(epsilons),
                             ell_min=ell_min, ell_max=ell_max,
                             n_extra=n_extra, min_redundancy=min_redundancy,
                             t_b=_number(values, 'SWEEP.t_b', positive=True),
                             betas=tuple(betas), schemes=schemes, n_values=n_values,
                             pipelined=solver.pipelined)
                   for theta in thetas)
    workers = _integer(values, 'SWEEP.workers', minimum=1, optional=True)

    output_dir = values['OUTPUT_DIR']
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError('OUTPUT_DIR', f'must be a non-empty string, got {output_dir!r}')
    return RunConfig(ou=ou, coding=coding, scheme=scheme, solver=solver, simulation=simulation,
                     replications=replications, sweeps=sweeps, workers=workers,
                     output_dir=output_dir, values=values)


def load_run_config(path: Optional[str] = None,
                    overrides: Optional[Mapping[str, Any]] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Merge defaults, an optional configuration file and overrides, and validate.

    Args:
        path: Python configuration file (None uses only the defaults).
        overrides: Values keyed by dotted path ('CODING.ell') or top-level
            name ('SCHEME'); None values are ignored.
        environ: Environment mapping (defaults to os.environ).

    Returns:
        RunConfig.

    Raises:
        ConfigError: For unknown or invalid fields, or a path that does not exist.
    """
    values = copy.deepcopy(DEFAULTS)
    if path is not None:
        module = _load_module(path)
        for name in DEFAULTS:
            if hasattr(module, name):
                _merge(values, name, getattr(module, name))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        name, _, key = dotted.partition('.')
        _merge(values, name, {key: value} if key else value)
    environ = os.environ if environ is None else environ
    if environ.get(OUTPUT_DIR_ENV):
        values['OUTPUT_DIR'] = environ[OUTPUT_DIR_ENV]
    return _validate(values)


def describe(config: RunConfig) -> str:
    """Resolved values, one 'SECTION.key = value' line each."""
    lines = []
    for name, value in config.values.items():
        if isinstance(value, dict):
            lines.extend(f'{name}.{key} = {val!r}' for key, val in value.items())
        else:
            lines.append(f'{name} = {value!r}')
    return '\n'.join(lines)
