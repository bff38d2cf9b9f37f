"""
Run-configuration schema, defaults and validation.

A configuration is one YAML (or JSON) mapping. Missing keys take the
values in :data:`DEFAULTS`; see ``docs/config.md`` for the field reference.
"""
import copy
import os

import jsonschema
import numpy as np
import yaml

from .config import ConfigError

__all__ = ['DEFAULTS', 'SCHEMA', 'TASKS', 'load_config', 'resolve_config']

TASKS = ('gate_protect', 'cool', 'heat', 'score_only', 'ddcompare', 'simulate')

DEFAULTS = {
    'task': 'score_only',
    'seed': 0,
    'dimension': 2,
    'out': 'out',
    'time': {'t': 10.0, 'knots': 100},
    'bath': {
        'kind': 'lorentzian',
        'center': 2.0,
        'width': 0.5,
        'weight': 1.0,
        'tail_weight': 0.3,
        'tail_width': 0.5,
        'channels': None,
        'coupling': 1e-2,
        'domega': None,
        'path': None,
    },
    'score': {'kind': 'linear_entropy', 'p': 0.25},
    'control': {
        'parametrization': 'euler',
        'omega0': None,
        'pin_end': False,
        'end': None,
        'initial': None,
        'modes': 4,
        'amplitude': 1.0,
    },
    'constraint': {'kind': 'modulation', 'E0': 100.0},
    'optimizer': {
        'step': None,
        'step_length': 0.3,
        'max_iters': 100,
        'grad_tol': 1e-10,
        'el_tol': 1e-2,
        'fd_step': 1e-6,
        'restarts': 1,
        'constraint_drift_tol': 1e-3,
    },
    'dd': {'n': [11, 19], 'axis': 1, 'channel': 3, 'omega_max': None, 'n_omega': 4001,
           'knots': 4000},
    'simulate': {'enabled': False, 'methods': ['dyson2', 'tcl2', 'nz2'], 'steps': None,
                 'memory_window': None},
    'sweep': {'parameter': None, 'values': [], 'jobs': 1},
}

_num = {'type': 'number'}
_pos = {'type': 'number', 'exclusiveMinimum': 0}
_nonneg = {'type': 'number', 'minimum': 0}
_null_or = lambda s: {'anyOf': [{'type': 'null'}, s]}  # noqa: E731

SCHEMA = {
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'task': {'enum': list(TASKS)},
        'seed': {'type': 'integer', 'minimum': 0, 'maximum': 2 ** 64 - 1},
        'dimension': {'type': 'integer', 'minimum': 2},
        'out': {'type': 'string'},
        'time': {
            'type': 'object', 'additionalProperties': False,
            'properties': {'t': _pos, 'knots': {'type': 'integer', 'minimum': 2}},
        },
        'bath': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'kind': {'enum': ['lorentzian', 'file', 'zero']},
                'center': _num, 'width': _pos, 'weight': _nonneg,
                'tail_weight': _nonneg, 'tail_width': _pos,
                'channels': _null_or({'type': 'array', 'items': _nonneg}),
                'coupling': _nonneg,
                'domega': _null_or(_pos),
                'path': _null_or({'type': 'string'}),
            },
        },
        'score': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'kind': {'enum': ['linear_entropy', 'purity', 'gate_error']},
                'p': {'type': 'number', 'minimum': 0, 'maximum': 0.5},
            },
        },
        'control': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'parametrization': {'enum': ['euler', 'hamiltonian']},
                'omega0': _null_or(_num),
                'pin_end': {'type': 'boolean'},
                'end': _null_or({'type': 'array', 'items': _num}),
                'initial': _null_or({'type': 'string'}),
                'modes': {'type': 'integer', 'minimum': 1},
                'amplitude': _pos,
            },
        },
        'constraint': {
            'type': 'object', 'additionalProperties': False,
            'properties': {'kind': {'enum': ['modulation', 'speed']}, 'E0': _nonneg},
        },
        'optimizer': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'step': _null_or(_pos), 'step_length': _pos,
                'max_iters': {'type': 'integer', 'minimum': 0},
                'grad_tol': _pos, 'el_tol': _pos, 'fd_step': _pos,
                'restarts': {'type': 'integer', 'minimum': 1},
                'constraint_drift_tol': _pos,
            },
        },
        'dd': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'n': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}, 'minItems': 1},
                'axis': {'enum': [1, 2, 3]}, 'channel': {'enum': [1, 2, 3]},
                'omega_max': _null_or(_pos),
                'n_omega': {'type': 'integer', 'minimum': 3},
                'knots': {'type': 'integer', 'minimum': 2},
            },
        },
        'simulate': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'enabled': {'type': 'boolean'},
                'methods': {'type': 'array', 'items': {'enum': ['dyson2', 'tcl2', 'nz2']}},
                'steps': _null_or({'type': 'integer', 'minimum': 1}),
                'memory_window': _null_or(_pos),
            },
        },
        'sweep': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'parameter': _null_or({'enum': ['E0', 'p', 'n']}),
                'values': {'type': 'array', 'items': _num},
                'jobs': {'type': 'integer', 'minimum': 1},
            },
        },
    },
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _path(err):
    return '.'.join(str(p) for p in err.absolute_path) or '<root>'


def resolve_config(raw, base_dir='.'):
    """Validate ``raw`` against the schema and fill defaults.

    Relative file paths are resolved against ``base_dir``. Raises
    :class:`ConfigError` naming the offending field.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError('<root>: configuration must be a mapping')
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(raw), key=lambda e: list(
        map(str, e.absolute_path)))
    if errors:
        raise ConfigError('; '.join(f'{_path(e)}: {e.message}' for e in errors))
    cfg = _merge(DEFAULTS, raw)
    d = cfg['dimension']
    n_ch = d * d - 1
    if cfg['bath']['channels'] is None:
        cfg['bath']['channels'] = [1.0] * n_ch
    elif len(cfg['bath']['channels']) != n_ch:
        raise ConfigError(f'bath.channels: need {n_ch} entries for dimension {d}')
    if cfg['control']['omega0'] is None:
        cfg['control']['omega0'] = 2 * np.pi / cfg['time']['t']
    if d != 2:
        if cfg['control']['parametrization'] == 'euler':
            raise ConfigError('control.parametrization: Euler angles need dimension 2')
        if cfg['score']['kind'] != 'gate_error':
            raise ConfigError('score.kind: only gate_error is available for dimension > 2')
    if cfg['control']['end'] is not None:
        m = 3 if cfg['control']['parametrization'] == 'euler' else n_ch
        if len(cfg['control']['end']) != m:
            raise ConfigError(f'control.end: need {m} values')
    for key, sect in (('path', 'bath'), ('initial', 'control')):
        val = cfg[sect][key]
        if val is not None:
            full = val if os.path.isabs(val) else os.path.join(base_dir, val)
            if not os.path.exists(full):
                raise ConfigError(f'{sect}.{key}: file {val!r} does not exist')
            cfg[sect][key] = os.path.abspath(full)
    if cfg['bath']['kind'] == 'file' and cfg['bath']['path'] is None:
        raise ConfigError('bath.path: required when bath.kind is file')
    sw = cfg['sweep']
    if sw['parameter'] == 'p' and any(not 0 <= v <= 0.5 for v in sw['values']):
        raise ConfigError('sweep.values: p must lie in [0, 0.5]')
    if sw['parameter'] == 'E0' and any(v < 0 for v in sw['values']):
        raise ConfigError('sweep.values: E0 must be nonnegative')
    if sw['parameter'] == 'n' and any(v < 0 or int(v) != v for v in sw['values']):
        raise ConfigError('sweep.values: n must be nonnegative integers')
    return cfg


def load_config(path):
    """Read and resolve a configuration file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f'config file {path!r} not found') from None
    except yaml.YAMLError as exc:
        raise ConfigError(f'{path}: not valid YAML ({exc})') from None
    return resolve_config(raw, os.path.dirname(os.path.abspath(path)))
