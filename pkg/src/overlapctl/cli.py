"""
Command-line front end.

Subcommands ``optimize``, ``score``, ``ddcompare``, ``simulate`` and
``sweep`` read one YAML configuration (``--config``) and write CSV/JSON
artifacts plus ``manifest.json`` into the output directory (``--out``).

Exit codes: 0 success, 2 configuration error, 3 runtime failure,
4 validation failure of the inputs or results.
"""
import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata

import numpy as np

from . import __version__, kernels
from .algebra import generate_basis
from .bath import (BathModel, correlation_from_spectrum, load_bath_csv, make_lorentzian_bath,
                   save_bath_csv, symmetric_grid)
from .config import (ConfigError, DimensionError, GridMismatchError, ImaginaryResidueError,
                     NotHermitianError, ResolutionError, ValidationError)
from .controls import (ControlTrajectory, free_trajectory, load_trajectory_csv, propagator,
                       random_smooth_trajectory, rotation_path, save_spectrum_csv,
                       save_trajectory_csv, system_spectrum)
from .dd import (dd_spectrum, low_frequency_weight, main_peak, pdd_sequence, save_dd_csv,
                 udd_sequence)
from .optimizer import Constraint, OptimizerConfig, optimize_restarts, save_history_csv
from .schema import load_config, resolve_config
from .score import (ScoreReport, gate_error_timedomain, make_score_spec, qubit_mixture,
                    score_bounds, score_noncommuting, score_spectral, score_timedomain,
                    system_spectral_matrix, TimeDomainScore)
from .sim import dyson2_integrate, nz2_integrate, save_sim_csv, tcl2_integrate

__all__ = ['main', 'run', 'sweep', 'EXIT_OK', 'EXIT_CONFIG', 'EXIT_RUNTIME', 'EXIT_VALIDATION']

log = logging.getLogger('overlapctl')

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VALIDATION = 0, 2, 3, 4
_VALIDATION = (ValidationError, DimensionError, GridMismatchError, ResolutionError,
               NotHermitianError, ImaginaryResidueError)
OPTIMIZE_TASKS = ('gate_protect', 'cool', 'heat')
INTEGRATORS = {'dyson2': dyson2_integrate, 'tcl2': tcl2_integrate, 'nz2': nz2_integrate}


# ---------------------------------------------------------------- setup

class Problem:
    """Everything derived from a resolved configuration that a run needs."""

    def __init__(self, cfg):
        self.cfg = cfg
        d = cfg['dimension']
        self.d = d
        self.basis = generate_basis(d)
        self.t = float(cfg['time']['t'])
        self.n = int(cfg['time']['knots'])
        self.dtau = self.t / self.n
        self.bath = self._bath()
        self.corr = correlation_from_spectrum(self.bath, dt=self.dtau,
                                              t_max=max(self.t, np.pi / self.bath.domega),
                                              check_resolution=cfg['bath']['kind'] != 'file')
        self.spec = self._score()
        self.reference = self._reference()

    def _bath(self):
        b = self.cfg['bath']
        if b['kind'] == 'file':
            bath = load_bath_csv(b['path'], coupling_strength=b['coupling'])
            if bath.n != self.d ** 2 - 1:
                raise DimensionError(f'bath file has {bath.n} channels, need {self.d ** 2 - 1}')
            return bath
        cutoff = np.pi / self.dtau
        if b['kind'] == 'lorentzian':
            cutoff = max(cutoff, abs(b['center']) + 10 * b['width'])
        widths = [b['width']] + ([b['tail_width']] if b['tail_weight'] > 0 else [])
        step = b['domega'] or min(min(widths) / 10, np.pi / (2 * self.t))
        omega = symmetric_grid(cutoff, step)
        n_ch = self.d ** 2 - 1
        if b['kind'] == 'zero':
            return BathModel(omega, np.zeros((len(omega), n_ch, n_ch), complex), 0.0)
        return make_lorentzian_bath(b['center'], b['width'], b['weight'], b['tail_weight'],
                                    b['tail_width'], channel_mask=b['channels'],
                                    coupling_strength=b['coupling'], omega=omega)

    def _score(self):
        s = self.cfg['score']
        if s['kind'] == 'gate_error':
            return make_score_spec('gate_error', basis=self.basis)
        return make_score_spec(s['kind'], qubit_mixture(s['p']), self.basis)

    @property
    def is_gate(self):
        return self.spec.kind == 'gate_error'

    def _reference(self):
        c = self.cfg['control']
        if c['parametrization'] == 'euler':
            return free_trajectory(self.t, self.n, c['omega0'], c['pin_end'], c['end'])
        m = self.d ** 2 - 1
        f = np.zeros((self.n + 1, m))
        if c['end'] is not None:
            f = np.outer(np.linspace(0, 1, self.n + 1), c['end'])
        return ControlTrajectory(self.t, f, 'hamiltonian', self.d, c['pin_end'])

    def initial(self):
        c = self.cfg['control']
        if c['initial'] is None:
            return None
        traj = load_trajectory_csv(c['initial'], c['parametrization'], self.d, c['pin_end'])
        if traj.n_intervals != self.n or abs(traj.t - self.t) > 1e-9 * self.t:
            raise GridMismatchError('initial trajectory grid differs from time.t / time.knots')
        return traj

    def constraint(self):
        c = self.cfg['constraint']
        if self.cfg['control']['parametrization'] == 'euler':
            h0 = self.cfg['control']['omega0']
        else:
            h0 = np.zeros((self.d, self.d), complex)
        return Constraint(c['kind'], c['E0'], h0, self.reference, self.basis)

    def objective(self):
        """Score functional; for gate protection it returns the gate error."""
        sign = -1.0 if self.is_gate else 1.0
        return TimeDomainScore(self.spec.gamma, self.corr, self.basis, self.t, self.n,
                               sign=sign)

    def random_initial(self, rng):
        c = self.cfg['control']
        ref = self.reference
        return random_smooth_trajectory(rng, self.t, self.n, ref.f.shape[1], c['modes'],
                                        c['pin_end'], ref.f, c['amplitude'], ref.kind, self.d)


# ---------------------------------------------------------------- reports

def score_report(pb: Problem, traj):
    rot = rotation_path(propagator(traj, pb.basis), pb.basis, traj.tau)
    sys_spec = system_spectrum(rot, pb.t, pb.bath.omega)
    gamma = pb.spec.gamma
    p_time = score_timedomain(rot, pb.corr, gamma)
    p_spec = score_spectral(sys_spec, pb.bath, gamma)
    p_tilde = score_noncommuting(rot, pb.corr, gamma)
    lo, hi = score_bounds(gamma, pb.bath, pb.t)
    err = gate_error_timedomain(rot, pb.corr, pb.d)
    grid = dict(t=pb.t, knots=pb.n, dtau=pb.dtau, omega_cutoff=pb.bath.cutoff,
                domega=pb.bath.domega, n_omega=len(pb.bath.omega), corr_dt=pb.corr.dt,
                corr_t_max=pb.corr.t_max)
    return ScoreReport(p_time, p_spec, p_tilde, lo, hi, err, grid), sys_spec


def _write_spectra(pb: Problem, sys_spec, path):
    """``omega, F_1..F_n, G_1..G_n`` (diagonal entries)."""
    gamma = np.eye(len(pb.basis)) if pb.is_gate else pb.spec.gamma
    f = np.real(np.einsum('wjj->wj', system_spectral_matrix(sys_spec, gamma)))
    g = pb.bath.diagonal()
    n = f.shape[1]
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(['omega'] + [f'F_{j + 1}' for j in range(n)] + [f'G_{j + 1}' for j in range(n)])
        for i, w in enumerate(pb.bath.omega):
            wr.writerow([repr(float(w))] + [repr(float(v)) for v in f[i]]
                        + [repr(float(v)) for v in g[i]])


def _write_json(obj, path):
    with open(path, 'w') as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write('\n')


def _trajectory_outputs(pb: Problem, traj, out, extra=None):
    report, sys_spec = score_report(pb, traj)
    save_trajectory_csv(traj, os.path.join(out, 'trajectory.csv'))
    save_bath_csv(pb.bath, os.path.join(out, 'bath.csv'))
    save_spectrum_csv(sys_spec, os.path.join(out, 'system_spectrum.csv'))
    _write_spectra(pb, sys_spec, os.path.join(out, 'spectra.csv'))
    doc = report.to_dict()
    doc['score_kind'] = pb.spec.kind
    doc['constraint'] = pb.constraint()(traj)
    if not report.within_bounds(1e-9):
        raise ValidationError(f'score {report.p_spectral} outside bounds '
                              f'[{report.bound_lo}, {report.bound_hi}]')
    if extra:
        doc.update(extra)
    _write_json(doc, os.path.join(out, 'score_report.json'))
    return doc


def _simulate(pb: Problem, traj, out):
    s = pb.cfg['simulate']
    if pb.is_gate:
        rho0 = np.eye(pb.d, dtype=complex) / pb.d
    else:
        rho0 = pb.spec.rho0
    results = {}
    for m in s['methods']:
        res = INTEGRATORS[m](rho0, traj, pb.bath, steps=s['steps'], basis=pb.basis,
                             memory_window=s['memory_window'])
        res.check()
        save_sim_csv(res, os.path.join(out, f'sim_{m}.csv'))
        results[m] = res
    if results:
        first = next(iter(results.values()))
        with open(os.path.join(out, 'sim_comparison.csv'), 'w', newline='') as fh:
            wr = csv.writer(fh)
            head = ['tau']
            for m in results:
                head += [f'overlap_{m}', f'S_L_{m}']
            wr.writerow(head)
            for i, tau in enumerate(first.tau):
                row = [repr(float(tau))]
                for res in results.values():
                    row += [repr(float(res.overlap[i])), repr(float(res.s_l[i]))]
                wr.writerow(row)
    return {m: r.delta_s_l for m, r in results.items()}


# ---------------------------------------------------------------- tasks

def _run_optimize(pb: Problem, out):
    cfg = pb.cfg
    task = cfg['task']
    direction = 'maximize' if task == 'heat' else 'minimize'
    o = cfg['optimizer']
    oc = OptimizerConfig(direction=direction, step=o['step'], step_length=o['step_length'],
                         max_iters=o['max_iters'], grad_tol=o['grad_tol'], el_tol=o['el_tol'],
                         fd_step=o['fd_step'], restarts=o['restarts'], seed=cfg['seed'],
                         constraint_drift_tol=o['constraint_drift_tol'])
    best, runs = optimize_restarts(oc, pb.objective(), pb.constraint(), pb.random_initial,
                                   pb.initial())
    save_history_csv(best, os.path.join(out, 'history.csv'))
    save_trajectory_csv(best.initial, os.path.join(out, 'initial_trajectory.csv'))
    extra = dict(task=task, direction=direction, status=best.status, restart=best.restart,
                 iterations=len(best.history) - 1, el_residual=best.el_residual,
                 restart_scores=[r.score for r in runs])
    if cfg['simulate']['enabled']:
        extra['sim_delta_s_l'] = _simulate(pb, best.final, out)
    return _trajectory_outputs(pb, best.final, out, extra)


def _run_score(pb: Problem, out):
    traj = pb.initial() or pb.reference
    extra = dict(task=pb.cfg['task'])
    if pb.cfg['simulate']['enabled']:
        extra['sim_delta_s_l'] = _simulate(pb, traj, out)
    return _trajectory_outputs(pb, traj, out, extra)


def _run_simulate(pb: Problem, out):
    traj = pb.initial() or pb.reference
    extra = dict(task='simulate', sim_delta_s_l=_simulate(pb, traj, out))
    return _trajectory_outputs(pb, traj, out, extra)


def _run_dd(cfg, out):
    dd = cfg['dd']
    t = float(cfg['time']['t'])
    n_max = max(max(dd['n']), 1)
    omega_max = dd['omega_max'] or 1.5 * 4 * np.pi * n_max / t
    omega = np.linspace(-omega_max, omega_max, dd['n_omega'])
    summary = {}
    for n in dd['n']:
        pdd = pdd_sequence(n, t, dd['axis'])
        udd = udd_sequence(n, t, dd['axis'])
        entry, spectra = {}, {}
        for seq in (pdd, udd):
            f = dd_spectrum(seq, omega, dd['channel'], dd['knots'])
            save_dd_csv(omega, f, os.path.join(out, f'dd_{seq.label}.csv'))
            spectra[seq.label] = f
            entry[seq.label] = dict(timings=seq.timings.tolist(), main_peak=main_peak(omega, f))
        half = entry[pdd.label]['main_peak'] / 2
        for label, f in spectra.items():
            entry[label]['low_frequency_weight'] = low_frequency_weight(omega, f, half)
        entry['low_frequency_cutoff'] = half
        summary[str(n)] = entry
    _write_json(dict(task='ddcompare', t=t, sequences=summary),
                os.path.join(out, 'dd_summary.json'))
    return summary


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, 'rb') as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b''):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg):
    """SHA-256 of the canonical configuration with input files replaced by their content hashes."""
    doc = copy.deepcopy(cfg)
    doc.pop('out', None)
    for sect, key in (('bath', 'path'), ('control', 'initial')):
        if doc[sect][key] is not None:
            doc[sect][key] = 'sha256:' + _sha256_file(doc[sect][key])
    blob = json.dumps(doc, sort_keys=True, separators=(',', ':'), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def _versions():
    import scipy
    import yaml
    return dict(overlapctl=__version__, numpy=np.__version__, scipy=scipy.__version__,
                pyyaml=yaml.__version__, jsonschema=metadata.version('jsonschema'),
                python=platform.python_version(), kernel_backend=kernels.BACKEND)


def _write_manifest(cfg, out):
    arts = {}
    for name in sorted(os.listdir(out)):
        full = os.path.join(out, name)
        if name != 'manifest.json' and os.path.isfile(full):
            arts[name] = _sha256_file(full)
    inputs = {}
    for sect, key in (('bath', 'path'), ('control', 'initial')):
        if cfg[sect][key] is not None:
            inputs[f'{sect}.{key}'] = _sha256_file(cfg[sect][key])
    # the output directory is left out so reruns elsewhere give identical bytes
    shown = {k: v for k, v in cfg.items() if k != 'out'}
    doc = dict(config=shown, config_sha256=config_hash(cfg), inputs=inputs, versions=_versions(),
               artifacts=arts)
    _write_json(doc, os.path.join(out, 'manifest.json'))
    return doc


def run(cfg, out=None):
    """Execute ``cfg['task']`` and write its artifacts; returns the report dictionary."""
    out = out or cfg['out']
    os.makedirs(out, exist_ok=True)
    task = cfg['task']
    log.info('task %s -> %s', task, out)
    if task == 'ddcompare':
        result = _run_dd(cfg, out)
    else:
        pb = Problem(cfg)
        if task in OPTIMIZE_TASKS:
            result = _run_optimize(pb, out)
        elif task == 'simulate':
            result = _run_simulate(pb, out)
        else:
            result = _run_score(pb, out)
    _write_manifest(cfg, out)
    return result


def _apply(cfg, parameter, value):
    cfg = copy.deepcopy(cfg)
    if parameter == 'E0':
        cfg['constraint']['E0'] = float(value)
    elif parameter == 'p':
        cfg['score']['p'] = float(value)
    elif parameter == 'n':
        cfg['dd']['n'] = [int(value)]
    return resolve_config(cfg)


def _sweep_one(args):
    cfg, parameter, value, out = args
    row = dict(parameter=parameter, value=value, status='ok', P=None, E=None, gate_error=None,
               error='')
    try:
        res = run(_apply(cfg, parameter, value), out)
        if parameter != 'n' and cfg['task'] != 'ddcompare':
            row.update(P=res['p_time'], E=res['constraint'], gate_error=res['gate_error'],
                       status=res.get('status', 'ok'))
    except Exception as exc:  # recorded per value, the sweep continues
        row.update(status='failed', error=f'{type(exc).__name__}: {exc}')
    return row


def _cell(v):
    if v is None:
        return ''
    return v if isinstance(v, str) else repr(float(v))


def sweep(cfg, parameter=None, values=None, out=None):
    """Run ``cfg`` once per value of ``parameter`` and aggregate into ``sweep.csv``."""
    parameter = parameter or cfg['sweep']['parameter']
    values = list(cfg['sweep']['values'] if values is None else values)
    if parameter not in ('E0', 'p', 'n'):
        raise ConfigError('sweep.parameter: must be one of E0, p, n')
    if not values:
        raise ConfigError('sweep.values: at least one value required')
    out = out or cfg['out']
    os.makedirs(out, exist_ok=True)
    jobs = [(cfg, parameter, v, os.path.join(out, f'{parameter}_{i:03d}'))
            for i, v in enumerate(values)]
    if cfg['sweep']['jobs'] > 1:
        with ProcessPoolExecutor(cfg['sweep']['jobs']) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    keys = ['parameter', 'value', 'status', 'P', 'E', 'gate_error', 'error']
    with open(os.path.join(out, 'sweep.csv'), 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(keys)
        for r in rows:
            wr.writerow([_cell(r[k]) for k in keys])
    _write_manifest(cfg, out)
    return rows


# ---------------------------------------------------------------- entry point

def _parser():
    ap = argparse.ArgumentParser(prog='overlapctl', description=__doc__.split('\n\n')[0].strip())
    ap.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = ap.add_subparsers(dest='command', required=True)
    for name, help_ in (('optimize', 'constrained score optimization (gate_protect, cool, heat)'),
                        ('score', 'evaluate and report the score of a trajectory'),
                        ('ddcompare', 'PDD versus UDD modulation spectra'),
                        ('simulate', 'second-order master-equation integrations'),
                        ('sweep', 'repeat a run over values of E0, p or n')):
        p = sub.add_parser(name, help=help_)
        p.add_argument('--config', required=True, help='YAML run configuration')
        p.add_argument('--out', help='output directory (overrides config out)')
        p.add_argument('--seed', type=int, help='RNG seed (overrides config seed)')
        p.add_argument('-v', '--verbose', action='store_true')
        if name == 'sweep':
            p.add_argument('--param', choices=['E0', 'p', 'n'])
            p.add_argument('--values', help='comma-separated values')
            p.add_argument('--jobs', type=int)
    return ap


def _provenance(exc):
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        if 'overlapctl' in frame.filename:
            return 'overlapctl.' + os.path.splitext(os.path.basename(frame.filename))[0]
    return 'overlapctl'


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError('--seed: must be an unsigned 64-bit integer')
            cfg['seed'] = args.seed
        if args.out:
            cfg['out'] = args.out
        cmd = args.command
        if cmd == 'optimize':
            if cfg['task'] not in OPTIMIZE_TASKS:
                raise ConfigError(f'task: optimize needs one of {", ".join(OPTIMIZE_TASKS)}, '
                                  f'got {cfg["task"]}')
        elif cmd == 'score':
            cfg['task'] = 'score_only'
        elif cmd == 'ddcompare':
            cfg['task'] = 'ddcompare'
        elif cmd == 'simulate':
            cfg['task'] = 'simulate'
        if cmd == 'sweep':
            if args.jobs:
                cfg['sweep']['jobs'] = args.jobs
            values = None
            if args.values:
                try:
                    values = [float(v) for v in args.values.split(',')]
                except ValueError:
                    raise ConfigError('--values: expected comma-separated numbers') from None
            param = args.param or cfg['sweep']['parameter']
            if values is not None or args.param:
                cfg['sweep']['parameter'] = param
                if values is not None:
                    cfg['sweep']['values'] = values
                cfg = resolve_config(cfg)
            rows = sweep(cfg)
            failed = sum(r['status'] == 'failed' for r in rows)
            print(f'sweep over {param}: {len(rows) - failed} ok, {failed} failed -> {cfg["out"]}')
        else:
            run(cfg)
            print(f'{cfg["task"]} finished -> {cfg["out"]}')
    except ConfigError as exc:
        print(f'config error: {exc}', file=sys.stderr)
        return EXIT_CONFIG
    except _VALIDATION as exc:
        print(f'validation error in {_provenance(exc)}: {exc}', file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f'runtime error in {_provenance(exc)}: {type(exc).__name__}: {exc}',
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
