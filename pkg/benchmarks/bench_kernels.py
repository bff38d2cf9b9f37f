"""Compare the compiled and pure-Python kernel backends.

Times ``overlap_fields`` (the double-time contraction behind every score and
gradient) and ``memory_contract`` (the memory sum of the memory-kernel
integrator) on random inputs, and checks both backends return the same
numbers::

    python3 benchmarks/bench_kernels.py --sizes 100 200 400 --repeat 5
"""
import argparse
import json
import timeit

import numpy as np

from overlapctl import kernels


def overlap_inputs(rng, n, m=3):
    eps = np.linalg.qr(rng.standard_normal((n, m, m)))[0]
    phi = rng.standard_normal((2 * n - 1, m, m)) + 1j * rng.standard_normal((2 * n - 1, m, m))
    gamma = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    w = np.full(n, 1.0 / n)
    return eps, phi, gamma, w


def memory_inputs(rng, n, m=3, d=2):
    phi = rng.standard_normal((n, m, m)) + 1j * rng.standard_normal((n, m, m))
    v = rng.standard_normal((n, m, d, d)) + 1j * rng.standard_normal((n, m, d, d))
    return phi, v, rng.uniform(0, 1, n)


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def run(sizes, repeat, seed=0):
    backends = ['python'] + (['compiled'] if kernels.BACKEND == 'compiled' else [])
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        args = overlap_inputs(rng, n)
        margs = memory_inputs(rng, n)
        for kernel, call in (
                ('overlap_fields', lambda b: kernels.overlap_fields(*args, True, True, backend=b)),
                ('memory_contract', lambda b: kernels.memory_contract(*margs, backend=b))):
            ref = call('python')
            row = dict(kernel=kernel, n=n)
            for b in backends:
                out = call(b)
                a, r = (out[0], ref[0]) if isinstance(out, tuple) else (out, ref)
                row[f'{b}_s'] = best_time(lambda: call(b), repeat)
                row[f'{b}_maxdiff'] = float(np.abs(a - r).max())
            if 'compiled_s' in row:
                row['speedup'] = row['python_s'] / row['compiled_s']
            rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument('--sizes', type=int, nargs='+', default=[100, 200, 400, 800])
    ap.add_argument('--repeat', type=int, default=5)
    ap.add_argument('--json', help='also write the rows to this file')
    args = ap.parse_args(argv)
    rows = run(args.sizes, args.repeat)
    print(f'default backend: {kernels.BACKEND}')
    print(f'{"kernel":<16}{"n":>6}{"python [ms]":>14}{"compiled [ms]":>16}{"speedup":>10}'
          f'{"max diff":>12}')
    for r in rows:
        comp = r.get('compiled_s')
        print(f'{r["kernel"]:<16}{r["n"]:>6}{1e3 * r["python_s"]:>14.3f}'
              + (f'{1e3 * comp:>16.3f}{r["speedup"]:>10.1f}{r["compiled_maxdiff"]:>12.1e}'
                 if comp is not None else f'{"n/a":>16}{"":>10}{"":>12}'))
    if args.json:
        with open(args.json, 'w') as fh:
            json.dump(rows, fh, indent=2)


if __name__ == '__main__':
    main()
