import json
import os
import subprocess
import sys

import numpy as np
import pytest

from overlapctl import kernels

needs_compiled = pytest.mark.skipif(kernels.BACKEND != 'compiled',
                                    reason='compiled kernels not built')


def _problem(rng, n=40, m=3):
    q = np.linalg.qr(rng.standard_normal((n, m, m)))[0]
    phi = rng.standard_normal((2 * n - 1, m, m)) + 1j * rng.standard_normal((2 * n - 1, m, m))
    gamma = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    w = rng.uniform(0.5, 1.5, n)
    return q, phi, gamma, w


def brute_force(eps, phi, gamma, w, ordered):
    """Direct pair loop over ``(i, j)``."""
    n = len(eps)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if ordered and j > i:
                continue
            wij = w[i] * w[j] * (0.5 if ordered and i == j else 1.0)
            total += wij * np.trace(eps[i].T @ phi[i - j + n - 1] @ eps[j] @ gamma)
    return total


@pytest.mark.parametrize('ordered', [False, True])
def test_python_kernel_matches_pair_loop(ordered):
    rng = np.random.default_rng(0)
    eps, phi, gamma, w = _problem(rng, n=15)
    x, y = kernels.overlap_fields(eps, phi, gamma, w, ordered, True, backend='python')
    expect = brute_force(eps, phi, gamma, w, ordered)
    assert np.einsum('iba,iba->', eps, x) == pytest.approx(expect, rel=1e-12)
    # Y carries the same total, contracted from the other side
    assert np.einsum('jab,jba->', y, eps) == pytest.approx(expect, rel=1e-12)


@needs_compiled
@pytest.mark.parametrize('ordered', [False, True])
def test_backends_agree_on_fields(ordered):
    rng = np.random.default_rng(1)
    eps, phi, gamma, w = _problem(rng, n=60)
    xp, yp = kernels.overlap_fields(eps, phi, gamma, w, ordered, True, backend='python')
    xc, yc = kernels.overlap_fields(eps, phi, gamma, w, ordered, True, backend='compiled')
    np.testing.assert_allclose(xc, xp, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(yc, yp, rtol=1e-12, atol=1e-12)


@needs_compiled
def test_backends_agree_on_memory():
    rng = np.random.default_rng(2)
    phi = rng.standard_normal((30, 3, 3)) + 1j * rng.standard_normal((30, 3, 3))
    v = rng.standard_normal((30, 3, 2, 2)) + 1j * rng.standard_normal((30, 3, 2, 2))
    q = rng.uniform(0, 1, 30)
    a = kernels.memory_contract(phi, v, q, backend='python')
    b = kernels.memory_contract(phi, v, q, backend='compiled')
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-13)


def test_memory_contract_definition():
    rng = np.random.default_rng(3)
    phi = rng.standard_normal((5, 3, 3)) + 0j
    v = rng.standard_normal((5, 3, 2, 2)) + 0j
    q = rng.uniform(0, 1, 5)
    out = kernels.memory_contract(phi, v, q)
    expect = sum(q[s] * np.einsum('ab,bij->aij', phi[s], v[s]) for s in range(5))
    np.testing.assert_allclose(out, expect, atol=1e-13)


def test_want_y_false_skips_second_field():
    rng = np.random.default_rng(4)
    x, y = kernels.overlap_fields(*_problem(rng, n=5), want_y=False)
    assert y is None and x.shape == (5, 3, 3)


def test_get_backend_names():
    if kernels.BACKEND == 'python':
        with pytest.raises(ImportError):
            kernels.get_backend('compiled')
    assert kernels.get_backend('python').__name__.endswith('_kernels_py')


def test_environment_forces_fallback():
    env = dict(os.environ, OVERLAPCTL_PURE_PYTHON='1')
    out = subprocess.run([sys.executable, '-c',
                          'from overlapctl import kernels; print(kernels.BACKEND)'],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == 'python'


def test_benchmark_script_runs(tmp_path):
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = tmp_path / 'bench.json'
    res = subprocess.run([sys.executable, os.path.join(root, 'benchmarks', 'bench_kernels.py'),
                          '--sizes', '8', '--repeat', '1', '--json', str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert 'overlap_fields' in res.stdout
    rows = json.loads(out.read_text())
    assert all(r['python_maxdiff'] == 0 for r in rows)
