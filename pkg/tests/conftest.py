"""Shared fixtures: random qubit instances and acceptance-result reporting."""
import numpy as np
import pytest
from hypothesis import settings

from overlapctl.algebra import generate_basis
from overlapctl.bath import correlation_from_spectrum, make_lorentzian_bath, symmetric_grid
from overlapctl.controls import (free_trajectory, propagator, random_smooth_trajectory,
                                 rotation_path, system_spectrum)

settings.register_profile('default', max_examples=40, deadline=None)
settings.load_profile('default')

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section('acceptance criteria')
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f'{key}: {"PASS" if ok else "FAIL"}  {detail}')


@pytest.fixture(scope='session')
def basis2():
    return generate_basis(2)


def lorentzian_instance(rng, t, n_knots, coupling=1e-2):
    """Random diagonal Lorentzian bath with its correlation on the knot grid."""
    dtau = t / n_knots
    width = rng.uniform(0.3, 1.5)
    tail_width = rng.uniform(0.2, 1.0)
    step = min(width, tail_width) / 10
    omega = symmetric_grid(np.pi / dtau, step)
    bath = make_lorentzian_bath(rng.uniform(-3, 3), width, rng.uniform(0.1, 1.0),
                                rng.uniform(0, 0.5), tail_width, omega=omega,
                                channel_mask=rng.uniform(0, 1, 3), coupling_strength=coupling)
    corr = correlation_from_spectrum(bath, dt=dtau, t_max=max(t, np.pi / bath.domega))
    return bath, corr


class Instance:
    def __init__(self, rng, basis, n_knots=60):
        self.t = float(rng.uniform(2, 10))
        self.n = n_knots
        self.bath, self.corr = lorentzian_instance(rng, self.t, n_knots)
        ref = free_trajectory(self.t, n_knots, rng.uniform(-2, 2))
        self.traj = random_smooth_trajectory(rng, self.t, n_knots, reference=ref.f,
                                             amplitude=rng.uniform(0.5, 3))
        self.rot = rotation_path(propagator(self.traj), basis, self.traj.tau)
        self.sys = system_spectrum(self.rot, self.t, self.bath.omega)


@pytest.fixture(scope='session')
def corpus(basis2):
    """Fifty random qubit instances (smooth trajectories, diagonal Lorentzian baths)."""
    rng = np.random.default_rng(20240601)
    return [Instance(rng, basis2) for _ in range(50)]
