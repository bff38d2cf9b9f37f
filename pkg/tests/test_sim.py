import numpy as np
import pytest

from overlapctl.algebra import generate_basis
from overlapctl.bath import CorrelationPath, correlation_from_spectrum, make_lorentzian_bath
from overlapctl.config import GridMismatchError, ResolutionError, ValidationError
from overlapctl.controls import (ControlTrajectory, free_trajectory, propagator,
                                 random_smooth_trajectory, rotation_path)
from overlapctl.score import (gamma_matrix, gradient_operator, qubit_mixture, score_noncommuting,
                              score_timedomain)
from overlapctl.sim import (SimResult, auto_steps, dyson2_integrate, dyson2_score,
                            ground_overlap_trace, linear_entropy, nz2_integrate, save_sim_csv,
                            simpson_weights, tcl2_integrate)

RHO = qubit_mixture(0.25)
P_HAT = gradient_operator('linear_entropy', RHO)


@pytest.fixture(scope='module')
def small():
    """Short driven run with a weak Lorentzian bath."""
    t, n = 4.0, 40
    bath = make_lorentzian_bath(1.5, 0.5, 1.0, 0.3, 0.5, cutoff=40, domega=0.04,
                                coupling_strength=1e-2)
    traj = random_smooth_trajectory(np.random.default_rng(2), t, n,
                                    reference=free_trajectory(t, n, 2 * np.pi / t).f)
    return traj, bath


def test_linear_entropy_values():
    assert linear_entropy(np.eye(2) / 2) == pytest.approx(1.0)
    assert linear_entropy(np.diag([1.0, 0.0])) == pytest.approx(0.0)
    assert linear_entropy(RHO) == pytest.approx(2 * (1 - 0.625))


def test_dyson_score_zero_without_bath(corpus):
    inst = corpus[0]
    quiet = CorrelationPath(inst.corr.times, np.zeros_like(inst.corr.values))
    assert dyson2_score(RHO, P_HAT, inst.rot, quiet) == 0


def test_dyson_score_matches_overlap_score(corpus):
    gamma = gamma_matrix(RHO, P_HAT, generate_basis(2))
    for inst in corpus[:10]:
        p = score_timedomain(inst.rot, inst.corr, gamma)
        assert dyson2_score(RHO, P_HAT, inst.rot, inst.corr, inst.t) == pytest.approx(p, rel=1e-6)


def test_dyson_score_noncommuting(corpus):
    rng = np.random.default_rng(0)
    basis = generate_basis(2)
    for inst in corpus[10:15]:
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        q = np.diag([0.7, -1.1]).astype(complex)
        p = score_noncommuting(inst.rot, inst.corr, gamma_matrix(rho, q, basis))
        assert dyson2_score(rho, q, inst.rot, inst.corr) == pytest.approx(p, rel=1e-6)


def test_dyson_score_linear_in_correlation(corpus):
    inst = corpus[20]
    scaled = CorrelationPath(inst.corr.times, 3.5 * inst.corr.values)
    base = dyson2_score(RHO, P_HAT, inst.rot, inst.corr)
    assert dyson2_score(RHO, P_HAT, inst.rot, scaled) == pytest.approx(3.5 * base, rel=1e-12)


def test_dyson_score_grid_mismatch(corpus):
    inst = corpus[0]
    with pytest.raises(GridMismatchError):
        dyson2_score(RHO, P_HAT, inst.rot, inst.corr, t=inst.t * 2)


def test_no_bath_is_unitary(small):
    traj, bath = small
    quiet = bath.scaled(0.0)
    tcl = tcl2_integrate(RHO, traj, quiet)
    nz = nz2_integrate(RHO, traj, quiet, steps=tcl.tau.size - 1)
    assert np.ptp(tcl.s_l) <= 1e-10
    np.testing.assert_allclose(nz.rho, tcl.rho, atol=1e-14)
    u = propagator(traj)
    np.testing.assert_allclose(tcl.rho[-1], u[-1] @ RHO @ u[-1].conj().T, atol=1e-12)


def test_states_are_physical(small):
    traj, bath = small
    for method in (dyson2_integrate, tcl2_integrate, nz2_integrate):
        res = method(RHO, traj, bath)
        assert res.check()
        assert res.method in ('dyson2', 'tcl2', 'nz2')


def test_check_flags_bad_states():
    rho = np.stack([np.eye(2) / 2, np.diag([1.2, -0.2])]).astype(complex)
    res = SimResult(np.array([0.0, 1.0]), rho, rho, 'tcl2')
    with pytest.raises(ValidationError):
        res.check()


def test_methods_agree_at_weak_coupling(small):
    traj, bath = small
    d = {m.__name__: m(RHO, traj, bath).delta_s_l
         for m in (dyson2_integrate, tcl2_integrate, nz2_integrate)}
    vals = np.array(list(d.values()))
    assert np.all(np.abs(vals - vals[0]) <= 0.05 * np.abs(vals).max())


def test_dyson_integration_matches_score(small):
    traj, bath = small
    res = dyson2_integrate(RHO, traj, bath)
    basis = generate_basis(2)
    # Tr(P̂ Δρ) in the interaction picture is the second-order score
    change = np.real(np.trace(P_HAT @ (res.rho_int[-1] - RHO)))
    corr = correlation_from_spectrum(bath, dt=traj.dtau, t_max=max(traj.t, np.pi / bath.domega))
    rot = rotation_path(propagator(traj), basis, traj.tau)
    p = score_timedomain(rot, corr, gamma_matrix(RHO, P_HAT, basis))
    assert change == pytest.approx(p, rel=2e-2)


def test_step_halving_converges(small):
    traj, bath = small
    n = auto_steps(traj)
    a = tcl2_integrate(RHO, traj, bath, steps=n).s_l[-1]
    b = tcl2_integrate(RHO, traj, bath, steps=2 * n).s_l[-1]
    assert abs(a - b) <= 1e-6


def test_memory_window_truncation(small):
    traj, bath = small
    full = nz2_integrate(RHO, traj, bath)
    # slowest bath feature has width 0.5, i.e. correlation time 2
    cut = nz2_integrate(RHO, traj, bath, memory_window=5 * 2.0)
    assert np.abs(full.rho[-1] - cut.rho[-1]).max() <= 1e-6


def test_resolution_error(small):
    traj, bath = small
    with pytest.raises(ResolutionError):
        tcl2_integrate(RHO, traj, bath, steps=5)
    assert auto_steps(traj) >= traj.n_intervals


def test_ground_overlap_examples():
    ground = np.diag([0.0, 1.0]).astype(complex)
    t, n = 2.0, 20
    zero = make_lorentzian_bath(1.0, 0.5, 0.0, cutoff=20, domega=0.05)
    idle = ControlTrajectory(t, np.zeros((n + 1, 3)))
    res = tcl2_integrate(ground, idle, zero)
    np.testing.assert_allclose(ground_overlap_trace(res), 1.0, atol=1e-14)
    flip = free_trajectory(t, n, end=[0.0, 2 * np.pi, 0.0])
    res = tcl2_integrate(ground, flip, zero)
    mid = np.argmin(np.abs(res.tau - t / 2))
    assert res.overlap[mid] == pytest.approx(0.0, abs=1e-12)
    assert res.overlap[-1] == pytest.approx(1.0, abs=1e-12)


def test_correlation_path_input(small):
    traj, bath = small
    steps = auto_steps(traj)
    corr = correlation_from_spectrum(bath, dt=traj.t / steps / 2, t_max=traj.t)
    a = tcl2_integrate(RHO, traj, corr, steps=steps)
    b = tcl2_integrate(RHO, traj, bath, steps=steps)
    np.testing.assert_allclose(a.rho, b.rho, atol=1e-13)
    coarse = correlation_from_spectrum(bath, dt=traj.t / steps * 0.75, t_max=traj.t)
    with pytest.raises(GridMismatchError):
        tcl2_integrate(RHO, traj, coarse, steps=steps)


def test_rejects_bad_initial_state(small):
    traj, bath = small
    with pytest.raises(ValidationError):
        tcl2_integrate(np.diag([0.5, 0.6]), traj, bath)


def test_sim_csv(tmp_path, small):
    traj, bath = small
    res = tcl2_integrate(RHO, traj, bath)
    path = tmp_path / 'sim.csv'
    save_sim_csv(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == 'tau,overlap,S_L,method'
    assert lines[1].endswith(',tcl2') and len(lines) == len(res.tau) + 1


@pytest.mark.parametrize('n', range(2, 10))
def test_memory_quadrature_weights(n):
    x = np.linspace(0, 2, n)
    w = simpson_weights(n, x[1] - x[0])
    assert w.sum() == pytest.approx(2.0, rel=1e-14)
    if n >= 3:
        # exact for cubics once a Simpson or 3/8 panel fits
        assert w @ x ** 3 == pytest.approx(4.0, rel=1e-13)
