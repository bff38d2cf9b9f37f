import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import Instance
from overlapctl.algebra import commutator, generate_basis, pauli
from overlapctl.bath import (BathModel, CorrelationPath, causal_spectrum, make_lorentzian_bath,
                             symmetric_grid)
from overlapctl.config import DimensionError, GridMismatchError, ValidationError
from overlapctl.controls import (free_trajectory, propagator, random_smooth_trajectory,
                                 rotation_path, system_spectrum)
from overlapctl.optimizer import finite_diff_gradient
from overlapctl.score import (ScoreReport, TimeDomainScore, averaged_gamma, gamma_matrix,
                              gate_error, gate_error_timedomain, gradient_operator,
                              haar_average_pair, haar_average_pair_mc, haar_gamma_mc,
                              make_score_spec, prerotate_to_commuting, qubit_mixture,
                              score_bounds, score_noncommuting, score_noncommuting_spectral,
                              score_noncommuting_split, score_spectral, score_timedomain,
                              validate_state)

SX, SY, SZ = pauli()


def pauli_gamma(rho0, p_hat):
    """Independent oracle: Γ_kj = Tr(ρ0 [σ_j, P̂] σ_k) with explicit Pauli matrices."""
    ops = [SX, SY, SZ]
    g = np.zeros((3, 3), complex)
    for k in range(3):
        for j in range(3):
            g[k, j] = np.trace(rho0 @ (ops[j] @ p_hat - p_hat @ ops[j]) @ ops[k])
    return g


def random_state(rng, d):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_gradient_operators():
    rho = np.diag([0.75, 0.25]).astype(complex)
    np.testing.assert_allclose(gradient_operator('purity', rho), np.diag([1.5, 0.5]))
    np.testing.assert_allclose(gradient_operator('linear_entropy', rho), np.diag([-3, -1]))
    np.testing.assert_allclose(gradient_operator('linear_entropy', rho, k=1.0), np.diag([-1.5, -0.5]))
    # |0⟩ is the second basis vector in the {|1⟩, |0⟩} ordering
    np.testing.assert_allclose(gradient_operator('fidelity', rho, psi=[0, 1]), np.diag([0, 1]))
    np.testing.assert_allclose(gradient_operator('expectation', rho, q=SX), SX)


def test_gradient_operator_errors():
    rho = qubit_mixture(0.3)
    with pytest.raises(ValidationError):
        gradient_operator('expectation', rho)
    with pytest.raises(ValidationError):
        gradient_operator('expectation', rho, q=np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        gradient_operator('entropy', rho)


@pytest.mark.parametrize('rho', [np.diag([0.6, 0.6]), np.diag([1.2, -0.2]),
                                 np.array([[0.5, 0.5], [0.0, 0.5]])])
def test_invalid_states(rho):
    with pytest.raises(ValidationError):
        validate_state(rho)


def test_gamma_vanishes_for_maximally_mixed(basis2):
    rho = qubit_mixture(0.5)
    assert not np.any(np.abs(gamma_matrix(rho, -4 * rho, basis2)) > 1e-15)


def test_gamma_quarter_mixture(basis2):
    rho = qubit_mixture(0.25)
    g = gamma_matrix(rho, -4 * rho, basis2)
    expect = np.array([[1, 2j, 0], [-2j, 1, 0], [0, 0, 0]])
    np.testing.assert_allclose(g, expect, atol=1e-14)
    np.testing.assert_allclose(g, pauli_gamma(rho, -4 * rho), atol=1e-14)
    np.testing.assert_allclose(np.linalg.eigvalsh(g), [-1, 0, 3], atol=1e-14)


@given(st.integers(0, 2 ** 32 - 1))
def test_gamma_matches_pauli_oracle(seed):
    rng = np.random.default_rng(seed)
    rho = random_state(rng, 2)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    q = a + a.conj().T
    np.testing.assert_allclose(gamma_matrix(rho, q, generate_basis(2)), pauli_gamma(rho, q),
                               atol=1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 3]))
def test_commuting_gamma_is_hermitian(seed, d):
    rng = np.random.default_rng(seed)
    basis = generate_basis(d)
    v = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))[0]
    p = rng.dirichlet(np.ones(d))
    rho = v @ np.diag(p) @ v.conj().T
    q = v @ np.diag(rng.standard_normal(d)) @ v.conj().T
    g = gamma_matrix(rho, q, basis)
    np.testing.assert_allclose(g, g.conj().T, atol=1e-12)


def test_score_spec_flags(basis2):
    spec = make_score_spec('linear_entropy', qubit_mixture(0.25), basis2)
    assert spec.commuting
    rho = random_state(np.random.default_rng(0), 2)
    spec = make_score_spec('expectation', rho, basis2, q=SZ)
    assert not spec.commuting
    gate = make_score_spec('gate_error', basis=generate_basis(3))
    np.testing.assert_allclose(gate.gamma, -0.75 * np.eye(8))


def test_prerotation_makes_pair_commute():
    rng = np.random.default_rng(2)
    rho = random_state(rng, 3)
    q = np.diag([0.3, -1.0, 2.0]).astype(complex)
    rotated, v = prerotate_to_commuting(rho, q)
    assert np.abs(commutator(rotated, q)).max() < 1e-12
    np.testing.assert_allclose(v @ v.conj().T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.linalg.eigvalsh(rotated), np.linalg.eigvalsh(rho), atol=1e-12)


def test_haar_pair_examples():
    assert haar_average_pair(np.eye(2), np.eye(2)) == pytest.approx(1)
    assert haar_average_pair(SZ, SZ) == pytest.approx(1 / 3)
    assert haar_average_pair(SX, SY) == pytest.approx(0)
    with pytest.raises(DimensionError):
        haar_average_pair(SX, np.eye(3))


def test_haar_pair_monte_carlo():
    rng = np.random.default_rng(4)
    est = haar_average_pair_mc(SZ, SZ, 100_000, rng)
    assert est.real == pytest.approx(1 / 3, abs=5e-3)


def test_haar_gamma_small_sample_shape(basis2):
    g = haar_gamma_mc(basis2, 2000, np.random.default_rng(0), chunk=700)
    assert g.shape == (3, 3)
    np.testing.assert_allclose(np.diag(g).real, -2 / 3, atol=0.05)


def _instance(seed=0, n=60):
    return Instance(np.random.default_rng(seed), generate_basis(2), n)


def test_zero_gamma_and_zero_bath_give_zero():
    inst = _instance(1)
    zero = np.zeros((3, 3))
    assert score_timedomain(inst.rot, inst.corr, zero) == 0
    assert score_spectral(inst.sys, inst.bath, zero) == 0
    g = np.diag([1.0, 2.0, -0.5])
    quiet = CorrelationPath(inst.corr.times, np.zeros_like(inst.corr.values))
    assert score_timedomain(inst.rot, quiet, g) == 0
    assert score_spectral(inst.sys, inst.bath.scaled(0.0), g) == 0
    assert score_bounds(zero, inst.bath, inst.t) == (0.0, 0.0)


def test_time_and_spectral_agree():
    gamma = gamma_matrix(qubit_mixture(0.25), -4 * qubit_mixture(0.25), generate_basis(2))
    for seed in range(3):
        inst = _instance(seed)
        pt = score_timedomain(inst.rot, inst.corr, gamma, inst.t)
        ps = score_spectral(inst.sys, inst.bath, gamma, inst.t)
        assert pt == pytest.approx(ps, rel=1e-6)


def test_linear_in_gamma():
    inst = _instance(3)
    rng = np.random.default_rng(9)
    a = rng.standard_normal((3, 3))
    g1, g2 = a + a.T, np.diag(rng.standard_normal(3))
    p = lambda g: score_timedomain(inst.rot, inst.corr, g)  # noqa: E731
    assert p(-g1) == pytest.approx(-p(g1), rel=1e-12)
    assert p(g1 + 2.5 * g2) == pytest.approx(p(g1) + 2.5 * p(g2), rel=1e-10, abs=1e-15)


def test_grid_and_shape_errors():
    inst = _instance(4)
    g = np.eye(3)
    with pytest.raises(GridMismatchError):
        score_timedomain(inst.rot, inst.corr, g, t=inst.t + 1)
    with pytest.raises(DimensionError):
        score_timedomain(inst.rot, inst.corr, np.eye(2))
    other = make_lorentzian_bath(0.0, 1.0, 1.0, cutoff=5, domega=0.1)
    with pytest.raises(GridMismatchError):
        score_spectral(inst.sys, other, g)
    with pytest.raises(ValidationError):
        score_timedomain(inst.rot, inst.corr, np.array([[0, 1], [0, 0], [0, 0]]) @ np.ones((2, 3)))


def test_disjoint_supports_decouple(basis2):
    t, n = 10.0, 200
    traj = random_smooth_trajectory(np.random.default_rng(6), t, n,
                                    reference=free_trajectory(t, n, 0.5).f, amplitude=0.5)
    rot = rotation_path(propagator(traj), basis2, traj.tau)
    omega = symmetric_grid(np.pi * n / t, 0.02)
    bath = make_lorentzian_bath(45.0, 0.2, 1.0, omega=omega)
    gamma = gamma_matrix(qubit_mixture(0.25), -4 * qubit_mixture(0.25), basis2)
    p = score_spectral(system_spectrum(rot, t, omega), bath, gamma)
    scale = score_bounds(gamma, bath, t)[1]
    assert abs(p) <= 1e-3 * scale
    # the same trajectory does feel a bath sitting at its own frequencies
    near = make_lorentzian_bath(0.5, 0.2, 1.0, omega=omega)
    assert abs(score_spectral(system_spectrum(rot, t, omega), near, gamma)) > 1e-2 * scale


def test_gate_error_prefactor_and_sign():
    inst = _instance(5)
    e = gate_error(inst.sys, inst.bath, 2)
    direct = (2 / 3) * np.einsum('w,wab,wcb,wca->', inst.bath.weights, inst.sys.eps_t,
                                 inst.sys.eps_t.conj(), inst.bath.spectrum).real
    assert e == pytest.approx(direct, rel=1e-10)
    assert e > 0
    assert gate_error_timedomain(inst.rot, inst.corr, 2) == pytest.approx(e, rel=1e-6)
    assert gate_error(inst.sys, inst.bath.scaled(0.0), 2) == 0


def test_gate_error_rejects_non_psd():
    inst = _instance(6)
    with pytest.raises(ValidationError):
        gate_error(inst.sys, inst.bath.scaled(-1.0), 2)


def test_gate_error_matches_state_average(basis2):
    inst = _instance(7)
    # the fidelity score is linear in Γ; tabulate its response to each Γ entry
    resp = np.zeros((3, 3), complex)
    for k in range(3):
        for j in range(3):
            e = np.zeros((3, 3), complex)
            e[k, j] = 1
            f = inst.sys.eps_t @ e @ inst.sys.eps_t.conj().transpose(0, 2, 1)
            resp[k, j] = np.einsum('w,wab,wba->', inst.bath.weights, f, inst.bath.spectrum)
    rng = np.random.default_rng(8)
    total = 0.0
    for _ in range(10):
        g = haar_gamma_mc(basis2, 10_000, rng)
        total += np.sum(g * resp).real / 10
    assert -total == pytest.approx(gate_error(inst.sys, inst.bath, 2), rel=1e-2)


def test_bounds_for_quarter_mixture():
    inst = _instance(8)
    gamma = gamma_matrix(qubit_mixture(0.25), -4 * qubit_mixture(0.25), generate_basis(2))
    lo, hi = score_bounds(gamma, inst.bath, inst.t)
    s = inst.bath.sup_trace()
    # eigenvalues {3, -1, 0}
    assert hi == pytest.approx(3 * inst.t * s)
    assert lo == pytest.approx(-inst.t * s)
    p = score_spectral(inst.sys, inst.bath, gamma)
    assert ScoreReport(p, p, p, lo, hi).within_bounds()


def test_bounds_need_finite_spectrum():
    omega = np.linspace(-1, 1, 5)
    g = np.zeros((5, 3, 3), complex)
    g[2, 0, 0] = np.inf
    with pytest.raises(ValidationError):
        score_bounds(np.eye(3), BathModel(omega, g), 1.0)


def _noncommuting_gamma(rng, basis):
    rho = random_state(rng, 2)
    return gamma_matrix(rho, np.diag([1.0, -0.3]).astype(complex), basis)


def test_noncommuting_routes_agree(basis2):
    rng = np.random.default_rng(10)
    for seed in range(3):
        inst = _instance(20 + seed)
        g = _noncommuting_gamma(rng, basis2)
        assert np.abs(g - g.conj().T).max() > 1e-3
        pt = score_noncommuting(inst.rot, inst.corr, g, inst.t)
        ps = score_noncommuting_split(inst.rot, inst.corr, g)
        cs = causal_spectrum(inst.corr, inst.bath.omega)
        pw = score_noncommuting_spectral(inst.sys, cs, g)
        assert ps == pytest.approx(pt, rel=1e-10)
        assert pw == pytest.approx(pt, rel=1e-5)
        with pytest.raises(ValidationError):
            score_timedomain(inst.rot, inst.corr, g)


def test_noncommuting_reduces_to_commuting_score():
    inst = _instance(30)
    gamma = gamma_matrix(qubit_mixture(0.1), -4 * qubit_mixture(0.1), generate_basis(2))
    p = score_timedomain(inst.rot, inst.corr, gamma)
    assert score_noncommuting(inst.rot, inst.corr, gamma) == pytest.approx(p, rel=1e-8)


def test_split_with_hermitian_gamma_matches_commuting_score():
    inst = _instance(31)
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 3))
    herm = a + a.T
    # with Γ₋ = 0 the split formula carries no skew contribution
    p_split = score_noncommuting_split(inst.rot, inst.corr, herm)
    assert p_split == pytest.approx(score_timedomain(inst.rot, inst.corr, herm), rel=1e-8)


def test_causal_spectrum_real_part_recovers_bath():
    inst = _instance(32)
    cs = causal_spectrum(inst.corr, inst.bath.omega)
    herm = cs + cs.conj().transpose(0, 2, 1)
    scale = np.abs(inst.bath.spectrum).max()
    assert np.abs(herm - inst.bath.spectrum).max() <= 1e-3 * scale
    # the commuting score from 2·Re 𝒢 reproduces P
    gamma = gamma_matrix(qubit_mixture(0.25), -4 * qubit_mixture(0.25), generate_basis(2))
    p = score_spectral(inst.sys, inst.bath, gamma)
    p_causal = score_noncommuting_spectral(inst.sys, cs, gamma)
    assert p_causal == pytest.approx(p, rel=1e-5)


def test_time_domain_score_object():
    inst = _instance(40)
    gamma = gamma_matrix(qubit_mixture(0.25), -4 * qubit_mixture(0.25), generate_basis(2))
    obj = TimeDomainScore(gamma, inst.corr, generate_basis(2), inst.t, inst.n)
    assert obj(inst.traj) == pytest.approx(score_timedomain(inst.rot, inst.corr, gamma), rel=1e-12)
    neg = TimeDomainScore(gamma, inst.corr, generate_basis(2), inst.t, inst.n, sign=-1)
    assert neg(inst.traj) == pytest.approx(-obj(inst.traj), rel=1e-14)
    ordered = TimeDomainScore(gamma, inst.corr, generate_basis(2), inst.t, inst.n, ordered=True)
    assert ordered(inst.traj) == pytest.approx(obj(inst.traj), rel=1e-8)


@pytest.mark.parametrize('ordered', [False, True])
def test_fast_gradient_matches_fourth_order_oracle(ordered):
    inst = _instance(41, n=30)
    basis = generate_basis(2)
    rng = np.random.default_rng(1)
    gamma = _noncommuting_gamma(rng, basis) if ordered else gamma_matrix(
        qubit_mixture(0.25), -4 * qubit_mixture(0.25), basis)
    obj = TimeDomainScore(gamma, inst.corr, basis, inst.t, inst.n, ordered=ordered)
    fast = obj.fd_gradient(inst.traj, 1e-6)
    oracle = finite_diff_gradient(obj, inst.traj, 1e-3, order=4)
    assert not np.any(fast[0])
    scale = np.abs(oracle).max()
    assert np.abs(fast - oracle).max() <= 1e-4 * scale


def test_fast_gradient_respects_pinned_end():
    inst = _instance(42, n=20)
    basis = generate_basis(2)
    gamma = np.diag([1.0, 1.0, 0.0])
    obj = TimeDomainScore(gamma, inst.corr, basis, inst.t, inst.n)
    traj = inst.traj.__class__(inst.t, inst.traj.f, pin_end=True)
    g = obj.fd_gradient(traj)
    assert not np.any(g[0]) and not np.any(g[-1])


def test_averaged_gamma():
    np.testing.assert_allclose(averaged_gamma(2), -2 / 3 * np.eye(3))
    np.testing.assert_allclose(averaged_gamma(3), -3 / 4 * np.eye(8))
