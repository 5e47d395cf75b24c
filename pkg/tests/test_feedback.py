import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmeas.continuous import TrajectorySeed, lindblad_rhs, run_trajectory
from qmeas.errors import InvalidArgumentError
from qmeas.feedback import (FeedbackConfig, FieldConfig, RateConstants, SpinMeasurementConfig,
                            feedback_ensemble_average, feedback_hamiltonian, gme_rhs, me_rhs,
                            rate_constants, run_feedback_trajectory, signals_from_increments,
                            signals_from_record)
from qmeas.ode import rk4
from qmeas.operators import (LOWERING, PAULI_X, PAULI_Y, PAULI_Z, RAISING, matrix_units,
                             random_density, random_hermitian, superoperator_matrix)

SX, SY = PAULI_X / 2, PAULI_Y / 2


def test_field_hamiltonian():
    h = FieldConfig(0.1, -0.2, 0.3).hamiltonian()
    np.testing.assert_allclose(h, 0.1 * PAULI_X - 0.2 * PAULI_Y + 0.3 * PAULI_Z)
    with pytest.raises(InvalidArgumentError):
        FieldConfig(np.inf, 0, 0)


def test_measurement_config_roundtrip():
    meas = SpinMeasurementConfig(0.5, 0.25)
    cfg = meas.to_continuous(1e-3)
    assert cfg.gamma1 == pytest.approx(2.0)
    assert SpinMeasurementConfig.from_continuous(cfg) == meas
    # Gamma_x = s1 zeta / 2
    assert meas.Gamma_x == pytest.approx(cfg.s1 * cfg.zeta / 2)


def test_feedback_config_presets():
    fb = FeedbackConfig.lowering_adjoint(0.8)
    np.testing.assert_allclose(fb.operator, RAISING)
    np.testing.assert_allclose(fb.alphas, (-0.4j, 0.4, 0))
    same = FeedbackConfig.from_alphas(0.8, fb.alphas)
    np.testing.assert_allclose(same.operator, RAISING, atol=1e-15)
    again = FeedbackConfig.from_operator(0.8, RAISING)
    np.testing.assert_allclose(again.alphas, fb.alphas, atol=1e-15)
    with pytest.raises(InvalidArgumentError):
        FeedbackConfig(0.8, (0, 0, 1), RAISING)


def test_rate_constant_identities(rng):
    for _ in range(50):
        gx, gy, k = np.exp(rng.normal(size=3))
        r = rate_constants(gx, gy, k)
        assert r.k1 - r.k2 == pytest.approx(2 * k, rel=1e-12)
        assert r.k1 + r.k2 == pytest.approx(gy + k**2 / gx, rel=1e-12)
        assert r.k1 > 0
        assert r.total == pytest.approx(0.5 * (gx + gy + k**2 / gx + k**2 / gy), rel=1e-12)
    r = rate_constants(2.0, 2.0, 1.0)
    assert (r.k1, r.k2, r.k3) == (2.25, 0.25, 0.0)
    assert r.discriminant(1.0) == -16.0
    mp, mm = r.mu(1.0)
    assert mp == pytest.approx(1.25 + 2j) and mm == pytest.approx(1.25 - 2j)
    assert rate_constants(1.0, 1.0, 1.0) == RateConstants(2.0, 0.0, 0.0)


def test_signals(rng):
    sx, sy = signals_from_increments(0.3, -0.2, 0.0, 0.0, 0.5, 0.5, 1e-3)
    assert (sx, sy) == (0.3, -0.2)
    n, dt, gx = 100_000, 1e-3, 0.5
    dxi = TrajectorySeed(3, 0).increments(n, dt)
    sx, _ = signals_from_increments(0.3, 0.0, dxi[:, 0], dxi[:, 1], gx, 0.7, dt)
    assert abs(sx.mean() - 0.3) < 3 / np.sqrt(gx * n * dt)
    assert np.var(sx * dt) == pytest.approx(dt / gx, rel=0.03)


def test_signals_from_record_agree(rng):
    meas = SpinMeasurementConfig(0.5, 0.3)
    cfg = meas.to_continuous(1e-3)
    rho0 = random_density(2, rng)
    traj = run_trajectory(rho0, PAULI_Z, SX, SY, cfg, 0.2, TrajectorySeed(4, 0))
    ev = np.stack([np.einsum("ij,nji->n", p, traj.states[:-1]).real for p in (PAULI_X, PAULI_Y)])
    ref = signals_from_increments(ev[0], ev[1], traj.increments[:, 0], traj.increments[:, 1],
                                  meas.Gamma_x, meas.Gamma_y, cfg.dt)
    got = signals_from_record(traj.record.x1, traj.record.x2, cfg)
    np.testing.assert_allclose(got[0], ref[0], rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(got[1], ref[1], rtol=1e-10, atol=1e-10)


def test_feedback_hamiltonian_examples(rng):
    fb = FeedbackConfig.lowering_adjoint(0.6)
    h = feedback_hamiltonian(1.0, 0.0, fb)
    # -i (k/2) c^+ + i (k/2) c = (k/2) sy for this operator ordering
    np.testing.assert_allclose(h, -0.5j * 0.6 * (RAISING - LOWERING), atol=1e-15)
    np.testing.assert_allclose(h, 0.3 * PAULI_Y, atol=1e-15)
    np.testing.assert_array_equal(feedback_hamiltonian(0.0, 0.0, fb), np.zeros((2, 2)))
    sx, sy = rng.normal(size=(2, 50)) * 30
    hs = feedback_hamiltonian(sx, sy, FeedbackConfig.from_alphas(1.3, rng.normal(size=3) + 1j))
    assert np.max(np.abs(hs - hs.conj().transpose(0, 2, 1))) < 1e-14


def superop(func):
    return superoperator_matrix(func, 2)


def test_gme_reduces_without_feedback(rng):
    hs = random_hermitian(2, rng)
    gx, gy = 0.7, 1.9
    fb = FeedbackConfig(0.0, (0, 0, 0), RAISING)
    lg = superop(lambda r: gme_rhs(r, hs, gx, gy, fb))
    ll = superop(lambda r: lindblad_rhs(r, hs, SX, SY, 4 * gx, 4 * gy))
    np.testing.assert_allclose(lg, ll, atol=1e-13)


def test_gme_equals_me_for_raising(rng):
    for _ in range(25):
        gx, gy, k = np.exp(rng.uniform(-2, 2, 3))
        hs = random_hermitian(2, rng)
        fb = FeedbackConfig.lowering_adjoint(k)
        rates = rate_constants(gx, gy, k)
        for unit in matrix_units(2):
            np.testing.assert_allclose(gme_rhs(unit, hs, gx, gy, fb), me_rhs(unit, hs, rates),
                                       atol=1e-12)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gme_trace_and_hermiticity_fuzz(seed):
    r = np.random.default_rng(seed)
    gx, gy, k = np.exp(r.uniform(-2, 2, 3))
    fb = FeedbackConfig.from_alphas(k, r.normal(size=3) + 1j * r.normal(size=3))
    out = gme_rhs(random_density(2, r), random_hermitian(2, r), gx, gy, fb)
    assert abs(np.trace(out)) < 1e-10 * max(1.0, np.abs(out).max())
    assert np.max(np.abs(out - out.conj().T)) < 1e-10 * max(1.0, np.abs(out).max())


def test_gme_rejects_non_qubit():
    with pytest.raises(InvalidArgumentError):
        gme_rhs(np.eye(3) / 3, np.eye(3), 1.0, 1.0, FeedbackConfig.lowering_adjoint(1.0))


def test_me_rhs_examples():
    excited = np.diag([1.0, 0.0]).astype(complex)
    out = me_rhs(excited, np.zeros((2, 2)), RateConstants(1.5, 0.0, 0.0))
    np.testing.assert_allclose(out, np.diag([-1.5, 1.5]))


def test_me_steady_state_ground():
    ground = np.diag([0.0, 1.0]).astype(complex)
    out = me_rhs(ground, PAULI_Z, rate_constants(1.0, 1.0, 1.0))
    np.testing.assert_allclose(out, 0, atol=1e-15)


def test_feedback_off_matches_continuous(rng):
    rho0 = random_density(2, rng)
    meas = SpinMeasurementConfig(0.5, 0.5)
    fb = FeedbackConfig(0.0, (0, 0, 0), RAISING)
    _, states, _ = run_feedback_trajectory(rho0, PAULI_Z, meas, fb, 1e-3, 0.3,
                                           TrajectorySeed(12, 0))
    traj = run_trajectory(rho0, PAULI_Z, SX, SY, meas.to_continuous(1e-3), 0.3,
                          TrajectorySeed(12, 0))
    np.testing.assert_array_equal(states, traj.states)


def test_feedback_trajectory_deterministic(rng):
    rho0 = random_density(2, rng)
    meas = SpinMeasurementConfig(0.5, 0.5)
    fb = FeedbackConfig.lowering_adjoint(0.5)
    a = run_feedback_trajectory(rho0, PAULI_Z, meas, fb, 1e-3, 0.3, TrajectorySeed(1, 2))
    b = run_feedback_trajectory(rho0, PAULI_Z, meas, fb, 1e-3, 0.3, TrajectorySeed(1, 2))
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_array_equal(a[2], b[2])
    assert a[2].shape == (300, 2)
    assert np.min(np.linalg.eigvalsh(a[1])) > -1e-12


def test_feedback_ensemble_small(rng):
    # short, cheap variant of the large ensemble comparison
    rho0 = random_density(2, rng)
    meas = SpinMeasurementConfig(0.5, 0.5)
    fb = FeedbackConfig.lowering_adjoint(0.5)
    ens = feedback_ensemble_average(rho0, PAULI_Z, meas, fb, 1e-3, 0.5, 500, 3, sample_every=50)
    _, ref = rk4(lambda r: me_rhs(r, PAULI_Z, rate_constants(0.5, 0.5, 0.5)), rho0, 1e-3, 500, 50)
    bl = np.stack([np.einsum("ij,tji->t", p, ref).real for p in (PAULI_X, PAULI_Y, PAULI_Z)], -1)
    z = np.abs(ens.obs_mean[1:] - bl[1:]) / ens.obs_stderr[1:]
    assert np.max(np.abs(ens.obs_mean - bl)) < 0.05
    assert np.mean(z) < 2.0
    assert ens.n_traj == 500
