import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmeas.errors import DimensionMismatchError, InvalidArgumentError, StepSizeError
from qmeas.operators import (IDENTITY2, LOWERING, PAULI_X, PAULI_Y, PAULI_Z,
                             angular_momentum, as_density, commutator, dissipator,
                             hermitian_part, propagator, random_density,
                             random_hermitian, spin_coherent_state, symmetrize)


def test_spin_half_matches_pauli():
    lx, ly, lz = angular_momentum(0.5)
    np.testing.assert_array_equal(lx, PAULI_X / 2)
    np.testing.assert_array_equal(ly, PAULI_Y / 2)
    np.testing.assert_array_equal(lz, PAULI_Z / 2)
    np.testing.assert_allclose(lx @ lx + ly @ ly + lz @ lz, 0.75 * IDENTITY2, atol=1e-15)


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2])
def test_angular_momentum_algebra(j):
    lx, ly, lz = angular_momentum(j)
    for a, b, c in ((lx, ly, lz), (ly, lz, lx), (lz, lx, ly)):
        assert np.max(np.abs(commutator(a, b) - 1j * c)) < 1e-13
    casimir = lx @ lx + ly @ ly + lz @ lz
    np.testing.assert_allclose(casimir, j * (j + 1) * np.eye(int(2 * j + 1)), atol=1e-12)


@pytest.mark.parametrize("j", [0, -0.5, 0.3, 1.25])
def test_angular_momentum_rejects_non_half_integer(j):
    with pytest.raises(InvalidArgumentError):
        angular_momentum(j)


def test_commutator_examples():
    np.testing.assert_allclose(commutator(PAULI_X, PAULI_Y), 2j * PAULI_Z)
    np.testing.assert_array_equal(commutator(PAULI_X, PAULI_X), np.zeros((2, 2)))
    a, b = PAULI_X / 2, PAULI_Y / 2
    np.testing.assert_allclose(commutator(b, commutator(b, a)), a, atol=1e-15)
    with pytest.raises(DimensionMismatchError):
        commutator(PAULI_X, np.eye(3))


def test_dissipator_examples():
    excited = np.diag([1.0, 0.0]).astype(complex)
    np.testing.assert_array_equal(dissipator(IDENTITY2, excited), np.zeros((2, 2)))
    np.testing.assert_allclose(dissipator(LOWERING, excited), np.diag([-1.0, 1.0]))


def test_dissipator_traceless_random(rng):
    for _ in range(50):
        d = int(rng.integers(2, 6))
        o = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        out = dissipator(o, random_density(d, rng))
        assert abs(np.trace(out)) < 1e-12


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_dissipator_hermitian_traceless_fuzz(seed, d):
    r = np.random.default_rng(seed)
    o = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
    out = dissipator(o, random_density(d, r))
    assert abs(np.trace(out)) < 1e-11
    assert np.max(np.abs(out - out.conj().T)) < 1e-12


def test_hermitian_part():
    np.testing.assert_array_equal(hermitian_part(PAULI_Z), PAULI_Z)
    np.testing.assert_array_equal(hermitian_part(1j * PAULI_Z), np.zeros((2, 2)))
    np.testing.assert_allclose(hermitian_part(LOWERING), PAULI_X / 2)


def test_propagator_examples(rng):
    h = random_hermitian(3, rng)
    np.testing.assert_allclose(propagator(h, 0.0), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(propagator(PAULI_Z, np.pi / 2),
                               np.diag([np.exp(-0.5j * np.pi), np.exp(0.5j * np.pi)]),
                               atol=1e-15)
    u = propagator(h, 0.3)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(u @ propagator(h, -0.3), np.eye(3), atol=1e-12)


def test_propagator_matches_power_series(rng):
    # independent oracle: Taylor series of exp(-iHt) to convergence
    h = random_hermitian(4, rng)
    t = 0.3
    g = -1j * t * h
    term = np.eye(4, dtype=complex)
    total = term.copy()
    for k in range(1, 60):
        term = term @ g / k
        total += term
    np.testing.assert_allclose(propagator(h, t), total, atol=1e-12)


def test_propagator_batched(rng):
    hs = np.stack([random_hermitian(2, rng) for _ in range(5)])
    batch = propagator(hs, 0.7)
    for h, u in zip(hs, batch):
        np.testing.assert_allclose(u, propagator(h, 0.7), atol=1e-14)


def test_symmetrize_guards_large_drift():
    rho = np.array([[0.5, 1e-10], [0.0, 0.5]], dtype=complex)
    out = symmetrize(rho)
    np.testing.assert_allclose(out, out.conj().T)
    with pytest.raises(StepSizeError):
        symmetrize(np.array([[0.5, 1e-6], [0.0, 0.5]], dtype=complex))


def test_density_validation(rng):
    as_density(random_density(3, rng))
    with pytest.raises(InvalidArgumentError):
        as_density(np.diag([1.2, -0.2]))
    with pytest.raises(InvalidArgumentError):
        as_density(np.diag([0.6, 0.6]))
    with pytest.raises(InvalidArgumentError):
        as_density(np.eye(65) / 65)


def test_spin_coherent_state():
    lx, _, _ = angular_momentum(1)
    rho = spin_coherent_state(1, [1, 0, 0])
    assert np.trace(lx @ rho).real == pytest.approx(1.0)
    np.testing.assert_allclose(rho @ rho, rho, atol=1e-12)
