"""Small dense operator algebra for finite-dimensional systems.

Operators are plain complex ``numpy`` arrays of shape ``(d, d)``. Most
functions also accept a stack of operators with leading batch axes,
``(..., d, d)``, which is how the trajectory code advances many
density matrices at once.

Units follow the convention hbar = 1.
"""
from fractions import Fraction

import numpy as np

from .errors import (DimensionMismatchError, InvalidArgumentError,
                     StepSizeError)

MAX_DIM = 64

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
POSITIVITY_ATOL = 1e-8
REPAIR_LIMIT = 1e-8

IDENTITY2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# c = (sx - i sy)/2 maps |e> = (1, 0) to |g> = (0, 1)
LOWERING = 0.5 * (PAULI_X - 1j * PAULI_Y)
RAISING = LOWERING.conj().T


def dagger(op):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(op, -1, -2))


def _square(op, name="operator"):
    op = np.asarray(op, dtype=complex)
    if op.ndim < 2 or op.shape[-1] != op.shape[-2]:
        raise InvalidArgumentError(f"{name} must be square, got shape {op.shape}")
    if op.shape[-1] > MAX_DIM:
        raise InvalidArgumentError(
            f"{name} dimension {op.shape[-1]} exceeds cap of {MAX_DIM}")
    if not np.all(np.isfinite(op)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return op


def _same_dim(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(
            f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def as_operator(op):
    """Validate a general square operator and return it as a complex array."""
    return _square(op)


def as_hermitian(op, atol=HERMITIAN_ATOL):
    """Validate that ``op`` is Hermitian to ``atol`` elementwise."""
    op = _square(op, "Hermitian operator")
    if np.max(np.abs(op - dagger(op)), initial=0.0) > atol:
        raise InvalidArgumentError("operator is not Hermitian")
    return op


def as_density(rho):
    """Validate a density matrix: Hermitian, unit trace, positive semidefinite."""
    rho = as_hermitian(rho)
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1.0), initial=0.0) > TRACE_ATOL:
        raise InvalidArgumentError(f"density matrix trace {tr} != 1")
    if np.min(np.linalg.eigvalsh(rho), initial=np.inf) < -POSITIVITY_ATOL:
        raise InvalidArgumentError("density matrix is not positive semidefinite")
    return rho


def angular_momentum(j):
    """Spin-``j`` angular momentum matrices ``(Lx, Ly, Lz)``.

    Basis ordered by descending magnetic quantum number m = j, j-1, ..., -j,
    so for j = 1/2 the result is exactly (sx/2, sy/2, sz/2).
    """
    two_j = Fraction(j).limit_denominator(1000) * 2
    if two_j.denominator != 1 or two_j < 1 or abs(float(two_j) - 2 * float(j)) > 1e-12:
        raise InvalidArgumentError(f"j must be a positive half-integer, got {j}")
    jj = float(two_j) / 2
    m = jj - np.arange(int(two_j) + 1)
    # <m+1|L+|m> = sqrt(j(j+1) - m(m+1)), placed on the superdiagonal
    raise_elems = np.sqrt(jj * (jj + 1) - m[1:] * (m[1:] + 1))
    lplus = np.diag(raise_elems, k=1).astype(complex)
    lminus = lplus.conj().T
    lx = 0.5 * (lplus + lminus)
    ly = -0.5j * (lplus - lminus)
    lz = np.diag(m).astype(complex)
    return lx, ly, lz


def commutator(a, b):
    a = _square(a)
    b = _square(b)
    _same_dim(a, b)
    return a @ b - b @ a


def anticommutator(a, b):
    a = _square(a)
    b = _square(b)
    _same_dim(a, b)
    return a @ b + b @ a


def double_commutator(a, rho):
    """``[a, [a, rho]]`` for Hermitian ``a``, expanded to save a product."""
    a2 = a @ a
    return a2 @ rho + rho @ a2 - 2 * (a @ rho @ a)


def dissipator(op, rho):
    """Lindblad dissipator ``D[O] rho = O rho O^+ - (O^+ O rho + rho O^+ O)/2``."""
    op = _square(op)
    rho = _square(rho, "rho")
    _same_dim(op, rho)
    od = dagger(op)
    odo = od @ op
    return op @ rho @ od - 0.5 * (odo @ rho + rho @ odo)


def hermitian_part(op):
    """``(O + O^+)/2``."""
    op = _square(op)
    return 0.5 * (op + dagger(op))


def expectation(op, rho):
    """Real part of ``Tr(op rho)``; broadcasts over batch axes of ``rho``."""
    return np.einsum("ij,...ji->...", op, rho).real


def propagator(h, t=1.0):
    """Unitary ``exp(-i H t)`` from the Hermitian eigendecomposition of ``H``.

    ``h`` may carry leading batch axes; ``t`` must broadcast against them.
    """
    h = as_hermitian(h, atol=1e-10)
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise InvalidArgumentError("propagation time must be finite")
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * w * t[..., None])
    return (v * phases[..., None, :]) @ dagger(v)


def symmetrize(rho, limit=REPAIR_LIMIT):
    """Project ``rho`` back onto Hermitian matrices.

    Raises :class:`StepSizeError` when the anti-Hermitian part exceeds
    ``limit``; a drift that large signals an integration problem rather than
    roundoff.
    """
    asym = np.max(np.abs(rho - dagger(rho)), initial=0.0)
    if asym > limit:
        raise StepSizeError(f"Hermiticity drift {asym:.3e} exceeds {limit:.1e}")
    return 0.5 * (rho + dagger(rho))


def trace_norm(x):
    """Sum of singular values of ``x``."""
    return float(np.sum(np.linalg.svd(np.asarray(x), compute_uv=False)))


def superoperator_matrix(func, dim):
    """Matrix of a linear map on ``dim x dim`` matrices (column-stacking)."""
    cols = []
    for k in range(dim * dim):
        basis = np.zeros(dim * dim, dtype=complex)
        basis[k] = 1.0
        cols.append(np.asarray(func(basis.reshape(dim, dim, order="F"))).reshape(-1, order="F"))
    return np.stack(cols, axis=1)


def matrix_units(dim):
    """The ``dim**2`` matrix units |i><j|, a complete operator basis."""
    units = np.zeros((dim * dim, dim, dim), dtype=complex)
    for k in range(dim * dim):
        units[k, k // dim, k % dim] = 1.0
    return units


def random_hermitian(dim, rng, scale=1.0):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (x + x.conj().T)


def random_density(dim, rng, rank=None):
    """Random density matrix from a Ginibre ensemble of the given rank."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def spin_coherent_state(j, direction):
    """Pure state of spin ``j`` maximally polarized along ``direction``."""
    n = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise InvalidArgumentError("direction must be nonzero")
    n = n / norm
    lx, ly, lz = angular_momentum(j)
    w, v = np.linalg.eigh(n[0] * lx + n[1] * ly + n[2] * lz)
    psi = v[:, -1]
    return np.outer(psi, psi.conj())
