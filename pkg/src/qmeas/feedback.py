"""Measurement-based feedback on a spin-1/2.

The spin components ``sx/2`` and ``sy/2`` are monitored with strengths
``Gamma_x = gamma1/4`` and ``Gamma_y = gamma2/4``. The measurement signals

    sbar_j dt = <s_j> dt + dxi_j / sqrt(Gamma_j)

drive the control Hamiltonian ``H_f dt = -i kappa_f cbar dt F + h.c.`` with
``cbar = (sbar_x - i sbar_y)/2``, applied without delay after each
measurement step.
"""
from dataclasses import dataclass

import numpy as np

from .continuous import ContinuousConfig, SMEStepper, run_ensemble, _propagate
from .errors import DimensionMismatchError, InvalidArgumentError
from .ode import step_count
from .operators import (LOWERING, PAULI_X, PAULI_Y, PAULI_Z, RAISING,
                        as_density, as_hermitian, as_operator, dagger, dissipator)

_PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)


@dataclass(frozen=True)
class FieldConfig:
    """Static field coefficients of ``Hs = wx sx + wy sy + wz sz``."""

    omega_x: float = 0.0
    omega_y: float = 0.0
    omega_z: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite((self.omega_x, self.omega_y, self.omega_z))):
            raise InvalidArgumentError("field coefficients must be finite")

    def hamiltonian(self):
        return self.omega_x * PAULI_X + self.omega_y * PAULI_Y + self.omega_z * PAULI_Z


@dataclass(frozen=True)
class SpinMeasurementConfig:
    Gamma_x: float
    Gamma_y: float

    def __post_init__(self):
        if not (self.Gamma_x > 0 and self.Gamma_y > 0):
            raise InvalidArgumentError("measurement strengths must be positive")

    @classmethod
    def from_continuous(cls, cfg):
        return cls(cfg.gamma1 / 4, cfg.gamma2 / 4)

    def to_continuous(self, dt, zeta=1.0):
        return ContinuousConfig.from_gammas(dt, 4 * self.Gamma_x, 4 * self.Gamma_y, zeta)


@dataclass(frozen=True)
class FeedbackConfig:
    """Feedback strength and control operator ``F = (i/kappa_f) sum alpha_j s_j``.

    Construct with :meth:`from_alphas`, :meth:`from_operator` or
    :meth:`lowering_adjoint`; the direct constructor checks that the stored
    ``alphas`` and ``operator`` agree.
    """

    kappa_f: float
    alphas: tuple
    operator: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.kappa_f) and self.kappa_f >= 0):
            raise InvalidArgumentError("kappa_f must be non-negative")
        op = as_operator(self.operator)
        if op.shape != (2, 2):
            raise DimensionMismatchError("feedback operator must be 2x2")
        if self.kappa_f > 0:
            expected = _operator_from_alphas(self.kappa_f, self.alphas)
            if np.max(np.abs(expected - op)) > 1e-12 * max(1.0, np.abs(op).max()):
                raise InvalidArgumentError("alphas and F are inconsistent")

    @classmethod
    def from_alphas(cls, kappa_f, alphas):
        if kappa_f <= 0:
            raise InvalidArgumentError("kappa_f must be positive to define F from alphas")
        alphas = tuple(complex(a) for a in alphas)
        return cls(kappa_f, alphas, _operator_from_alphas(kappa_f, alphas))

    @classmethod
    def from_operator(cls, kappa_f, operator):
        op = as_operator(operator)
        if abs(np.trace(op)) > 1e-12:
            raise InvalidArgumentError("F must be a traceless combination of Pauli matrices")
        alphas = tuple(complex(-0.5j * kappa_f * np.trace(op @ p)) for p in _PAULIS)
        return cls(kappa_f, alphas, op)

    @classmethod
    def lowering_adjoint(cls, kappa_f):
        """The preset ``F = c^+`` (alpha = (-i kappa/2, kappa/2, 0))."""
        return cls(kappa_f, (-0.5j * kappa_f, 0.5 * kappa_f, 0j), RAISING.copy())


def _operator_from_alphas(kappa_f, alphas):
    if len(alphas) != 3:
        raise InvalidArgumentError("need three alpha coefficients")
    return (1j / kappa_f) * sum(a * p for a, p in zip(alphas, _PAULIS))


@dataclass(frozen=True)
class RateConstants:
    """Feedback-dressed dissipation rates for ``F = c^+``."""

    k1: float
    k2: float
    k3: float

    @property
    def total(self):
        """``k1 + k2 + 2 k3``, the decay rate of ``z``."""
        return self.k1 + self.k2 + 2 * self.k3

    def eta(self, field):
        k12 = self.k1 + self.k2
        k124 = k12 + 4 * self.k3
        return (k12 * self.total * k124 + 8 * field.omega_x**2 * k12
                + 8 * field.omega_y**2 * k124 + 16 * field.omega_z**2 * self.total)

    def discriminant(self, omega_z):
        return 4 * self.k3**2 - 16 * omega_z**2

    def mu(self, omega_z):
        """Roots ``(mu_plus, mu_minus)`` of the x-y characteristic equation.

        Complex when the discriminant is negative.
        """
        root = np.sqrt(complex(self.discriminant(omega_z)))
        mp = 0.5 * (self.total + root)
        mm = 0.5 * (self.total - root)
        if root.imag == 0:
            return mp.real, mm.real
        return mp, mm


def rate_constants(Gamma_x, Gamma_y, kappa_f):
    if not (np.all(np.asarray(Gamma_x) > 0) and np.all(np.asarray(Gamma_y) > 0)
            and kappa_f >= 0):
        raise InvalidArgumentError("need Gamma_x, Gamma_y > 0 and kappa_f >= 0")
    k2f = kappa_f**2
    k1 = Gamma_y / 2 + k2f / (2 * Gamma_x) + kappa_f
    k2 = k1 - 2 * kappa_f
    k3 = (Gamma_x - Gamma_y) / 4 - k2f / (4 * Gamma_x) + k2f / (4 * Gamma_y)
    return RateConstants(k1, k2, k3)


def signals_from_increments(expect_x, expect_y, dxi_x, dxi_y, Gamma_x, Gamma_y, dt):
    """Measurement signals ``(sbar_x, sbar_y)`` from the Ito increments."""
    sx = expect_x + dxi_x / (np.sqrt(Gamma_x) * dt)
    sy = expect_y + dxi_y / (np.sqrt(Gamma_y) * dt)
    return sx, sy


def signals_from_record(x1, x2, cfg):
    """Signals from raw pointer readouts of ``sx/2`` and ``sy/2``.

    With ``x_i = s_i <s_j>/2 + lambda_i dxi_i / dt`` the signal is exactly
    ``sbar = 2 x_i / s_i``.
    """
    return 2 * np.asarray(x1) / cfg.s1, 2 * np.asarray(x2) / cfg.s2


def feedback_hamiltonian(sbar_x, sbar_y, fb):
    """``H_f = -i kappa_f cbar F + h.c.``; batched over signal arrays."""
    cbar = 0.5 * (np.asarray(sbar_x) - 1j * np.asarray(sbar_y))
    term = -1j * fb.kappa_f * cbar[..., None, None] * fb.operator
    return term + dagger(term)


def _qubit_propagator(g):
    """``exp(-i G)`` for a batch of Hermitian 2x2 generators, in closed form.

    Exact identity for ``G = 0``.
    """
    g0 = 0.5 * np.trace(g, axis1=-2, axis2=-1).real
    gx = g[..., 0, 1].real
    gy = g[..., 1, 0].imag
    gz = 0.5 * (g[..., 0, 0] - g[..., 1, 1]).real
    norm = np.sqrt(gx**2 + gy**2 + gz**2)
    c = np.cos(norm)
    s = np.sinc(norm / np.pi)  # sin(norm)/norm
    u = np.empty(g.shape, dtype=complex)
    u[..., 0, 0] = c - 1j * s * gz
    u[..., 1, 1] = c + 1j * s * gz
    u[..., 0, 1] = -1j * s * (gx - 1j * gy)
    u[..., 1, 0] = -1j * s * (gx + 1j * gy)
    phase = np.exp(-1j * g0)
    if np.ndim(phase):
        u *= phase[..., None, None]
    else:
        u *= phase
    return u


def gme_rhs(rho, hs, Gamma_x, Gamma_y, fb):
    """Ensemble-averaged master equation under measurement and feedback."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (2, 2):
        raise InvalidArgumentError("gme_rhs is defined for a spin-1/2 only")
    f = fb.operator
    fd = dagger(f)
    c, cd = LOWERING, RAISING
    k = fb.kappa_f
    out = -1j * (hs @ rho - rho @ hs)
    out = out + (Gamma_y / 2) * (dissipator(c, rho) + dissipator(cd, rho))
    out = out + ((Gamma_x - Gamma_y) / 4) * dissipator(c + cd, rho)
    if k:
        out = out + (k**2 / (4 * Gamma_x)) * dissipator(1j * (f - fd), rho)
        out = out + (k**2 / (4 * Gamma_y)) * dissipator(f + fd, rho)

        def comm(x, y):
            return x @ y - y @ x

        out = out - (k / 2) * (comm(f, c @ rho) - comm(fd, rho @ cd)
                               + comm(f, rho @ c) - comm(fd, cd @ rho))
    return out


def me_rhs(rho, hs, rates):
    """Lindblad form ``-i[H,rho] + k1 D[c] + k2 D[c^+] + k3 D[c + c^+]``."""
    rho = np.asarray(rho, dtype=complex)
    c, cd = LOWERING, RAISING
    return (-1j * (hs @ rho - rho @ hs) + rates.k1 * dissipator(c, rho)
            + rates.k2 * dissipator(cd, rho) + rates.k3 * dissipator(c + cd, rho))


class _FeedbackHook:
    def __init__(self, meas, fb, dt):
        self.meas = meas
        self.fb = fb
        self.dt = dt

    def __call__(self, rho, ev, dxi):
        if self.fb.kappa_f == 0:
            return rho
        # ev holds <sx/2>, <sy/2>
        sx, sy = signals_from_increments(2 * ev[:, 0], 2 * ev[:, 1], dxi[:, 0], dxi[:, 1],
                                         self.meas.Gamma_x, self.meas.Gamma_y, self.dt)
        u = _qubit_propagator(feedback_hamiltonian(sx, sy, self.fb) * self.dt)
        return u @ rho @ dagger(u)


def feedback_stepper(hs, meas, fb, dt, scheme="kraus"):
    """:class:`SMEStepper` for ``A = sx/2``, ``B = sy/2`` with feedback attached."""
    hs = as_hermitian(hs)
    return SMEStepper(hs, 0.5 * PAULI_X, 0.5 * PAULI_Y, 4 * meas.Gamma_x, 4 * meas.Gamma_y,
                      dt, scheme, feedback=_FeedbackHook(meas, fb, dt))


def run_feedback_trajectory(rho0, hs, meas, fb, dt, t_final, seed, sample_every=1,
                            scheme="kraus"):
    """One feedback-controlled trajectory.

    Returns ``(times, states, signals)`` where ``signals`` has columns
    ``(sbar_x, sbar_y)`` per step.
    """
    rho0 = as_density(rho0)
    n_steps = step_count(t_final, dt)
    stepper = feedback_stepper(hs, meas, fb, dt, scheme)
    noise = seed.increments(n_steps, dt)
    states, evs = _propagate(rho0, stepper, noise[None], sample_every)
    sx, sy = signals_from_increments(2 * evs[:, 0, 0], 2 * evs[:, 0, 1], noise[:, 0],
                                     noise[:, 1], meas.Gamma_x, meas.Gamma_y, dt)
    times = dt * sample_every * np.arange(states.shape[0])
    return times, states[:, 0], np.column_stack([sx, sy])


def feedback_ensemble_average(rho0, hs, meas, fb, dt, t_final, n_traj, master_seed,
                              sample_every=1, threads=None, scheme="kraus"):
    stepper = feedback_stepper(hs, meas, fb, dt, scheme)
    return run_ensemble(rho0, stepper, t_final, n_traj, master_seed,
                        sample_every=sample_every, threads=threads)
