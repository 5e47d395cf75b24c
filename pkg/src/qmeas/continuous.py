"""Continuous simultaneous measurement of two observables.

Unconditioned (ensemble) dynamics follow the Lindblad equation

    d rho/dt = -i[H, rho] - (g1/8)[A,[A,rho]] - (g2/8)[B,[B,rho]]

and single realizations follow the conditioned stochastic master
equation driven by independent Ito increments ``dxi1, dxi2``. Raw pointer
readouts are ``x_i = s_i <O_i> + lambda_i dxi_i / dt``.

Noise streams are reproducible per ``(master_seed, trajectory_index)``:
each trajectory owns a counter-based Philox generator and draws its
increments in step order, so results do not depend on batching or on the
number of worker threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os

import numpy as np

from . import arthurs_kelly as ak
from .errors import DimensionMismatchError, InvalidArgumentError, StepSizeError
from .ode import rk4, step_count
from .operators import (angular_momentum, as_density, as_hermitian, dagger,
                        double_commutator, expectation, propagator, symmetrize,
                        trace_norm)

SCHEMES = ("kraus", "euler")
NEGATIVITY_LIMIT = -1e-6
TRACE_DRIFT_LIMIT = 1e-9
DEFAULT_BATCH = 256
THREADS_ENV = "QMEAS_THREADS"


@dataclass(frozen=True)
class ContinuousConfig:
    """Step ``dt``, continuum constant ``zeta = 1/(dt sigma^2)`` and couplings."""

    dt: float
    zeta: float
    s1: float
    s2: float

    def __post_init__(self):
        for name in ("dt", "zeta"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        for name in ("s1", "s2"):
            if not getattr(self, name) >= 0:
                raise InvalidArgumentError(f"{name} must be non-negative")

    @classmethod
    def from_gammas(cls, dt, gamma1, gamma2, zeta=1.0):
        return cls(dt, zeta, gamma1 / (2 * zeta), gamma2 / (2 * zeta))

    @property
    def gamma1(self):
        return 2 * self.s1 * self.zeta

    @property
    def gamma2(self):
        return 2 * self.s2 * self.zeta

    @property
    def lambda1(self):
        return np.sqrt(self.s1 / (2 * self.zeta))

    @property
    def lambda2(self):
        return np.sqrt(self.s2 / (2 * self.zeta))

    @property
    def sigma2(self):
        return 1.0 / (self.zeta * self.dt)


@dataclass(frozen=True)
class MeasurementRecord:
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == len(self.x1) == len(self.x2)):
            raise InvalidArgumentError("record columns must have equal length")

    def to_csv(self, path, names=("t", "x1", "x2")):
        write_columns_csv(path, names, (self.times, self.x1, self.x2))

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def write_columns_csv(path, names, columns):
    """Write equal-length columns as CSV with 17 significant digits, LF endings."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


@dataclass(frozen=True)
class TrajectorySeed:
    master_seed: int
    trajectory_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise InvalidArgumentError("master_seed must be an unsigned 64-bit integer")
        if self.trajectory_index < 0:
            raise InvalidArgumentError("trajectory_index must be non-negative")

    def generator(self):
        ss = np.random.SeedSequence([self.master_seed, self.trajectory_index])
        return np.random.Generator(np.random.Philox(ss))

    def increments(self, n_steps, dt, channels=2):
        """Ito increments of variance ``dt``, shape ``(n_steps, channels)``."""
        return self.generator().standard_normal((n_steps, channels)) * np.sqrt(dt)


def lindblad_rhs(rho, hs, a, b, gamma1, gamma2):
    """Unconditioned generator applied to ``rho``."""
    if gamma1 < 0 or gamma2 < 0:
        raise InvalidArgumentError("measurement strengths must be non-negative")
    rho = np.asarray(rho, dtype=complex)
    for op in (hs, a, b):
        if np.shape(op)[-1] != rho.shape[-1]:
            raise DimensionMismatchError("operator and state dimensions differ")
    return (-1j * (hs @ rho - rho @ hs)
            - (gamma1 / 8) * double_commutator(a, rho)
            - (gamma2 / 8) * double_commutator(b, rho))


def _max_rate(hs, a, b, gamma1, gamma2):
    def nrm(x):
        return np.linalg.norm(x, ord=2)
    return 2 * nrm(hs) + 0.5 * (gamma1 * nrm(a) ** 2 + gamma2 * nrm(b) ** 2)


def integrate_unconditioned(rho0, hs, a, b, gammas, t_final, dt_ode=None,
                            sample_dt=None):
    """RK4 solution of the unconditioned Lindblad equation.

    Returns ``(times, states)``. States are sampled every ``sample_dt``
    (default: every ODE step). When ``dt_ode`` is omitted it is
    ``min(1e-3, 1e-3 / max_rate)``, shrunk further so that it divides
    ``sample_dt``.
    """
    rho0 = as_density(rho0)
    hs = as_hermitian(hs)
    a, b = as_hermitian(a), as_hermitian(b)
    g1, g2 = gammas
    auto = dt_ode is None
    if auto:
        dt_ode = min(1e-3, 1e-3 / max(_max_rate(hs, a, b, g1, g2), 1e-300))
    every = 1
    if sample_dt is not None:
        every = int(np.ceil(sample_dt / dt_ode - 1e-9))
        dt_ode = sample_dt / every
    elif auto:
        dt_ode = t_final / int(np.ceil(t_final / dt_ode - 1e-9))
    n = step_count(t_final, dt_ode)
    times, states = rk4(lambda r: lindblad_rhs(r, hs, a, b, g1, g2), rho0, dt_ode, n, every)
    _check_states(states)
    return times, states


def _check_states(states):
    tr = np.trace(states, axis1=-2, axis2=-1)
    drift = np.max(np.abs(tr - 1.0))
    if drift > TRACE_DRIFT_LIMIT:
        raise StepSizeError(f"trace drift {drift:.3e}")
    if np.min(np.linalg.eigvalsh(symmetrize(states))) < -1e-8:
        raise StepSizeError("positivity lost during integration")


@dataclass(frozen=True)
class GeneratorCheck:
    """Discrete single-shot map compared with its continuum generator.

    ``residual`` is the trace norm of ``Phi(rho) - rho - dt L(rho)``;
    ``cross_projection`` is the component of that residual along the
    normalized cross term ``[A,[B,rho]] + [B,[A,rho]]``.
    """

    residual: float
    cross_projection: float
    dt: float
    ratio: float


def discrete_map_generator_check(a, b, cfg, rho, hs=None, zeta=1.0, grid=None):
    """Compare one measurement-plus-unitary cycle with ``I + dt * L``.

    The cycle applies the quadrature posterior map of the single-shot model
    followed by ``exp(-i hs dt)``, with ``dt = 1/(zeta sigma2)`` and
    ``gamma_i = 2 s_i zeta``.
    """
    a, b = as_hermitian(a), as_hermitian(b)
    rho = as_density(rho)
    hs = np.zeros_like(a) if hs is None else as_hermitian(hs)
    dt = 1.0 / (zeta * cfg.sigma2)
    kernel = ak.measurement_kernel(a, b, cfg, grid)
    post = ak.posterior_state(rho, kernel)
    u = propagator(hs, dt)
    phi = u @ post @ dagger(u)
    gen = lindblad_rhs(rho, hs, a, b, 2 * cfg.s1 * zeta, 2 * cfg.s2 * zeta)
    resid = phi - rho - dt * gen
    cross = a @ (b @ rho - rho @ b) - (b @ rho - rho @ b) @ a
    cross = cross + b @ (a @ rho - rho @ a) - (a @ rho - rho @ a) @ b
    cnorm = np.linalg.norm(cross)
    proj = float(np.vdot(cross, resid).real / cnorm) if cnorm > 0 else 0.0
    return GeneratorCheck(trace_norm(resid), proj, dt, max(cfg.ratio1, cfg.ratio2))


def min_eigenvalue(rho):
    """Smallest eigenvalue per matrix; closed form for qubits."""
    if rho.shape[-1] == 2:
        p = rho[..., 0, 0].real
        q = rho[..., 1, 1].real
        off = np.abs(rho[..., 0, 1])
        return 0.5 * (p + q) - np.sqrt(0.25 * (p - q) ** 2 + off**2)
    return np.linalg.eigvalsh(rho)[..., 0]


class SMEStepper:
    """One conditioned step for a batch of states ``(n, d, d)``.

    ``scheme="kraus"`` (default) applies the normalized measurement map
    ``M rho M^+`` with ``M = I - (1/2) sum k_i O_i^2 dt + sum sqrt(k_i) O_i dY_i``,
    ``k_i = gamma_i/4`` and ``dY_i = dxi_i + 2 sqrt(k_i) <O_i> dt``, then the
    exact unitary ``exp(-i H dt)``. It reproduces the conditioned master
    equation to first order in ``dt`` and keeps states positive.
    ``scheme="euler"`` is the plain Euler-Maruyama increment.
    """

    def __init__(self, hs, a, b, gamma1, gamma2, dt, scheme="kraus", feedback=None):
        if scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {scheme!r}")
        self.hs = as_hermitian(hs)
        self.ops = (as_hermitian(a), as_hermitian(b))
        if not (self.hs.shape == self.ops[0].shape == self.ops[1].shape):
            raise DimensionMismatchError("Hs, A, B must share one dimension")
        self.gammas = (float(gamma1), float(gamma2))
        self.dt = float(dt)
        self.scheme = scheme
        self.feedback = feedback
        dim = self.hs.shape[0]
        self._ops_t = tuple(o.T.copy() for o in self.ops)
        self._rootk = tuple(np.sqrt(g / 4) for g in self.gammas)
        self._unitary = propagator(self.hs, dt)
        self._unitary_dag = dagger(self._unitary)
        self._base = np.eye(dim, dtype=complex) - 0.5 * dt * sum(
            (g / 4) * (o @ o) for g, o in zip(self.gammas, self.ops))

    def expectations(self, rho):
        return np.stack([(rho * ot).sum(axis=(-2, -1)).real for ot in self._ops_t], axis=-1)

    def step(self, rho, dxi):
        """Advance ``rho`` by one step; returns ``(rho_next, expectations)``.

        ``dxi`` has shape ``(n, 2)``; expectations are taken before the step.
        """
        ev = self.expectations(rho)
        if self.scheme == "kraus":
            m = self._base
            for i, (op, rk) in enumerate(zip(self.ops, self._rootk)):
                dy = dxi[:, i] + 2 * rk * ev[:, i] * self.dt
                m = m + (rk * dy)[:, None, None] * op
            rho = m @ rho @ dagger(m)
            rho = self._unitary @ rho @ self._unitary_dag
        else:
            drho = -1j * (self.hs @ rho - rho @ self.hs) * self.dt
            for i, (op, g) in enumerate(zip(self.ops, self.gammas)):
                drho -= (g / 8) * double_commutator(op, rho) * self.dt
                inn = op @ rho - ev[:, i, None, None] * rho
                drho += np.sqrt(g) * 0.5 * (inn + dagger(inn)) * dxi[:, i, None, None]
            rho = rho + drho
        tr = np.trace(rho, axis1=-2, axis2=-1).real
        rho = rho / tr[:, None, None]
        if self.feedback is not None:
            rho = self.feedback(rho, ev, dxi)
        rho = symmetrize(rho)
        lam = np.min(min_eigenvalue(rho))
        if lam < NEGATIVITY_LIMIT:
            raise StepSizeError(f"state lost positivity (min eigenvalue {lam:.3e})")
        return rho, ev


def sme_step(rho, hs, a, b, cfg, dxi1, dxi2, scheme="kraus"):
    """Single conditioned step with caller-supplied increments.

    Returns ``(rho_next, x1, x2)`` where ``x_i`` are the raw pointer
    readouts generated by this step. ``rho`` may be a single state or a
    batch ``(n, d, d)`` with increments of shape ``(n,)``.
    """
    rho = np.asarray(rho, dtype=complex)
    single = rho.ndim == 2
    batch = rho[None] if single else rho
    dxi = np.stack([np.atleast_1d(dxi1), np.atleast_1d(dxi2)], axis=-1).astype(float)
    stepper = SMEStepper(hs, a, b, cfg.gamma1, cfg.gamma2, cfg.dt, scheme)
    out, ev = stepper.step(batch, dxi)
    x1 = cfg.s1 * ev[:, 0] + cfg.lambda1 * dxi[:, 0] / cfg.dt
    x2 = cfg.s2 * ev[:, 1] + cfg.lambda2 * dxi[:, 1] / cfg.dt
    if single:
        return out[0], float(x1[0]), float(x2[0])
    return out, x1, x2


def _propagate(rho0, stepper, noise, sample_every):
    """Run a batch; returns sampled states ``(n_samples, n, d, d)`` and expectations."""
    n_traj, n_steps, _ = noise.shape
    rho = np.broadcast_to(rho0, (n_traj,) + rho0.shape).copy()
    samples = [rho.copy()]
    evs = np.empty((n_steps, n_traj, 2))
    for k in range(n_steps):
        rho, evs[k] = stepper.step(rho, noise[:, k, :])
        if (k + 1) % sample_every == 0:
            samples.append(rho.copy())
    return np.stack(samples), evs


@dataclass(frozen=True)
class Trajectory:
    record: MeasurementRecord
    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray


def run_trajectory(rho0, hs, a, b, cfg, t_final, seed, sample_every=1, scheme="kraus"):
    """One conditioned trajectory with its raw measurement record."""
    rho0 = as_density(rho0)
    n_steps = step_count(t_final, cfg.dt)
    stepper = SMEStepper(hs, a, b, cfg.gamma1, cfg.gamma2, cfg.dt, scheme)
    noise = seed.increments(n_steps, cfg.dt)
    states, evs = _propagate(rho0, stepper, noise[None], sample_every)
    times = cfg.dt * np.arange(n_steps)
    x1 = cfg.s1 * evs[:, 0, 0] + cfg.lambda1 * noise[:, 0] / cfg.dt
    x2 = cfg.s2 * evs[:, 0, 1] + cfg.lambda2 * noise[:, 1] / cfg.dt
    sample_times = cfg.dt * sample_every * np.arange(states.shape[0])
    return Trajectory(MeasurementRecord(times, x1, x2), sample_times, states[:, 0], noise)


@dataclass(frozen=True)
class EnsembleResult:
    """Ensemble mean and standard error of states and observables.

    ``stderr_state`` holds the standard errors of the real parts in its real
    component and of the imaginary parts in its imaginary component.
    """

    times: np.ndarray
    mean_state: np.ndarray
    stderr_state: np.ndarray
    obs_mean: np.ndarray
    obs_stderr: np.ndarray
    n_traj: int


def default_observables(dim):
    """``2 L`` for the spin of dimension ``dim``; the Pauli matrices for a qubit."""
    return tuple(2 * op for op in angular_momentum((dim - 1) / 2))


def resolve_threads(threads=None):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def _batch_moments(x):
    """Per-batch count, mean and centred sum of squares along axis 1."""
    mean = x.mean(axis=1)
    m2 = ((x - mean[:, None]) ** 2).sum(axis=1)
    return x.shape[1], mean, m2


def run_ensemble(rho0, stepper, t_final, n_traj, master_seed, observables=None,
                 sample_every=1, threads=None, batch_size=DEFAULT_BATCH):
    """Ensemble statistics for any configured :class:`SMEStepper`.

    Trajectories are split into fixed batches of ``batch_size`` consecutive
    indices; batch moments are merged in index order, so the result is
    identical for any number of threads.
    """
    rho0 = as_density(rho0)
    if n_traj < 1:
        raise InvalidArgumentError("n_traj must be at least 1")
    dim = rho0.shape[0]
    obs = default_observables(dim) if observables is None else tuple(observables)
    obs_arr = np.stack([np.asarray(o) for o in obs])
    n_steps = step_count(t_final, stepper.dt)
    dt = stepper.dt

    def batch(start):
        idx = range(start, min(start + batch_size, n_traj))
        noise = np.stack([TrajectorySeed(master_seed, i).increments(n_steps, dt) for i in idx])
        states, _ = _propagate(rho0, stepper, noise, sample_every)
        flat = np.concatenate([states.real.reshape(states.shape[:2] + (-1,)),
                               states.imag.reshape(states.shape[:2] + (-1,))], axis=-1)
        ex = np.einsum("oij,snji->sno", obs_arr, states).real
        return _batch_moments(flat), _batch_moments(ex)

    starts = range(0, n_traj, batch_size)
    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        parts = list(pool.map(batch, starts))

    def merge(key):
        count, mean, m2 = parts[0][key]
        for cnt_b, mean_b, m2_b in (p[key] for p in parts[1:]):
            tot = count + cnt_b
            delta = mean_b - mean
            mean = mean + delta * (cnt_b / tot)
            m2 = m2 + m2_b + delta**2 * (count * cnt_b / tot)
            count = tot
        if count > 1:
            se = np.sqrt(m2 / (count - 1) / count)
        else:
            se = np.full_like(mean, np.nan)
        return mean, se

    flat_mean, flat_se = merge(0)
    obs_mean, obs_se = merge(1)
    half = dim * dim
    shape = (flat_mean.shape[0], dim, dim)
    mean_state = (flat_mean[:, :half] + 1j * flat_mean[:, half:]).reshape(shape)
    se_state = (flat_se[:, :half] + 1j * flat_se[:, half:]).reshape(shape)
    times = dt * sample_every * np.arange(shape[0])
    return EnsembleResult(times, mean_state, se_state, obs_mean, obs_se, n_traj)


def ensemble_average(rho0, hs, a, b, cfg, t_final, n_traj, master_seed,
                     observables=None, sample_every=1, threads=None,
                     batch_size=DEFAULT_BATCH, scheme="kraus"):
    """Mean conditioned evolution over ``n_traj`` independent trajectories."""
    stepper = SMEStepper(hs, a, b, cfg.gamma1, cfg.gamma2, cfg.dt, scheme)
    return run_ensemble(rho0, stepper, t_final, n_traj, master_seed, observables,
                        sample_every, threads, batch_size)
