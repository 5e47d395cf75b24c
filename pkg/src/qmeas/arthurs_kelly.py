"""Single-shot simultaneous measurement of two observables with two pointers.

The system couples impulsively to two detectors through
``h = s1 A p1 + s2 B p2``. Each pointer starts in a Gaussian state of
width ``Delta_i = s_i sigma2`` in position space, i.e. momentum amplitude
``(Delta/pi)^(1/4) exp(-Delta p^2 / 2)``.

Two independent routes are provided:

* exact quadrature: the measurement kernel ``M(x1, x2)`` is built on a
  momentum grid and Fourier transformed to the conjugate position grid,
  and every moment of the readout is a weighted sum over that grid;
* truncated commutator series for the same moments.

The quadrature route is the oracle for the series route.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateStateError, DimensionMismatchError,
                     GridResolutionError, InvalidArgumentError,
                     PreconditionError)
from .operators import as_hermitian, commutator, dagger, expectation, propagator

DEFAULT_POINTS = 256
GRID_EXTENT = 8.0
TAIL_TOLERANCE = 1e-12
COMPLETENESS_TOLERANCE = 1e-6
DENOMINATOR_CUTOFF = 1e-6


@dataclass(frozen=True)
class DetectorConfig:
    """Coupling strengths ``s1, s2`` and accuracy parameter ``sigma2``."""

    s1: float
    s2: float
    sigma2: float

    def __post_init__(self):
        for name in ("s1", "s2", "sigma2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidArgumentError(f"{name} must be positive, got {value}")

    @classmethod
    def from_ratios(cls, r1, r2, sigma2=1.0):
        """Build from accuracy ratios ``r_i = s_i / sigma2``."""
        return cls(r1 * sigma2, r2 * sigma2, sigma2)

    @property
    def delta1(self):
        return self.s1 * self.sigma2

    @property
    def delta2(self):
        return self.s2 * self.sigma2

    @property
    def ratio1(self):
        return self.s1 / self.sigma2

    @property
    def ratio2(self):
        return self.s2 / self.sigma2

    @property
    def stability1(self):
        return self.s1 * self.sigma2

    @property
    def stability2(self):
        return self.s2 * self.sigma2


@dataclass(frozen=True)
class PointerGrid:
    """Uniform periodic momentum grid for both pointers.

    The grid for detector ``i`` is ``p = -p_max_i + k * dp_i`` with
    ``dp_i = 2 p_max_i / n_points``; position nodes are the conjugate grid
    with spacing ``2 pi / (n_points dp_i)``.
    """

    n_points: int
    p_max1: float
    p_max2: float

    def __post_init__(self):
        n = self.n_points
        if n < 8 or n & (n - 1):
            raise InvalidArgumentError(f"n_points must be a power of two >= 8, got {n}")
        if not (self.p_max1 > 0 and self.p_max2 > 0):
            raise InvalidArgumentError("p_max must be positive")

    @classmethod
    def for_config(cls, cfg, n_points=DEFAULT_POINTS, extent=GRID_EXTENT):
        return cls(n_points, extent / np.sqrt(cfg.delta1), extent / np.sqrt(cfg.delta2))

    def check(self, cfg):
        """Raise if the Gaussian tail at the grid edge exceeds 1e-12 of the peak."""
        for p_max, delta in ((self.p_max1, cfg.delta1), (self.p_max2, cfg.delta2)):
            if np.exp(-0.5 * delta * p_max**2) > TAIL_TOLERANCE:
                raise PreconditionError(
                    f"momentum grid too narrow: p_max={p_max:.4g} for Delta={delta:.4g}")

    def momentum_nodes(self):
        """``(p1, dp1, p2, dp2)``."""
        n = self.n_points
        dp1 = 2 * self.p_max1 / n
        dp2 = 2 * self.p_max2 / n
        p1 = -self.p_max1 + dp1 * np.arange(n)
        p2 = -self.p_max2 + dp2 * np.arange(n)
        return p1, dp1, p2, dp2

    def position_nodes(self):
        """``(x1, dx1, x2, dx2)`` on the conjugate grid centred at zero."""
        n = self.n_points
        _, dp1, _, dp2 = self.momentum_nodes()
        dx1 = 2 * np.pi / (n * dp1)
        dx2 = 2 * np.pi / (n * dp2)
        k = np.arange(n) - n // 2
        return dx1 * k, dx1, dx2 * k, dx2


@dataclass(frozen=True)
class MeasurementKernel:
    """Kernel values ``M(x1, x2)`` on the position grid.

    ``values`` has shape ``(n, n, d, d)``; ``weight`` is the cell area
    ``dx1 * dx2`` so that ``sum(M^+ M) * weight`` approximates the identity.
    """

    x1: np.ndarray
    x2: np.ndarray
    weight: float
    values: np.ndarray

    @property
    def dim(self):
        return self.values.shape[-1]


@dataclass(frozen=True)
class SingleShotMoments:
    mean_x1: float
    mean_x2: float
    mean_x1_sq: float
    mean_x2_sq: float
    corr_x1x2: float
    mean_A_post: float
    mean_B_post: float

    @property
    def var_x1(self):
        return self.mean_x1_sq - self.mean_x1**2

    @property
    def var_x2(self):
        return self.mean_x2_sq - self.mean_x2**2

    @property
    def cov_x1x2(self):
        return self.corr_x1x2 - self.mean_x1 * self.mean_x2


def pointer_momentum_amplitudes(cfg, grid):
    """Sampled Gaussian momentum amplitudes of both pointers.

    Returns ``(p1, psi1, p2, psi2)``. ``sum(|psi_i|^2) * dp_i`` is one to
    near machine precision on a valid grid.
    """
    grid.check(cfg)
    p1, _, p2, _ = grid.momentum_nodes()
    psi1 = (cfg.delta1 / np.pi) ** 0.25 * np.exp(-0.5 * cfg.delta1 * p1**2)
    psi2 = (cfg.delta2 / np.pi) ** 0.25 * np.exp(-0.5 * cfg.delta2 * p2**2)
    return p1, psi1.astype(complex), p2, psi2.astype(complex)


def _check_pair(a, b):
    a = as_hermitian(a)
    b = as_hermitian(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"A and B shapes differ: {a.shape} vs {b.shape}")
    return a, b


def measurement_kernel(a, b, cfg, grid=None, tolerance=COMPLETENESS_TOLERANCE):
    """Build ``M(x1, x2) = <x1 x2| U_I |d1 d2>`` by quadrature.

    For every momentum node the coupling unitary ``exp(-i(s1 p1 A + s2 p2 B))``
    is weighted by the pointer amplitudes, then the two-dimensional Fourier
    sum ``(2 pi)^-1 sum exp(i(x1 p1 + x2 p2)) ... dp1 dp2`` is evaluated on the
    conjugate position grid. Raises :class:`GridResolutionError` if the
    completeness defect exceeds ``tolerance``.
    """
    a, b = _check_pair(a, b)
    grid = PointerGrid.for_config(cfg) if grid is None else grid
    p1, psi1, p2, psi2 = pointer_momentum_amplitudes(cfg, grid)
    _, dp1, _, dp2 = grid.momentum_nodes()
    x1, dx1, x2, dx2 = grid.position_nodes()

    gen = cfg.s1 * p1[:, None, None, None] * a + cfg.s2 * p2[None, :, None, None] * b
    coupled = propagator(gen) * (psi1[:, None] * psi2[None, :])[..., None, None]

    four1 = np.exp(1j * np.outer(x1, p1)) * dp1 / np.sqrt(2 * np.pi)
    four2 = np.exp(1j * np.outer(x2, p2)) * dp2 / np.sqrt(2 * np.pi)
    values = np.tensordot(four1, coupled, axes=(1, 0))
    values = np.moveaxis(np.tensordot(four2, values, axes=(1, 1)), 0, 1)

    kernel = MeasurementKernel(x1, x2, dx1 * dx2, values)
    defect = completeness_defect(kernel)
    if defect > tolerance:
        raise GridResolutionError(f"completeness defect {defect:.3e} > {tolerance:.1e}")
    return kernel


def completeness_defect(kernel):
    """Operator-norm distance of ``sum M^+ M * weight`` from the identity."""
    m = kernel.values
    total = np.einsum("xyji,xyjk->ik", m.conj(), m) * kernel.weight
    return float(np.linalg.norm(total - np.eye(kernel.dim), ord=2))


def _unnormalized_posterior(rho, kernel):
    m = kernel.values
    return np.einsum("xyij,jk,xylk->il", m, rho, m.conj()) * kernel.weight


def _check_rho(rho, dim):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise DimensionMismatchError(f"rho shape {rho.shape} does not match kernel dim {dim}")
    return rho


def posterior_state(rho, kernel):
    """Non-selective post-measurement state ``sum M rho M^+``, renormalized."""
    rho = _check_rho(rho, kernel.dim)
    post = _unnormalized_posterior(rho, kernel)
    return post / np.trace(post).real


def exact_moments(rho, a, b, cfg, grid=None, kernel=None):
    """All single-shot readout moments by quadrature over the kernel."""
    a, b = _check_pair(a, b)
    if kernel is None:
        kernel = measurement_kernel(a, b, cfg, grid)
    rho = _check_rho(rho, kernel.dim)
    m = kernel.values
    prob = np.einsum("xyij,jk,xyik->xy", m, rho, m.conj()).real * kernel.weight
    x1 = kernel.x1[:, None]
    x2 = kernel.x2[None, :]
    post = _unnormalized_posterior(rho, kernel)
    return SingleShotMoments(
        mean_x1=float(np.sum(prob * x1)),
        mean_x2=float(np.sum(prob * x2)),
        mean_x1_sq=float(np.sum(prob * x1**2)),
        mean_x2_sq=float(np.sum(prob * x2**2)),
        corr_x1x2=float(np.sum(prob * x1 * x2)),
        mean_A_post=float(expectation(a, post)),
        mean_B_post=float(expectation(b, post)),
    )


def series_first_moments(rho, a, b, cfg):
    """Leading commutator-series values of ``(<A>', <B>', <x1>', <x2>')``."""
    a, b = _check_pair(a, b)
    rho = _check_rho(rho, a.shape[0])
    bba = expectation(commutator(b, commutator(b, a)), rho)
    aab = expectation(commutator(a, commutator(a, b)), rho)
    ea = expectation(a, rho)
    eb = expectation(b, rho)
    sig2 = cfg.sigma2
    return (
        ea - cfg.s2 / (4 * sig2) * bba,
        eb - cfg.s1 / (4 * sig2) * aab,
        cfg.s1 * (ea - cfg.s2 / (12 * sig2) * bba),
        cfg.s2 * (eb - cfg.s1 / (12 * sig2) * aab),
    )


def _second_moment(rho, a, b, s_a, s_b, sig2):
    c = commutator
    bba = c(b, c(b, a))
    bracket = (expectation(c(b, c(b, a @ a)), rho)
               + expectation(a @ bba, rho)
               + expectation(c(b, a @ c(b, a)), rho))
    return 0.5 * s_a * sig2 * (1 + 2 * s_a / sig2 * expectation(a @ a, rho)
                               - s_a * s_b / (12 * sig2**2) * bracket)


def series_second_moments(rho, a, b, cfg):
    """Truncated series for ``(<x1^2>', <x2^2>')``, accurate to third order in r."""
    a, b = _check_pair(a, b)
    rho = _check_rho(rho, a.shape[0])
    return (_second_moment(rho, a, b, cfg.s1, cfg.s2, cfg.sigma2),
            _second_moment(rho, b, a, cfg.s2, cfg.s1, cfg.sigma2))


def relative_deviations(rho, a, b, cfg, grid=None, threshold=DENOMINATOR_CUTOFF,
                        kernel=None):
    """Exact relative deviations ``(eps1, eps2)`` of pointer readouts.

    ``eps1 = (<x1>' - s1 <A>') / (s1 <A>')`` and likewise for ``eps2``, both
    from quadrature moments.
    """
    mom = exact_moments(rho, a, b, cfg, grid, kernel=kernel)
    if abs(mom.mean_A_post) < threshold or abs(mom.mean_B_post) < threshold:
        raise DegenerateStateError(
            "posterior mean of A or B vanishes; relative deviation undefined")
    eps1 = (mom.mean_x1 - cfg.s1 * mom.mean_A_post) / (cfg.s1 * mom.mean_A_post)
    eps2 = (mom.mean_x2 - cfg.s2 * mom.mean_B_post) / (cfg.s2 * mom.mean_B_post)
    return eps1, eps2


def deviation_formula_angular(cfg):
    """Second-order closed form of ``(eps1, eps2)`` for ``A = Lx``, ``B = Ly``."""
    r1, r2 = cfg.ratio1, cfg.ratio2

    def eps(ra, rb):
        return (rb / 6) * (1 - (ra + 3 * rb) / 20) / (1 - rb / 4 + rb * (ra + 3 * rb) / 96)

    return eps(r1, r2), eps(r2, r1)
