"""Bloch-vector analytics of the feedback-controlled spin-1/2.

With ``rho = (I + x sx + y sy + z sz)/2`` and ``Hs = w . sigma`` the
Lindblad flow with rates ``k1, k2, k3`` becomes the affine system

    x' = 2(wy z - wz y) - (k1 + k2)/2 x
    y' = 2(wz x - wx z) - (k1 + k2 + 4 k3)/2 y
    z' = 2(wx y - wy x) - (k1 + k2 + 2 k3) z + k2 - k1

whose fixed point, effective temperature and relaxation times are available
in closed form.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import ConvexHull

from .errors import (InvalidArgumentError, InvalidRegimeError,
                     SingularParametersError, UnsupportedBranchError)
from .operators import IDENTITY2, PAULI_X, PAULI_Y, PAULI_Z

DEGENERACY_TOLERANCE = 1e-10


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    def norm(self):
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    def validate(self, atol=1e-9):
        if self.norm() ** 2 > 1 + atol:
            raise InvalidArgumentError(f"Bloch vector {tuple(self)} lies outside the ball")
        return self


def bloch_from_density(rho):
    """``(x, y, z)`` from a density matrix; batched over leading axes."""
    rho = np.asarray(rho)
    x = 2 * rho[..., 0, 1].real
    y = -2 * rho[..., 0, 1].imag
    z = (rho[..., 0, 0] - rho[..., 1, 1]).real
    return np.stack([x, y, z], axis=-1)


def density_from_bloch(v):
    v = np.asarray(v, dtype=float)
    return 0.5 * (IDENTITY2 + v[..., 0, None, None] * PAULI_X
                  + v[..., 1, None, None] * PAULI_Y + v[..., 2, None, None] * PAULI_Z)


def bloch_matrix(field, rates):
    """Linear part ``J`` and offset ``c`` with ``v' = J v + c``."""
    wx, wy, wz = field.omega_x, field.omega_y, field.omega_z
    k1, k2, k3 = rates.k1, rates.k2, rates.k3
    jac = np.array([
        [-(k1 + k2) / 2, -2 * wz, 2 * wy],
        [2 * wz, -(k1 + k2 + 4 * k3) / 2, -2 * wx],
        [-2 * wy, 2 * wx, -(k1 + k2 + 2 * k3)],
    ])
    return jac, np.array([0.0, 0.0, k2 - k1])


def bloch_rhs(v, field, rates):
    jac, off = bloch_matrix(field, rates)
    return np.asarray(v, dtype=float) @ jac.T + off


def steady_state(field, rates):
    """Closed-form fixed point of the Bloch equations."""
    k1, k2, k3 = rates.k1, rates.k2, rates.k3
    wx, wy, wz = field.omega_x, field.omega_y, field.omega_z
    eta = rates.eta(field)
    if eta == 0 or not np.isfinite(eta):
        raise SingularParametersError("eta vanishes; steady state is not unique")
    k12 = k1 + k2
    k124 = k12 + 4 * k3
    xs = 4 / eta * (k2 - k1) * (wy * k124 + 4 * wx * wz)
    ys = 4 / eta * (k1 - k2) * (wx * k12 - 4 * wy * wz)
    zs = 1 / eta * (k2 - k1) * (k12 * k124 + 16 * wz**2)
    return BlochVector(xs, ys, zs)


def offdiagonal_steady(field, rates):
    """``(x_s, y_s)`` for a field without z component."""
    if field.omega_z != 0:
        raise InvalidArgumentError("offdiagonal_steady requires omega_z = 0")
    eta = rates.eta(field)
    if np.any(eta == 0):
        raise SingularParametersError("eta vanishes")
    k12 = rates.k1 + rates.k2
    xs = 4 / eta * field.omega_y * (rates.k2 - rates.k1) * (k12 + 4 * rates.k3)
    ys = 4 / eta * field.omega_x * (rates.k1 - rates.k2) * k12
    return xs, ys


def effective_temperature(omega_z, rates, k_B=1.0):
    """Temperature of the diagonal steady state assigned by its Boltzmann ratio.

    The level splitting of ``wz sz`` is ``2 wz``. Returns 0 when the
    excited state is empty (``k2 + k3 = 0``).
    """
    if not (omega_z > 0 and k_B > 0):
        raise InvalidArgumentError("need omega_z > 0 and k_B > 0")
    up = rates.k1 + rates.k3
    down = rates.k2 + rates.k3
    if down < 0 or up <= 0:
        raise InvalidRegimeError("rates give a population inversion")
    if down == 0:
        return 0.0
    ratio = up / down
    if ratio <= 1:
        raise InvalidRegimeError(f"(k1+k3)/(k2+k3) = {ratio} <= 1")
    return 2 * omega_z / (k_B * np.log(ratio))


@dataclass(frozen=True)
class RelaxationTimes:
    tau_z: float
    tau_xy: float
    discriminant: float
    branch: str
    mu_plus: complex
    mu_minus: complex


def _branch(rates, omega_z):
    disc = rates.discriminant(omega_z)
    if abs(disc) < DEGENERACY_TOLERANCE * rates.total**2:
        return disc, "degenerate"
    return disc, "overdamped" if disc > 0 else "oscillatory"


def relaxation_times(field, rates):
    if field.omega_x != 0 or field.omega_y != 0:
        raise InvalidArgumentError("relaxation times are defined for a z-directed field")
    total = rates.total
    if not total > 0:
        raise InvalidRegimeError("k1 + k2 + 2 k3 must be positive")
    disc, branch = _branch(rates, field.omega_z)
    mp, mm = rates.mu(field.omega_z)
    if branch == "overdamped":
        if not mm > 0:
            raise InvalidRegimeError("slow x-y rate is not positive")
        tau_xy = 1.0 / mm
    else:
        tau_xy = 2.0 / total
    return RelaxationTimes(1.0 / total, tau_xy, disc, branch, mp, mm)


@dataclass(frozen=True)
class ClosedFormSolution:
    """Analytic ``(x, y, z)(t)`` for a z-directed field.

    ``branch`` is ``"degenerate"``, ``"overdamped"`` or ``"oscillatory"``;
    ``c1`` fixes ``z`` and ``(c2, c3)`` fix ``x`` in the form appropriate
    to the branch:

    * degenerate: ``x = (c2 + c3 t) exp(-S t/2)``
    * overdamped: ``x = c2 exp(-mu_plus t) + c3 exp(-mu_minus t)``
    * oscillatory: ``x = exp(-S t/2)(c2 cos(nu t) + c3 sin(nu t))``

    with ``S = k1 + k2 + 2 k3`` and ``y = -(x' + (k1 + k2) x/2)/(2 wz)``.
    """

    branch: str
    c1: float
    c2: float
    c3: float
    rates: object
    omega_z: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        r = self.rates
        s = r.total
        a = 0.5 * (r.k1 + r.k2)
        z = (r.k2 - r.k1) / s + self.c1 * np.exp(-s * t)
        if self.branch == "degenerate":
            e = np.exp(-0.5 * s * t)
            x = (self.c2 + self.c3 * t) * e
            xdot = (self.c3 - 0.5 * s * (self.c2 + self.c3 * t)) * e
        elif self.branch == "overdamped":
            mp, mm = r.mu(self.omega_z)
            ep, em = np.exp(-mp * t), np.exp(-mm * t)
            x = self.c2 * ep + self.c3 * em
            xdot = -mp * self.c2 * ep - mm * self.c3 * em
        else:
            nu = 0.5 * np.sqrt(-r.discriminant(self.omega_z))
            e = np.exp(-0.5 * s * t)
            cs, sn = np.cos(nu * t), np.sin(nu * t)
            x = e * (self.c2 * cs + self.c3 * sn)
            xdot = -0.5 * s * x + e * nu * (self.c3 * cs - self.c2 * sn)
        y = -(xdot + a * x) / (2 * self.omega_z)
        return np.stack([x, y, z], axis=-1)


def closed_form_solution(v0, field, rates):
    """Fit the branch constants of the analytic solution to ``v0``."""
    if field.omega_x != 0 or field.omega_y != 0:
        raise InvalidArgumentError("closed form requires omega_x = omega_y = 0")
    wz = field.omega_z
    if wz == 0:
        raise UnsupportedBranchError("omega_z = 0: integrate the ODE directly")
    x0, y0, z0 = (float(c) for c in v0)
    s = rates.total
    a = 0.5 * (rates.k1 + rates.k2)
    c1 = z0 - (rates.k2 - rates.k1) / s
    xdot0 = -2 * wz * y0 - a * x0
    _, branch = _branch(rates, wz)
    if branch == "degenerate":
        c2, c3 = x0, xdot0 + 0.5 * s * x0
    elif branch == "overdamped":
        mp, mm = rates.mu(wz)
        # x0 = c2 + c3, xdot0 = -mp c2 - mm c3
        c2 = (-xdot0 - mm * x0) / (mp - mm)
        c3 = x0 - c2
    else:
        nu = 0.5 * np.sqrt(-rates.discriminant(wz))
        c2, c3 = x0, (xdot0 + 0.5 * s * x0) / nu
    return ClosedFormSolution(branch, c1, c2, c3, rates, wz)


@dataclass(frozen=True)
class ReachableBoundary:
    """Upper boundary of the attainable steady ``(x_s, y_s)`` set.

    ``points`` is the boundary polyline; ``normal``/``offset`` describe the
    total-least-squares line ``normal . p = offset`` through it and
    ``residuals`` the orthogonal distance of each vertex from that line.
    """

    points: np.ndarray
    normal: np.ndarray
    offset: float
    residuals: np.ndarray
    samples: np.ndarray

    @property
    def max_residual(self):
        return float(np.max(np.abs(self.residuals), initial=0.0))


def log_grid(lo, hi, n):
    """``n`` log-spaced points from ``lo`` to ``hi``.

    Built from base-10 exponents so that decade values such as 1 are hit
    exactly when they fall on a node.
    """
    if not (0 < lo < hi and n >= 2):
        raise InvalidArgumentError("need 0 < lo < hi and n >= 2")
    return np.logspace(np.log10(lo), np.log10(hi), n)


def steady_offdiagonal_grid(field, kappa_f, gammas_x, gammas_y):
    """Vectorized ``(x_s, y_s)`` over a ``Gamma_x x Gamma_y`` grid (``omega_z = 0``)."""
    from .feedback import rate_constants

    gx, gy = np.meshgrid(np.asarray(gammas_x, float), np.asarray(gammas_y, float),
                         indexing="ij")
    rates = rate_constants(gx, gy, kappa_f)
    return offdiagonal_steady(field, rates)


def reachable_set_boundary(field, kappa_f, gammas_x=None, gammas_y=None):
    """Sweep ``Gamma_x, Gamma_y`` and extract the outer boundary of ``(x_s, y_s)``.

    The attained set lies in one quadrant, fixed by the signs of the field
    components. The boundary consists of the convex-hull edges whose
    outward normals point into that quadrant; its orientation is read off
    the sampled points rather than assumed.
    """
    if field.omega_z != 0:
        raise InvalidArgumentError("reachable set is defined at omega_z = 0")
    gammas_x = log_grid(1e-2, 1e2, 200) if gammas_x is None else gammas_x
    gammas_y = log_grid(1e-2, 1e2, 200) if gammas_y is None else gammas_y
    xs, ys = steady_offdiagonal_grid(field, kappa_f, gammas_x, gammas_y)
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    if np.max(np.abs(pts)) < 1e-15:
        origin = np.zeros((1, 2))
        return ReachableBoundary(origin, np.array([0.0, 1.0]), 0.0, np.zeros(1), pts)

    quadrant = np.sign(np.mean(pts, axis=0))
    quadrant[quadrant == 0] = 1.0
    hull = ConvexHull(pts)
    scale = np.max(np.abs(pts))
    on_edge = np.zeros(len(pts), dtype=bool)
    for eq in hull.equations:
        if np.all(eq[:2] * quadrant > 1e-9):
            # keep every sample on the supporting line, not just hull vertices
            on_edge |= np.abs(pts @ eq[:2] + eq[2]) <= 1e-9 * scale
    if not on_edge.any():
        raise InvalidArgumentError("no outward boundary found in the sweep")
    boundary = np.unique(pts[on_edge], axis=0)
    boundary = boundary[np.argsort(boundary[:, 0] * quadrant[0])]

    centre = boundary.mean(axis=0)
    _, _, vt = np.linalg.svd(boundary - centre)
    normal = vt[-1]
    if np.dot(normal, quadrant) < 0:
        normal = -normal
    offset = float(normal @ centre)
    resid = boundary @ normal - offset
    return ReachableBoundary(boundary, normal, offset, resid, pts)
