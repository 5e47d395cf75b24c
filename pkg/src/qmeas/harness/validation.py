"""Acceptance checks, one function per numbered criterion.

Each ``criterion_N`` returns a :class:`Criterion` holding named
:class:`Check` rows (measured value, tolerance, verdict). Failures are
data, never exceptions.
"""
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .. import arthurs_kelly as ak
from .. import bloch, continuous, feedback
from ..ode import rk4
from ..operators import (IDENTITY2, PAULI_X, PAULI_Y, PAULI_Z, angular_momentum,
                         random_density, random_hermitian, superoperator_matrix)
from .config import DEFAULT_SEED, build_config
from .experiments import teff_grid
from .tables import ResultTable, make_metadata

SX, SY = 0.5 * PAULI_X, 0.5 * PAULI_Y
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool


@dataclass
class Criterion:
    number: int
    title: str
    checks: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self):
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, value, tolerance, passed=None):
        value = float(value)
        if passed is None:
            passed = bool(value <= tolerance)
        self.checks.append(Check(name, value, float(tolerance), bool(passed)))

    def summary(self):
        worst = ", ".join(f"{c.name}={c.value:.3g}/{c.tolerance:.3g}"
                          for c in self.checks if not c.passed)
        verdict = "PASS" if self.passed else "FAIL"
        line = f"criterion {self.number:2d} [{verdict}] {self.title} ({self.runtime:.1f}s)"
        return line + (f": {worst}" if worst else "")


def _timed(func):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        crit = func(*args, **kwargs)
        crit.runtime = time.perf_counter() - start
        return crit
    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _bloch(states):
    return np.stack([np.einsum("ij,...ji->...", p, states).real for p in PAULIS], axis=-1)


def _angular_state(lx, ly, j):
    d = lx.shape[0]
    return (np.eye(d) + 0.3 * (lx + ly) / j) / d


@_timed
def criterion_1():
    """Relative-deviation anchor and closed-formula accuracy."""
    crit = Criterion(1, "deviation magnitude anchor")
    for j in (0.5, 1.0):
        lx, ly, _ = angular_momentum(j)
        rho = _angular_state(lx, ly, j)
        eps = ak.relative_deviations(rho, lx, ly, ak.DetectorConfig.from_ratios(0.5, 0.5))
        for i, e in enumerate(eps, start=1):
            crit.add(f"eps{i}_exact_j{j:g}_in_[0.08,0.12]", abs(e - 0.10), 0.02)
        worst = 0.0
        for r in (0.05, 0.1, 0.2):
            cfg = ak.DetectorConfig.from_ratios(r, r)
            ex = ak.relative_deviations(rho, lx, ly, cfg)
            fo = ak.deviation_formula_angular(cfg)
            worst = max(worst, max(abs(x - f) for x, f in zip(ex, fo)) / r**3)
        crit.add(f"formula_minus_exact_over_r3_j{j:g}", worst, 2.0)
    fo = ak.deviation_formula_angular(ak.DetectorConfig.from_ratios(0.5, 0.5))
    crit.add("eps_formula_at_0.5_minus_0.0847", max(abs(f - 0.0847) for f in fo), 5e-5)
    return crit


@_timed
def criterion_2(seed=DEFAULT_SEED):
    """Single-shot map versus the continuum generator."""
    crit = Criterion(2, "continuous-limit Lindblad reduction")
    rho = random_density(2, np.random.default_rng(seed))
    hs = 0.3 * PAULI_Z + 0.2 * PAULI_X
    rs = np.array([0.02, 0.01, 0.005])
    res, cross = [], []
    for r in rs:
        chk = continuous.discrete_map_generator_check(SX, SY, ak.DetectorConfig(1.0, 1.0, 1 / r),
                                                      rho, hs=hs)
        res.append(chk.residual)
        cross.append(abs(chk.cross_projection))
    crit.add("residual_slope_minus_2", abs(_slope(rs, res) - 2), 0.2)
    crit.add("cross_projection_slope_minus_2", abs(_slope(rs, cross) - 2), 0.2)
    return crit


def _se_level(res):
    return float(np.mean(res.obs_stderr[1:]))


@_timed
def criterion_3(seed=DEFAULT_SEED, threads=None, n_traj=4000):
    """Conditioned ensemble mean against the unconditioned solution."""
    crit = Criterion(3, "SME/ME consistency")
    rho0 = random_density(2, np.random.default_rng(seed))
    hs = PAULI_Z
    ccfg = continuous.ContinuousConfig.from_gammas(1e-3, 2.0, 2.0)
    _, ref = continuous.integrate_unconditioned(rho0, hs, SX, SY, (2.0, 2.0), 2.0, 1e-3,
                                                sample_dt=1e-2)
    ref = _bloch(ref)
    levels = []
    sizes = (n_traj // 16, n_traj // 4, n_traj)
    for n in sizes:
        ens = continuous.ensemble_average(rho0, hs, SX, SY, ccfg, 2.0, n, seed,
                                          sample_every=10, threads=threads)
        levels.append(_se_level(ens))
    crit.add("sup_norm_bloch_deviation", np.max(np.abs(ens.obs_mean - ref)), 0.05)
    crit.add("stderr_slope_plus_0.5", abs(_slope(sizes, levels) + 0.5), 0.1)
    return crit


@_timed
def criterion_4(seed=DEFAULT_SEED):
    """Feedback master equation equals its Lindblad form for F = c^+."""
    crit = Criterion(4, "feedback superoperator identity")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        gx, gy, kf = np.exp(rng.uniform(np.log(0.1), np.log(10.0), 3))
        hs = random_hermitian(2, rng)
        fb = feedback.FeedbackConfig.lowering_adjoint(kf)
        rates = feedback.rate_constants(gx, gy, kf)
        lg = superoperator_matrix(lambda r: feedback.gme_rhs(r, hs, gx, gy, fb), 2)
        lm = superoperator_matrix(lambda r: feedback.me_rhs(r, hs, rates), 2)
        worst = max(worst, np.max(np.abs(lg - lm)))
    crit.add("max_superoperator_difference", worst, 1e-12)
    return crit


@_timed
def criterion_5(seed=DEFAULT_SEED, threads=None, n_traj=4000):
    """Feedback ensemble mean against the Lindblad-form flow."""
    crit = Criterion(5, "feedback trajectory consistency")
    rho0 = random_density(2, np.random.default_rng(seed))
    hs = PAULI_Z
    meas = feedback.SpinMeasurementConfig(0.5, 0.5)
    fb = feedback.FeedbackConfig.lowering_adjoint(0.5)
    rates = feedback.rate_constants(0.5, 0.5, 0.5)
    _, ref = rk4(lambda r: feedback.me_rhs(r, hs, rates), rho0, 1e-3, 2000, 10)
    ens = feedback.feedback_ensemble_average(rho0, hs, meas, fb, 1e-3, 2.0, n_traj, seed,
                                             sample_every=10, threads=threads)
    crit.add("sup_norm_bloch_deviation", np.max(np.abs(ens.obs_mean - _bloch(ref))), 0.05)
    return crit


def _gme_liouvillian(field_cfg, gx, gy, kf):
    fb = feedback.FeedbackConfig.lowering_adjoint(kf)
    hs = field_cfg.hamiltonian()
    return superoperator_matrix(lambda r: feedback.gme_rhs(r, hs, gx, gy, fb), 2)


def asymptotic_bloch(field_cfg, gx, gy, kf):
    """Bloch vector of ``exp(L t) (I/2)`` at ``t`` = 60 slowest decay times.

    ``L`` is built from the feedback master equation directly, so this limit
    does not depend on the rate-constant formulas.
    """
    liou = _gme_liouvillian(field_cfg, gx, gy, kf)
    rates = np.sort(np.abs(np.linalg.eigvals(liou).real))
    t = 60.0 / rates[1]
    vec = expm(liou * t) @ (IDENTITY2 / 2).reshape(-1, order="F")
    return _bloch(vec.reshape(2, 2, order="F"))


def _draw_admissible(rng):
    gx, gy, kf = np.exp(rng.uniform(np.log(0.2), np.log(5.0), 3))
    fld = feedback.FieldConfig(*rng.uniform(-1.5, 1.5, 3))
    return fld, gx, gy, kf


@_timed
def criterion_6(seed=DEFAULT_SEED):
    """Closed-form steady states against a linear solve and the long-time limit."""
    crit = Criterion(6, "steady-state closed forms")
    rng = np.random.default_rng(seed)
    worst_lin = worst_ode = 0.0
    for _ in range(100):
        fld, gx, gy, kf = _draw_admissible(rng)
        rates = feedback.rate_constants(gx, gy, kf)
        ss = np.array(bloch.steady_state(fld, rates))
        jac, off = bloch.bloch_matrix(fld, rates)
        lin = np.linalg.solve(jac, -off)
        worst_lin = max(worst_lin, np.linalg.norm(ss - lin) / np.linalg.norm(lin))
        worst_ode = max(worst_ode, np.max(np.abs(ss - asymptotic_bloch(fld, gx, gy, kf))))
    crit.add("closed_form_vs_linear_solve_rel", worst_lin, 1e-9)
    crit.add("closed_form_vs_long_time_limit", worst_ode, 1e-6)
    return crit


@_timed
def criterion_7():
    """Thermal anchors of the diagonal steady state."""
    crit = Criterion(7, "thermal anchors")
    for kf in (0.5, 1.0, 2.0):
        rates = feedback.rate_constants(kf, kf, kf)
        zs = bloch.steady_state(feedback.FieldConfig(0, 0, 1.0), rates).z
        crit.add(f"z_s_plus_1_at_Gamma_eq_kappa_{kf:g}", abs(zs + 1), 0.0)
        crit.add(f"T_eff_at_Gamma_eq_kappa_{kf:g}",
                 bloch.effective_temperature(1.0, rates), 0.0)
    rates = feedback.rate_constants(2.0, 2.0, 1.0)
    t_eff = bloch.effective_temperature(1.0, rates)
    crit.add("T_eff_minus_2_over_ln9", abs(t_eff - 2 / np.log(9)), 1e-12)
    z = asymptotic_bloch(feedback.FieldConfig(0, 0, 1.0), 2.0, 2.0, 1.0)[2]
    t_boltz = -2.0 / np.log((1 + z) / (1 - z))
    crit.add("boltzmann_ratio_T_minus_T_eff", abs(t_boltz - t_eff), 1e-6)
    cfg = build_config("teff-map")
    p = cfg.params
    gammas = bloch.log_grid(p["gamma_min"], p["gamma_max"], p["n_gamma"])
    _, _, tmap, _ = teff_grid(gammas, p["kappa_f"], p["omega_z"], p["k_B"])
    crit.add("map_asymmetry", np.max(np.abs(tmap - tmap.T)), 1e-12)
    minima = np.argwhere(tmap <= tmap.min() + 1e-12)
    at_one = len(minima) == 1 and gammas[minima[0][0]] == 1.0 and gammas[minima[0][1]] == 1.0
    crit.add("minimum_cells_not_unique_at_1_1", 0.0 if at_one else float(len(minima)), 0.0)
    return crit


def _fit_rate(t, y):
    return -float(np.polyfit(t, np.log(y), 1)[0])


def _integrate_bloch(v0, fld, rates, t_final, dt):
    n = continuous.step_count(t_final, dt)
    return rk4(lambda v: bloch.bloch_rhs(v, fld, rates), np.asarray(v0, float), dt, n)


def _branch_params(rng, branch):
    while True:
        gx, gy = np.exp(rng.uniform(np.log(0.3), np.log(3.0), 2))
        kf = np.exp(rng.uniform(np.log(0.3), np.log(1.5)))
        rates = feedback.rate_constants(gx, gy, kf)
        k3 = abs(rates.k3)
        if branch == "oscillatory":
            wz = rng.uniform(0.6, 1.5) * max(k3, 0.1)
        elif branch == "degenerate":
            if k3 < 0.05:
                continue
            wz = 0.5 * k3
        else:
            if k3 < 0.2:
                continue
            wz = rng.uniform(0.1, 0.8) * 0.5 * k3
        fld = feedback.FieldConfig(0.0, 0.0, wz)
        if bloch.relaxation_times(fld, rates).branch == branch:
            return fld, rates


@_timed
def criterion_8(seed=DEFAULT_SEED):
    """Relaxation rates from fits and closed-form solutions against RK4."""
    crit = Criterion(8, "relaxation times")
    v0 = (0.6, -0.3, 0.5)
    # z decay for both branches
    cases = {"oscillatory": (feedback.FieldConfig(0, 0, 1.0), feedback.rate_constants(2.0, 2.0, 1.0)),
             "overdamped": (feedback.FieldConfig(0, 0, 0.5), feedback.rate_constants(4.0, 0.2, 1.0))}
    for name, (fld, rates) in cases.items():
        rt = bloch.relaxation_times(fld, rates)
        assert rt.branch == name
        t_end = 5 * max(rt.tau_z, rt.tau_xy)
        t, v = _integrate_bloch(v0, fld, rates, round(t_end, 1), 1e-3)
        zs = bloch.steady_state(fld, rates).z
        mask = t <= 5 * rt.tau_z
        fit = _fit_rate(t[mask], np.abs(v[mask, 2] - zs))
        crit.add(f"z_rate_rel_error_{name}", abs(fit * rt.tau_z - 1), 0.01)
        if name == "overdamped":
            late = t >= 0.5 * t_end
            fit_xy = _fit_rate(t[late], np.abs(v[late, 0]))
            crit.add("xy_rate_rel_error_overdamped", abs(fit_xy * rt.tau_xy - 1), 0.02)
        else:
            fit_xy = 0.5 * _fit_rate(t, v[:, 0] ** 2 + v[:, 1] ** 2)
            crit.add("xy_rate_rel_error_oscillatory", abs(fit_xy * rt.tau_xy - 1), 0.02)
    rng = np.random.default_rng(seed)
    for branch in ("oscillatory", "degenerate", "overdamped"):
        worst = 0.0
        for _ in range(20):
            fld, rates = _branch_params(rng, branch)
            start = rng.normal(size=3)
            start *= rng.uniform(0.2, 1.0) / np.linalg.norm(start)
            sol = bloch.closed_form_solution(start, fld, rates)
            t, v = _integrate_bloch(start, fld, rates, 10.0, 5e-3)
            worst = max(worst, np.max(np.abs(sol(t) - v)))
        crit.add(f"closed_form_vs_rk4_{branch}", worst, 1e-8)
    return crit


FIELD_PRESETS = {"a": [(0.5, -0.1), (0.5, -0.5), (0.5, -1.0)],
                "b": [(0.1, -0.5), (0.5, -0.5), (1.0, -0.5)]}


@_timed
def criterion_9():
    """Straight reachable-set boundaries and the y_s span."""
    crit = Criterion(9, "reachable-set boundary linearity")
    for panel, presets in FIELD_PRESETS.items():
        for wx, wy in presets:
            bnd = bloch.reachable_set_boundary(feedback.FieldConfig(wx, wy, 0.0), 1.0)
            crit.add(f"max_residual_{panel}_{wx:g}_{wy:g}", bnd.max_residual, 1e-2)
            if panel == "a":
                ys = bnd.samples[:, 1]
                crit.add(f"y_s_span_gap_{wx:g}_{wy:g}",
                         max(abs(ys.min()), abs(ys.max() - 1)), 1e-3)
    return crit


@_timed
def criterion_10(seed=DEFAULT_SEED, n_steps=100_000):
    """Record statistics along one long conditioned trajectory."""
    crit = Criterion(10, "record statistics")
    cfg = continuous.ContinuousConfig(dt=1e-3, zeta=1.0, s1=1.0, s2=0.5)
    rho0 = random_density(2, np.random.default_rng(seed))
    traj = continuous.run_trajectory(rho0, PAULI_Z, SX, SY, cfg, n_steps * cfg.dt,
                                     continuous.TrajectorySeed(seed, 0))
    pre = traj.states[:-1]
    resid = []
    for i, (x, s, op) in enumerate(((traj.record.x1, cfg.s1, SX), (traj.record.x2, cfg.s2, SY)),
                                   start=1):
        r = x - s * np.einsum("ij,nji->n", op, pre).real
        n = len(r)
        var_pred = s / (2 * cfg.zeta * cfg.dt)
        crit.add(f"mean_x{i}_z_score", abs(r.mean()) / np.sqrt(var_pred / n), 3.0)
        crit.add(f"var_x{i}_z_score",
                 abs(r.var(ddof=1) - var_pred) / (var_pred * np.sqrt(2 / (n - 1))), 3.0)
        resid.append(r)
    prod = resid[0] * resid[1]
    crit.add("cross_correlation_z_score",
             abs(prod.mean()) / (prod.std(ddof=1) / np.sqrt(len(prod))), 4.0)
    return crit


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}
_SEEDED = {2, 3, 4, 5, 6, 8, 10}
_THREADED = {3, 5}


def run_criterion(number, seed=DEFAULT_SEED, threads=None):
    func = CRITERIA[number]
    kwargs = {}
    if number in _SEEDED:
        kwargs["seed"] = seed
    if number in _THREADED:
        kwargs["threads"] = threads
    return func(**kwargs)


def run_validation(cfg, threads=None):
    """Run the selected criteria and tabulate every check plus the total runtime."""
    start = time.perf_counter()
    table = ResultTable(["name", "value", "tolerance", "passed"], [], make_metadata(cfg))
    results = []
    for number in cfg.params["criteria"]:
        if number not in CRITERIA:
            from ..errors import ConfigError
            raise ConfigError(f"[validate] unknown criterion {number}")
        crit = run_criterion(number, cfg.master_seed, threads)
        results.append(crit)
        for c in crit.checks:
            table.append([f"c{number}.{c.name}", c.value, c.tolerance, c.passed])
    runtime = time.perf_counter() - start
    table.append(["runtime_seconds", runtime, 600.0, runtime < 600.0])
    table.metadata["summary"] = [c.summary() for c in results]
    table.metadata["all_passed"] = all(c.passed for c in results) and runtime < 600.0
    return table
