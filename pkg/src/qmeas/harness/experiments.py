"""Experiment runners. Each takes an :class:`ExperimentConfig` and returns a :class:`ResultTable`."""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import arthurs_kelly as ak
from .. import bloch, continuous, feedback
from ..errors import ConfigError, InvalidRegimeError, QmeasError
from ..operators import angular_momentum, spin_coherent_state
from .config import XS_PRESETS
from .tables import ResultTable, make_metadata


def _table(cfg, columns, rows):
    return ResultTable(columns, rows, make_metadata(cfg))


def _spin(p):
    j = p["j"]
    lx, ly, lz = angular_momentum(j)
    return lx, ly, lz, spin_coherent_state(j, p["direction"])


def _spin_hamiltonian(p, lx, ly, lz):
    # 2 w.L, which is w.sigma for a qubit
    return 2 * (p["omega_x"] * lx + p["omega_y"] * ly + p["omega_z"] * lz)


def _expectation_columns(states, ops):
    return np.stack([np.einsum("ij,...ji->...", 2 * o, states).real for o in ops], axis=-1)


def run_single_shot(cfg, threads=None):
    p = cfg.params
    lx, ly, _, rho = _spin(p)
    det = ak.DetectorConfig.from_ratios(p["r1"], p["r2"], p["sigma2"])
    grid = ak.PointerGrid.for_config(det, n_points=p["n_points"])
    kernel = ak.measurement_kernel(lx, ly, det, grid)
    mom = ak.exact_moments(rho, lx, ly, det, kernel=kernel)
    ser1 = ak.series_first_moments(rho, lx, ly, det)
    ser2 = ak.series_second_moments(rho, lx, ly, det)
    try:
        eps = ak.relative_deviations(rho, lx, ly, det, kernel=kernel)
    except QmeasError:
        eps = (float("nan"), float("nan"))
    form = ak.deviation_formula_angular(det)
    columns = ["mean_x1", "mean_x2", "mean_x1_sq", "mean_x2_sq", "corr_x1x2",
               "mean_A_post", "mean_B_post", "series_mean_A_post", "series_mean_B_post",
               "series_mean_x1", "series_mean_x2", "series_mean_x1_sq", "series_mean_x2_sq",
               "eps1_exact", "eps2_exact", "eps1_formula", "eps2_formula",
               "completeness_defect"]
    row = [mom.mean_x1, mom.mean_x2, mom.mean_x1_sq, mom.mean_x2_sq, mom.corr_x1x2,
           mom.mean_A_post, mom.mean_B_post, *ser1, *ser2, *eps, *form,
           ak.completeness_defect(kernel)]
    return _table(cfg, columns, [row])


def run_deviation_map(cfg, threads=None):
    p = cfg.params
    if not 0 < p["r_min"] <= p["r_max"] or p["n_r"] < 1:
        raise ConfigError("[deviation-map] need 0 < r_min <= r_max and n_r >= 1")
    lx, ly, _, rho = _spin(p)
    rs = np.linspace(p["r_min"], p["r_max"], p["n_r"])
    cells = [(r1, r2) for r1 in rs for r2 in rs]

    def cell(rr):
        det = ak.DetectorConfig.from_ratios(rr[0], rr[1], p["sigma2"])
        grid = ak.PointerGrid.for_config(det, n_points=p["n_points"])
        exact = ak.relative_deviations(rho, lx, ly, det, grid)
        return [rr[0], rr[1], *ak.deviation_formula_angular(det), *exact]

    with ThreadPoolExecutor(max_workers=continuous.resolve_threads(threads)) as pool:
        rows = list(pool.map(cell, cells))
    columns = ["r1", "r2", "eps1_formula", "eps2_formula", "eps1_exact", "eps2_exact"]
    return _table(cfg, columns, rows)


def run_lindblad(cfg, threads=None):
    p = cfg.params
    lx, ly, lz, rho = _spin(p)
    hs = _spin_hamiltonian(p, lx, ly, lz)
    times, states = continuous.integrate_unconditioned(
        rho, hs, lx, ly, (p["gamma1"], p["gamma2"]), p["t_final"], p["dt_ode"], p["sample_dt"])
    ev = _expectation_columns(states, (lx, ly, lz))
    return _table(cfg, ["t", "x", "y", "z"], np.column_stack([times, ev]).tolist())


def _ensemble_rows(res):
    return np.column_stack([res.times, res.obs_mean, res.obs_stderr]).tolist()


_ENSEMBLE_COLUMNS = ["t", "x", "y", "z", "se_x", "se_y", "se_z"]


def run_sme(cfg, threads=None):
    p = cfg.params
    lx, ly, lz, rho = _spin(p)
    hs = _spin_hamiltonian(p, lx, ly, lz)
    ccfg = continuous.ContinuousConfig.from_gammas(p["dt"], p["gamma1"], p["gamma2"], p["zeta"])
    if p["mode"] == "record":
        traj = continuous.run_trajectory(rho, hs, lx, ly, ccfg, p["t_final"],
                                         continuous.TrajectorySeed(cfg.master_seed, 0),
                                         scheme=p["scheme"])
        rec = traj.record
        return _table(cfg, ["t", "x1", "x2"],
                      np.column_stack([rec.times, rec.x1, rec.x2]).tolist())
    if p["mode"] != "ensemble":
        raise ConfigError(f"[sme] mode must be 'ensemble' or 'record', got {p['mode']!r}")
    res = continuous.ensemble_average(rho, hs, lx, ly, ccfg, p["t_final"], p["n_traj"],
                                      cfg.master_seed, sample_every=p["sample_every"],
                                      threads=threads, scheme=p["scheme"])
    return _table(cfg, _ENSEMBLE_COLUMNS, _ensemble_rows(res))


def _feedback_config(p):
    if p["alphas"]:
        try:
            alphas = [complex(re, im) for re, im in p["alphas"]]
        except (TypeError, ValueError) as exc:
            raise ConfigError("[feedback] alphas must be three [re, im] pairs") from exc
        return feedback.FeedbackConfig.from_alphas(p["kappa_f"], alphas)
    return feedback.FeedbackConfig.lowering_adjoint(p["kappa_f"])


def run_feedback(cfg, threads=None):
    p = cfg.params
    fld = feedback.FieldConfig(p["omega_x"], p["omega_y"], p["omega_z"])
    meas = feedback.SpinMeasurementConfig(p["Gamma_x"], p["Gamma_y"])
    fb = _feedback_config(p)
    rho = spin_coherent_state(0.5, p["direction"])
    if p["mode"] == "signals":
        _, _, sig = feedback.run_feedback_trajectory(
            rho, fld.hamiltonian(), meas, fb, p["dt"], p["t_final"],
            continuous.TrajectorySeed(cfg.master_seed, 0), scheme=p["scheme"])
        times = p["dt"] * np.arange(sig.shape[0])
        return _table(cfg, ["t", "sbar_x", "sbar_y"], np.column_stack([times, sig]).tolist())
    if p["mode"] != "ensemble":
        raise ConfigError(f"[feedback] mode must be 'ensemble' or 'signals', got {p['mode']!r}")
    res = feedback.feedback_ensemble_average(
        rho, fld.hamiltonian(), meas, fb, p["dt"], p["t_final"], p["n_traj"], cfg.master_seed,
        sample_every=p["sample_every"], threads=threads, scheme=p["scheme"])
    return _table(cfg, _ENSEMBLE_COLUMNS, _ensemble_rows(res))


def run_steady_state(cfg, threads=None):
    p = cfg.params
    fld = feedback.FieldConfig(p["omega_x"], p["omega_y"], p["omega_z"])
    rates = feedback.rate_constants(p["Gamma_x"], p["Gamma_y"], p["kappa_f"])
    ss = bloch.steady_state(fld, rates)
    nan = float("nan")
    t_eff = tau_z = tau_xy = nan
    if fld.omega_x == 0 and fld.omega_y == 0:
        rt = bloch.relaxation_times(fld, rates)
        tau_z, tau_xy = rt.tau_z, rt.tau_xy
        if fld.omega_z > 0:
            try:
                t_eff = bloch.effective_temperature(fld.omega_z, rates, p["k_B"])
            except InvalidRegimeError:
                pass
    columns = ["k1", "k2", "k3", "eta", "discriminant", "x_s", "y_s", "z_s", "T_eff",
               "tau_z", "tau_xy"]
    row = [rates.k1, rates.k2, rates.k3, rates.eta(fld), rates.discriminant(fld.omega_z),
           *ss, t_eff, tau_z, tau_xy]
    return _table(cfg, columns, [row])


def _gamma_grid(p, kind):
    try:
        return bloch.log_grid(p["gamma_min"], p["gamma_max"], p["n_gamma"])
    except QmeasError as exc:
        raise ConfigError(f"[{kind}] {exc}") from exc


def teff_grid(gammas, kappa_f, omega_z, k_B):
    """``(T_eff, z_s)`` over the ``Gamma_x x Gamma_y`` grid at ``omega_x = omega_y = 0``."""
    gx, gy = np.meshgrid(gammas, gammas, indexing="ij")
    rates = feedback.rate_constants(gx, gy, kappa_f)
    up = rates.k1 + rates.k3
    down = rates.k2 + rates.k3
    z_s = (rates.k2 - rates.k1) / rates.total
    with np.errstate(divide="ignore"):
        t_eff = np.where(down <= 0, 0.0, 2 * omega_z / (k_B * np.log(up / np.where(down > 0, down, 1))))
    return gx, gy, t_eff, z_s


def run_teff_map(cfg, threads=None):
    p = cfg.params
    if p["omega_z"] <= 0 or p["k_B"] <= 0:
        raise ConfigError("[teff-map] omega_z and k_B must be positive")
    gammas = _gamma_grid(p, "teff-map")
    gx, gy, t_eff, z_s = teff_grid(gammas, p["kappa_f"], p["omega_z"], p["k_B"])
    rows = np.column_stack([gx.ravel(), gy.ravel(), t_eff.ravel(), z_s.ravel()]).tolist()
    return _table(cfg, ["Gamma_x", "Gamma_y", "T_eff", "z_s"], rows)


def xs_field(p):
    if p["omega_x"] is not None or p["omega_y"] is not None:
        if p["omega_x"] is None or p["omega_y"] is None:
            raise ConfigError("[xs-map] give both omega_x and omega_y or neither")
        return feedback.FieldConfig(p["omega_x"], p["omega_y"], 0.0)
    if p["preset"] not in XS_PRESETS:
        raise ConfigError(f"[xs-map] preset must be one of {sorted(XS_PRESETS)}")
    return feedback.FieldConfig(*XS_PRESETS[p["preset"]], 0.0)


def run_xs_map(cfg, threads=None):
    p = cfg.params
    fld = xs_field(p)
    gammas = _gamma_grid(p, "xs-map")
    xs, ys = bloch.steady_offdiagonal_grid(fld, p["kappa_f"], gammas, gammas)
    gx, gy = np.meshgrid(gammas, gammas, indexing="ij")
    rows = np.column_stack([gx.ravel(), gy.ravel(), xs.ravel(), ys.ravel()]).tolist()
    return _table(cfg, ["Gamma_x", "Gamma_y", "x_s", "y_s"], rows)


def run_reachable_boundary(cfg, threads=None):
    p = cfg.params
    fld = feedback.FieldConfig(p["omega_x"], p["omega_y"], 0.0)
    gammas = _gamma_grid(p, "reachable-boundary")
    bnd = bloch.reachable_set_boundary(fld, p["kappa_f"], gammas, gammas)
    rows = np.column_stack([bnd.points, bnd.residuals]).tolist()
    table = _table(cfg, ["x_s", "y_s", "residual"], rows)
    table.metadata["line"] = {"normal": bnd.normal.tolist(), "offset": bnd.offset,
                              "max_residual": bnd.max_residual}
    return table


def run_validate(cfg, threads=None):
    from .validation import run_validation

    return run_validation(cfg, threads=threads)


RUNNERS = {
    "single-shot": run_single_shot,
    "deviation-map": run_deviation_map,
    "lindblad": run_lindblad,
    "sme": run_sme,
    "feedback": run_feedback,
    "steady-state": run_steady_state,
    "teff-map": run_teff_map,
    "xs-map": run_xs_map,
    "reachable-boundary": run_reachable_boundary,
    "validate": run_validate,
}


def run_experiment(cfg, threads=None):
    return RUNNERS[cfg.experiment](cfg, threads=threads)
