import json

import numpy as np
import pytest

from qmeas import feedback
from qmeas.errors import ConfigError, InvalidArgumentError
from qmeas.harness import cli
from qmeas.harness.config import ExperimentConfig, build_config, parse_config
from qmeas.harness.experiments import run_experiment
from qmeas.harness.tables import ResultTable, metadata_path, read_csv
from qmeas.harness.validation import criterion_6, run_criterion


def table_array(table, *names):
    return np.array([table.column(n) for n in names], dtype=float).T


def test_parse_defaults_and_overrides():
    cfg = parse_config("master_seed = 9\n[teff-map]\nn_gamma = 5\n", "teff-map")
    assert cfg.master_seed == 9
    assert cfg.params["n_gamma"] == 5
    assert cfg.params["gamma_min"] == 0.1
    # integer written for a float field is accepted and coerced
    cfg = parse_config("[steady-state]\nGamma_x = 3\n", "steady-state")
    assert cfg.params["Gamma_x"] == 3.0 and isinstance(cfg.params["Gamma_x"], float)
    assert parse_config("", "validate").params["criteria"] == list(range(1, 11))


@pytest.mark.parametrize("text", [
    "[teff-map]\nbogus = 1\n",
    "[nonsense]\nx = 1\n",
    "stray = 3\n",
    "[teff-map]\nn_gamma = 'many'\n",
    "[teff-map]\nn_gamma = 2.5\n",
    "[teff-map\n",
    "[teff-map]\n[teff-map.inner]\nx = 1\n",
    "master_seed = -4\n",
])
def test_parse_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text, "teff-map")


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        build_config("plot")


def test_config_echo_roundtrip():
    cfg = parse_config("master_seed = 4\n[sme]\nn_traj = 7\ndirection = [0.0, 1.0, 1.0]\n", "sme")
    echo = json.loads(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_dict(echo) == cfg


def test_table_csv_format(tmp_path):
    t = ResultTable(["name", "value", "ok"], [["a", 0.1, True], ["b", 1 / 3, False]],
                    {"k": 1})
    text = t.to_csv()
    assert text == "name,value,ok\na,0.10000000000000001,1\nb,0.33333333333333331,0\n"
    path = tmp_path / "out.csv"
    t.write(path)
    assert b"\r" not in path.read_bytes()
    back = read_csv(path)
    assert back.rows == [["a", 0.1, 1.0], ["b", 1 / 3, 0.0]]
    assert back.metadata == {"k": 1}
    assert metadata_path(path).name == "out.json"
    with pytest.raises(InvalidArgumentError):
        t.append([1.0])


def test_float_roundtrip_is_exact(tmp_path, rng):
    vals = rng.normal(size=50) * 10.0 ** rng.integers(-300, 300, 50)
    t = ResultTable(["v"], [[v] for v in vals])
    t.write(tmp_path / "v.csv")
    back = np.array(read_csv(tmp_path / "v.csv").column("v"))
    np.testing.assert_array_equal(back, vals)


def test_deviation_map_rows():
    cfg = build_config("deviation-map", {"r_min": 0.01, "r_max": 0.5, "n_r": 2})
    table = run_experiment(cfg)
    assert table.columns == ["r1", "r2", "eps1_formula", "eps2_formula", "eps1_exact",
                             "eps2_exact"]
    data = table_array(table, *table.columns)
    top = data[(data[:, 0] == 0.5) & (data[:, 1] == 0.5)][0]
    assert top[2] == pytest.approx(0.0847, abs=5e-5)
    assert 0.08 <= top[4] <= 0.12
    low = data[(data[:, 0] == 0.01) & (data[:, 1] == 0.01)][0]
    assert low[2] == pytest.approx(0.01 / 6, rel=0.05)
    assert low[4] == pytest.approx(0.01 / 6, rel=0.05)


def test_deviation_map_formula_monotone():
    cfg = build_config("deviation-map", {"r_min": 0.05, "r_max": 0.5, "n_r": 3})
    data = table_array(run_experiment(cfg), "r1", "r2", "eps1_formula", "eps2_formula")
    eps1 = data[:, 2].reshape(3, 3)
    eps2 = data[:, 3].reshape(3, 3)
    # eps1 grows with r2 and eps2 with r1
    assert np.all(np.diff(eps1, axis=1) > 0)
    assert np.all(np.diff(eps2, axis=0) > 0)


def test_teff_map_examples():
    cfg = build_config("teff-map", {"gamma_min": 0.5, "gamma_max": 2.0, "n_gamma": 3})
    data = table_array(run_experiment(cfg), "Gamma_x", "Gamma_y", "T_eff", "z_s")
    centre = data[(data[:, 0] == 1.0) & (data[:, 1] == 1.0)][0]
    assert centre[2] == 0.0 and centre[3] == -1.0
    corner = data[(data[:, 0] == 2.0) & (data[:, 1] == 2.0)][0]
    assert corner[2] == pytest.approx(2 / np.log(9), rel=1e-14)
    grid = data[:, 2].reshape(3, 3)
    np.testing.assert_allclose(grid, grid.T, atol=1e-14)
    assert np.argmin(grid) == 4


def test_xs_map_presets():
    maps = {}
    for preset in "abc":
        data = table_array(run_experiment(build_config("xs-map", {"preset": preset, "n_gamma": 41})),
                           "x_s")
        maps[preset] = data[:, 0]
    assert np.abs(maps["a"] - maps["b"]).max() < np.abs(maps["a"] - maps["c"]).max() / 3
    cfg = build_config("xs-map", {"omega_x": 0.0, "omega_y": 0.0, "n_gamma": 11})
    assert np.all(np.array(run_experiment(cfg).column("x_s")) == 0)
    with pytest.raises(ConfigError):
        run_experiment(build_config("xs-map", {"preset": "z"}))
    with pytest.raises(ConfigError):
        run_experiment(build_config("xs-map", {"omega_x": 0.1}))


def test_reachable_boundary_table():
    table = run_experiment(build_config("reachable-boundary"))
    assert table.columns == ["x_s", "y_s", "residual"]
    assert max(abs(r) for r in table.column("residual")) <= 1e-2
    assert table.metadata["line"]["max_residual"] <= 1e-2


def test_steady_state_table():
    table = run_experiment(build_config("steady-state"))
    row = dict(zip(table.columns, table.rows[0]))
    assert (row["k1"], row["k2"], row["k3"]) == (2.25, 0.25, 0.0)
    assert row["T_eff"] == pytest.approx(2 / np.log(9))
    assert row["tau_z"] == pytest.approx(0.4)


def test_single_shot_and_lindblad():
    table = run_experiment(build_config("single-shot"))
    row = dict(zip(table.columns, table.rows[0]))
    assert row["eps1_exact"] == pytest.approx(row["eps1_formula"], abs=2 * 0.1**3)
    assert row["completeness_defect"] < 1e-6
    lind = run_experiment(build_config("lindblad", {"t_final": 0.1}))
    assert lind.columns == ["t", "x", "y", "z"]
    assert len(lind.rows) == 11


def test_sme_and_feedback_outputs():
    rec = run_experiment(build_config("sme", {"mode": "record", "t_final": 0.01}))
    assert rec.columns == ["t", "x1", "x2"] and len(rec.rows) == 10
    sig = run_experiment(build_config("feedback", {"mode": "signals", "t_final": 0.01}))
    assert sig.columns == ["t", "sbar_x", "sbar_y"]
    ens = run_experiment(build_config("feedback", {"n_traj": 8, "t_final": 0.02,
                                                   "alphas": [[0, -0.25], [0.25, 0], [0, 0]]}))
    assert ens.columns[:4] == ["t", "x", "y", "z"]
    with pytest.raises(ConfigError):
        run_experiment(build_config("sme", {"mode": "movie"}))


def write_config(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return str(path)


def test_cli_byte_identical_across_threads(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, "[sme]\nn_traj = 300\nt_final = 0.05\nsample_every = 5\n")
    out1, out4 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["sme", "--config", cfg, "--threads", "1", "--out", str(out1)]) == 0
    monkeypatch.setenv("QMEAS_THREADS", "4")
    assert cli.main(["sme", "--config", cfg, "--out", str(out4)]) == 0
    assert out1.read_bytes() == out4.read_bytes()
    assert metadata_path(out1).read_bytes() == metadata_path(out4).read_bytes()


def test_cli_metadata_reproduces_run(tmp_path):
    cfg = write_config(tmp_path, "master_seed = 3\n[sme]\nmode = 'record'\nt_final = 0.02\n")
    out = tmp_path / "rec.csv"
    assert cli.main(["sme", "--config", cfg, "--seed", "11", "--out", str(out)]) == 0
    meta = json.loads(metadata_path(out).read_text())
    assert meta["master_seed"] == 11
    again = run_experiment(ExperimentConfig.from_dict(meta["config"]))
    assert again.to_csv() == out.read_text()


def test_cli_stdout_and_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path, "")
    assert cli.main(["steady-state", "--config", cfg]) == 0
    assert capsys.readouterr().out.startswith("k1,k2,k3,")
    bad = write_config(tmp_path, "[steady-state]\nGamma_x = -1.0\n")
    assert cli.main(["steady-state", "--config", bad]) == 2
    assert cli.main(["steady-state", "--config", str(tmp_path / "missing.toml")]) == 2
    unknown = write_config(tmp_path, "[steady-state]\nfoo = 1\n")
    assert cli.main(["steady-state", "--config", unknown]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["draw", "--config", cfg])
    assert exc.value.code == 2


def test_cli_validate_subset(tmp_path, capsys):
    cfg = write_config(tmp_path, "[validate]\ncriteria = [4, 7, 9]\n")
    assert cli.main(["validate", "--config", cfg]) == 0
    out = capsys.readouterr()
    assert out.out.startswith("name,value,tolerance,passed\n")
    assert "runtime_seconds" in out.out
    assert "criterion  4 [PASS]" in out.err


def tamper(monkeypatch):
    real = feedback.rate_constants

    def shifted(gx, gy, kf):
        r = real(gx, gy, kf)
        return feedback.RateConstants(r.k1 + 1e-3, r.k2, r.k3)

    monkeypatch.setattr(feedback, "rate_constants", shifted)


def test_tampered_k1_fails_steady_state_check(monkeypatch, tmp_path):
    assert criterion_6().passed
    tamper(monkeypatch)
    crit = criterion_6()
    assert not crit.passed
    cfg = write_config(tmp_path, "[validate]\ncriteria = [6]\n")
    assert cli.main(["validate", "--config", cfg, "--out", str(tmp_path / "v.csv")]) == 1


def test_criteria_are_deterministic():
    a = run_criterion(9)
    b = run_criterion(9)
    assert [c.value for c in a.checks] == [c.value for c in b.checks]
