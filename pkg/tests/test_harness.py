from __future__ import annotations

import json
from dataclasses import replace

import pytest

from sapcode import cli, harness
from sapcode.harness import ConfigError, ExperimentConfig, load_config, run_scenario, trial_seed

FAST = {"trials": 6, "threshold": 4.5, "n_antennas": 64, "measure_sinr": False}


def _cfg(**kw) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict({**FAST, **kw})
    cfg.validate()
    return cfg


def test_defaults_validate():
    ExperimentConfig().validate()


@pytest.mark.parametrize(
    "bad",
    [
        {"attack_mode": "loud"},
        {"trials": -1},
        {"n_users": 11},
        {"n_users": 6},  # more users than the 5 clusters
        {"n_antennas": 4},
        {"features": "guess"},
        {"attribution_path": "oracle"},
        {"threshold": None, "calibration_trials": 100},
        {"workers": 0},
        {"m_data": 200, "t_extra_us": 300.0},
        {"sweep": {"variable": "n_users"}},
        {"q": 4},
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        _cfg(**bad)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"antennas": 3})


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n_antennas": 64, "trials": 3, "attack_mode": "PB-PJ"}))
    cfg = load_config(path, trials=9, seed=None)
    assert cfg.trials == 9 and cfg.system.n_antennas == 64 and cfg.attack_mode == "PB-PJ"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_to_dict_round_trip():
    cfg = _cfg(attack_mode="mixed", seed=5)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_trial_seed_stable_and_distinct():
    assert trial_seed(3, 7) == trial_seed(3, 7)
    assert len({trial_seed(3, t) for t in range(200)}) == 200
    assert trial_seed(3, 0) != trial_seed(4, 0)


def test_zero_trials():
    summary, records = run_scenario(_cfg(trials=0))
    assert records == [] and summary.trials == 0 and summary.per_mode == {}


def test_determinism_and_worker_independence():
    cfg = _cfg(attack_mode="mixed", seed=11, measure_sinr=True)
    _, a = run_scenario(cfg)
    _, b = run_scenario(cfg)
    _, c = run_scenario(replace(cfg, workers=2))

    def strip(rs):
        return [replace(r, t_features_s=0.0, t_decode_s=0.0) for r in rs]

    assert strip(a) == strip(b) == strip(c)
    assert [r.attack_truth for r in a] == ["SC", "WB-PJ", "PB-PJ"] * 2


def test_ideal_features_all_modes_recover():
    summary, _ = run_scenario(_cfg(features="ideal", attack_mode="mixed", trials=30))
    assert summary.amd_accuracy == 1.0
    assert summary.uad_rate == summary.pilot_rate == 1.0


def test_csv_round_trip(tmp_path):
    cfg = _cfg(attack_mode="mixed", measure_sinr=True)
    summary, records = run_scenario(cfg)
    path = tmp_path / "r.csv"
    harness.write_records(path, records, cfg.to_dict())
    meta, _ = harness.read_csv(path)
    assert meta["attack_mode"] == "mixed" and meta["n_antennas"] == 64
    back = harness.read_records(path)
    assert back == records
    assert harness.summarize(back) == summary


def test_sweep_values():
    assert harness.sweep_values({"start": 2, "stop": 6, "step": 2}) == [2, 4, 6]
    assert harness.sweep_values({"start": 0.0, "stop": 0.3, "step": 0.1}) == pytest.approx([0.0, 0.1, 0.2, 0.3])


def test_run_sweep_over_users():
    cfg = _cfg(features="ideal", trials=3, sweep={"variable": "n_users", "start": 2, "stop": 3, "step": 1})
    points = harness.run_sweep(cfg)
    assert [v for v, _ in points] == [2, 3]
    assert all(s.trials == 3 for _, s in points)
    with pytest.raises(ConfigError):
        harness.run_sweep(replace(cfg, sweep=None))


@pytest.mark.parametrize(
    "name,overrides,columns",
    [
        ("fig6", {"trials": 200, "users": [4]}, ["K", "threshold", "P_f", "mp_bound"]),
        ("fig7", {}, ["k", "K", "q", "N_E", "R_c"]),
        ("fig8", {}, ["k", "m_D", "K", "N_E", "T_us"]),
        ("fig9", {}, ["sweep_variable", "P_d", "P_e", "gamma_asy", "T_us", "K", "delta_f_hz", "m_D"]),
        ("fig10", {}, ["sweep_variable", "P_d", "P_e", "gamma_asy", "T_us", "K"]),
    ],
)
def test_figure_csvs(tmp_path, name, overrides, columns):
    path = harness.figure_command(name, tmp_path / f"{name}.csv", overrides)
    meta, rows = harness.read_csv(path)
    assert meta["figure"] == name
    assert list(rows[0]) == columns and len(rows) > 1


def test_fig6_monotone(tmp_path):
    path = harness.figure_command("fig6", tmp_path / "f.csv", {"trials": 500, "users": [12]})
    pf = [float(r["P_f"]) for r in harness.read_csv(path)[1]]
    assert all(b <= a for a, b in zip(pf, pf[1:]))
    assert pf[-1] == 0.0


def test_figure_option_errors():
    with pytest.raises(ConfigError):
        harness.figure_options("fig99")
    with pytest.raises(ConfigError):
        harness.figure_options("fig9", {"gamma": 1})


# CLI -----------------------------------------------------------------------


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_codebook_export_and_verify(tmp_path, capsys):
    path = tmp_path / "b.txt"
    code, out, _ = _run(["codebook", "--q", "5", "--k", "2", "--K", "3", "--G", "3", "--out", str(path)], capsys)
    assert code == 0 and json.loads(out)["length"] == 20
    code, out, _ = _run(["codebook", "--verify", str(path)], capsys)
    assert code == 0 and json.loads(out)["length"] == 20


def test_cli_simulate_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**FAST, "features": "ideal"}))
    out = tmp_path / "run.csv"
    code, text, _ = _run(["simulate", "--config", str(cfg), "--attack", "mixed", "--seed", "2", "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(text)["uad_rate"] == 1.0
    assert len(harness.read_records(out)) == FAST["trials"]
    assert json.loads(out.with_suffix(".summary.json").read_text())["trials"] == FAST["trials"]


def test_cli_truth_table(capsys):
    code, out, _ = _run(["quantum-truth-table"], capsys)
    assert code == 0
    assert [r["parity"] for r in json.loads(out)["truth_table"]] == [0, 0, 1, 1]


def test_cli_calibrate(capsys):
    code, out, _ = _run(["calibrate", "--antennas", "64", "--users", "3", "--trials", "10000", "--seed", "1"], capsys)
    info = json.loads(out)
    assert code == 0 and info["threshold"] >= info["mp_bound"]


def test_cli_figure_override(tmp_path, capsys):
    out = tmp_path / "f7.csv"
    code, _, _ = _run(["figure", "fig7", "--set", "users=[4]", "--set", "k_values=[2]", "--out", str(out)], capsys)
    assert code == 0
    assert {r["K"] for r in harness.read_csv(out)[1]} == {"4"}


@pytest.mark.parametrize(
    "argv,code,kind",
    [
        (["simulate", "--config", "/nonexistent/c.json"], 3, "io"),
        (["codebook", "--q", "4", "--k", "2", "--K", "2"], 2, "config"),
        (["calibrate", "--trials", "100"], 2, "config"),
        (["figure", "fig9", "--set", "nope=1"], 2, "config"),
    ],
)
def test_cli_error_codes(argv, code, kind, capsys):
    rc, out, err = _run(argv, capsys)
    assert rc == code and out == ""
    line = json.loads(err.strip())
    assert line["error"] == kind and line["message"]


def test_cli_bad_json_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{")
    rc, _, err = _run(["simulate", "--config", str(cfg)], capsys)
    assert rc == 2 and json.loads(err)["error"] == "config"
