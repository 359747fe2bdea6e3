import json
import os

import numpy as np
import pytest

from slowfast.builtins import build_system, list_builtins
from slowfast.cli import main
from slowfast.errors import ConfigError
from slowfast.scenarios import ScenarioConfig, config_hash, run_scenario


def write_config(tmp_path, name="cfg.toml", **overrides):
    base = {
        "experiment": "averaging-convergence",
        "system": "rotator",
        "eps_grid": [1e-1, 1e-2],
        "horizon": 0.5,
        "n_paths": 200,
        "step": 2e-3,
        "seed": 7,
        "out_dir": str(tmp_path / "out"),
        "quadrature_points": 16,
    }
    base.update(overrides)
    lines = []
    for k, v in base.items():
        if isinstance(v, str):
            lines.append(f'{k} = "{v}"')
        elif isinstance(v, bool):
            lines.append(f"{k} = {str(v).lower()}")
        elif isinstance(v, list):
            lines.append(f"{k} = {v}")
        elif isinstance(v, dict):
            continue
        else:
            lines.append(f"{k} = {v}")
    for k, v in base.items():
        if isinstance(v, dict):
            lines.append(f"[{k}]")
            for kk, vv in v.items():
                lines.append(f'{kk} = "{vv}"' if isinstance(vv, str) else f"{kk} = {vv}")
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return p


def read_all(out_dir):
    blobs = {}
    for root, _dirs, files in os.walk(out_dir):
        for f in sorted(files):
            full = os.path.join(root, f)
            with open(full, "rb") as fh:
                blobs[os.path.relpath(full, out_dir)] = fh.read()
    return blobs


def test_list_shows_catalog(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("rotator", "ou", "duffing-chain"):
        assert name in out


def test_validate_and_run_roundtrip(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    assert main(["validate", str(cfg_path)]) == 0
    assert main(["run", str(cfg_path)]) == 0
    out_dir = tmp_path / "out"
    assert (out_dir / "distances.csv").exists()
    assert (out_dir / "report.json").exists()
    report = json.loads((out_dir / "report.json").read_text())
    assert report["scenario"]["system"] == "rotator"
    assert "wall_clock" not in json.dumps(report)   # timing kept out of files
    assert len(report["rows"]) == 2


def test_rerun_is_bitwise_identical(tmp_path):
    cfg_path = write_config(tmp_path)
    assert main(["run", str(cfg_path)]) == 0
    first = read_all(tmp_path / "out")
    assert main(["run", str(cfg_path)]) == 0
    second = read_all(tmp_path / "out")
    assert first.keys() == second.keys()
    for k in first:
        assert first[k] == second[k], k


def test_unknown_system_exits_2(tmp_path, capsys):
    cfg_path = write_config(tmp_path, system="warp-drive")
    assert main(["validate", str(cfg_path)]) == 2
    assert "unknown builtin" in capsys.readouterr().err


def test_missing_and_malformed_config_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("experiment = [unclosed\n")
    assert main(["run", str(bad)]) == 2


def test_bad_eps_grid_exits_2(tmp_path):
    cfg_path = write_config(tmp_path, eps_grid=[0.5, 2.0])
    assert main(["validate", str(cfg_path)]) == 2


def test_numerical_blowup_exits_3(tmp_path, capsys):
    cfg_path = write_config(tmp_path, name="boom.toml",
                            system_params={"base": -4000.0},
                            eps_grid=[1e-1], n_paths=4)
    assert main(["run", str(cfg_path)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_duffing_chain_requires_profile(tmp_path):
    with pytest.raises(ConfigError, match="profile"):
        build_system("duffing-chain")
    cfg_path = write_config(tmp_path, system="duffing-chain", n_paths=4)
    assert main(["run", str(cfg_path)]) == 2


def test_threads_env_and_flag(tmp_path, monkeypatch):
    cfg_path = write_config(tmp_path, n_paths=32)
    monkeypatch.setenv("SLOWFAST_THREADS", "4")
    assert main(["run", str(cfg_path)]) == 0
    first = read_all(tmp_path / "out")
    assert main(["run", str(cfg_path), "--threads", "1"]) == 0
    second = read_all(tmp_path / "out")
    for k in first:
        assert first[k] == second[k], k


def test_out_dir_override(tmp_path):
    cfg_path = write_config(tmp_path)
    other = tmp_path / "elsewhere"
    assert main(["run", str(cfg_path), "--out-dir", str(other)]) == 0
    assert (other / "distances.csv").exists()


def test_normal_form_build_scenario_then_chain(tmp_path):
    cfg = ScenarioConfig(experiment="normal-form-build", system="duffing",
                         out_dir=str(tmp_path / "nf"),
                         extra={"hamiltonian": "duffing", "levels": 40,
                                "a_lo": 0.05, "a_hi": 2.0})
    report = run_scenario(cfg, echo=lambda *_: None)
    profile_path = tmp_path / "nf" / "profile.json"
    assert profile_path.exists()
    assert report.rows[0]["omega_period_crosscheck"] < 1e-3

    chain = build_system("duffing-chain", {"profile": str(profile_path), "n": 2})
    assert chain.n == 2


def test_resonance_scan_scenario(tmp_path):
    cfg = ScenarioConfig(experiment="resonance-scan", system="rotator",
                         out_dir=str(tmp_path / "res"), seed=3,
                         extra={"N_grid": [5.0, 50.0], "delta": 0.3,
                                "radius": 1.5, "samples": 24})
    report = run_scenario(cfg, echo=lambda *_: None)
    assert len(report.rows) == 2
    assert report.rows[0]["estimate"] >= report.rows[1]["estimate"] - 2 * (
        report.rows[0]["ci_half_width"] + report.rows[1]["ci_half_width"])


def test_config_hash_tracks_content(tmp_path):
    a = ScenarioConfig(experiment="resonance-scan", system="rotator")
    b = ScenarioConfig(experiment="resonance-scan", system="rotator", seed=1)
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) == config_hash(
        ScenarioConfig(experiment="resonance-scan", system="rotator"))


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ScenarioConfig.from_dict({"experiment": "resonance-scan",
                                  "system": "rotator", "swagger": 1})
