"""Command-line interface: config handling, exit codes, file outputs."""

import json
import subprocess
import sys

import pytest

from qsdsim.cli import config_hash, effective_config, load_config, main


def _hash(cfg):
    return config_hash(effective_config(cfg, "master"))

BASE = {
    "params": {"omega_s": 1.0, "lambda": 1.0, "gamma": 0.5, "Omega": 0.0},
    "initial_state": "10",
    "model": "zeroth",
    "dt": 0.02,
    "T": 0.5,
    "n_traj": 8,
    "seed": 0,
    "output_stride": 10,
}


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = dict(BASE)
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_master_roundtrip_and_manifest(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run.csv"
    assert main(["master", "--config", cfg, "--output", str(out)]) == 0
    text = out.read_text()
    header = text.splitlines()[0].split(",")
    assert header[0] == "t" and "re_r11" in header
    assert header[-1] == "concurrence"
    manifest = json.loads((tmp_path / "run.csv.manifest.json").read_text())
    assert manifest["schema"] == "master-v1"
    assert manifest["config"]["model"] == "zeroth"
    assert len(manifest["config_hash"]) == 40
    # rerun: byte-identical output, same hash
    out2 = tmp_path / "rerun.csv"
    assert main(["master", "--config", cfg, "--output", str(out2)]) == 0
    assert out2.read_text() == text
    manifest2 = json.loads((tmp_path / "rerun.csv.manifest.json").read_text())
    assert manifest2["config_hash"] == manifest["config_hash"]


def test_ensemble_deterministic_output(tmp_path):
    cfg = write_config(tmp_path, n_traj=16)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["ensemble", "--config", cfg, "--output", str(a)]) == 0
    assert main(["ensemble", "--config", cfg, "--output", str(b),
                 "--threads", "2"]) == 0
    assert a.read_text() == b.read_text()
    header = a.read_text().splitlines()[0].split(",")
    assert "stderr_r11" in header and header[-1] == "concurrence"


def test_steady_json_payload(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "steady.json"
    assert main(["steady", "--config", cfg, "--output", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["r"] == pytest.approx(0.25, abs=1e-9)
    assert payload["concurrence_inf"] == pytest.approx(0.5, abs=1e-9)
    assert payload["method"] == "closed-form"


def test_overrides_and_hash_sensitivity(tmp_path):
    cfg = write_config(tmp_path)
    c0 = load_config(cfg, [])
    c1 = load_config(cfg, ["params.gamma=0.75", "T=1.0"])
    assert c1.params.gamma == 0.75 and c1.T == 1.0
    assert _hash(c0) != _hash(c1)
    # a JSON-numeric preset coerces to its preset name
    c2 = load_config(cfg, ["initial_state=10"])
    assert c2.initial_state == "10"
    # raw-string fallback for non-JSON values
    c3 = load_config(cfg, ["model=weak3"])
    assert c3.model == "weak3"
    # output_path does not enter the hash
    c4 = load_config(cfg, ["output_path=elsewhere.csv"])
    assert _hash(c4) == _hash(c0)


def test_sweep_deterministic_reference_fidelity(tmp_path):
    cfg = write_config(tmp_path, n_traj=0, T=2.0,
                       gamma_list=[0.4, 0.6])
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", cfg, "--output", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "gamma,delta,t,concurrence,fidelity"
    rows = [ln.split(",") for ln in lines[1:]]
    gammas = {row[0] for row in rows}
    assert gammas == {"0.4", "0.6"}
    # the zeroth model IS the sweep reference: fidelity column pegged at 1
    assert all(float(row[4]) == pytest.approx(1.0, abs=1e-12) for row in rows)


def test_figure_rendering(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run.csv"
    fig = tmp_path / "run.png"
    assert main(["master", "--config", cfg, "--output", str(out),
                 "--figure", str(fig)]) == 0
    data = fig.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"


@pytest.mark.parametrize("argv_patch, config_patch", [
    (None, {"model": "weak2"}),                      # no such truncation
    (None, {"model": "exact", "_cmd": "master"}),    # exact needs noise
    (None, {"initial_state": "11", "_cmd": "analytic"}),  # family violation
    (None, {"bogus_key": 1}),                        # unknown config key
    (None, {"initial_state": None}),                 # missing required field
    (None, {"_cmd": "sweep"}),                       # sweep without any axis
    (None, {"_cmd": "sweep", "gamma_list": []}),     # sweep with empty axis
    (None, {"_cmd": "fidelity-compare", "n_traj": 8}),  # band needs >= 1000
    (None, {"dt": -0.01}),                           # invalid numerics
    (None, {"noise_kernel": "paper"}),               # unknown kernel name
])
def test_config_errors_exit_2(tmp_path, capsys, argv_patch, config_patch):
    patch = dict(config_patch)
    cmd = patch.pop("_cmd", "master")
    cfg_dict = dict(BASE)
    cfg_dict.update(patch)
    cfg_dict = {k: v for k, v in cfg_dict.items() if v is not None}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg_dict))
    rc = main([cmd, "--config", str(path),
               "--output", str(tmp_path / "out")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_steady_refuses_figure(tmp_path, capsys):
    cfg = write_config(tmp_path)
    rc = main(["steady", "--config", cfg, "--output",
               str(tmp_path / "s.json"), "--figure", str(tmp_path / "s.png")])
    assert rc == 2
    assert "no figure" in capsys.readouterr().err


def test_default_output_paths(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_config(tmp_path)
    assert main(["analytic", "--config", cfg]) == 0
    assert (tmp_path / "analytic.csv").exists()
    assert (tmp_path / "analytic.csv.manifest.json").exists()


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "cli.json"
    proc = subprocess.run(
        [sys.executable, "-m", "qsdsim.cli", "steady", "--config", cfg,
         "--output", str(out)],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["r"] == pytest.approx(0.25, abs=1e-9)
