import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from dcmsim import __version__
from dcmsim.cli import main
from dcmsim.config import build_config, load_config
from dcmsim.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "name": "t",
    "seed": 5,
    "dims": {"A": 2, "B": 2},
    "operators": {"hA": "zero", "hB": "zero", "L": ["pauli_z"], "M": ["zero"]},
    "noise": {"kind": "real", "sigmaAA": [[0.5]], "sigmaBB": [[0.0]], "sigmaAB": [[0.0]]},
    "micro": {"ensembleSize": 200, "initial": {"kind": "fixed", "x": [1, 1], "y": [1, 0]}},
    "window": {"epsilon": 0.2, "cDelta": 0.5, "cDeltaT": 0.05, "tauGrid": {"start": 0, "stop": 1, "num": 5}},
    "reference": {"variant": "generic_gksl"},
    "noiseCheck": {"dt": 0.01, "nSamples": 2000, "lags": 2},
}


def write(tmp_path, cfg, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def edit(**patch):
    cfg = json.loads(json.dumps(BASE))
    for path, value in patch.items():
        node = cfg
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return cfg


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0][2:])
    rows = list(csv.DictReader(lines[1:]))
    return meta, rows


def test_bundled_configs_validate(capsys):
    for name in ("dephasing", "closed_two_qubit", "interacting_feedback"):
        assert main(["validate", "--config", str(CONFIGS / f"{name}.yaml")]) == 0
    assert "config ok" in capsys.readouterr().out


def test_simulate_writes_series(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", write(tmp_path, BASE), "--out", str(out), "--workers", "1"]) == 0
    meta, rows = read_csv(out / "series_0.2.csv")
    assert meta["version"] == __version__ and meta["config"]["seed"] == 5
    assert meta["config"]["operators"]["L"] == ["pauli_z"]
    assert len(rows) == 5 and rows[0]["source"] == "pipeline"
    js = json.loads((out / "series_0.2.json").read_text())
    assert js["metadata"]["config"]["noise"]["sigmaAA"] == [[0.5]]
    assert "rho_reference" in js["series"][0] and js["metadata"]["error"] >= 0


def test_reproducible_and_seed_override(tmp_path):
    cfg = write(tmp_path, BASE)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "6"])
    strip = lambda p: Path(p).read_text().split("\n", 1)[1]
    assert strip(tmp_path / "a/series_0.2.csv") == strip(tmp_path / "b/series_0.2.csv")
    assert strip(tmp_path / "a/series_0.2.csv") != strip(tmp_path / "c/series_0.2.csv")
    assert read_csv(tmp_path / "c/series_0.2.csv")[0]["config"]["seed"] == 6


def test_indefinite_sigma_exit_2(tmp_path, capsys):
    cfg = edit(operators__M=["pauli_x"], noise__sigmaBB=[[1.0]], noise__sigmaAA=[[1.0]], noise__sigmaAB=[[2.0]])
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "sigmaAB" in capsys.readouterr().err


def test_dt_guard_exit_2(tmp_path, capsys):
    cfg = edit(operators__hA={"preset": "pauli_z", "scale": 20}, window__epsilon=0.4)
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "stability guard" in capsys.readouterr().err
    cfg = edit(micro__dt=0.5, window__epsilon=0.5, window__cDelta=20)
    cfg["operators"]["hA"] = "pauli_z"
    assert main(["validate", "--config", write(tmp_path, cfg)]) == 2


def test_other_validation_errors(tmp_path):
    bad = [
        edit(operators__hA=[[0, 1], [0, 0]]),
        edit(micro__ensembleSize=50),
        edit(reference__variant="redfield"),
        edit(window__cDeltaT=1.0),
        edit(micro__initial={"kind": "fixed", "x": [1, 0, 0], "y": [1, 0]}),
        edit(operators__hA="pauli_q"),
    ]
    for i, cfg in enumerate(bad):
        assert main(["validate", "--config", write(tmp_path, cfg, f"b{i}.yaml")]) == 2, cfg
    (tmp_path / "broken.yaml").write_text("dims: [unclosed")
    assert main(["validate", "--config", str(tmp_path / "broken.yaml")]) == 2
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_blowup_exit_3(tmp_path, capsys):
    cfg = edit(operators__L=[{"preset": "identity", "scale": 1e200}], noise__sigmaAA=[[1.0]])
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert "trajectory" in capsys.readouterr().err


def test_reference_matches_dephasing_closed_form(tmp_path):
    out = tmp_path / "r"
    assert main(["reference", "--config", write(tmp_path, BASE), "--out", str(out)]) == 0
    meta, rows = read_csv(out / "reference.csv")
    assert meta["variant"] == "generic_gksl"
    for r in rows:
        tau = float(r["tau"])
        coh = complex(float(r["rho_re_0_2"]), float(r["rho_im_0_2"]))
        assert abs(abs(coh) - 0.5 * np.exp(-2 * 0.5 * tau)) < 1e-8
        assert r["source"] == "reference"
    js = json.loads((out / "reference.json").read_text())
    assert js["positivity"]["flagged"] is False


def test_noise_check_zero_sigma(tmp_path):
    cfg = edit(noise__sigmaAA=[[0.0]])
    out = tmp_path / "n"
    assert main(["noise-check", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    _, rows = read_csv(out / "noise_check.csv")
    assert len(rows) == 3 * 4
    assert all(float(r["mean_re"]) == 0 and float(r["mean_im"]) == 0 for r in rows)


def test_noise_check_table(tmp_path):
    cfg = edit(operators__M=["pauli_x"], noise__sigmaBB=[[0.5]], noise__sigmaAB=[[0.25]])
    out = tmp_path / "n"
    assert main(["noise-check", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    js = json.loads((out / "noise_check.json").read_text())
    assert js["sigmaAB"] == [[[0.25, 0.0]]]
    assert {t["lag"] for t in js["table"]} == {0, 1, 2}


def test_sweep_inconclusive_exit_4(tmp_path):
    cfg = edit(operators__L=[], operators__M=[], noise={}, reference__variant="von_neumann",
               micro__ensembleSize=100)
    cfg["sweep"] = {"epsilons": [0.4, 0.2, 0.1]}
    out = tmp_path / "s"
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(out)]) == 4
    rep = json.loads((out / "scaling_report.json").read_text())
    assert rep["status"] == "inconclusive" and len(rep["perEpsilon"]) == 3
    assert (out / "plot.dat").read_text().startswith("# epsilon error maxSE")


def test_sweep_report(tmp_path):
    cfg = edit(operators__L=[], operators__M=[], noise={}, reference__variant="von_neumann",
               micro__ensembleSize=100, operators__hA={"preset": "pauli_z", "scale": 0.5})
    cfg["sweep"] = {"epsilons": [0.4, 0.2, 0.1]}
    out = tmp_path / "s"
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "scaling_report.json").read_text())
    assert rep["status"] == "ok" and len(rep["slopeCI"]) == 2 and rep["version"] == __version__
    for eps in ("0.4", "0.2", "0.1"):
        assert (out / f"series_{eps}.csv").exists()
    data = np.loadtxt(out / "plot.dat")
    assert data.shape == (3, 3)


def test_load_config_objects(tmp_path):
    cfg = load_config(write(tmp_path, BASE), seed=9, workers=2)
    assert cfg.seed == 9 and cfg.workers == 2 and cfg.window.epsilon == 0.2
    assert cfg.system.noise.nA == 1 and cfg.resolved()["seed"] == 9
    with pytest.raises(ConfigError):
        build_config([1, 2])
    summed = build_config(edit(operators__hA=[{"preset": "pauli_z", "scale": 0.5}, "pauli_x"]))
    np.testing.assert_allclose(summed.system.hA, [[0.5, 1], [1, -0.5]])


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "dcmsim.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
