import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from ofdiffusion.cli import main
from ofdiffusion.io import read_matrix, write_samples


@pytest.fixture
def samples(tmp_path):
    X = np.random.default_rng(0).normal(1.0, 0.5, size=(3000, 2))
    p = tmp_path / "x.csv"
    write_samples(p, X)
    return p


@pytest.fixture
def fitted(tmp_path, samples):
    cfg = {"family": "hermite", "n": 3, "T": 0.5, "dt": 0.01, "seed": 4}
    (tmp_path / "fit.json").write_text(json.dumps(cfg))
    model = tmp_path / "m.ofd"
    assert main(["fit", str(samples), "-o", str(model), "--config", str(tmp_path / "fit.json"), "-q"]) == 0
    return cfg, model


def _json_out(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_fit_then_inspect_echoes_config(fitted, capsys):
    cfg, model = fitted
    doc = _json_out(capsys, ["inspect", str(model)])
    assert {k: doc["config"][k] for k in cfg} == cfg
    # the remaining fields are the documented defaults
    from ofdiffusion.score import FitConfig
    assert doc["config"] == FitConfig(**cfg).to_dict()
    assert doc["summary"]["d"] == 2 and doc["summary"]["grid_times"] == 51


def test_flags_override_config_file(tmp_path, samples, capsys):
    (tmp_path / "fit.json").write_text(json.dumps({"n": 3, "T": 0.1}))
    m = tmp_path / "m2.ofd"
    assert main(["fit", str(samples), "-o", str(m), "--config", str(tmp_path / "fit.json"), "--n", "2",
                 "--set", "dt=0.05", "-q"]) == 0
    doc = _json_out(capsys, ["inspect", str(m), "--diagnostics"])
    assert doc["config"]["n"] == 2 and doc["config"]["dt"] == 0.05 and len(doc["diagnostics"]) == 3


def test_generate_is_reproducible(fitted, tmp_path):
    _, model = fitted
    a, b, c = tmp_path / "a.ofdm", tmp_path / "b.ofdm", tmp_path / "c.ofdm"
    for out, seed in ((a, "7"), (b, "7"), (c, "8")):
        assert main(["generate", str(model), "-o", str(out), "-N", "400", "--seed", seed, "-q"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    assert read_matrix(a).shape == (400, 2)


def test_metrics_commands(samples, tmp_path, capsys):
    # a horizon long enough for the forward law to reach the base
    model = tmp_path / "long.ofd"
    assert main(["fit", str(samples), "-o", str(model), "--n", "3", "--T", "4", "--dt", "0.01", "-q"]) == 0
    gen = tmp_path / "g.ofdm"
    assert main(["generate", str(model), "-o", str(gen), "-N", "3000", "--seed", "1", "-q"]) == 0
    assert main(["metrics", "score", str(model), str(samples), "--target", "gaussian", "--mean", "1",
                 "--var", "0.25"]) == 0
    row = next(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert float(row["value"]) < 0.2
    assert main(["metrics", "moment", str(gen), str(samples), "--out", str(tmp_path / "m.csv")]) == 0
    capsys.readouterr()
    assert float(next(csv.DictReader(open(tmp_path / "m.csv")))["value"]) < 0.1
    assert main(["metrics", "marginal", str(gen), str(samples)]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["coordinate"] for r in rows] == ["0", "1", "mean"]


def test_forward(samples, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["forward", str(samples), "-o", str(out), "--T", "3", "--dt", "0.01", "-q"]) == 0
    from ofdiffusion.io import read_csv
    Y = read_csv(out)[0]
    # relaxes toward the standard Gaussian: mean 1 * exp(-3)
    assert np.all(np.abs(Y.mean(axis=0) - np.exp(-3.0)) < 0.1)
    flat = tmp_path / "p.ofdm"
    assert main(["forward", str(samples), "-o", str(flat), "--potential", "flat", "--L", "1", "--T", "0.1",
                 "-q"]) == 0
    assert np.all(np.abs(read_matrix(flat)) <= 1)


def test_experiment_command(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["experiment", "dw1d", "--basis", "hermite", "--n", "4", "--out", str(out), "-q",
            "--set", "sampling.N_fit=3000", "--set", "sampling.N_eval=5000", "--set", "time.T=0.1",
            "--set", "evaluation.times=[0]"]
    assert main(argv) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows[0]["n"] == "4" and 0 < float(rows[0]["error"]) < 0.5
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["basis"]["n"] == 4 and echoed["sampling"]["N_fit"] == 3000
    doc = _json_out(capsys, ["inspect", str(out)])
    assert doc["config"] == echoed and len(doc["results"]) == 1


def test_experiment_sweep_flag(tmp_path, capsys):
    argv = ["experiment", "dw1d", "--out", str(tmp_path), "-q", "--sweep", "basis.n=2,3",
            "--set", "sampling.N_fit=1000", "--set", "sampling.N_eval=2000", "--set", "time.T=0.05",
            "--set", "evaluation.times=[0]"]
    assert main(argv) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["basis.n"] for r in rows] == ["2", "3"]


@pytest.mark.parametrize("argv, stage", [
    (["experiment", "dw1d", "--set", "basis.zzz=1"], "config"),
    (["experiment", "dw1d", "--set", "basis.n=0"], "config"),
    (["inspect", "MISSING.ofd"], "io"),
    (["fit", "MISSING.csv", "-o", "m.ofd"], "io"),
])
def test_errors_are_stage_labelled(argv, stage, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert err.startswith(f"ofdiffusion {argv[0]}: {stage}: ")


def test_format_error(tmp_path, capsys):
    bad = tmp_path / "bad.ofd"
    bad.write_bytes(b"\x05\x00")
    assert main(["inspect", str(bad)]) == 2
    assert "format: truncated" in capsys.readouterr().err


def test_bad_fit_option(samples, tmp_path, capsys):
    assert main(["fit", str(samples), "-o", str(tmp_path / "m"), "--set", "colour=3"]) == 2
    assert "config: unknown fit options" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ofdiffusion", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "experiment" in r.stdout
