import csv
import json

import numpy as np
import pytest

from fpoutflow import io
from fpoutflow.cli import main


@pytest.fixture
def config(tmp_path):
    def write(**extra):
        cfg = {
            "field": {"name": "rotation", "params": {"omega": 1.0}},
            "space": {"type": "box", "bounds": [[-1.0, 1.0], [-1.0, 1.0]]},
            "levels": [8, 16],
            "times": [0.5],
            "functions": [{"kind": "radial_bump", "center": [0.0, 0.0], "radius": 0.6}],
            "densities": 3,
        }
        cfg.update(extra)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return str(path)
    return write


def test_covering(tmp_path, config):
    out = tmp_path / "o"
    assert main(["covering", "--config", config(), "--out", str(out)]) == 0
    cov = io.covering_from_json(out / "covering.json")
    assert cov.n_active == 64


def test_generator(tmp_path, config):
    out = tmp_path / "o"
    assert main(["generator", "--config", config(boxes_per_axis=4), "--out", str(out)]) == 0
    G = io.matrix_from_mtx(out / "generator.mtx")
    assert G.shape == (16, 16)
    with open(out / "generator.csv") as fh:
        assert next(csv.reader(fh)) == ["row", "col", "value"]


def test_evolve_and_reference(tmp_path, config):
    out = tmp_path / "o"
    cfg = config(boxes_per_axis=16)
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 0
    assert main(["reference", "--config", cfg, "--out", str(out)]) == 0
    w = np.loadtxt(out / "density.csv", delimiter=",", skiprows=1, usecols=-1)
    ref = np.loadtxt(out / "reference.csv", delimiter=",", skiprows=1, usecols=-1)
    assert len(w) == len(ref) == 256
    assert np.abs(w - ref).sum() * (2 / 16) ** 2 < 0.5
    raw = (out / "density.bin").read_bytes()
    assert int.from_bytes(raw[:8], "little") == 256
    mass = np.loadtxt(out / "massloss.csv", delimiter=",", skiprows=1)
    assert mass.shape == (11, 2)
    assert np.all(np.diff(mass[:, 1]) <= 1e-12)


def test_ulam(tmp_path, config):
    out = tmp_path / "o"
    cfg = config(boxes_per_axis=6, sampling={"method": "montecarlo", "samples": 16}, mode="killed")
    assert main(["ulam", "--config", cfg, "--out", str(out), "--seed", "9"]) == 0
    meta = json.loads((out / "ulam.json").read_text())
    assert meta["rng_seed"] == 9 and meta["samples_per_box"] == 16 and meta["mode"] == "killed"
    assert io.matrix_from_mtx(out / "ulam.mtx").shape == (36, 36)


def test_converge(tmp_path, config):
    out = tmp_path / "o"
    assert main(["converge", "--config", config(), "--out", str(out), "--threads", "2"]) == 0
    for name in ("report.json", "errors.csv", "massloss.csv"):
        assert (out / name).exists()


def test_converge_flags_non_decreasing_errors(tmp_path, config):
    cfg = config(field={"name": "zero", "params": {"dim": 2}})
    assert main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_check(tmp_path, config):
    out = tmp_path / "o"
    assert main(["check", "--config", config(levels=[8]), "--out", str(out)]) == 0
    report = json.loads((out / "check.json").read_text())
    assert report["passed"] and report["first_failure"] is None


def test_errors_exit_one(tmp_path, config, capsys):
    assert main(["covering", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    bad = config(field={"name": "no-such-field"})
    assert main(["generator", "--config", bad, "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err
