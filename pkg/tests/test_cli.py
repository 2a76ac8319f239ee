import json
from pathlib import Path

import numpy as np
import pytest

from heatkernel.cli import main
from heatkernel.config import from_dict, load
from heatkernel.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
BUNDLED = ROOT / "src" / "heatkernel" / "scenarios"
GOLDEN = Path(__file__).parent / "golden"

SMALL = {
    "name": "small",
    "ends": [{"alpha": 1.0}, {"alpha": 2.0}],
    "grid": {"R_max": 500, "n_cells": 1000, "spacing_ratio": 1.005},
    "times": {"lo": 10, "hi": 1e4, "count": 21},
    "lambdas": {"lo": 1e-4, "hi": 1e-2, "count": 5},
    "points": [{"center": True}, {"end": 0, "abs": 10}, {"end": 1, "sqrt_t": 1}],
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_classify(tmp_path, capsys):
    # weight of V(r) = r^2 / log r: parabolic but neither class
    radii = np.concatenate(([0.0, 0.5], np.geomspace(1, 1e12, 6000)))
    np.savetxt(tmp_path / "n.csv", np.c_[radii, 2 * radii / np.log(np.e + radii) + 1e-3], delimiter=",")
    cfg = dict(SMALL, ends=[{"alpha": 1.0}, {"alpha": 2.0}, {"tabulated": "n.csv"}], lambdas=None)
    assert main(["classify", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "end 1: Critical" in out and "end 0: Subcritical" in out and "end 2: Neither" in out
    assert (tmp_path / "small_classify.csv").read_text().startswith("end,profile,alpha,class")


def test_classify_tabulated(tmp_path, capsys):
    (tmp_path / "w.csv").write_text("".join(f"{r},{2 * r + 1e-3}\n" for r in [0.0, 0.5] + [2.0**k for k in range(40)]))
    cfg = dict(SMALL, ends=[{"alpha": 1.0}, {"tabulated": "w.csv"}], lambdas=None)
    assert main(["classify", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    assert "end 1: Critical" in capsys.readouterr().out


def test_estimate_and_env_out(tmp_path, monkeypatch):
    monkeypatch.setenv("HEATKERNEL_OUT", str(tmp_path / "env"))
    assert main(["estimate", "--config", write(tmp_path, SMALL), "--quiet"]) == 0
    text = (tmp_path / "env" / "small_estimate.csv").read_text()
    assert len(text.splitlines()) == 1 + 21 * 6
    assert "T1_ii3" in text and "OnDiagonal" in text


def test_simulate(tmp_path):
    assert main(["simulate", "--config", write(tmp_path, SMALL), "--out", str(tmp_path), "--quiet"]) == 0
    for suffix in ("kernel", "exit", "resolvent"):
        assert (tmp_path / f"small_{suffix}.csv").stat().st_size > 0
    kernel = (tmp_path / "small_kernel.csv").read_text().splitlines()
    assert len(kernel) == 1 + 21 * 6


def test_validate_pass_and_fail(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    out = str(tmp_path)
    assert main(["validate", "--config", cfg, "--out", out, "--jobs", "2"]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    assert main(["validate", "--config", cfg, "--out", out, "--band-limit", "1.0001", "--quiet"]) == 1
    assert (tmp_path / "small_summary.txt").read_text().rstrip().endswith("overall: FAIL")


def test_config_errors(tmp_path, capsys):
    bad = [
        dict(SMALL, extra=1),
        dict(SMALL, times={"lo": 2, "hi": 100, "count": 5}),
        dict(SMALL, grid={"R_max": 100, "n_cells": 1000}),
        dict(SMALL, points=[{"end": 5, "abs": 10}]),
        dict(SMALL, lambdas={"lo": 1e-9, "hi": 1e-2, "count": 3}),
        dict(SMALL, ends=[{"alpha": 1.0, "tabulated": "x.csv"}]),
        dict(SMALL, ends=[{"alpha": 1.0}, {"alpha": 2.4}]),
    ]
    for i, cfg in enumerate(bad):
        assert main(["classify", "--config", write(tmp_path, cfg, f"b{i}.json"), "--out", str(tmp_path)]) == 2, cfg
    (tmp_path / "broken.json").write_text("{")
    assert main(["classify", "--config", str(tmp_path / "broken.json")]) == 2
    assert main(["classify", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["classify", "--config", write(tmp_path, SMALL), "--jobs", "0"]) == 2
    assert main(["classify", "--config", write(tmp_path, SMALL), "--band-limit", "0.5"]) == 2
    assert "small-time" in capsys.readouterr().err


def test_small_time_message():
    with pytest.raises(ConfigError, match="Li-Yau"):
        from_dict(dict(SMALL, times={"lo": 3, "hi": 100, "count": 5}))


def test_neither_end_estimate_is_config_error(tmp_path):
    radii = np.concatenate(([0.0, 0.5], np.geomspace(1, 1e12, 6000)))
    np.savetxt(tmp_path / "n.csv", np.c_[radii, 2 * radii / np.log(np.e + radii) + 1e-3], delimiter=",")
    cfg = dict(SMALL, ends=[{"alpha": 1.0}, {"tabulated": "n.csv"}], points=[{"end": 0, "abs": 10}], lambdas=None)
    assert main(["estimate", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["classify", "--config", write(tmp_path, SMALL), "--out", str(blocker / "sub")]) == 3


def test_bundled_configs_load():
    for p in sorted(BUNDLED.glob("*.json")):
        ld = load(p)
        assert ld.scenario_spec().cases


def test_golden_r2r2(tmp_path):
    assert main(["validate", "--config", str(BUNDLED / "r2r2.json"), "--out", str(tmp_path), "--quiet"]) == 0
    assert (tmp_path / "r2r2_report.csv").read_bytes() == (GOLDEN / "r2r2_report.csv").read_bytes()
