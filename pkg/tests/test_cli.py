import csv
import json

import pytest
import yaml

from rarequeue.cli import RESULT_COLUMNS, fmt, main

EXPERIMENT = {
    "name": "tiny",
    "model": {
        "arrival": {"family": "gamma", "shape": 0.5, "rate": 0.5},
        "service": {"family": "uniform", "low": 0.0, "high": 1.0},
        "s": [10],
    },
    "band": {"variant": "truncated", "c_star": 1.0, "c1": 1.1, "eta": 0.0},
    "delta": 1.0,
    "estimator": {"method": "both", "batches": 5, "sim_time": 400.0},
    "path_dump": {"t_points": 11, "y_points": 6},
    "seed": 17,
}


@pytest.fixture
def config(tmp_path):
    def make(**patch):
        doc = {**EXPERIMENT, **patch}
        p = tmp_path / "exp.yaml"
        p.write_text(yaml.safe_dump(doc))
        return p

    return make


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(*argv):
    return main([str(a) for a in argv])


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(None) == "NA" and fmt(float("nan")) == "NA"
    assert fmt(3) == "3" and fmt(True) == "1"


def test_run_writes_results_and_manifest(config, tmp_path):
    out = tmp_path / "out"
    assert run("run", "--config", config(), "--out-dir", out) == 0
    rows = read(out / "results.csv")
    assert rows[0] == RESULT_COLUMNS
    assert [r[1] for r in rows[1:]] == ["is", "cmc"]
    est = float(rows[1][2])
    assert 0.0 < est < 1.0
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "run"
    assert man["config"]["estimator"]["batches"] == 5
    assert man["config"]["seed"] == 17
    assert man["outputs"] == ["results.csv"]


def test_run_is_byte_stable(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    flags = ["--config", config(), "--sim-time", 200, "--method", "is"]
    assert run("run", *flags, "--out-dir", a) == 0
    assert run("run", *flags, "--out-dir", b) == 0
    strip = lambda rows: [r[:7] + r[8:] for r in rows]  # cpu_seconds is a measurement
    assert strip(read(a / "results.csv")) == strip(read(b / "results.csv"))


def test_seed_override_changes_values_not_schema(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("run", "--config", config(), "--method", "cmc", "--out-dir", a)
    run("run", "--config", config(), "--method", "cmc", "--seed", 99, "--out-dir", b)
    ra, rb = read(a / "results.csv"), read(b / "results.csv")
    assert ra[0] == rb[0]
    assert ra[1][2] != rb[1][2]


def test_cycles_override(config, tmp_path):
    out = tmp_path / "o"
    assert run("run", "--config", config(), "--method", "is", "--cycles", 300, "--batches", 3, "--out-dir", out) == 0
    rows = read(out / "results.csv")
    assert rows[1][RESULT_COLUMNS.index("cycles")] == "300"


def test_ld_table(config, tmp_path):
    out = tmp_path / "ld"
    assert run("ld-table", "--config", config(), "--out-dir", out) == 0
    rows = read(out / "ld_table_s10.csv")
    assert rows[0] == ["k", "t", "a_t", "theta_t", "I_t"]
    theta = [float(r[3]) for r in rows[1:]]
    assert all(x > 0 for x in theta)
    assert all(a >= b for a, b in zip(theta, theta[1:]))
    summary = read(out / "ld_summary.csv")
    assert summary[0] == ["s", "T", "delta", "K_max", "theta_inf", "I_star"]


def test_band_dump(config, tmp_path):
    out = tmp_path / "band"
    assert run("band-dump", "--config", config(), "--out-dir", out, "--points", 101) == 0
    rows = read(out / "band_s10.csv")
    assert rows[0] == ["y", "lower", "upper", "center"]
    assert len(rows) == 102
    for r in rows[1:]:
        assert float(r[1]) <= float(r[3]) <= float(r[2])


def test_path_dump(config, tmp_path):
    out = tmp_path / "path"
    assert run("path-dump", "--config", config(), "--out-dir", out) == 0
    rows = read(out / "path_s10.csv")
    assert rows[0] == ["t", "y", "Q"]
    assert len(rows) == 1 + 11 * 6
    assert all(int(r[2]) >= 0 and str(int(r[2])) == r[2] for r in rows[1:])


def test_oracle(config, tmp_path):
    out = tmp_path / "or"
    doc = dict(EXPERIMENT, model={**EXPERIMENT["model"], "arrival": {"family": "exponential", "rate": 1.0}, "s": [5, 10]})
    assert run("oracle", "--config", config(**doc), "--out-dir", out) == 0
    rows = read(out / "oracle.csv")
    assert rows[0] == ["s", "offered_load", "erlang_b", "decay_per_server", "i_star_poisson", "exact"]
    assert float(rows[2][2]) == pytest.approx(0.018384570336648, rel=1e-12)


def test_invalid_config_exits_nonzero(config, tmp_path, capsys):
    bad = config(band={"eta": -1.0})
    assert run("run", "--config", bad, "--out-dir", tmp_path / "x") == 2
    assert "error" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert run("oracle", "--config", tmp_path / "nope.yaml") == 2
