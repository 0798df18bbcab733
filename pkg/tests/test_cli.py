import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from wignerlab import semicircle as sc
from wignerlab.cli import main
from wignerlab.config import RunConfig, load_config, parse_config
from wignerlab.ensemble import load_sample
from wignerlab.errors import ConfigError
from wignerlab.locallaw import DEFAULT_SEED

PLAN = """\
[ensemble]
family = gaussian

[plan]
n_values = 40, 80
u_values = 0
p_values = 1
replicas = 4
v_per_decade = 4

[acceptance]
slope_target = -1.0
slope_tolerance = 5
"""


@pytest.fixture
def plan_file(tmp_path):
    p = tmp_path / "plan.cfg"
    p.write_text(PLAN)
    return p


def test_minimal_config_defaults():
    cfg = parse_config("[ensemble]\nfamily = rademacher\nn = 10\n")
    assert cfg.seed == DEFAULT_SEED == 0xC0FFEE
    assert cfg.workers == (os.cpu_count() or 1)
    assert cfg.format == "both"
    assert cfg.ensemble.n == 10 and cfg.plan is None


def test_config_plan_parsed(plan_file):
    cfg = load_config(plan_file)
    assert cfg.plan.n_values == (40, 80)
    assert cfg.acceptance == {"slope_target": -1.0, "slope_tolerance": 5.0}
    assert len(cfg.config_hash) == 64


def test_config_lists_every_problem():
    text = "[run]\nworkers = 0\nformat = xml\nbogus = 1\n[plan]\nreplicas = many\n[weird]\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msgs = "\n".join(exc.value.problems)
    for needle in ("run.workers", "run.format", "run.bogus", "plan.replicas", "[weird]", "plan.n_values"):
        assert needle in msgs


def test_config_names_invalid_cell():
    text = "[ensemble]\nfamily = student_t\ndf = 5\n[plan]\nn_values = 64\np_values = 1, 3\nreplicas = 2\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any("cell (n=64" in p and "p=3" in p for p in exc.value.problems)
    relaxed = parse_config(text + "skip_invalid_cells = true\n")
    assert not relaxed.strict


def test_missing_config_file(tmp_path, capsys):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")
    assert main(["locallaw", "--plan", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["validate", "--frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_bad_grid_exit_2(tmp_path):
    assert main(["validate", "--grid", "5by5", "--out", str(tmp_path)]) == 2


def test_validate_small(tmp_path, capsys):
    out = tmp_path / "v"
    code = main(["validate", "--n", "30", "--seeds", "2", "--grid", "3x3", "--out", str(out), "--workers", "1"])
    assert code == 0
    rows = json.loads((out / "validation.json").read_text())
    assert rows and all(r["passed"] for r in rows if r["check_id"][0] in "abcdef" or r["check_id"].startswith("identity"))
    assert set(rows[0]) == {"check_id", "passed", "margin", "n", "seed", "u", "v"}
    assert (out / "validation.csv").exists() and (out / "manifest.json").exists()


def test_semicircle_table(tmp_path):
    path = tmp_path / "gammas.csv"
    assert main(["semicircle-table", "--n", "512", "--out", str(path)]) == 0
    rows = list(csv.DictReader(path.open()))
    g = np.array([float(r["gamma_j"]) for r in rows])
    j = np.array([int(r["j"]) for r in rows])
    assert np.max(np.abs(sc.cdf(g[:-1]) - j[:-1] / 512)) <= 1e-10
    assert (tmp_path / "manifest.json").exists()


def test_sample_dump(tmp_path):
    out = tmp_path / "s"
    assert main(["sample", "--n", "6", "--family", "student_t", "--df", "7", "--stage", "rescaled", "--out", str(out)]) == 0
    s = load_sample(out / "sample.bin")
    meta = json.loads((out / "sample.json").read_text())
    assert s.n == 6 and meta["stage"] == "rescaled" and np.array_equal(s.entries, s.entries.T)


def test_locallaw_twice_byte_identical(tmp_path, plan_file):
    for name in ("a", "b"):
        assert main(["locallaw", "--plan", str(plan_file), "--seed", "7", "--out", str(tmp_path / name), "--workers", "1"]) == 0
    for f in ("locallaw.json", "locallaw.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_changes_output(tmp_path, plan_file):
    main(["locallaw", "--plan", str(plan_file), "--seed", "7", "--out", str(tmp_path / "a"), "--format", "json"])
    main(["locallaw", "--plan", str(plan_file), "--seed", "8", "--out", str(tmp_path / "b"), "--format", "json"])
    assert (tmp_path / "a" / "locallaw.json").read_bytes() != (tmp_path / "b" / "locallaw.json").read_bytes()
    assert not (tmp_path / "a" / "locallaw.csv").exists()


def test_failed_acceptance_exit_1(tmp_path):
    p = tmp_path / "strict.cfg"
    p.write_text(PLAN.replace("slope_tolerance = 5", "slope_tolerance = 0").replace("slope_target = -1.0", "slope_target = 3"))
    assert main(["locallaw", "--plan", str(p), "--out", str(tmp_path / "o"), "--workers", "1"]) == 1


def test_manifest_and_rerun(tmp_path, plan_file):
    out = tmp_path / "first"
    assert main(["applications", "--plan", str(plan_file), "--out", str(out), "--workers", "1"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == DEFAULT_SEED and man["config_text"] == PLAN
    assert {"numpy", "scipy", "python", "wignerlab"} <= set(man["versions"])
    assert man["wall_time_s"] >= 0 and set(man["outputs"]) == {"applications.json", "applications.csv"}
    plan_file.unlink()  # the manifest alone must be enough
    again = tmp_path / "again"
    assert main(["rerun", str(out / "manifest.json"), "--out", str(again), "--workers", "2"]) == 0
    for f in man["outputs"]:
        assert (again / f).read_bytes() == (out / f).read_bytes()
    assert json.loads((again / "manifest.json").read_text())["outputs"] == man["outputs"]


def test_edgelaw_cli(tmp_path):
    p = tmp_path / "edge.cfg"
    p.write_text(PLAN.replace("u_values = 0", "u_values = 2.5"))
    assert main(["edgelaw", "--plan", str(p), "--out", str(tmp_path / "e"), "--workers", "1"]) in (0, 1)
    assert (tmp_path / "e" / "edgelaw.json").exists()
    p.write_text(PLAN)
    assert main(["edgelaw", "--plan", str(p), "--out", str(tmp_path / "e2")]) == 2


def test_plan_required(tmp_path):
    assert main(["locallaw", "--out", str(tmp_path)]) == 2


def test_run_config_hash_stable():
    assert RunConfig(source_text="x").config_hash == RunConfig(source_text="x").config_hash
