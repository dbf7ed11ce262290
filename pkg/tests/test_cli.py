import ast
import json
import subprocess
import sys
from pathlib import Path

import pytest

import sagefed.cli as cli
from sagefed.config import parse_sweep
from sagefed.data import import_shards

TINY = {
    "strategy": "lpl",
    "rounds": 2,
    "seed": 3,
    "num_clients": 2,
    "clients_per_round": 2,
    "local_epochs": 1,
    "batch_size_labeled": 4,
    "batch_size_unlabeled": 8,
    "task": {"classes": 3, "input_dim": 5, "samples_per_class": 30,
             "class_separation": 4.0, "noise_scale": 0.5},
    "model": {"hidden_dims": [8]},
    "test_per_class": 5,
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY))
    return path


def read_manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text())


def test_shell_imports_stay_thin():
    # the CLI may orchestrate but not compute: stdlib + this package only,
    # and in particular no numpy
    source = Path(cli.__file__).read_text()
    roots = set()
    for node in ast.walk(ast.parse(source)):
        if isinstance(node, ast.Import):
            roots.update(alias.name.split(".")[0] for alias in node.names)
        elif isinstance(node, ast.ImportFrom) and node.level == 0:
            roots.add(node.module.split(".")[0])
    allowed = {"__future__", "argparse", "json", "logging", "statistics", "sys",
               "datetime", "pathlib", "sagefed"}
    assert roots <= allowed
    assert "numpy" not in roots


def test_validate_prints_fingerprint(tiny_config, capsys):
    rc = cli.main(["validate", str(tiny_config)])
    assert rc == 0
    out = capsys.readouterr().out.strip()
    tag, digest = out.split()
    assert tag == "OK"
    assert len(digest) == 64
    assert set(digest) <= set("0123456789abcdef")


def test_validate_reports_paths_and_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"strategy": "sage", "rounds": 0}))
    rc = cli.main(["validate", str(bad)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "error: rounds:" in err
    assert "error: seed: required" in err


def test_missing_config_file_exits_1(tmp_path, capsys):
    rc = cli.main(["validate", str(tmp_path / "absent.json")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_run_writes_trace_summary_manifest(tiny_config, tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["run", str(tiny_config), "--out", str(out)])
    assert rc == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert len(lines) == 1 + TINY["rounds"]
    assert [line.split(",")[0] for line in lines[1:]] == ["0", "1"]
    summary = json.loads((out / "summary.json").read_text())
    assert 0.0 <= summary["final_test_acc"] <= 1.0
    manifest = read_manifest(out)
    assert manifest["seed"] == 3
    assert len(manifest["config_hash"]) == 64
    assert manifest["schemas"]["trace.csv"][0] == "round"


def test_rerun_is_byte_identical_except_timestamp(tiny_config, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(tiny_config), "--out", str(out_a)]) == 0
    assert cli.main(["run", str(tiny_config), "--out", str(out_b)]) == 0
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()
    assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()
    m_a, m_b = read_manifest(out_a), read_manifest(out_b)
    m_a.pop("created_utc"), m_b.pop("created_utc")
    assert m_a == m_b


def test_seed_override_changes_fingerprint_and_trace(tiny_config, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(tiny_config), "--out", str(out_a)]) == 0
    assert cli.main(["run", str(tiny_config), "--out", str(out_b), "--seed", "4"]) == 0
    assert read_manifest(out_a)["config_hash"] != read_manifest(out_b)["config_hash"]
    assert read_manifest(out_b)["seed"] == 4
    assert (out_a / "trace.csv").read_bytes() != (out_b / "trace.csv").read_bytes()


def test_unwritable_out_dir_exits_1(tiny_config, tmp_path, capsys):
    blocker = tmp_path / "occupied"
    blocker.write_text("")
    rc = cli.main(["run", str(tiny_config), "--out", str(blocker)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def sweep_data(**overrides):
    data = {
        "base": dict(TINY),
        "axes": {"strategy": ["supervised_only", "lpl"], "dirichlet_alpha": [0.5, 1.0]},
        "repeats": 2,
        "accuracy_threshold": 0.6,
    }
    data.update(overrides)
    return data


def test_sweep_layout_and_combined_csv(tmp_path):
    sweep_path = tmp_path / "sweep.json"
    sweep_path.write_text(json.dumps(sweep_data()))
    out = tmp_path / "grid"
    rc = cli.main(["sweep", str(sweep_path), "--out", str(out)])
    assert rc == 0
    lines = (out / "combined.csv").read_text().splitlines()
    assert lines[0] == (
        "strategy,dirichlet_alpha,repeat,seed,final_accuracy,rounds_to_threshold,"
        "final_accuracy_mean,final_accuracy_std,rounds_to_threshold_mean,speedup"
    )
    assert len(lines) == 1 + 2 * 2 * 2
    for cell in ("strategy-supervised_only_dirichlet_alpha-0.5", "strategy-lpl_dirichlet_alpha-1.0"):
        for repeat in ("repeat0", "repeat1"):
            run_dir = out / cell / repeat
            assert (run_dir / "trace.csv").exists()
            assert (run_dir / "summary.json").exists()
            assert (run_dir / "manifest.json").exists()
    # repeat r shares its derived seed across every cell
    rows = [line.split(",") for line in lines[1:]]
    seeds_by_repeat = {}
    for row in rows:
        seeds_by_repeat.setdefault(row[2], set()).add(row[3])
    assert all(len(seeds) == 1 for seeds in seeds_by_repeat.values())


def test_sweep_unreached_threshold_uses_none_sentinel(tmp_path):
    hard_task = {**TINY["task"], "class_separation": 0.05, "noise_scale": 3.0}
    data = sweep_data(
        base={**TINY, "rounds": 1, "task": hard_task},
        axes={"strategy": ["supervised_only"]},
        repeats=1,
        accuracy_threshold=0.95,
    )
    sweep_path = tmp_path / "sweep.json"
    sweep_path.write_text(json.dumps(data))
    out = tmp_path / "grid"
    assert cli.main(["sweep", str(sweep_path), "--out", str(out)]) == 0
    lines = (out / "combined.csv").read_text().splitlines()
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["rounds_to_threshold"] == "None"
    assert row["rounds_to_threshold_mean"] == "None"
    assert row["speedup"] == "None"


def test_sweep_rerun_combined_csv_identical(tmp_path):
    sweep_path = tmp_path / "sweep.json"
    sweep_path.write_text(json.dumps(sweep_data(repeats=1)))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sweep", str(sweep_path), "--out", str(out_a)]) == 0
    assert cli.main(["sweep", str(sweep_path), "--out", str(out_b)]) == 0
    assert (out_a / "combined.csv").read_bytes() == (out_b / "combined.csv").read_bytes()


def test_cell_aggregates_and_speedup_math():
    spec = parse_sweep(json.dumps(sweep_data(axes={"strategy": ["lpl", "sage"]})))
    lpl_key = (("strategy", "lpl"),)
    sage_key = (("strategy", "sage"),)
    rows = {
        lpl_key: [
            {"repeat": 0, "seed": 1, "final_accuracy": 0.8, "rounds_to_threshold": 20},
            {"repeat": 1, "seed": 2, "final_accuracy": 0.9, "rounds_to_threshold": 10},
        ],
        sage_key: [
            {"repeat": 0, "seed": 1, "final_accuracy": 0.9, "rounds_to_threshold": 10},
            {"repeat": 1, "seed": 2, "final_accuracy": 1.0, "rounds_to_threshold": 5},
        ],
    }
    cells = cli._aggregate_cells(spec, rows)
    assert cells[lpl_key]["final_accuracy_mean"] == pytest.approx(0.85)
    assert cells[lpl_key]["final_accuracy_std"] == pytest.approx(0.07071067811865477)
    assert cells[lpl_key]["rounds_to_threshold_mean"] == pytest.approx(15.0)
    assert cells[lpl_key]["speedup"] == pytest.approx(1.0)
    assert cells[sage_key]["speedup"] == pytest.approx(2.0)


def test_cell_aggregates_handle_missing_threshold():
    spec = parse_sweep(json.dumps(sweep_data(axes={"strategy": ["lpl", "sage"]})))
    rows = {
        (("strategy", "lpl"),): [
            {"repeat": 0, "seed": 1, "final_accuracy": 0.5, "rounds_to_threshold": None},
        ],
        (("strategy", "sage"),): [
            {"repeat": 0, "seed": 1, "final_accuracy": 0.6, "rounds_to_threshold": 4},
        ],
    }
    cells = cli._aggregate_cells(spec, rows)
    assert cells[(("strategy", "lpl"),)]["rounds_to_threshold_mean"] is None
    assert cells[(("strategy", "lpl"),)]["speedup"] is None
    # reference cell never reached the threshold, so no ratio is defined
    assert cells[(("strategy", "sage"),)]["speedup"] is None


def test_export_shards_roundtrip(tiny_config, tmp_path):
    out = tmp_path / "shards.jsonl"
    rc = cli.main(["export-shards", str(tiny_config), "--out", str(out)])
    assert rc == 0
    shards = import_shards(str(out))
    assert len(shards) == TINY["num_clients"]
    assert sum(s.n_labeled for s in shards) == 9  # 3 classes x round(0.1 * 30)


def test_module_entry_point(tiny_config):
    proc = subprocess.run(
        [sys.executable, "-m", "sagefed.cli", "validate", str(tiny_config)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("OK ")
