"""Command-line shell over the simulator.

Verbs: validate a config, run one experiment, run a sweep grid, or export
a config's client shards to JSONL. The shell holds no numeric logic of
its own; it parses arguments, calls the library, and writes files.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import (
    ConfigError,
    build_config,
    config_fingerprint,
    parse_config_text,
    parse_sweep,
)
from .data import export_shards
from .federation import (
    CSV_COLUMNS,
    build_environment,
    rounds_to_threshold,
    run_experiment,
    write_summary_json,
    write_trace_csv,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2

COMBINED_AGGREGATES = (
    "final_accuracy_mean",
    "final_accuracy_std",
    "rounds_to_threshold_mean",
    "speedup",
)

log = logging.getLogger("sagefed")


def _load_config_data(path, seed_override):
    data = parse_config_text(Path(path).read_text())
    if seed_override is not None:
        if not isinstance(data, dict):
            raise ConfigError(["config: top level must be a JSON object"])
        data = {**data, "seed": seed_override}
    return data


def _write_manifest(out_dir, data, extra=None):
    manifest = {
        "code_version": __version__,
        "config_hash": config_fingerprint(data),
        "seed": data["seed"],
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "schemas": {"trace.csv": list(CSV_COLUMNS)},
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _run_one(data, out_dir):
    cfg = build_config(data)
    out_dir.mkdir(parents=True, exist_ok=True)
    log.info("running %s for %d rounds into %s", cfg.strategy.value, cfg.rounds, out_dir)
    result = run_experiment(cfg)
    write_trace_csv(result.metrics, str(out_dir / "trace.csv"))
    write_summary_json(result.metrics, cfg, str(out_dir / "summary.json"))
    _write_manifest(out_dir, data)
    log.info("final test accuracy %.4f", result.metrics[-1].test_accuracy)
    return result


def _cmd_validate(args):
    data = _load_config_data(args.config, args.seed)
    build_config(data)
    print(f"OK {config_fingerprint(data)}")
    return EXIT_OK


def _cmd_run(args):
    data = _load_config_data(args.config, args.seed)
    _run_one(data, Path(args.out))
    return EXIT_OK


def _cmd_export_shards(args):
    data = _load_config_data(args.config, args.seed)
    cfg = build_config(data)
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    _, _, shards = build_environment(cfg)
    export_shards(shards, str(out_path))
    log.info("wrote %d client shards to %s", len(shards), out_path)
    return EXIT_OK


def _fmt_cell(value):
    if value is None:
        return "None"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cell_dir_name(assignments):
    if not assignments:
        return "base"
    return "_".join(f"{path.split('.')[-1]}-{_fmt_cell(value)}" for path, value in assignments)


def _cell_key(assignments):
    return tuple(assignments)


def _reference_key(assignments, reference):
    return tuple(
        (path, reference if path == "strategy" else value) for path, value in assignments
    )


def _aggregate_cells(spec, rows):
    """Per-cell mean/std of final accuracy, mean rounds-to-threshold, speedup.

    Speedup is the reference cell's mean rounds-to-threshold divided by this
    cell's, defined only when strategy is a sweep axis and both cells reached
    the threshold in at least one repeat.
    """
    cells = {}
    for key, group in rows.items():
        accs = [r["final_accuracy"] for r in group]
        reached = [r["rounds_to_threshold"] for r in group if r["rounds_to_threshold"] is not None]
        cells[key] = {
            "final_accuracy_mean": statistics.fmean(accs),
            "final_accuracy_std": statistics.stdev(accs) if len(accs) > 1 else 0.0,
            "rounds_to_threshold_mean": statistics.fmean(reached) if reached else None,
        }
    has_strategy_axis = any(path == "strategy" for path, _ in spec.axes)
    for key, agg in cells.items():
        speedup = None
        if has_strategy_axis:
            ref = cells.get(_reference_key(key, spec.reference_strategy))
            if (
                ref is not None
                and ref["rounds_to_threshold_mean"] is not None
                and agg["rounds_to_threshold_mean"] is not None
                and agg["rounds_to_threshold_mean"] > 0
            ):
                speedup = ref["rounds_to_threshold_mean"] / agg["rounds_to_threshold_mean"]
        agg["speedup"] = speedup
    return cells


def _combined_csv_lines(spec, rows, cells):
    axis_columns = [path for path, _ in spec.axes]
    header = axis_columns + [
        "repeat",
        "seed",
        "final_accuracy",
        "rounds_to_threshold",
        *COMBINED_AGGREGATES,
    ]
    lines = [",".join(header)]
    for key, group in rows.items():
        agg = cells[key]
        for row in group:
            values = [_fmt_cell(v) for _, v in key]
            values += [
                str(row["repeat"]),
                str(row["seed"]),
                repr(row["final_accuracy"]),
                _fmt_cell(row["rounds_to_threshold"]),
            ]
            values += [_fmt_cell(agg[name]) for name in COMBINED_AGGREGATES]
            lines.append(",".join(values))
    return lines


def _cmd_sweep(args):
    text = Path(args.sweep).read_text()
    spec = parse_sweep(text)
    if args.seed is not None:
        spec = parse_sweep(json.dumps({**json.loads(text), "base": {**spec.base, "seed": args.seed}}))
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    rows = {}
    for assignments in spec.cells():
        key = _cell_key(assignments)
        group = rows.setdefault(key, [])
        for repeat in range(spec.repeats):
            data = spec.cell_data(assignments, repeat)
            run_dir = out_root / _cell_dir_name(assignments) / f"repeat{repeat}"
            result = _run_one(data, run_dir)
            reached = (
                rounds_to_threshold(result.metrics, spec.accuracy_threshold)
                if spec.accuracy_threshold is not None
                else None
            )
            group.append(
                {
                    "repeat": repeat,
                    "seed": data["seed"],
                    "final_accuracy": result.metrics[-1].test_accuracy,
                    "rounds_to_threshold": reached,
                }
            )

    cells = _aggregate_cells(spec, rows)
    lines = _combined_csv_lines(spec, rows, cells)
    with open(out_root / "combined.csv", "w") as f:
        f.write("\n".join(lines) + "\n")
    log.info("sweep complete: %d runs, combined.csv written", sum(len(g) for g in rows.values()))
    return EXIT_OK


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    shared.add_argument("--seed", type=int, default=None, help="override the config seed")

    parser = argparse.ArgumentParser(
        prog="sagefed",
        description="Deterministic federated semi-supervised learning simulator.",
        parents=[shared],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config file and print its fingerprint",
                       parents=[shared])
    p.add_argument("config")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("run", help="run one experiment", parents=[shared])
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("sweep", help="run a grid of experiments", parents=[shared])
    p.add_argument("sweep")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("export-shards", help="write a config's client shards as JSONL",
                       parents=[shared])
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output file")
    p.set_defaults(handler=_cmd_export_shards)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
    try:
        return args.handler(args)
    except ConfigError as exc:
        for error in exc.errors:
            print(f"error: {error}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
