"""Run one experiment from a config file and print a compact report.

Usage: python scripts/run_single.py [config.json] [--out DIR]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sagefed.config import validate_config
from sagefed.federation import (
    round_averaged_pl_accuracy,
    run_experiment,
    write_summary_json,
    write_trace_csv,
)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("config", nargs="?",
                        default=str(Path(__file__).resolve().parent.parent / "configs" / "sage_default.json"))
    parser.add_argument("--out", default=None, help="optional directory for trace.csv and summary.json")
    args = parser.parse_args()

    cfg = validate_config(Path(args.config).read_text())
    result = run_experiment(cfg)

    final = result.metrics[-1]
    print(f"strategy={cfg.strategy.value} alpha={cfg.partition.dirichlet_alpha} seed={cfg.seed}")
    print(f"final test accuracy: {final.test_accuracy:.4f}")
    print(f"best test accuracy:  {max(m.test_accuracy for m in result.metrics):.4f}")
    pl = round_averaged_pl_accuracy(result.metrics)
    print(f"round-averaged pseudo-label accuracy: {'n/a' if pl is None else f'{pl:.4f}'}")
    print(f"final round labels: {final.pseudo_count} "
          f"(soft {final.n_corrected_soft}, local {final.n_hard_local}, "
          f"global {final.n_hard_global}, abstained {final.n_abstain})")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(result.metrics, str(out / "trace.csv"))
        write_summary_json(result.metrics, cfg, str(out / "summary.json"))
        print(f"wrote {out / 'trace.csv'} and {out / 'summary.json'}")


if __name__ == "__main__":
    main()
