"""Compare pseudo-labeling strategies across heterogeneity levels.

Runs the strategy x alpha grid at a reduced scale and prints final test
accuracy per cell (mean over seeds). Expect a few minutes of runtime.

Usage: python scripts/run_strategy_grid.py [--rounds N] [--seeds a b c]
"""

import argparse
import statistics
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sagefed.config import build_config
from sagefed.federation import round_averaged_pl_accuracy, run_experiment

STRATEGIES = ("supervised_only", "lpl", "gpl", "cpg", "sage")
ALPHAS = (0.1, 0.5, 1.0)


def cell_config(strategy, alpha, seed, rounds):
    return build_config({
        "strategy": strategy,
        "rounds": rounds,
        "seed": seed,
        "dirichlet_alpha": alpha,
        "batch_size_unlabeled": 8,
        "task": {"samples_per_class": 200, "class_separation": 2.0, "noise_scale": 1.25},
        "model": {"hidden_dims": [24]},
    })


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--rounds", type=int, default=40)
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    args = parser.parse_args()

    t0 = time.time()
    print(f"{'strategy':>16} " + " ".join(f"alpha={a:<6}" for a in ALPHAS))
    for strategy in STRATEGIES:
        cells = []
        for alpha in ALPHAS:
            accs, pls = [], []
            for seed in args.seeds:
                result = run_experiment(cell_config(strategy, alpha, seed, args.rounds))
                accs.append(result.metrics[-1].test_accuracy)
                pl = round_averaged_pl_accuracy(result.metrics)
                if pl is not None:
                    pls.append(pl)
            mean_pl = statistics.fmean(pls) if pls else None
            cells.append((statistics.fmean(accs), mean_pl))
        row = " ".join(f"{acc:.4f}      " for acc, _ in cells)
        print(f"{strategy:>16} {row} [{time.time() - t0:.0f}s]")
        pl_row = " ".join("-           " if pl is None else f"(pl {pl:.3f})  " for _, pl in cells)
        print(f"{'':>16} {pl_row}")


if __name__ == "__main__":
    main()
