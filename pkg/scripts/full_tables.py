#!/usr/bin/env python3
"""Offline reproduction of the full simulation tables.

Runs the two-step procedure in network mode for both targets over
n in {1000, 5000, 10000, 50000} with 1000 repetitions each, recording
L2 and sup distances, credible radii, and coverage under all inflation
factors.  This is deliberately NOT part of the test suite: at full scale
it needs hours of CPU.  Scale down with --reps / --n-values first.

    python3 scripts/full_tables.py --out results/ --threads 8
    python3 scripts/full_tables.py --out quick/ --reps 20 --n-values 1000 5000
"""

import argparse
from pathlib import Path

from ebdnn import DnnMode, ExperimentConfig, TargetSpec, run_coverage
from ebdnn.cli import write_coverage_report


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--n-values", type=int, nargs="+", default=[1000, 5000, 10000, 50000])
    parser.add_argument("--threads", type=int, default=8)
    parser.add_argument("--draws", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=20240)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("f1", "f2"):
        cfg = ExperimentConfig(
            target=TargetSpec(kind=name),
            n_values=tuple(args.n_values),
            reps=args.reps,
            master_seed=args.seed,
            noise_sd=1.0,
            alpha=0.05,
            norms=("l2", "sup"),
            inflations=("none", "sqrt_log", "log"),
            draws=args.draws,
            basis_mode=DnnMode(),
            threads=args.threads,
        )
        report = run_coverage(cfg)
        target_dir = out / name
        target_dir.mkdir(exist_ok=True)
        paths = write_coverage_report(report, "both", target_dir)
        print(f"{name}: wrote {', '.join(str(p) for p in paths)} "
              f"({report.runtime_seconds:.0f}s)")


if __name__ == "__main__":
    main()
