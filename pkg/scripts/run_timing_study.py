"""Reproduce the snapping timing study end to end.

Runs the synthetic-operator experiment (13 participants x 40 trials by
default), writes results.csv and the long-format box-plot export, and
prints the summary report. Use --seed to rerun the exact same study.
"""

import argparse
import pathlib
import sys

from gazepick.experiment import (
    run_experiment,
    summarize_experiment,
    write_boxplot_csv,
    write_results_csv,
)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--participants", type=int, default=13)
    parser.add_argument("--trials", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--fixed-order", action="store_true")
    parser.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("study_out"))
    args = parser.parse_args(argv)

    results = run_experiment(
        n_participants=args.participants,
        n_trials=args.trials,
        seed=args.seed,
        fixed_order=args.fixed_order,
    )
    report = summarize_experiment(results)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, args.out_dir / "results.csv")
    write_boxplot_csv(results, args.out_dir / "results_boxplot.csv")
    (args.out_dir / "report.txt").write_text(report.to_text() + "\n")

    print(report.to_text())
    print(f"\nwrote {args.out_dir}/results.csv, results_boxplot.csv, report.txt")
    return 0


if __name__ == "__main__":
    sys.exit(main())
