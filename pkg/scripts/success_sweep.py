"""Run the success-rate sweeps shipped in configs/ and write their reports.

    python scripts/success_sweep.py                      # every *_sweep.json, 200 trials
    python scripts/success_sweep.py cubic_sweep --trials 50
"""

import argparse
from pathlib import Path

from bsindy.bench import SweepConfig, run_sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="config stems (default: every *_sweep.json)")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="results/sweeps")
    args = p.parse_args()

    names = args.names or sorted(f.stem for f in CONFIGS.glob("*_sweep.json"))
    for name in names:
        cfg = SweepConfig.from_json(CONFIGS / f"{name}.json")
        if args.trials is not None:
            cfg.trials = args.trials
        report = run_sweep(cfg, workers=args.workers)
        paths = report.write(args.out, name)
        print(f"== {name} ({report.wall_time:.1f} s) -> {paths['csv']}")
        for c in report.cells:
            print(f"  {c.strategy:12s} sigma={c.sigma:<6g} N={c.n_samples:<5d} "
                  f"{c.success_rate:.3f} [{c.ci_low:.3f}, {c.ci_high:.3f}]  modal: {c.modal_support}")


if __name__ == "__main__":
    main()
