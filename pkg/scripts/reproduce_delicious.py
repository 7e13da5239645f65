"""Run the full Delicious experiment sweep and print the summary table.

Expects a prepared split (flaicf prepare ...). Completed runs are cached
under --out_dir, so the sweep resumes where it stopped.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from flaicf.repro import LR_GRID, SEEDS, run_delicious


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data_dir", required=True, help="prepared split directory")
    ap.add_argument("--out_dir", required=True, help="run cache and summary output")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(SEEDS))
    ap.add_argument("--lr_grid", type=float, nargs="+", default=list(LR_GRID))
    ap.add_argument("--eval_workers", type=int, default=min(4, os.cpu_count() or 1))
    args = ap.parse_args()

    summary = run_delicious(
        args.data_dir, args.out_dir,
        seeds=tuple(args.seeds), lr_grid=tuple(args.lr_grid),
        eval_workers=args.eval_workers,
    )
    print(f"\nbest learning rate: {summary['best_lr']}")
    print(f"{'model':<20} {'HR@10':>8} {'NDCG@10':>8}")
    for name, med in sorted(summary["medians"].items()):
        print(f"{name:<20} {100 * med['test_hr']:>8.2f} {100 * med['test_ndcg']:>8.2f}")
    for name, res in summary["baselines"].items():
        print(f"{name:<20} {100 * res['test_hr']:>8.2f} {100 * res['test_ndcg']:>8.2f}")
    print(f"\nsummary written to {os.path.join(args.out_dir, 'delicious_summary.json')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
