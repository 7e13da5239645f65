"""Train the pretrained FLA_NAIS configuration on a prepared MovieLens-1M split."""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from flaicf.repro import run_ml1m


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data_dir", required=True, help="prepared split directory")
    ap.add_argument("--out_dir", required=True, help="run cache and summary output")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--eval_workers", type=int, default=min(4, os.cpu_count() or 1))
    args = ap.parse_args()

    result = run_ml1m(args.data_dir, args.out_dir, seed=args.seed, lr=args.lr,
                      eval_workers=args.eval_workers)
    print(f"test HR@10  = {100 * result['test_hr']:.2f}")
    print(f"test NDCG@10 = {100 * result['test_ndcg']:.2f}")
    print(f"summary written to {os.path.join(args.out_dir, 'ml1m_summary.json')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
