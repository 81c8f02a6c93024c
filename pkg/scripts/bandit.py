"""PPO sanity check on the single-rewarded-triple contextual bandit.

    python3 scripts/bandit.py [--seeds 0 1 2] [--batch 512] [--updates 200]
"""

import argparse
import time

from ogr.rl.bandit import train_bandit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--updates", type=int, default=200)
    args = ap.parse_args()
    for seed in args.seeds:
        t = time.perf_counter()
        history, acc, used = train_bandit(seed, args.updates, args.batch)
        print(f"seed {seed}: greedy accuracy {acc:.3f} after {used} updates, "
              f"target probability {history[0]:.4f} -> {history[-1]:.4f}  [{time.perf_counter() - t:.1f}s]")


if __name__ == "__main__":
    main()
