"""Curriculum vs direct high-density training with a fixed reward, several seeds.

    python3 scripts/table1_trend.py [--episodes 500] [--seeds 0 1 2 3 4] [--json out.json]
"""

import argparse
import json
from dataclasses import replace

from ogr.loop.experiment import TrendConfig, compare
from ogr.sim.world import get_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", default="overtaking")
    ap.add_argument("--episodes", type=int, default=TrendConfig.episodes)
    ap.add_argument("--eval-episodes", type=int, default=TrendConfig.eval_episodes)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(TrendConfig.seeds))
    ap.add_argument("--json", help="write the full result here")
    args = ap.parse_args()
    cfg = replace(TrendConfig(), episodes=args.episodes, eval_episodes=args.eval_episodes, seeds=tuple(args.seeds))

    def progress(seed, arm, row, elapsed):
        print(f"seed {seed} {arm:<10} SR {row['SR']:.3f} CR {row['CR']:.3f} TOR {row['TOR']:.3f}  [{elapsed:.0f}s]",
              flush=True)

    res = compare(get_scenario(args.scenario), cfg, progress)
    print(f"mean high-density SR: curriculum {res['mean_sr']['curriculum']:.3f}, direct {res['mean_sr']['direct']:.3f}")
    print(f"gap {100 * res['gap']:+.1f} points; curriculum ahead on {res['wins']}/{len(cfg.seeds)} seeds; "
          f"{res['seconds']:.0f}s")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(res, f, indent=1)


if __name__ == "__main__":
    main()
