"""Final loss of every filter on the desk task, with and without a sign-flip attack."""

import argparse
from dataclasses import replace

from cqsa.harness import AttackConfig, FLConfig, run_experiment
from cqsa.robust import FILTERS, FilterConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--magnitude", type=float, default=10.0)
    ap.add_argument("--byzantine", type=int, default=4)
    ap.add_argument("--declare", choices=("honest", "attacked"), default="honest")
    args = ap.parse_args()

    attack = AttackConfig("sign_flip", args.magnitude, frozenset(range(args.byzantine)), args.declare)
    print(f"{'filter':>13} {'seed':>4} {'clean':>10} {'attacked':>10} {'failed':>6}")
    for name in FILTERS:
        for seed in args.seeds:
            cfg = FLConfig(seed=seed, filter=FilterConfig(name))
            clean = run_experiment(cfg)
            hit = run_experiment(replace(cfg, attack=attack))
            print(f"{name:>13} {seed:>4} {clean.final_loss:10.3e} {hit.final_loss:10.3e} "
                  f"{len(hit.failed_rounds):>6}")


if __name__ == "__main__":
    main()
