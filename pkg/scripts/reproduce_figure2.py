"""Clustered (k = 4) and global fidelity surfaces over noise level and client count."""

import argparse
import os

from cqsa.fidelity import FIG2_N, FIG2_P, FidelityStudy, scan_figure2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trajectories", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--out", default="results/figure2.csv")
    args = ap.parse_args()

    curve = scan_figure2(FidelityStudy(trajectories=args.trajectories, seed=args.seed), args.k).sorted()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write(curve.to_csv())

    for label, pick in (("CQSA", lambda rs: rs[0]), ("Global", lambda rs: rs[1])):
        print(label)
        print(f"{'p':>7} " + " ".join(f"{'N=' + str(n):>8}" for n in FIG2_N))
        for p in FIG2_P:
            vals = []
            for n in FIG2_N:
                rows = curve.select(p=p, n=n)
                rows = sorted(rows, key=lambda r: r.method != "CqsaProduct")
                vals.append(pick(rows).fidelity)
            print(f"{p:>7} " + " ".join(f"{v:8.4f}" for v in vals))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
