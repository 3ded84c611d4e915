"""Mean MR of the Naive campaign before and after a joint population and budget scaling."""

import argparse

from checkup_sim import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--per-group", type=int, default=100)
    ap.add_argument("--factor", type=float, default=10.0)
    ap.add_argument("--replicates", type=int, default=30)
    args = ap.parse_args()
    r = experiments.scale_covariance(args.per_group, args.factor, args.replicates)
    for pop, budget, mean in zip(r["population"], r["budget"], r["mean"]):
        print(f"{pop:>7d} agents, budget {budget:>8.1f}: MR {mean:.5e}")
    print(f"gap {r['gap_in_se']:.2f} standard errors, {'passed' if r['passed'] else 'FAILED'}")


if __name__ == "__main__":
    main()
