"""Repeated MC searches against a brute-force grid on the two-group instance."""

import argparse

from checkup_sim import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--searches", type=int, default=20)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--replicates", type=int, default=5)
    args = ap.parse_args()
    r = experiments.optimizer_oracle(args.searches, args.samples, args.replicates)
    lo, hi = r["optimal_range"]
    print(f"grid minimum {r['grid_min']:.6g} for high-risk shares {lo:.2f}-{hi:.2f}")
    for k, (f, d) in enumerate(zip(r["found"], r["distances"])):
        print(f"search {k:2d}: share {f:.3f}, distance {d:.3f}")
    print(f"{r['hits']}/{args.searches} within 0.1 in {r['seconds']:.0f}s, {'passed' if r['passed'] else 'FAILED'}")


if __name__ == "__main__":
    main()
