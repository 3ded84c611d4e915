"""Train NaiveMC and SocioMC on the desk scenario and compare all five strategies.

Writes comparison.csv/json, the two best tensors and the SocioMC heatmaps.
"""

import argparse
import dataclasses
import json
import logging
from pathlib import Path

from checkup_sim import experiments
from checkup_sim.campaign import heatmap
from checkup_sim.core import json_safe
from checkup_sim.optimizer import MCSearchConfig
from checkup_sim.simulator import load_scenario

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "desk.json"))
    ap.add_argument("--replicates", type=int, default=30)
    ap.add_argument("--train-scale", type=float, default=0.1)
    ap.add_argument("--samples", type=int, default=experiments.ORDERING_SEARCH["num_samples"])
    ap.add_argument("--seed", type=int, default=experiments.ORDERING_SEARCH["seed"])
    ap.add_argument("--out", default="results/campaign_ordering")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    sc = load_scenario(args.scenario)
    search = MCSearchConfig(**{**experiments.ORDERING_SEARCH, "num_samples": args.samples, "seed": args.seed})
    r = experiments.campaign_ordering(sc, args.replicates, args.train_scale, search)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r["report"].to_csv(out / "comparison.csv")
    for res in r["searches"].values():
        res.best.to_csv(out / f"{res.strategy_name}_tensor.csv")
        res.trace_csv(out / f"{res.strategy_name}_trace.csv")
    hm = heatmap(r["searches"]["socio"].best, sc.effective_init.counts, sc.effective_campaign, sc.horizon)
    for g, name in enumerate(("male", "female")):
        rows = ["age_bucket," + ",".join(f"ses{s}" for s in range(1, 11))]
        rows += [f"{a}," + ",".join(f"{v:.6g}" for v in hm[g, a]) for a in range(hm.shape[1])]
        (out / f"heatmap_{name}.csv").write_text("\n".join(rows) + "\n")
    summary = {k: v for k, v in r.items() if k not in ("report", "searches")}
    summary["comparison"] = r["report"].to_json()
    summary["search"] = dataclasses.asdict(search)
    (out / "summary.json").write_text(json.dumps(json_safe(summary), indent=1))
    for name, m in r["means"].items():
        print(f"{name:>8s}  {m:.5e} +- {r['sds'][name]:.2e}")
    print("checks:", r["checks"], "passed" if r["passed"] else "FAILED")


if __name__ == "__main__":
    main()
