"""checkup-sim command line.

Every command writes into its own ``--out`` directory together with a
manifest.json recording the exact arguments, so ``checkup-sim rerun`` can
reproduce the outputs. Exit codes: 0 success, 1 runtime failure, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import FitConfig, FitDiverged, ParameterVector, fit, read_series_csv, simulated_series, \
    write_fit, write_series_csv
from .campaign import CampaignTensor, TensorCampaign, heatmap
from .core import ConfigError, json_safe
from .ingestion import AnnualSeries, disaggregate_life_expectancy, exp_smooth_forecast, fit_sms_coefficients, \
    growth_rate_per_round, read_ses_gaps_csv, read_sms_effect_csv
from .optimizer import MCSearchConfig, SAMPLERS, compare_campaigns, greedy_strategy, mc_optimize, naive_strategy, \
    none_strategy
from .simulator import load_scenario, run

log = logging.getLogger("checkup_sim")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(json_safe(obj), indent=1) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(args, argv, started: float) -> None:
    out = Path(args.out)
    inputs = {}
    for key in ("scenario", "tensor", "history", "growth", "life", "gaps", "sms"):
        p = getattr(args, key, None)
        if p:
            inputs[key] = {"path": str(p), "sha256": _sha256(p)}
    write_json(out / "manifest.json", {
        "command": args.command,
        "argv": list(argv),
        "inputs": inputs,
        "seed": getattr(args, "seed", None),
        "out": str(out),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "wall_seconds": round(time.time() - started, 3),
    })


def _scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "scale", None):
        sc = sc.with_scale(args.scale)
    return sc


def _load_tensor(path) -> CampaignTensor:
    p = Path(path)
    if p.suffix == ".json":
        return CampaignTensor.from_json(json.loads(p.read_text()))
    return CampaignTensor.from_csv(p)


def _strategy(spec: str, scenario, args=None):
    """none | naive | greedy | naive-mc | socio-mc | NAME=tensor-file"""
    if "=" in spec:
        name, path = spec.split("=", 1)
        return TensorCampaign(_load_tensor(path), name)
    key = spec.lower().replace("_", "-")
    if key == "none":
        return none_strategy()
    if key == "naive":
        return naive_strategy(scenario)
    if key == "greedy":
        return greedy_strategy(scenario)
    if key in ("naive-mc", "socio-mc"):
        dims = "status_only" if key == "naive-mc" else "socio"
        train = scenario
        if getattr(args, "train_scale", None):
            train = scenario.with_scale(args.train_scale)
        res = mc_optimize(train, _search_config(args), dims)
        return res.strategy()
    if Path(spec).exists():
        return TensorCampaign(_load_tensor(spec), Path(spec).stem)
    raise ConfigError(f"unknown strategy {spec!r}")


def _search_config(args) -> MCSearchConfig:
    try:
        return MCSearchConfig(
            num_samples=args.samples,
            replicates_per_evaluation=args.train_replicates,
            time_block_length=args.block_length,
            sampler=args.sampler,
            concentration=args.concentration,
            time_concentration=args.time_concentration,
            group_concentrations=args.group_concentrations,
            refine_top=args.refine_top,
            refine_replicates=args.refine_replicates,
            seed=args.seed if args.seed is not None else 0,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands

def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"{args.scenario}: ok ({sc.init.total} individuals, {sc.horizon} rounds, budget {sc.campaign.budget})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)
    seed = sc.seed if args.seed is None else args.seed
    summaries = []
    template = _strategy(args.campaign, sc, args)
    for k in range(args.replicates):
        campaign = copy.deepcopy(template)
        res = run(sc, campaign, seed=seed + k, record_events=args.events)
        suffix = "" if args.replicates == 1 else f"_{k:03d}"
        res.to_csv(out / f"rounds{suffix}.csv")
        if args.events:
            res.events.to_csv(out / f"events{suffix}.csv")
        summaries.append({"campaign": campaign.name, **res.summary()})
    summary = summaries[0] if args.replicates == 1 else {
        "replicates": summaries,
        "mean_mortality_rate": float(np.mean([s["mortality_rate"] for s in summaries])),
    }
    write_json(out / "summary.json", summary)
    mr = summary["mortality_rate"] if args.replicates == 1 else summary["mean_mortality_rate"]
    print(f"mortality rate {mr:.6g}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)

    def progress(done, best):
        print(f"{done} samples, best MR {best:.6g}", flush=True)

    res = mc_optimize(sc, _search_config(args), args.dimensions, progress)
    res.best.to_csv(out / "best_tensor.csv")
    write_json(out / "best_tensor.json", res.best.to_json())
    res.trace_csv(out / "trace.csv")
    write_json(out / "search.json", {"strategy": res.strategy_name, "best_index": res.best_index,
                                     "best_mr": res.best_mr, "num_samples": args.samples,
                                     "dimensions": args.dimensions})
    print(f"best sample {res.best_index}: MR {res.best_mr:.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _scenario(args)
    strategies = [_strategy(s, sc, args) for s in args.strategies]
    rep = compare_campaigns(sc, strategies, args.replicates, seed_base=args.seed)
    out = Path(args.out)
    rep.to_csv(out / "comparison.csv")
    write_json(out / "comparison.json", rep.to_json())
    for name, m, s in zip(rep.names, rep.means, rep.sds):
        print(f"{name:>10s}  {m:.6g} +- {s:.3g}")
    print(f"lowest mean: {rep.best}" + ("  (n < 5: wide confidence intervals)" if rep.wide_ci else ""))
    return EXIT_OK


def cmd_heatmap(args) -> int:
    sc = _scenario(args)
    tensor = _load_tensor(args.tensor)
    hm = heatmap(tensor, sc.effective_init.counts, sc.effective_campaign, sc.horizon)
    out = Path(args.out)
    for g, name in enumerate(("male", "female")):
        with open(out / f"heatmap_{name}.csv", "w") as fh:
            fh.write("age_bucket," + ",".join(f"ses{s}" for s in range(1, 11)) + "\n")
            for a in range(hm.shape[1]):
                fh.write(f"{a}," + ",".join(repr(float(v)) for v in hm[g, a]) + "\n")
    print(f"wrote heatmap_male.csv and heatmap_female.csv to {out}")
    return EXIT_OK


def cmd_history(args) -> int:
    sc = _scenario(args)
    seed = sc.seed if args.seed is None else args.seed
    series = simulated_series(sc, [seed + k for k in range(args.replicates)])
    write_series_csv(Path(args.out) / "history.csv", series, sc.t0)
    print(f"wrote {len(series)} rounds")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    sc = _scenario(args)
    hist = read_series_csv(args.history)
    cfg = FitConfig(h=args.h, learning_rate=args.lr, max_iters=args.iters, loss_target=args.loss_target,
                    replicates=args.replicates, seed=args.seed if args.seed is not None else 0,
                    backtracking=args.backtracking)
    params = ParameterVector.per_group(sc)

    def progress(it, mae, r2):
        if it % 10 == 0:
            print(f"iter {it}: MAE {mae:.6g}  R2 {r2:.4f}", flush=True)

    out = Path(args.out)
    try:
        res = fit(sc, hist, cfg, params, progress=progress)
    except FitDiverged as exc:
        exc.trace.to_csv(out / "fit_trace.csv")
        raise
    write_fit(res, out)
    print(f"stopped ({res.stopped}) after {len(res.trace.iteration) - 1} iterations: "
          f"MAE {res.trace.mae[-1]:.6g}, R2 {res.trace.r2[-1]:.4f}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    sc = load_scenario(args.scenario)
    obj = sc.to_json()
    report = {}
    if args.growth:
        series = AnnualSeries.from_csv(args.growth)
        rate, w = exp_smooth_forecast(series, args.window)
        obj["r"] = growth_rate_per_round(rate)
        report["growth"] = {"yearly_rate": rate, "window": w, "per_round": obj["r"]}
    if args.life:
        avg = AnnualSeries.from_csv(args.life)
        if not args.gaps:
            raise ConfigError("--life needs --gaps (year, gender_gap, ses1..ses10)")
        years, gap, ses = read_ses_gaps_csv(args.gaps)
        if not np.array_equal(years, avg.years):
            raise ConfigError("life expectancy and gap files must cover the same years")
        dis = disaggregate_life_expectancy(avg.values, gap, ses)
        obj["life_expectancy"] = {"male": dis.values[-1, 0].tolist(), "female": dis.values[-1, 1].tolist()}
        report["life_expectancy"] = {"year": int(years[-1]), "max_residual": float(dis.residuals.max())}
    if args.sms:
        n, delta, rho = read_sms_effect_csv(args.sms)
        c1, c2, resid = fit_sms_coefficients(n, delta, rho)
        obj["campaign"]["c1"], obj["campaign"]["c2"] = c1, c2
        report["sms"] = {"c1": c1, "c2": c2, "residual": resid}
    out = Path(args.out)
    write_json(out / "scenario.json", obj)
    load_scenario(out / "scenario.json")  # round-trip check
    write_json(out / "ingest_report.json", report)
    print(f"wrote {out / 'scenario.json'}")
    return EXIT_OK


def cmd_rerun(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    if args.out:
        i = argv.index("--out")
        argv[i + 1] = args.out
    return main(argv)


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "compare": cmd_compare,
    "heatmap": cmd_heatmap,
    "history": cmd_history,
    "calibrate": cmd_calibrate,
    "ingest": cmd_ingest,
    "rerun": cmd_rerun,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="checkup-sim", description="Cancer check-up SMS campaign simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--scale", type=float, default=None, help="scale population and budget together")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    def search(p):
        p.add_argument("--samples", type=int, default=200)
        p.add_argument("--train-replicates", type=int, default=5)
        p.add_argument("--block-length", type=int, default=28)
        p.add_argument("--sampler", choices=SAMPLERS, default="dirichlet_uniform")
        p.add_argument("--concentration", type=float, default=1.0)
        p.add_argument("--time-concentration", type=float, default=None, help="factorized sampler, time axis")
        p.add_argument("--group-concentrations", type=float, nargs=3, default=None, metavar=("AGE", "GENDER", "SES"),
                       help="factorized sampler, group axes")
        p.add_argument("--refine-top", type=int, default=0, help="re-evaluate this many best candidates")
        p.add_argument("--refine-replicates", type=int, default=0)
        p.add_argument("--train-scale", type=float, default=None,
                       help="train MC strategies on the scenario scaled by this factor")

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("simulate", help="run a scenario")
    common(p)
    p.add_argument("--campaign", default="none", help="none, naive, greedy or a tensor CSV/JSON file")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--events", action="store_true", help="also write the event log")

    p = sub.add_parser("optimize", help="Monte Carlo campaign search")
    common(p)
    search(p)
    p.add_argument("--dimensions", choices=("socio", "status-only"), default="socio")

    p = sub.add_parser("compare", help="compare campaign strategies")
    common(p)
    search(p)
    p.add_argument("--strategies", nargs="+", default=["none", "naive", "greedy"],
                   help="none, naive, greedy, naive-mc, socio-mc or NAME=tensor-file")
    p.add_argument("--replicates", type=int, default=30)

    p = sub.add_parser("heatmap", help="average yearly SMSs per individual by group")
    common(p)
    p.add_argument("--tensor", required=True)

    p = sub.add_parser("history", help="write a synthetic mortality history from the simulator")
    common(p)
    p.add_argument("--replicates", type=int, default=1)

    p = sub.add_parser("calibrate", help="fit per-group mu and rho means to a history")
    common(p)
    p.add_argument("--history", required=True, help="CSV with round,mortality")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--h", type=float, default=0.01)
    p.add_argument("--loss-target", type=float, default=0.0)
    p.add_argument("--replicates", type=int, default=3)
    p.add_argument("--backtracking", action="store_true", help="halve the step until the loss does not increase")

    p = sub.add_parser("ingest", help="build a scenario from data files")
    common(p)
    p.add_argument("--growth", help="CSV year,growth_rate")
    p.add_argument("--window", type=int, nargs=2, default=(2, 25))
    p.add_argument("--life", help="CSV year,average_life_expectancy")
    p.add_argument("--gaps", help="CSV year,gender_gap,ses1..ses10")
    p.add_argument("--sms", help="CSV n,uptake_delta[,rho]")

    p = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    started = time.time()
    try:
        if getattr(args, "out", None) and args.command != "rerun":
            Path(args.out).mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args)
        if getattr(args, "out", None) and args.command != "rerun":
            write_manifest(args, argv, started)
        return code
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
