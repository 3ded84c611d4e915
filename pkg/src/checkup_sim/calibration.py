"""Fitting scenario parameters to a historical mortality series.

The fitted parameters are, by default, the per-group means of compliance (mu)
and SMS susceptibility (rho). The objective is the summed absolute deviation
between the simulated per-round mortality rate and the historical one, and it
is minimised by projected gradient descent with five-point-stencil gradients.
Every loss evaluation reuses the same replicate seeds, so the objective is a
deterministic function of the parameters.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .campaign import Campaign
from .core import ConfigError, GroupKey, json_safe
from .simulator import ScenarioConfig, run

log = logging.getLogger(__name__)

CALIBRATABLE = ("mu_mean", "rho_mean")


@dataclass
class Parameter:
    """One real parameter: an init field shared by a set of groups."""

    name: str
    field: str
    groups: tuple
    value: float
    lower: float
    upper: float

    def __post_init__(self):
        if self.field not in CALIBRATABLE:
            raise ConfigError(f"cannot calibrate {self.field!r}; choose from {CALIBRATABLE}")
        if not self.lower <= self.upper:
            raise ConfigError(f"{self.name}: lower bound above upper bound")
        self.groups = tuple(int(g) for g in self.groups)


class ParameterVector:
    """Ordered named parameters with box bounds."""

    def __init__(self, params: Sequence[Parameter]):
        self.params = list(params)
        if not self.params:
            raise ConfigError("parameter vector is empty")
        self.values = self.project(np.array([p.value for p in self.params], dtype=float))

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.params])

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.params])

    def __len__(self) -> int:
        return len(self.params)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def with_values(self, x) -> "ParameterVector":
        out = copy.copy(self)
        out.values = self.project(x)
        return out

    @classmethod
    def per_group(cls, scenario: ScenarioConfig, groups: Optional[Sequence[int]] = None,
                  fields: Sequence[str] = CALIBRATABLE, mu_bounds=(0.0, 1.0), rho_bounds=(0.0, 5.0)
                  ) -> "ParameterVector":
        """One parameter per (field, group), starting from the scenario's values.

        ``groups`` defaults to the groups that have individuals.
        """
        if groups is None:
            groups = np.flatnonzero(scenario.init.counts > 0)
        bounds = {"mu_mean": mu_bounds, "rho_mean": rho_bounds}
        params = []
        for f in fields:
            arr = getattr(scenario.init, f)
            for g in groups:
                lo, hi = bounds[f]
                params.append(Parameter(f"{f}[{GroupKey.from_index(int(g))}]", f, (int(g),), float(arr[g]), lo, hi))
        return cls(params)

    def apply(self, scenario: ScenarioConfig, x=None) -> ScenarioConfig:
        """Copy of ``scenario`` with the parameters set to ``x`` (default: current values)."""
        x = self.values if x is None else self.project(x)
        init = copy.copy(scenario.init)
        for f in CALIBRATABLE:
            setattr(init, f, getattr(init, f).copy())
        for p, v in zip(self.params, x):
            getattr(init, p.field)[list(p.groups)] = v
        return replace(scenario, init=init)

    def to_json(self) -> dict:
        return {"parameters": [
            {"name": p.name, "field": p.field, "groups": list(p.groups), "value": float(v),
             "lower": p.lower, "upper": p.upper}
            for p, v in zip(self.params, self.values)
        ]}

    def scenario_patch(self) -> dict:
        """Init rows that, appended to a scenario's init rows, set the fitted values."""
        rows = []
        for p, v in zip(self.params, self.values):
            for g in p.groups:
                k = GroupKey.from_index(g)
                rows.append({"age_bucket": k.age_bucket, "gender": k.gender.name.lower(), "ses": k.ses,
                             p.field: float(v)})
        return {"init": {"rows": rows}}


def apply_patch(scenario_json: dict, patch: dict) -> dict:
    """Merge a parameter patch into a scenario JSON object (later rows win)."""
    out = copy.deepcopy(scenario_json)
    out["init"]["rows"] = list(out["init"]["rows"]) + list(patch.get("init", {}).get("rows", []))
    return out


@dataclass
class FitConfig:
    h: float = 0.01
    learning_rate: float = 0.05
    max_iters: int = 300
    loss_target: float = 0.0
    replicates: int = 3
    seed: int = 0
    fresh_seeds: bool = False  # draw new replicate seeds every iteration
    workers: Optional[int] = None
    divergence_factor: float = 10.0
    divergence_patience: int = 5
    # halve the step until the loss does not increase; stop once the step drops below min_step
    backtracking: bool = False
    min_step: float = 1e-4

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError("stencil step h must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if self.max_iters < 0 or self.replicates < 1:
            raise ConfigError("max_iters must be >= 0 and replicates >= 1")

    def seeds(self, iteration: int = 0) -> list[int]:
        base = self.seed + (iteration * 7919 if self.fresh_seeds else 0)
        return [base + k for k in range(self.replicates)]


class FitDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------
# objective

def series_loss(predicted, historical) -> float:
    """Sum over rounds of |predicted - historical|."""
    p = np.asarray(predicted, dtype=float)
    h = np.asarray(historical, dtype=float)
    if p.shape != h.shape:
        raise ValueError(f"series length mismatch: {p.shape[0]} simulated vs {h.shape[0]} historical rounds")
    return float(np.abs(p - h).sum())


def r_squared(simulated, historical) -> float:
    """1 - SS_res / SS_tot against the historical mean; nan when the history is flat."""
    s = np.asarray(simulated, dtype=float)
    h = np.asarray(historical, dtype=float)
    if s.shape != h.shape or h.size < 2:
        raise ValueError("r_squared needs two equal-length series of length >= 2")
    ss_tot = float(((h - h.mean()) ** 2).sum())
    if ss_tot == 0:
        return float("nan")
    return 1.0 - float(((h - s) ** 2).sum()) / ss_tot


def simulated_series(scenario: ScenarioConfig, seeds: Sequence[int],
                     campaign: Optional[Callable[[], Campaign]] = None) -> np.ndarray:
    """Per-round mortality averaged over replicate seeds."""
    runs = [run(scenario, campaign() if campaign else None, seed=s).mortality_series for s in seeds]
    return np.mean(runs, axis=0)


def loss(params: ParameterVector, scenario: ScenarioConfig, historical, config: FitConfig = FitConfig(),
         campaign: Optional[Callable[[], Campaign]] = None, iteration: int = 0) -> float:
    hist = np.asarray(historical, dtype=float)
    if hist.shape != (scenario.horizon,):
        raise ValueError(f"historical series has {hist.size} rounds, scenario horizon is {scenario.horizon}")
    pred = simulated_series(params.apply(scenario), config.seeds(iteration), campaign)
    return series_loss(pred, hist)


# ---------------------------------------------------------------------------
# gradient

ONE_SIDED = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def stencil_points(x, h: float, lower=None, upper=None):
    """Evaluation points and weights of the five-point derivative in every coordinate.

    Returns (points, weights, steps): ``points`` is (eps, 4 or 5, eps). Where
    x +- 2h would leave the bounds the step shrinks; when the point sits on a
    bound (too little room on one side) a one-sided five-point formula with
    the full step is used instead.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    pts, wts, steps = [], [], []
    for j in range(n):
        room_lo, room_hi = x[j] - lo[j], hi[j] - x[j]
        hj = min(h, room_lo / 2, room_hi / 2)
        e = np.zeros(n)
        e[j] = 1.0
        if hj >= h / 10:
            offs = np.array([-2.0, -1.0, 1.0, 2.0])
            w = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
        elif room_hi >= 4 * h:
            hj, offs, w = h, np.arange(5.0), ONE_SIDED
        elif room_lo >= 4 * h:
            hj, offs, w = h, -np.arange(5.0), -ONE_SIDED
        else:
            raise ValueError(f"coordinate {j}: bounds too tight for step h={h}")
        pts.append(x + np.outer(offs * hj, e))
        wts.append(w)
        steps.append(hj)
    return pts, wts, np.array(steps)


def stencil_gradient(f: Callable[[np.ndarray], float], x, h: float, lower=None, upper=None,
                     map_fn: Callable = map) -> np.ndarray:
    """Five-point central-difference gradient of ``f`` at ``x``.

    Per coordinate: (f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / (12 h).
    ``map_fn`` evaluates a list of points (e.g. a process pool map).
    """
    if not h > 0:
        raise ValueError("h must be positive")
    pts, wts, steps = stencil_points(x, h, lower, upper)
    flat = [p for block in pts for p in block]
    vals = np.asarray(list(map_fn(f, flat)), dtype=float)
    grad = np.empty(len(pts))
    k = 0
    for j, (block, w) in enumerate(zip(pts, wts)):
        v = vals[k:k + len(block)]
        k += len(block)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite objective value around coordinate {j}")
        # the weights sum to zero; differencing first makes a flat f give exactly 0
        grad[j] = float(np.dot(w, v - v[0])) / steps[j]
    return grad


# ---------------------------------------------------------------------------
# descent

@dataclass
class FitTrace:
    iteration: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    mae: list = field(default_factory=list)
    r2: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)

    def add(self, it, loss_value, mae, r2, gnorm):
        self.iteration.append(it)
        self.loss.append(loss_value)
        self.mae.append(mae)
        self.r2.append(r2)
        self.grad_norm.append(gnorm)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "MAE", "R2", "loss", "grad_norm"])
            for row in zip(self.iteration, self.mae, self.r2, self.loss, self.grad_norm):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


@dataclass
class FitResult:
    params: ParameterVector
    trace: FitTrace
    stopped: str  # "target", "max_iters" or "converged"
    final_series: np.ndarray

    def to_json(self) -> dict:
        return {"stopped": self.stopped, "iterations": len(self.trace.iteration) - 1,
                "final_mae": self.trace.mae[-1], "final_r2": self.trace.r2[-1], **self.params.to_json()}


class _Objective:
    """Picklable f(x) -> loss for process pools."""

    def __init__(self, params, scenario, hist, seeds, campaign):
        self.params, self.scenario, self.hist, self.seeds, self.campaign = params, scenario, hist, seeds, campaign

    def series(self, x):
        return simulated_series(self.params.apply(self.scenario, x), self.seeds, self.campaign)

    def evaluate(self, x):
        series = self.series(x)
        return series_loss(series, self.hist), series

    def __call__(self, x):
        return series_loss(self.series(x), self.hist)


def _pool_map(workers):
    from .optimizer import parallel_map

    def fmap(f, items):
        return parallel_map(f, list(items), workers)
    return fmap


def _evaluate(f, x):
    if hasattr(f, "evaluate"):
        return f.evaluate(x)
    return float(f(x)), None


def descend(objective_at: Callable[[int], Callable], x0, lower, upper, config: FitConfig = FitConfig(),
            fmap: Callable = map, on_iter: Optional[Callable] = None):
    """Projected gradient descent x <- clip(x - lr * grad, lower, upper).

    ``objective_at(it)`` returns the objective used at iteration ``it``: a
    callable returning the loss, optionally with an ``evaluate(x) -> (loss,
    aux)`` method whose ``aux`` is handed to ``on_iter(it, loss, aux,
    grad_norm)``. The final iteration reports a nan gradient norm.
    Returns (x, stopped, aux at x).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    initial = None
    strikes = 0
    stopped = "max_iters"
    aux = None
    lr = config.learning_rate
    cached = None  # (loss, aux) at x when the line search already evaluated it
    for it in range(config.max_iters + 1):
        f = objective_at(it)
        if cached is not None and not config.fresh_seeds:
            value, aux = cached
        else:
            value, aux = _evaluate(f, x)
        cached = None
        initial = value if initial is None else initial
        strikes = strikes + 1 if value > config.divergence_factor * initial else 0
        last = it == config.max_iters
        if value <= config.loss_target or last or strikes >= config.divergence_patience:
            if on_iter is not None:
                on_iter(it, value, aux, float("nan"))
            if strikes >= config.divergence_patience:
                raise FitDiverged(f"loss above {config.divergence_factor}x its initial value for "
                                  f"{strikes} iterations", None)
            stopped = "max_iters" if last and value > config.loss_target else "target"
            break
        g = stencil_gradient(f, x, config.h, lower, upper, fmap)
        gnorm = float(np.linalg.norm(g))
        if on_iter is not None:
            on_iter(it, value, aux, gnorm)
        if not config.backtracking:
            x = np.clip(x - lr * g, lower, upper)
            continue
        while True:
            trial = np.clip(x - lr * g, lower, upper)
            trial_value, trial_aux = _evaluate(f, trial)
            if trial_value <= value or lr * gnorm < config.min_step:
                break
            lr /= 2
        if trial_value > value:
            stopped = "converged"
            break
        x = trial
        cached = (trial_value, trial_aux)
        lr = min(2 * lr, config.learning_rate)
    return x, stopped, aux


def fit(scenario: ScenarioConfig, historical, config: FitConfig = FitConfig(),
        params: Optional[ParameterVector] = None, campaign: Optional[Callable[[], Campaign]] = None,
        progress: Optional[Callable[[int, float, float], None]] = None) -> FitResult:
    """Fit ``params`` (default: per-group mu and rho means) to a historical series."""
    hist = np.asarray(historical, dtype=float)
    if hist.shape != (scenario.horizon,):
        raise ValueError(f"historical series has {hist.size} rounds, scenario horizon is {scenario.horizon}")
    params = params or ParameterVector.per_group(scenario)
    trace = FitTrace()

    def objective_at(it):
        return _Objective(params, scenario, hist, config.seeds(it), campaign)

    def on_iter(it, value, series, gnorm):
        trace.add(it, value, value / hist.size, r_squared(series, hist), gnorm)
        if np.isfinite(gnorm):
            log.info("iter %d: MAE %.6g, R2 %.4f", it, value / hist.size, trace.r2[-1])
            if progress is not None:
                progress(it, value / hist.size, trace.r2[-1])

    try:
        x, stopped, series = descend(objective_at, params.values, params.lower, params.upper, config,
                                     _pool_map(config.workers), on_iter)
    except FitDiverged as exc:
        exc.trace = trace
        raise
    return FitResult(params.with_values(x), trace, stopped, series)


# ---------------------------------------------------------------------------
# I/O

def read_series_csv(path) -> np.ndarray:
    """Historical series CSV with columns (round, mortality); returned ordered by round."""
    rounds, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: empty file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rounds.append(int(row[0]))
                values.append(float(row[1]))
            except (ValueError, IndexError):
                raise ConfigError(f"{path}: line {lineno}: expected round,mortality") from None
    order = np.argsort(rounds)
    r = np.asarray(rounds)[order]
    if r.size and np.any(np.diff(r) != 1):
        raise ConfigError(f"{path}: rounds must be contiguous")
    return np.asarray(values, dtype=float)[order]


def write_series_csv(path, series, t0: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "mortality"])
        for k, v in enumerate(series):
            w.writerow([t0 + k, repr(float(v))])


def write_fit(result: FitResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(out / "fit_trace.csv")
    (out / "fitted_parameters.json").write_text(json.dumps(json_safe(result.to_json()), indent=1))
    (out / "scenario_patch.json").write_text(json.dumps(result.params.scenario_patch(), indent=1))
