"""Campaign strategies, Monte Carlo campaign search and campaign comparison."""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import rng as rngmod
from .campaign import Campaign, CampaignGrid, CampaignTensor, GroupView, TensorCampaign
from .simulator import ScenarioConfig, run

log = logging.getLogger(__name__)

SAMPLERS = ("dirichlet_uniform", "independent_then_normalize", "factorized")


class NoCampaign(Campaign):
    name = "None"


def none_strategy() -> Campaign:
    return NoCampaign()


def naive_strategy(scenario: ScenarioConfig) -> Campaign:
    """Whole budget spread evenly over rounds and over all SMS-eligible people."""
    tensor = CampaignTensor(np.ones((1, 1, 1, 1)), scenario.horizon)
    return TensorCampaign(tensor, "Naive")


def largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    """Split ``total`` units proportionally to ``weights``; zero weights -> even split."""
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        w = np.ones_like(w)
    exact = total * w / w.sum()
    out = np.floor(exact).astype(np.int64)
    rest = int(total - out.sum())
    if rest > 0:
        # ties go to the lower cell index
        order = np.lexsort((np.arange(len(w)), -(exact - out)))
        out[order[:rest]] += 1
    return out


class GreedyCampaign(Campaign):
    """Each round's budget share split across cells by cumulative disease deaths."""

    name = "Greedy"

    def __init__(self, grid: CampaignGrid = CampaignGrid()):
        self.grid = grid

    def reset(self, horizon, config):
        super().reset(horizon, config)
        total = config.max_sms
        k = np.arange(horizon + 1)
        self.per_round = np.diff(k * total // horizon)
        self.carry = 0

    def quotas(self, k, view: GroupView):
        pool = int(self.per_round[k]) + self.carry
        return largest_remainder(pool, view.disease_deaths)

    def settle(self, k, quota, sent):
        self.carry = int(quota.sum() - sent.sum())
        if k + 1 == self.horizon:
            self.forfeited += self.carry
            self.carry = 0


def greedy_strategy(scenario: ScenarioConfig) -> Campaign:
    return GreedyCampaign(scenario.grid)


def greedy_allocation(deaths: Sequence[float], quota: int) -> np.ndarray:
    """One greedy round in isolation (proportional split of ``quota``)."""
    return largest_remainder(quota, np.asarray(deaths, dtype=float))


# ---------------------------------------------------------------------------
# Monte Carlo search

@dataclass
class MCSearchConfig:
    num_samples: int = 10_000
    replicates_per_evaluation: int = 5
    time_block_length: int = 28
    sampler: str = "dirichlet_uniform"
    concentration: float = 1.0
    time_concentration: Optional[float] = None  # factorized sampler only; defaults to concentration
    # factorized sampler only: (age, gender, ses) concentrations; default to concentration
    group_concentrations: Optional[tuple] = None
    seed: int = 0
    common_random_numbers: bool = True
    workers: Optional[int] = None
    progress_every: int = 100
    # re-evaluate the refine_top best candidates on refine_replicates fresh seeds and pick from those
    refine_top: int = 0
    refine_replicates: int = 0
    # with common random numbers, candidates that yield the same integer SMS plan are simulated once
    dedupe: bool = True

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.replicates_per_evaluation < 1:
            raise ValueError("replicates_per_evaluation must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.concentration <= 0 or (self.time_concentration is not None and self.time_concentration <= 0):
            raise ValueError("concentration must be positive")
        if self.group_concentrations is not None:
            self.group_concentrations = tuple(float(c) for c in self.group_concentrations)
            if len(self.group_concentrations) != 3 or min(self.group_concentrations) <= 0:
                raise ValueError("group_concentrations needs three positive values (age, gender, ses)")
        if self.refine_top < 0 or self.refine_replicates < 0:
            raise ValueError("refine settings must be non-negative")
        if (self.refine_top > 0) != (self.refine_replicates > 0):
            raise ValueError("refine_top and refine_replicates must be set together")


def sample_tensor(i: int, shape: tuple, block_length: int, search: MCSearchConfig) -> CampaignTensor:
    """The i-th candidate of a search; depends only on (search.seed, i)."""
    gen = rngmod.generator(search.seed, rngmod.SAMPLER, i)
    a = search.concentration
    if search.sampler == "dirichlet_uniform":
        x = gen.gamma(a, size=shape)
    elif search.sampler == "independent_then_normalize":
        x = gen.exponential(size=shape) ** (1.0 / a)
    else:
        # outer product of one Dirichlet marginal per axis, time axis first
        x = np.ones(shape)
        for axis, n in enumerate(shape):
            if axis == 0:
                conc = search.time_concentration or a
            else:
                conc = search.group_concentrations[axis - 1] if search.group_concentrations else a
            w = gen.gamma(conc, size=n)
            view = [1] * len(shape)
            view[axis] = n
            x = x * w.reshape(view)
    total = x.sum()
    if total <= 0:
        x = np.ones(shape)
        total = x.sum()
    return CampaignTensor(x / total, block_length)


def _grid_for(scenario: ScenarioConfig, dimensions: str) -> CampaignGrid:
    if dimensions in ("status_only", "status-only"):
        return CampaignGrid.pooled()
    if dimensions in ("socio_demographic", "socio"):
        return scenario.grid
    raise ValueError(f"unknown dimensions {dimensions!r}")


def replicate_seeds(base: int, n: int) -> list[int]:
    return [base + k for k in range(n)]


def evaluate(scenario: ScenarioConfig, campaign_factory: Callable[[], Campaign], seeds: Sequence[int]) -> float:
    """Mean mortality rate of a campaign over replicate seeds."""
    return float(np.mean([run(scenario, campaign_factory(), seed=s).mr for s in seeds]))


def _evaluate_candidate(args):
    scenario, i, shape, block_length, search, seeds, name = args
    tensor = sample_tensor(i, shape, block_length, search)
    return i, evaluate(scenario, lambda: TensorCampaign(tensor, name), seeds)


def _workers(requested: Optional[int]) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get("CHECKUP_SIM_WORKERS")
    return max(1, int(env)) if env else max(1, os.cpu_count() or 1)


def parallel_map(fn, items, workers: Optional[int] = None):
    workers = _workers(workers)
    if workers == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass
class SearchResult:
    best: CampaignTensor
    best_index: int
    best_mr: float
    evaluated: np.ndarray
    best_so_far: np.ndarray
    strategy_name: str
    refined: dict = field(default_factory=dict)  # candidate index -> mean MR on the refinement seeds
    distinct_evaluations: int = 0

    def strategy(self) -> TensorCampaign:
        return TensorCampaign(self.best, self.strategy_name)

    def trace_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("sample,evaluated_mr,best_so_far\n")
            for i, (v, b) in enumerate(zip(self.evaluated, self.best_so_far)):
                fh.write(f"{i},{float(v)!r},{float(b)!r}\n")


def plan_key(tensor: CampaignTensor, scenario: ScenarioConfig) -> bytes:
    """Digest of everything a TensorCampaign's behaviour depends on."""
    plan = tensor.round_plan(scenario.horizon, scenario.effective_campaign)
    h = hashlib.sha1(np.ascontiguousarray(plan, dtype=np.int64).tobytes())
    h.update(f"{plan.shape}/{tensor.time_block_length}".encode())
    return h.digest()


def mc_optimize(scenario: ScenarioConfig, search: MCSearchConfig, dimensions: str = "socio_demographic",
                progress: Optional[Callable[[int, float], None]] = None,
                cache: Optional[dict] = None) -> SearchResult:
    """Sample campaign tensors and keep the one with the lowest mean mortality.

    With common random numbers every candidate is evaluated on the same
    replicate seeds. The best-so-far fold ties towards the lower sample index,
    so the result does not depend on evaluation order.

    Two tensors with the same integer SMS plan give bit-identical runs on the
    same seeds, so with ``dedupe`` each distinct plan is simulated once.
    ``cache`` ((plan key, seeds) -> MR) can be shared between searches on
    the same scenario.
    """
    grid = _grid_for(scenario, dimensions)
    nb = CampaignTensor.blocks_for(scenario.horizon, search.time_block_length)
    shape = (nb,) + grid.shape
    name = "SocioMC" if dimensions in ("socio_demographic", "socio") else "NaiveMC"
    base = scenario.seed

    def seeds_for(i):
        if search.common_random_numbers:
            return replicate_seeds(base, search.replicates_per_evaluation)
        return replicate_seeds(base + (i + 1) * 1_000_003, search.replicates_per_evaluation)

    evaluated = np.empty(search.num_samples)
    dedupe = search.dedupe and search.common_random_numbers
    cache = {} if cache is None else cache
    distinct = 0
    crn_seeds = tuple(seeds_for(0))
    chunk = max(1, search.progress_every)
    best_i, best = -1, np.inf
    for start in range(0, search.num_samples, chunk):
        stop = min(start + chunk, search.num_samples)
        keys, queued, jobs = {}, set(), []
        for i in range(start, stop):
            if dedupe:
                k = keys[i] = (plan_key(sample_tensor(i, shape, search.time_block_length, search), scenario),
                               crn_seeds)
                if k in cache or k in queued:
                    continue
                queued.add(k)
            jobs.append((scenario, i, shape, search.time_block_length, search, seeds_for(i), name))
        for i, mr in parallel_map(_evaluate_candidate, jobs, search.workers):
            evaluated[i] = mr
            distinct += 1
            if dedupe:
                cache[keys[i]] = mr
        if dedupe:
            for i in range(start, stop):
                evaluated[i] = cache[keys[i]]
        for i in range(start, stop):
            if evaluated[i] < best:
                best_i, best = i, evaluated[i]
        log.info("%s: %d/%d samples, best MR %.6g", name, stop, search.num_samples, best)
        if progress is not None:
            progress(stop, best)
    best_so_far = np.minimum.accumulate(evaluated)
    refined = {}
    if search.refine_top > 0:
        # the search winner is biased towards lucky draws on the training seeds
        top = np.lexsort((np.arange(len(evaluated)), evaluated))[:search.refine_top]
        fresh = replicate_seeds(base + 500_000, search.refine_replicates)
        jobs = [(scenario, int(i), shape, search.time_block_length, search, fresh, name) for i in top]
        refined = dict(parallel_map(_evaluate_candidate, jobs, search.workers))
        best_i = min(refined, key=lambda i: (refined[i], i))
        best = refined[best_i]
        log.info("%s: refined top %d, picked sample %d (MR %.6g)", name, len(top), best_i, best)
    if scenario.effective_campaign.max_sms == 0:
        # nothing is affordable, so every candidate is the empty campaign
        best_tensor = CampaignTensor.zeros(scenario.horizon, search.time_block_length, grid)
    else:
        best_tensor = sample_tensor(best_i, shape, search.time_block_length, search)
    return SearchResult(best_tensor, best_i, float(best), evaluated, best_so_far, name, refined, distinct)


# ---------------------------------------------------------------------------
# comparison

@dataclass
class ComparisonReport:
    names: list
    samples: np.ndarray  # (n_strategies, n_replicates)
    anova_f: Optional[float]
    anova_p: Optional[float]
    best: str
    pairwise: dict  # other name -> {"t": ..., "p": ...}
    exact_tie: bool
    wide_ci: bool

    @property
    def means(self) -> np.ndarray:
        return self.samples.mean(axis=1)

    @property
    def sds(self) -> np.ndarray:
        return self.samples.std(axis=1, ddof=1)

    def one_sided(self, a: str, b: str) -> tuple[float, float]:
        """(t, p) of the two-sample t-test that strategy ``a`` has a lower mean than ``b``."""
        x, y = self.samples[self.names.index(a)], self.samples[self.names.index(b)]
        if np.array_equal(x, y):
            return 0.0, 1.0
        res = stats.ttest_ind(x, y, alternative="less")
        return float(res.statistic), float(res.pvalue)

    def to_json(self) -> dict:
        return {
            "strategies": self.names,
            "n_replicates": int(self.samples.shape[1]),
            "mean": self.means.tolist(),
            "sd": self.sds.tolist(),
            "anova": None if self.anova_f is None else {"F": self.anova_f, "p": self.anova_p},
            "best": self.best,
            "one_sided_t_tests": self.pairwise,
            "exact_tie": self.exact_tie,
            "wide_ci": self.wide_ci,
        }

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("strategy,mean_mr,sd_mr,n\n")
            for name, m, s in zip(self.names, self.means, self.sds):
                fh.write(f"{name},{float(m)!r},{float(s)!r},{self.samples.shape[1]}\n")


def _run_replicate(args):
    scenario, campaign, seed = args
    import copy

    return run(scenario, copy.deepcopy(campaign), seed=seed).mr


def compare_campaigns(scenario: ScenarioConfig, strategies: Sequence[Campaign], n_replicates: int,
                      workers: Optional[int] = None, seed_base: Optional[int] = None) -> ComparisonReport:
    """Run every strategy on the same replicate seeds and test for differences.

    Reports one-way ANOVA over all strategies and one-sided two-sample t-tests
    of the lowest-mean strategy against each other one.
    """
    if n_replicates < 2:
        raise ValueError("n_replicates must be >= 2")
    if len(strategies) < 2:
        raise ValueError("need at least two strategies")
    base = scenario.seed + 10_000 if seed_base is None else seed_base
    seeds = replicate_seeds(base, n_replicates)
    items = [(scenario, s, seed) for s in strategies for seed in seeds]
    mrs = np.array(parallel_map(_run_replicate, items, workers)).reshape(len(strategies), n_replicates)
    return summarize_samples([s.name for s in strategies], mrs)


def summarize_samples(names: Sequence[str], samples) -> ComparisonReport:
    """ANOVA and one-sided t-tests (best mean vs each other) on per-strategy samples."""
    mrs = np.asarray(samples, dtype=float)
    names = list(names)
    n_replicates = mrs.shape[1]
    means = mrs.mean(axis=1)
    best_k = int(np.argmin(means))
    within = mrs.var(axis=1, ddof=1)
    exact_tie = bool(np.all(within == 0))
    anova_f = anova_p = None
    pairwise = {}
    if not exact_tie:
        anova_f, anova_p = (float(x) for x in stats.f_oneway(*mrs))
        for k, name in enumerate(names):
            if k == best_k:
                continue
            key = name if name not in pairwise else f"{name}#{k}"
            if np.array_equal(mrs[k], mrs[best_k]):
                pairwise[key] = {"t": 0.0, "p": 1.0}
                continue
            res = stats.ttest_ind(mrs[best_k], mrs[k], alternative="less")
            pairwise[key] = {"t": float(res.statistic), "p": float(res.pvalue)}
    return ComparisonReport(names, mrs, anova_f, anova_p, names[best_k], pairwise, exact_tie, n_replicates < 5)
