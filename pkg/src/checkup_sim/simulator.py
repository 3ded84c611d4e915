"""Scenario configuration and the round loop.

Each round runs policy compliance, the clinical kernel, the SMS campaign and
population growth, in that order.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import rng as rngmod
from .campaign import (
    BudgetLedger,
    Campaign,
    CampaignConfig,
    CampaignGrid,
    GroupView,
    dispatch_round,
    sms_eligible,
)
from .clinical import EventLog, step_population
from .core import (
    AgeBuckets,
    ClinicalParameterTable,
    ClinicalStatus,
    ConfigError,
    D_CODE,
    DAYS_PER_YEAR,
    InitSpec,
    LifeTable,
    N_GROUPS,
    NEVER,
    PopulationState,
    build_population,
    draw_gamma,
    draw_traits,
    group_index,
    schedule_onsets,
)
from .policy import PolicySpec, policy_round

SCHEMA_VERSION = 1


@dataclass
class ScenarioConfig:
    clinical: ClinicalParameterTable
    init: InitSpec
    life: LifeTable
    policy: PolicySpec = PolicySpec()
    campaign: CampaignConfig = CampaignConfig()
    t0: int = 0
    tf: int = 365
    r: float = 0.0
    scale: float = 1.0
    seed: int = 0
    buckets: AgeBuckets = AgeBuckets()
    grid: CampaignGrid = CampaignGrid()
    mr_deaths: str = "disease"  # or "all"
    mr_mode: str = "per_capita"  # or "cumulative"
    name: str = "scenario"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.t0 < self.tf:
            raise ConfigError(f"need t0 < tf, got t0={self.t0}, tf={self.tf}")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")
        if self.mr_deaths not in ("disease", "all"):
            raise ConfigError("mr_deaths must be 'disease' or 'all'")
        if self.mr_mode not in ("per_capita", "cumulative"):
            raise ConfigError("mr_mode must be 'per_capita' or 'cumulative'")
        if not math.isfinite(self.r) or self.r < -1:
            raise ConfigError("growth rate r must be finite and >= -1")
        self.clinical.validate()
        self.init.validate()

    @property
    def horizon(self) -> int:
        return self.tf - self.t0

    @property
    def effective_init(self) -> InitSpec:
        return self.init if self.scale == 1 else self.init.scaled(self.scale)

    @property
    def effective_campaign(self) -> CampaignConfig:
        c = self.campaign
        return c if self.scale == 1 else replace(c, budget=c.budget * self.scale)

    def with_scale(self, k: float) -> "ScenarioConfig":
        return replace(self, scale=self.scale * k)

    def with_budget(self, budget: float) -> "ScenarioConfig":
        return replace(self, campaign=replace(self.campaign, budget=budget))

    # JSON ------------------------------------------------------------------

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioConfig":
        version = obj.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        for key in ("clinical", "init", "life_expectancy"):
            if key not in obj:
                raise ConfigError(f"scenario is missing section {key!r}")
        ab = obj.get("age_buckets", {})
        return cls(
            clinical=ClinicalParameterTable.from_rows(obj["clinical"]),
            init=InitSpec.from_json(obj["init"]),
            life=LifeTable.from_json(obj["life_expectancy"]),
            policy=PolicySpec.from_json(obj.get("policy", {})),
            campaign=CampaignConfig.from_json(obj.get("campaign", {})),
            t0=obj.get("t0", 0),
            tf=obj.get("tf", 365),
            r=obj.get("r", 0.0),
            scale=obj.get("scale", 1.0),
            seed=obj.get("seed", 0),
            buckets=AgeBuckets(tuple(ab.get("edges", AgeBuckets.edges)), ab.get("max_age", AgeBuckets.max_age)),
            grid=CampaignGrid.from_json(obj.get("campaign_grid")),
            mr_deaths=obj.get("mr_deaths", "disease"),
            mr_mode=obj.get("mr_mode", "per_capita"),
            name=obj.get("name", "scenario"),
        )

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "t0": self.t0, "tf": self.tf, "r": self.r, "scale": self.scale, "seed": self.seed,
            "mr_deaths": self.mr_deaths, "mr_mode": self.mr_mode,
            "age_buckets": {"edges": list(self.buckets.edges), "max_age": self.buckets.max_age},
            "campaign_grid": self.grid.to_json(),
            "policy": self.policy.to_json(),
            "campaign": self.campaign.to_json(),
            "life_expectancy": self.life.to_json(),
            "init": self.init.to_json(),
            "clinical": self.clinical.to_rows(),
        }


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return ScenarioConfig.from_json(obj)


def save_scenario(scenario: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_json(), indent=1))


@dataclass
class SimulationResult:
    seed: int
    t0: int
    census: np.ndarray  # (horizon, 10) status counts at end of each round
    alive_start: np.ndarray  # alive at start of each round
    disease_deaths: np.ndarray
    natural_deaths: np.ndarray
    births: np.ndarray
    deaths_by_group: np.ndarray  # (140,) cumulative disease deaths
    ledger: BudgetLedger
    events: Optional[EventLog]
    mr_deaths: str = "disease"
    mr_mode: str = "per_capita"
    created: np.ndarray = None  # individuals ever created, per round end

    @property
    def horizon(self) -> int:
        return len(self.alive_start)

    @property
    def deaths(self) -> np.ndarray:
        if self.mr_deaths == "all":
            return self.disease_deaths + self.natural_deaths
        return self.disease_deaths

    @property
    def mortality_series(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.alive_start > 0, self.deaths / np.maximum(self.alive_start, 1), 0.0)

    @property
    def mr(self) -> float:
        return mortality_rate(self)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "mortality_rate": self.mr,
            "mr_deaths": self.mr_deaths,
            "mr_mode": self.mr_mode,
            "disease_deaths": int(self.disease_deaths.sum()),
            "natural_deaths": int(self.natural_deaths.sum()),
            "births": int(self.births.sum()),
            "sms_sent": self.ledger.total_sms,
            "spent": self.ledger.spent,
            "budget": self.ledger.config.budget,
            "forfeited_sms": self.ledger.forfeited,
            "final_alive": int(self.census[-1, :9].sum()) if self.horizon else 0,
        }

    def to_csv(self, path) -> None:
        names = [s.name for s in ClinicalStatus]
        series = self.mortality_series
        sms = self.ledger.sms_sent.sum(axis=1)
        with open(path, "w") as fh:
            fh.write("round," + ",".join(names) + ",alive_start,disease_deaths,natural_deaths,births,sms_sent,mortality_rate\n")
            for k in range(self.horizon):
                row = [self.t0 + k, *self.census[k].tolist(), self.alive_start[k], self.disease_deaths[k],
                       self.natural_deaths[k], self.births[k], sms[k], repr(float(series[k]))]
                fh.write(",".join(str(x) for x in row) + "\n")


def mortality_rate(result: SimulationResult) -> float:
    """Average mortality rate over the horizon.

    per_capita: mean over rounds of deaths / alive at round start.
    cumulative: total deaths over the horizon / alive at the first round.
    """
    if result.horizon == 0:
        return 0.0
    if result.mr_mode == "cumulative":
        n0 = result.alive_start[0]
        return float(result.deaths.sum() / n0) if n0 > 0 else 0.0
    return float(result.mortality_series.mean())


def _births(pop: PopulationState, scenario: ScenarioConfig, init: InitSpec, t: int, streams) -> int:
    if scenario.r == 0:
        return 0
    status = pop.status
    n_alive = int(np.count_nonzero(status != D_CODE))
    if n_alive == 0:
        return 0
    gen = streams.generator(rngmod.BIRTH, t)
    expected = scenario.r * n_alive
    k = int(math.floor(expected)) + int(gen.random() < expected - math.floor(expected))
    if k <= 0:
        return 0
    parents = _uniform_alive(status, k, gen)
    gender = pop.gender[parents].astype(np.int64)
    ses = pop.ses[parents].astype(np.int64)
    groups = group_index(0, gender, ses)
    mu, rho = draw_traits(init, groups, gen)
    age = np.zeros(k, dtype=np.int64)
    gamma = draw_gamma(scenario.life, age, gender, ses, init.gamma_noise_sd_years, gen)
    since = np.zeros(k)
    if init.stagger_checkups:
        since = np.floor(gen.random(k) * scenario.policy.delta_i)
    idx = pop.append(status=np.zeros(k), mu=mu, rho=rho, age=age, gender=gender, ses=ses, gamma=gamma, since=since,
                     group=groups, onset_at=NEVER)
    schedule_onsets(pop, idx, t + 1, scenario.clinical, gen.random(k))
    return k


def _uniform_alive(status: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    """k uniform picks (with replacement) among living individuals, by rejection."""
    out = np.empty(0, dtype=np.int64)
    while out.size < k:
        cand = gen.integers(0, status.size, 2 * (k - out.size) + 8)
        out = np.concatenate([out, cand[status[cand] != D_CODE]])
    return out[:k]


def _age_one_year(pop: PopulationState, clinical: ClinicalParameterTable, t: int, streams) -> None:
    """Birthday for everyone alive; onset clocks of candidates are redrawn for their new group."""
    alive = pop.status != D_CODE
    pop.age[alive] += 1
    pop.refresh_groups()
    cand = np.flatnonzero(pop.onset_at != NEVER)
    schedule_onsets(pop, cand, t, clinical, streams.at(rngmod.AGING, t, cand))


def run(scenario: ScenarioConfig, campaign: Optional[Campaign] = None, seed: Optional[int] = None,
        record_events: bool = False, check_invariants: bool = False) -> SimulationResult:
    """Simulate rounds t0..tf-1 and return the per-round record."""
    seed = scenario.seed if seed is None else seed
    campaign = campaign or Campaign()
    init = scenario.effective_init
    cfg = scenario.effective_campaign
    H = scenario.horizon
    streams = rngmod.Streams(seed)
    pop = build_population(init, seed, life=scenario.life, buckets=scenario.buckets,
                           clinical=scenario.clinical, policy=scenario.policy, start_round=scenario.t0)

    campaign.reset(H, cfg)
    cell_of_group = campaign.grid.cell_of_group()
    min_age = scenario.policy.pre_diagnosis_min_age
    n_cells = campaign.grid.n_cells
    ledger = BudgetLedger(cfg, H, n_cells)
    log = EventLog() if record_events else None

    census = np.zeros((H, len(ClinicalStatus)), dtype=np.int64)
    created = np.zeros(H, dtype=np.int64)
    alive_start = np.zeros(H, dtype=np.int64)
    dis = np.zeros(H, dtype=np.int64)
    nat = np.zeros(H, dtype=np.int64)
    births = np.zeros(H, dtype=np.int64)
    deaths_by_group = np.zeros(N_GROUPS, dtype=np.int64)
    deaths_by_cell = np.zeros(n_cells, dtype=np.int64)

    for k in range(H):
        t = scenario.t0 + k
        pop.round = t
        if k > 0 and k % DAYS_PER_YEAR == 0:
            _age_one_year(pop, scenario.clinical, t, streams)
            cell_col = cell_of_group[pop.group]
        elif k == 0:
            cell_col = cell_of_group[pop.group]
        elif births[k - 1]:
            cell_col = np.concatenate([cell_col, cell_of_group[pop.group[cell_col.size:]]])
        alive_start[k] = np.count_nonzero(pop.status != D_CODE)

        checkups = policy_round(pop, scenario.policy, streams, t)
        out = step_population(pop, scenario.clinical, checkups, t, streams, log)
        dis[k] = len(out.disease_deaths)
        nat[k] = out.natural_deaths
        if dis[k]:
            g = pop.group[out.disease_deaths]
            np.add.at(deaths_by_group, g, 1)
            np.add.at(deaths_by_cell, cell_of_group[g], 1)

        eligible = np.flatnonzero(sms_eligible(pop, min_age))
        cells = cell_col[eligible]
        view = GroupView(np.bincount(cells, minlength=n_cells), deaths_by_cell.copy())
        quota = np.asarray(campaign.quotas(k, view), dtype=np.int64)
        if quota.any():
            keys = streams.at(rngmod.DISPATCH, t, eligible)
            sent = dispatch_round(quota, k, pop, cfg, keys, eligible, cells, ledger)
        else:
            sent = np.zeros(n_cells, dtype=np.int64)
        campaign.settle(k, quota, sent)

        births[k] = _births(pop, scenario, init, t, streams)
        census[k] = np.bincount(pop.status, minlength=len(ClinicalStatus))
        created[k] = pop.n
        if check_invariants:
            _check_round(pop, census[k], ledger, cfg)

    ledger.forfeited = getattr(campaign, "forfeited", 0)
    return SimulationResult(seed, scenario.t0, census, alive_start, dis, nat, births, deaths_by_group, ledger, log,
                            scenario.mr_deaths, scenario.mr_mode, created)


def _check_round(pop: PopulationState, counts: np.ndarray, ledger: BudgetLedger, cfg: CampaignConfig) -> None:
    assert counts.sum() == pop.n, "census does not sum to individuals ever created"
    assert ledger.spent <= cfg.budget + 1e-9, "budget exceeded"
    mu = pop.mu
    assert np.all((mu >= 0) & (mu <= 1)), "mu left [0,1]"
    st = pop.status
    sick = (st >= 1) & (st <= 4)
    assert np.all((pop.tr_phase > 0) == sick), "treatment present iff sick"
    assert not np.any((pop.lat_phase > 0) & (sick | (st == D_CODE))), "latent disease on S or D"
