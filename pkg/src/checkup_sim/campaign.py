"""SMS reminder campaigns: allocation tensor, compliance update, budget ledger.

A campaign never sees an individual's mu or rho. Each round it is shown only
how many SMS-eligible individuals sit in each campaign cell (plus, for the
greedy strategy, cumulative disease deaths per cell) and returns an integer
SMS quota per cell. The dispatcher then picks recipients uniformly at random
inside each cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ClinicalStatus,
    ConfigError,
    DAYS_PER_YEAR,
    H_CODE,
    R1_CODE,
    R4_CODE,
    Gender,
    GroupKey,
    Individual,
    N_AGE_BUCKETS,
    N_GENDERS,
    N_GROUPS,
    N_SES,
    all_group_keys,
)

# absorbs float noise in budget/cost divisions such as 49 / 0.049
_EPS = 1e-9


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    c1: float = 0.0
    c2: float = 0.0
    b_sms: float = 0.049
    budget: float = 0.0

    def __post_init__(self):
        if not self.b_sms > 0:
            raise ConfigError("b_sms must be positive")
        if self.budget < 0:
            raise ConfigError("budget must be non-negative")

    @property
    def max_sms(self) -> int:
        return int(math.floor(self.budget / self.b_sms + _EPS))

    def sms_for(self, dollars) -> np.ndarray:
        """Whole SMSs affordable per cell (floored)."""
        return np.floor(np.asarray(dollars, dtype=float) / self.b_sms + _EPS).astype(np.int64)

    @classmethod
    def from_json(cls, obj: dict) -> "CampaignConfig":
        return cls(obj.get("c1", 0.0), obj.get("c2", 0.0), obj.get("b_sms", 0.049), obj.get("budget", 0.0))

    def to_json(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "b_sms": self.b_sms, "budget": self.budget}


@dataclass(frozen=True)
class CampaignGrid:
    """Which socio-demographic axes a campaign can tell apart.

    A pooled axis has size 1, so the full grid is (7, 2, 10) and the fully
    pooled grid (1, 1, 1) treats everybody as a single group.
    """

    age: bool = True
    gender: bool = True
    ses: bool = True

    @property
    def shape(self) -> tuple[int, int, int]:
        return (N_AGE_BUCKETS if self.age else 1, N_GENDERS if self.gender else 1, N_SES if self.ses else 1)

    @property
    def n_cells(self) -> int:
        a, g, s = self.shape
        return a * g * s

    def cell_of_group(self) -> np.ndarray:
        a, g, s = self.shape
        out = np.empty(N_GROUPS, dtype=np.int64)
        for k in all_group_keys():
            ai = k.age_bucket if self.age else 0
            gi = int(k.gender) if self.gender else 0
            si = k.ses - 1 if self.ses else 0
            out[k.index] = (ai * g + gi) * s + si
        return out

    @classmethod
    def pooled(cls) -> "CampaignGrid":
        return cls(False, False, False)

    @classmethod
    def from_json(cls, obj) -> "CampaignGrid":
        if obj is None:
            return cls()
        return cls(bool(obj.get("age", True)), bool(obj.get("gender", True)), bool(obj.get("ses", True)))

    def to_json(self) -> dict:
        return {"age": self.age, "gender": self.gender, "ses": self.ses}


@dataclass
class CampaignTensor:
    """Budget fractions indexed (time_block, age_bucket, gender, ses)."""

    values: np.ndarray
    time_block_length: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4:
            raise ConfigError("campaign tensor must be 4-D (block, age, gender, ses)")
        _, a, g, s = self.values.shape
        if a not in (1, N_AGE_BUCKETS) or g not in (1, N_GENDERS) or s not in (1, N_SES):
            raise ConfigError(f"campaign tensor group dims must be 1 or (7, 2, 10), got {self.values.shape[1:]}")
        if self.time_block_length < 1:
            raise ConfigError("time_block_length must be >= 1")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ConfigError("campaign tensor entries must be finite and non-negative")
        if self.values.sum() > 1 + 1e-9:
            raise ConfigError(f"campaign tensor sums to {self.values.sum()} > 1")

    @property
    def num_blocks(self) -> int:
        return self.values.shape[0]

    @property
    def grid(self) -> CampaignGrid:
        _, a, g, s = self.values.shape
        return CampaignGrid(a > 1, g > 1, s > 1)

    @staticmethod
    def blocks_for(horizon: int, block_length: int) -> int:
        return -(-horizon // block_length)

    @classmethod
    def zeros(cls, horizon: int, block_length: int, grid: CampaignGrid = CampaignGrid()) -> "CampaignTensor":
        return cls(np.zeros((cls.blocks_for(horizon, block_length),) + grid.shape), block_length)

    @classmethod
    def uniform(cls, horizon: int, block_length: int, grid: CampaignGrid = CampaignGrid()) -> "CampaignTensor":
        nb = cls.blocks_for(horizon, block_length)
        shape = (nb,) + grid.shape
        # weight blocks by their length so the spend rate is flat in time
        lengths = np.array([min(block_length, horizon - b * block_length) for b in range(nb)], dtype=float)
        vals = np.ones(shape) * (lengths / lengths.sum())[:, None, None, None] / grid.n_cells
        return cls(vals, block_length)

    def cell_sms(self, config: CampaignConfig) -> np.ndarray:
        """Whole SMSs per (block, cell), floored per cell and capped by the budget."""
        counts = config.sms_for(self.values.reshape(self.num_blocks, -1) * config.budget)
        excess = counts.sum() - config.max_sms
        while excess > 0:  # only reachable through float noise
            flat = counts.reshape(-1)
            flat[np.argmax(flat)] -= 1
            excess -= 1
        return counts

    def round_plan(self, horizon: int, config: CampaignConfig) -> np.ndarray:
        """Integer SMS quota per (round, cell), spread evenly inside each block."""
        if self.num_blocks != self.blocks_for(horizon, self.time_block_length):
            raise ConfigError(f"tensor has {self.num_blocks} blocks, horizon {horizon} needs "
                              f"{self.blocks_for(horizon, self.time_block_length)}")
        counts = self.cell_sms(config)
        plan = np.zeros((horizon, counts.shape[1]), dtype=np.int64)
        L = self.time_block_length
        for b in range(self.num_blocks):
            start = b * L
            length = min(L, horizon - start)
            k = np.arange(length + 1)[:, None]
            cum = (k * counts[b][None, :]) // length
            plan[start:start + length] = np.diff(cum, axis=0)
        return plan

    # serialization ---------------------------------------------------------

    def to_json(self) -> dict:
        return {"time_block_length": self.time_block_length, "shape": list(self.values.shape),
                "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "CampaignTensor":
        return cls(np.asarray(obj["values"], dtype=float), int(obj["time_block_length"]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# time_block_length={self.time_block_length}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "age_bucket", "gender", "ses", "fraction"])
        nb, a, g, s = self.values.shape
        for b in range(nb):
            for ai in range(a):
                for gi in range(g):
                    for si in range(s):
                        w.writerow([
                            b,
                            ai if a > 1 else "*",
                            Gender(gi).name.lower() if g > 1 else "*",
                            si + 1 if s > 1 else "*",
                            repr(float(self.values[b, ai, gi, si])),
                        ])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "CampaignTensor":
        text = path_or_text
        if "\n" not in str(path_or_text):
            with open(path_or_text) as fh:
                text = fh.read()
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# time_block_length="):
            raise ConfigError("campaign CSV must start with '# time_block_length=<rounds>'")
        L = int(lines[0].split("=", 1)[1])
        rows = list(csv.DictReader(lines[1:]))
        if not rows:
            raise ConfigError("campaign CSV has no cells")
        nb = max(int(r["block"]) for r in rows) + 1
        a = 1 if rows[0]["age_bucket"] == "*" else N_AGE_BUCKETS
        g = 1 if rows[0]["gender"] == "*" else N_GENDERS
        s = 1 if rows[0]["ses"] == "*" else N_SES
        vals = np.zeros((nb, a, g, s))
        for r in rows:
            ai = 0 if r["age_bucket"] == "*" else int(r["age_bucket"])
            gi = 0 if r["gender"] == "*" else int(Gender.parse(r["gender"]))
            si = 0 if r["ses"] == "*" else int(r["ses"]) - 1
            vals[int(r["block"]), ai, gi, si] = float(r["fraction"])
        return cls(vals, L)


@dataclass
class BudgetLedger:
    config: CampaignConfig
    horizon: int
    n_cells: int
    sms_sent: np.ndarray = None  # (horizon, n_cells)
    forfeited: int = 0

    def __post_init__(self):
        if self.sms_sent is None:
            self.sms_sent = np.zeros((self.horizon, self.n_cells), dtype=np.int64)

    @property
    def total_sms(self) -> int:
        return int(self.sms_sent.sum())

    @property
    def spent(self) -> float:
        return self.total_sms * self.config.b_sms

    def record(self, k: int, sent: np.ndarray) -> None:
        self.sms_sent[k] += sent
        if self.total_sms > self.config.max_sms:
            raise BudgetExceeded(f"spent {self.spent:.4f} exceeds budget {self.config.budget}")


def sms_increment(n, rho, c1: float, c2: float):
    """Compliance gain from the n-th SMS; the first SMS gets the base effect c1 only."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        repeat = np.where(n >= 2, np.log10(n / np.maximum(n - 1, 1)), 0.0)
    return rho * (c1 + c2 * repeat)


def apply_sms(individual: Individual, config: CampaignConfig) -> Individual:
    individual.sms_count += 1
    gain = float(sms_increment(individual.sms_count, individual.rho, config.c1, config.c2))
    individual.mu = min(1.0, max(0.0, individual.mu + gain))
    return individual


def apply_sms_many(pop, idx: np.ndarray, config: CampaignConfig) -> None:
    if len(idx) == 0:
        return
    pop.sms[idx] += 1
    gain = sms_increment(pop.sms[idx], pop.rho[idx], config.c1, config.c2)
    pop.mu[idx] = np.clip(pop.mu[idx] + gain, 0.0, 1.0)


def campaign_cost(obj, config: CampaignConfig) -> float:
    """Dollar cost of a ledger (realized), a tensor (planned) or a raw SMS count."""
    if isinstance(obj, BudgetLedger):
        return obj.total_sms * config.b_sms
    if isinstance(obj, CampaignTensor):
        return int(obj.cell_sms(config).sum()) * config.b_sms
    return int(obj) * config.b_sms


def sms_eligible(pop, min_age: int) -> np.ndarray:
    st = pop.status
    healthy = (st == H_CODE) & (pop.age >= min_age)
    recovered = (st >= R1_CODE) & (st <= R4_CODE)
    return healthy | recovered


def select_recipients(cells: np.ndarray, keys: np.ndarray, quota: np.ndarray) -> np.ndarray:
    """Positions (into ``cells``) of the ``quota[c]`` smallest keys in each cell c.

    With uniform keys this is a uniform draw without replacement per cell. A
    per-cell key threshold prunes the candidates before the exact sort.
    """
    n_cells = len(quota)
    members = np.bincount(cells, minlength=n_cells)
    take = np.minimum(quota, members)
    if take.sum() == 0:
        return np.zeros(0, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        thr = np.where(members > 0, (take + 4.0 * np.sqrt(take) + 8.0) / members, 0.0)
    thr = np.where(take >= members, 1.0, np.minimum(thr, 1.0))
    thr[take == 0] = 0.0
    while True:
        cand = np.flatnonzero(keys < thr[cells])
        short = np.bincount(cells[cand], minlength=n_cells) < take
        if not short.any():
            break
        thr[short] = 1.0
    c = cells[cand]
    order = np.lexsort((keys[cand], c))
    c_sorted = c[order]
    starts = np.searchsorted(c_sorted, np.arange(n_cells))
    rank = np.arange(len(order)) - starts[c_sorted]
    return cand[order[rank < take[c_sorted]]]


@dataclass
class GroupView:
    """What a campaign may observe each round."""

    eligible: np.ndarray  # eligible individuals per cell
    disease_deaths: np.ndarray  # cumulative disease deaths per cell


def dispatch_round(quota: np.ndarray, k: int, pop, config: CampaignConfig, keys: np.ndarray,
                   eligible_idx: np.ndarray, cells: np.ndarray, ledger: BudgetLedger) -> np.ndarray:
    """Send this round's SMSs and return the number sent per cell.

    ``eligible_idx``/``cells`` list the alive SMS-eligible individuals and their
    campaign cell; ``keys`` are their uniform selection keys. Each individual
    receives at most one SMS per round.
    """
    quota = np.asarray(quota, dtype=np.int64)
    if np.any(quota < 0):
        raise ValueError("negative SMS quota")
    if ledger.total_sms + int(quota.sum()) > config.max_sms:
        raise BudgetExceeded(f"round {k}: planned {quota.sum()} SMSs would exceed the budget")
    pos = select_recipients(cells, keys, quota)
    recipients = eligible_idx[pos]
    apply_sms_many(pop, recipients, config)
    sent = np.bincount(cells[pos], minlength=len(quota))
    ledger.record(k, sent)
    return sent


# ---------------------------------------------------------------------------
# campaign strategies driven by a plan

class Campaign:
    """Base class: sends nothing."""

    name = "none"
    grid = CampaignGrid.pooled()

    def reset(self, horizon: int, config: CampaignConfig) -> None:
        self.horizon = horizon
        self.config = config
        self.forfeited = 0

    def quotas(self, k: int, view: GroupView) -> np.ndarray:
        return np.zeros(self.grid.n_cells, dtype=np.int64)

    def settle(self, k: int, quota: np.ndarray, sent: np.ndarray) -> None:
        pass


class TensorCampaign(Campaign):
    """Follows a fixed CampaignTensor; unmet quota rolls over inside its block."""

    def __init__(self, tensor: CampaignTensor, name: str = "tensor"):
        self.tensor = tensor
        self.grid = tensor.grid
        self.name = name

    def reset(self, horizon, config):
        super().reset(horizon, config)
        self.plan = self.tensor.round_plan(horizon, config)
        self.carry = np.zeros(self.grid.n_cells, dtype=np.int64)

    def quotas(self, k, view):
        return self.plan[k] + self.carry

    def settle(self, k, quota, sent):
        self.carry = quota - sent
        L = self.tensor.time_block_length
        if (k + 1) % L == 0 or k + 1 == self.horizon:
            self.forfeited += int(self.carry.sum())
            self.carry[:] = 0


def heatmap(tensor: CampaignTensor, group_sizes: np.ndarray, config: CampaignConfig, horizon: int) -> np.ndarray:
    """Average yearly SMSs per individual, shape (2 genders, 7 age buckets, 10 SES).

    Cells pooling several groups share their SMSs over the pooled population.
    """
    grid = tensor.grid
    per_cell = tensor.cell_sms(config).sum(axis=0).astype(float)
    cell = grid.cell_of_group()
    cell_pop = np.bincount(cell, weights=group_sizes, minlength=grid.n_cells)
    years = horizon / DAYS_PER_YEAR
    with np.errstate(divide="ignore", invalid="ignore"):
        per_person = np.where(cell_pop > 0, per_cell / (cell_pop * years), 0.0)
    out = np.zeros((N_GENDERS, N_AGE_BUCKETS, N_SES))
    for key in all_group_keys():
        out[int(key.gender), key.age_bucket, key.ses - 1] = per_person[cell[key.index]] if group_sizes[key.index] > 0 else 0.0
    return out
