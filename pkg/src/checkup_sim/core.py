"""Domain types, configuration tables and population construction.

The population is stored column-wise (one numpy array per individual
attribute) because every round touches every individual. ``Individual`` is the
row view used by the scalar reference kernel and by scripted tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np

from . import rng as rngmod

N_AGE_BUCKETS = 7
N_GENDERS = 2
N_SES = 10
N_GROUPS = N_AGE_BUCKETS * N_GENDERS * N_SES
DAYS_PER_YEAR = 365


def json_safe(obj):
    """Plain-Python copy of ``obj`` for JSON: numpy scalars unwrapped, nan/inf -> None."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(float(obj)) else None
    return obj


class ConfigError(ValueError):
    """Invalid or incomplete scenario configuration."""


class ClinicalStatus(IntEnum):
    H = 0
    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4
    R1 = 5
    R2 = 6
    R3 = 7
    R4 = 8
    D = 9

    @classmethod
    def sick(cls, phase: int) -> "ClinicalStatus":
        return cls(phase)

    @classmethod
    def recovered(cls, phase: int) -> "ClinicalStatus":
        return cls(4 + phase)

    @property
    def is_sick(self) -> bool:
        return 1 <= self <= 4

    @property
    def is_recovered(self) -> bool:
        return 5 <= self <= 8

    @property
    def phase(self) -> Optional[int]:
        if self.is_sick:
            return int(self)
        if self.is_recovered:
            return int(self) - 4
        return None


class Gender(IntEnum):
    MALE = 0
    FEMALE = 1

    @classmethod
    def parse(cls, value) -> "Gender":
        if isinstance(value, Gender):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ConfigError(f"unknown gender {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class GroupKey:
    age_bucket: int
    gender: Gender
    ses: int

    def __post_init__(self):
        if not 0 <= self.age_bucket < N_AGE_BUCKETS:
            raise ValueError(f"age_bucket {self.age_bucket} out of range")
        if not 1 <= self.ses <= N_SES:
            raise ValueError(f"ses {self.ses} out of range")
        object.__setattr__(self, "gender", Gender.parse(self.gender))

    @property
    def index(self) -> int:
        return group_index(self.age_bucket, int(self.gender), self.ses)

    @classmethod
    def from_index(cls, index: int) -> "GroupKey":
        age, rest = divmod(int(index), N_GENDERS * N_SES)
        gender, ses0 = divmod(rest, N_SES)
        return cls(age, Gender(gender), ses0 + 1)

    def __str__(self) -> str:
        return f"(age_bucket={self.age_bucket}, gender={self.gender.name.lower()}, ses={self.ses})"


def group_index(age_bucket, gender, ses):
    """Flat index of a group; works elementwise on arrays."""
    return (age_bucket * N_GENDERS + gender) * N_SES + (ses - 1)


def all_group_keys() -> list[GroupKey]:
    return [GroupKey.from_index(i) for i in range(N_GROUPS)]


@dataclass(frozen=True)
class AgeBuckets:
    """Lower edges of the seven age buckets; the last bucket is open-ended."""

    edges: tuple = (0, 15, 30, 45, 55, 65, 75)
    max_age: int = 90

    def __post_init__(self):
        edges = tuple(int(e) for e in self.edges)
        if len(edges) != N_AGE_BUCKETS or edges[0] != 0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError(f"age bucket edges must be {N_AGE_BUCKETS} increasing values from 0, got {edges}")
        if self.max_age <= edges[-1]:
            raise ConfigError("max_age must exceed the last bucket edge")
        object.__setattr__(self, "edges", edges)

    def bucket(self, age):
        idx = np.searchsorted(np.asarray(self.edges), age, side="right") - 1
        idx = np.clip(idx, 0, N_AGE_BUCKETS - 1)
        return int(idx) if np.ndim(idx) == 0 else idx.astype(np.int16)

    def bounds(self, bucket: int) -> tuple[int, int]:
        """Inclusive age range used when sampling initial ages."""
        lo = self.edges[bucket]
        hi = self.edges[bucket + 1] - 1 if bucket + 1 < N_AGE_BUCKETS else self.max_age
        return lo, hi


@dataclass
class LatentDisease:
    phase: int = 1
    rounds_in_phase: int = 0
    is_recurrence: bool = False
    origin_phase_j: Optional[int] = None


@dataclass
class TreatmentCourse:
    phase_at_diagnosis: int
    rounds_remaining: int
    will_recover: bool


@dataclass
class Individual:
    alpha: ClinicalStatus
    tau: int
    mu: float
    rho: float
    e: int
    g: Gender
    s: int
    gamma: int
    sms_count: int = 0
    latent: Optional[LatentDisease] = None
    treatment: Optional[TreatmentCourse] = None
    since_checkup: int = 0

    def __post_init__(self):
        self.alpha = ClinicalStatus(self.alpha)
        self.g = Gender.parse(self.g)


def group_of(individual: Individual, buckets: AgeBuckets = AgeBuckets()) -> GroupKey:
    return GroupKey(buckets.bucket(individual.e), individual.g, individual.s)


# ---------------------------------------------------------------------------
# configuration tables

def _selector_values(value, universe: Sequence, parse=lambda v: v):
    if value is None or value == "*":
        return list(universe)
    if isinstance(value, (list, tuple)):
        return [parse(v) for v in value]
    return [parse(value)]


def expand_selector(row: dict) -> list[int]:
    """Group indices matched by a config row's age_bucket/gender/ses fields."""
    ages = _selector_values(row.get("age_bucket"), range(N_AGE_BUCKETS), int)
    genders = _selector_values(row.get("gender"), list(Gender), Gender.parse)
    sess = _selector_values(row.get("ses"), range(1, N_SES + 1), int)
    try:
        return [GroupKey(a, g, s).index for a, g, s in itertools.product(ages, genders, sess)]
    except ValueError as exc:
        raise ConfigError(f"bad group selector {row}: {exc}") from None


def _fill_rows(rows: Iterable[dict], fields: dict, what: str, defaults: Optional[dict] = None) -> dict:
    """Apply override rows in order; every field must end up set for all 140 groups."""
    out = {}
    seen = {}
    defaults = defaults or {}
    for name, shape in fields.items():
        out[name] = np.zeros((N_GROUPS,) + shape, dtype=float)
        seen[name] = np.zeros(N_GROUPS, dtype=bool)
        if name in defaults:
            out[name][:] = defaults[name]
            seen[name][:] = True
    for row in rows:
        idx = expand_selector(row)
        for name, shape in fields.items():
            if name not in row:
                continue
            val = np.asarray(row[name], dtype=float)
            if val.shape != shape:
                raise ConfigError(f"{what}: field {name!r} must have shape {shape or 'scalar'}, got {val.tolist()}")
            out[name][idx] = val
            seen[name][idx] = True
    for name in fields:
        missing = np.flatnonzero(~seen[name])
        if missing.size:
            raise ConfigError(f"{what}: no value for {name!r} in group {GroupKey.from_index(missing[0])}")
    return out


def _check_prob(name, arr):
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        bad = np.argwhere((arr < 0) | (arr > 1) | ~np.isfinite(arr))[0]
        raise ConfigError(f"{name} must lie in [0,1]; bad value in group {GroupKey.from_index(bad[0])}")


@dataclass
class ClinicalParameterTable:
    """Per-group clinical parameters. Phase-indexed arrays have 4 columns."""

    T: np.ndarray  # (140, 4): dwell rounds 1->2, 2->3, 3->4, 4->D
    psi_i: np.ndarray  # (140,)
    psi_r: np.ndarray  # (140, 4)
    treat_duration: np.ndarray  # (140, 4)
    recover_prob: np.ndarray  # (140, 4)
    symptom_prob: np.ndarray  # (140, 4)

    FIELDS = {
        "T": (4,),
        "psi_i": (),
        "psi_r": (4,),
        "treat_duration": (4,),
        "recover_prob": (4,),
        "symptom_prob": (4,),
    }
    # rows may omit symptom_prob; phase 2 then shows symptoms with 1% per round
    DEFAULTS = {"symptom_prob": (0.0, 0.01, 1.0, 1.0)}

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=np.int64)
        self.treat_duration = np.asarray(self.treat_duration, dtype=np.int64)
        for name in ("psi_i", "psi_r", "recover_prob", "symptom_prob"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def uniform(cls, **values) -> "ClinicalParameterTable":
        """Same parameters for every group (handy for tests)."""
        return cls.from_rows([dict(values)], validate=False)

    @classmethod
    def from_rows(cls, rows: Iterable[dict], validate: bool = True) -> "ClinicalParameterTable":
        arrays = _fill_rows(rows, cls.FIELDS, "clinical table", cls.DEFAULTS)
        for name in ("T", "treat_duration"):
            if np.any(arrays[name] != np.round(arrays[name])):
                raise ConfigError(f"{name} must be integers")
        table = cls(**arrays)
        if validate:
            table.validate()
        return table

    def validate(self) -> None:
        for name in ("T", "treat_duration"):
            arr = getattr(self, name)
            if np.any(arr < 1):
                bad = np.argwhere(arr < 1)[0]
                raise ConfigError(f"{name} must be >= 1; bad value in group {GroupKey.from_index(bad[0])}")
        for name in ("psi_i", "psi_r", "recover_prob", "symptom_prob"):
            _check_prob(name, getattr(self, name))
        sp = self.symptom_prob
        if np.any(sp[:, 0] != 0) or np.any(sp[:, 2] != 1) or np.any(sp[:, 3] != 1):
            raise ConfigError("symptom_prob must be 0 for phase 1 and 1 for phases 3 and 4")

    def row(self, index: int) -> dict:
        return {name: getattr(self, name)[index] for name in self.FIELDS}

    def to_rows(self) -> list[dict]:
        rows = []
        for i, key in enumerate(all_group_keys()):
            row = {"age_bucket": key.age_bucket, "gender": key.gender.name.lower(), "ses": key.ses}
            for name in self.FIELDS:
                row[name] = getattr(self, name)[i].tolist()
            rows.append(row)
        return rows


@dataclass
class LifeTable:
    """Life expectancy in years by gender and SES decile, shape (2, 10)."""

    years: np.ndarray

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=float)
        if self.years.shape != (N_GENDERS, N_SES):
            raise ConfigError(f"life table must have shape (2, 10), got {self.years.shape}")
        if np.any(self.years <= 0) or np.any(~np.isfinite(self.years)):
            raise ConfigError("life expectancies must be positive")

    @classmethod
    def from_json(cls, obj: dict) -> "LifeTable":
        try:
            return cls([obj["male"], obj["female"]])
        except KeyError as exc:
            raise ConfigError(f"life_expectancy needs key {exc}") from None

    def to_json(self) -> dict:
        return {"male": self.years[0].tolist(), "female": self.years[1].tolist()}


STATUS_NAMES = [s.name for s in ClinicalStatus]


@dataclass
class InitSpec:
    """Initial population: per-group counts, status mix and (mu, rho) spreads."""

    counts: np.ndarray  # (140,) int
    mu_mean: np.ndarray
    mu_sd: np.ndarray
    rho_mean: np.ndarray
    rho_sd: np.ndarray
    status_probs: np.ndarray  # (140, 9) over H, S1..S4, R1..R4
    initial_latent: np.ndarray = (0.0, 0.0)  # (140, 2): P(latent phase 1), P(latent phase 2) among H/R
    gamma_noise_sd_years: float = 0.0
    stagger_checkups: bool = True

    FIELDS = {"count": (), "mu_mean": (), "mu_sd": (), "rho_mean": (), "rho_sd": ()}

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if np.any(self.counts < 0):
            raise ConfigError("group counts must be non-negative")
        if np.any(self.counts != np.round(self.counts)):
            raise ConfigError("group counts must be integers")
        self.counts = self.counts.astype(np.int64)
        for name in ("mu_mean", "mu_sd", "rho_mean", "rho_sd"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float) * np.ones(N_GROUPS))
        self.status_probs = np.asarray(self.status_probs, dtype=float)
        if self.status_probs.shape == (9,):
            self.status_probs = np.tile(self.status_probs, (N_GROUPS, 1))
        self.initial_latent = np.asarray(self.initial_latent, dtype=float) * np.ones((N_GROUPS, 2))
        self.validate()

    def validate(self) -> None:
        if self.counts.shape != (N_GROUPS,):
            raise ConfigError("counts must cover all 140 groups")
        _check_prob("mu_mean", self.mu_mean)
        if np.any(self.mu_sd < 0) or np.any(self.rho_sd < 0):
            raise ConfigError("spreads must be non-negative")
        if np.any(self.rho_mean < 0):
            raise ConfigError("rho_mean must be non-negative")
        _check_prob("status_probs", self.status_probs)
        if not np.allclose(self.status_probs.sum(axis=1), 1.0):
            raise ConfigError("status_probs must sum to 1 in every group")
        if np.any(self.initial_latent < 0) or np.any(self.initial_latent.sum(axis=1) > 1):
            raise ConfigError("initial_latent probabilities must be non-negative and sum to <= 1")
        if self.gamma_noise_sd_years < 0:
            raise ConfigError("gamma_noise_sd_years must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_json(cls, obj: dict) -> "InitSpec":
        rows = obj.get("rows")
        if not rows:
            raise ConfigError("init.rows is required")
        arrays = _fill_rows(rows, cls.FIELDS, "init")
        probs = np.zeros((N_GROUPS, 9))
        probs[:, 0] = 1.0
        for row in rows:
            if "status_probs" in row:
                vec = np.zeros(9)
                for name, p in row["status_probs"].items():
                    if name not in STATUS_NAMES[:9]:
                        raise ConfigError(f"init status {name!r} not allowed")
                    vec[STATUS_NAMES.index(name)] = p
                probs[expand_selector(row)] = vec
        latent = np.zeros((N_GROUPS, 2))
        for row in rows:
            if "initial_latent" in row:
                val = np.asarray(row["initial_latent"], dtype=float)
                if val.shape != (2,):
                    raise ConfigError("initial_latent must be [p_phase1, p_phase2]")
                latent[expand_selector(row)] = val
        return cls(
            counts=arrays["count"],
            mu_mean=arrays["mu_mean"],
            mu_sd=arrays["mu_sd"],
            rho_mean=arrays["rho_mean"],
            rho_sd=arrays["rho_sd"],
            status_probs=probs,
            initial_latent=latent,
            gamma_noise_sd_years=obj.get("gamma_noise_sd_years", 0.0),
            stagger_checkups=obj.get("stagger_checkups", True),
        )

    def to_json(self) -> dict:
        rows = []
        for i, key in enumerate(all_group_keys()):
            rows.append({
                "age_bucket": key.age_bucket, "gender": key.gender.name.lower(), "ses": key.ses,
                "count": int(self.counts[i]),
                "mu_mean": float(self.mu_mean[i]), "mu_sd": float(self.mu_sd[i]),
                "rho_mean": float(self.rho_mean[i]), "rho_sd": float(self.rho_sd[i]),
                "status_probs": {STATUS_NAMES[k]: float(p) for k, p in enumerate(self.status_probs[i]) if p > 0},
                "initial_latent": self.initial_latent[i].tolist(),
            })
        return {
            "rows": rows,
            "gamma_noise_sd_years": self.gamma_noise_sd_years,
            "stagger_checkups": self.stagger_checkups,
        }

    def scaled(self, k: float) -> "InitSpec":
        counts = np.round(self.counts * k).astype(np.int64)
        return InitSpec(counts, self.mu_mean, self.mu_sd, self.rho_mean, self.rho_sd, self.status_probs,
                        self.initial_latent, self.gamma_noise_sd_years, self.stagger_checkups)


# ---------------------------------------------------------------------------
# population

@dataclass
class CompartmentCensus:
    counts: np.ndarray  # (10,) by ClinicalStatus
    cumulative_disease_deaths: int = 0
    cumulative_natural_deaths: int = 0

    @property
    def alive(self) -> int:
        return int(self.counts[:9].sum())

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __getitem__(self, status) -> int:
        return int(self.counts[ClinicalStatus(status)])


_COLUMNS = {
    "status": np.int8,
    "tau": np.int32,
    "mu": np.float64,
    "rho": np.float64,
    "age": np.int16,
    "gender": np.int8,
    "ses": np.int8,
    "gamma": np.int32,
    "sms": np.int32,
    "lat_phase": np.int8,  # 0 = no latent disease
    "lat_rounds": np.int32,
    "lat_recur": np.bool_,
    "lat_origin": np.int8,
    "tr_phase": np.int8,  # 0 = not under treatment
    "tr_remaining": np.int32,
    "tr_recover": np.bool_,
    "since": np.int32,  # rounds since last check-up or recommendation
    "group": np.int16,
    "onset_at": np.int32,  # round of the next latent onset; NEVER when not a candidate
}

NEVER = np.iinfo(np.int32).max

# plain ints for array comparisons: an IntEnum operand makes numpy upcast int8 columns
H_CODE, R1_CODE, R4_CODE, D_CODE = 0, 5, 8, 9


class PopulationState:
    """Column store of individuals plus round bookkeeping.

    Individuals are never removed; the dead stay with status D so the census
    always sums to everyone ever created.
    """

    columns = tuple(_COLUMNS)

    def __init__(self, capacity: int = 0, rng_seed: int = 0, buckets: AgeBuckets = AgeBuckets()):
        self.n = 0
        self.round = 0
        self.rng_seed = int(rng_seed)
        self.buckets = buckets
        self.cumulative_disease_deaths = 0
        self.cumulative_natural_deaths = 0
        self._data = {name: np.zeros(max(capacity, 16), dtype=dt) for name, dt in _COLUMNS.items()}

    def __len__(self) -> int:
        return self.n

    def __getattr__(self, name):
        data = self.__dict__.get("_data")
        if data is not None and name in data:
            return data[name][: self.n]
        raise AttributeError(name)

    def append(self, **cols) -> np.ndarray:
        """Append individuals given column arrays; returns their indices."""
        k = len(cols["status"])
        need = self.n + k
        cap = len(self._data["status"])
        if need > cap:
            new_cap = max(need, 2 * cap)
            for name, arr in self._data.items():
                grown = np.zeros(new_cap, dtype=arr.dtype)
                grown[: self.n] = arr[: self.n]
                self._data[name] = grown
        for name, arr in self._data.items():
            arr[self.n: need] = cols.get(name, 0)
        idx = np.arange(self.n, need)
        self.n = need
        return idx

    def refresh_groups(self, idx=None) -> None:
        sl = slice(None) if idx is None else idx
        buckets = self.buckets.bucket(self.age[sl])
        self.group[sl] = group_index(buckets, self.gender[sl].astype(np.int16), self.ses[sl].astype(np.int16))

    def census(self) -> CompartmentCensus:
        return CompartmentCensus(
            np.bincount(self.status, minlength=len(ClinicalStatus)).astype(np.int64),
            self.cumulative_disease_deaths,
            self.cumulative_natural_deaths,
        )

    def alive_mask(self) -> np.ndarray:
        return self.status != D_CODE

    # row <-> column conversion -------------------------------------------

    def individual(self, i: int) -> Individual:
        latent = None
        if self.lat_phase[i]:
            latent = LatentDisease(int(self.lat_phase[i]), int(self.lat_rounds[i]), bool(self.lat_recur[i]),
                                   int(self.lat_origin[i]) or None)
        treatment = None
        if self.tr_phase[i]:
            treatment = TreatmentCourse(int(self.tr_phase[i]), int(self.tr_remaining[i]), bool(self.tr_recover[i]))
        return Individual(
            alpha=ClinicalStatus(int(self.status[i])), tau=int(self.tau[i]), mu=float(self.mu[i]),
            rho=float(self.rho[i]), e=int(self.age[i]), g=Gender(int(self.gender[i])), s=int(self.ses[i]),
            gamma=int(self.gamma[i]), sms_count=int(self.sms[i]), latent=latent, treatment=treatment,
            since_checkup=int(self.since[i]),
        )

    @classmethod
    def from_individuals(cls, people: Sequence[Individual], rng_seed: int = 0,
                         buckets: AgeBuckets = AgeBuckets()) -> "PopulationState":
        pop = cls(len(people), rng_seed, buckets)
        if not people:
            return pop
        cols = {name: [] for name in _COLUMNS}
        for p in people:
            lat, tr = p.latent, p.treatment
            cols["status"].append(int(p.alpha))
            cols["tau"].append(p.tau)
            cols["mu"].append(p.mu)
            cols["rho"].append(p.rho)
            cols["age"].append(p.e)
            cols["gender"].append(int(p.g))
            cols["ses"].append(p.s)
            cols["gamma"].append(p.gamma)
            cols["sms"].append(p.sms_count)
            cols["lat_phase"].append(lat.phase if lat else 0)
            cols["lat_rounds"].append(lat.rounds_in_phase if lat else 0)
            cols["lat_recur"].append(lat.is_recurrence if lat else False)
            cols["lat_origin"].append((lat.origin_phase_j or 0) if lat else 0)
            cols["tr_phase"].append(tr.phase_at_diagnosis if tr else 0)
            cols["tr_remaining"].append(tr.rounds_remaining if tr else 0)
            cols["tr_recover"].append(tr.will_recover if tr else False)
            cols["since"].append(p.since_checkup)
            cols["group"].append(0)
            cols["onset_at"].append(NEVER)
        pop.append(**{k: np.asarray(v) for k, v in cols.items()})
        pop.refresh_groups()
        return pop

    def copy(self) -> "PopulationState":
        other = PopulationState(0, self.rng_seed, self.buckets)
        other._data = {k: v.copy() for k, v in self._data.items()}
        other.n, other.round = self.n, self.round
        other.cumulative_disease_deaths = self.cumulative_disease_deaths
        other.cumulative_natural_deaths = self.cumulative_natural_deaths
        return other

    def equals(self, other: "PopulationState") -> bool:
        return self.n == other.n and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in self.columns)


def schedule_onsets(pop, idx: np.ndarray, first_round: int, clinical: ClinicalParameterTable,
                    u: np.ndarray) -> None:
    """Sample the onset round of candidates ``idx`` (H, or R_j without latent disease).

    A constant per-round onset probability p makes the number of onset-free
    rounds geometric, so one uniform per candidate replaces a Bernoulli draw in
    every round. Only candidacy changes (recovery, birth, ageing) resample.
    """
    if len(idx) == 0:
        return
    st = pop.status[idx].astype(np.int64)
    grp = pop.group[idx]
    rec = st >= R1_CODE
    j = np.clip(st - 4, 1, 4)
    p = np.where(rec, clinical.psi_r[grp, j - 1], clinical.psi_i[grp])
    with np.errstate(divide="ignore", invalid="ignore"):
        wait = np.floor(np.log1p(-u) / np.log1p(-p))
    wait = np.where(p >= 1, 0.0, np.where(p <= 0, np.inf, wait))
    at = np.where(np.isfinite(wait) & (wait < NEVER - first_round), first_round + wait, NEVER)
    pop.onset_at[idx] = at.astype(np.int32)


def draw_gamma(life: LifeTable, age, gender, ses, noise_sd_years: float, gen: np.random.Generator) -> np.ndarray:
    """Remaining rounds of life: (LE(g, s) - age) * 365 plus noise, floored at 1."""
    base = (life.years[gender, ses - 1] - age) * DAYS_PER_YEAR
    if noise_sd_years > 0:
        base = base + gen.normal(0.0, noise_sd_years * DAYS_PER_YEAR, size=len(base))
    return np.maximum(np.rint(base), 1).astype(np.int64)


def draw_traits(init: InitSpec, groups: np.ndarray, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Normal draws around the group means; mu clamped to [0,1], rho floored at 0."""
    k = len(groups)
    mu = init.mu_mean[groups] + init.mu_sd[groups] * gen.standard_normal(k)
    rho = init.rho_mean[groups] + init.rho_sd[groups] * gen.standard_normal(k)
    return np.clip(mu, 0.0, 1.0), np.maximum(rho, 0.0)


def build_population(init: InitSpec, seed: int, *, life: LifeTable, buckets: AgeBuckets = AgeBuckets(),
                     clinical: Optional[ClinicalParameterTable] = None, policy=None,
                     start_round: int = 0) -> PopulationState:
    """Create the initial population exactly matching ``init.counts``.

    ``clinical`` is required when the spec seeds sick individuals or latent
    disease; ``policy`` is used to stagger the first check-up recommendation.
    """
    init.validate()
    total = init.total
    pop = PopulationState(total, seed, buckets)
    pop.round = start_round
    if total == 0:
        return pop
    gen = rngmod.generator(seed, rngmod.INIT)

    groups = np.repeat(np.arange(N_GROUPS), init.counts)
    keys = np.array([[k.age_bucket, int(k.gender), k.ses] for k in all_group_keys()])
    bucket, gender, ses = keys[groups, 0], keys[groups, 1], keys[groups, 2]
    lo = np.array([buckets.bounds(b)[0] for b in range(N_AGE_BUCKETS)])
    hi = np.array([buckets.bounds(b)[1] for b in range(N_AGE_BUCKETS)])
    age = gen.integers(lo[bucket], hi[bucket] + 1)

    cum = np.cumsum(init.status_probs[groups], axis=1)
    u = gen.random(total)
    status = (u[:, None] >= cum).sum(axis=1).clip(0, 8).astype(np.int8)

    mu, rho = draw_traits(init, groups, gen)
    gamma = draw_gamma(life, age, gender, ses, init.gamma_noise_sd_years, gen)

    lat_phase = np.zeros(total, dtype=np.int8)
    lat_rounds = np.zeros(total, dtype=np.int32)
    lat_recur = np.zeros(total, dtype=bool)
    lat_origin = np.zeros(total, dtype=np.int8)
    tr_phase = np.zeros(total, dtype=np.int8)
    tr_remaining = np.zeros(total, dtype=np.int32)
    tr_recover = np.zeros(total, dtype=bool)

    sick = (status >= 1) & (status <= 4)
    healthy_or_rec = ~sick
    p_lat = init.initial_latent[groups]
    needs_clinical = sick.any() or p_lat.sum() > 0
    if needs_clinical and clinical is None:
        raise ConfigError("initial sick or latent individuals require a clinical parameter table")
    if sick.any():
        idx = np.flatnonzero(sick)
        ph = status[idx].astype(np.int64)
        dur = clinical.treat_duration[groups[idx], ph - 1]
        tr_phase[idx] = ph
        tr_remaining[idx] = gen.integers(1, dur + 1)
        tr_recover[idx] = gen.random(len(idx)) < clinical.recover_prob[groups[idx], ph - 1]
    if p_lat.sum() > 0:
        idx = np.flatnonzero(healthy_or_rec)
        u = gen.random(len(idx))
        p1, p2 = p_lat[idx, 0], p_lat[idx, 1]
        ph = np.where(u < p1, 1, np.where(u < p1 + p2, 2, 0))
        hit = ph > 0
        idx, ph = idx[hit], ph[hit]
        lat_phase[idx] = ph
        lat_rounds[idx] = gen.integers(0, clinical.T[groups[idx], ph - 1])
        rec = status[idx] >= 5
        lat_recur[idx] = rec
        lat_origin[idx] = np.where(rec, status[idx] - 4, 0)

    since = np.zeros(total, dtype=np.int32)
    if policy is not None and init.stagger_checkups:
        delta = policy.interval_for(status)
        since = (gen.random(total) * delta).astype(np.int32)

    idx = pop.append(status=status, tau=np.zeros(total), mu=mu, rho=rho, age=age, gender=gender, ses=ses,
                     gamma=gamma, lat_phase=lat_phase, lat_rounds=lat_rounds, lat_recur=lat_recur,
                     lat_origin=lat_origin, tr_phase=tr_phase, tr_remaining=tr_remaining, tr_recover=tr_recover,
                     since=since, group=groups, onset_at=NEVER)
    if clinical is not None:
        cand = idx[~sick & (lat_phase == 0)]
        schedule_onsets(pop, cand, start_round, clinical, gen.random(len(cand)))
    return pop
