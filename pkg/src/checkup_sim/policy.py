"""Pre- and post-diagnosis check-up recommendations and compliance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .core import D_CODE, H_CODE, R1_CODE, ClinicalStatus, ConfigError, Individual

YEARLY = 365
TWICE_YEARLY = YEARLY // 2


@dataclass(frozen=True)
class PolicySpec:
    pre_diagnosis_min_age: int = 45
    delta_i: int = YEARLY
    delta_r: tuple = (YEARLY, YEARLY, TWICE_YEARLY, TWICE_YEARLY)

    def __post_init__(self):
        object.__setattr__(self, "delta_r", tuple(int(d) for d in self.delta_r))
        if len(self.delta_r) != 4:
            raise ConfigError("delta_r needs one interval per recovered phase")
        if self.delta_i < 1 or min(self.delta_r) < 1:
            raise ConfigError("check-up intervals must be >= 1 round")
        if self.pre_diagnosis_min_age < 0:
            raise ConfigError("pre_diagnosis_min_age must be non-negative")

    @classmethod
    def from_json(cls, obj: dict) -> "PolicySpec":
        return cls(obj.get("pre_diagnosis_min_age", 45), obj.get("delta_i", YEARLY),
                   tuple(obj.get("delta_r", (YEARLY, YEARLY, TWICE_YEARLY, TWICE_YEARLY))))

    def to_json(self) -> dict:
        return {"pre_diagnosis_min_age": self.pre_diagnosis_min_age, "delta_i": self.delta_i,
                "delta_r": list(self.delta_r)}

    def interval_for(self, status: np.ndarray) -> np.ndarray:
        """Recommendation interval by status (delta_i for everyone not recovered)."""
        table = np.array([self.delta_i] * 5 + list(self.delta_r) + [self.delta_i])
        return table[status]


def recommendation_due(individual: Individual, spec: PolicySpec, rounds_since_last_checkup: int) -> bool:
    alpha = individual.alpha
    if alpha == ClinicalStatus.H:
        return individual.e >= spec.pre_diagnosis_min_age and rounds_since_last_checkup >= spec.delta_i
    if alpha.is_recovered:
        return rounds_since_last_checkup >= spec.delta_r[alpha.phase - 1]
    return False


def complies(individual: Individual, rng) -> bool:
    return bool(rng.random() < individual.mu)


def due_mask(status, age, since, spec: PolicySpec) -> np.ndarray:
    due = (status == H_CODE) & (since >= spec.delta_i) & (age >= spec.pre_diagnosis_min_age)
    # one pass per distinct interval rather than a per-individual lookup
    for d in sorted(set(spec.delta_r)):
        phases = [j + 1 for j, dj in enumerate(spec.delta_r) if dj == d]
        lo, hi = min(phases), max(phases)
        in_r = (status >= R1_CODE + lo - 1) & (status <= R1_CODE + hi - 1)
        if hi - lo + 1 != len(phases):
            in_r = np.isin(status, [R1_CODE + j - 1 for j in phases])
        due |= in_r & (since >= d)
    return due


def policy_round(pop, spec: PolicySpec, streams: rngmod.Streams, t: int) -> np.ndarray:
    """Advance check-up clocks and return who performs a policy check-up today.

    A recommendation restarts the individual's interval whether or not they
    comply, so a refusal waits for the next scheduled reminder.
    """
    alive = pop.status != D_CODE
    since = pop.since
    since += alive
    due = np.flatnonzero(alive & due_mask(pop.status, pop.age, since, spec))
    since[due] = 0
    u = streams.at(rngmod.POLICY, t, due)
    checkup = np.zeros(pop.n, dtype=bool)
    checkup[due[u < pop.mu[due]]] = True
    return checkup
