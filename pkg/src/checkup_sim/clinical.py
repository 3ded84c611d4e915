"""One-round clinical transition kernel.

Within a round every individual goes through the same fixed sequence:

1. natural-death countdown (gamma)
2. onset of latent disease (first cancer from H, recurrence from R_j)
3. latent progression by dwell time; dwelling out phase 4 kills
4. symptom draw, which forces a check-up
5. check-up (policy or symptom): perfect test, diagnosis starts treatment
6. treatment countdown; at zero the individual recovers to R_phase or dies

``step_individual`` is the readable row-at-a-time version. ``step_population``
applies the same sequence to the whole column store at once and is what the
simulator runs; the two are cross-checked on scripted traces in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .core import (
    AgeBuckets,
    ClinicalParameterTable,
    ClinicalStatus,
    ConfigError,
    Individual,
    LatentDisease,
    D_CODE,
    H_CODE,
    N_GROUPS,
    NEVER,
    R1_CODE,
    R4_CODE,
    TreatmentCourse,
    group_of,
    schedule_onsets,
)

D = ClinicalStatus.D

ONSET, PROGRESSION, CHECKUP, DIAGNOSIS, RECOVERY, DISEASE_DEATH, NATURAL_DEATH = range(7)
EVENT_NAMES = ("onset", "progression", "checkup", "diagnosis", "recovery", "disease_death", "natural_death")


@dataclass(frozen=True)
class CheckupOutcome:
    kind: str  # "no_disease" or "diagnosed"
    trigger: str  # "policy" or "symptom"
    phase: Optional[int] = None


@dataclass(frozen=True)
class Event:
    kind: str
    phase: Optional[int] = None
    outcome: Optional[CheckupOutcome] = None


def detectable_by_policy(latent: LatentDisease) -> bool:
    return latent.phase in (1, 2)


def _decision(policy_decision) -> bool:
    if isinstance(policy_decision, dict):
        return bool(policy_decision.get("checkup_today", False))
    return bool(policy_decision)


def _params_row(params: ClinicalParameterTable, individual: Individual, buckets: AgeBuckets) -> dict:
    key = group_of(individual, buckets)
    if params.T.shape[0] != N_GROUPS:
        raise ConfigError(f"clinical table has no entry for group {key}")
    return params.row(key.index)


def step_individual(individual: Individual, params: ClinicalParameterTable, policy_decision, rng,
                    buckets: AgeBuckets = AgeBuckets()) -> list[Event]:
    """Advance one individual by one round in place and return its events.

    ``rng`` needs only a ``random()`` method. Draws happen in the order onset,
    symptom, recovery and only when the corresponding step is reached.
    """
    ind = individual
    if ind.alpha == D:
        return []
    row = _params_row(params, ind, buckets)
    before = ind.alpha
    events: list[Event] = []

    def finish():
        ind.tau = 0 if ind.alpha != before else ind.tau + 1
        return events

    ind.gamma -= 1
    if ind.gamma <= 0:
        ind.gamma = 0
        ind.alpha, ind.latent, ind.treatment = D, None, None
        events.append(Event("natural_death"))
        return finish()

    lat = ind.latent
    if lat is None and (ind.alpha == ClinicalStatus.H or ind.alpha.is_recovered):
        recur = ind.alpha.is_recovered
        p = row["psi_r"][ind.alpha.phase - 1] if recur else row["psi_i"]
        if rng.random() < p:
            ind.latent = LatentDisease(1, 0, recur, ind.alpha.phase if recur else None)
            events.append(Event("onset", 1))
    elif lat is not None:
        lat.rounds_in_phase += 1
        if lat.rounds_in_phase >= row["T"][lat.phase - 1]:
            if lat.phase < 4:
                lat.phase += 1
                lat.rounds_in_phase = 0
                events.append(Event("progression", lat.phase))
            else:
                ind.alpha, ind.latent = D, None
                events.append(Event("disease_death", 4))
                return finish()

    lat = ind.latent
    symptom = lat is not None and rng.random() < row["symptom_prob"][lat.phase - 1]
    policy_checkup = _decision(policy_decision) and (ind.alpha == ClinicalStatus.H or ind.alpha.is_recovered)
    if symptom or policy_checkup:
        trigger = "symptom" if symptom else "policy"
        ind.since_checkup = 0
        if lat is None:
            events.append(Event("checkup", outcome=CheckupOutcome("no_disease", trigger)))
        else:
            if trigger == "policy" and not detectable_by_policy(lat):
                trigger = "symptom"
            phase = lat.phase
            events.append(Event("checkup", phase, CheckupOutcome("diagnosed", trigger, phase)))
            ind.alpha = ClinicalStatus.sick(phase)
            ind.latent = None
            recover = rng.random() < row["recover_prob"][phase - 1]
            ind.treatment = TreatmentCourse(phase, int(row["treat_duration"][phase - 1]), bool(recover))
            events.append(Event("diagnosis", phase))

    tr = ind.treatment
    if tr is not None:
        tr.rounds_remaining -= 1
        if tr.rounds_remaining <= 0:
            ind.treatment = None
            if tr.will_recover:
                ind.alpha = ClinicalStatus.recovered(tr.phase_at_diagnosis)
                ind.since_checkup = 0
                events.append(Event("recovery", tr.phase_at_diagnosis))
            else:
                ind.alpha = D
                events.append(Event("disease_death", tr.phase_at_diagnosis))
    return finish()


# ---------------------------------------------------------------------------
# vectorized kernel

@dataclass
class EventLog:
    """Columnar event log: round, individual id, event kind, phase (0 = n/a)."""

    rounds: list = field(default_factory=list)
    ids: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    phases: list = field(default_factory=list)

    def add(self, t: int, idx: np.ndarray, kind: int, phase=0) -> None:
        if len(idx) == 0:
            return
        self.rounds.append(np.full(len(idx), t, dtype=np.int64))
        self.ids.append(np.asarray(idx, dtype=np.int64))
        self.kinds.append(np.full(len(idx), kind, dtype=np.int8))
        self.phases.append(np.broadcast_to(np.asarray(phase, dtype=np.int8), (len(idx),)).copy())

    def arrays(self):
        if not self.rounds:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty.astype(np.int8), empty.astype(np.int8)
        return tuple(np.concatenate(x) for x in (self.rounds, self.ids, self.kinds, self.phases))

    def records(self) -> list[tuple]:
        r, i, k, p = self.arrays()
        return [(int(a), int(b), EVENT_NAMES[c], int(d)) for a, b, c, d in zip(r, i, k, p)]

    def to_csv(self, path) -> None:
        r, i, k, p = self.arrays()
        with open(path, "w") as fh:
            fh.write("round,individual,event,phase\n")
            for a, b, c, d in zip(r, i, k, p):
                fh.write(f"{a},{b},{EVENT_NAMES[c]},{d}\n")


@dataclass
class StepOutcome:
    disease_deaths: np.ndarray  # indices
    natural_deaths: int
    diagnoses: int


def step_population(pop, params: ClinicalParameterTable, checkup_today: np.ndarray, t: int,
                    streams: rngmod.Streams, log: Optional[EventLog] = None) -> StepOutcome:
    """Apply one clinical round to every living individual of ``pop``.

    Onsets come from the per-individual onset clocks (see ``schedule_onsets``);
    every other draw is an individual's own uniform for that purpose and round,
    evaluated only for the individuals that need one.
    """
    status = pop.status
    before = status.copy()
    alive = before != D_CODE
    grp = pop.group
    lat_phase = pop.lat_phase
    lat_rounds = pop.lat_rounds

    # 1. natural death
    gamma = pop.gamma
    gamma -= alive
    dead_nat = np.flatnonzero(alive & (gamma <= 0))
    if dead_nat.size:
        gamma[dead_nat] = 0
        status[dead_nat] = D_CODE
        lat_phase[dead_nat] = 0
        pop.tr_phase[dead_nat] = 0
        pop.onset_at[dead_nat] = NEVER
        pop.cumulative_natural_deaths += len(dead_nat)
        if log is not None:
            log.add(t, dead_nat, NATURAL_DEATH)
    prior_latent = np.flatnonzero(lat_phase > 0)

    # 2. onset
    new = np.flatnonzero(pop.onset_at == t)
    if new.size:
        st = status[new].astype(np.int64)
        rec = st >= R1_CODE
        lat_phase[new] = 1
        lat_rounds[new] = 0
        pop.lat_recur[new] = rec
        pop.lat_origin[new] = np.where(rec, st - 4, 0)
        pop.onset_at[new] = NEVER
        if log is not None:
            log.add(t, new, ONSET, 1)

    # 3. progression of disease that was already latent at round start
    latent_dead = np.zeros(0, dtype=np.int64)
    if prior_latent.size:
        lat_rounds[prior_latent] += 1
        ph = lat_phase[prior_latent].astype(np.int64)
        reached = lat_rounds[prior_latent] >= params.T[grp[prior_latent], ph - 1]
        adv = prior_latent[reached & (ph < 4)]
        if adv.size:
            lat_phase[adv] += 1
            lat_rounds[adv] = 0
            if log is not None:
                log.add(t, adv, PROGRESSION, lat_phase[adv])
        latent_dead = prior_latent[reached & (ph == 4)]
        if latent_dead.size:
            status[latent_dead] = D_CODE
            lat_phase[latent_dead] = 0
            if log is not None:
                log.add(t, latent_dead, DISEASE_DEATH, 4)

    # 4. symptoms
    latent_now = np.flatnonzero(lat_phase > 0)
    symptomatic = latent_now[:0]
    if latent_now.size:
        ph = lat_phase[latent_now].astype(np.int64)
        u = streams.at(rngmod.SYMPTOM, t, latent_now)
        symptomatic = latent_now[u < params.symptom_prob[grp[latent_now], ph - 1]]

    # 5. check-ups (policy check-ups only reach H and R individuals)
    policy_chk = np.flatnonzero(checkup_today)
    if policy_chk.size:
        st = status[policy_chk]
        policy_chk = policy_chk[(st == H_CODE) | ((st >= R1_CODE) & (st <= R4_CODE))]
    chk = np.union1d(policy_chk, symptomatic)
    diagnosed = chk[:0]
    if chk.size:
        pop.since[chk] = 0
        ph = lat_phase[chk]
        if log is not None:
            log.add(t, chk, CHECKUP, ph)
        diagnosed = chk[ph > 0]
        if diagnosed.size:
            dph = lat_phase[diagnosed].astype(np.int64)
            g = grp[diagnosed]
            status[diagnosed] = dph
            lat_phase[diagnosed] = 0
            u = streams.at(rngmod.RECOVERY, t, diagnosed)
            pop.tr_phase[diagnosed] = dph
            pop.tr_remaining[diagnosed] = params.treat_duration[g, dph - 1]
            pop.tr_recover[diagnosed] = u < params.recover_prob[g, dph - 1]
            if log is not None:
                log.add(t, diagnosed, DIAGNOSIS, dph)

    # 6. treatment countdown
    treated = np.flatnonzero(pop.tr_phase > 0)
    treat_dead = treated[:0]
    if treated.size:
        rem = pop.tr_remaining
        rem[treated] -= 1
        done = treated[rem[treated] <= 0]
        if done.size:
            ph = pop.tr_phase[done].astype(np.int64)
            ok = pop.tr_recover[done]
            rec = done[ok]
            status[rec] = ph[ok] + 4
            pop.since[rec] = 0
            treat_dead = done[~ok]
            status[treat_dead] = D_CODE
            pop.tr_phase[done] = 0
            if rec.size:
                u = streams.at(rngmod.ONSET, t, rec)
                schedule_onsets(pop, rec, t + 1, params, u)
            if log is not None:
                log.add(t, rec, RECOVERY, ph[ok])
                log.add(t, treat_dead, DISEASE_DEATH, ph[~ok])

    disease_deaths = np.concatenate([latent_dead, treat_dead])
    pop.cumulative_disease_deaths += len(disease_deaths)

    changed = status != before
    tau = pop.tau
    tau += alive
    tau[changed] = 0
    return StepOutcome(disease_deaths, len(dead_nat), len(diagnosed))
