"""Synthetic scenarios bundled with the package.

None of these numbers are real epidemiology. They are shaped so that the
mechanisms under study (age-driven incidence, compliance-driven early
detection, group-dependent SMS susceptibility) are strong enough to measure at
desk scale within a one-year horizon.
"""

from __future__ import annotations

import numpy as np

from .campaign import CampaignConfig, CampaignGrid
from .core import (
    AgeBuckets,
    ClinicalParameterTable,
    Gender,
    InitSpec,
    LifeTable,
    N_GROUPS,
    all_group_keys,
)
from .policy import PolicySpec
from .simulator import ScenarioConfig

DESK_AGE_RISK = np.array([0.0, 0.005, 0.02, 0.08, 0.3, 1.0, 1.6])
SES_SLOPE = 0.1
DESK_CLINICAL = dict(
    T=[120, 120, 30, 30],
    psi_r=[2e-4, 4e-4, 8e-4, 1.2e-3],
    treat_duration=[20, 30, 30, 30],
    recover_prob=[0.98, 0.9, 0.35, 0.1],
    symptom_prob=[0.0, 0.003, 1.0, 1.0],
)


def life_table(base_male: float = 88.0, base_female: float = 92.0, ses_span: float = 6.0) -> LifeTable:
    ses_offset = np.linspace(-ses_span / 2, ses_span / 2, 10)
    return LifeTable([base_male + ses_offset, base_female + ses_offset])


def uniform_clinical(**overrides) -> ClinicalParameterTable:
    values = dict(DESK_CLINICAL, psi_i=1e-4)
    values.update(overrides)
    return ClinicalParameterTable.from_rows([values])


def _init(counts, mu_mean, rho_mean, latent, status_probs=None, mu_sd=0.1, rho_sd=0.2, noise=3.0):
    probs = np.zeros((N_GROUPS, 9))
    probs[:, 0] = 1.0
    if status_probs is not None:
        probs = status_probs
    return InitSpec(counts=counts, mu_mean=mu_mean, mu_sd=mu_sd, rho_mean=rho_mean, rho_sd=rho_sd,
                    status_probs=probs, initial_latent=latent, gamma_noise_sd_years=noise, stagger_checkups=True)


def desk_scenario(per_group: int = 1000, budget: float = 10_000.0, seed: int = 1) -> ScenarioConfig:
    """140 groups x ``per_group`` individuals with a budget scaled like the full run.

    Incidence rises steeply with age and is higher in men and in low SES
    deciles; baseline compliance is low and SMS susceptibility is higher in
    women. Latent prevalence at t0 is the steady state of the onset rate.
    """
    keys = all_group_keys()
    age = np.array([k.age_bucket for k in keys])
    male = np.array([k.gender == Gender.MALE for k in keys])
    ses = np.array([k.ses for k in keys])

    risk = DESK_AGE_RISK[age] * np.where(male, 1.6, 0.6) * (1 + SES_SLOPE * (5.5 - ses))
    psi_i = 1.2e-4 * risk
    rows = []
    for k, p in zip(keys, psi_i):
        rows.append({"age_bucket": k.age_bucket, "gender": k.gender.name.lower(), "ses": k.ses,
                     **DESK_CLINICAL, "psi_i": float(p)})
    clinical = ClinicalParameterTable.from_rows(rows)

    counts = np.full(N_GROUPS, per_group)
    mu_mean = 0.15 + 0.02 * (ses - 1) + np.where(male, 0.0, 0.05)
    rho_mean = np.where(male, 0.7, 1.1) * (0.6 + 0.1 * (ses - 1))
    probs = np.zeros((N_GROUPS, 9))
    rec = np.clip(risk, 0, None) * 0.004
    probs[:, 5:9] = rec[:, None] * np.array([0.4, 0.3, 0.2, 0.1])
    probs[:, 0] = 1 - probs.sum(axis=1)
    T = DESK_CLINICAL["T"]
    latent = np.stack([psi_i * T[0], psi_i * T[1]], axis=1)
    init = _init(counts, mu_mean, rho_mean, latent, probs)
    return ScenarioConfig(
        clinical=clinical,
        init=init,
        life=life_table(),
        policy=PolicySpec(),
        campaign=CampaignConfig(c1=0.1, c2=0.12, b_sms=0.049, budget=budget),
        t0=0, tf=365, r=1.4e-5, scale=1.0, seed=seed,
        buckets=AgeBuckets(), grid=CampaignGrid(),
        name="desk",
    )


def toy_scenario(per_group: int = 20, budget: float = 50.0, seed: int = 7) -> ScenarioConfig:
    """Small full-grid scenario for smoke tests and CLI examples."""
    sc = desk_scenario(per_group=per_group, budget=budget, seed=seed)
    sc.tf = 60
    sc.name = "toy"
    return sc


def two_group_scenario(size: int = 60, budget: float = 3.0, risk_ratio: float = 100.0, seed: int = 11,
                       horizon: int = 40) -> ScenarioConfig:
    """Males (high risk) and females (low risk) aged 65-74, SES decile 5.

    The campaign grid only resolves gender, so a campaign tensor has exactly
    two group cells. Both groups share the same rho.
    """
    keys = all_group_keys()
    counts = np.zeros(N_GROUPS, dtype=int)
    in_toy = [k.index for k in keys if k.age_bucket == 5 and k.ses == 5]
    counts[in_toy] = size
    male = np.array([k.gender == Gender.MALE for k in keys])
    latent_male = 0.5
    latent = np.zeros((N_GROUPS, 2))
    latent[:, 0] = np.where(male, latent_male, latent_male / risk_ratio)
    clinical = ClinicalParameterTable.from_rows([{
        "T": [25, 25, 30, 30],
        "psi_i": 0.0,
        "psi_r": [0.0, 0.0, 0.0, 0.0],
        "treat_duration": [3, 3, 3, 3],
        "recover_prob": [1.0, 1.0, 0.0, 0.0],
        "symptom_prob": [0.0, 0.0, 1.0, 1.0],
    }])
    init = _init(counts, np.full(N_GROUPS, 0.1), np.full(N_GROUPS, 1.0), latent, mu_sd=0.0, rho_sd=0.0,
                 noise=0.0)
    policy = PolicySpec(pre_diagnosis_min_age=45, delta_i=horizon, delta_r=(365, 365, 182, 182))
    return ScenarioConfig(
        clinical=clinical, init=init, life=life_table(95, 95, 0.0), policy=policy,
        campaign=CampaignConfig(c1=0.1, c2=0.0, b_sms=0.049, budget=budget),
        t0=0, tf=horizon, r=0.0, seed=seed, grid=CampaignGrid(age=False, gender=True, ses=False),
        name="two-group",
    )


def single_group_scenario(size: int = 200, budget: float = 5.0, seed: int = 3) -> ScenarioConfig:
    """Desk dynamics with a fully pooled campaign grid (one campaign group)."""
    sc = desk_scenario(per_group=2, budget=budget, seed=seed)
    counts = np.zeros(N_GROUPS, dtype=int)
    idx = [k.index for k in all_group_keys() if k.age_bucket == 5 and k.gender == Gender.MALE and k.ses == 3]
    counts[idx] = size
    sc.init = sc.init.scaled(0)
    sc.init.counts = counts
    sc.grid = CampaignGrid.pooled()
    sc.tf = 90
    sc.name = "single-group"
    return sc


def calibration_scenario(size: int = 10_000, budget: float = 2000.0, seed: int = 21, horizon: int = 150
                         ) -> ScenarioConfig:
    """Men and women aged 65-74 (SES 5) starting with a large latent cohort.

    The cohort produces a wave of disease deaths whose height depends on how
    many cases routine check-ups catch early, i.e. on compliance and, through
    the SMS campaign, on susceptibility. That gives the per-round mortality a
    pronounced shape to fit.
    """
    keys = all_group_keys()
    counts = np.zeros(N_GROUPS, dtype=int)
    idx = [k.index for k in keys if k.age_bucket == 5 and k.ses == 5]
    counts[idx] = size
    male = np.array([k.gender == Gender.MALE for k in keys])
    clinical = ClinicalParameterTable.from_rows([{
        "T": [30, 30, 20, 20],
        "psi_i": 1e-4,
        "psi_r": [0.0, 0.0, 0.0, 0.0],
        "treat_duration": [10, 10, 15, 15],
        "recover_prob": [0.98, 0.9, 0.3, 0.1],
        "symptom_prob": [0.0, 0.002, 1.0, 1.0],
    }])
    latent = np.zeros((N_GROUPS, 2))
    latent[:, 0] = 0.3
    mu_mean = np.where(male, 0.25, 0.4)
    rho_mean = np.where(male, 0.8, 1.4)
    init = _init(counts, mu_mean, rho_mean, latent, mu_sd=0.1, rho_sd=0.2, noise=3.0)
    policy = PolicySpec(pre_diagnosis_min_age=45, delta_i=60, delta_r=(365, 365, 182, 182))
    return ScenarioConfig(
        clinical=clinical, init=init, life=life_table(), policy=policy,
        campaign=CampaignConfig(c1=0.05, c2=0.05, b_sms=0.049, budget=budget),
        t0=0, tf=horizon, r=0.0, seed=seed, grid=CampaignGrid(), name="calibration",
    )
