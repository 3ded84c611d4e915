import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from checkup_sim import fixtures
from helpers import person
from checkup_sim.core import (
    AgeBuckets,
    ClinicalParameterTable,
    ClinicalStatus,
    ConfigError,
    Gender,
    GroupKey,
    InitSpec,
    N_GROUPS,
    NEVER,
    PopulationState,
    build_population,
    expand_selector,
    json_safe,
    schedule_onsets,
)


@pytest.mark.parametrize("age,bucket", [(0, 0), (14, 0), (15, 1), (44, 2), (45, 3), (54, 3), (75, 6), (200, 6)])
def test_age_buckets(age, bucket):
    assert AgeBuckets().bucket(age) == bucket


def test_age_45_boundary():
    b = AgeBuckets()
    assert b.bounds(b.bucket(44))[1] < 45
    assert b.bounds(b.bucket(45))[0] == 45


def test_bad_buckets():
    with pytest.raises(ConfigError):
        AgeBuckets((0, 10, 10, 20, 30, 40, 50))
    with pytest.raises(ConfigError):
        AgeBuckets((0, 15, 30, 45, 55, 65, 75), max_age=70)


@given(st.integers(0, N_GROUPS - 1))
def test_group_index_round_trip(i):
    assert GroupKey.from_index(i).index == i


def test_group_key_validation():
    with pytest.raises(ValueError):
        GroupKey(7, Gender.MALE, 1)
    with pytest.raises(ValueError):
        GroupKey(0, Gender.MALE, 11)
    assert GroupKey(0, "female", 1).gender is Gender.FEMALE


def test_selector_wildcards():
    assert len(expand_selector({})) == N_GROUPS
    assert len(expand_selector({"gender": "male"})) == 70
    assert expand_selector({"age_bucket": 3, "gender": "female", "ses": 2}) == [GroupKey(3, Gender.FEMALE, 2).index]
    with pytest.raises(ConfigError):
        expand_selector({"ses": 0})


def test_status_helpers():
    assert ClinicalStatus.sick(3) is ClinicalStatus.S3
    assert ClinicalStatus.recovered(2) is ClinicalStatus.R2
    assert ClinicalStatus.R4.phase == 4 and ClinicalStatus.H.phase is None
    assert ClinicalStatus.S1.is_sick and not ClinicalStatus.R1.is_sick


def test_clinical_table_missing_group_names_it():
    rows = [dict(fixtures.DESK_CLINICAL, psi_i=1e-4, gender="male")]
    with pytest.raises(ConfigError, match="gender=female"):
        ClinicalParameterTable.from_rows(rows)


def test_clinical_table_symptom_constraint():
    with pytest.raises(ConfigError, match="symptom_prob"):
        fixtures.uniform_clinical(symptom_prob=[0.0, 0.01, 0.5, 1.0])


def test_clinical_table_symptom_default():
    row = {k: v for k, v in fixtures.DESK_CLINICAL.items() if k != "symptom_prob"}
    table = ClinicalParameterTable.from_rows([dict(row, psi_i=1e-4)])
    assert np.allclose(table.symptom_prob, [0.0, 0.01, 1.0, 1.0])


def test_clinical_table_rows_round_trip():
    table = fixtures.desk_scenario(per_group=1).clinical
    again = ClinicalParameterTable.from_rows(table.to_rows())
    for name in table.FIELDS:
        assert np.array_equal(getattr(table, name), getattr(again, name))


def _init(counts, **kw):
    return InitSpec(counts, 0.3, 0.1, 1.0, 0.2, [1.0] + [0.0] * 8, **kw)


def test_build_population_counts_and_census():
    scen = fixtures.desk_scenario(per_group=50)
    pop = build_population(scen.init, 1, life=scen.life, clinical=scen.clinical, policy=scen.policy)
    assert len(pop) == 140 * 50
    assert np.array_equal(np.bincount(pop.group, minlength=N_GROUPS), scen.init.counts)
    census = pop.census()
    assert census.total == 7000
    assert census[ClinicalStatus.H] > 0.95 * 7000


def test_build_population_empty():
    pop = build_population(_init(np.zeros(N_GROUPS)), 0, life=fixtures.life_table())
    assert len(pop) == 0
    assert pop.census().total == 0


def test_build_population_deterministic():
    scen = fixtures.desk_scenario(per_group=20)
    kw = dict(life=scen.life, clinical=scen.clinical, policy=scen.policy)
    a = build_population(scen.init, 4, **kw)
    b = build_population(scen.init, 4, **kw)
    c = build_population(scen.init, 5, **kw)
    assert a.equals(b)
    assert not a.equals(c)


def test_build_population_rejects_bad_specs():
    with pytest.raises(ConfigError):
        _init(-np.ones(N_GROUPS))
    with pytest.raises(ConfigError):
        InitSpec(np.ones(N_GROUPS), 1.5, 0.0, 1.0, 0.0, [1.0] + [0.0] * 8)
    sick = InitSpec(np.ones(N_GROUPS), 0.3, 0.0, 1.0, 0.0, [0.5, 0.5] + [0.0] * 7)
    with pytest.raises(ConfigError, match="clinical"):
        build_population(sick, 0, life=fixtures.life_table())


def test_traits_within_bounds():
    init = InitSpec(np.full(N_GROUPS, 30), 0.5, 0.6, 0.2, 0.5, [1.0] + [0.0] * 8)
    pop = build_population(init, 0, life=fixtures.life_table())
    assert pop.mu.min() >= 0 and pop.mu.max() <= 1
    assert pop.rho.min() >= 0


def test_ages_inside_buckets():
    scen = fixtures.desk_scenario(per_group=5)
    pop = build_population(scen.init, 2, life=scen.life, clinical=scen.clinical)
    assert np.array_equal(AgeBuckets().bucket(pop.age), pop.group // 20)


def test_individual_round_trip():
    scen = fixtures.desk_scenario(per_group=3)
    pop = build_population(scen.init, 2, life=scen.life, clinical=scen.clinical, policy=scen.policy)
    people = [pop.individual(i) for i in range(len(pop))]
    again = PopulationState.from_individuals(people)
    for c in pop.columns:
        if c != "onset_at":
            assert np.array_equal(getattr(pop, c), getattr(again, c)), c


def test_schedule_onsets_extremes():
    people = [person(), person(), person()]
    pop = PopulationState.from_individuals(people)
    idx = np.arange(3)
    schedule_onsets(pop, idx, 10, fixtures.uniform_clinical(psi_i=1.0), np.array([0.1, 0.5, 0.99]))
    assert np.all(pop.onset_at == 10)
    schedule_onsets(pop, idx, 10, fixtures.uniform_clinical(psi_i=0.0), np.array([0.1, 0.5, 0.99]))
    assert np.all(pop.onset_at == NEVER)


def test_onset_clock_is_geometric():
    """Waiting time from one uniform matches a per-round Bernoulli(p) process."""
    p = 0.02
    n = 40_000
    pop = PopulationState.from_individuals([person()])
    pop.append(**{c: np.repeat(getattr(pop, c)[:1], n - 1) for c in pop.columns})
    u = np.random.default_rng(0).random(n)
    schedule_onsets(pop, np.arange(n), 0, fixtures.uniform_clinical(psi_i=p), u)
    wait = pop.onset_at.astype(float)
    assert abs(wait.mean() - (1 - p) / p) < 4 * np.sqrt((1 - p) / p**2 / n)
    assert abs(np.mean(wait == 0) - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_json_safe():
    obj = {"a": np.float64(1.5), "b": [np.int32(2), float("nan")], "c": np.bool_(True), "d": (np.inf,)}
    out = json_safe(obj)
    assert out == {"a": 1.5, "b": [2, None], "c": True, "d": [None]}
    json.dumps(out, allow_nan=False)
