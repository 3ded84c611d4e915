import numpy as np
import pytest
from hypothesis import given, strategies as st

from checkup_sim import rng as rngmod
from checkup_sim.core import ClinicalStatus as CS, ConfigError, PopulationState
from checkup_sim.policy import PolicySpec, complies, due_mask, policy_round, recommendation_due
from helpers import FixedDraws, person


def test_examples():
    spec = PolicySpec()
    assert not recommendation_due(person(e=44), spec, 400)
    assert recommendation_due(person(e=45), spec, 365)
    assert recommendation_due(person(alpha=CS.R3, e=20), spec, 182)
    assert not recommendation_due(person(alpha=CS.R3, e=20), spec, 181)


def test_never_recommended_when_sick_or_dead():
    spec = PolicySpec(delta_i=1, delta_r=(1, 1, 1, 1))
    for alpha in (CS.S1, CS.S2, CS.S3, CS.S4, CS.D):
        assert not recommendation_due(person(alpha=alpha, e=80), spec, 10_000)


def test_default_intervals():
    spec = PolicySpec()
    assert spec.delta_i == 365
    assert spec.delta_r == (365, 365, 182, 182)
    with pytest.raises(ConfigError):
        PolicySpec(delta_i=0)


def test_complies_extremes():
    assert not any(complies(person(mu=0.0), FixedDraws(u)) for u in (0.0, 0.5, 0.999))
    assert all(complies(person(mu=1.0), FixedDraws(u)) for u in (0.0, 0.5, 0.999))


def test_compliance_fraction():
    n = 10_000
    u = rngmod.Streams(8).at(rngmod.POLICY, 0, np.arange(n))
    hits = sum(complies(person(mu=0.5), FixedDraws(x)) for x in u)
    assert abs(hits / n - 0.5) < 0.02


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 90), st.integers(0, 800)), min_size=1, max_size=30),
       st.integers(1, 400), st.lists(st.integers(1, 400), min_size=4, max_size=4), st.integers(0, 90))
def test_due_mask_matches_scalar(rows, delta_i, delta_r, min_age):
    spec = PolicySpec(min_age, delta_i, tuple(delta_r))
    status = np.array([r[0] for r in rows], dtype=np.int8)
    age = np.array([r[1] for r in rows])
    since = np.array([r[2] for r in rows])
    expected = [recommendation_due(person(alpha=CS(s), e=a), spec, e) for s, a, e in rows]
    assert due_mask(status, age, since, spec).tolist() == expected


def test_policy_round_resets_interval_and_respects_mu():
    people = [person(e=60, mu=1.0, since_checkup=364), person(e=60, mu=0.0, since_checkup=364),
              person(e=30, mu=1.0, since_checkup=364), person(alpha=CS.S2, mu=1.0, since_checkup=999)]
    pop = PopulationState.from_individuals(people)
    chk = policy_round(pop, PolicySpec(), rngmod.Streams(0), 0)
    assert chk.tolist() == [True, False, False, False]
    # the refusal still restarts the clock
    assert pop.since.tolist() == [0, 0, 365, 1000]


def test_policy_round_skips_dead():
    pop = PopulationState.from_individuals([person(alpha=CS.D, gamma=0, since_checkup=5, mu=1.0)])
    chk = policy_round(pop, PolicySpec(delta_i=1), rngmod.Streams(0), 0)
    assert not chk.any() and pop.since[0] == 5
