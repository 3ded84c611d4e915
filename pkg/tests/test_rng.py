import numpy as np
from hypothesis import given, strategies as st
from scipy import stats

from checkup_sim import rng


def test_hashed_uniform_is_uniform():
    u = rng.hashed_uniform(3, rng.POLICY, 17, np.arange(50_000))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_hashed_uniform_depends_only_on_its_own_index():
    full = rng.hashed_uniform(9, rng.SYMPTOM, 4, np.arange(1000))
    some = np.array([5, 999, 17, 0])
    assert np.array_equal(rng.hashed_uniform(9, rng.SYMPTOM, 4, some), full[some])


def test_streams_differ_by_purpose_round_and_seed():
    idx = np.arange(200)
    base = rng.hashed_uniform(1, rng.POLICY, 0, idx)
    for other in (rng.hashed_uniform(1, rng.ONSET, 0, idx), rng.hashed_uniform(1, rng.POLICY, 1, idx),
                  rng.hashed_uniform(2, rng.POLICY, 0, idx)):
        assert not np.array_equal(base, other)
        assert abs(np.corrcoef(base, other)[0, 1]) < 0.25


def test_generator_is_reproducible():
    a = rng.generator(5, rng.BIRTH, 3).random(10)
    b = rng.generator(5, rng.BIRTH, 3).random(10)
    c = rng.generator(5, rng.BIRTH, 4).random(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_empty_index():
    assert rng.Streams(0).at(rng.POLICY, 0, np.zeros(0, dtype=np.int64)).shape == (0,)


@given(st.integers(0, 2**32), st.integers(0, 10**6), st.lists(st.integers(0, 10**7), min_size=1, max_size=20))
def test_hashed_uniform_in_unit_interval(seed, round_, idx):
    u = rng.Streams(seed).at(rng.RECOVERY, round_, np.array(idx))
    assert np.all((u >= 0) & (u < 1))
