import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from checkup_sim.campaign import (
    BudgetExceeded,
    BudgetLedger,
    CampaignConfig,
    CampaignGrid,
    CampaignTensor,
    GroupView,
    TensorCampaign,
    apply_sms,
    apply_sms_many,
    campaign_cost,
    dispatch_round,
    heatmap,
    select_recipients,
    sms_eligible,
    sms_increment,
)
from checkup_sim.core import ClinicalStatus as CS, ConfigError, N_GROUPS, PopulationState
from helpers import person


def test_sms_update_hand_values():
    cfg = CampaignConfig(c1=0.2, c2=0.3)
    ind = person(mu=0.5, rho=0.1)
    apply_sms(ind, cfg)
    assert abs(ind.mu - 0.52) < 1e-9
    ind = person(mu=0.5, rho=0.1, sms_count=1)
    apply_sms(ind, cfg)
    assert abs(ind.mu - (0.5 + 0.1 * (0.2 + 0.3 * math.log10(2)))) < 1e-12
    assert abs(ind.mu - 0.52903) < 1e-5


def test_sms_update_clamps_and_zero_rho():
    ind = person(mu=0.99, rho=10.0)
    apply_sms(ind, CampaignConfig(c1=1.0))
    assert ind.mu == 1.0
    ind = person(mu=0.3, rho=0.0)
    for _ in range(5):
        apply_sms(ind, CampaignConfig(c1=0.5, c2=0.5))
    assert ind.mu == 0.3 and ind.sms_count == 5


@given(st.floats(0, 1), st.floats(0, 5), st.floats(0, 1), st.floats(0, 1), st.integers(1, 30))
def test_sms_never_decreases_mu(mu, rho, c1, c2, n):
    ind = person(mu=mu, rho=rho)
    last = mu
    for _ in range(n):
        apply_sms(ind, CampaignConfig(c1=c1, c2=c2))
        assert last <= ind.mu <= 1.0
        last = ind.mu


@given(st.floats(0, 5), st.floats(0, 1), st.floats(0, 1))
def test_diminishing_returns(rho, c1, c2):
    gains = sms_increment(np.arange(2, 60), rho, c1, c2)
    assert np.all(np.diff(gains) <= 1e-15)


def test_vectorized_update_matches_scalar():
    people = [person(mu=m, rho=r, sms_count=n) for m, r, n in [(0.1, 0.5, 0), (0.9, 3.0, 4), (0.5, 0.0, 1)]]
    pop = PopulationState.from_individuals(people)
    cfg = CampaignConfig(c1=0.05, c2=0.2)
    apply_sms_many(pop, np.arange(3), cfg)
    for i, p in enumerate(people):
        apply_sms(p, cfg)
        assert pop.mu[i] == pytest.approx(p.mu, abs=1e-15)
        assert pop.sms[i] == p.sms_count


def test_cost_examples():
    cfg = CampaignConfig(b_sms=0.049, budget=100.0)
    assert campaign_cost(1000, cfg) == pytest.approx(49.0)
    assert campaign_cost(CampaignTensor.zeros(30, 10), cfg) == 0.0


@given(st.integers(1, 4), st.integers(0, 2**31), st.floats(0.05, 1e4))
def test_planned_cost_flooring_bound(nb, seed, budget):
    vals = np.random.default_rng(seed).random((nb, 7, 2, 10))
    cfg = CampaignConfig(b_sms=0.049, budget=budget)
    tensor = CampaignTensor(vals / vals.sum(), 5)
    cost = campaign_cost(tensor, cfg)
    assert cost <= budget + 1e-9
    assert budget - cost < 140 * nb * cfg.b_sms


def test_cost_flooring_large_budget():
    cfg = CampaignConfig(b_sms=0.049, budget=10_000_000.0)
    tensor = CampaignTensor.uniform(365, 28)
    cost = campaign_cost(tensor, cfg)
    assert 10_000_000 - 140 * 13 * 0.049 < cost <= 10_000_000


def test_tensor_validation():
    with pytest.raises(ConfigError):
        CampaignTensor(np.full((1, 7, 2, 10), 0.01), 5)  # sums to 1.4
    with pytest.raises(ConfigError):
        CampaignTensor(-np.ones((1, 1, 1, 1)), 5)
    with pytest.raises(ConfigError):
        CampaignTensor(np.zeros((1, 3, 2, 10)), 5)
    with pytest.raises(ConfigError):
        CampaignConfig(b_sms=0)


@given(st.integers(1, 60), st.integers(1, 20), st.integers(0, 2**31), st.floats(0.1, 50))
def test_round_plan_spreads_each_block_evenly(horizon, L, seed, budget):
    nb = CampaignTensor.blocks_for(horizon, L)
    vals = np.random.default_rng(seed).random((nb, 1, 2, 1))
    tensor = CampaignTensor(vals / vals.sum(), L)
    cfg = CampaignConfig(budget=budget)
    plan = tensor.round_plan(horizon, cfg)
    cells = tensor.cell_sms(cfg)
    assert plan.sum() <= cfg.max_sms
    for b in range(nb):
        block = plan[b * L:(b + 1) * L]
        assert np.array_equal(block.sum(axis=0), cells[b])
        assert np.all(block.max(axis=0) - block.min(axis=0) <= 1)


def test_naive_arithmetic():
    # $4.90 at $0.049 buys 100 SMSs; spread over 10 rounds that is 10 per round
    cfg = CampaignConfig(b_sms=0.049, budget=4.90)
    plan = CampaignTensor(np.ones((1, 1, 1, 1)), 10).round_plan(10, cfg)
    assert plan.sum() == 100 and np.all(plan == 10)
    cfg = CampaignConfig(b_sms=0.049, budget=49.0)
    plan = CampaignTensor(np.ones((1, 1, 1, 1)), 10).round_plan(10, cfg)
    assert plan.sum() == 1000 and np.all(plan == 100)


def _brute_force_recipients(cells, keys, quota):
    chosen = []
    for c in range(len(quota)):
        members = [i for i in range(len(cells)) if cells[i] == c]
        members.sort(key=lambda i: keys[i])
        chosen += members[:quota[c]]
    return sorted(chosen)


@given(st.integers(1, 5), st.integers(0, 60), st.integers(0, 2**31))
def test_select_recipients_oracle(n_cells, n, seed):
    g = np.random.default_rng(seed)
    cells = g.integers(0, n_cells, n)
    keys = g.random(n)
    quota = g.integers(0, 15, n_cells)
    got = sorted(select_recipients(cells, keys, quota).tolist())
    assert got == _brute_force_recipients(cells, keys, quota)


def test_select_recipients_is_uniform():
    cells = np.zeros(10, dtype=np.int64)
    counts = np.zeros(10)
    for s in range(4000):
        keys = np.random.default_rng(s).random(10)
        counts[select_recipients(cells, keys, np.array([3]))] += 1
    assert np.all(np.abs(counts / 4000 - 0.3) < 0.04)


def _pop(n, **kw):
    return PopulationState.from_individuals([person(**kw) for _ in range(n)])


def test_surplus_rolls_within_block_and_is_forfeited():
    pop = _pop(3, mu=0.1, rho=1.0)
    cfg = CampaignConfig(c1=0.01, budget=100 * 0.049)
    tensor = CampaignTensor(np.array([10, 0, 0, 90]).reshape(2, 1, 2, 1) / 100, 2)
    camp = TensorCampaign(tensor)
    camp.reset(4, cfg)
    ledger = BudgetLedger(cfg, 4, 2)
    eligible = np.arange(3)
    cells = np.zeros(3, dtype=np.int64)  # everyone sits in cell 0 (male)
    sent_log = []
    for k in range(4):
        view = GroupView(np.bincount(cells, minlength=2), np.zeros(2))
        quota = camp.quotas(k, view)
        sent = dispatch_round(quota, k, pop, cfg, np.random.default_rng(k).random(3), eligible, cells, ledger)
        camp.settle(k, quota, sent)
        sent_log.append((quota.tolist(), sent.tolist()))
    # block 0: 10 SMS over 2 rounds -> 5 + 5; each round only 3 can be reached
    assert sent_log[0] == ([5, 0], [3, 0])
    assert sent_log[1] == ([7, 0], [3, 0])
    # block 1 starts clean; the 45 + 45 female quota finds nobody
    assert sent_log[2] == ([0, 45], [0, 0])
    assert camp.forfeited == 4 + 90
    assert ledger.total_sms == 6 and np.all(pop.sms == 2)


def test_quota_larger_than_group():
    pop = _pop(3)
    cfg = CampaignConfig(c1=0.01, budget=1.0)
    ledger = BudgetLedger(cfg, 1, 1)
    sent = dispatch_round(np.array([10]), 0, pop, cfg, np.array([0.3, 0.2, 0.1]), np.arange(3),
                          np.zeros(3, dtype=np.int64), ledger)
    assert sent.tolist() == [3] and np.all(pop.sms == 1)


def test_zero_quota_changes_nothing():
    pop = _pop(5)
    before = pop.copy()
    cfg = CampaignConfig(c1=0.3, budget=1.0)
    dispatch_round(np.zeros(1, dtype=np.int64), 0, pop, cfg, np.random.default_rng(0).random(5), np.arange(5),
                   np.zeros(5, dtype=np.int64), BudgetLedger(cfg, 1, 1))
    assert pop.equals(before)


def test_dispatch_deterministic():
    cfg = CampaignConfig(c1=0.3, budget=1.0)
    keys = np.random.default_rng(3).random(20)
    picks = []
    for _ in range(2):
        pop = _pop(20)
        dispatch_round(np.array([5]), 0, pop, cfg, keys, np.arange(20), np.zeros(20, dtype=np.int64),
                       BudgetLedger(cfg, 1, 1))
        picks.append(np.flatnonzero(pop.sms))
    assert np.array_equal(*picks)


def test_budget_exceeded_is_an_error():
    pop = _pop(10)
    cfg = CampaignConfig(budget=5 * 0.049)
    with pytest.raises(BudgetExceeded):
        dispatch_round(np.array([6]), 0, pop, cfg, np.random.default_rng(0).random(10), np.arange(10),
                       np.zeros(10, dtype=np.int64), BudgetLedger(cfg, 1, 1))


def test_eligibility():
    pop = PopulationState.from_individuals([
        person(e=44), person(e=45), person(alpha=CS.R2, e=20), person(alpha=CS.S1, e=60), person(alpha=CS.D, e=60)])
    assert sms_eligible(pop, 45).tolist() == [False, True, True, False, False]


def test_tensor_csv_and_json_round_trip():
    vals = np.random.default_rng(0).random((3, 7, 2, 10))
    t = CampaignTensor(vals / vals.sum(), 9)
    for again in (CampaignTensor.from_csv(t.to_csv()), CampaignTensor.from_json(t.to_json())):
        assert again.time_block_length == 9
        assert np.array_equal(again.values, t.values)
    pooled = CampaignTensor.uniform(30, 7, CampaignGrid.pooled())
    assert CampaignTensor.from_csv(pooled.to_csv()).values.shape == (5, 1, 1, 1)


def test_grid_cells():
    assert np.all(CampaignGrid.pooled().cell_of_group() == 0)
    assert np.array_equal(CampaignGrid().cell_of_group(), np.arange(N_GROUPS))
    assert CampaignGrid(age=True, gender=False, ses=False).cell_of_group()[45] == 2


def test_heatmap_uniform_is_constant():
    cfg = CampaignConfig(b_sms=0.049, budget=1000.0)
    out = heatmap(CampaignTensor.uniform(365, 365), np.full(N_GROUPS, 100), cfg, 365)
    assert np.allclose(out, out[0, 0, 0]) and out[0, 0, 0] > 0


def test_heatmap_single_cell():
    cfg = CampaignConfig(b_sms=0.05, budget=1000.0)
    vals = np.zeros((2, 7, 2, 10))
    vals[1, 4, 1, 6] = 1.0
    sizes = np.full(N_GROUPS, 40)
    out = heatmap(CampaignTensor(vals, 365), sizes, cfg, 730)
    expected = 1000.0 / (0.05 * 40 * 2)
    assert out[1, 4, 6] == pytest.approx(expected)
    assert np.count_nonzero(out) == 1
