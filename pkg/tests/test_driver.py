from __future__ import annotations

import csv

import numpy as np
import pytest

from conftest import random_cmdp, random_policy
from wsac import (
    Cmdp,
    ConfigurationError,
    Policy,
    WsacConfig,
    mixture_eval,
    policy_eval,
    run_wsac,
    run_wsac_exact,
    sample_dataset,
)
from wsac.driver import TRACE_COLUMNS


def two_state(reward, raw_cost, budget=0.5):
    P = np.zeros((2, 2, 2))
    P[:, 0, 0] = 1.0
    P[:, 1, 1] = 1.0
    return Cmdp.with_budget(P, reward, raw_cost, budget, 0.8, [0.5, 0.5])


def test_single_round_returns_uniform():
    rng = np.random.default_rng(0)
    m = random_cmdp(rng, 3, 2)
    ds = sample_dataset(m, Policy.uniform(3, 2), 100, seed=0)
    mix, trace = run_wsac(ds, Policy.uniform(3, 2), WsacConfig(k=1))
    assert len(mix.members) == 1
    assert np.allclose(mix.members[0].probs, 0.5)
    assert len(trace.records) == 1


def test_free_constraint_improves_reward_with_more_rounds():
    m = two_state([[0.2, 0.9], [0.1, 0.6]], np.zeros((2, 2)), budget=1.0)
    assert np.all(m.cost == -1.0)
    beh = Policy.uniform(2, 2)
    js = []
    for k in (5, 50, 200):
        mix, _ = run_wsac_exact(m, beh, beh, WsacConfig(beta=2.0, lam=1.0, k=k, eta=0.5, mode="exact"))
        js.append(mixture_eval(m, mix).j_r)
    assert js[0] <= js[1] <= js[2]
    assert js[2] > policy_eval(m, beh).j_r


def test_zero_reward_only_tracks_cost():
    m = two_state(np.zeros((2, 2)), [[0.1, 0.9], [0.2, 0.8]])
    ref = Policy.deterministic([0, 0], 2)
    for lam in (1.0, 5.0, 20.0):
        mix, _ = run_wsac_exact(m, Policy.uniform(2, 2), ref, WsacConfig(lam=lam, k=100, eta=1.0, mode="exact"))
        v = mixture_eval(m, mix)
        assert v.j_r == 0.0
        assert max(v.j_c, 0) <= max(policy_eval(m, ref).j_c, 0) + m.v_max / lam + 1e-2


@pytest.mark.parametrize("lam", [1.0, 5.0, 20.0])
def test_cost_guarantee_across_lambda(lam):
    rng = np.random.default_rng(3)
    m = random_cmdp(rng, 4, 3, gamma=0.8)
    beh = random_policy(rng, 4, 3)
    mix, _ = run_wsac_exact(m, beh, beh, WsacConfig(beta=2.0, lam=lam, k=100, eta=1.0, mode="exact"))
    v, ref = mixture_eval(m, mix), policy_eval(m, beh)
    assert max(v.j_c, 0) <= max(ref.j_c, 0) + m.v_max / lam + 1e-2


def test_determinism_and_trace(tmp_path):
    rng = np.random.default_rng(4)
    m = random_cmdp(rng, 3, 2)
    ds = sample_dataset(m, Policy.uniform(3, 2), 300, seed=1)
    cfg = WsacConfig(k=7, eta=0.3, lambda_schedule=(0.0, 2.0))
    a, ta = run_wsac(ds, Policy.uniform(3, 2), cfg)
    b, tb = run_wsac(ds, Policy.uniform(3, 2), cfg)
    assert all(np.array_equal(x.probs, y.probs) for x, y in zip(a.members, b.members))
    assert ta.rows() == tb.rows()
    assert [r.k for r in ta.records] == list(range(1, 8))
    assert ta.records[-1].lam == 2.0 and ta.records[0].lam == pytest.approx(2 / 7)
    assert len(ta.payoffs) == len(ta.reward_critics) == len(ta.cost_critics) == 7
    ta.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == TRACE_COLUMNS and len(rows) == 8
    tb.to_csv(tmp_path / "u.csv")
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "u.csv").read_bytes()


def test_exact_loss_diagnostics():
    from wsac import SampleMeasure, occupancy

    rng = np.random.default_rng(5)
    m = random_cmdp(rng, 3, 2)
    mu = random_policy(rng, 3, 2)
    ds = sample_dataset(m, mu, 200, seed=2)
    _, tr = run_wsac(ds, mu, WsacConfig(k=3), exact=SampleMeasure.from_model(m, occupancy(m, mu)))
    assert all(r.exact_loss_l_r is not None for r in tr.records)


def test_greedy_actor_plays_deterministic_policies():
    rng = np.random.default_rng(6)
    m = random_cmdp(rng, 3, 3)
    ds = sample_dataset(m, Policy.uniform(3, 3), 300, seed=3)
    mix, _ = run_wsac(ds, Policy.uniform(3, 3), WsacConfig(k=4, actor="greedy"))
    for pi in mix.members[1:]:
        assert set(np.unique(pi.probs)) <= {0.0, 1.0}


def test_coverage_note_in_exact_mode():
    m = two_state([[0.2, 0.9], [0.1, 0.6]], [[0.1, 0.9], [0.2, 0.8]])
    beh = Policy.deterministic([0, 0], 2)
    _, tr = run_wsac_exact(m, beh, Policy.deterministic([1, 1], 2), WsacConfig(k=2, mode="exact"))
    assert tr.coverage_violation is not None
    _, tr = run_wsac_exact(m, beh, beh, WsacConfig(k=2, mode="exact"))
    assert tr.coverage_violation is None


def test_mode_and_config_errors():
    m = two_state([[0.2, 0.9], [0.1, 0.6]], [[0.1, 0.9], [0.2, 0.8]])
    ds = sample_dataset(m, Policy.uniform(2, 2), 50, seed=0)
    with pytest.raises(ConfigurationError):
        run_wsac(ds, Policy.uniform(2, 2), WsacConfig(mode="exact"))
    with pytest.raises(ConfigurationError):
        run_wsac_exact(m, Policy.uniform(2, 2), Policy.uniform(2, 2), WsacConfig())
    with pytest.raises(ConfigurationError):
        run_wsac(ds, Policy.uniform(3, 2), WsacConfig(k=1))
    for kw in (dict(beta=-1), dict(lam=0), dict(k=0), dict(eta=0.0), dict(mode="x"),
               dict(lambda_schedule=(2.0, 1.0)), dict(actor="x"), dict(payoff="x")):
        with pytest.raises(ConfigurationError):
            WsacConfig(**kw)
