import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcbandit.config import EnvSpec, PolicySpec, RunConfig
from bcbandit.env import make_borda_env, make_spike_env
from bcbandit.errors import ConfigError
from bcbandit.harness import run
from bcbandit.regret import (RegretLedger, block_regrets, exploitation_regret_step,
                             learning_regret_step)

MU = np.array([[0.9, 0.3], [0.2, 0.8]])


def brute_learning(mu, x, msgs, groups):
    total = 0.0
    for m, g in zip(msgs, groups):
        sums = [sum(mu[x[n], j] for n in g) for j in range(mu.shape[1])]
        total += max(sums) - sums[m]
    return total


def brute_broadcast(mu, x, groups):
    per_user = sum(max(mu[k]) for k in x)
    grouped = sum(max(sum(mu[x[n], j] for n in g) for j in range(mu.shape[1])) for g in groups)
    return per_user - grouped


def test_learning_example():
    assert learning_regret_step(MU, [0, 0, 1], [1], [[0, 1, 2]]) == pytest.approx(0.6)
    assert learning_regret_step(MU, [0, 0, 1], [0], [[0, 1, 2]]) == 0.0


def test_single_user_reduces_to_standard_regret():
    assert learning_regret_step(MU, [1], [0], [[0]]) == pytest.approx(0.6)
    assert exploitation_regret_step(MU, [1], [[0]]) == 0.0


def test_broadcast_examples():
    spike = make_spike_env(4, 4, 0.01)
    assert exploitation_regret_step(spike.mu, [0, 1, 2, 3], [[0, 1, 2, 3]]) == pytest.approx(2.97)
    borda = make_borda_env(4, 4)
    assert exploitation_regret_step(borda.mu, [0, 1, 2, 3], [[0, 1, 2, 3]]) == pytest.approx(1.5)
    assert exploitation_regret_step(borda.mu, [0, 1, 2, 3], [[0], [1], [2], [3]]) == 0.0


def test_grouping_validation():
    with pytest.raises(ConfigError):
        learning_regret_step(MU, [0, 1], [0], [[0, 0]])
    with pytest.raises(ConfigError):
        learning_regret_step(MU, [0, 1], [0, 1], [[0, 1]])


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32), N=st.integers(1, 7), K=st.integers(1, 4), M=st.integers(1, 5))
def test_matches_brute_force_and_is_nonnegative(seed, N, K, M):
    rng = np.random.default_rng(seed)
    mu = rng.random((K, M))
    x = rng.integers(0, K, size=N)
    tau = int(rng.integers(1, N + 1))
    order = rng.permutation(N)
    cuts = np.sort(rng.choice(np.arange(1, N), size=tau - 1, replace=False)) if tau > 1 else []
    groups = [g.tolist() for g in np.split(order, cuts)]
    msgs = rng.integers(0, M, size=tau).tolist()
    r = learning_regret_step(mu, x, msgs, groups)
    b = exploitation_regret_step(mu, x, groups)
    assert r >= 0 and b >= 0
    assert r == pytest.approx(brute_learning(mu, x, msgs, groups), abs=1e-9)
    assert b == pytest.approx(brute_broadcast(mu, x, groups), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_broadcast_term_ignores_policy(seed):
    rng = np.random.default_rng(seed)
    mu = rng.random((3, 4))
    X = rng.integers(0, 3, size=(20, 5))
    perm = np.argsort(rng.random((20, 5)), axis=1)
    bounds = np.array([0, 2, 5])
    A1, A2 = rng.integers(0, 4, size=(2, 20, 5))
    _, b1, _, _ = block_regrets(mu, X, A1, perm, bounds)
    _, b2, _, _ = block_regrets(mu, X, A2, perm, bounds)
    assert np.array_equal(b1, b2)


def test_oracle_plan_has_zero_learning_regret():
    res = run(RunConfig(env=EnvSpec(kind="latent", K=4, M=6, L=3, delta=0.25, N=5),
                        policy=PolicySpec(name="oracle"), T=5000, tau=2, seed=3))
    assert res.summary["R"] == 0.0
    assert res.summary["oracle_match_rate"] == 1.0


def test_constant_gap_accumulates_linearly():
    # single context, message 2 is 0.25 worse than message 1
    mu = [[0.75, 0.5]]
    res = run(RunConfig(env=EnvSpec(kind="explicit", mu=mu, delta=0.25, N=3),
                        policy=PolicySpec(name="fixed", action=2), T=1234, seed=0))
    assert res.summary["R"] == pytest.approx(3 * 0.25 * 1234)
    assert res.summary["B"] == 0.0


def test_series_consistency():
    cfg = RunConfig(env=EnvSpec(kind="latent", K=3, M=4, L=2, delta=0.25, N=4),
                    policy=PolicySpec(name="alg1"), T=5000, tau=2, seed=1, record_every=50)
    res = run(cfg)
    rows = [line.split(",") for line in res.series_csv().strip().splitlines()]
    assert rows[0] == ["t", "R_step", "B_step", "R_cum", "B_cum", "L_cum"]
    data = np.array(rows[1:], dtype=float)
    assert data[:, 0].tolist() == list(range(50, 5001, 50))
    assert np.allclose(data[:, 5], data[:, 3] + data[:, 4], atol=1e-9)
    assert np.all(np.diff(data[:, 3]) >= 0) and np.all(np.diff(data[:, 4]) >= 0)
    assert data[-1, 3] == res.summary["R"] and data[-1, 4] == res.summary["B"]
    assert res.summary["L"] == pytest.approx(res.summary["R"] + res.summary["B"])


def test_thinning_does_not_change_totals():
    base = dict(env=EnvSpec(kind="latent", K=3, M=4, L=2, delta=0.25, N=4),
                policy=PolicySpec(name="alg1"), T=3000, tau=2, seed=1)
    a = run(RunConfig(**base, record_every=1)).summary
    b = run(RunConfig(**base, record_every=97)).summary
    assert a == b


def test_realized_close_to_pseudo():
    N, T = 3, 100_000
    res = run(RunConfig(env=EnvSpec(kind="latent", K=3, M=4, L=2, delta=0.25, N=N),
                        policy=PolicySpec(name="random"), T=T, seed=8))
    s = res.summary
    assert abs(s["realized_R"] - s["R"]) / T <= 3 * math.sqrt(N / T)


def test_alg1_regret_flattens_after_exploration():
    cfg = RunConfig(env=EnvSpec(kind="latent", K=2, M=3, L=3, delta=0.25, N=2),
                    policy=PolicySpec(name="alg1"), T=400_000, seed=2)
    res = run(cfg)
    s = res.summary
    t1 = s["last_exploration_t"]
    assert 0 < t1 <= cfg.T // 2
    explore_slope = s["R_at_exploration_end"] / t1
    T = cfg.T
    late_slope = (s["R"] - s["R_at_quarters"][2]) / (T - (3 * T) // 4)
    assert late_slope < 0.01 * explore_slope


def test_ledger_rejects_overflow_and_incomplete():
    led = RegretLedger(2)
    with pytest.raises(ConfigError):
        led.summary()
    X = np.zeros((3, 1), dtype=np.int64)
    with pytest.raises(ConfigError):
        led.add_block(MU, X, X, np.zeros((3, 1)), X, np.zeros((3, 1), dtype=np.int64), np.array([0, 1]))
