import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcbandit.errors import ConfigError, UndefinedEstimateError
from bcbandit.estimator import EstimatorTable


def test_record_and_mean():
    t = EstimatorTable(2, 2).record(0, 0, 0.5)
    assert t.lookup(0, 0) == (0.5, 1)
    t = EstimatorTable(1, 1).record(0, 0, 0.0).record(0, 0, 1.0)
    assert t.lookup(0, 0) == (0.5, 2)


def test_undefined_and_hand_values():
    t = EstimatorTable(2, 2)
    assert t.lookup(1, 1) == (None, 0)
    t.record(0, 0, 1.0)
    assert t.lookup(0, 0) == (1.0, 1)
    for r in (0.2, 0.4, 0.6):
        t.record(1, 1, r)
    mean, n = t.lookup(1, 1)
    assert n == 3 and mean == pytest.approx(0.4, abs=1e-15)


def test_reward_range_checked():
    with pytest.raises(ConfigError):
        EstimatorTable(1, 1).record(0, 0, 1.5)
    with pytest.raises(ConfigError):
        EstimatorTable(1, 1).record(0, 2, 0.5)


def test_bernoulli_mean_concentrates():
    rng = np.random.default_rng(0)
    t = EstimatorTable(1, 1)
    for r in (rng.random(1000) < 0.3).astype(float):
        t.record(0, 0, r)
    assert abs(t.mean(0, 0) - 0.3) < 0.05


def test_radius_examples():
    t = EstimatorTable(1, 2)
    for _ in range(4):
        t.record(0, 0, 0.5)
    t.record(0, 1, 0.5)
    assert t.radius(0, 0, math.exp(4)) == pytest.approx(1.0, abs=1e-12)
    assert t.radius(0, 1, math.e) == pytest.approx(1.0, abs=1e-12)
    r4 = t.radius(0, 0, 50.0)
    for _ in range(4):
        t.record(0, 0, 0.5)
    assert t.radius(0, 0, 50.0) == pytest.approx(r4 / math.sqrt(2), abs=1e-12)
    with pytest.raises(UndefinedEstimateError):
        EstimatorTable(1, 1).radius(0, 0, 10)
    with pytest.raises(ConfigError):
        t.radius(0, 0, 1)


def test_pair_distance():
    t = EstimatorTable(1, 3)
    t.record(0, 0, 0.9).record(0, 1, 0.3).record(0, 2, 0.9)
    assert t.pair_distance(0, 2, 0) == 0
    assert t.pair_distance(0, 1, 0) == pytest.approx(0.6)
    assert t.pair_distance(1, 0, 0) == t.pair_distance(0, 1, 0)
    with pytest.raises(UndefinedEstimateError):
        EstimatorTable(1, 2).record(0, 0, 1.0).pair_distance(0, 1, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.randoms(use_true_random=False))
def test_mean_permutation_invariant(rewards, rnd):
    a, b = EstimatorTable(1, 1), EstimatorTable(1, 1)
    shuffled = list(rewards)
    rnd.shuffle(shuffled)
    for r in rewards:
        a.record(0, 0, r)
    for r in shuffled:
        b.record(0, 0, r)
    assert abs(a.mean(0, 0) - b.mean(0, 0)) <= 1e-12
    assert 0 <= a.sums[0, 0] <= a.counts[0, 0]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 3), st.floats(0, 1)), max_size=80))
def test_counts_conservation(events):
    t = EstimatorTable(3, 4)
    prev = t.counts.copy()
    for k, m, r in events:
        t.record(k, m, r)
        assert np.all(t.counts >= prev)
        prev = t.counts.copy()
    assert np.array_equal(t.counts.sum(axis=1), t.context_counts)


def test_csv_round_trip(tmp_path):
    t = EstimatorTable(2, 3)
    t.record(0, 1, 0.25).record(1, 2, 1.0).record(1, 2, 0.0)
    t.to_csv(tmp_path / "est.csv")
    back = EstimatorTable.from_csv(tmp_path / "est.csv")
    assert back.digest() == t.digest()
    assert (tmp_path / "est.csv").read_text().splitlines()[0] == "context,message,count,sum"
