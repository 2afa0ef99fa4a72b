import json

import numpy as np
import pytest

from bcbandit.env import make_explicit_env, make_latent_env
from bcbandit.errors import MalformedLogError, UndefinedEstimateError
from bcbandit.policies import FixedAction, Policy, PolicyConfig, make_policy
from bcbandit.replay import (LogRecord, ReplaySummary, generate_log, policy_for_log, read_log,
                             relative_accuracy, replay, write_log)


class EchoLogged(Policy):
    """Test helper: always sends whatever the next log record holds."""

    name = "echo"
    needs_gap = False

    def __init__(self, config, actions):
        super().__init__(config)
        self._actions = iter(actions)

    def _decide_group(self, ctxs, vt):
        return next(self._actions), 2


def latent(seed=0, K=3, M=5):
    return make_latent_env(K, M, 2, 0.25, rng_seed=seed)


def test_single_candidate_log():
    env = latent()
    recs = generate_log(env, 200, seed=1, candidates=[3])
    assert {r.logged_action for r in recs} == {3}
    assert all(r.propensity == 1.0 for r in recs)


def test_uniform_logging_frequencies_and_rewards():
    env = latent(K=2, M=5)
    recs = generate_log(env, 100_000, seed=2)
    actions = np.array([r.logged_action for r in recs])
    assert np.allclose(np.bincount(actions, minlength=5) / len(recs), 0.2, atol=0.01)
    x = np.array([r.context_id for r in recs])
    rw = np.array([r.reward for r in recs])
    for k in range(2):
        for m in range(5):
            sel = (x == k) & (actions == m)
            if sel.sum() >= 10_000:
                assert abs(rw[sel].mean() - env.mu[k, m]) <= 0.02


def test_echo_policy_matches_everything():
    recs = generate_log(latent(), 500, seed=3)
    p = EchoLogged(PolicyConfig(horizon=500), [r.logged_action for r in recs]).reset(3, 5, 1)
    s = replay(p, recs)
    assert s.matched_rounds == 500
    assert s.policy_ctr == pytest.approx(s.random_ctr)


def test_hand_worked_example():
    cands = (0, 1)
    rows = [(0, 1.0), (1, 1.0), (0, 0.0), (1, 0.0), (0, 1.0), (1, 1.0)]
    recs = [LogRecord(i + 1, 0, a, r, cands, 0.5) for i, (a, r) in enumerate(rows)]
    p = make_policy("fixed", PolicyConfig(horizon=6, action=0)).reset(1, 2, 1)
    s = replay(p, recs)
    assert s.matched_rounds == 3
    assert s.policy_ctr == pytest.approx(2 / 3)
    assert s.random_ctr == pytest.approx(4 / 6)


def test_fixed_policy_estimate_unbiased():
    env = latent(seed=5, K=3, M=4)
    recs = generate_log(env, 200_000, seed=5)
    p = policy_for_log("fixed", recs, action=2)
    s = replay(p, recs)
    assert s.matched_rounds / len(recs) == pytest.approx(0.25, abs=0.01)
    truth = float(np.mean(env.mu[:, 2]))  # uniform arrivals over contexts
    assert abs(s.policy_ctr - truth) <= 0.02


def test_random_policy_relative_accuracy_near_one():
    env = latent(seed=6, K=3, M=4)
    recs = generate_log(env, 200_000, seed=6)
    s = replay(policy_for_log("random", recs, seed=1), recs)
    assert abs(s.relative_accuracy - 1.0) <= 0.05


def test_oracle_ratio_closed_form():
    env = latent(seed=7, K=3, M=4)
    recs = generate_log(env, 200_000, seed=7)
    s = replay(policy_for_log("oracle", recs, mu=env.mu), recs)
    closed = env.mu.max(axis=1).mean() / env.mu.mean()
    assert abs(s.relative_accuracy - closed) <= 0.05


def test_degenerate_env_ratio_exactly_one():
    env = make_explicit_env(np.full((2, 3), 0.5), 0.5, noise="truncated-additive", sigma=0.0)
    recs = generate_log(env, 3000, seed=0)
    s = replay(policy_for_log("alg1", recs, delta_lower=0.5), recs)
    assert s.relative_accuracy == 1.0


def test_zero_random_ctr_undefined():
    with pytest.raises(UndefinedEstimateError):
        relative_accuracy(ReplaySummary(0, 5, 0.0, 0.0))
    assert ReplaySummary(0, 5, 0.0, 0.0).to_dict()["relative_accuracy"] is None


def test_malformed_records(tmp_path):
    bad = LogRecord(1, 0, 3, 1.0, (0, 1), 0.5)
    with pytest.raises(MalformedLogError):
        bad.validate()
    with pytest.raises(MalformedLogError):
        LogRecord(1, 0, 0, 1.5, (0, 1), 0.5).validate()
    with pytest.raises(MalformedLogError):
        LogRecord(1, 0, 0, 1.0, (0, 1), 0.3).validate()
    path = tmp_path / "log.jsonl"
    path.write_text('{"timestamp": 1, "context_id": 1}\n')
    with pytest.raises(MalformedLogError):
        read_log(path)
    path.write_text("not json\n")
    with pytest.raises(MalformedLogError):
        read_log(path)
    p = make_policy("fixed", PolicyConfig(horizon=6, action=0)).reset(1, 2, 1)
    with pytest.raises(MalformedLogError):
        replay(p, [bad])


def test_skipped_records_leave_state_untouched():
    env = latent(seed=8)
    recs = generate_log(env, 400, seed=8)
    p = policy_for_log("alg1", recs, delta_lower=0.25)
    matched = 0
    for rec in recs:
        before = p.state_digest()
        (m,) = p.decide([np.array([rec.context_id])], matched + 1)
        if m == rec.logged_action:
            matched += 1
            p.observe([rec.context_id], [m], [rec.reward])
            assert p.state_digest() != before
        else:
            assert p.state_digest() == before
    q = policy_for_log("alg1", recs, delta_lower=0.25)
    assert replay(q, recs).matched_rounds == matched
    assert q.state_digest() == p.state_digest()


def test_json_roundtrip_is_one_based(tmp_path):
    recs = generate_log(latent(), 20, seed=9)
    path = tmp_path / "log.jsonl"
    write_log(recs, path)
    first = json.loads(path.read_text().splitlines()[0])
    assert first["logged_action"] == recs[0].logged_action + 1
    assert min(first["candidate_set"]) == 1
    assert read_log(path) == recs
