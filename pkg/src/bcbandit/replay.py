"""Rejection-sampling replay of uniformly logged single-user interactions.

A record counts only when the evaluated policy picks the logged action; the
policy then learns from the logged reward.  Under uniform logging the
matched rounds are an unbiased sample of the policy's own interaction.
Files are JSON lines with 1-based ids; :class:`LogRecord` holds 0-based ids.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import STREAM_POLICY, EnvironmentInstance, arrivals_block, reward_draws, reward_from_draws
from .errors import ConfigError, MalformedLogError, UndefinedEstimateError
from .policies import Policy, PolicyConfig, make_policy

PROPENSITY_TOL = 1e-9


@dataclass(frozen=True)
class LogRecord:
    timestamp: int
    context_id: int
    logged_action: int
    reward: float
    candidate_set: tuple
    propensity: float

    def validate(self, num_contexts: int | None = None) -> None:
        if self.logged_action not in self.candidate_set:
            raise MalformedLogError(f"record {self.timestamp}: action {self.logged_action + 1} not among candidates")
        if not 0.0 <= self.reward <= 1.0:
            raise MalformedLogError(f"record {self.timestamp}: reward {self.reward} outside [0, 1]")
        if self.context_id < 0 or (num_contexts is not None and self.context_id >= num_contexts):
            raise MalformedLogError(f"record {self.timestamp}: context {self.context_id + 1} out of range")
        if abs(self.propensity - 1.0 / len(self.candidate_set)) > PROPENSITY_TOL:
            raise MalformedLogError(f"record {self.timestamp}: propensity {self.propensity} is not uniform")

    def to_json_dict(self) -> dict:
        return {"timestamp": self.timestamp, "context_id": self.context_id + 1,
                "logged_action": self.logged_action + 1, "reward": self.reward,
                "candidate_set": [m + 1 for m in self.candidate_set], "propensity": self.propensity}

    @classmethod
    def from_json_dict(cls, d: dict) -> "LogRecord":
        try:
            return cls(timestamp=int(d["timestamp"]), context_id=int(d["context_id"]) - 1,
                       logged_action=int(d["logged_action"]) - 1, reward=float(d["reward"]),
                       candidate_set=tuple(int(m) - 1 for m in d["candidate_set"]),
                       propensity=float(d["propensity"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedLogError(f"bad record {d!r}: {exc}") from None


@dataclass(frozen=True)
class ReplaySummary:
    matched_rounds: int
    total_records: int
    policy_ctr: float
    random_ctr: float

    @property
    def relative_accuracy(self) -> float:
        return relative_accuracy(self)

    def to_dict(self) -> dict:
        out = {"matched_rounds": self.matched_rounds, "total_records": self.total_records,
               "policy_ctr": self.policy_ctr, "random_ctr": self.random_ctr}
        out["relative_accuracy"] = self.relative_accuracy if self.random_ctr > 0 else None
        return out


def relative_accuracy(summary: ReplaySummary) -> float:
    if not summary.random_ctr > 0:
        raise UndefinedEstimateError("relative accuracy undefined: random policy CTR is zero")
    return summary.policy_ctr / summary.random_ctr


def generate_log(env: EnvironmentInstance, num_records: int, seed: int, candidates=None) -> list[LogRecord]:
    """Uniform-logging records; consecutive records are consecutive users of the environment."""
    if num_records < 0:
        raise ConfigError("num_records must be >= 0", "records")
    cands = tuple(range(env.M)) if candidates is None else tuple(int(m) for m in candidates)
    if not cands or min(cands) < 0 or max(cands) >= env.M or len(set(cands)) != len(cands):
        raise ConfigError("candidate set must hold distinct message ids", "candidates")
    if num_records == 0:
        return []
    slots = -(-num_records // env.N)
    x = arrivals_block(env, 1, slots).ravel()[:num_records]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), STREAM_POLICY])))
    actions = np.asarray(cands)[rng.integers(len(cands), size=num_records)]
    u, z = reward_draws(seed, 1, slots, env.N, env.payoff.noise)
    r = reward_from_draws(env.mu[x, actions], u.ravel()[:num_records], z.ravel()[:num_records],
                          env.payoff.noise, env.payoff.sigma)
    p = 1.0 / len(cands)
    return [LogRecord(i + 1, int(x[i]), int(actions[i]), float(r[i]), cands, p) for i in range(num_records)]


def write_log(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict()) + "\n")


def read_log(path) -> list[LogRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLogError(f"line {lineno}: {exc}") from None
            rec = LogRecord.from_json_dict(d)
            rec.validate()
            records.append(rec)
    return records


def log_shape(records) -> tuple[int, int]:
    """``(K, M)`` implied by the largest ids in a log."""
    if not records:
        raise MalformedLogError("empty log")
    K = 1 + max(r.context_id for r in records)
    M = 1 + max(max(r.candidate_set) for r in records)
    return K, M


def policy_for_log(name: str, records, delta_lower: float | None = None, nu_lower: float | None = None,
                   mu=None, horizon: int | None = None, **extra) -> Policy:
    """Single-user policy sized for ``records``; the horizon defaults to the expected matched rounds."""
    K, M = log_shape(records)
    if mu is not None:
        mu = np.asarray(mu, dtype=float)
        if mu.shape[0] < K or mu.shape[1] < M:
            raise ConfigError(f"payoff matrix {mu.shape} smaller than the log's ({K}, {M})", "mu")
        K, M = mu.shape
    horizon = horizon or max(1, len(records) // len(records[0].candidate_set))
    cfg = PolicyConfig(horizon=horizon, delta_lower=delta_lower, nu_lower=nu_lower, num_transmissions=1, **extra)
    return make_policy(name, cfg).reset(K, M, 1, mu, min_rate=1.0 / K)


def replay(policy: Policy, records) -> ReplaySummary:
    """Evaluate a single-user policy on a uniform log; decisions use ``t = matched_rounds + 1``."""
    if policy.N != 1 or policy.tau != 1:
        raise ConfigError("replay needs a single-user policy (N = tau = 1)", "policy")
    matched = 0
    clicks = 0.0
    total = 0.0
    for rec in records:
        rec.validate(policy.K)
        if max(rec.candidate_set) >= policy.M:
            raise MalformedLogError(f"record {rec.timestamp}: candidate outside the policy's {policy.M} messages")
        total += rec.reward
        k = np.array([rec.context_id], dtype=np.int64)
        (m,) = policy.decide([k], matched + 1)
        if m != rec.logged_action:
            continue
        matched += 1
        clicks += rec.reward
        policy.observe(k, [m], [rec.reward])
    n = len(records)
    return ReplaySummary(matched_rounds=matched, total_records=n,
                         policy_ctr=clicks / matched if matched else 0.0,
                         random_ctr=total / n if n else 0.0)
