"""Learning, broadcast and total regret bookkeeping.

Per timeslot, with users split into subgroups and ``a_s`` the message sent
to subgroup ``s``:

* learning regret ``R_step = sum_s [max_m S_s(m) - S_s(a_s)]`` where
  ``S_s(m)`` is the true payoff sum of subgroup ``s`` for message ``m``;
* broadcast regret ``B_step = sum_n max_m mu(x_n, m) - sum_s max_m S_s(m)``,
  the price of serving subgroups instead of individual users.

Both are expected-value (pseudo) regrets.  The realized learning regret
replaces ``S_s(a_s)`` by the rewards actually drawn.
"""
from __future__ import annotations

import csv
import io
import json

import numpy as np

from .errors import ConfigError

SERIES_COLUMNS = ("t", "R_step", "B_step", "R_cum", "B_cum", "L_cum")
MATCH_TOL = 1e-9


def _group_sums(values, perm, bounds):
    """Sum ``values[b, n, ...]`` over the users of each subgroup: shape ``(B, tau, ...)``."""
    idx = perm.reshape(perm.shape + (1,) * (values.ndim - 2))
    ordered = np.take_along_axis(values, idx, axis=1)
    return np.add.reduceat(ordered, bounds[:-1], axis=1)


def _check_grouping(N, perm, bounds):
    if bounds[0] != 0 or bounds[-1] != N or np.any(np.diff(bounds) <= 0):
        raise ConfigError("grouping bounds must split [0, N) into nonempty runs", "grouping")
    if not np.array_equal(np.sort(perm, axis=1), np.broadcast_to(np.arange(N), perm.shape)):
        raise ConfigError("grouping must be a permutation of the users", "grouping")


def _as_grouping(N, groups):
    """Turn a list of index sets into ``(perm, bounds)``."""
    order = [int(n) for g in groups for n in g]
    sizes = [len(g) for g in groups]
    perm = np.array([order], dtype=np.int64)
    bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    _check_grouping(N, perm, bounds)
    return perm, bounds


def _gap(hi, lo):
    # sums of the same payoffs in a different order can differ by a few ulps
    d = hi - lo
    return np.where(d > MATCH_TOL, d, 0.0)


def block_regrets(mu, X, A, perm, bounds):
    """Vectorised regret terms for a block of timeslots.

    Returns ``(R_step, B_step, chosen, best)`` where ``chosen`` and ``best``
    are ``(B, tau)`` arrays of the subgroups' true payoff sums for the sent
    message and the best message.
    """
    mu = np.asarray(mu, dtype=float)
    S = _group_sums(mu[X], perm, bounds)  # (B, tau, M)
    best = S.max(axis=2)
    lead = np.take_along_axis(perm, bounds[:-1][None, :].repeat(len(perm), 0), axis=1)
    sent = np.take_along_axis(A, lead, axis=1)
    chosen = np.take_along_axis(S, sent[..., None], axis=2)[..., 0]
    user_best = _group_sums(mu.max(axis=1)[X], perm, bounds)
    R = _gap(best, chosen).sum(axis=1)
    Bv = _gap(user_best, best).sum(axis=1)
    return R, Bv, chosen, best


def learning_regret_step(mu, contexts, messages, groups) -> float:
    """Learning regret of one timeslot; ``messages[s]`` goes to the users in ``groups[s]``."""
    x = np.asarray(contexts, dtype=np.int64)
    perm, bounds = _as_grouping(len(x), groups)
    if len(messages) != len(groups):
        raise ConfigError("one message per subgroup required", "messages")
    A = np.empty((1, len(x)), dtype=np.int64)
    for s, g in enumerate(groups):
        A[0, list(g)] = messages[s]
    return float(block_regrets(mu, x[None, :], A, perm, bounds)[0][0])


def exploitation_regret_step(mu, contexts, groups) -> float:
    """Broadcast regret of one timeslot for the given subgroups; no policy involved."""
    x = np.asarray(contexts, dtype=np.int64)
    perm, bounds = _as_grouping(len(x), groups)
    A = np.zeros((1, len(x)), dtype=np.int64)
    return float(block_regrets(mu, x[None, :], A, perm, bounds)[1][0])


def _cumulative(start: float, steps: np.ndarray) -> np.ndarray:
    # sequential accumulation from the carried total, independent of block boundaries
    return np.cumsum(np.concatenate([[start], steps]))[1:]


class RegretLedger:
    """Cumulative regrets, a thinned time series and per-phase statistics for one run."""

    def __init__(self, horizon: int, record_every: int | None = None, num_contexts: int = 1):
        if horizon < 1:
            raise ConfigError("horizon must be >= 1", "T")
        self.horizon = horizon
        self.record_every = record_every or max(1, horizon // 10_000)
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1", "record_every")
        self.t = 0
        self.R = 0.0
        self.B = 0.0
        self.realized_R = 0.0
        self.policy_payoff = 0.0
        self.oracle_payoff = 0.0
        self.rewards_recorded = 0
        self.exploit_groups = 0
        self.exploit_matches = 0
        self.phase_counts = np.zeros(3, dtype=np.int64)  # subgroup decisions per phase
        self.user_phase_counts = np.zeros((num_contexts, 3), dtype=np.int64)
        self.last_exploration_t = 0
        self.R_at_exploration_end = 0.0
        self.checkpoints = {q: max(1, (q * horizon) // 4) for q in (1, 2, 3)}
        self.R_at = {}
        self.series: list[tuple] = []

    def add_block(self, mu, X, A, R, P, perm, bounds) -> None:
        count = X.shape[0]
        t = np.arange(self.t + 1, self.t + count + 1)
        if t[-1] > self.horizon:
            raise ConfigError("ledger received more timeslots than the horizon", "T")
        r_step, b_step, chosen, best = block_regrets(mu, X, A, perm, bounds)
        r_cum = _cumulative(self.R, r_step)
        b_cum = _cumulative(self.B, b_step)

        lead = np.take_along_axis(perm, bounds[:-1][None, :].repeat(count, 0), axis=1)
        phases = np.take_along_axis(P, lead, axis=1)
        self.phase_counts += np.bincount(phases.ravel(), minlength=3)[:3]
        np.add.at(self.user_phase_counts, (X.ravel(), P.ravel()), 1)
        exploit = phases == 2
        self.exploit_groups += int(exploit.sum())
        self.exploit_matches += int((exploit & (chosen >= best - MATCH_TOL)).sum())
        explore_rows = np.flatnonzero((phases < 2).any(axis=1))
        if explore_rows.size:
            last = explore_rows[-1]
            self.last_exploration_t = int(t[last])
            self.R_at_exploration_end = float(r_cum[last])

        for q, tq in self.checkpoints.items():
            if t[0] <= tq <= t[-1]:
                self.R_at[q] = float(r_cum[tq - t[0]])
        keep = (t % self.record_every == 0) | (t == self.horizon)
        for i in np.flatnonzero(keep):
            self.series.append((int(t[i]), float(r_step[i]), float(b_step[i]), float(r_cum[i]),
                                float(b_cum[i]), float(r_cum[i] + b_cum[i])))

        self.t = int(t[-1])
        self.R = float(r_cum[-1])
        self.B = float(b_cum[-1])
        self.policy_payoff = float(_cumulative(self.policy_payoff, chosen.sum(axis=1))[-1])
        self.oracle_payoff = float(_cumulative(self.oracle_payoff, best.sum(axis=1))[-1])
        self.realized_R = float(_cumulative(self.realized_R, best.sum(axis=1) - R.sum(axis=1))[-1])
        self.rewards_recorded += R.size

    @property
    def L(self) -> float:
        return self.R + self.B

    @property
    def oracle_match_rate(self) -> float | None:
        return self.exploit_matches / self.exploit_groups if self.exploit_groups else None

    def summary(self) -> dict:
        if self.t != self.horizon:
            raise ConfigError(f"run incomplete: {self.t} of {self.horizon} timeslots", "T")
        return {
            "T": self.horizon,
            "R": self.R,
            "B": self.B,
            "L": self.L,
            "realized_R": self.realized_R,
            "policy_payoff": self.policy_payoff,
            "oracle_payoff": self.oracle_payoff,
            "rewards_recorded": self.rewards_recorded,
            "phase_counts": {"explore": int(self.phase_counts[0]), "explore2": int(self.phase_counts[1]),
                             "exploit": int(self.phase_counts[2])},
            "user_phase_counts": self.user_phase_counts.tolist(),
            "exploit_decisions": self.exploit_groups,
            "oracle_match_rate": self.oracle_match_rate,
            "last_exploration_t": self.last_exploration_t,
            "R_at_exploration_end": self.R_at_exploration_end,
            "R_at_quarters": [self.R_at.get(q) for q in (1, 2, 3)],
        }

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in self.series:
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
        return buf.getvalue()

    def summary_json(self, config: dict | None = None) -> str:
        return json.dumps({"config": config or {}, "summary": self.summary()}, indent=2, sort_keys=True)
