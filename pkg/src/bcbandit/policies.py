"""Recommendation policies for broadcast and per-user transmission.

A policy is bound to a problem size with :meth:`Policy.reset`, then driven
either one timeslot at a time (``decide`` then ``observe``) or a block of
timeslots at a time through ``run_block``.  Both paths execute the same
compiled decision rules from :mod:`bcbandit._kernels`.

Broadcast policies (``alg1``, ``alg3``, ``context-free``, ``oracle``) pick one
message per subgroup; with ``tau`` subgroups the decision for subgroup ``s``
of timeslot ``t`` runs at virtual time ``(t - 1) * tau + s + 1`` against a
horizon of ``tau * T`` virtual timeslots.  Per-user policies (``alg2``,
``per-context``) need ``tau == N``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .clustering import ContentTypePartition, clique_components, complete_linkage
from .cover import find_cover
from .env import STREAM_GROUPING, STREAM_POLICY, uniform_block
from .errors import ConfigError
from .estimator import EstimatorTable, record_sample

PHASE_NAMES = ("explore", "explore2", "exploit")


@dataclass(frozen=True)
class PolicyConfig:
    horizon: int
    delta_lower: float | None = None
    nu_lower: float | None = None  # None: use the environment's smallest arrival rate
    num_transmissions: int = 1
    exploration_cap: float = 0.5
    cover_budget: int = 200
    cover_seed: int = 0
    action: int = 0  # fixed policy only
    seed: int = 0  # random policy only

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}", "T")
        if self.num_transmissions < 1:
            raise ConfigError(f"tau must be >= 1, got {self.num_transmissions}", "tau")
        if self.delta_lower is not None and not 0.0 < self.delta_lower <= 1.0:
            raise ConfigError(f"delta_lower must lie in (0, 1], got {self.delta_lower}", "delta_lower")
        if self.nu_lower is not None and not self.nu_lower > 0:
            raise ConfigError(f"nu_lower must be positive, got {self.nu_lower}", "nu_lower")
        if not 0.0 < self.exploration_cap <= 1.0:
            raise ConfigError(f"exploration_cap must lie in (0, 1], got {self.exploration_cap}", "exploration_cap")


def group_bounds(N: int, tau: int) -> np.ndarray:
    """Offsets of ``tau`` balanced subgroups; the first ``N mod tau`` are one larger."""
    if not 1 <= tau <= N:
        raise ConfigError(f"tau must satisfy 1 <= tau <= N={N}, got {tau}", "tau")
    sizes = np.full(tau, N // tau, dtype=np.int64)
    sizes[: N % tau] += 1
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


def grouping_block(seed: int, t0: int, count: int, N: int, tau: int) -> np.ndarray:
    """User orderings for a block of timeslots; subgroups are consecutive runs of each row."""
    if tau == 1 or tau == N:
        return np.tile(np.arange(N, dtype=np.int64), (count, 1))
    u = uniform_block(seed, STREAM_GROUPING, t0, count, N)
    return np.argsort(u, axis=1, kind="stable").astype(np.int64)


def split_into_subgroups(N: int, tau: int, seed: int) -> list[np.ndarray]:
    """Random balanced partition of users ``0..N-1`` into ``tau`` subgroups."""
    bounds = group_bounds(N, tau)
    order = np.argsort(uniform_block(seed, STREAM_GROUPING, 1, 1, N)[0], kind="stable")
    return [np.sort(order[bounds[s]:bounds[s + 1]]) for s in range(tau)]


class Policy:
    name = "base"
    per_user = False
    needs_gap = True

    def __init__(self, config: PolicyConfig):
        self.config = config
        self.last_phases = None

    # -- setup ------------------------------------------------------------
    def reset(self, K: int, M: int, N: int, mu=None, min_rate: float | None = None) -> "Policy":
        cfg = self.config
        tau = cfg.num_transmissions
        if tau > N:
            raise ConfigError(f"tau={tau} exceeds N={N}; need tau <= N", "tau")
        if self.per_user and tau != N:
            raise ConfigError(f"policy {self.name} decides per user and needs tau = N = {N}", "tau")
        if self.needs_gap and cfg.delta_lower is None:
            raise ConfigError(f"policy {self.name} needs delta_lower", "delta_lower")
        self.K, self.M, self.N, self.tau = K, M, N, tau
        self.group_size = -(-N // tau)
        nu = cfg.nu_lower if cfg.nu_lower is not None else min_rate
        self.nu_lower = nu
        self.mu = None if mu is None else np.ascontiguousarray(mu, dtype=np.float64)
        self.table = EstimatorTable(self.num_estimated_contexts, M)
        self.ctx_map = self.context_map(K)
        self._setup()
        return self

    def bind(self, env) -> "Policy":
        return self.reset(env.K, env.M, env.N, env.mu, env.arrivals.min_rate)

    @property
    def num_estimated_contexts(self) -> int:
        return self.K

    def context_map(self, K: int) -> np.ndarray:
        return np.arange(K, dtype=np.int64)

    def _setup(self):
        pass

    def _require_nu(self) -> float:
        if self.nu_lower is None:
            raise ConfigError(f"policy {self.name} needs nu_lower", "nu_lower")
        return self.nu_lower

    # -- stepwise interface -------------------------------------------------
    def decide(self, groups, t: int) -> np.ndarray:
        """One message per subgroup for timeslot ``t``; ``groups`` holds each subgroup's contexts."""
        if t < 1:
            raise ConfigError("timeslots start at 1", "t")
        if len(groups) != self.tau:
            raise ConfigError(f"expected {self.tau} subgroups, got {len(groups)}", "groups")
        out = np.empty(self.tau, dtype=np.int64)
        phases = np.empty(self.tau, dtype=np.int64)
        for s, ctxs in enumerate(groups):
            ctxs = np.asarray(ctxs, dtype=np.int64)
            if ctxs.size == 0 or ctxs.min() < 0 or ctxs.max() >= self.K:
                raise ConfigError("subgroup contexts must be nonempty ids in [0, K)", "groups")
            out[s], phases[s] = self._decide_group(self.ctx_map[ctxs], (t - 1) * self.tau + s + 1)
        self.last_phases = phases
        return out

    def observe(self, contexts, messages, rewards) -> None:
        """Record every user's (context, message, reward) in user order."""
        t = self.table
        for k, m, r in zip(contexts, messages, rewards):
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"reward {r} outside [0, 1]", "r")
            k, m = int(self.ctx_map[int(k)]), int(m)
            record_sample(t.counts, t.sums, t.means, t.context_counts, k, m, float(r))
            self._after_record(k, m)

    def _after_record(self, k: int, m: int):
        pass

    def _decide_group(self, ctxs, vt):
        raise NotImplementedError

    # -- compiled interface -------------------------------------------------
    def run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma):
        """Decide, draw and record a block of timeslots; returns messages, rewards, phases."""
        A = np.empty(X.shape, dtype=np.int64)
        R = np.empty(X.shape, dtype=np.float64)
        P = np.empty(X.shape, dtype=np.int64)
        self._run_block(t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P)
        return A, R, P

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        raise NotImplementedError

    def _table_args(self):
        t = self.table
        return self.ctx_map, t.counts, t.sums, t.means, t.context_counts

    # -- reporting ------------------------------------------------------------
    def diagnostics(self) -> dict:
        return {"policy": self.name}

    def state_digest(self) -> str:
        h = hashlib.sha256(self.table.digest().encode())
        for arr in self._extra_state():
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def _extra_state(self):
        return ()


class RoundRobinBroadcast(Policy):
    """Round-robin exploration of every message, then the best estimated sum per subgroup."""

    name = "alg1"

    def _setup(self):
        cfg = self.config
        nu = self._require_nu() * self.group_size / self.N
        d = cfg.delta_lower
        horizon = self.tau * cfg.horizon
        Ng, M, K = self.group_size, self.M, self.num_estimated_contexts
        self.C = 16.0 / (nu * d * d)
        self.T1 = self.C * Ng * Ng * M * math.log(M * Ng * K * horizon)
        cap = cfg.exploration_cap * horizon
        self.budget_capped = self.T1 > cap
        self.budget = int(math.floor(min(self.T1, cap)))
        self.candidates = np.arange(M, dtype=np.int64)

    def _decide_group(self, ctxs, vt):
        t = self.table
        return kern.alg1_group(t.counts, t.means, ctxs, vt, self.budget, self.candidates)

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        kern.block_alg1(t0, X, perm, bounds, U, Z, mu, noise_code, sigma, *self._table_args(),
                        self.budget, A, R, P)

    def diagnostics(self) -> dict:
        return {"policy": self.name, "C": self.C, "T1": self.T1, "exploration_budget": self.budget,
                "budget_capped": bool(self.budget_capped), "group_size": self.group_size,
                "nu_lower": self.nu_lower}


class ContextFreeBroadcast(RoundRobinBroadcast):
    """The round-robin scheme with every context pooled into one."""

    name = "context-free"

    @property
    def num_estimated_contexts(self) -> int:
        return 1

    def context_map(self, K: int) -> np.ndarray:
        return np.zeros(K, dtype=np.int64)

    def _require_nu(self) -> float:
        # the pooled context receives every user
        return float(self.N)


class LatentBroadcast(Policy):
    """Round robin over all messages, cluster into types, round robin over types, exploit."""

    name = "alg3"

    def _setup(self):
        cfg = self.config
        nu = self._require_nu() * self.group_size / self.N
        d = cfg.delta_lower
        horizon = self.tau * cfg.horizon
        Ng, M, K = self.group_size, self.M, self.K
        self.P1 = 32.0 * K * M / (d * d) * math.log(Ng * horizon * M)
        cap = cfg.exploration_cap * horizon
        self.fparams = np.array([self.P1, cap, 16.0 * Ng * Ng / (nu * d * d), Ng * K * horizon, d / 2.0])
        self.fstate = np.zeros(1)
        self.istate = np.array([0, 0, int(math.floor(min(self.P1, cap))), 0], dtype=np.int64)
        self.reps = np.zeros(M, dtype=np.int64)
        self.labels = np.arange(M, dtype=np.int64)
        self.all_messages = np.arange(M, dtype=np.int64)

    def _decide_group(self, ctxs, vt):
        t = self.table
        return kern.alg3_group(t.counts, t.means, ctxs, vt, self.all_messages, self.reps,
                               self.istate, self.fparams, self.fstate, self.labels)

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        kern.block_alg3(t0, X, perm, bounds, U, Z, mu, noise_code, sigma, *self._table_args(),
                        self.reps, self.istate, self.fparams, self.fstate, self.labels, A, R, P)

    @property
    def clustered(self) -> bool:
        return bool(self.istate[0])

    @property
    def partition(self) -> ContentTypePartition | None:
        return ContentTypePartition.from_labels(self.labels) if self.clustered else None

    def diagnostics(self) -> dict:
        cap = self.fparams[1]
        out = {"policy": self.name, "P1": self.P1, "phase1_end": int(self.istate[2]),
               "budget_capped": bool(self.P1 > cap), "clustered": self.clustered}
        if self.clustered:
            P2 = float(self.fstate[0])
            out.update({"P2": P2, "phase2_end": int(self.istate[3]), "num_types": int(self.istate[1]),
                        "partition": self.partition.to_json_dict(),
                        "budget_capped": bool(self.P1 + P2 > cap)})
        return out

    def _extra_state(self):
        return (self.istate, self.fstate, self.labels)


class LatentPerUser(Policy):
    """Per-user latent bandit: covering-design exploration, type clustering, exploitation."""

    name = "alg2"
    per_user = True

    def _setup(self):
        d = self.config.delta_lower
        M, K = self.M, self.K
        self.dconst = 32.0 / (d * d)
        self.threshold = d / 2.0
        if M >= 2:
            self.cover = find_cover(M, K, budget=self.config.cover_budget, seed=self.config.cover_seed)
            self.members = np.array(self.cover.subsets, dtype=np.int64)
            self.pair_ctx = self.cover.pair_context_matrix(M)
            self.inside = self.cover.membership(M)
        else:
            self.cover = None
            self.members = np.zeros((K, 1), dtype=np.int64)
            self.pair_ctx = np.full((1, 1), -1, dtype=np.int64)
            self.inside = np.ones((K, 1), dtype=np.bool_)
        self.adj = np.zeros((M, M), dtype=np.bool_)
        self.reps = np.zeros(M, dtype=np.int64)
        self.cstate = np.array([0, 1, 0], dtype=np.int64)

    def threshold_count(self, t: int) -> float:
        return self.dconst * math.log(t)

    def _decide_group(self, ctxs, vt):
        if ctxs.size != 1:
            raise ConfigError("per-user policies take singleton subgroups", "groups")
        t = self.table
        return kern.alg2_user(t.counts, t.means, ctxs[0], vt, self.dconst, self.members, self.reps,
                              self.cstate, self.adj, self.pair_ctx, self.threshold)

    def _after_record(self, k, m):
        t = self.table
        kern.alg2_after_record(t.counts, t.means, k, m, self.members, self.inside, self.pair_ctx,
                               self.adj, self.cstate, self.threshold)

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        kern.block_alg2(t0, X, U, Z, mu, noise_code, sigma, *self._table_args(), self.dconst,
                        self.members, self.inside, self.pair_ctx, self.adj, self.reps, self.cstate,
                        self.threshold, A, R, P)

    @property
    def partition(self) -> ContentTypePartition:
        """Current type estimate from the same pair distances the decisions use."""
        labels, clean = clique_components(self.adj)
        if not clean:
            t = self.table
            d = np.full((self.M, self.M), np.inf)
            np.fill_diagonal(d, 0.0)
            for a in range(self.M):
                for b in range(a + 1, self.M):
                    k = self.pair_ctx[a, b]
                    if t.counts[k, a] > 0 and t.counts[k, b] > 0:
                        d[a, b] = d[b, a] = abs(t.means[k, a] - t.means[k, b])
            labels = complete_linkage(d, self.threshold)
        return ContentTypePartition.from_labels(labels)

    def diagnostics(self) -> dict:
        out = {"policy": self.name, "D_constant": self.dconst,
               "partition": self.partition.to_json_dict()}
        if self.cover is not None:
            out["cover_size"] = self.cover.subset_size
        return out

    def _extra_state(self):
        # the cluster cache is derived from the table and the adjacency
        return (self.adj,)


class PerContextExplore(Policy):
    """Independent explore-then-exploit over all messages in each context."""

    name = "per-context"
    per_user = True

    def _setup(self):
        d = self.config.delta_lower
        self.dconst = 32.0 / (d * d)

    def threshold_count(self, t: int) -> float:
        return self.dconst * math.log(t)

    def _decide_group(self, ctxs, vt):
        if ctxs.size != 1:
            raise ConfigError("per-user policies take singleton subgroups", "groups")
        t = self.table
        return kern.per_context_user(t.counts, t.means, ctxs[0], vt, self.dconst)

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        kern.block_per_context(t0, X, U, Z, mu, noise_code, sigma, *self._table_args(), self.dconst, A, R, P)

    def diagnostics(self) -> dict:
        return {"policy": self.name, "D_constant": self.dconst}


class OracleBroadcast(Policy):
    """Knows ``mu``: sends each subgroup the message with the largest true payoff sum."""

    name = "oracle"
    needs_gap = False

    def _setup(self):
        if self.mu is None:
            raise ConfigError("oracle policy needs the payoff matrix", "mu")

    def _decide_group(self, ctxs, vt):
        return kern.oracle_group(self.mu, ctxs), kern.EXPLOIT

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        kern.block_oracle(t0, X, perm, bounds, U, Z, mu, noise_code, sigma, *self._table_args(), A, R, P)


class FixedAction(Policy):
    """Always sends ``config.action``."""

    name = "fixed"
    needs_gap = False

    def _setup(self):
        if not 0 <= self.config.action < self.M:
            raise ConfigError(f"action {self.config.action} outside [0, {self.M})", "action")

    def _decide_group(self, ctxs, vt):
        return self.config.action, kern.EXPLOIT

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        _python_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P)


class UniformRandom(Policy):
    """Uniform choice per subgroup from its own seeded stream."""

    name = "random"
    needs_gap = False

    def _setup(self):
        self.rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([int(self.config.seed), STREAM_POLICY])))

    def _decide_group(self, ctxs, vt):
        return int(self.rng.integers(self.M)), kern.EXPLOIT

    def _run_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
        _python_block(self, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P)


def _python_block(policy, t0, X, perm, bounds, U, Z, mu, noise_code, sigma, A, R, P):
    for b in range(X.shape[0]):
        groups = [X[b, perm[b, bounds[s]:bounds[s + 1]]] for s in range(len(bounds) - 1)]
        msgs = policy.decide(groups, t0 + b)
        for s in range(len(bounds) - 1):
            A[b, perm[b, bounds[s]:bounds[s + 1]]] = msgs[s]
            P[b, perm[b, bounds[s]:bounds[s + 1]]] = policy.last_phases[s]
        for n in range(X.shape[1]):
            R[b, n] = kern.draw_reward(mu[X[b, n], A[b, n]], U[b, n], Z[b, n], noise_code, sigma)
        policy.observe(X[b], A[b], R[b])


POLICIES = {cls.name: cls for cls in (RoundRobinBroadcast, LatentPerUser, LatentBroadcast, OracleBroadcast,
                                      ContextFreeBroadcast, PerContextExplore, FixedAction, UniformRandom)}


def make_policy(name: str, config: PolicyConfig) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; expected one of {sorted(POLICIES)}", "policy") from None
    return cls(config)
