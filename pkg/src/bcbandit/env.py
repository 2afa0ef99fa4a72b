"""Synthetic environments: payoff grids, latent content types, arrivals and rewards.

Context and message ids are 0-based throughout the Python API.  All random
draws that a simulation consumes come from counter-based Philox streams keyed
by ``(seed, stream)``, so the draws belonging to timeslot ``t`` can be
regenerated without replaying timeslots ``1..t-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, InfeasibleGridError

STREAM_ARRIVALS = 0
STREAM_REWARDS = 1
STREAM_GROUPING = 2
STREAM_POLICY = 3
STREAM_ENV = 4
STREAM_CALLS = 5

NOISE_KINDS = ("bernoulli", "truncated-additive")
ARRIVAL_KINDS = ("iid-categorical", "uniform", "deterministic-cycle", "single-user-iid")

GRID_TOL = 1e-12


def uniform_block(seed: int, stream: int, t0: int, count: int, width: int) -> np.ndarray:
    """Uniform draws in [0, 1) for timeslots ``t0 .. t0+count-1`` (1-based).

    Each timeslot owns ``ceil(width / 4)`` Philox counter blocks, so the rows
    returned for a timeslot do not depend on how the horizon is chunked.
    """
    if t0 < 1:
        raise ConfigError("timeslots start at 1", "t")
    per_slot = -(-width // 4)
    bitgen = np.random.Philox(np.random.SeedSequence([int(seed), int(stream)]))
    if t0 > 1:
        bitgen.advance((t0 - 1) * per_slot)
    draws = np.random.Generator(bitgen).random(count * per_slot * 4)
    return draws.reshape(count, per_slot * 4)[:, :width]


def grid_levels(delta: float) -> np.ndarray:
    """All admissible payoff values ``delta, 2*delta, ... <= 1``."""
    n = int(math.floor(1.0 / delta + 1e-9))
    return np.arange(1, n + 1) * delta


def on_grid(values, delta: float) -> bool:
    values = np.asarray(values, dtype=float)
    return bool(np.all(np.abs(np.round(values / delta) * delta - values) <= GRID_TOL))


@dataclass(frozen=True)
class PayoffModel:
    """Expected payoff matrix ``mu[k, m]`` plus the reward noise law.

    ``grid_exempt`` marks models whose entries are not multiples of
    ``grid_step`` (the spike construction, relaxed explicit matrices).
    """

    mu: np.ndarray
    grid_step: float
    noise: str = "bernoulli"
    sigma: float = 0.0
    grid_exempt: bool = False

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 2 or mu.shape[0] < 1 or mu.shape[1] < 1:
            raise ConfigError("mu must be a non-empty K x M matrix", "mu")
        if not 0.0 < self.grid_step <= 1.0:
            raise ConfigError(f"grid step must lie in (0, 1], got {self.grid_step}", "delta")
        if np.any(mu <= 0.0) or np.any(mu > 1.0 + GRID_TOL):
            raise ConfigError("expected payoffs must lie in (0, 1]", "mu")
        if not self.grid_exempt and not on_grid(mu, self.grid_step):
            raise ConfigError(f"payoffs are not multiples of delta={self.grid_step}", "mu")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"unknown noise law {self.noise!r}; expected one of {NOISE_KINDS}", "noise")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative", "sigma")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def num_contexts(self) -> int:
        return self.mu.shape[0]

    @property
    def num_messages(self) -> int:
        return self.mu.shape[1]

    @property
    def noise_code(self) -> int:
        return NOISE_KINDS.index(self.noise)


@dataclass(frozen=True)
class LatentStructure:
    """Messages partitioned into ``num_types`` content types."""

    type_of: np.ndarray
    type_payoff: np.ndarray

    def __post_init__(self):
        type_of = np.asarray(self.type_of, dtype=np.int64)
        payoff = np.asarray(self.type_payoff, dtype=float)
        num_types = payoff.shape[1]
        if type_of.min() < 0 or type_of.max() >= num_types:
            raise ConfigError("type ids out of range", "type_of")
        if len(np.unique(type_of)) != num_types:
            raise ConfigError("every content type must be nonempty", "type_of")
        for k, row in enumerate(payoff):
            if len(np.unique(row)) != num_types:
                raise ConfigError(f"type payoffs collide in context {k}", "type_payoff")
        type_of.setflags(write=False)
        payoff.setflags(write=False)
        object.__setattr__(self, "type_of", type_of)
        object.__setattr__(self, "type_payoff", payoff)

    @property
    def num_types(self) -> int:
        return self.type_payoff.shape[1]

    def induced_mu(self) -> np.ndarray:
        return self.type_payoff[:, self.type_of]

    def groups(self) -> list[list[int]]:
        """Types as sorted message lists, ordered by smallest member."""
        out: dict[int, list[int]] = {}
        for m, l in enumerate(self.type_of):
            out.setdefault(int(l), []).append(m)
        return sorted(out.values())


@dataclass(frozen=True)
class ArrivalProcess:
    """Distribution of the per-timeslot context vector of ``group_size`` users.

    ``rates`` are expected users per context per timeslot and sum to
    ``group_size``.  For ``deterministic-cycle`` they describe the long-run
    average.
    """

    kind: str
    num_contexts: int
    group_size: int
    rates: tuple = ()

    def __post_init__(self):
        if self.kind not in ARRIVAL_KINDS:
            raise ConfigError(f"unknown arrival kind {self.kind!r}; expected one of {ARRIVAL_KINDS}", "arrivals")
        if self.num_contexts < 1:
            raise ConfigError("need at least one context", "K")
        if self.group_size < 1:
            raise ConfigError("need at least one user per timeslot", "N")
        if self.kind == "single-user-iid" and self.group_size != 1:
            raise ConfigError("single-user-iid arrivals require N = 1", "N")
        if self.kind in ("iid-categorical", "single-user-iid") and self.rates:
            rates = np.asarray(self.rates, dtype=float)
            if rates.shape != (self.num_contexts,) or np.any(rates < 0):
                raise ConfigError("rates must be K nonnegative numbers", "rates")
            if abs(rates.sum() - self.group_size) > 1e-9:
                raise ConfigError(f"rates must sum to N={self.group_size}", "rates")
            object.__setattr__(self, "rates", tuple(float(r) for r in rates))
        else:
            share = self.group_size / self.num_contexts
            object.__setattr__(self, "rates", tuple([share] * self.num_contexts))

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray(self.rates) / self.group_size

    @property
    def min_rate(self) -> float:
        return min(self.rates)

    def contexts_from_uniform(self, t0: int, u: np.ndarray) -> np.ndarray:
        """Map a ``(count, N)`` uniform block starting at timeslot ``t0`` to contexts."""
        count, n = u.shape
        if self.kind == "deterministic-cycle":
            t = np.arange(t0, t0 + count, dtype=np.int64)[:, None]
            return ((t - 1) * n + np.arange(n)) % self.num_contexts
        cum = np.cumsum(self.probabilities)
        x = np.searchsorted(cum, u, side="right")
        return np.minimum(x, self.num_contexts - 1).astype(np.int64)


@dataclass
class EnvironmentInstance:
    """A payoff model, an arrival process and the seed of its random streams.

    The only mutable part is the private generator behind
    :func:`sample_reward`; one instance belongs to one simulation run.
    """

    payoff: PayoffModel
    arrivals: ArrivalProcess
    rng_seed: int = 0
    latent: LatentStructure | None = None
    kind: str = "explicit"
    _call_rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.arrivals.num_contexts != self.payoff.num_contexts:
            raise ConfigError("arrival process and payoff matrix disagree on K", "K")
        if self.latent is not None:
            if not np.array_equal(self.latent.induced_mu(), self.payoff.mu):
                raise ConfigError("mu is not the matrix induced by the latent structure", "mu")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("seed must be a 64-bit nonnegative integer", "seed")

    @property
    def mu(self) -> np.ndarray:
        return self.payoff.mu

    @property
    def K(self) -> int:
        return self.payoff.num_contexts

    @property
    def M(self) -> int:
        return self.payoff.num_messages

    @property
    def N(self) -> int:
        return self.arrivals.group_size


def arrivals_block(env: EnvironmentInstance, t0: int, count: int) -> np.ndarray:
    """Contexts of all users for timeslots ``t0 .. t0+count-1`` as a ``(count, N)`` array."""
    u = uniform_block(env.rng_seed, STREAM_ARRIVALS, t0, count, env.N)
    return env.arrivals.contexts_from_uniform(t0, u)


def sample_arrivals(env: EnvironmentInstance, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Contexts ``x_t`` of the N users arriving at timeslot ``t`` and their histogram ``y_t``."""
    if t < 1:
        raise ConfigError("timeslots start at 1", "t")
    x = arrivals_block(env, t, 1)[0]
    return x, np.bincount(x, minlength=env.K)


def reward_from_draws(mu, u, z, noise: str, sigma: float):
    """Turn per-user uniform and normal draws into rewards with mean ``mu``.

    Truncated-additive noise clips ``sigma * z`` symmetrically at
    ``min(mu, 1 - mu)``, which keeps rewards in [0, 1] and the mean at ``mu``.
    """
    mu = np.asarray(mu, dtype=float)
    if noise == "bernoulli":
        return (np.asarray(u) < mu).astype(float)
    half_width = np.minimum(mu, 1.0 - mu)
    return mu + np.clip(sigma * np.asarray(z), -half_width, half_width)


def reward_draws(seed: int, t0: int, count: int, width: int, noise: str):
    """Per-user uniforms and (for additive noise) standard normals for a block."""
    u = uniform_block(seed, STREAM_REWARDS, t0, count, width)
    z = ndtri(u) if noise == "truncated-additive" else np.zeros_like(u)
    return np.ascontiguousarray(u), np.ascontiguousarray(z)


def sample_reward(env: EnvironmentInstance, k: int, m: int) -> float:
    """One i.i.d. reward for context ``k`` and message ``m`` from the instance's own stream."""
    if not 0 <= k < env.K:
        raise ConfigError(f"context id {k} outside [0, {env.K})", "k")
    if not 0 <= m < env.M:
        raise ConfigError(f"message id {m} outside [0, {env.M})", "m")
    if env._call_rng is None:
        env._call_rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([int(env.rng_seed), STREAM_CALLS])))
    u = env._call_rng.random()
    z = ndtri(u) if env.payoff.noise == "truncated-additive" else 0.0
    return float(reward_from_draws(env.mu[k, m], u, z, env.payoff.noise, env.payoff.sigma))


def _arrival_process(kind, K, N, rates=()):
    if kind == "single-user-iid" and N != 1:
        raise ConfigError("single-user-iid arrivals require N = 1", "N")
    return ArrivalProcess(kind=kind, num_contexts=K, group_size=N, rates=tuple(rates or ()))


def make_spike_env(K: int, N: int, epsilon: float, seed: int = 0, noise: str = "bernoulli",
                   sigma: float = 0.0, arrivals: str = "uniform") -> EnvironmentInstance:
    """Each context ``k`` pays 1 for message ``k`` and ``epsilon`` for every other message.

    The matrix is off the payoff grid by construction and is flagged
    ``grid_exempt``; it exists to exercise broadcast-loss accounting.
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}", "epsilon")
    if K < 1:
        raise ConfigError("need at least one context", "K")
    mu = np.full((K, K), float(epsilon))
    np.fill_diagonal(mu, 1.0)
    payoff = PayoffModel(mu=mu, grid_step=1.0 - epsilon, noise=noise, sigma=sigma, grid_exempt=True)
    return EnvironmentInstance(payoff, _arrival_process(arrivals, K, N), seed, kind="spike")


def make_borda_env(K: int, N: int, seed: int = 0, noise: str = "bernoulli", sigma: float = 0.0,
                   arrivals: str = "deterministic-cycle") -> EnvironmentInstance:
    """Cyclic Latin square of scaled Borda scores: ``mu[k, m] = ((k + m) mod M + 1) / M``.

    The default arrivals bring one user of every context per timeslot.
    """
    if K != N:
        raise ConfigError(f"Borda model needs M = K = N, got K={K}, N={N}", "N")
    M = K
    idx = np.arange(M)
    mu = ((idx[:, None] + idx[None, :]) % M + 1) / M
    payoff = PayoffModel(mu=mu, grid_step=1.0 / M, noise=noise, sigma=sigma)
    return EnvironmentInstance(payoff, _arrival_process(arrivals, K, N), seed, kind="borda")


def make_latent_env(K: int, M: int, L: int, delta: float, rng_seed: int = 0, N: int = 1,
                    noise: str = "bernoulli", sigma: float = 0.0, arrivals: str = "uniform",
                    rates=()) -> EnvironmentInstance:
    """Random environment with ``L`` content types of near-equal size.

    Per context, the ``L`` type payoffs are distinct grid levels drawn without
    replacement, so different types differ by at least ``delta`` everywhere.
    """
    if not 1 <= L <= M:
        raise ConfigError(f"need 1 <= L <= M, got L={L}, M={M}", "L")
    if not 0.0 < delta <= 1.0:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}", "delta")
    levels = grid_levels(delta)
    if L > len(levels):
        raise InfeasibleGridError(f"L={L} exceeds the {len(levels)} grid levels available at delta={delta}", "L")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(rng_seed), STREAM_ENV])))
    type_of = rng.permutation(np.arange(M) % L)
    type_payoff = np.stack([rng.choice(levels, size=L, replace=False) for _ in range(K)])
    latent = LatentStructure(type_of=type_of, type_payoff=type_payoff)
    payoff = PayoffModel(mu=latent.induced_mu(), grid_step=delta, noise=noise, sigma=sigma)
    return EnvironmentInstance(payoff, _arrival_process(arrivals, K, N, rates), rng_seed,
                               latent=latent, kind="latent")


def make_explicit_env(mu, delta: float, N: int = 1, seed: int = 0, noise: str = "bernoulli",
                      sigma: float = 0.0, arrivals: str = "uniform", rates=(),
                      relaxed: bool = False) -> EnvironmentInstance:
    """Environment from a given matrix.

    With ``relaxed=True`` entries need not sit on the grid; distinct values in
    a row must instead differ by at least ``delta``.
    """
    mu = np.asarray(mu, dtype=float)
    if relaxed:
        for k, row in enumerate(mu):
            vals = np.unique(row)
            if len(vals) > 1 and np.min(np.diff(vals)) < delta - GRID_TOL:
                raise ConfigError(f"row {k} has distinct payoffs closer than delta={delta}", "mu")
    payoff = PayoffModel(mu=mu, grid_step=delta, noise=noise, sigma=sigma, grid_exempt=relaxed)
    return EnvironmentInstance(payoff, _arrival_process(arrivals, mu.shape[0], N, rates), seed)
