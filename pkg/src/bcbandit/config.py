"""Run and sweep configuration: dataclasses, validation, YAML/JSON loading.

Config file layout (YAML or JSON)::

    env:    {kind: latent, K: 2, M: 8, L: 2, delta: 0.25, N: 2}
    policy: {name: alg3, delta_lower: 0.25}
    run:    {T: 400000, tau: 1, seed: 0}
    sweep:  {tau_values: [1, 2, 4], seeds: [0, 1, 2]}   # sweep only

Ids inside files (``mu`` rows aside) are 1-based; ``policy.action`` is the
only id a config carries.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import env as envmod
from .errors import ConfigError
from .policies import POLICIES, PolicyConfig

ENV_KINDS = ("spike", "borda", "latent", "explicit")
AGGREGATIONS = ("mean", "std", "min", "max")
DEFAULT_ARRIVALS = {"spike": "uniform", "borda": "deterministic-cycle", "latent": "uniform", "explicit": "uniform"}


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "latent"
    K: int | None = None
    M: int | None = None
    N: int = 1
    L: int | None = None
    delta: float | None = None
    epsilon: float = 0.01
    noise: str = "bernoulli"
    sigma: float = 0.1
    arrivals: str | None = None
    rates: tuple = ()
    mu: tuple | None = None
    relaxed: bool = False
    seed: int | None = None  # structure seed for latent envs; None: the run seed

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ConfigError(f"unknown env kind {self.kind!r}; expected one of {ENV_KINDS}", "env.kind")
        if self.noise not in envmod.NOISE_KINDS:
            raise ConfigError(f"unknown noise {self.noise!r}; expected one of {envmod.NOISE_KINDS}", "env.noise")
        if self.arrivals is not None and self.arrivals not in envmod.ARRIVAL_KINDS:
            raise ConfigError(f"unknown arrivals {self.arrivals!r}", "env.arrivals")
        if not isinstance(self.N, int) or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N}", "env.N")
        required = {"spike": ("K",), "borda": ("K",), "latent": ("K", "M", "L", "delta"), "explicit": ("mu", "delta")}
        for name in required[self.kind]:
            if getattr(self, name) is None:
                raise ConfigError(f"env kind {self.kind} needs {name}", f"env.{name}")
        if self.mu is not None:
            object.__setattr__(self, "mu", tuple(tuple(float(v) for v in row) for row in self.mu))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    def resolved_arrivals(self) -> str:
        return self.arrivals or DEFAULT_ARRIVALS[self.kind]

    def build(self, run_seed: int) -> envmod.EnvironmentInstance:
        """Environment whose random streams are keyed by ``run_seed``."""
        arrivals = self.resolved_arrivals()
        common = dict(noise=self.noise, sigma=self.sigma, arrivals=arrivals)
        if self.kind == "spike":
            e = envmod.make_spike_env(self.K, self.N, self.epsilon, run_seed, **common)
        elif self.kind == "borda":
            e = envmod.make_borda_env(self.K, self.N, run_seed, **common)
        elif self.kind == "latent":
            structure_seed = run_seed if self.seed is None else self.seed
            e = envmod.make_latent_env(self.K, self.M, self.L, self.delta, structure_seed, N=self.N,
                                       rates=self.rates, **common)
            e = dataclasses.replace(e, rng_seed=run_seed)
        else:
            e = envmod.make_explicit_env(np.array(self.mu), self.delta, self.N, run_seed, rates=self.rates,
                                         relaxed=self.relaxed, **common)
        return e

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["arrivals"] = self.resolved_arrivals()
        out["rates"] = list(self.rates)
        out["mu"] = None if self.mu is None else [list(r) for r in self.mu]
        return out


@dataclass(frozen=True)
class PolicySpec:
    name: str = "alg1"
    delta_lower: float | None = None  # None: the environment's grid step
    nu_lower: float | None = None  # None: the smallest arrival rate
    exploration_cap: float = 0.5
    action: int = 1  # 1-based, fixed policy only
    cover_budget: int = 200

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ConfigError(f"unknown policy {self.name!r}; expected one of {sorted(POLICIES)}", "policy.name")
        if not 0.0 < self.exploration_cap <= 1.0:
            raise ConfigError("exploration_cap must lie in (0, 1]", "policy.exploration_cap")

    def policy_config(self, env: envmod.EnvironmentInstance, T: int, tau: int, seed: int) -> PolicyConfig:
        return PolicyConfig(
            horizon=T, delta_lower=self.resolved_delta(env), nu_lower=self.resolved_nu(env),
            num_transmissions=tau, exploration_cap=self.exploration_cap, cover_budget=self.cover_budget,
            cover_seed=seed, action=self.action - 1, seed=seed)

    def resolved_delta(self, env) -> float:
        return float(self.delta_lower if self.delta_lower is not None else env.payoff.grid_step)

    def resolved_nu(self, env) -> float:
        return float(self.nu_lower if self.nu_lower is not None else env.arrivals.min_rate)


@dataclass(frozen=True)
class RunConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    policy: PolicySpec = field(default_factory=PolicySpec)
    T: int = 1000
    tau: int = 1
    seed: int = 0
    record_every: int | None = None

    def __post_init__(self):
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T}", "run.T")
        if not isinstance(self.tau, int) or self.tau < 1:
            raise ConfigError(f"tau must be a positive integer, got {self.tau}", "run.tau")
        if self.tau > self.env.N:
            raise ConfigError(f"tau={self.tau} exceeds N={self.env.N}; need tau <= N", "run.tau")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**63:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}", "run.seed")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigError("record_every must be >= 1", "run.record_every")

    @property
    def stride(self) -> int:
        return self.record_every or max(1, self.T // 10_000)

    def resolved(self, env: envmod.EnvironmentInstance | None = None) -> dict:
        """Full config with every default filled in."""
        env = env or self.env.build(self.seed)
        pol = dataclasses.asdict(self.policy)
        pol["delta_lower"] = self.policy.resolved_delta(env)
        pol["nu_lower"] = self.policy.resolved_nu(env)
        return {"env": self.env.to_dict(), "policy": pol,
                "run": {"T": self.T, "tau": self.tau, "seed": self.seed, "record_every": self.stride}}


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    tau_values: tuple = (1,)
    seeds: tuple = (0,)
    aggregation: tuple = ("mean", "std")

    def __post_init__(self):
        object.__setattr__(self, "tau_values", tuple(int(t) for t in self.tau_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "aggregation", tuple(self.aggregation))
        if not self.tau_values:
            raise ConfigError("tau_values must be nonempty", "sweep.tau_values")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty", "sweep.seeds")
        for tau in self.tau_values:
            if not 1 <= tau <= self.base.env.N:
                raise ConfigError(f"tau={tau} must lie in [1, N={self.base.env.N}]", "sweep.tau_values")
        for a in self.aggregation:
            if a not in AGGREGATIONS:
                raise ConfigError(f"unknown aggregation {a!r}", "sweep.aggregation")

    def cells(self):
        for tau in self.tau_values:
            for seed in self.seeds:
                yield dataclasses.replace(self.base, tau=tau, seed=seed)

    def to_dict(self) -> dict:
        base = self.base.resolved()
        base["sweep"] = {"tau_values": list(self.tau_values), "seeds": list(self.seeds),
                         "aggregation": list(self.aggregation)}
        return base


def _section(cls, data: dict | None, prefix: str):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", f"{prefix}.{unknown[0]}")
    return cls(**data)


def run_config_from_dict(data: dict) -> RunConfig:
    unknown = sorted(set(data) - {"env", "policy", "run", "sweep"})
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}", unknown[0])
    try:
        env = _section(EnvSpec, data.get("env"), "env")
        policy = _section(PolicySpec, data.get("policy"), "policy")
        run = dict(data.get("run") or {})
        unknown = sorted(set(run) - {"T", "tau", "seed", "record_every"})
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}", f"run.{unknown[0]}")
        return RunConfig(env=env, policy=policy, **run)
    except TypeError as exc:
        raise ConfigError(str(exc), "config") from None


def sweep_config_from_dict(data: dict) -> SweepConfig:
    base = run_config_from_dict({k: v for k, v in data.items() if k != "sweep"})
    sweep = dict(data.get("sweep") or {})
    unknown = sorted(set(sweep) - {"tau_values", "seeds", "aggregation"})
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", f"sweep.{unknown[0]}")
    return SweepConfig(base=base, **sweep)


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "config") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", "config") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping", "config")
    return data
