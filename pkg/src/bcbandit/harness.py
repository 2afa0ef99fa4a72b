"""Timeslot loop, seeded runs, and tau sweeps with seed aggregation."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, SweepConfig
from .env import arrivals_block, reward_draws, reward_from_draws
from .errors import ConfigError
from .policies import Policy, group_bounds, grouping_block, make_policy
from .regret import RegretLedger

ENGINES = ("compiled", "stepwise")
BLOCK_CELLS = 1 << 21


@dataclass
class RunResult:
    config: dict
    summary: dict
    diagnostics: dict
    ledger: RegretLedger
    policy: Policy

    def series_csv(self) -> str:
        return self.ledger.series_csv()

    def to_dict(self) -> dict:
        return {"config": self.config, "summary": self.summary, "diagnostics": self.diagnostics}

    def csv(self) -> str:
        return self.series_csv()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def block_size(N: int, M: int, T: int) -> int:
    return max(1, min(T, 65_536, BLOCK_CELLS // (N * M)))


def _stepwise_block(policy, t0, X, perm, bounds, U, Z, env):
    A = np.empty(X.shape, dtype=np.int64)
    P = np.empty(X.shape, dtype=np.int64)
    R = np.empty(X.shape, dtype=np.float64)
    tau = len(bounds) - 1
    for b in range(X.shape[0]):
        groups = [X[b, perm[b, bounds[s]:bounds[s + 1]]] for s in range(tau)]
        msgs = policy.decide(groups, t0 + b)
        for s in range(tau):
            users = perm[b, bounds[s]:bounds[s + 1]]
            A[b, users] = msgs[s]
            P[b, users] = policy.last_phases[s]
        R[b] = reward_from_draws(env.mu[X[b], A[b]], U[b], Z[b], env.payoff.noise, env.payoff.sigma)
        policy.observe(X[b], A[b], R[b])
    return A, R, P


def run(config: RunConfig, engine: str = "compiled") -> RunResult:
    """Simulate ``config.T`` timeslots; deterministic in ``config.seed``."""
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; expected one of {ENGINES}", "engine")
    env = config.env.build(config.seed)
    T, tau, seed = config.T, config.tau, config.seed
    if tau > env.N:
        raise ConfigError(f"tau={tau} exceeds N={env.N}; need tau <= N", "run.tau")
    policy = make_policy(config.policy.name, config.policy.policy_config(env, T, tau, seed)).bind(env)
    ledger = RegretLedger(T, config.stride, env.K)
    bounds = group_bounds(env.N, tau)
    mu = np.ascontiguousarray(env.mu)
    noise_code, sigma = env.payoff.noise_code, float(env.payoff.sigma)
    step = block_size(env.N, env.M, T)
    for t0 in range(1, T + 1, step):
        count = min(step, T - t0 + 1)
        X = np.ascontiguousarray(arrivals_block(env, t0, count))
        perm = grouping_block(seed, t0, count, env.N, tau)
        U, Z = reward_draws(seed, t0, count, env.N, env.payoff.noise)
        if engine == "compiled":
            A, R, P = policy.run_block(t0, X, perm, bounds, U, Z, mu, noise_code, sigma)
        else:
            A, R, P = _stepwise_block(policy, t0, X, perm, bounds, U, Z, env)
        ledger.add_block(mu, X, A, R, P, perm, bounds)
    if ledger.rewards_recorded != env.N * T or int(policy.table.counts.sum()) != env.N * T:
        raise RuntimeError("reward conservation violated")
    return RunResult(config=config.resolved(env), summary=ledger.summary(),
                     diagnostics=policy.diagnostics(), ledger=ledger, policy=policy)


def _run_summary(config: RunConfig) -> dict:
    res = run(config)
    return {"tau": config.tau, "seed": config.seed, **res.summary, "diagnostics": res.diagnostics}


def aggregate(values, stats=("mean", "std")) -> dict:
    """Order-independent statistics: sums use exact ``math.fsum``."""
    vals = [float(v) for v in values]
    if not vals:
        return {s: None for s in stats}
    n = len(vals)
    mean = math.fsum(vals) / n
    out = {}
    for s in stats:
        if s == "mean":
            out[s] = mean
        elif s == "std":
            out[s] = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        elif s == "min":
            out[s] = min(vals)
        elif s == "max":
            out[s] = max(vals)
        else:
            raise ConfigError(f"unknown aggregation {s!r}", "aggregation")
    return out


@dataclass
class SweepResult:
    config: dict
    cells: list
    table: list

    def columns(self, aggregation) -> list[str]:
        cols = ["tau", "mean_R", "std_R", "mean_B", "mean_L"]
        cols += [f"{s}_R" for s in ("min", "max") if s in aggregation]
        return cols

    def to_dict(self) -> dict:
        return {"config": self.config, "table": self.table, "cells": self.cells}

    def csv(self) -> str:
        aggregation = self.config.get("sweep", {}).get("aggregation", ("mean", "std"))
        return table_csv(self.table, self.columns(aggregation))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def table_csv(rows, columns) -> str:
    """CSV text for a sweep table; no rows gives just the header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([row[c] if isinstance(row[c], int) else repr(float(row[c])) for c in columns])
    return buf.getvalue()


def summarize(cells: list, tau_values, aggregation=("mean", "std")) -> list[dict]:
    stats = tuple(dict.fromkeys(("mean", "std") + tuple(aggregation)))
    table = []
    for tau in tau_values:
        mine = [c for c in cells if c["tau"] == tau]
        if not mine:
            continue
        R = aggregate([c["R"] for c in mine], stats)
        row = {"tau": tau, "mean_R": R["mean"], "std_R": R["std"],
               "mean_B": aggregate([c["B"] for c in mine], ("mean",))["mean"],
               "mean_L": aggregate([c["L"] for c in mine], ("mean",))["mean"]}
        for s in ("min", "max"):
            if s in aggregation:
                row[f"{s}_R"] = R[s]
        row["runs"] = len(mine)
        table.append(row)
    return table


def sweep(config: SweepConfig, workers: int = 1) -> SweepResult:
    """Independent runs for every (tau, seed) cell, aggregated per tau."""
    cells_cfg = list(config.cells())
    if workers > 1 and len(cells_cfg) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_summary, cells_cfg))
    else:
        cells = [_run_summary(c) for c in cells_cfg]
    return SweepResult(config=config.to_dict(), cells=cells,
                       table=summarize(cells, config.tau_values, config.aggregation))
