import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from bcbandit import harness
from bcbandit.config import EnvSpec, PolicySpec, RunConfig, SweepConfig
from bcbandit.errors import ConfigError
from bcbandit.harness import aggregate, run, summarize, sweep

LATENT = EnvSpec(kind="latent", K=3, M=5, L=3, delta=0.25, N=4)


def test_single_timeslot_oracle():
    res = run(RunConfig(env=LATENT, policy=PolicySpec(name="oracle"), T=1, seed=0))
    assert res.summary["R"] == 0.0
    assert res.summary["rewards_recorded"] == 4


@pytest.mark.parametrize("name", ["alg1", "alg3", "context-free", "oracle", "random"])
def test_reward_conservation(name):
    res = run(RunConfig(env=LATENT, policy=PolicySpec(name=name), T=777, tau=2, seed=4))
    assert res.summary["rewards_recorded"] == 4 * 777
    assert int(res.policy.table.counts.sum()) == 4 * 777


def test_byte_identical_reruns():
    cfg = RunConfig(env=LATENT, policy=PolicySpec(name="alg3"), T=20_000, tau=2, seed=11)
    a, b = run(cfg), run(cfg)
    assert a.to_json() == b.to_json()
    assert a.series_csv() == b.series_csv()


def test_block_boundaries_do_not_matter(monkeypatch):
    cfg = RunConfig(env=LATENT, policy=PolicySpec(name="alg1"), T=5000, tau=2, seed=2, record_every=10)
    ref = run(cfg)
    monkeypatch.setattr(harness, "BLOCK_CELLS", 4 * 5 * 37)
    assert harness.block_size(4, 5, 5000) == 37
    other = run(cfg)
    assert other.to_json() == ref.to_json()
    assert other.series_csv() == ref.series_csv()


def test_seeds_are_independent():
    vals = [run(RunConfig(env=LATENT, policy=PolicySpec(name="random"), T=500, seed=s)).summary["R"]
            for s in range(5)]
    assert aggregate(vals)["std"] > 0


def test_env_seed_pins_structure():
    spec = EnvSpec(kind="latent", K=3, M=5, L=3, delta=0.25, N=4, seed=99)
    a = run(RunConfig(env=spec, policy=PolicySpec(name="oracle"), T=10, seed=1))
    b = run(RunConfig(env=spec, policy=PolicySpec(name="oracle"), T=10, seed=2))
    assert spec.build(1).mu.tolist() == spec.build(2).mu.tolist()
    assert a.summary["B"] != b.summary["B"] or a.summary["oracle_payoff"] != b.summary["oracle_payoff"]


def test_tau_above_n_rejected_before_running():
    with pytest.raises(ConfigError, match="tau"):
        RunConfig(env=LATENT, T=10, tau=5)


def test_tau_equal_n_has_no_broadcast_regret():
    res = run(RunConfig(env=LATENT, policy=PolicySpec(name="alg1"), T=2000, tau=4, seed=0))
    assert res.summary["B"] == 0.0


@settings(max_examples=100, deadline=None)
@given(vals=st.lists(st.floats(0, 1e6), min_size=1, max_size=30), data=st.data())
def test_aggregation_order_independent(vals, data):
    perm = data.draw(st.permutations(vals))
    a, b = aggregate(vals, ("mean", "std", "min", "max")), aggregate(perm, ("mean", "std", "min", "max"))
    assert a == b


def test_aggregate_values():
    out = aggregate([1.0, 2.0, 3.0, 4.0], ("mean", "std", "min", "max"))
    assert out == {"mean": 2.5, "std": pytest.approx(math.sqrt(5 / 3)), "min": 1.0, "max": 4.0}
    with pytest.raises(ConfigError):
        aggregate([1.0], ("median",))


def test_summarize_ignores_cell_order():
    cells = [{"tau": t, "seed": s, "R": float(t * 10 + s), "B": 0.5 * s, "L": 1.0 + s}
             for t, s in itertools.product((1, 2), range(4))]
    assert summarize(cells, (1, 2)) == summarize(list(reversed(cells)), (1, 2))


def test_sweep_oracle_broadcast_regret_decreases():
    cfg = SweepConfig(base=RunConfig(env=EnvSpec(kind="borda", K=4, N=4), policy=PolicySpec(name="oracle"),
                                     T=100), tau_values=(1, 2, 4), seeds=(0, 1), aggregation=("mean", "std", "max"))
    res = sweep(cfg)
    assert [r["tau"] for r in res.table] == [1, 2, 4]
    assert all(r["mean_R"] == 0.0 for r in res.table)
    B = [r["mean_B"] for r in res.table]
    assert B[0] >= B[1] >= B[2] == 0.0 and B[0] > B[2]
    assert res.csv().splitlines()[0] == "tau,mean_R,std_R,mean_B,mean_L,max_R"


def test_sweep_parallel_matches_serial():
    cfg = SweepConfig(base=RunConfig(env=LATENT, policy=PolicySpec(name="alg1"), T=2000),
                      tau_values=(1, 2), seeds=(0, 1))
    assert sweep(cfg, workers=2).to_json() == sweep(cfg).to_json()


def test_sweep_validation():
    base = RunConfig(env=LATENT, T=10)
    with pytest.raises(ConfigError):
        SweepConfig(base=base, tau_values=())
    with pytest.raises(ConfigError):
        SweepConfig(base=base, tau_values=(1, 9))
    with pytest.raises(ConfigError):
        SweepConfig(base=base, aggregation=("median",))


def test_unknown_engine():
    with pytest.raises(ConfigError):
        run(RunConfig(env=LATENT, T=10), engine="gpu")
