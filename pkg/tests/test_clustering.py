import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from bcbandit.clustering import (ContentTypePartition, clique_components, cluster, complete_linkage,
                                 recover_types_exact)
from bcbandit.env import make_latent_env
from bcbandit.errors import ConfigError


def scipy_partition(d, threshold):
    """Reference: scipy complete linkage cut just below the threshold."""
    M = d.shape[0]
    if M == 1:
        return {(0,)}
    Z = linkage(squareform(d, checks=False), method="complete")
    labels = fcluster(Z, t=np.nextafter(threshold, 0), criterion="distance")
    groups = {}
    for m, lab in enumerate(labels):
        groups.setdefault(lab, []).append(m)
    return {tuple(g) for g in groups.values()}


def test_hand_example():
    p = cluster({(0, 1): 0.05, (0, 2): 0.50, (1, 2): 0.45}, 0.2)
    assert p.types == ((0, 1), (2,)) and p.representatives == (0, 2)


def test_trivial_cases():
    assert cluster({}, 0.1, num_messages=1).types == ((0,),)
    far = {p: 0.5 for p in itertools.combinations(range(4), 2)}
    assert cluster(far, 0.2).num_types == 4
    assert cluster(far, 0.6).num_types == 1


def test_missing_pair_and_bad_threshold():
    with pytest.raises(ConfigError):
        cluster({(0, 1): 0.1}, 0.2, num_messages=3)
    with pytest.raises(ConfigError):
        cluster({(0, 1): 0.1}, 0.0)


def test_strict_threshold():
    assert cluster({(0, 1): 0.2}, 0.2).num_types == 2
    assert cluster({(0, 1): 0.1999}, 0.2).num_types == 1


def test_tie_breaking_lowest_pair_first():
    # (0,1) and (2,3) tie; merging (0,1) first then (2,3); final cross distances stay large
    d = {(0, 1): 0.1, (2, 3): 0.1, (0, 2): 0.15, (0, 3): 0.5, (1, 2): 0.5, (1, 3): 0.5}
    assert cluster(d, 0.2).types == ((0, 1), (2, 3))
    # (0,1) merges first and then blocks 2 from joining 1
    d = {(0, 1): 0.1, (1, 2): 0.1, (0, 2): 0.3}
    assert cluster(d, 0.2).types == ((0, 1), (2,))


def test_recover_exact():
    env = make_latent_env(3, 7, 1, 0.2, rng_seed=4)
    assert recover_types_exact(env.payoff).num_types == 1
    env = make_latent_env(3, 5, 5, 0.2, rng_seed=4)
    assert recover_types_exact(env.mu).num_types == 5


def test_json():
    p = ContentTypePartition.from_labels([0, 0, 2, 0])
    assert p.to_json_dict() == {"types": [[1, 2, 4], [3]], "representatives": [1, 3]}
    assert np.array_equal(p.labels(), [0, 0, 2, 0])


@settings(max_examples=150, deadline=None)
@given(M=st.integers(1, 12), seed=st.integers(0, 2**32), threshold=st.floats(0.01, 0.9))
def test_matches_scipy_reference(M, seed, threshold):
    rng = np.random.default_rng(seed)
    d = rng.random((M, M))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0)
    mine = cluster(d, threshold)
    assert set(mine.types) == scipy_partition(d, threshold)


@settings(max_examples=60, deadline=None)
@given(M=st.integers(2, 10), seed=st.integers(0, 2**32))
def test_invariant_to_pair_order(M, seed):
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(M), 2))
    vals = {p: float(v) for p, v in zip(pairs, rng.random(len(pairs)))}
    rev = {(b, a): vals[(a, b)] for a, b in reversed(pairs)}
    assert cluster(vals, 0.4) == cluster(rev, 0.4)


@settings(max_examples=80, deadline=None)
@given(M=st.integers(1, 12), seed=st.integers(0, 2**32))
def test_clean_graph_shortcut_agrees_with_linkage(M, seed):
    rng = np.random.default_rng(seed)
    threshold = 0.3
    d = rng.random((M, M)) * 0.6
    if rng.random() < 0.5:  # planted clean structure
        lab = rng.integers(0, 3, size=M)
        d = np.where(lab[:, None] == lab[None, :], rng.random((M, M)) * 0.29, 0.3 + rng.random((M, M)) * 0.5)
    d = np.triu(d, 1)
    d = d + d.T
    labels, clean = clique_components(d < threshold)
    if clean:
        assert np.array_equal(labels, complete_linkage(d, threshold))
