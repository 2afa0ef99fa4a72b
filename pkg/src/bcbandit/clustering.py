"""Complete-linkage agglomeration of messages into content types."""
from __future__ import annotations

import itertools
import json
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError


@dataclass(frozen=True)
class ContentTypePartition:
    types: tuple  # sorted tuples of 0-based ids, ordered by smallest member

    @property
    def representatives(self) -> tuple:
        return tuple(t[0] for t in self.types)

    @property
    def num_types(self) -> int:
        return len(self.types)

    @classmethod
    def from_labels(cls, labels) -> "ContentTypePartition":
        groups: dict[int, list[int]] = {}
        for m, lab in enumerate(labels):
            groups.setdefault(int(lab), []).append(m)
        return cls(types=tuple(sorted(tuple(g) for g in groups.values())))

    def labels(self) -> np.ndarray:
        out = np.empty(sum(len(t) for t in self.types), dtype=np.int64)
        for t in self.types:
            out[list(t)] = t[0]
        return out

    def to_json_dict(self) -> dict:
        return {
            "types": [[m + 1 for m in t] for t in self.types],
            "representatives": [m + 1 for m in self.representatives],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


@njit(cache=True)
def complete_linkage(dist, threshold):
    """Labels (smallest member id) after merging while the closest pair is below ``threshold``.

    Among equally close cluster pairs the one with the lexicographically
    smallest (min id, min id) merges first.  ``inf`` marks unknown distances.
    """
    M = dist.shape[0]
    d = dist.copy()
    active = np.ones(M, dtype=np.bool_)
    labels = np.arange(M)
    while True:
        best = np.inf
        bi = -1
        bj = -1
        for i in range(M):
            if not active[i]:
                continue
            for j in range(i + 1, M):
                if active[j] and d[i, j] < best:
                    best = d[i, j]
                    bi = i
                    bj = j
        if bi < 0 or not best < threshold:
            break
        for x in range(M):
            v = max(d[bi, x], d[bj, x])
            d[bi, x] = v
            d[x, bi] = v
        active[bj] = False
        for x in range(M):
            if labels[x] == bj:
                labels[x] = bi
    return labels


@njit(cache=True)
def clique_components(adj):
    """Components of ``adj`` and whether each one is a clique.

    When every component is a clique, complete linkage at any threshold
    separating the edge and non-edge distances returns exactly these
    components, whatever the individual distance values are.
    """
    M = adj.shape[0]
    labels = np.arange(M)
    for i in range(M):
        for j in range(i + 1, M):
            if adj[i, j]:
                a, b = labels[i], labels[j]
                if a != b:
                    lo, hi = min(a, b), max(a, b)
                    for x in range(M):
                        if labels[x] == hi:
                            labels[x] = lo
    for i in range(M):
        for j in range(i + 1, M):
            if (labels[i] == labels[j]) != adj[i, j]:
                return labels, False
    return labels, True


def distance_matrix(distances, num_messages: int | None = None) -> np.ndarray:
    """Symmetric matrix from a pair mapping or matrix; every pair must be present."""
    if not isinstance(distances, Mapping):
        d = np.array(distances, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ConfigError("distance matrix must be square", "distances")
        if not np.allclose(d, d.T, equal_nan=True):
            raise ConfigError("distance matrix must be symmetric", "distances")
        np.fill_diagonal(d, 0.0)
        return d
    if num_messages is None:
        num_messages = 1 + max((max(p) for p in distances), default=0)
    M = num_messages
    d = np.zeros((M, M))
    for a, b in itertools.combinations(range(M), 2):
        if (a, b) in distances:
            v = distances[(a, b)]
        elif (b, a) in distances:
            v = distances[(b, a)]
        else:
            raise ConfigError(f"missing distance for pair ({a}, {b})", "distances")
        if not v >= 0:
            raise ConfigError(f"distance for pair ({a}, {b}) must be >= 0", "distances")
        d[a, b] = d[b, a] = v
    return d


def cluster(distances, threshold: float, num_messages: int | None = None) -> ContentTypePartition:
    """Group messages whose complete-linkage distance stays below ``threshold``.

    ``distances`` maps unordered 0-based pairs to nonnegative estimates (or is
    a symmetric matrix).  Pass the half gap lower bound as ``threshold``.
    """
    if not threshold > 0:
        raise ConfigError("threshold must be positive", "threshold")
    d = distance_matrix(distances, num_messages)
    return ContentTypePartition.from_labels(complete_linkage(d, float(threshold)))


def recover_types_exact(mu) -> ContentTypePartition:
    """Ground truth: messages share a type iff their payoff columns are identical."""
    mu = np.asarray(getattr(mu, "mu", mu))
    labels = np.arange(mu.shape[1])
    for m in range(mu.shape[1]):
        for j in range(m):
            if np.array_equal(mu[:, j], mu[:, m]):
                labels[m] = labels[j]
                break
    return ContentTypePartition.from_labels(labels)
