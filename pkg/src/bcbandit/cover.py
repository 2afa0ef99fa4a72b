"""Pair covering designs: K subsets of size s covering every message pair.

The search climbs from a combinatorial lower bound on s.  At each size it
tries a deterministic greedy construction, then seeded restarts that
alternate randomized greedy with uniformly random subset collections.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, CoverGuardError

DEFAULT_BUDGET = 200
EXHAUSTIVE_MAX_M = 8
EXHAUSTIVE_MAX_K = 4
EXHAUSTIVE_MAX_WORK = 10**6


@dataclass(frozen=True)
class CoverSolution:
    subset_size: int
    subsets: tuple  # K sorted tuples of 0-based message ids
    assignment: dict  # (m1, m2) with m1 < m2 -> index of the first subset holding both

    @property
    def num_contexts(self) -> int:
        return len(self.subsets)

    def to_json_dict(self) -> dict:
        """1-based rendering used by the CLI."""
        return {
            "s": self.subset_size,
            "subsets": [[m + 1 for m in sub] for sub in self.subsets],
            "assignment": [[a + 1, b + 1, k + 1] for (a, b), k in sorted(self.assignment.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    def membership(self, num_messages: int) -> np.ndarray:
        inside = np.zeros((len(self.subsets), num_messages), dtype=np.bool_)
        for k, sub in enumerate(self.subsets):
            inside[k, list(sub)] = True
        return inside

    def pair_context_matrix(self, num_messages: int) -> np.ndarray:
        """``out[m1, m2]`` is the context assigned to the pair; -1 on the diagonal."""
        out = np.full((num_messages, num_messages), -1, dtype=np.int64)
        for (a, b), k in self.assignment.items():
            out[a, b] = out[b, a] = k
        return out


def appendix_s_bound(M: int, K: int) -> int:
    """Subset size at which K random subsets cover all pairs in expectation, capped at M."""
    if M < 2 or K < 1:
        raise ConfigError(f"need M >= 2 and K >= 1, got M={M}, K={K}")
    return min(M, math.ceil(M * math.sqrt(2.0 * math.log(M * K) / K)) + 1)


def size_lower_bound(M: int, K: int) -> int:
    """Smallest s that passes the pair-counting and Schönheim bounds for K blocks."""
    for s in range(2, M + 1):
        if K * s * (s - 1) < M * (M - 1):
            continue
        per_point = -(-(M - 1) // (s - 1))
        if K >= -(-(M * per_point) // s):
            return s
    return M


def _assign(subsets) -> dict:
    assignment = {}
    for k, sub in enumerate(subsets):
        for a, b in itertools.combinations(sub, 2):
            assignment.setdefault((a, b), k)
    return assignment


def verify_cover(solution: CoverSolution, M: int, K: int) -> bool:
    subsets = solution.subsets
    if len(subsets) != K or K == 0:
        return False
    s = solution.subset_size
    for sub in subsets:
        if len(sub) != s or len(set(sub)) != s:
            return False
        if any(not 0 <= m < M for m in sub):
            return False
    covered = set()
    for sub in subsets:
        covered.update(itertools.combinations(sorted(sub), 2))
    if len(covered) != M * (M - 1) // 2:
        return False
    for (a, b), k in solution.assignment.items():
        if not 0 <= k < K or a not in subsets[k] or b not in subsets[k]:
            return False
    return len(solution.assignment) == len(covered)


@njit(cache=True)
def _attempt(M, K, s, keys, random_subsets, blocks):
    uncovered = np.ones((M, M), dtype=np.bool_)
    for i in range(M):
        uncovered[i, i] = False
    degree = np.full(M, M - 1, dtype=np.int64)
    remaining = M * (M - 1) // 2
    in_block = np.zeros(M, dtype=np.bool_)
    gain = np.zeros(M, dtype=np.int64)
    for b in range(K):
        if random_subsets:
            order = np.argsort(-keys[b])
            for j in range(s):
                blocks[b, j] = order[j]
        else:
            in_block[:] = False
            gain[:] = 0
            for j in range(s):
                best = -1
                for e in range(M):
                    if in_block[e]:
                        continue
                    if best < 0 or gain[e] > gain[best] or (
                            gain[e] == gain[best] and (degree[e] > degree[best] or (
                                degree[e] == degree[best] and keys[b, e] > keys[b, best]))):
                        best = e
                blocks[b, j] = best
                in_block[best] = True
                for e in range(M):
                    if uncovered[e, best]:
                        gain[e] += 1
        for i in range(s):
            for j in range(i + 1, s):
                x, y = blocks[b, i], blocks[b, j]
                if uncovered[x, y]:
                    uncovered[x, y] = False
                    uncovered[y, x] = False
                    degree[x] -= 1
                    degree[y] -= 1
                    remaining -= 1
    return remaining == 0


@njit(cache=True)
def _search_size(M, K, s, keys):
    """Try greedy with id tie-breaks, then each row of ``keys`` as one restart."""
    blocks = np.empty((K, s), dtype=np.int64)
    base = np.empty((K, M))
    for b in range(K):
        for e in range(M):
            base[b, e] = -e
    if _attempt(M, K, s, base, False, blocks):
        return blocks, True
    for a in range(keys.shape[0]):
        if _attempt(M, K, s, keys[a], a % 2 == 1, blocks):
            return blocks, True
    return blocks, False


def _solution(s, blocks) -> CoverSolution:
    subsets = tuple(tuple(sorted(int(m) for m in row)) for row in blocks)
    return CoverSolution(subset_size=s, subsets=subsets, assignment=_assign(subsets))


def find_cover(M: int, K: int, budget: int = DEFAULT_BUDGET, seed: int = 0) -> CoverSolution:
    """Smallest subset size the search can certify, with its K subsets.

    Heuristic: the returned size is an upper bound on the true covering
    number's size, never below :func:`size_lower_bound`.
    """
    if M < 2 or K < 1:
        raise ConfigError(f"need M >= 2 and K >= 1, got M={M}, K={K}")
    if budget < 0:
        raise ConfigError("budget must be nonnegative", "budget")
    for s in range(size_lower_bound(M, K), M):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), M, K, s])))
        keys = rng.random((budget, K, M))
        blocks, ok = _search_size(M, K, s, keys)
        if ok:
            return _solution(s, blocks)
    return _solution(M, np.tile(np.arange(M), (K, 1)))


def _enumeration_size(M: int, K: int) -> int:
    total = 0
    for s in range(2, M + 1):
        n = math.comb(M, s)
        total += math.comb(n, min(K, n))
    return total


def exhaustive_min_s(M: int, K: int) -> int:
    """Exact minimum subset size by enumerating every collection of K subsets."""
    if M < 2 or K < 1:
        raise ConfigError(f"need M >= 2 and K >= 1, got M={M}, K={K}")
    if M > EXHAUSTIVE_MAX_M or (K > EXHAUSTIVE_MAX_K and _enumeration_size(M, K) > EXHAUSTIVE_MAX_WORK):
        raise CoverGuardError(f"exhaustive search limited to M <= {EXHAUSTIVE_MAX_M}, K <= {EXHAUSTIVE_MAX_K} "
                              f"(or at most {EXHAUSTIVE_MAX_WORK} collections)")
    pair_bit = {p: 1 << i for i, p in enumerate(itertools.combinations(range(M), 2))}
    full = (1 << len(pair_bit)) - 1
    for s in range(2, M + 1):
        masks = []
        for sub in itertools.combinations(range(M), s):
            mask = 0
            for p in itertools.combinations(sub, 2):
                mask |= pair_bit[p]
            masks.append(mask)
        for combo in itertools.combinations(masks, min(K, len(masks))):
            acc = 0
            for mask in combo:
                acc |= mask
            if acc == full:
                return s
    return M
