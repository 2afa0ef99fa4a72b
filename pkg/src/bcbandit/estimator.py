"""Per-(context, message) sample counts, reward sums and confidence radii."""
from __future__ import annotations

import csv
import hashlib
import math

import numpy as np
from numba import njit

from .errors import ConfigError, UndefinedEstimateError


@njit(cache=True)
def record_sample(counts, sums, means, context_counts, k, m, r):
    counts[k, m] += 1
    sums[k, m] += r
    means[k, m] = sums[k, m] / counts[k, m]
    context_counts[k] += 1


class EstimatorTable:
    """Running sufficient statistics for every (context, message) cell.

    Means are derived from ``(sum, count)`` pairs; a cell with no samples has
    no mean and :meth:`mean` returns ``None`` for it.
    """

    def __init__(self, num_contexts: int, num_messages: int):
        if num_contexts < 1 or num_messages < 1:
            raise ConfigError("table needs at least one context and one message")
        self.counts = np.zeros((num_contexts, num_messages), dtype=np.int64)
        self.sums = np.zeros((num_contexts, num_messages), dtype=np.float64)
        self.means = np.zeros((num_contexts, num_messages), dtype=np.float64)
        self.context_counts = np.zeros(num_contexts, dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def _check_ids(self, k, m):
        K, M = self.shape
        if not 0 <= k < K:
            raise ConfigError(f"context id {k} outside [0, {K})", "k")
        if not 0 <= m < M:
            raise ConfigError(f"message id {m} outside [0, {M})", "m")

    def record(self, k: int, m: int, r: float) -> "EstimatorTable":
        self._check_ids(k, m)
        if not 0.0 <= r <= 1.0:
            raise ConfigError(f"reward {r} outside [0, 1]", "r")
        record_sample(self.counts, self.sums, self.means, self.context_counts, k, m, float(r))
        return self

    def count(self, k: int, m: int) -> int:
        self._check_ids(k, m)
        return int(self.counts[k, m])

    def mean(self, k: int, m: int) -> float | None:
        self._check_ids(k, m)
        if self.counts[k, m] == 0:
            return None
        return float(self.means[k, m])

    def lookup(self, k: int, m: int) -> tuple[float | None, int]:
        return self.mean(k, m), self.count(k, m)

    def radius(self, k: int, m: int, t: float) -> float:
        """Hoeffding radius ``sqrt(ln t / count)`` used by the clustering thresholds."""
        if t < 2:
            raise ConfigError(f"radius needs t >= 2, got {t}", "t")
        n = self.count(k, m)
        if n == 0:
            raise UndefinedEstimateError(f"no samples for context {k}, message {m}")
        return math.sqrt(math.log(t) / n)

    def pair_distance(self, m1: int, m2: int, k: int) -> float:
        """``|mean(k, m1) - mean(k, m2)|`` measured in the pair's assigned context ``k``."""
        a, b = self.mean(k, m1), self.mean(k, m2)
        if a is None or b is None:
            raise UndefinedEstimateError(f"pair ({m1}, {m2}) has an unsampled member in context {k}")
        return abs(a - b)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.counts, self.sums, self.context_counts):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def to_csv(self, path) -> None:
        """Rows ``context, message, count, sum`` with 1-based ids."""
        K, M = self.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["context", "message", "count", "sum"])
            for k in range(K):
                for m in range(M):
                    w.writerow([k + 1, m + 1, int(self.counts[k, m]), repr(float(self.sums[k, m]))])

    @classmethod
    def from_csv(cls, path) -> "EstimatorTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        K = max(int(r["context"]) for r in rows)
        M = max(int(r["message"]) for r in rows)
        table = cls(K, M)
        for r in rows:
            k, m = int(r["context"]) - 1, int(r["message"]) - 1
            table.counts[k, m] = int(r["count"])
            table.sums[k, m] = float(r["sum"])
        nz = table.counts > 0
        table.means[nz] = table.sums[nz] / table.counts[nz]
        table.context_counts[:] = table.counts.sum(axis=1)
        return table
