"""Compiled decision rules and timeslot loops for the simulation engine.

Every decision rule is a ``@njit`` function over plain arrays.  The block
loops call them directly, and the policy classes call the same functions one
decision at a time, so both engines share a single implementation of each
rule.  Phase codes: 0 first exploration, 1 second exploration, 2 exploitation.

Within a timeslot all groups decide from the state at the start of the
timeslot; rewards are recorded afterwards in user order.  Group ``s`` of
timeslot ``t`` runs at virtual time ``(t - 1) * tau + s + 1``.
"""
import math

import numpy as np
from numba import njit

from .clustering import clique_components, complete_linkage
from .estimator import record_sample

EXPLORE, EXPLORE2, EXPLOIT = 0, 1, 2


@njit(cache=True)
def draw_reward(mu, u, z, noise_code, sigma):
    if noise_code == 0:
        return 1.0 if u < mu else 0.0
    w = min(mu, 1.0 - mu)
    e = sigma * z
    if e > w:
        e = w
    elif e < -w:
        e = -w
    return mu + e


@njit(cache=True)
def group_argmax(counts, means, ctxs, candidates):
    """Candidate with the largest estimated payoff sum over the group; lowest id on ties.

    A candidate with an unsampled cell for any group member scores -inf.
    """
    best = -1
    best_val = -np.inf
    for m in candidates:
        total = 0.0
        defined = True
        for c in ctxs:
            if counts[c, m] == 0:
                defined = False
                break
            total += means[c, m]
        if defined and (best < 0 or total > best_val):
            best = m
            best_val = total
    if best < 0:
        best = candidates[0]
    return best


@njit(cache=True)
def oracle_group(mu, ctxs):
    M = mu.shape[1]
    best = 0
    best_val = -np.inf
    for m in range(M):
        total = 0.0
        for c in ctxs:
            total += mu[c, m]
        if total > best_val:
            best = m
            best_val = total
    return best


@njit(cache=True)
def alg1_group(counts, means, ctxs, vt, budget, candidates):
    M = candidates.shape[0]
    if vt <= budget:
        return candidates[(vt - 1) % M], EXPLORE
    return group_argmax(counts, means, ctxs, candidates), EXPLOIT


@njit(cache=True)
def max_context_distances(counts, means):
    """Pairwise ``max_k |mean(k, a) - mean(k, b)|`` over contexts sampling both; inf if none."""
    K, M = counts.shape
    d = np.full((M, M), np.inf)
    for a in range(M):
        d[a, a] = 0.0
        for b in range(a + 1, M):
            best = -1.0
            for k in range(K):
                if counts[k, a] > 0 and counts[k, b] > 0:
                    v = abs(means[k, a] - means[k, b])
                    if v > best:
                        best = v
            if best >= 0.0:
                d[a, b] = best
                d[b, a] = best
    return d


@njit(cache=True)
def reps_from_labels(labels, reps):
    n = 0
    for m in range(labels.shape[0]):
        if labels[m] == m:
            reps[n] = m
            n += 1
    return n


# alg3 integer state: [clustered, num_reps, phase1_last, phase2_last]
# alg3 float params: [P1, cap, c2, log_base, threshold]; float state: [P2]
@njit(cache=True)
def alg3_cluster(counts, means, reps, istate, fparams, fstate, labels_out):
    labels = complete_linkage(max_context_distances(counts, means), fparams[4])
    labels_out[:] = labels
    L = reps_from_labels(labels, reps)
    p2 = fparams[2] * L * math.log(L * fparams[3])
    fstate[0] = p2
    istate[0] = 1
    istate[1] = L
    istate[3] = int(math.floor(min(fparams[0] + p2, fparams[1])))


@njit(cache=True)
def alg3_group(counts, means, ctxs, vt, all_messages, reps, istate, fparams, fstate, labels_out):
    if vt <= istate[2]:
        return all_messages[(vt - 1) % all_messages.shape[0]], EXPLORE
    if istate[0] == 0:
        alg3_cluster(counts, means, reps, istate, fparams, fstate, labels_out)
    L = istate[1]
    if vt <= istate[3]:
        return reps[(vt - istate[2] - 1) % L], EXPLORE2
    return group_argmax(counts, means, ctxs, reps[:L]), EXPLOIT


# alg2 cache state: [valid, clean, num_reps]
@njit(cache=True)
def alg2_refresh(counts, means, reps, cstate, adj, pair_ctx, threshold):
    if cstate[0] == 1:
        return
    labels, clean = clique_components(adj)
    if not clean:
        M = counts.shape[1]
        d = np.full((M, M), np.inf)
        for a in range(M):
            d[a, a] = 0.0
            for b in range(a + 1, M):
                k = pair_ctx[a, b]
                if counts[k, a] > 0 and counts[k, b] > 0:
                    d[a, b] = abs(means[k, a] - means[k, b])
                    d[b, a] = d[a, b]
        labels = complete_linkage(d, threshold)
    cstate[2] = reps_from_labels(labels, reps)
    cstate[1] = 1 if clean else 0
    cstate[0] = 1


@njit(cache=True)
def alg2_after_record(counts, means, k, m, members, inside, pair_ctx, adj, cstate, threshold):
    """Refresh the pair adjacency touched by a new sample of ``(k, m)``."""
    if not inside[k, m]:
        return
    for j in members[k]:
        if j == m or pair_ctx[m, j] != k:
            continue
        close = counts[k, j] > 0 and abs(means[k, m] - means[k, j]) < threshold
        if close != adj[m, j]:
            adj[m, j] = close
            adj[j, m] = close
            cstate[0] = 0
    if cstate[1] == 0:
        cstate[0] = 0


@njit(cache=True)
def alg2_user(counts, means, k, vt, dconst, members, reps, cstate, adj, pair_ctx, threshold):
    D = dconst * math.log(vt)
    for m in members[k]:
        if counts[k, m] < D:
            return m, EXPLORE
    alg2_refresh(counts, means, reps, cstate, adj, pair_ctx, threshold)
    L = cstate[2]
    for i in range(L):
        if counts[k, reps[i]] < D:
            return reps[i], EXPLORE2
    best = -1
    best_val = -np.inf
    for i in range(L):
        m = reps[i]
        if counts[k, m] > 0 and (best < 0 or means[k, m] > best_val):
            best = m
            best_val = means[k, m]
    if best < 0:
        best = reps[0]
    return best, EXPLOIT


@njit(cache=True)
def per_context_user(counts, means, k, vt, dconst):
    D = dconst * math.log(vt)
    M = counts.shape[1]
    for m in range(M):
        if counts[k, m] < D:
            return m, EXPLORE
    best = -1
    best_val = -np.inf
    for m in range(M):
        if counts[k, m] > 0 and (best < 0 or means[k, m] > best_val):
            best = m
            best_val = means[k, m]
    if best < 0:
        best = 0
    return best, EXPLOIT


@njit(cache=True)
def _rewards_and_record(b, X, A, U, Z, mu, noise_code, sigma, ctx_map, counts, sums, means, ctx_counts, R):
    for n in range(X.shape[1]):
        k = X[b, n]
        r = draw_reward(mu[k, A[b, n]], U[b, n], Z[b, n], noise_code, sigma)
        R[b, n] = r
        record_sample(counts, sums, means, ctx_counts, ctx_map[k], A[b, n], r)


@njit(cache=True)
def _group_contexts(b, lo, hi, X, perm, ctx_map, buf):
    for i in range(hi - lo):
        buf[i] = ctx_map[X[b, perm[b, lo + i]]]
    return buf[:hi - lo]


@njit(cache=True)
def _assign(b, lo, hi, perm, m, ph, A, P):
    for i in range(lo, hi):
        A[b, perm[b, i]] = m
        P[b, perm[b, i]] = ph


@njit(cache=True)
def block_alg1(t0, X, perm, bounds, U, Z, mu, noise_code, sigma, ctx_map,
               counts, sums, means, ctx_counts, budget, A, R, P):
    B, N = X.shape
    tau = bounds.shape[0] - 1
    candidates = np.arange(counts.shape[1])
    buf = np.empty(N, dtype=np.int64)
    for b in range(B):
        t = t0 + b
        for s in range(tau):
            ctxs = _group_contexts(b, bounds[s], bounds[s + 1], X, perm, ctx_map, buf)
            m, ph = alg1_group(counts, means, ctxs, (t - 1) * tau + s + 1, budget, candidates)
            _assign(b, bounds[s], bounds[s + 1], perm, m, ph, A, P)
        _rewards_and_record(b, X, A, U, Z, mu, noise_code, sigma, ctx_map, counts, sums, means, ctx_counts, R)


@njit(cache=True)
def block_alg3(t0, X, perm, bounds, U, Z, mu, noise_code, sigma, ctx_map,
               counts, sums, means, ctx_counts, reps, istate, fparams, fstate, labels_out, A, R, P):
    B, N = X.shape
    tau = bounds.shape[0] - 1
    all_messages = np.arange(counts.shape[1])
    buf = np.empty(N, dtype=np.int64)
    for b in range(B):
        t = t0 + b
        for s in range(tau):
            ctxs = _group_contexts(b, bounds[s], bounds[s + 1], X, perm, ctx_map, buf)
            m, ph = alg3_group(counts, means, ctxs, (t - 1) * tau + s + 1, all_messages,
                               reps, istate, fparams, fstate, labels_out)
            _assign(b, bounds[s], bounds[s + 1], perm, m, ph, A, P)
        _rewards_and_record(b, X, A, U, Z, mu, noise_code, sigma, ctx_map, counts, sums, means, ctx_counts, R)


@njit(cache=True)
def block_oracle(t0, X, perm, bounds, U, Z, mu, noise_code, sigma, ctx_map,
                 counts, sums, means, ctx_counts, A, R, P):
    B, N = X.shape
    tau = bounds.shape[0] - 1
    buf = np.empty(N, dtype=np.int64)
    for b in range(B):
        for s in range(tau):
            ctxs = _group_contexts(b, bounds[s], bounds[s + 1], X, perm, ctx_map, buf)
            _assign(b, bounds[s], bounds[s + 1], perm, oracle_group(mu, ctxs), EXPLOIT, A, P)
        _rewards_and_record(b, X, A, U, Z, mu, noise_code, sigma, ctx_map, counts, sums, means, ctx_counts, R)


@njit(cache=True)
def block_alg2(t0, X, U, Z, mu, noise_code, sigma, ctx_map, counts, sums, means, ctx_counts,
               dconst, members, inside, pair_ctx, adj, reps, cstate, threshold, A, R, P):
    B, N = X.shape
    for b in range(B):
        t = t0 + b
        for n in range(N):
            m, ph = alg2_user(counts, means, ctx_map[X[b, n]], (t - 1) * N + n + 1, dconst,
                              members, reps, cstate, adj, pair_ctx, threshold)
            A[b, n] = m
            P[b, n] = ph
        for n in range(N):
            k = X[b, n]
            r = draw_reward(mu[k, A[b, n]], U[b, n], Z[b, n], noise_code, sigma)
            R[b, n] = r
            record_sample(counts, sums, means, ctx_counts, ctx_map[k], A[b, n], r)
            alg2_after_record(counts, means, ctx_map[k], A[b, n], members, inside, pair_ctx, adj, cstate, threshold)


@njit(cache=True)
def block_per_context(t0, X, U, Z, mu, noise_code, sigma, ctx_map, counts, sums, means, ctx_counts,
                      dconst, A, R, P):
    B, N = X.shape
    for b in range(B):
        t = t0 + b
        for n in range(N):
            m, ph = per_context_user(counts, means, ctx_map[X[b, n]], (t - 1) * N + n + 1, dconst)
            A[b, n] = m
            P[b, n] = ph
        _rewards_and_record(b, X, A, U, Z, mu, noise_code, sigma, ctx_map, counts, sums, means, ctx_counts, R)
