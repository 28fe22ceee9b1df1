"""Compiled inner loops for the TSP domain."""

import numba
import numpy as np

IMPROVE_TOL = 1e-12


@numba.njit(cache=True, nogil=True)
def held_karp(d, upper_bound):
    # Subset DP over cities 1..n-1 with city 0 as the fixed start. States whose
    # cost plus a triangle-inequality completion bound exceeds upper_bound are
    # skipped; upper_bound must be the length of some real tour.
    n = d.shape[0]
    m = n - 1
    full = 1 << m
    dp = np.full((full, m), np.inf)
    for j in range(m):
        dp[1 << j, j] = d[0, j + 1]
    ins = np.empty(m, np.int64)
    outs = np.empty(m, np.int64)
    limit = upper_bound * (1.0 + 1e-9)
    for s in range(1, full):
        a = 0
        b = 0
        for j in range(m):
            if (s >> j) & 1:
                ins[a] = j
                a += 1
            else:
                outs[b] = j
                b += 1
        for ii in range(a):
            j = ins[ii]
            cur = dp[s, j]
            if cur == np.inf:
                continue
            dj = d[j + 1]
            lb = dj[0]
            for kk in range(b):
                k = outs[kk]
                w = dj[k + 1] + d[k + 1, 0]
                if w > lb:
                    lb = w
            if cur + lb > limit:
                continue
            for kk in range(b):
                k = outs[kk]
                v = cur + dj[k + 1]
                t = s | (1 << k)
                if v < dp[t, k]:
                    dp[t, k] = v
    best = np.inf
    for j in range(m):
        v = dp[full - 1, j] + d[j + 1, 0]
        if v < best:
            best = v
    return best


@numba.njit(cache=True, nogil=True)
def two_opt_inplace(d, tour, order):
    """First-improvement 2-opt; edges are scanned starting from positions in ``order``."""
    n = tour.shape[0]
    if n < 4:
        return tour
    improved = True
    while improved:
        improved = False
        for ii in range(n):
            i = order[ii]
            a = tour[i]
            b = tour[(i + 1) % n]
            for jj in range(n - 3):
                j = (i + 2 + jj) % n
                c = tour[j]
                e = tour[(j + 1) % n]
                delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
                if delta < -IMPROVE_TOL:
                    lo = i + 1
                    hi = j
                    if hi < lo:
                        hi += n
                    while lo < hi:
                        tmp = tour[lo % n]
                        tour[lo % n] = tour[hi % n]
                        tour[hi % n] = tmp
                        lo += 1
                        hi -= 1
                    improved = True
                    break
            if improved:
                break
    return tour


@numba.njit(cache=True, nogil=True)
def cycle_length(d, tour):
    """Cycle length summed edge by edge from city 0, the order Held-Karp adds them.

    With identical summation order the exact optimum can never round above
    the length of a concrete tour.
    """
    n = tour.shape[0]
    start = 0
    for i in range(n):
        if tour[i] == 0:
            start = i
            break
    total = 0.0
    prev = tour[start]
    for s in range(1, n + 1):
        cur = tour[(start + s) % n]
        total += d[prev, cur]
        prev = cur
    return total
