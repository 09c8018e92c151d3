"""Interpreter fallback for the kernels in ``_kernels_numba``.

The dynamic-programming kernels are vectorized with numpy along one table
axis; the peeling and sampling kernels are plain Python loops (peeling is
inherently sequential). Random streams are bit-identical to the compiled
twins.
"""

import numpy as np
from scipy.stats import binom

from ._rng import GOLDEN, MASK64, hash2, mix64

_INV53 = 1.0 / 9007199254740992.0
_TINY = 1e-300


def _pick(cdf, u):
    i = int(np.searchsorted(cdf, u, side="right"))
    return min(i, cdf.shape[0] - 1)


def symbol_neighbors(seed, cdf, k, perm, swaps, out):
    state = int(seed) & MASK64
    state = (state + GOLDEN) & MASK64
    u = (mix64(state) >> 11) * _INV53
    d = _pick(cdf, u) + 1
    for i in range(d):
        state = (state + GOLDEN) & MASK64
        j = i + mix64(state) % (k - i)
        swaps[i] = j
        perm[i], perm[j] = perm[j], perm[i]
        out[i] = perm[i]
    for i in range(d - 1, -1, -1):
        j = swaps[i]
        perm[i], perm[j] = perm[j], perm[i]
    return d


def symbols_to_decode(k, cdf, trial_seed, z, max_extra):
    dmax = cdf.shape[0]
    perm = list(range(k))
    swaps = [0] * dmax
    nb = [0] * dmax
    resolved = [False] * k
    adj = [[] for _ in range(k)]
    sdeg = []
    sxor = []
    nres = 0
    total = 0
    limit = z + max_extra
    trial_seed = int(trial_seed)
    while True:
        if nres == k:
            return max(0, total - z)
        if total >= limit:
            return -1
        d = symbol_neighbors(hash2(trial_seed, total + 1), cdf, k, perm, swaps, nb)
        total += 1
        s = len(sdeg)
        deg = 0
        xr = 0
        for v in nb[:d]:
            if not resolved[v]:
                deg += 1
                xr ^= v
                adj[v].append(s)
        sdeg.append(deg)
        sxor.append(xr)
        if deg != 1:
            continue
        stack = [s]
        while stack:
            s1 = stack.pop()
            if sdeg[s1] != 1:
                continue
            v = sxor[s1]
            resolved[v] = True
            nres += 1
            for s2 in reversed(adj[v]):
                sdeg[s2] -= 1
                sxor[s2] ^= v
                if sdeg[s2] == 1:
                    stack.append(s2)


def deliver_trials(k, cdf, theta_cdf, gamma_cdf, w, master_seed, first, n,
                   max_extra, out_j, out_h, out_z, out_t):
    master_seed = int(master_seed)
    for i in range(n):
        ts = hash2(master_seed, first + i)
        st = hash2(ts, 0)
        st = (st + GOLDEN) & MASK64
        j = _pick(theta_cdf, (mix64(st) >> 11) * _INV53)
        st = (st + GOLDEN) & MASK64
        h = _pick(gamma_cdf, (mix64(st) >> 11) * _INV53) + 1
        z = int(w[j]) * h
        out_j[i] = j
        out_h[i] = h
        out_z[i] = z
        out_t[i] = symbols_to_decode(k, cdf, ts, z, max_extra)


def failure_trials(k, cdf, m, master_seed, first, n):
    master_seed = int(master_seed)
    return sum(
        symbols_to_decode(k, cdf, hash2(master_seed, first + i), m, 0) < 0
        for i in range(n)
    )


def overhead_trials(k, cdf, master_seed, first, n, max_extra, out):
    master_seed = int(master_seed)
    for i in range(n):
        out[i] = symbols_to_decode(k, cdf, hash2(master_seed, first + i), k, max_extra)


def coverage_counts(x, y, radius, spacing, reach):
    r2 = radius * radius
    out = np.zeros(x.shape[0], np.int64)
    for a in range(-reach, reach + 2):
        dx2 = (x - a * spacing) ** 2
        for b in range(-reach, reach + 2):
            out += dx2 + (y - b * spacing) ** 2 <= r2
    return out


def binom_window(n, p, buf):
    if n == 0 or p <= 0.0:
        buf[0] = 1.0
        return 0, 0
    if p >= 1.0:
        buf[n] = 1.0
        return n, n
    pmf = binom.pmf(np.arange(n + 1), n, p)
    keep = np.flatnonzero(pmf >= _TINY)
    lo, hi = int(keep[0]), int(keep[-1])
    buf[lo:hi + 1] = pmf[lo:hi + 1]
    return lo, hi


def _window(n, p):
    buf = np.empty(n + 1)
    lo, hi = binom_window(n, p, buf)
    return lo, buf[lo:hi + 1].copy()


def forward_failure(k, m, q1, rel, prune):
    stage_fail = np.zeros(k + 1)
    stage_mass = np.zeros(k + 1)
    lo, pmf = _window(m, 1.0 - q1)
    clo = lo
    P = np.zeros((len(pmf), m - lo + 1))
    cs = np.arange(lo, lo + len(pmf))
    P[cs - clo, m - cs] = pmf
    pruned = 0.0
    for u in range(k, 0, -1):
        stage_fail[u] = P[:, 0].sum()
        P[:, 0] = 0.0
        mass = P.sum()
        stage_mass[u] = mass
        if u == 1 or mass == 0.0:
            break
        nc, nr = P.shape

        T = np.zeros((nc, nr - 1))
        for r in range(1, nr):
            col = P[:, r]
            if not col.any():
                continue
            a_lo, pmf = _window(r - 1, 1.0 / u)
            for a, pa in enumerate(pmf, start=a_lo):
                T[:, r - 1 - a] += col * pa

        p = rel[u]
        windows = [_window(clo + ci, p) for ci in range(nc)]
        bmax = max(lo_b + len(pm) - 1 for lo_b, pm in windows)
        new_clo = max(0, clo - bmax)
        Q = np.zeros((clo + nc - new_clo, nr - 1 + bmax))
        nt = nr - 1
        for ci, (b_lo, pmf) in enumerate(windows):
            row = T[ci]
            if not row.any():
                continue
            c = clo + ci
            for b, pb in enumerate(pmf, start=b_lo):
                Q[c - b - new_clo, b:b + nt] += row * pb

        if prune > 0.0:
            small = (Q != 0.0) & (Q < prune)
            pruned += Q[small].sum()
            Q[small] = 0.0
        rows = np.flatnonzero(Q.any(axis=1))
        if rows.size == 0:
            P = np.zeros((1, 1))
            continue
        cols = np.flatnonzero(Q.any(axis=0))
        P = Q[rows[0]:rows[-1] + 1, :cols[-1] + 1].copy()
        clo = new_clo + int(rows[0])
    return stage_fail, stage_mass, pruned


def backward_table(k, N, rel):
    F = np.zeros((N + 1, N + 1))
    F[:, 0] = 1.0
    for u in range(2, k + 1):
        p = rel[u]
        A = np.zeros((N + 1, N + 1))
        for c in range(N):
            b_lo, pmf = _window(c, p)
            width = N - c
            for b, pb in enumerate(pmf, start=b_lo):
                A[c, :width] += pb * F[c - b, b:b + width]
        G = np.zeros((N + 1, N + 1))
        G[:, 0] = 1.0
        for r in range(1, N + 1):
            a_lo, pmf = _window(r - 1, 1.0 / u)
            rows = N - r + 1
            for a, pa in enumerate(pmf, start=a_lo):
                G[:rows, r] += pa * A[:rows, r - 1 - a]
        F = G
    return F
