"""numba-compiled kernels.

Every function here has a twin with the same name and signature in
``_kernels_numpy``; ``_backend`` picks one module at import time.
Random draws use SplitMix64 on uint64 state so both twins produce
identical symbol streams.
"""

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0
_TINY = 1e-300


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


@njit(cache=True)
def hash2(a, b):
    return _mix64(np.uint64(a) ^ _mix64(np.uint64(b) + _GOLDEN))


@njit(cache=True)
def _next(state):
    state = state + _GOLDEN
    return state, _mix64(state)


@njit(cache=True)
def _uniform(state):
    state, x = _next(state)
    return state, np.float64(x >> _S11) * _INV53


@njit(cache=True)
def _pick(cdf, u):
    i = np.searchsorted(cdf, u, side="right")
    if i >= cdf.shape[0]:
        i = cdf.shape[0] - 1
    return i


@njit(cache=True)
def symbol_neighbors(seed, cdf, k, perm, swaps, out):
    """Draw one LT symbol: degree by inversion, neighbors by partial Fisher-Yates.

    ``perm`` must hold a permutation of 0..k-1 and is restored on return.
    Neighbors land unsorted in ``out[:d]``; returns ``d``.
    """
    state = np.uint64(seed)
    state, u = _uniform(state)
    d = _pick(cdf, u) + 1
    for i in range(d):
        state, x = _next(state)
        j = i + np.int64(x % np.uint64(k - i))
        swaps[i] = j
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
        out[i] = perm[i]
    for i in range(d - 1, -1, -1):
        j = swaps[i]
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return d


@njit(cache=True)
def symbols_to_decode(k, cdf, trial_seed, z, max_extra):
    """Feed symbols 1, 2, ... of a trial stream into an incremental peeler.

    Returns ``t``, the number of symbols beyond ``z`` needed to recover all
    ``k`` inputs (0 if the first ``z`` suffice), or -1 once ``z + max_extra``
    symbols have been consumed without success.
    """
    dmax = cdf.shape[0]
    perm = np.arange(k)
    swaps = np.empty(dmax, np.int64)
    nb = np.empty(dmax, np.int64)
    resolved = np.zeros(k, np.bool_)
    head = np.full(k, -1, np.int64)
    cap_s = max(16, min(z, 4 * k) + 16)
    sdeg = np.empty(cap_s, np.int64)
    sxor = np.empty(cap_s, np.int64)
    stack = np.empty(cap_s, np.int64)
    cap_e = 4 * cap_s
    enext = np.empty(cap_e, np.int64)
    esym = np.empty(cap_e, np.int64)
    ns = 0
    ne = 0
    nres = 0
    total = 0
    limit = z + max_extra
    while True:
        if nres == k:
            return max(0, total - z)
        if total >= limit:
            return -1
        seed = hash2(trial_seed, total + 1)
        d = symbol_neighbors(seed, cdf, k, perm, swaps, nb)
        total += 1
        if ns + 1 > cap_s:
            new = 2 * cap_s
            t1 = np.empty(new, np.int64)
            t1[:ns] = sdeg[:ns]
            sdeg = t1
            t2 = np.empty(new, np.int64)
            t2[:ns] = sxor[:ns]
            sxor = t2
            stack = np.empty(new, np.int64)
            cap_s = new
        if ne + d > cap_e:
            new = max(2 * cap_e, ne + d)
            t1 = np.empty(new, np.int64)
            t1[:ne] = enext[:ne]
            enext = t1
            t2 = np.empty(new, np.int64)
            t2[:ne] = esym[:ne]
            esym = t2
            cap_e = new
        s = ns
        ns += 1
        deg = 0
        xr = 0
        for i in range(d):
            v = nb[i]
            if not resolved[v]:
                deg += 1
                xr ^= v
                esym[ne] = s
                enext[ne] = head[v]
                head[v] = ne
                ne += 1
        sdeg[s] = deg
        sxor[s] = xr
        if deg != 1:
            continue
        stack[0] = s
        top = 1
        while top > 0:
            top -= 1
            s1 = stack[top]
            if sdeg[s1] != 1:
                continue
            v = sxor[s1]
            resolved[v] = True
            nres += 1
            e = head[v]
            while e >= 0:
                s2 = esym[e]
                sdeg[s2] -= 1
                sxor[s2] ^= v
                if sdeg[s2] == 1:
                    stack[top] = s2
                    top += 1
                e = enext[e]


@njit(cache=True, nogil=True)
def deliver_trials(k, cdf, theta_cdf, gamma_cdf, w, master_seed, first, n,
                   max_extra, out_j, out_h, out_z, out_t):
    for i in range(n):
        ts = hash2(master_seed, first + i)
        st = hash2(ts, 0)
        st, u = _uniform(st)
        j = _pick(theta_cdf, u)
        st, u = _uniform(st)
        h = _pick(gamma_cdf, u) + 1
        z = w[j] * h
        out_j[i] = j
        out_h[i] = h
        out_z[i] = z
        out_t[i] = symbols_to_decode(k, cdf, ts, z, max_extra)


@njit(cache=True, nogil=True)
def failure_trials(k, cdf, m, master_seed, first, n):
    fails = 0
    for i in range(n):
        ts = hash2(master_seed, first + i)
        if symbols_to_decode(k, cdf, ts, m, 0) < 0:
            fails += 1
    return fails


@njit(cache=True, nogil=True)
def overhead_trials(k, cdf, master_seed, first, n, max_extra, out):
    for i in range(n):
        ts = hash2(master_seed, first + i)
        out[i] = symbols_to_decode(k, cdf, ts, k, max_extra)


@njit(cache=True, nogil=True)
def coverage_counts(x, y, radius, spacing, reach):
    r2 = radius * radius
    out = np.zeros(x.shape[0], np.int64)
    for i in range(x.shape[0]):
        c = 0
        for a in range(-reach, reach + 2):
            dx = x[i] - a * spacing
            for b in range(-reach, reach + 2):
                dy = y[i] - b * spacing
                if dx * dx + dy * dy <= r2:
                    c += 1
        out[i] = c
    return out


@njit(cache=True)
def binom_window(n, p, buf):
    """Binomial(n, p) pmf written to ``buf[lo:hi+1]``; terms below 1e-300 are cut."""
    if n == 0 or p <= 0.0:
        buf[0] = 1.0
        return 0, 0
    if p >= 1.0:
        buf[n] = 1.0
        return n, n
    mode = int((n + 1) * p)
    if mode > n:
        mode = n
    lv = (math.lgamma(n + 1.0) - math.lgamma(mode + 1.0) - math.lgamma(n - mode + 1.0)
          + mode * math.log(p) + (n - mode) * math.log1p(-p))
    v = math.exp(lv)
    buf[mode] = v
    down = (1.0 - p) / p
    up = p / (1.0 - p)
    lo = mode
    cur = v
    while lo > 0:
        cur = cur * lo / (n - lo + 1) * down
        if cur < _TINY:
            break
        lo -= 1
        buf[lo] = cur
    hi = mode
    cur = v
    while hi < n:
        cur = cur * (n - hi) / (hi + 1) * up
        if cur < _TINY:
            break
        hi += 1
        buf[hi] = cur
    # lgamma at large n loses ~n*eps in the mode term; the window holds all the mass
    total = 0.0
    for i in range(lo, hi + 1):
        total += buf[i]
    for i in range(lo, hi + 1):
        buf[i] /= total
    return lo, hi


@njit(cache=True)
def forward_failure(k, m, q1, rel, prune):
    """Propagate the (cloud, ripple) state distribution from k unresolved inputs down to 1.

    Returns ``(stage_fail, stage_mass, pruned)``: ``stage_fail[u]`` is the
    mass of states with an empty ripple at stage ``u`` (removed from the
    table), ``stage_mass[u]`` the mass still alive after that removal.
    """
    stage_fail = np.zeros(k + 1)
    stage_mass = np.zeros(k + 1)
    buf = np.empty(m + 2)
    lo, hi = binom_window(m, 1.0 - q1, buf)
    clo = lo
    nc = hi - lo + 1
    nr = m - lo + 1
    P = np.zeros((nc, nr))
    for c in range(lo, hi + 1):
        P[c - clo, m - c] = buf[c]
    pruned = 0.0
    blo = np.empty(nc, np.int64)
    bhi = np.empty(nc, np.int64)
    for u in range(k, 0, -1):
        f = 0.0
        for ci in range(nc):
            f += P[ci, 0]
            P[ci, 0] = 0.0
        stage_fail[u] = f
        mass = 0.0
        for ci in range(nc):
            for r in range(nr):
                mass += P[ci, r]
        stage_mass[u] = mass
        if u == 1 or mass == 0.0:
            break

        # one ripple symbol consumed; each other one shares its input w.p. 1/u
        nt = nr - 1
        T = np.zeros((nc, nt))
        pu = 1.0 / u
        for r in range(1, nr):
            a_lo, a_hi = binom_window(r - 1, pu, buf)
            for ci in range(nc):
                v = P[ci, r]
                if v == 0.0:
                    continue
                for a in range(a_lo, a_hi + 1):
                    T[ci, r - 1 - a] += v * buf[a]

        # each cloud symbol drops to degree one w.p. rel[u]
        p = rel[u]
        bmax = 0
        if blo.shape[0] < nc:
            blo = np.empty(nc, np.int64)
            bhi = np.empty(nc, np.int64)
        for ci in range(nc):
            b_lo, b_hi = binom_window(clo + ci, p, buf)
            blo[ci] = b_lo
            bhi[ci] = b_hi
            if b_hi > bmax:
                bmax = b_hi
        new_clo = max(0, clo - bmax)
        new_nc = clo + nc - new_clo
        new_nr = nt + bmax
        Q = np.zeros((new_nc, new_nr))
        for ci in range(nc):
            c = clo + ci
            binom_window(c, p, buf)
            for s in range(nt):
                v = T[ci, s]
                if v == 0.0:
                    continue
                for b in range(blo[ci], bhi[ci] + 1):
                    Q[c - b - new_clo, s + b] += v * buf[b]

        if prune > 0.0:
            for ci in range(new_nc):
                for r in range(new_nr):
                    if Q[ci, r] != 0.0 and Q[ci, r] < prune:
                        pruned += Q[ci, r]
                        Q[ci, r] = 0.0
        r0 = new_nc
        r1 = -1
        c1 = 0
        for ci in range(new_nc):
            for r in range(new_nr):
                if Q[ci, r] != 0.0:
                    if ci < r0:
                        r0 = ci
                    r1 = ci
                    if r > c1:
                        c1 = r
        if r1 < 0:
            P = np.zeros((1, 1))
            nc = 1
            nr = 1
            continue
        P = Q[r0:r1 + 1, :c1 + 1].copy()
        clo = new_clo + r0
        nc = P.shape[0]
        nr = P.shape[1]
    return stage_fail, stage_mass, pruned


@njit(cache=True)
def backward_table(k, N, rel):
    """Failure probability from every state (c, r) with c + r <= N at stage k.

    Entry ``[c, r]`` is the probability that peeling fails when decoding
    starts with ``c`` cloud and ``r`` ripple symbols and ``k`` unresolved
    inputs.
    """
    F = np.zeros((N + 1, N + 1))
    for c in range(N + 1):
        F[c, 0] = 1.0
    A = np.zeros((N + 1, N + 1))
    G = np.zeros((N + 1, N + 1))
    buf = np.empty(N + 2)
    for u in range(2, k + 1):
        p = rel[u]
        for c in range(N):
            b_lo, b_hi = binom_window(c, p, buf)
            for s in range(N - c):
                acc = 0.0
                for b in range(b_lo, b_hi + 1):
                    acc += buf[b] * F[c - b, s + b]
                A[c, s] = acc
        pu = 1.0 / u
        for c in range(N + 1):
            G[c, 0] = 1.0
        for r in range(1, N + 1):
            a_lo, a_hi = binom_window(r - 1, pu, buf)
            for c in range(N - r + 1):
                acc = 0.0
                for a in range(a_lo, a_hi + 1):
                    acc += buf[a] * A[c, r - 1 - a]
                G[c, r] = acc
        F, G = G, F
    return F
