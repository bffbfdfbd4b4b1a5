"""Compiled inner loops of table precomputation."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _popcounts(n):
    pc = np.zeros(n, dtype=np.int64)
    for x in range(1, n):
        pc[x] = pc[x >> 1] + (x & 1)
    return pc


@njit(cache=True, nogil=True)
def _agreement(ca, cb, gmasks):
    d = ca ^ cb
    m = 0
    for q in range(gmasks.size):
        if (d & gmasks[q]) == 0:
            m |= 1 << q
    return m


@njit(cache=True, nogil=True)
def leaf_sums(codes, values, probs, gmasks, with_counts):
    """``s[e, Q] = c_e * sum of p_u over realizable u agreeing with e exactly on Q``."""
    L = codes.size
    nq = 1 << gmasks.size
    s = np.zeros((L, nq))
    nu = np.zeros((L if with_counts else 1, nq if with_counts else 1), dtype=np.int64)
    for e in range(L):
        for u in range(L):
            Q = _agreement(codes[e], codes[u], gmasks)
            s[e, Q] += probs[u]
            if with_counts:
                nu[e, Q] += 1
        for Q in range(nq):
            s[e, Q] *= values[e]
    return s, nu


@njit(cache=True, nogil=True)
def _add(acc, comp, i, x):
    t = acc[i] + x
    if abs(acc[i]) >= abs(x):
        comp[i] += (acc[i] - t) + x
    else:
        comp[i] += (x - t) + acc[i]
    acc[i] = t


@njit(cache=True, nogil=True)
def _pair_terms(sb, nub, W, k, full, pc, wplus, wminus, out, out_n, with_counts):
    """Contribution of one leaf ``b`` with agreement set ``W`` to every feature."""
    w = pc[W]
    wp = wplus[w]
    wm = wminus[w]
    for i in range(k):
        out[i] = 0.0
        out_n[i] = 0
    dec = 0.0
    dn = 0
    Z = W
    while True:
        sv = sb[full ^ Z]
        z = pc[Z]
        dec += wm[z] * sv
        if with_counts:
            dn += nub[full ^ Z]
        if Z != 0:
            inc = wp[z] * sv
            t = Z
            while t:
                low = t & -t
                i = pc[low - 1]
                out[i] += inc
                if with_counts:
                    out_n[i] += nub[full ^ Z]
                t ^= low
        if Z == 0:
            break
        Z = (Z - 1) & W
    t = full ^ W
    while t:
        low = t & -t
        i = pc[low - 1]
        out[i] = -dec
        out_n[i] = dn
        t ^= low


@njit(cache=True, nogil=True)
def nested_rows(codes, s, nu, gmasks, wplus, wminus, with_counts):
    """Attribution rows from nested pairs ``Z ⊆ W`` of agreement sets.

    Leaves ``b`` form the outer loop so that ``s[b]`` stays in cache; the
    contribution of ``b`` depends on the explicand leaf only through the
    agreement set, so it is computed once per distinct set and folded into
    every row with compensated addition.
    """
    L = codes.size
    k = gmasks.size
    nq = 1 << k
    full = nq - 1
    pc = _popcounts(nq)
    acc = np.zeros((L, k))
    comp = np.zeros((L, k))
    plus_n = np.zeros((L if with_counts else 1, k), dtype=np.int64)
    minus_n = np.zeros((L if with_counts else 1, k), dtype=np.int64)
    contrib = np.zeros((nq, k))
    contrib_n = np.zeros((nq, k), dtype=np.int64)
    seen = np.full(nq, -1, dtype=np.int64)
    nub = nu[0]
    for b in range(L):
        sb = s[b]
        if with_counts:
            nub = nu[b]
        for a in range(L):
            W = _agreement(codes[a], codes[b], gmasks)
            if seen[W] != b:
                _pair_terms(sb, nub, W, k, full, pc, wplus, wminus,
                            contrib[W], contrib_n[W], with_counts)
                seen[W] = b
            row = acc[a]
            crow = comp[a]
            cw = contrib[W]
            for i in range(k):
                _add(row, crow, i, cw[i])
            if with_counts:
                for i in range(k):
                    if (W >> i) & 1:
                        plus_n[a, i] += contrib_n[W, i]
                    else:
                        minus_n[a, i] += contrib_n[W, i]
    return acc + comp, plus_n, minus_n


@njit(cache=True, nogil=True)
def coalitional_rows(codes, s, gmasks, term_feature, term_z, term_w, term_coef):
    """Rows as weighted sums of ``S(a, Z, W)`` over a fixed list of (Z, W) terms."""
    L = codes.size
    k = gmasks.size
    nq = 1 << k
    full = nq - 1
    rows = np.zeros((L, k))
    acc = np.zeros(k)
    comp = np.zeros(k)
    grid = np.zeros((nq, nq))
    for a in range(L):
        grid[:, :] = 0.0
        for b in range(L):
            W = _agreement(codes[a], codes[b], gmasks)
            for Z in range(nq):
                if (Z & W) == Z:
                    grid[Z, W] += s[b, full ^ Z]
        acc[:] = 0.0
        comp[:] = 0.0
        for t in range(term_feature.size):
            _add(acc, comp, term_feature[t], term_coef[t] * grid[term_z[t], term_w[t]])
        for i in range(k):
            rows[a, i] = acc[i] + comp[i]
    return rows
