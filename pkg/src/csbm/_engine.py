"""Compiled kernels behind the ledger and the Gibbs sampler.

Arrays are bundled into three tuples that every kernel takes:

graph
    ``(indptr, nbr, layer, flag, vals, Y, Z, dense, mode, L)``. The CSR
    incidence comes from ``DyadData.incidence``. ``Y``/``Z`` are dense
    (L, n, n) count and activity arrays, used only when ``dense`` is true
    (zero-inflated blocks).
fam
    ``(codes, logw, pars, ncomp)`` from ``FamilySpec.encode``; index 0 is the
    off-diagonal family and index 1 the diagonal one.
state
    ``(z, sizes, stats, comp, cache, ll, meta)``. ``stats``/``comp`` have shape
    (L, Kc, Kc, 3) and hold Neumaier-compensated block sums. ``cache[r, s]``
    is the block log-marginal summed over layers. ``ll`` is a 1-vector with
    the running likelihood. ``meta`` holds
    [K_active, Kc, open, current node, current sweep, allow_new].

Block keys: undirected and dyad-state blocks live at (min, max), directed
blocks at the ordered pair. Dyad-state off-diagonal blocks are oriented from
the smaller label and diagonal ones from the smaller node index.
"""

import math

import numpy as np
from numba import njit

from .errors import DomainError
from .families import mixture_logm

K_ACTIVE, K_CAP, OPEN, CUR_NODE, CUR_SWEEP, ALLOW_NEW = range(6)


@njit(cache=True)
def _nadd(st, cp, l, r, s, c, x):
    cur = st[l, r, s, c]
    t = cur + x
    if abs(cur) >= abs(x):
        cp[l, r, s, c] += (cur - t) + x
    else:
        cp[l, r, s, c] += (x - t) + cur
    st[l, r, s, c] = t


@njit(cache=True)
def n_dyads(mode, nr, ns, same):
    if same:
        if mode == 1:
            return nr * (nr - 1)
        return nr * (nr - 1) // 2
    return nr * ns


@njit(cache=True)
def _layer_val(fam, dg, stats, comp, l, r, s, n, c0, c1, c2):
    codes, logw, pars, ncomp = fam
    return mixture_logm(codes[dg], logw[dg], pars[dg], ncomp[dg],
                        stats[l, r, s, 0] + comp[l, r, s, 0] + c0,
                        stats[l, r, s, 1] + comp[l, r, s, 1] + c1,
                        stats[l, r, s, 2] + comp[l, r, s, 2] + c2, float(n))


@njit(cache=True)
def _block_val(fam, state, L, mode, r, s):
    z, sizes, stats, comp, cache, ll, meta = state
    n = n_dyads(mode, sizes[r], sizes[s], r == s)
    if n == 0:
        return 0.0
    dg = 1 if r == s else 0
    v = 0.0
    for l in range(L):
        v += _layer_val(fam, dg, stats, comp, l, r, s, n, 0.0, 0.0, 0.0)
    return v


@njit(cache=True)
def _refresh(fam, state, L, mode, r, s):
    cache = state[4]
    v = _block_val(fam, state, L, mode, r, s)
    d = v - cache[r, s]
    cache[r, s] = v
    return d


@njit(cache=True)
def _refresh_row(fam, state, L, mode, k):
    meta = state[6]
    delta = 0.0
    for m in range(meta[K_ACTIVE]):
        if mode == 1:
            delta += _refresh(fam, state, L, mode, k, m)
            if m != k:
                delta += _refresh(fam, state, L, mode, m, k)
        else:
            delta += _refresh(fam, state, L, mode, min(k, m), max(k, m))
    state[5][0] += delta


@njit(cache=True)
def aggregate(graph, z, i, agg, agg2, K):
    """Sum T(y) over i's incident dyads, bucketed by the partner's label."""
    indptr, nbr, lay, flg, vals, Y, Z, dense, mode, L = graph
    for l in range(L):
        for k in range(K):
            for c in range(3):
                agg[l, k, c] = 0.0
                agg2[l, k, c] = 0.0
    if dense:
        n = z.shape[0]
        for l in range(L):
            for j in range(n):
                k = z[j]
                if j == i or k < 0:
                    continue
                if Z[l, i, j]:
                    agg[l, k, 0] += 1.0
                    agg[l, k, 1] += Y[l, i, j]
                if mode == 1 and Z[l, j, i]:
                    agg2[l, k, 0] += 1.0
                    agg2[l, k, 1] += Y[l, j, i]
        return
    for e in range(indptr[i], indptr[i + 1]):
        k = z[nbr[e]]
        if k < 0:
            continue
        l = lay[e]
        if mode == 0 or flg[e] == 1:
            for c in range(3):
                agg[l, k, c] += vals[e, c]
        else:
            for c in range(3):
                agg2[l, k, c] += vals[e, c]


@njit(cache=True)
def _apply(graph, state, agg, agg2, k, sign):
    mode, L = graph[8], graph[9]
    stats, comp, meta = state[2], state[3], state[6]
    for m in range(meta[K_ACTIVE]):
        for l in range(L):
            if mode == 0:
                r, s = min(k, m), max(k, m)
                for c in range(3):
                    if agg[l, m, c] != 0.0:
                        _nadd(stats, comp, l, r, s, c, sign * agg[l, m, c])
            elif mode == 1:
                for c in range(3):
                    if m == k:
                        x = agg[l, k, c] + agg2[l, k, c]
                        if x != 0.0:
                            _nadd(stats, comp, l, k, k, c, sign * x)
                    else:
                        if agg[l, m, c] != 0.0:
                            _nadd(stats, comp, l, k, m, c, sign * agg[l, m, c])
                        if agg2[l, m, c] != 0.0:
                            _nadd(stats, comp, l, m, k, c, sign * agg2[l, m, c])
            else:
                if m == k:
                    x0 = agg[l, k, 0] + agg2[l, k, 1]
                    x1 = agg[l, k, 1] + agg2[l, k, 0]
                    r, s = k, k
                else:
                    x0 = agg[l, m, 0] + agg2[l, m, 0]
                    x1 = agg[l, m, 1] + agg2[l, m, 1]
                    if k < m:
                        r, s = k, m
                    else:
                        r, s = m, k
                        x0, x1 = x1, x0
                x2 = agg[l, m, 2] + agg2[l, m, 2]
                if x0 != 0.0:
                    _nadd(stats, comp, l, r, s, 0, sign * x0)
                if x1 != 0.0:
                    _nadd(stats, comp, l, r, s, 1, sign * x1)
                if x2 != 0.0:
                    _nadd(stats, comp, l, r, s, 2, sign * x2)


@njit(cache=True)
def _zero_block(state, r, s):
    stats, comp, cache = state[2], state[3], state[4]
    stats[:, r, s, :] = 0.0
    comp[:, r, s, :] = 0.0
    cache[r, s] = 0.0


@njit(cache=True)
def _move_block(state, r0, s0, r1, s1, swap):
    stats, comp, cache = state[2], state[3], state[4]
    for l in range(stats.shape[0]):
        a0, a1, a2 = stats[l, r0, s0, 0], stats[l, r0, s0, 1], stats[l, r0, s0, 2]
        b0, b1, b2 = comp[l, r0, s0, 0], comp[l, r0, s0, 1], comp[l, r0, s0, 2]
        if swap:
            a0, a1 = a1, a0
            b0, b1 = b1, b0
        stats[l, r1, s1, 0], stats[l, r1, s1, 1], stats[l, r1, s1, 2] = a0, a1, a2
        comp[l, r1, s1, 0], comp[l, r1, s1, 1], comp[l, r1, s1, 2] = b0, b1, b2
    cache[r1, s1] = cache[r0, s0]
    _zero_block(state, r0, s0)


@njit(cache=True)
def _relabel(graph, fam, state, k):
    """Close the gap left by empty label k by renaming the last label into it."""
    mode, L = graph[8], graph[9]
    z, sizes, meta = state[0], state[1], state[6]
    last = meta[K_ACTIVE] - 1
    # every block touching k now has no dyads; drop rounding residue
    for m in range(last + 1):
        if mode == 1:
            _zero_block(state, k, m)
            _zero_block(state, m, k)
        else:
            _zero_block(state, min(k, m), max(k, m))
    if k != last:
        for j in range(z.shape[0]):
            if z[j] == last:
                z[j] = k
        sizes[k] = sizes[last]
        sizes[last] = 0
        for m in range(last):
            if m == k:
                continue
            if mode == 1:
                _move_block(state, last, m, k, m, False)
                _move_block(state, m, last, m, k, False)
            else:
                # old key (m, last) is oriented from m; the new key may flip
                swap = mode == 2 and m > k
                _move_block(state, m, last, min(m, k), max(m, k), swap)
        _move_block(state, last, last, k, k, False)
    meta[K_ACTIVE] = last
    if k != last:
        _refresh_row(fam, state, L, mode, k)


@njit(cache=True)
def detach(graph, fam, state, agg, agg2, i):
    z, sizes, meta = state[0], state[1], state[6]
    k = z[i]
    if k < 0:
        raise DomainError("node is not assigned")
    aggregate(graph, z, i, agg, agg2, meta[K_ACTIVE])
    _apply(graph, state, agg, agg2, k, -1.0)
    sizes[k] -= 1
    z[i] = -1
    _refresh_row(fam, state, graph[9], graph[8], k)
    if meta[OPEN] == 1 and sizes[k] == 0:
        _relabel(graph, fam, state, k)


@njit(cache=True)
def attach_aggregated(graph, fam, state, agg, agg2, i, k):
    """Attach i to k, with agg/agg2 already holding i's bucketed statistics."""
    z, sizes, meta = state[0], state[1], state[6]
    if z[i] >= 0:
        raise DomainError("node is already assigned")
    if k < 0 or k > meta[K_ACTIVE] or k >= meta[K_CAP]:
        raise DomainError("label out of range")
    if k == meta[K_ACTIVE]:
        if meta[OPEN] != 1:
            raise DomainError("label out of range")
        meta[K_ACTIVE] += 1
        agg[:, k, :] = 0.0
        agg2[:, k, :] = 0.0
    _apply(graph, state, agg, agg2, k, 1.0)
    sizes[k] += 1
    z[i] = k
    _refresh_row(fam, state, graph[9], graph[8], k)


@njit(cache=True)
def attach(graph, fam, state, agg, agg2, i, k):
    meta = state[6]
    aggregate(graph, state[0], i, agg, agg2, min(meta[K_ACTIVE] + 1, meta[K_CAP]))
    attach_aggregated(graph, fam, state, agg, agg2, i, k)


@njit(cache=True)
def score(graph, fam, state, agg, agg2, k):
    """Change in log p(Y|z) if the detached node joined label k."""
    mode, L = graph[8], graph[9]
    sizes, stats, comp, cache, meta = state[1], state[2], state[3], state[4], state[6]
    K = meta[K_ACTIVE]
    nk = sizes[k] if k < K else 0
    nk1 = nk + 1
    delta = 0.0
    n = n_dyads(mode, nk1, nk1, True)
    if n > 0:
        v = 0.0
        for l in range(L):
            if k < K:
                if mode == 0:
                    c0, c1, c2 = agg[l, k, 0], agg[l, k, 1], agg[l, k, 2]
                elif mode == 1:
                    c0 = agg[l, k, 0] + agg2[l, k, 0]
                    c1 = agg[l, k, 1] + agg2[l, k, 1]
                    c2 = agg[l, k, 2] + agg2[l, k, 2]
                else:
                    c0 = agg[l, k, 0] + agg2[l, k, 1]
                    c1 = agg[l, k, 1] + agg2[l, k, 0]
                    c2 = agg[l, k, 2] + agg2[l, k, 2]
                v += _layer_val(fam, 1, stats, comp, l, k, k, n, c0, c1, c2)
        if k < K:
            delta += v - cache[k, k]
    for m in range(K):
        if m == k or sizes[m] == 0:
            continue
        n = nk1 * sizes[m]
        if mode == 1:
            v1 = 0.0
            v2 = 0.0
            for l in range(L):
                if k < K:
                    v1 += _layer_val(fam, 0, stats, comp, l, k, m, n,
                                     agg[l, m, 0], agg[l, m, 1], agg[l, m, 2])
                    v2 += _layer_val(fam, 0, stats, comp, l, m, k, n,
                                     agg2[l, m, 0], agg2[l, m, 1], agg2[l, m, 2])
                else:
                    v1 += _fresh_val(fam, 0, n, agg[l, m, 0], agg[l, m, 1], agg[l, m, 2])
                    v2 += _fresh_val(fam, 0, n, agg2[l, m, 0], agg2[l, m, 1], agg2[l, m, 2])
            if k < K:
                delta += v1 - cache[k, m] + v2 - cache[m, k]
            else:
                delta += v1 + v2
            continue
        v = 0.0
        r, s = min(k, m), max(k, m)
        for l in range(L):
            c0 = agg[l, m, 0]
            c1 = agg[l, m, 1]
            c2 = agg[l, m, 2]
            if mode == 2:
                c0 += agg2[l, m, 0]
                c1 += agg2[l, m, 1]
                c2 += agg2[l, m, 2]
                if k > m:
                    c0, c1 = c1, c0
            if k < K:
                v += _layer_val(fam, 0, stats, comp, l, r, s, n, c0, c1, c2)
            else:
                v += _fresh_val(fam, 0, n, c0, c1, c2)
        if k < K:
            delta += v - cache[r, s]
        else:
            delta += v
    return delta


@njit(cache=True)
def _fresh_val(fam, dg, n, c0, c1, c2):
    codes, logw, pars, ncomp = fam
    return mixture_logm(codes[dg], logw[dg], pars[dg], ncomp[dg], c0, c1, c2, float(n))


@njit(cache=True)
def log_prior(prior, sizes, K):
    code, alpha = prior[0], prior[1]
    n = 0
    for k in range(K):
        n += sizes[k]
    out = math.lgamma(alpha) - math.lgamma(alpha + n)
    if code == 0:
        ak = alpha / prior[2]
        for k in range(K):
            if sizes[k] > 0:
                out += math.lgamma(ak + sizes[k]) - math.lgamma(ak)
    else:
        la = math.log(alpha)
        for k in range(K):
            if sizes[k] > 0:
                out += la + math.lgamma(sizes[k])
    return out


@njit(cache=True)
def rebuild(graph, fam, state):
    """Recompute sizes, block statistics, caches and ll from z alone."""
    indptr, nbr, lay, flg, vals, Y, Z, dense, mode, L = graph
    z, sizes, stats, comp, cache, ll, meta = state
    n = z.shape[0]
    stats[:] = 0.0
    comp[:] = 0.0
    cache[:] = 0.0
    sizes[:] = 0
    for i in range(n):
        if z[i] >= 0:
            sizes[z[i]] += 1
    if dense:
        for l in range(L):
            for i in range(n):
                a = z[i]
                if a < 0:
                    continue
                for j in range(n):
                    b = z[j]
                    if j == i or b < 0 or (mode == 0 and j < i) or Z[l, i, j] == 0:
                        continue
                    if mode == 0:
                        r, s = min(a, b), max(a, b)
                    else:
                        r, s = a, b
                    _nadd(stats, comp, l, r, s, 0, 1.0)
                    _nadd(stats, comp, l, r, s, 1, Y[l, i, j])
    else:
        for i in range(n):
            a = z[i]
            if a < 0:
                continue
            for e in range(indptr[i], indptr[i + 1]):
                j = nbr[e]
                b = z[j]
                if b < 0:
                    continue
                l = lay[e]
                if mode == 0:
                    if j < i:
                        continue
                    r, s = min(a, b), max(a, b)
                    swap = False
                elif mode == 1:
                    if flg[e] == 0:
                        continue
                    r, s = a, b
                    swap = False
                else:
                    if flg[e] == 0:
                        continue
                    r, s = min(a, b), max(a, b)
                    swap = a > b
                x0, x1 = vals[e, 0], vals[e, 1]
                if swap:
                    x0, x1 = x1, x0
                if x0 != 0.0:
                    _nadd(stats, comp, l, r, s, 0, x0)
                if x1 != 0.0:
                    _nadd(stats, comp, l, r, s, 1, x1)
                if vals[e, 2] != 0.0:
                    _nadd(stats, comp, l, r, s, 2, vals[e, 2])
    K = meta[K_ACTIVE]
    total = 0.0
    for r in range(K):
        for s in range(K):
            if mode != 1 and s < r:
                continue
            v = _block_val(fam, state, L, mode, r, s)
            cache[r, s] = v
            total += v
    ll[0] = total
    return total


@njit(cache=True)
def gibbs_step(graph, fam, state, agg, agg2, w, prior, i, u, greedy):
    z, sizes, meta = state[0], state[1], state[6]
    meta[CUR_NODE] = i
    detach(graph, fam, state, agg, agg2, i)
    K = meta[K_ACTIVE]
    ncand = K
    if meta[OPEN] == 1 and meta[ALLOW_NEW] == 1 and K < meta[K_CAP]:
        ncand = K + 1
    aggregate(graph, z, i, agg, agg2, ncand)
    m = 0
    for k in range(K):
        m += sizes[k]
    alpha = prior[1]
    denom = math.log(m + alpha)
    best = -np.inf
    for k in range(ncand):
        if prior[0] == 0:
            lp = math.log(sizes[k] + alpha / prior[2])
        elif k < K and sizes[k] > 0:
            lp = math.log(sizes[k])
        else:
            lp = math.log(alpha)
        w[k] = lp - denom + score(graph, fam, state, agg, agg2, k)
        if w[k] > best:
            best = w[k]
    if best == -np.inf or math.isnan(best):
        raise DomainError("all candidate labels have zero probability")
    choice = 0
    if greedy:
        for k in range(ncand):
            if w[k] == best:
                choice = k
                break
    else:
        total = 0.0
        for k in range(ncand):
            w[k] = math.exp(w[k] - best)
            total += w[k]
        target = u * total
        acc = 0.0
        choice = ncand - 1
        for k in range(ncand):
            acc += w[k]
            if acc > target:
                choice = k
                break
    attach_aggregated(graph, fam, state, agg, agg2, i, choice)


@njit(cache=True)
def zip_pass(graph, fam, state, U):
    """Resample activity indicators of zero-count dyads from their collapsed conditionals."""
    Y, Z, mode, L = graph[5], graph[6], graph[8], graph[9]
    z, sizes, stats, comp, cache, ll, meta = state
    n = z.shape[0]
    for l in range(L):
        for i in range(n):
            j0 = i + 1 if mode == 0 else 0
            for j in range(j0, n):
                if j == i or Y[l, i, j] > 0:
                    continue
                a, b = z[i], z[j]
                if mode == 0:
                    r, s = min(a, b), max(a, b)
                else:
                    r, s = a, b
                dg = 1 if r == s else 0
                nn = n_dyads(mode, sizes[r], sizes[s], r == s)
                cur = Z[l, i, j]
                v1 = _layer_val(fam, dg, stats, comp, l, r, s, nn, 1.0 - cur, 0.0, 0.0)
                v0 = _layer_val(fam, dg, stats, comp, l, r, s, nn, -1.0 * cur, 0.0, 0.0)
                p1 = 1.0 / (1.0 + math.exp(min(v0 - v1, 700.0)))
                new = 1 if U[(l * n + i) * n + j] < p1 else 0
                if new != cur:
                    _nadd(stats, comp, l, r, s, 0, float(new - cur))
                    Z[l, i, j] = new
                    if mode == 0:
                        Z[l, j, i] = new
                    d = (v1 - v0) if new == 1 else (v0 - v1)
                    cache[r, s] += d
                    ll[0] += d


@njit(cache=True)
def ari_kernel(a, b):
    """Adjusted Rand index of two nonnegative integer label vectors."""
    n = a.shape[0]
    ka = 0
    kb = 0
    for i in range(n):
        ka = max(ka, a[i] + 1)
        kb = max(kb, b[i] + 1)
    table = np.zeros((ka, kb), dtype=np.int64)
    ra = np.zeros(ka, dtype=np.int64)
    cb = np.zeros(kb, dtype=np.int64)
    for i in range(n):
        table[a[i], b[i]] += 1
        ra[a[i]] += 1
        cb[b[i]] += 1
    sij = 0
    for x in range(ka):
        for y in range(kb):
            t = table[x, y]
            sij += t * (t - 1) // 2
    sa = 0
    for x in range(ka):
        sa += ra[x] * (ra[x] - 1) // 2
    sb = 0
    for y in range(kb):
        sb += cb[y] * (cb[y] - 1) // 2
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    expected = float(sa) * float(sb) / float(total)
    top = 0.5 * (sa + sb)
    if top == expected:
        return 1.0
    return (sij - expected) / (top - expected)


@njit(cache=True, nogil=True)
def run_sweeps(graph, fam, state, agg, agg2, w, prior, const, greedy, Uz, Uzip, start,
               burn_in, thin, check_every, trace_lp, trace_ari, truth, psm, map_z, map_Z, mapv,
               counters):
    """Run Uz.shape[0] sweeps; counters = [retained, map sweep], mapv = [map value, max drift]."""
    z, sizes, ll, meta = state[0], state[1], state[5], state[6]
    n = z.shape[0]
    has_zip = graph[7]
    for t in range(Uz.shape[0]):
        sweep = start + t + 1
        meta[CUR_SWEEP] = sweep
        for i in range(n):
            gibbs_step(graph, fam, state, agg, agg2, w, prior, i, Uz[t, i], greedy)
        if has_zip:
            meta[CUR_NODE] = -1
            zip_pass(graph, fam, state, Uzip[t])
        if check_every > 0 and sweep % check_every == 0:
            before = ll[0]
            fresh = rebuild(graph, fam, state)
            mapv[1] = max(mapv[1], abs(fresh - before))
        lp = log_prior(prior, sizes, meta[K_ACTIVE]) + ll[0] + const
        trace_lp[t] = lp
        if truth.shape[0] == n:
            trace_ari[t] = ari_kernel(z, truth)
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            counters[0] += 1
            for i in range(n):
                for j in range(i + 1, n):
                    if z[i] == z[j]:
                        psm[i, j] += 1
            if lp > mapv[0]:
                mapv[0] = lp
                counters[1] = sweep
                for i in range(n):
                    map_z[i] = z[i]
                if has_zip:
                    map_Z[:] = graph[6]
