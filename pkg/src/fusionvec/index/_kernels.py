"""Compiled kernels for the layered small-world graph.

Vectors arrive as a CSR matrix of unit-norm rows over a compacted column
space, so cosine dissimilarity is ``1 - dot``. A query is scattered into a
dense buffer once; its distance to a stored row is then a gather over that
row's non-zeros. Upper layers live in ``ulinks`` rows: node ``v`` at level
``lv >= 1`` uses row ``uoff[v] + lv - 1``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------- distances


@njit(cache=True, inline="always")
def _gather_dist(buf, indptr, indices, data, j):
    s = 0.0
    for p in range(indptr[j], indptr[j + 1]):
        s += buf[indices[p]] * data[p]
    d = 1.0 - s
    if d < 0.0:
        return 0.0
    if d > 1.0:
        return 1.0
    return d


@njit(cache=True)
def _scatter(buf, indptr, indices, data, j):
    for p in range(indptr[j], indptr[j + 1]):
        buf[indices[p]] = data[p]


@njit(cache=True)
def _unscatter(buf, indptr, indices, j):
    for p in range(indptr[j], indptr[j + 1]):
        buf[indices[p]] = 0.0


# -------------------------------------------------------------------- heaps
# binary min-heaps over parallel (key, value) arrays; max-heaps store -key


@njit(cache=True, inline="always")
def _hpush(keys, vals, size, k, v):
    i = size
    keys[i] = k
    vals[i] = v
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return size + 1


@njit(cache=True, inline="always")
def _hpop(keys, vals, size):
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and keys[right] < keys[left]:
            child = right
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        vals[child], vals[i] = vals[i], vals[child]
        i = child
    return size


# -------------------------------------------------------------- graph walks


@njit(cache=True)
def _neighbors(v, lv, links0, count0, uoff, ulinks, ucount):
    if lv == 0:
        return links0[v, : count0[v]]
    row = uoff[v] + lv - 1
    return ulinks[row, : ucount[row]]


@njit(cache=True)
def _greedy(buf, indptr, indices, data, ep, epd, lv, links0, count0, uoff, ulinks, ucount):
    cur = ep
    curd = epd
    changed = True
    while changed:
        changed = False
        nb = _neighbors(cur, lv, links0, count0, uoff, ulinks, ucount)
        for t in range(nb.shape[0]):
            e = nb[t]
            d = _gather_dist(buf, indptr, indices, data, e)
            if d < curd:
                curd = d
                cur = e
                changed = True
    return cur, curd


@njit(cache=True)
def _search_layer(
    buf, indptr, indices, data, ep, epd, ef, lv, links0, count0, uoff, ulinks, ucount,
    visited, tag, ckeys, cvals, rkeys, rvals, out_d, out_i,
):
    """Beam search of width ``ef``; writes ascending results into out_d/out_i, returns their count."""
    csize = _hpush(ckeys, cvals, 0, epd, ep)
    rsize = _hpush(rkeys, rvals, 0, -epd, ep)
    visited[ep] = tag
    while csize > 0:
        cd = ckeys[0]
        c = cvals[0]
        if cd > -rkeys[0] and rsize >= ef:
            break
        csize = _hpop(ckeys, cvals, csize)
        nb = _neighbors(c, lv, links0, count0, uoff, ulinks, ucount)
        for t in range(nb.shape[0]):
            e = nb[t]
            if visited[e] == tag:
                continue
            visited[e] = tag
            d = _gather_dist(buf, indptr, indices, data, e)
            if rsize < ef or d < -rkeys[0]:
                csize = _hpush(ckeys, cvals, csize, d, e)
                rsize = _hpush(rkeys, rvals, rsize, -d, e)
                if rsize > ef:
                    rsize = _hpop(rkeys, rvals, rsize)
    count = rsize
    for pos in range(count - 1, -1, -1):
        out_d[pos] = -rkeys[0]
        out_i[pos] = rvals[0]
        rsize = _hpop(rkeys, rvals, rsize)
    return count


@njit(cache=True)
def _select(cand_i, cand_d, count, limit, tbuf, indptr, indices, data, sel_i, sel_d):
    """Neighbour-selection heuristic over candidates sorted by ascending distance.

    A candidate is kept only if it is closer to the base element than to every
    neighbour kept so far.
    """
    nsel = 0
    for a in range(count):
        if nsel >= limit:
            break
        c = cand_i[a]
        dc = cand_d[a]
        _scatter(tbuf, indptr, indices, data, c)
        good = True
        for b in range(nsel):
            if _gather_dist(tbuf, indptr, indices, data, sel_i[b]) < dc:
                good = False
                break
        _unscatter(tbuf, indptr, indices, c)
        if good:
            sel_i[nsel] = c
            sel_d[nsel] = dc
            nsel += 1
    return nsel


@njit(cache=True)
def _sort_pairs(keys, vals, count):
    order = np.argsort(keys[:count], kind="mergesort")
    k2 = keys[:count][order].copy()
    v2 = vals[:count][order].copy()
    keys[:count] = k2
    vals[:count] = v2


@njit(cache=True)
def _connect(
    v, e, d, lv, cap, links0, dist0, count0, uoff, ulinks, udist, ucount,
    tbuf, indptr, indices, data, wi, wd, si, sd,
):
    """Add the link e -> v, shrinking e's list with the heuristic when full."""
    if lv == 0:
        links = links0[e]
        dists = dist0[e]
        cnt = count0[e]
    else:
        row = uoff[e] + lv - 1
        links = ulinks[row]
        dists = udist[row]
        cnt = ucount[row]
    if cnt < cap:
        links[cnt] = v
        dists[cnt] = d
        cnt += 1
    else:
        for t in range(cnt):
            wi[t] = links[t]
            wd[t] = dists[t]
        wi[cnt] = v
        wd[cnt] = d
        _sort_pairs(wd, wi, cnt + 1)
        cnt = _select(wi, wd, cnt + 1, cap, tbuf, indptr, indices, data, si, sd)
        for t in range(cnt):
            links[t] = si[t]
            dists[t] = sd[t]
    if lv == 0:
        count0[e] = cnt
    else:
        ucount[uoff[e] + lv - 1] = cnt


@njit(cache=True)
def build_graph(indptr, indices, data, ncols, levels, M, efc, links0, dist0, count0, uoff, ulinks, udist, ucount):
    """Insert rows 0..n-1 in order. Returns (entry point, top level)."""
    n = levels.shape[0]
    M0 = links0.shape[1]
    qbuf = np.zeros(ncols)
    tbuf = np.zeros(ncols)
    visited = np.zeros(n, dtype=np.int32)
    cap = max(efc, M0) + 2
    ckeys = np.empty(n + 1)
    cvals = np.empty(n + 1, dtype=np.int64)
    rkeys = np.empty(cap)
    rvals = np.empty(cap, dtype=np.int64)
    out_d = np.empty(cap)
    out_i = np.empty(cap, dtype=np.int64)
    si = np.empty(cap, dtype=np.int64)
    sd = np.empty(cap)
    wi = np.empty(cap, dtype=np.int64)
    wd = np.empty(cap)
    if n == 0:
        return -1, -1
    entry = 0
    top = levels[0]
    tag = 0
    for v in range(1, n):
        _scatter(qbuf, indptr, indices, data, v)
        lvl = levels[v]
        cur = entry
        curd = _gather_dist(qbuf, indptr, indices, data, cur)
        for lv in range(top, lvl, -1):
            cur, curd = _greedy(qbuf, indptr, indices, data, cur, curd, lv, links0, count0, uoff, ulinks, ucount)
        for lv in range(min(lvl, top), -1, -1):
            tag += 1
            cnt = _search_layer(
                qbuf, indptr, indices, data, cur, curd, efc, lv, links0, count0, uoff, ulinks, ucount,
                visited, tag, ckeys, cvals, rkeys, rvals, out_d, out_i,
            )
            nsel = _select(out_i, out_d, cnt, M, tbuf, indptr, indices, data, si, sd)
            if lv == 0:
                for t in range(nsel):
                    links0[v, t] = si[t]
                    dist0[v, t] = sd[t]
                count0[v] = nsel
                lcap = M0
            else:
                row = uoff[v] + lv - 1
                for t in range(nsel):
                    ulinks[row, t] = si[t]
                    udist[row, t] = sd[t]
                ucount[row] = nsel
                lcap = M
            # _connect reuses si/sd as scratch, so copy the selection first
            sel = si[:nsel].copy()
            seld = sd[:nsel].copy()
            for t in range(nsel):
                _connect(
                    v, sel[t], seld[t], lv, lcap, links0, dist0, count0, uoff, ulinks, udist, ucount,
                    tbuf, indptr, indices, data, wi, wd, si, sd,
                )
            cur = out_i[0]
            curd = out_d[0]
        _unscatter(qbuf, indptr, indices, v)
        if lvl > top:
            entry = v
            top = lvl
    return entry, top


@njit(cache=True)
def _reach(entry, links0, count0, seen):
    n = count0.shape[0]
    stack = np.empty(n, dtype=np.int64)
    sp = 0
    if seen[entry] == 0:
        seen[entry] = 1
        stack[0] = entry
        sp = 1
    while sp > 0:
        sp -= 1
        u = stack[sp]
        for t in range(count0[u]):
            w = links0[u, t]
            if seen[w] == 0:
                seen[w] = 1
                stack[sp] = w
                sp += 1


@njit(cache=True)
def repair_reachability(indptr, indices, data, ncols, entry, efc, links0, dist0, count0, uoff, ulinks, ucount):
    """Link every ground-layer node unreachable from ``entry`` to a nearby reachable one.

    Returns the number of links added.
    """
    n = count0.shape[0]
    if n == 0:
        return 0
    M0 = links0.shape[1]
    seen = np.zeros(n, dtype=np.int8)
    _reach(entry, links0, count0, seen)
    qbuf = np.zeros(ncols)
    visited = np.zeros(n, dtype=np.int32)
    cap = max(efc, M0) + 2
    ckeys = np.empty(n + 1)
    cvals = np.empty(n + 1, dtype=np.int64)
    rkeys = np.empty(cap)
    rvals = np.empty(cap, dtype=np.int64)
    out_d = np.empty(cap)
    out_i = np.empty(cap, dtype=np.int64)
    added = 0
    tag = 0
    for u in range(n):
        if seen[u]:
            continue
        _scatter(qbuf, indptr, indices, data, u)
        tag += 1
        epd = _gather_dist(qbuf, indptr, indices, data, entry)
        cnt = _search_layer(
            qbuf, indptr, indices, data, entry, epd, efc, 0, links0, count0, uoff, ulinks, ucount,
            visited, tag, ckeys, cvals, rkeys, rvals, out_d, out_i,
        )
        host = -1
        hostd = 0.0
        for t in range(cnt):
            w = out_i[t]
            if seen[w] and w != u and count0[w] < M0:
                host = w
                hostd = out_d[t]
                break
        if host < 0:
            # every nearby reachable node is full: overwrite the farthest link of the closest one
            for t in range(cnt):
                if seen[out_i[t]] and out_i[t] != u:
                    host = out_i[t]
                    hostd = out_d[t]
                    break
            worst = 0
            for t in range(1, count0[host]):
                if dist0[host, t] > dist0[host, worst]:
                    worst = t
            links0[host, worst] = u
            dist0[host, worst] = hostd
        else:
            links0[host, count0[host]] = u
            dist0[host, count0[host]] = hostd
            count0[host] += 1
        _unscatter(qbuf, indptr, indices, u)
        added += 1
        # overwriting a link could orphan someone already marked; recompute from scratch
        seen[:] = 0
        _reach(entry, links0, count0, seen)
    return added


@njit(cache=True, nogil=True)
def search_graph(qdense, indptr, indices, data, entry, top, k, ef, links0, count0, uoff, ulinks, ucount):
    """Approximate k nearest rows to the scattered query; returns (ids, dists) ascending."""
    n = count0.shape[0]
    ef = max(ef, k)
    visited = np.zeros(n, dtype=np.int32)
    ckeys = np.empty(n + 1)
    cvals = np.empty(n + 1, dtype=np.int64)
    rkeys = np.empty(ef + 2)
    rvals = np.empty(ef + 2, dtype=np.int64)
    out_d = np.empty(ef + 2)
    out_i = np.empty(ef + 2, dtype=np.int64)
    cur = entry
    curd = _gather_dist(qdense, indptr, indices, data, cur)
    for lv in range(top, 0, -1):
        cur, curd = _greedy(qdense, indptr, indices, data, cur, curd, lv, links0, count0, uoff, ulinks, ucount)
    cnt = _search_layer(
        qdense, indptr, indices, data, cur, curd, ef, 0, links0, count0, uoff, ulinks, ucount,
        visited, 1, ckeys, cvals, rkeys, rvals, out_d, out_i,
    )
    cnt = min(cnt, k)
    return out_i[:cnt].copy(), out_d[:cnt].copy()
