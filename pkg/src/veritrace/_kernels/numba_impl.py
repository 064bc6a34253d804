"""Numba-compiled kernel implementations.

Same algorithms and accumulation order as ``numpy_impl``; the two backends
agree to float rounding (not guaranteed bitwise for reductions, where numpy
uses pairwise summation). Kernels are cached to disk after first compile.
"""
from __future__ import annotations

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
from numba import njit, prange

BACKEND = "numba"

ID_PAD = np.int64(2**62)

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def entropy_rows(lps, counts, bucket):
    t = lps.shape[0]
    out = np.empty(t)
    for i in range(t):
        n = counts[i]
        total = 0.0
        ent = 0.0
        for c in range(n):
            p = np.exp(lps[i, c])
            total += p
            if p > 0.0:
                ent -= p * np.log(p)
        if bucket:
            resid = 1.0 - total
            if resid > 0.0:
                ent -= resid * np.log(resid)
            out[i] = ent
        else:
            # -sum((p/s) ln(p/s)) = (ent + total*ln(s)) / s
            out[i] = (ent + total * np.log(total)) / total
    return out


@njit(**_OPTS)
def kl_aligned(ids_p, lps_p, cnt_p, ids_q, lps_q, cnt_q, idx_p, idx_q, epsilon):
    m_total = idx_p.shape[0]
    out = np.empty(m_total)
    kmax = ids_p.shape[1] + ids_q.shape[1]
    p_raw = np.empty(kmax)
    q_raw = np.empty(kmax)
    for m in range(m_total):
        i = idx_p[m]
        j = idx_q[m]
        np_i = cnt_p[i]
        nq_j = cnt_q[j]
        u = 0
        a = 0
        b = 0
        # merge the two id-sorted rows into the union support
        while a < np_i or b < nq_j:
            ida = ids_p[i, a] if a < np_i else ID_PAD
            idb = ids_q[j, b] if b < nq_j else ID_PAD
            if ida < idb:
                p_raw[u] = np.exp(lps_p[i, a])
                q_raw[u] = epsilon
                a += 1
            elif idb < ida:
                p_raw[u] = epsilon
                q_raw[u] = np.exp(lps_q[j, b])
                b += 1
            else:
                p_raw[u] = np.exp(lps_p[i, a])
                q_raw[u] = np.exp(lps_q[j, b])
                a += 1
                b += 1
            u += 1
        sp = 0.0
        sq = 0.0
        for c in range(u):
            sp += p_raw[c]
            sq += q_raw[c]
        kl = 0.0
        for c in range(u):
            p = p_raw[c] / sp
            q = q_raw[c] / sq
            kl += p * (np.log(p) - np.log(q))
        out[m] = kl
    return out


@njit(**_OPTS)
def moments_columns(x):
    t = x.shape[0]
    c = x.shape[1]
    out = np.zeros((c, 5))
    for j in range(c):
        s = 0.0
        for i in range(t):
            s += x[i, j]
        mean = s / t
        m2 = 0.0
        m3 = 0.0
        m4 = 0.0
        m5 = 0.0
        for i in range(t):
            d = x[i, j] - mean
            d2 = d * d
            m2 += d2
            m3 += d2 * d
            m4 += d2 * d2
            m5 += d2 * d2 * d
        m2 /= t
        m3 /= t
        m4 /= t
        m5 /= t
        out[j, 0] = mean
        out[j, 1] = m2
        if m2 >= 1e-12:
            sd = np.sqrt(m2)
            out[j, 2] = m3 / (sd * m2)
            out[j, 3] = m4 / (m2 * m2)
            out[j, 4] = m5 / (sd * m2 * m2)
    return out


@njit(parallel=True, **_OPTS)
def _node_hist(xb, feat_idx, samples, g, h, hg, hh, hc):
    nf = feat_idx.shape[0]
    ns = samples.shape[0]
    for fi in prange(nf):
        row = xb[feat_idx[fi]]
        for si in range(ns):
            i = samples[si]
            b = row[i]
            hg[fi, b] += g[i]
            hh[fi, b] += h[i]
            hc[fi, b] += 1


@njit(**_OPTS)
def _best_split(hg, hh, hc, n_bins, lam, min_gain):
    nf = hg.shape[0]
    best_f = -1
    best_b = -1
    best_gain = min_gain
    for fi in range(nf):
        g_tot = 0.0
        h_tot = 0.0
        c_tot = 0
        for b in range(n_bins):
            g_tot += hg[fi, b]
            h_tot += hh[fi, b]
            c_tot += hc[fi, b]
        parent = g_tot * g_tot / (h_tot + lam)
        gl = 0.0
        hl = 0.0
        cl = 0
        for b in range(n_bins - 1):
            gl += hg[fi, b]
            hl += hh[fi, b]
            cl += hc[fi, b]
            cr = c_tot - cl
            if cl == 0 or cr == 0:
                continue
            gr = g_tot - gl
            hr = h_tot - hl
            gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
            if gain > best_gain:
                best_f = fi
                best_b = b
                best_gain = gain
    return best_f, best_b


@njit(**_OPTS)
def grow_tree(xb, feat_idx, g, h, n_bins, lam, min_gain, max_depth):
    nn = 2 ** (max_depth + 1) - 1
    nf = feat_idx.shape[0]
    n = xb.shape[1]
    feat = np.full(nn, -1, dtype=np.int64)
    sbin = np.full(nn, -1, dtype=np.int64)
    val = np.zeros(nn)
    hg = np.zeros((nn, nf, n_bins))
    hh = np.zeros((nn, nf, n_bins))
    hc = np.zeros((nn, nf, n_bins), dtype=np.int64)
    seg = np.full((nn, 2), -1, dtype=np.int64)  # [start, end) into `order`
    order = np.arange(n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    seg[0, 0] = 0
    seg[0, 1] = n
    _node_hist(xb, feat_idx, order, g, h, hg[0], hh[0], hc[0])
    first_leaf = 2**max_depth - 1
    for node in range(first_leaf):
        start = seg[node, 0]
        end = seg[node, 1]
        if start < 0 or end - start < 2:
            continue
        f_local, b = _best_split(hg[node], hh[node], hc[node], n_bins, lam, min_gain)
        if f_local < 0:
            continue
        feat[node] = f_local
        sbin[node] = b
        row = xb[feat_idx[f_local]]
        nl = 0
        nr = 0
        for si in range(start, end):
            i = order[si]
            if row[i] <= b:
                order[start + nl] = i
                nl += 1
            else:
                buf[nr] = i
                nr += 1
        for si in range(nr):
            order[start + nl + si] = buf[si]
        lc = 2 * node + 1
        rc = 2 * node + 2
        seg[lc, 0] = start
        seg[lc, 1] = start + nl
        seg[rc, 0] = start + nl
        seg[rc, 1] = end
        seg[node, 0] = -2  # mark split; no longer a leaf candidate
        if lc < first_leaf:
            if nl <= nr:
                _node_hist(xb, feat_idx, order[start : start + nl], g, h, hg[lc], hh[lc], hc[lc])
                for fi in range(nf):
                    for bb in range(n_bins):
                        hg[rc, fi, bb] = hg[node, fi, bb] - hg[lc, fi, bb]
                        hh[rc, fi, bb] = hh[node, fi, bb] - hh[lc, fi, bb]
                        hc[rc, fi, bb] = hc[node, fi, bb] - hc[lc, fi, bb]
            else:
                _node_hist(xb, feat_idx, order[start + nl : end], g, h, hg[rc], hh[rc], hc[rc])
                for fi in range(nf):
                    for bb in range(n_bins):
                        hg[lc, fi, bb] = hg[node, fi, bb] - hg[rc, fi, bb]
                        hh[lc, fi, bb] = hh[node, fi, bb] - hh[rc, fi, bb]
                        hc[lc, fi, bb] = hc[node, fi, bb] - hc[rc, fi, bb]
    node_of = np.zeros(n, dtype=np.int64)
    for node in range(nn):
        start = seg[node, 0]
        end = seg[node, 1]
        if start < 0 or feat[node] >= 0 or end - start == 0:
            continue
        gs = 0.0
        hs = 0.0
        for si in range(start, end):
            i = order[si]
            gs += g[i]
            hs += h[i]
        leaf_value = -gs / (hs + lam)
        val[node] = leaf_value
        for si in range(start, end):
            node_of[order[si]] = node
    return feat, sbin, val, node_of


@njit(**_OPTS)
def predict_forest(feat, thr, val, offsets, x):
    n = x.shape[0]
    margins = np.zeros(n)
    n_trees = offsets.shape[0] - 1
    for i in range(n):
        total = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feat[base + node] >= 0:
                f = feat[base + node]
                if x[i, f] <= thr[base + node]:
                    node = 2 * node + 1
                else:
                    node = 2 * node + 2
            total += val[base + node]
        margins[i] = total
    return margins
