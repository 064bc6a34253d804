"""Pure-numpy kernel implementations.

Reference path for every hot kernel. The numba implementations in
``numba_impl`` follow the same accumulation order so both backends agree
to float rounding; correctness tests run against this module.
"""
from __future__ import annotations

import numpy as np

BACKEND = "numpy"

# Sentinel used to pad token-id rows past their candidate count. Must sort
# after every real token id.
ID_PAD = np.int64(2**62)


def entropy_rows(lps: np.ndarray, counts: np.ndarray, bucket: bool) -> np.ndarray:
    """Shannon entropy in nats per row of a padded logprob matrix.

    lps is (T, K) with -inf padding beyond counts[t] candidates. In bucket
    mode the unobserved residual mass r = max(0, 1 - sum p) contributes one
    pseudo-token term -r*ln(r); in renormalize mode probabilities are scaled
    to sum to 1.
    """
    probs = np.exp(lps)
    probs[~np.isfinite(lps)] = 0.0
    totals = probs.sum(axis=1)
    if bucket:
        terms = np.where(probs > 0.0, -probs * np.log(np.where(probs > 0.0, probs, 1.0)), 0.0)
        ent = terms.sum(axis=1)
        resid = np.maximum(0.0, 1.0 - totals)
        ent = np.where(resid > 0.0, ent - resid * np.log(np.where(resid > 0.0, resid, 1.0)), ent)
        return ent
    scaled = probs / totals[:, None]
    terms = np.where(scaled > 0.0, -scaled * np.log(np.where(scaled > 0.0, scaled, 1.0)), 0.0)
    return terms.sum(axis=1)


def kl_aligned(
    ids_p: np.ndarray,
    lps_p: np.ndarray,
    cnt_p: np.ndarray,
    ids_q: np.ndarray,
    lps_q: np.ndarray,
    cnt_q: np.ndarray,
    idx_p: np.ndarray,
    idx_q: np.ndarray,
    epsilon: float,
) -> np.ndarray:
    """KL(P||Q) in nats for each aligned step pair.

    ids_* are (T, K) token-id rows sorted ascending with ID_PAD padding,
    lps_* the matching logprobs. For each (idx_p[m], idx_q[m]) the union
    support is built, missing entries floored at epsilon, both sides
    renormalized over the union.
    """
    out = np.empty(idx_p.shape[0], dtype=np.float64)
    for m in range(idx_p.shape[0]):
        i = int(idx_p[m])
        j = int(idx_q[m])
        np_i = int(cnt_p[i])
        nq_j = int(cnt_q[j])
        pi = ids_p[i, :np_i]
        qi = ids_q[j, :nq_j]
        union = np.union1d(pi, qi)
        p_raw = np.full(union.shape[0], epsilon)
        q_raw = np.full(union.shape[0], epsilon)
        p_raw[np.searchsorted(union, pi)] = np.exp(lps_p[i, :np_i])
        q_raw[np.searchsorted(union, qi)] = np.exp(lps_q[j, :nq_j])
        p = p_raw / p_raw.sum()
        q = q_raw / q_raw.sum()
        out[m] = float(np.sum(p * (np.log(p) - np.log(q))))
    return out


def moments_columns(x: np.ndarray) -> np.ndarray:
    """Five standardized population moments per column of x (T, C).

    Returns (C, 5): mean, variance (m2), skewness m3/m2^1.5, raw kurtosis
    m4/m2^2, hyperskewness m5/m2^2.5. Columns with m2 < 1e-12 get zeros for
    the three standardized entries.
    """
    t = x.shape[0]
    mean = x.sum(axis=0) / t
    d = x - mean
    d2 = d * d
    m2 = d2.sum(axis=0) / t
    m3 = (d2 * d).sum(axis=0) / t
    m4 = (d2 * d2).sum(axis=0) / t
    m5 = (d2 * d2 * d).sum(axis=0) / t
    out = np.zeros((x.shape[1], 5))
    out[:, 0] = mean
    out[:, 1] = m2
    ok = m2 >= 1e-12
    s = np.sqrt(m2[ok])
    out[ok, 2] = m3[ok] / (s * m2[ok])
    out[ok, 3] = m4[ok] / (m2[ok] * m2[ok])
    out[ok, 4] = m5[ok] / (s * m2[ok] * m2[ok])
    return out


# ---------------------------------------------------------------------------
# Gradient-boosted tree kernels. Trees are stored as perfect binary arrays of
# 2^(depth+1)-1 nodes; node i has children 2i+1 / 2i+2 and feature -1 marks a
# leaf. Split semantics: bin <= split_bin goes left.
# ---------------------------------------------------------------------------


def _node_hist(xb, feat_idx, samples, g, h, n_bins):
    nf = feat_idx.shape[0]
    if samples.shape[0] == 0:
        return (
            np.zeros((nf, n_bins)),
            np.zeros((nf, n_bins)),
            np.zeros((nf, n_bins), dtype=np.int64),
        )
    bins = xb[feat_idx[:, None], samples[None, :]]  # (nf, ns)
    flat = ((np.arange(nf, dtype=np.int64) * n_bins)[:, None] + bins).ravel()
    gs = np.broadcast_to(g[samples], (nf, samples.shape[0])).ravel()
    hs = np.broadcast_to(h[samples], (nf, samples.shape[0])).ravel()
    hg = np.bincount(flat, weights=gs, minlength=nf * n_bins).reshape(nf, n_bins)
    hh = np.bincount(flat, weights=hs, minlength=nf * n_bins).reshape(nf, n_bins)
    hc = np.bincount(flat, minlength=nf * n_bins).reshape(nf, n_bins).astype(np.int64)
    return hg, hh, hc


def _best_split(hg, hh, hc, n_bins, lam, min_gain):
    gl = np.cumsum(hg[:, : n_bins - 1], axis=1)
    hl = np.cumsum(hh[:, : n_bins - 1], axis=1)
    cl = np.cumsum(hc[:, : n_bins - 1], axis=1)
    g_tot = gl[:, -1:] + hg[:, n_bins - 1 : n_bins]
    h_tot = hl[:, -1:] + hh[:, n_bins - 1 : n_bins]
    c_tot = cl[:, -1:] + hc[:, n_bins - 1 : n_bins]
    gr = g_tot - gl
    hr = h_tot - hl
    cr = c_tot - cl
    parent = g_tot * g_tot / (h_tot + lam)
    gains = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
    gains[(cl == 0) | (cr == 0)] = -np.inf
    flat = int(np.argmax(gains))
    best = gains.ravel()[flat]
    if not np.isfinite(best) or best <= min_gain:
        return -1, -1
    return flat // (n_bins - 1), flat % (n_bins - 1)


def grow_tree(xb, feat_idx, g, h, n_bins, lam, min_gain, max_depth):
    """Grow one depth-limited tree; returns (feat_local, split_bin, leaf_value,
    node_of) where node_of maps each sample to its final leaf node index."""
    nn = 2 ** (max_depth + 1) - 1
    feat = np.full(nn, -1, dtype=np.int64)
    sbin = np.full(nn, -1, dtype=np.int64)
    val = np.zeros(nn)
    n = xb.shape[1]
    segments = {0: np.arange(n, dtype=np.int64)}
    hists = {0: _node_hist(xb, feat_idx, segments[0], g, h, n_bins)}
    first_leaf = 2**max_depth - 1
    for node in range(first_leaf):
        samples = segments.get(node)
        if samples is None or samples.shape[0] < 2:
            continue
        hg, hh, hc = hists[node]
        f_local, b = _best_split(hg, hh, hc, n_bins, lam, min_gain)
        if f_local < 0:
            continue
        feat[node] = f_local
        sbin[node] = b
        row = xb[feat_idx[f_local]]
        mask = row[samples] <= b
        left = samples[mask]
        right = samples[~mask]
        segments[2 * node + 1] = left
        segments[2 * node + 2] = right
        if 2 * node + 1 < first_leaf:
            # histogram subtraction: build the smaller child, derive the other
            if left.shape[0] <= right.shape[0]:
                hl_ = _node_hist(xb, feat_idx, left, g, h, n_bins)
                hists[2 * node + 1] = hl_
                hists[2 * node + 2] = (hg - hl_[0], hh - hl_[1], hc - hl_[2])
            else:
                hr_ = _node_hist(xb, feat_idx, right, g, h, n_bins)
                hists[2 * node + 2] = hr_
                hists[2 * node + 1] = (hg - hr_[0], hh - hr_[1], hc - hr_[2])
        del hists[node], segments[node]
    node_of = np.zeros(n, dtype=np.int64)
    for node, samples in segments.items():
        if feat[node] >= 0 or samples.shape[0] == 0:
            continue
        gs = float(g[samples].sum())
        hs = float(h[samples].sum())
        val[node] = -gs / (hs + lam)
        node_of[samples] = node
    return feat, sbin, val, node_of


def predict_forest(feat, thr, val, offsets, x):
    """Sum of leaf values over all trees for each row of x (N, F).

    feat/thr/val are flat per-node arrays, offsets[t] the start of tree t.
    """
    n = x.shape[0]
    margins = np.zeros(n)
    idx_rows = np.arange(n)
    for t in range(offsets.shape[0] - 1):
        base = offsets[t]
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = feat[base + node]
            active = f >= 0
            if not active.any():
                break
            go_left = np.zeros(n, dtype=bool)
            go_left[active] = x[idx_rows[active], f[active]] <= thr[base + node[active]]
            node = np.where(active, np.where(go_left, 2 * node + 1, 2 * node + 2), node)
        margins += val[base + node]
    return margins
