"""Pure numpy fallback for the compiled kernels.

Signature-compatible with ``_ckern``; used when the extension is not built
or when ``GAPAUDIT_BACKEND=py`` forces it.  Bin indices are computed with the
same truncation rule as the C code so histograms agree bitwise on identical
score blocks.
"""

import numpy as np


def _fold_values(vals, lo, inv_width, hist, mom):
    if vals.size == 0:
        return
    vals = vals.astype(np.float64, copy=False)
    idx = ((vals - lo) * inv_width).astype(np.int64)
    np.clip(idx, 0, hist.shape[0] - 1, out=idx)
    hist += np.bincount(idx, minlength=hist.shape[0])
    nb = vals.size
    mb = vals.mean()
    m2b = float(((vals - mb) ** 2).sum())
    na, ma, m2a = mom[0], mom[1], mom[2]
    n = na + nb
    delta = mb - ma
    mom[1] = ma + delta * (nb / n)
    mom[2] = m2a + m2b + delta * delta * (na * nb / n)
    mom[0] = n
    mom[3] = min(mom[3], float(vals.min()))
    mom[4] = max(mom[4], float(vals.max()))


def accumulate_block(scores, row0, col0, subj, flag_a, flag_b, use_flags,
                     genuine, lo, inv_width, hist, mom):
    m, w = scores.shape
    gi = row0 + np.arange(m)
    gj = col0 + np.arange(w)
    keep = gj[None, :] > gi[:, None]
    same = subj[gj][None, :] == subj[gi][:, None]
    keep &= same if genuine else ~same
    if use_flags:
        fa_i = flag_a[gi].astype(bool)
        fb_i = flag_b[gi].astype(bool)
        fa_j = flag_a[gj].astype(bool)
        fb_j = flag_b[gj].astype(bool)
        keep &= (fa_i[:, None] & fb_j[None, :]) | (fb_i[:, None] & fa_j[None, :])
    _fold_values(scores[keep], lo, inv_width, hist, mom)


def accumulate_pairs(emb, ii, jj, lo, inv_width, hist, mom):
    # chunked gathers keep peak memory bounded for long pair lists
    step = 8192
    for s in range(0, ii.shape[0], step):
        a = emb[ii[s:s + step]]
        b = emb[jj[s:s + step]]
        vals = np.einsum("ij,ij->i", a, b, dtype=np.float64)
        _fold_values(vals, lo, inv_width, hist, mom)


def iou_scan(words, pops, query, query_pop, alive, start, end):
    live = np.flatnonzero(alive[start:end]) + start
    if live.size == 0:
        return -1, 0, 0
    inter = np.bitwise_count(words[live] & query[None, :]).sum(axis=1, dtype=np.int64)
    union = pops[live] + query_pop - inter
    iou = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    k = int(np.argmax(iou))
    return int(live[k]), int(inter[k]), int(union[k])


def popcount_rows(words):
    return np.bitwise_count(words).sum(axis=1, dtype=np.int64)
