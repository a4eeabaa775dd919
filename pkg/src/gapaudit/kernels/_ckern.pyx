# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused accumulation kernels for the quadratic-scale hot loops.

BLAS produces similarity blocks at the Python level; these kernels do the
single-pass work that numpy would need several temporaries for: pair
admissibility masking, histogram binning, streaming moments, and the packed
popcount IoU scans used by the balancer.  All loops release the GIL so block
tasks can run on real threads.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t

cdef extern from *:
    """
    static inline unsigned long long gap_popcount64(unsigned long long x) {
    #if defined(_MSC_VER)
        return __popcnt64(x);
    #else
        return __builtin_popcountll(x);
    #endif
    }
    """
    unsigned long long gap_popcount64(unsigned long long x) nogil


def accumulate_block(float[:, ::1] scores,
                     Py_ssize_t row0,
                     Py_ssize_t col0,
                     int32_t[::1] subj,
                     uint8_t[::1] flag_a,
                     uint8_t[::1] flag_b,
                     bint use_flags,
                     bint genuine,
                     double lo,
                     double inv_width,
                     int64_t[::1] hist,
                     double[::1] mom):
    """Fold a similarity block into (hist, mom).

    ``scores[r, c]`` is the similarity of global items ``row0 + r`` and
    ``col0 + c``; only unordered pairs (global j > global i) whose subject
    relation matches ``genuine`` (and whose split flags admit them) count.
    ``mom`` is the running ``[n, mean, m2, min, max]`` vector, updated by
    Welford's recurrence; it and ``hist`` accumulate in place.
    """
    cdef Py_ssize_t m = scores.shape[0]
    cdef Py_ssize_t w = scores.shape[1]
    cdef Py_ssize_t nbins = hist.shape[0]
    cdef Py_ssize_t r, c, start, gi, gj, bi
    cdef double n = mom[0]
    cdef double mean = mom[1]
    cdef double m2 = mom[2]
    cdef double mn = mom[3]
    cdef double mx = mom[4]
    cdef double s, d
    cdef int32_t si
    cdef bint same
    with nogil:
        for r in range(m):
            gi = row0 + r
            si = subj[gi]
            start = gi + 1 - col0
            if start < 0:
                start = 0
            for c in range(start, w):
                gj = col0 + c
                same = subj[gj] == si
                if same != genuine:
                    continue
                if use_flags:
                    if not ((flag_a[gi] and flag_b[gj]) or
                            (flag_b[gi] and flag_a[gj])):
                        continue
                s = scores[r, c]
                bi = <Py_ssize_t>((s - lo) * inv_width)
                if bi < 0:
                    bi = 0
                elif bi >= nbins:
                    bi = nbins - 1
                hist[bi] += 1
                n += 1.0
                d = s - mean
                mean += d / n
                m2 += d * (s - mean)
                if s < mn:
                    mn = s
                if s > mx:
                    mx = s
    mom[0] = n
    mom[1] = mean
    mom[2] = m2
    mom[3] = mn
    mom[4] = mx


def accumulate_pairs(float[:, ::1] emb,
                     int64_t[::1] ii,
                     int64_t[::1] jj,
                     double lo,
                     double inv_width,
                     int64_t[::1] hist,
                     double[::1] mom):
    """Score an explicit pair list (dot of normalized rows) into (hist, mom)."""
    cdef Py_ssize_t npairs = ii.shape[0]
    cdef Py_ssize_t dim = emb.shape[1]
    cdef Py_ssize_t nbins = hist.shape[0]
    cdef Py_ssize_t p, k, bi
    cdef double n = mom[0]
    cdef double mean = mom[1]
    cdef double m2 = mom[2]
    cdef double mn = mom[3]
    cdef double mx = mom[4]
    cdef double s, d
    cdef Py_ssize_t a, b
    with nogil:
        for p in range(npairs):
            a = ii[p]
            b = jj[p]
            s = 0.0
            for k in range(dim):
                s += <double>emb[a, k] * <double>emb[b, k]
            bi = <Py_ssize_t>((s - lo) * inv_width)
            if bi < 0:
                bi = 0
            elif bi >= nbins:
                bi = nbins - 1
            hist[bi] += 1
            n += 1.0
            d = s - mean
            mean += d / n
            m2 += d * (s - mean)
            if s < mn:
                mn = s
            if s > mx:
                mx = s
    mom[0] = n
    mom[1] = mean
    mom[2] = m2
    mom[3] = mn
    mom[4] = mx


def iou_scan(uint64_t[:, ::1] words,
             int64_t[::1] pops,
             uint64_t[::1] query,
             int64_t query_pop,
             uint8_t[::1] alive,
             Py_ssize_t start,
             Py_ssize_t end):
    """Best-IoU candidate for ``query`` among alive rows in [start, end).

    Ties keep the first (lowest index) candidate.  Two empty masks count as
    IoU 1.0.  Returns ``(index, intersection, union)`` with index -1 when no
    candidate is alive.
    """
    cdef Py_ssize_t nwords = query.shape[0]
    cdef Py_ssize_t k, wi
    cdef int64_t inter, union_
    cdef double iou, best = -1.0
    cdef Py_ssize_t best_idx = -1
    cdef int64_t best_inter = 0, best_union = 0
    with nogil:
        for k in range(start, end):
            if not alive[k]:
                continue
            inter = 0
            for wi in range(nwords):
                inter += <int64_t>gap_popcount64(words[k, wi] & query[wi])
            union_ = pops[k] + query_pop - inter
            if union_ == 0:
                iou = 1.0
            else:
                iou = <double>inter / <double>union_
            if iou > best:
                best = iou
                best_idx = k
                best_inter = inter
                best_union = union_
    return best_idx, best_inter, best_union


def popcount_rows(uint64_t[:, ::1] words):
    """Per-row population count of packed bitmaps."""
    cdef Py_ssize_t n = words.shape[0]
    cdef Py_ssize_t w = words.shape[1]
    cdef Py_ssize_t i, j
    cdef int64_t acc
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(w):
                acc += <int64_t>gap_popcount64(words[i, j])
            ov[i] = acc
    return out
