# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, M_PI
from libc.stdlib cimport malloc, calloc, free

from .errors import ParseError, ValidationError

cnp.import_array()

# exp(-0.5 * 40**2) is far below the smallest subnormal double
cdef double KDE_CUTOFF = 40.0


def lcs_length(a, b):
    """Length of the longest common subsequence of two sequences."""
    cdef Py_ssize_t n, m, i, j
    cdef int *prev
    cdef int *cur
    cdef int *tmp
    cdef int result
    if len(a) < len(b):
        a, b = b, a
    n = len(a)
    m = len(b)
    if m == 0:
        return 0
    if isinstance(a, str) and isinstance(b, str):
        return _lcs_str(a, b)
    prev = <int *> calloc(m + 1, sizeof(int))
    cur = <int *> calloc(m + 1, sizeof(int))
    try:
        for i in range(n):
            x = a[i]
            cur[0] = 0
            for j in range(m):
                if x == b[j]:
                    cur[j + 1] = prev[j] + 1
                elif cur[j] > prev[j + 1]:
                    cur[j + 1] = cur[j]
                else:
                    cur[j + 1] = prev[j + 1]
            tmp = prev
            prev = cur
            cur = tmp
        result = prev[m]
    finally:
        free(prev)
        free(cur)
    return result


cdef int _lcs_str(str a, str b):
    cdef Py_ssize_t n = len(a), m = len(b), i, j
    cdef int *prev = <int *> calloc(m + 1, sizeof(int))
    cdef int *cur = <int *> calloc(m + 1, sizeof(int))
    cdef Py_UCS4 *bb = <Py_UCS4 *> malloc(m * sizeof(Py_UCS4))
    cdef int *tmp
    cdef Py_UCS4 x
    cdef int result
    try:
        for j in range(m):
            bb[j] = b[j]
        for i in range(n):
            x = a[i]
            cur[0] = 0
            for j in range(m):
                if x == bb[j]:
                    cur[j + 1] = prev[j] + 1
                elif cur[j] > prev[j + 1]:
                    cur[j + 1] = cur[j]
                else:
                    cur[j + 1] = prev[j + 1]
            tmp = prev
            prev = cur
            cur = tmp
        result = prev[m]
    finally:
        free(prev)
        free(cur)
        free(bb)
    return result


def edit_similarity(a, b):
    """Normalized indel similarity ``2 * LCS / (|a| + |b|)``; 1.0 for two empty strings."""
    cdef Py_ssize_t total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * lcs_length(a, b) / total


def unmatched_mask(a, b):
    """Flags for the items of ``b`` left out of a longest common subsequence with ``a``."""
    cdef Py_ssize_t n = len(a), m = len(b), i, j
    cdef cnp.int64_t[:] aa = np.asarray([hash(x) for x in a], dtype=np.int64) if n else np.zeros(0, dtype=np.int64)
    cdef cnp.int64_t[:] bb = np.asarray([hash(x) for x in b], dtype=np.int64) if m else np.zeros(0, dtype=np.int64)
    cdef cnp.int32_t[:, :] dp = np.zeros((n + 1, m + 1), dtype=np.int32)
    # hash equality is only a prefilter; confirm with ==
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if aa[i] == bb[j] and a[i] == b[j]:
                dp[i, j] = dp[i + 1, j + 1] + 1
            elif dp[i + 1, j] >= dp[i, j + 1]:
                dp[i, j] = dp[i + 1, j]
            else:
                dp[i, j] = dp[i, j + 1]
    out = [True] * m
    i = 0
    j = 0
    while i < n and j < m:
        if aa[i] == bb[j] and a[i] == b[j]:
            out[j] = False
            i += 1
            j += 1
        elif dp[i + 1, j] >= dp[i, j + 1]:
            i += 1
        else:
            j += 1
    return out


def ngram_counts(list tokens, int low, int high):
    """Counts of all n-grams with ``low <= n <= high``, joined by single spaces."""
    cdef dict counts = {}
    cdef Py_ssize_t n_tok = len(tokens), i
    cdef int n
    for n in range(low, high + 1):
        if n == 1:
            for t in tokens:
                counts[t] = counts.get(t, 0) + 1
            continue
        for i in range(n_tok - n + 1):
            g = " ".join(tokens[i:i + n])
            counts[g] = counts.get(g, 0) + 1
    return counts


def gaussian_kde_sum(samples, points, double bandwidth):
    """Gaussian KDE ``(1/(n h)) sum phi((x - x_i)/h)`` at every point.

    Samples are sorted once and each point only visits those within
    ``KDE_CUTOFF`` bandwidths; farther terms underflow to exactly 0.0.
    """
    cdef const double[:] xs = np.sort(np.asarray(samples, dtype=np.float64))
    cdef const double[:] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0], m = pts.shape[0], i, k, lo, hi, mid
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef double norm = 1.0 / (n * bandwidth * sqrt(2.0 * M_PI))
    cdef double reach = KDE_CUTOFF * bandwidth
    cdef double acc, z, x, left
    for k in range(m):
        x = pts[k]
        left = x - reach
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) // 2
            if xs[mid] < left:
                lo = mid + 1
            else:
                hi = mid
        acc = 0.0
        i = lo
        while i < n and xs[i] <= x + reach:
            z = (x - xs[i]) / bandwidth
            acc += exp(-0.5 * z * z)
            i += 1
        out[k] = acc * norm
    return out_arr


def unescape(str text):
    if "\\" not in text:
        return text
    cdef list out = []
    cdef Py_ssize_t i = 0, n = len(text)
    cdef Py_UCS4 c, nxt
    while i < n:
        c = text[i]
        if c == u"\\" and i + 1 < n:
            nxt = text[i + 1]
            if nxt == u"t":
                out.append("\t")
            elif nxt == u"n":
                out.append("\n")
            elif nxt == u"r":
                out.append("\r")
            elif nxt == u"\\":
                out.append("\\")
            else:
                out.append(nxt)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def parse_fact_rows(lines, Py_ssize_t start_lineno, dict ts_cache, parse_ts, obj_cls):
    """Parse snapshot body lines into ``(s, p, object, t_v, t_a)`` tuples."""
    cdef list rows = []
    cdef Py_ssize_t lineno = start_lineno - 1
    cdef str line, s, p, kind, value, tv_text, ta_text
    cdef list fields
    for line in lines:
        lineno += 1
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise ParseError(f"expected 6 tab-separated fields, got {len(fields)}", lineno)
        s = fields[0]
        p = fields[1]
        kind = fields[2]
        value = fields[3]
        tv_text = fields[4]
        ta_text = fields[5]
        if not s or not p:
            raise ParseError("empty subject or property", lineno)
        if not ta_text:
            raise ParseError("missing transaction time", lineno)
        try:
            if kind == "literal":
                obj = obj_cls("literal", unescape(value))
            elif kind == "entity":
                if not value or " " in value or "\\" in value:
                    raise ValidationError(f"malformed entity id {value!r}")
                obj = obj_cls("entity", value)
            else:
                raise ValidationError(f"unknown object kind {kind!r}")
            if tv_text:
                tv = ts_cache.get(tv_text)
                if tv is None:
                    tv = parse_ts(tv_text)
                    ts_cache[tv_text] = tv
            else:
                tv = None
            ta = ts_cache.get(ta_text)
            if ta is None:
                ta = parse_ts(ta_text)
                ts_cache[ta_text] = ta
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from None
        rows.append((s, p, obj, tv, ta))
    return rows
