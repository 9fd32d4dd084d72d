"""Pure-Python hot kernels.

Reference implementations for ``_ckernels.pyx``; both must return identical
results for identical inputs. Used when the extension is not built or when
``KBSTAB_PURE_PYTHON=1``.
"""

import math

import numpy as np

from .errors import ParseError, ValidationError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def lcs_length(a, b):
    """Length of the longest common subsequence of two sequences."""
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    if m == 0:
        return 0
    prev = [0] * (m + 1)
    for x in a:
        cur = [0] * (m + 1)
        for j in range(m):
            if x == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = cur[j] if cur[j] > prev[j + 1] else prev[j + 1]
        prev = cur
    return prev[m]


def edit_similarity(a, b):
    """Normalized indel similarity ``2 * LCS / (|a| + |b|)``; 1.0 for two empty strings."""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * lcs_length(a, b) / total


def unmatched_mask(a, b):
    """Flags for the items of ``b`` left out of a longest common subsequence with ``a``.

    Ties are resolved deterministically: when dropping from either side keeps
    the LCS length, the item of ``a`` is dropped first.
    """
    n, m = len(a), len(b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = dp[i], dp[i + 1]
        ai = a[i]
        for j in range(m - 1, -1, -1):
            if ai == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    out = [True] * m
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            out[j] = False
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return out


def ngram_counts(tokens, low, high):
    """Counts of all n-grams with ``low <= n <= high``, joined by single spaces."""
    counts = {}
    n_tok = len(tokens)
    for n in range(low, high + 1):
        if n == 1:
            for t in tokens:
                counts[t] = counts.get(t, 0) + 1
            continue
        for i in range(n_tok - n + 1):
            g = " ".join(tokens[i : i + n])
            counts[g] = counts.get(g, 0) + 1
    return counts


def gaussian_kde_sum(samples, points, bandwidth):
    """Gaussian KDE ``(1/(n h)) sum phi((x - x_i)/h)`` at every point."""
    samples = np.asarray(samples, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    n = samples.shape[0]
    out = np.empty(points.shape[0], dtype=np.float64)
    norm = 1.0 / (n * bandwidth * _SQRT_2PI)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, points.shape[0], chunk):
        z = (points[start : start + chunk, None] - samples[None, :]) / bandwidth
        out[start : start + chunk] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return out


def unescape(text):
    if "\\" not in text:
        return text
    out = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\\" and i + 1 < n:
            nxt = text[i + 1]
            if nxt == "t":
                out.append("\t")
            elif nxt == "n":
                out.append("\n")
            elif nxt == "r":
                out.append("\r")
            elif nxt == "\\":
                out.append("\\")
            else:
                out.append(nxt)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def parse_fact_rows(lines, start_lineno, ts_cache, parse_ts, obj_cls):
    """Parse snapshot body lines into ``(s, p, object, t_v, t_a)`` tuples.

    ``ts_cache`` memoizes ``parse_ts`` across calls. Blank lines are skipped.
    Raises ``ParseError`` with the 1-based line number of the first bad line.
    """
    rows = []
    lineno = start_lineno - 1
    for line in lines:
        lineno += 1
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise ParseError(f"expected 6 tab-separated fields, got {len(fields)}", lineno)
        s, p, kind, value, tv_text, ta_text = fields
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
