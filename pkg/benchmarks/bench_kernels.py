"""Compare the compiled and pure-Python kernel backends.

Run: python3 benchmarks/bench_kernels.py [--repeat 5]
Prints a table of best-of-N wall times per kernel and the speedup.
"""

import argparse
import timeit

import numpy as np

from kbstab import _kernels
from kbstab.model import KbTimestamp, ObjectValue


def workloads(rng):
    words = [f"w{i}" for i in range(200)]
    toks = [words[i] for i in rng.integers(0, 200, size=20_000)]
    strings = ["".join(rng.choice(list("abcdefgh"), size=60)) for _ in range(200)]
    lines_a = [" ".join(rng.choice(words, size=6)) for _ in range(400)]
    lines_b = lines_a[:200] + [" ".join(rng.choice(words, size=6)) for _ in range(50)] + lines_a[200:]
    samples = rng.gamma(2.0, 2.0, size=5000)
    points = np.linspace(0, 30, 1024)
    escaped = ["a\\tb\\\\c\\nd" * 4] * 5000
    rows = [f"Q{i}\tP54\tentity\tQ{i + 7}\t2018-05-0{1 + i % 9}\t2019-01-01\n" for i in range(20_000)]
    return {
        "edit_similarity": lambda k: [k.edit_similarity(a, b) for a, b in zip(strings, strings[1:])],
        "unmatched_mask": lambda k: k.unmatched_mask(lines_a, lines_b),
        "ngram_counts": lambda k: k.ngram_counts(toks, 1, 3),
        "gaussian_kde_sum": lambda k: k.gaussian_kde_sum(samples, points, 0.5),
        "unescape": lambda k: [k.unescape(s) for s in escaped],
        "parse_fact_rows": lambda k: k.parse_fact_rows(rows, 2, {}, KbTimestamp.parse, ObjectValue),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels.compiled_backend is None:
        raise SystemExit("compiled backend unavailable; rebuild with `pip install -e . --no-build-isolation`")
    backends = {"python": _kernels.python_backend, "cython": _kernels.compiled_backend}
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in workloads(np.random.default_rng(0)).items():
        t = {b: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) * 1e3
             for b, k in backends.items()}
        print(f"{name:<18}{t['python']:>12.2f}{t['cython']:>12.2f}{t['python'] / t['cython']:>9.1f}x")


if __name__ == "__main__":
    main()
