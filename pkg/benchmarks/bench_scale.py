"""Ingest and diff throughput on a 1,000,000-fact snapshot pair.

Run: python3 benchmarks/bench_scale.py [--entities 100000] [--properties 10]
Prints one JSON object with timings and peak RSS.
"""

import argparse
import json
import resource
import tempfile
import time
from pathlib import Path

import numpy as np

from kbstab import changes, ingest
from kbstab.model import Interval, KbTimestamp, ObjectValue, Record, Snapshot


def build(n_entities, n_props, seed=0):
    """Two snapshots with one record per pair; about 10% of pairs change."""
    rng = np.random.default_rng(seed)
    t1, t2 = KbTimestamp.of(2017), KbTimestamp.of(2020)
    ta_old, ta_new = KbTimestamp.of(2015, 3, 1), KbTimestamp.of(2019, 6, 1)
    tv_new = KbTimestamp.of(2018)
    objs = rng.integers(1, 1_000_000, size=(n_entities, n_props))
    change = rng.random((n_entities, n_props)) < 0.1
    props = [f"P{100 + j}" for j in range(n_props)]
    g1, g2 = {}, {}
    for i in range(n_entities):
        s = f"Q{i}"
        for j, p in enumerate(props):
            r = Record(ObjectValue("entity", f"Q{objs[i, j]}"), None, ta_old)
            g1[(s, p)] = [r]
            if change[i, j]:
                g2[(s, p)] = [r, Record(ObjectValue("entity", f"Q{objs[i, j] + 1}"), tv_new, ta_new)]
            else:
                g2[(s, p)] = [r]
    return Snapshot.from_groups(t1, g1), Snapshot.from_groups(t2, g2)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--entities", type=int, default=100_000)
    ap.add_argument("--properties", type=int, default=10)
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    s1, s2 = build(args.entities, args.properties)
    build_s = time.perf_counter() - t0
    with tempfile.TemporaryDirectory() as d:
        p1, p2 = Path(d) / "t1.tsv", Path(d) / "t2.tsv"
        ingest.write_snapshot(s1, p1)
        ingest.write_snapshot(s2, p2)
        del s1, s2
        t0 = time.perf_counter()
        s1 = ingest.load_snapshot(p1)
        ingest_s = time.perf_counter() - t0
        s2 = ingest.load_snapshot(p2)
    t0 = time.perf_counter()
    records = changes.analyze(s1, s2, "timestamp", Interval.make(s1.sampled_at, s2.sampled_at))
    diff_s = time.perf_counter() - t0
    print(json.dumps({
        "facts": len(s1),
        "build_seconds": build_s,
        "ingest_seconds": ingest_s,
        "ingest_facts_per_second": len(s1) / ingest_s,
        "diff_seconds": diff_s,
        "changed_pairs": len(records),
        "peak_rss_mb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024,
    }))


if __name__ == "__main__":
    main()
