"""Observable change detection and cause classification between two snapshots."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import _kernels
from ._gc import gc_paused
from .errors import ContractError, ValidationError
from .metrics import Metrics, binary_metrics
from .model import (
    Interval,
    KbTimestamp,
    ObjectValue,
    PairState,
    Record,
    Snapshot,
    _check_same_pair,
    is_stable,
    record_sort_key,
)

log = logging.getLogger(__name__)

CRITERIA = ("timestamp", "pca", "bulk")
CAUSES = ("real_world", "completion", "correction")
LABELS = CAUSES + ("none",)
MODIFIED_SIMILARITY = 0.8


@dataclass(frozen=True)
class Diff:
    added: tuple
    removed: tuple
    modified: tuple  # (before, after) record pairs
    carried: tuple

    @property
    def empty(self) -> bool:
        return not (self.added or self.removed or self.modified)


@dataclass(frozen=True)
class ChangeRecord:
    subject: str
    property: str
    interval: Interval
    added: tuple = ()
    removed: tuple = ()
    modified: tuple = ()
    assigned_label: str = "none"
    criterion: Optional[str] = None
    signals: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        return (self.subject, self.property, self.interval)

    def label_under(self, criterion: str) -> str:
        """Label this change would get under another criterion; the signals carry everything needed."""
        if self.assigned_label == "none":
            return "none"
        if self.signals.get("correction_only"):
            return "correction"
        return "real_world" if self.signals[criterion] else "completion"


def observable_change(state1: PairState, state2: PairState) -> bool:
    return not is_stable(state1, state2)


def _key(record: Record, strict: bool):
    return record if strict else record[:2]


def diff(state1: PairState, state2: PairState, strict: bool = False,
         threshold: float = MODIFIED_SIMILARITY) -> Diff:
    """Split the records of two states into carried, added, removed and modified.

    A removed and an added record are paired as a modification when they share
    the object (with another valid time), or share the valid time and their
    object texts have edit similarity of at least ``threshold``.
    """
    _check_same_pair(state1, state2)
    keys1 = {_key(r, strict): r for r in state1.records}
    keys2 = {_key(r, strict): r for r in state2.records}
    carried = sorted((r for k, r in keys2.items() if k in keys1), key=record_sort_key)
    removed = sorted((r for k, r in keys1.items() if k not in keys2), key=record_sort_key)
    added = sorted((r for k, r in keys2.items() if k not in keys1), key=record_sort_key)
    if not removed or not added:
        return Diff(tuple(added), tuple(removed), (), tuple(carried))

    taken = [False] * len(added)
    pairs = []
    rest = []
    for r in removed:
        for j, a in enumerate(added):
            if not taken[j] and a.object == r.object:
                taken[j] = True
                pairs.append((r, a))
                break
        else:
            rest.append(r)
    unmatched = []
    for r in rest:
        best, best_sim = -1, threshold
        for j, a in enumerate(added):
            if taken[j] or a.valid_time != r.valid_time:
                continue
            sim = _kernels.edit_similarity(r.object.value, a.object.value)
            if sim >= best_sim and (best < 0 or sim > best_sim):
                best, best_sim = j, sim
        if best >= 0:
            taken[best] = True
            pairs.append((r, added[best]))
        else:
            unmatched.append(r)
    still_added = tuple(a for j, a in enumerate(added) if not taken[j])
    pairs.sort(key=lambda ba: (record_sort_key(ba[0]), record_sort_key(ba[1])))
    return Diff(still_added, tuple(unmatched), tuple(pairs), tuple(carried))


def timestamp_criterion(state2: PairState, interval: Interval, restrict_to=None) -> bool:
    """Some record has ``tau1 < t_v <= tau2``; ``restrict_to`` limits the records inspected."""
    records = state2.records if restrict_to is None else restrict_to
    return any(interval.contains(r[1]) for r in records)


def pca_criterion(state1: PairState, state2: PairState) -> bool:
    """``state1`` is non-empty and ``state2`` holds an object absent from ``state1``."""
    _check_same_pair(state1, state2)
    if not state1.records:
        return False
    old = state1.objects()
    return any(r.object not in old for r in state2.records)


def bulk_criterion(state1: PairState, state2: PairState) -> bool:
    """False only when two or more distinct new objects all arrived on one calendar day."""
    _check_same_pair(state1, state2)
    old = state1.keys()
    new = [r for r in state2.records if r[:2] not in old]
    objects = {r.object for r in new}
    if len(objects) <= 1:
        return True
    if len({r.transaction_time.as_date() for r in new}) == 1:
        return False
    for i, r1 in enumerate(new):
        d1 = r1.transaction_time.as_date()
        for r2 in new[i + 1:]:
            if r1.object != r2.object and d1 != r2.transaction_time.as_date():
                return True
    return False


def classify(state1: PairState, state2: PairState, interval: Interval, criterion: str = "timestamp",
             strict: bool = False, strict_timestamp: bool = False) -> ChangeRecord:
    """Label the change of one pair as none, correction, completion or real_world.

    Removals and edits without additions are corrections, as are pure
    replacements (no more additions than removals, none carrying an in-interval
    valid time). Otherwise ``criterion`` decides between real_world and
    completion. ``strict_timestamp`` makes the timestamp criterion look only at
    added records.
    """
    if criterion not in CRITERIA:
        raise ContractError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    _check_same_pair(state1, state2)
    d = diff(state1, state2, strict=strict)
    added_new = d.added + tuple(a for _, a in d.modified)
    signals = {
        "timestamp": timestamp_criterion(
            state2, interval, restrict_to=added_new if strict_timestamp else None
        ),
        "pca": pca_criterion(state1, state2),
        "bulk": bulk_criterion(state1, state2),
        "correction": bool(d.removed or d.modified),
        "correction_only": False,
    }
    if d.empty:
        label = "none"
    elif not d.added:
        label = "correction"
        signals["correction_only"] = True
    elif d.removed and len(d.added) <= len(d.removed) and not any(
        interval.contains(a.valid_time) for a in d.added
    ):
        label = "correction"
        signals["correction_only"] = True
    else:
        label = "real_world" if signals[criterion] else "completion"
    return ChangeRecord(
        state1.subject,
        state1.property,
        interval,
        d.added,
        d.removed,
        d.modified,
        label,
        criterion,
        signals,
    )


def _changed_keys(snap1: Snapshot, snap2: Snapshot, strict: bool) -> list:
    idx1 = snap1._index
    idx2 = snap2._index
    changed = []
    get2 = idx2.get
    for key, r1 in idx1.items():
        r2 = get2(key)
        if r2 is None:
            changed.append(key)
            continue
        if r1 == r2:
            continue
        if not strict and len(r1) == len(r2) and {r[:2] for r in r1} == {r[:2] for r in r2}:
            continue
        changed.append(key)
    for key in idx2:
        if key not in idx1:
            changed.append(key)
    changed.sort()
    return changed


def _classify_batch(args):
    items, interval, criterion, strict, strict_timestamp = args
    out = []
    for (s, p), r1, r2 in items:
        out.append(classify(PairState(s, p, r1), PairState(s, p, r2), interval, criterion,
                            strict, strict_timestamp))
    return out


def analyze(snap1: Snapshot, snap2: Snapshot, criterion: str = "timestamp",
            interval: Optional[Interval] = None, strict: bool = False,
            strict_timestamp: bool = False, workers: int = 1) -> list:
    """Classify every pair whose object-timestamps set differs between the snapshots.

    Returns ChangeRecords sorted by (subject, property). Stable pairs are
    omitted. ``workers > 1`` classifies changed pairs in worker processes;
    output order is identical either way.
    """
    if criterion not in CRITERIA:
        raise ContractError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    if interval is None:
        interval = Interval.make(snap1.sampled_at, snap2.sampled_at)
    with gc_paused():
        return _analyze(snap1, snap2, criterion, interval, strict, strict_timestamp, workers)


def _analyze(snap1, snap2, criterion, interval, strict, strict_timestamp, workers):
    keys = _changed_keys(snap1, snap2, strict)
    items = [(k, snap1.records(*k), snap2.records(*k)) for k in keys]
    if workers <= 1 or len(items) < 2000:
        return _classify_batch((items, interval, criterion, strict, strict_timestamp))
    size = -(-len(items) // workers)
    batches = [
        (items[i:i + size], interval, criterion, strict, strict_timestamp)
        for i in range(0, len(items), size)
    ]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_classify_batch, batches):
            out.extend(part)
    return out


# -- evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class CriteriaReport:
    metrics: dict  # criterion -> Metrics
    distribution: dict  # property -> {label: count}


def category_distribution(pairs: Iterable) -> dict:
    """Counts per property of each change cause from ``(property, label)`` pairs, plus an ``all`` row."""
    table: dict = {}
    total = Counter()
    for prop, label in pairs:
        if label == "none":
            continue
        table.setdefault(prop, Counter())[label] += 1
        total[label] += 1
    out = {p: {c: table[p].get(c, 0) for c in CAUSES} for p in sorted(table)}
    out["all"] = {c: total.get(c, 0) for c in CAUSES}
    return out


def evaluate_criteria(records: Iterable[ChangeRecord], gold: Iterable, criteria=CRITERIA) -> CriteriaReport:
    """Binary metrics per criterion with real_world as the positive class.

    Every record needs a gold label on (subject, property, interval). Gold
    pairs with no record were stable between the snapshots and count as
    predicted ``none``.
    """
    gold_by_key = {}
    for g in gold:
        gold_by_key[(g.subject, g.property, g.interval)] = g.label
    records = list(records)
    missing = sorted({r.key for r in records if r.key not in gold_by_key}, key=str)
    if missing:
        shown = ", ".join(f"({s}, {p}, {iv})" for s, p, iv in missing[:10])
        raise ContractError(f"{len(missing)} change records lack gold labels: {shown}")
    by_key = {r.key: r for r in records}
    keys = sorted(gold_by_key, key=lambda k: (k[0], k[1], k[2]))
    gold_labels = [gold_by_key[k] for k in keys]
    metrics = {}
    for c in criteria:
        pred = [by_key[k].label_under(c) if k in by_key else "none" for k in keys]
        metrics[c] = binary_metrics(
            [g == "real_world" for g in gold_labels],
            [p == "real_world" for p in pred],
            labels=LABELS,
            gold_labels=gold_labels,
            predicted_labels=pred,
        )
    distribution = category_distribution((k[1], gold_by_key[k]) for k in keys)
    return CriteriaReport(metrics, distribution)


# -- serialisation ----------------------------------------------------------


def _record_json(r: Record) -> list:
    tv = r.valid_time.isoformat() if r.valid_time is not None else None
    return [r.object.kind, r.object.value, tv, r.transaction_time.isoformat()]


def _record_from_json(row) -> Record:
    kind, value, tv, ta = row
    return Record(
        ObjectValue.make(kind, value),
        KbTimestamp.parse(tv) if tv is not None else None,
        KbTimestamp.parse(ta),
    )


def record_to_json(rec: ChangeRecord) -> dict:
    """Plain-JSON form of a ChangeRecord; key order is fixed by ``sort_keys`` at dump time."""
    return {
        "subject": rec.subject,
        "property": rec.property,
        "tau1": rec.interval.tau1.isoformat(),
        "tau2": rec.interval.tau2.isoformat(),
        "added": [_record_json(r) for r in rec.added],
        "removed": [_record_json(r) for r in rec.removed],
        "modified": [[_record_json(a), _record_json(b)] for a, b in rec.modified],
        "label": rec.assigned_label,
        "criterion": rec.criterion,
        "signals": dict(rec.signals),
    }


def record_from_json(obj: dict) -> ChangeRecord:
    try:
        interval = Interval.make(KbTimestamp.parse(obj["tau1"]), KbTimestamp.parse(obj["tau2"]))
        label = obj["label"]
        if label not in LABELS:
            raise ValidationError(f"unknown label {label!r}")
        return ChangeRecord(
            obj["subject"],
            obj["property"],
            interval,
            tuple(_record_from_json(r) for r in obj.get("added", ())),
            tuple(_record_from_json(r) for r in obj.get("removed", ())),
            tuple((_record_from_json(a), _record_from_json(b)) for a, b in obj.get("modified", ())),
            label,
            obj.get("criterion"),
            dict(obj["signals"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed change record: {exc!r}") from None
