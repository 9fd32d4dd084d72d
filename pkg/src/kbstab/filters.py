"""Filters for inherently stable entities and properties."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import ContractError, MissingInputError
from .metrics import Metrics, binary_metrics
from .model import Interval, Snapshot

# death date, dissolution date, end time, abolished date
DEFAULT_TERMINATING = frozenset({"P570", "P576", "P582", "P3999"})

MEASURES = ("kb_edits", "object_multiplicity", "timestamp_multiplicity")
MEASURE_ALIASES = {
    "kb_edits": "kb_edits",
    "edits": "kb_edits",
    "object_multiplicity": "object_multiplicity",
    "objects": "object_multiplicity",
    "timestamp_multiplicity": "timestamp_multiplicity",
    "timestamps": "timestamp_multiplicity",
}


def canonical_measure(measure: str) -> str:
    try:
        return MEASURE_ALIASES[measure]
    except KeyError:
        raise ContractError(f"unknown measure {measure!r}; expected one of {MEASURES}") from None


@dataclass(frozen=True)
class ActivityThresholds:
    max_edits: int = 10
    max_growth: float = 0.05


def entity_is_stable(snapshot: Snapshot, subject: str, terminating_properties: Iterable[str]) -> bool:
    """True iff the subject holds any terminating property (death date, dissolution date, ...)."""
    terminating = frozenset(terminating_properties)
    if not terminating:
        raise ContractError("terminating_properties must be non-empty")
    return any(p in terminating for p in snapshot.properties_of(subject))


def entity_activity_stable(edit_log, article_sizes, window: Interval,
                           thresholds: ActivityThresholds = ActivityThresholds()) -> bool:
    """Low Wikipedia activity inside ``window``: few edits and little page growth.

    ``article_sizes`` is a list of ``(timestamp, byte_count)``. Growth compares
    the latest size at or before ``tau2`` with the latest size at or before
    ``tau1`` (or the first in-window size when none precedes the window).
    """
    edits = sum(1 for e in edit_log if window.contains(e.transaction_time))
    sizes = sorted(article_sizes)
    before = [b for t, b in sizes if t <= window.tau1]
    inside = [b for t, b in sizes if window.contains(t)]
    start = before[-1] if before else (inside[0] if inside else 0)
    end = inside[-1] if inside else start
    if start == 0:
        growth = 0.0 if end == 0 else float("inf")
    else:
        growth = (end - start) / start
    return edits < thresholds.max_edits and growth < thresholds.max_growth


def edit_counts(edit_log) -> Counter:
    """Number of log entries per (subject, property)."""
    return Counter((e.subject, e.property) for e in edit_log)


def property_change_count(subject: str, property: str, measure: str, snapshot: Optional[Snapshot] = None,
                          edit_log=None) -> int:
    """Estimated number of past changes of one pair under ``measure``.

    Multiplicity measures count values minus one: a pair that has held a
    single value since creation has not changed.
    """
    measure = canonical_measure(measure)
    if measure == "kb_edits":
        if edit_log is None:
            raise MissingInputError("the kb_edits measure needs an edit log")
        if isinstance(edit_log, Counter):
            return edit_log.get((subject, property), 0)
        return sum(1 for e in edit_log if e.subject == subject and e.property == property)
    if snapshot is None:
        raise MissingInputError(f"the {measure} measure needs a snapshot")
    records = snapshot.records(subject, property)
    if measure == "object_multiplicity":
        n = len({r.object for r in records})
    else:
        n = sum(1 for r in records if r.valid_time is not None)
    return max(n - 1, 0)


def change_fraction(class_entities, property: str, measure: str, snapshot: Optional[Snapshot] = None,
                    edit_log=None) -> float:
    """Fraction of the class whose pair for ``property`` changed at least once."""
    entities = list(class_entities)
    if not entities:
        raise ContractError("class_entities must be non-empty")
    measure = canonical_measure(measure)
    if measure == "kb_edits" and edit_log is not None and not isinstance(edit_log, Counter):
        edit_log = edit_counts(edit_log)
    changed = sum(
        1 for e in entities
        if property_change_count(e, property, measure, snapshot, edit_log) >= 1
    )
    return changed / len(entities)


def property_is_unstable(class_entities, property: str, measure: str, threshold: float = 0.05,
                         snapshot: Optional[Snapshot] = None, edit_log=None) -> bool:
    """A property is unstable when at least ``threshold`` of the class changed it at least once."""
    return change_fraction(class_entities, property, measure, snapshot, edit_log) >= threshold


def evaluate_filter(predicted: dict, gold: dict) -> Metrics:
    """P/R/F1 of unstable-property verdicts (unstable = positive)."""
    if predicted.keys() != gold.keys():
        missing = sorted(set(predicted) ^ set(gold))
        raise ContractError(f"property sets differ; unmatched: {', '.join(missing)}")
    props = sorted(gold)
    return binary_metrics(
        [bool(gold[p]) for p in props],
        [bool(predicted[p]) for p in props],
        labels=("unstable", "stable"),
        gold_labels=["unstable" if gold[p] else "stable" for p in props],
        predicted_labels=["unstable" if predicted[p] else "stable" for p in props],
    )
