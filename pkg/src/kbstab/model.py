"""Temporal KB data model: quintuple facts, snapshots and per-pair object sets.

Everything here is immutable. Facts, records and timestamps are named tuples
so that million-fact snapshots stay cheap to build and compare.
"""

from __future__ import annotations

import datetime as _dt
import re
from enum import IntEnum
from typing import Iterable, Iterator, NamedTuple, NewType, Optional

from .errors import ContractError, ValidationError

EntityId = NewType("EntityId", str)
PropertyId = NewType("PropertyId", str)

_ID_RE = re.compile(r"^\S+$")


def check_id(value: str, what: str = "identifier") -> str:
    if not isinstance(value, str) or not _ID_RE.match(value):
        raise ValidationError(f"malformed {what}: {value!r}")
    return value


class Precision(IntEnum):
    """Timestamp precision. Lower value = finer, so tuple order breaks ties finer-first."""

    DAY = 0
    MONTH = 1
    YEAR = 2

    @property
    def tag(self) -> str:
        return _PRECISION_TAGS[self]

    @classmethod
    def from_tag(cls, tag: str) -> "Precision":
        try:
            return _TAG_PRECISIONS[tag]
        except KeyError:
            raise ValidationError(f"unknown precision tag {tag!r}") from None


_PRECISION_TAGS = {Precision.DAY: "d", Precision.MONTH: "m", Precision.YEAR: "y"}
_TAG_PRECISIONS = {v: k for k, v in _PRECISION_TAGS.items()}
_TS_RE = re.compile(r"^(-?\d{1,4})(?:-(\d{2})(?:-(\d{2}))?)?(?:/([ymd]))?$")


class KbTimestamp(NamedTuple):
    """A calendar date with a precision.

    Stored in canonical form (coarser components set to 1), so plain tuple
    ordering coerces to the earliest covered instant and ranks finer
    precision first on ties.
    """

    year: int
    month: int
    day: int
    precision: Precision

    @classmethod
    def of(cls, year: int, month: Optional[int] = None, day: Optional[int] = None) -> "KbTimestamp":
        """Build from components; precision follows the finest one supplied."""
        if month is None:
            if day is not None:
                raise ValidationError("day given without month")
            return cls.make(year, 1, 1, Precision.YEAR)
        if day is None:
            return cls.make(year, month, 1, Precision.MONTH)
        return cls.make(year, month, day, Precision.DAY)

    @classmethod
    def make(cls, year: int, month: int, day: int, precision: Precision) -> "KbTimestamp":
        precision = Precision(precision)
        if precision is Precision.YEAR:
            month, day = 1, 1
        elif precision is Precision.MONTH:
            day = 1
        try:
            _dt.date(year, month, day)
        except ValueError as exc:
            raise ValidationError(f"invalid date {year}-{month}-{day}: {exc}") from None
        return cls(year, month, day, precision)

    @classmethod
    def parse(cls, text: str) -> "KbTimestamp":
        """Parse ``YYYY[-MM[-DD]][/y|m|d]``.

        Without a tag the precision is implied by the number of components.
        With a tag, finer components are truncated to the canonical form.
        """
        m = _TS_RE.match(text.strip())
        if m is None:
            raise ValidationError(f"malformed timestamp {text!r}")
        y, mo, d, tag = m.groups()
        year = int(y)
        month = int(mo) if mo else None
        day = int(d) if d else None
        if tag is None:
            return cls.of(year, month, day)
        return cls.make(year, month or 1, day or 1, Precision.from_tag(tag))

    @classmethod
    def from_date(cls, date: _dt.date) -> "KbTimestamp":
        return cls(date.year, date.month, date.day, Precision.DAY)

    def as_date(self) -> _dt.date:
        """Earliest instant of the covered period."""
        return _dt.date(self.year, self.month, self.day)

    def year_fraction(self) -> float:
        """Years as a real number; year-precision values are exact integers."""
        if self.precision is Precision.YEAR:
            return float(self.year)
        start = _dt.date(self.year, 1, 1).toordinal()
        length = _dt.date(self.year + 1, 1, 1).toordinal() - start
        return self.year + (self.as_date().toordinal() - start) / length

    def isoformat(self) -> str:
        return f"{self.year:04d}-{self.month:02d}-{self.day:02d}/{self.precision.tag}"

    def __str__(self) -> str:
        return self.isoformat()


class ObjectValue(NamedTuple):
    kind: str  # "entity" or "literal"
    value: str

    @classmethod
    def entity(cls, entity_id: str) -> "ObjectValue":
        return cls("entity", check_id(entity_id, "entity id"))

    @classmethod
    def literal(cls, text: str) -> "ObjectValue":
        if not isinstance(text, str):
            raise ValidationError(f"literal must be text, got {type(text).__name__}")
        return cls("literal", text)

    @classmethod
    def make(cls, kind: str, value: str) -> "ObjectValue":
        if kind == "entity":
            return cls.entity(value)
        if kind == "literal":
            return cls.literal(value)
        raise ValidationError(f"unknown object kind {kind!r}")

    def __str__(self) -> str:
        return self.value


class Record(NamedTuple):
    """One ``(o, t_v, t_a)`` entry of a pair's object-timestamps set."""

    object: ObjectValue
    valid_time: Optional[KbTimestamp]
    transaction_time: KbTimestamp

    @property
    def key(self) -> tuple:
        return (self.object, self.valid_time)


class Fact(NamedTuple):
    subject: str
    property: str
    object: ObjectValue
    valid_time: Optional[KbTimestamp]
    transaction_time: KbTimestamp

    @property
    def record(self) -> Record:
        return Record(self.object, self.valid_time, self.transaction_time)


def record_sort_key(record: Record) -> tuple:
    vt = record.valid_time
    return (record.object, () if vt is None else (vt,), record.transaction_time)


class Interval(NamedTuple):
    tau1: KbTimestamp
    tau2: KbTimestamp

    @classmethod
    def make(cls, tau1: KbTimestamp, tau2: KbTimestamp) -> "Interval":
        if not tau2 > tau1:
            raise ValidationError(f"interval end {tau2} must be after start {tau1}")
        return cls(tau1, tau2)

    def contains(self, t: Optional[KbTimestamp]) -> bool:
        """Half-open membership ``tau1 < t <= tau2``; null never matches."""
        return t is not None and self.tau1 < t <= self.tau2

    def __str__(self) -> str:
        return f"({self.tau1}, {self.tau2}]"


class PairState:
    """The object-timestamps set of one (subject, property) pair."""

    __slots__ = ("subject", "property", "records")

    def __init__(self, subject: str, property: str, records: Iterable[Record] = ()):
        recs = frozenset(records)
        if len(recs) > 1 and len({r[:2] for r in recs}) != len(recs):
            raise ValidationError(
                f"duplicate (object, valid_time) records for ({subject}, {property})"
            )
        object.__setattr__(self, "subject", subject)
        object.__setattr__(self, "property", property)
        object.__setattr__(self, "records", recs)

    def __setattr__(self, name, value):
        raise AttributeError("PairState is immutable")

    def __eq__(self, other):
        if not isinstance(other, PairState):
            return NotImplemented
        return (self.subject, self.property, self.records) == (
            other.subject,
            other.property,
            other.records,
        )

    def __hash__(self):
        return hash((self.subject, self.property, self.records))

    def __repr__(self):
        return f"PairState({self.subject!r}, {self.property!r}, {sorted(self.records, key=record_sort_key)!r})"

    def __len__(self):
        return len(self.records)

    def __bool__(self):
        return bool(self.records)

    def keys(self, strict: bool = False) -> frozenset:
        """Record identities used for equality: ``(o, t_v)``, or whole records when strict."""
        if strict:
            return self.records
        return frozenset(r[:2] for r in self.records)

    def objects(self) -> frozenset:
        return frozenset(r.object for r in self.records)

    def sorted_records(self) -> list:
        return sorted(self.records, key=record_sort_key)


def _check_same_pair(state1: PairState, state2: PairState) -> None:
    if state1.subject != state2.subject or state1.property != state2.property:
        raise ContractError(
            f"states refer to different pairs: ({state1.subject}, {state1.property}) "
            f"vs ({state2.subject}, {state2.property})"
        )


class Snapshot:
    """All facts visible at one sampling timepoint, indexed by (subject, property).

    Construction validates that every transaction time is at or before
    ``sampled_at`` and that no pair holds two records with the same
    ``(object, valid_time)``.
    """

    __slots__ = ("sampled_at", "_index", "_n_facts", "_by_subject")

    def __init__(self, sampled_at: KbTimestamp, facts: Iterable[Fact] = ()):
        grouped: dict = {}
        for f in facts:
            key = (f[0], f[1])
            rec = Record(f[2], f[3], f[4])
            bucket = grouped.get(key)
            if bucket is None:
                grouped[key] = [rec]
            else:
                bucket.append(rec)
        self._init_from_groups(sampled_at, grouped)

    @classmethod
    def from_groups(cls, sampled_at: KbTimestamp, grouped: dict) -> "Snapshot":
        """Build from ``{(subject, property): [Record, ...]}``; validates like the constructor."""
        snap = cls.__new__(cls)
        snap._init_from_groups(sampled_at, grouped)
        return snap

    def _init_from_groups(self, sampled_at, grouped):
        if not isinstance(sampled_at, KbTimestamp):
            raise ValidationError("sampled_at must be a KbTimestamp")
        index = {}
        by_subject: dict = {}
        n = 0
        for key, recs in grouped.items():
            if not recs:
                continue
            for r in recs:
                if r[2] is None:
                    raise ValidationError(f"fact {key} lacks a transaction time")
                if r[2] > sampled_at:
                    raise ValidationError(
                        f"fact {key} {r.object.value!r} has transaction time "
                        f"{r[2]} after sampled_at {sampled_at}"
                    )
            if len(recs) > 1:
                if len({r[:2] for r in recs}) != len(recs):
                    raise ValidationError(f"duplicate (object, valid_time) facts for {key}")
                recs = sorted(recs, key=record_sort_key)
            index[key] = tuple(recs)
            n += len(recs)
            props = by_subject.get(key[0])
            if props is None:
                by_subject[key[0]] = [key[1]]
            else:
                props.append(key[1])
        object.__setattr__(self, "sampled_at", sampled_at)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_n_facts", n)
        object.__setattr__(
            self, "_by_subject", {s: tuple(sorted(ps)) for s, ps in by_subject.items()}
        )

    def __setattr__(self, name, value):
        raise AttributeError("Snapshot is immutable")

    def __len__(self) -> int:
        return self._n_facts

    def __iter__(self) -> Iterator[Fact]:
        """Facts in canonical order (subject, property, object, valid_time)."""
        for s, p in sorted(self._index):
            for r in self._index[(s, p)]:
                yield Fact(s, p, r[0], r[1], r[2])

    def __eq__(self, other):
        if not isinstance(other, Snapshot):
            return NotImplemented
        return self.sampled_at == other.sampled_at and self._index == other._index

    def __repr__(self):
        return f"Snapshot(sampled_at={self.sampled_at}, facts={self._n_facts})"

    @property
    def facts(self) -> frozenset:
        return frozenset(self)

    def pairs(self):
        """View of all populated (subject, property) keys."""
        return self._index.keys()

    def records(self, subject: str, property: str) -> tuple:
        return self._index.get((subject, property), ())

    def subjects(self):
        return self._by_subject.keys()

    def properties_of(self, subject: str) -> tuple:
        return self._by_subject.get(subject, ())

    def facts_of(self, subject: str) -> list:
        out = []
        for p in self._by_subject.get(subject, ()):
            for r in self._index[(subject, p)]:
                out.append(Fact(subject, p, r[0], r[1], r[2]))
        return out


def project(snapshot: Snapshot, subject: str, property: str) -> PairState:
    """Object-timestamps set of ``(subject, property)`` in ``snapshot``."""
    return PairState(subject, property, snapshot.records(subject, property))


def is_stable(state1: PairState, state2: PairState, strict: bool = False) -> bool:
    """True iff both states hold the same ``(object, valid_time)`` set.

    ``strict`` also compares transaction times.
    """
    _check_same_pair(state1, state2)
    if state1.records == state2.records:
        return True
    if strict:
        return False
    return state1.keys() == state2.keys()
