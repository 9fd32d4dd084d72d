"""Readers and writers for every on-disk format kbstab consumes or produces.

All formats are UTF-8, one record per line, tab-separated. Lines starting
with ``#`` are comments except for the snapshot header. Free-text fields
escape backslash, tab, CR and LF with backslash sequences.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

import numpy as np

from . import _kernels
from ._gc import gc_paused
from .errors import ParseError, ValidationError
from .model import (
    Fact,
    Interval,
    KbTimestamp,
    ObjectValue,
    Precision,
    Record,
    Snapshot,
    check_id,
    record_sort_key,
)

log = logging.getLogger(__name__)

SNAPSHOT_HEADER = "#sampled_at="
EDIT_KINDS = ("add", "remove", "modify")
LABELS = ("real_world", "completion", "correction", "none")
_CHUNK = 100_000


class EditLogEntry(NamedTuple):
    subject: str
    property: str
    transaction_time: KbTimestamp
    kind: str


class ArticleVersion(NamedTuple):
    entity: str
    as_of: KbTimestamp
    text: str


class GoldLabel(NamedTuple):
    subject: str
    property: str
    interval: Interval
    label: str


@dataclass(frozen=True)
class EmbeddingTable:
    """Entity embeddings; row ``i`` of ``matrix`` belongs to ``ids[i]``."""

    dimension: int
    ids: tuple
    matrix: np.ndarray
    index: dict = field(repr=False, compare=False)

    @classmethod
    def from_rows(cls, rows: dict) -> "EmbeddingTable":
        ids = tuple(rows)
        if not ids:
            raise ValidationError("embedding table is empty")
        dim = len(rows[ids[0]])
        if dim < 1:
            raise ValidationError("embedding dimension must be positive")
        for eid in ids:
            vec = rows[eid]
            if len(vec) != dim:
                raise ValidationError(
                    f"embedding for {eid} has dimension {len(vec)}, expected {dim}"
                )
        matrix = np.asarray([rows[e] for e in ids], dtype=np.float64)
        bad = ~np.isfinite(matrix).all(axis=1)
        if bad.any():
            raise ValidationError(f"non-finite embedding component for {ids[int(np.argmax(bad))]}")
        matrix.setflags(write=False)
        return cls(dim, ids, matrix, {e: i for i, e in enumerate(ids)})

    def __contains__(self, entity) -> bool:
        return entity in self.index

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, entity) -> np.ndarray:
        return self.matrix[self.index[entity]]

    def scaled(self, factor: float) -> "EmbeddingTable":
        m = self.matrix * factor
        m.setflags(write=False)
        return EmbeddingTable(self.dimension, self.ids, m, self.index)


@dataclass
class ConversionReport:
    entities: int = 0
    facts: int = 0
    skipped_lines: int = 0
    bad_dates: int = 0
    skipped_statements: int = 0
    not_yet_visible: int = 0


def escape(text: str) -> str:
    if not any(c in text for c in "\\\t\n\r"):
        return text
    return (
        text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")
    )


unescape = _kernels.unescape


def _data_lines(path):
    """Yield ``(lineno, fields)`` for non-blank, non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split("\t")


def _ts(text, lineno, path):
    try:
        return KbTimestamp.parse(text)
    except ValidationError as exc:
        raise ParseError(str(exc), lineno, path) from None


# -- snapshots ---------------------------------------------------------------


def load_snapshot(path) -> Snapshot:
    """Read a snapshot file.

    Duplicate ``(s, p, o, t_v)`` lines collapse to one record carrying the
    earliest transaction time.
    """
    with open(path, encoding="utf-8") as fh:
        return read_snapshot(fh, path=path)


def read_snapshot(lines: Iterable[str], path=None) -> Snapshot:
    with gc_paused():
        return _read_snapshot(lines, path)


def _read_snapshot(lines, path):
    it = iter(lines)
    header = next(it, "").rstrip("\r\n")
    if not header.startswith(SNAPSHOT_HEADER):
        raise ParseError(f"missing '{SNAPSHOT_HEADER}<timestamp>' header", 1, path)
    sampled_at = _ts(header[len(SNAPSHOT_HEADER):], 1, path)

    ts_cache: dict = {}
    grouped: dict = {}
    dupes = False
    lineno = 2
    while True:
        chunk = list(islice(it, _CHUNK))
        if not chunk:
            break
        try:
            rows = _kernels.parse_fact_rows(
                chunk, lineno, ts_cache, KbTimestamp.parse, ObjectValue
            )
        except ParseError as exc:
            raise ParseError(exc.message, exc.line, path) from None
        lineno += len(chunk)
        for s, p, o, tv, ta in rows:
            key = (s, p)
            rec = Record(o, tv, ta)
            bucket = grouped.get(key)
            if bucket is None:
                grouped[key] = [rec]
            else:
                bucket.append(rec)
                dupes = True
    if dupes:
        for key, recs in grouped.items():
            if len(recs) > 1:
                grouped[key] = _collapse(recs)
    return Snapshot.from_groups(sampled_at, grouped)


def _collapse(records):
    best: dict = {}
    for r in records:
        k = r[:2]
        cur = best.get(k)
        if cur is None or r[2] < cur[2]:
            best[k] = r
    return list(best.values())


def format_fact(f: Fact) -> str:
    o = f.object
    value = escape(o.value) if o.kind == "literal" else o.value
    tv = "" if f.valid_time is None else f.valid_time.isoformat()
    return f"{f.subject}\t{f.property}\t{o.kind}\t{value}\t{tv}\t{f.transaction_time.isoformat()}"


def snapshot_lines(snapshot: Snapshot):
    yield f"{SNAPSHOT_HEADER}{snapshot.sampled_at.isoformat()}\n"
    for f in snapshot:
        yield format_fact(f) + "\n"


def write_snapshot(snapshot: Snapshot, path) -> None:
    """Write the canonical form: header, then facts sorted by (s, p, o, t_v)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(snapshot_lines(snapshot))


# -- Wikidata entity dumps --------------------------------------------------

START_TIME = "P580"
POINT_IN_TIME = "P585"
_WD_TIME_RE = re.compile(r"^([+-]?)(\d+)-(\d{2})-(\d{2})T")


def parse_wikidata_time(value) -> KbTimestamp:
    """Convert a Wikidata time datavalue (``{'time': '+2018-00-00T..', 'precision': 9}``)."""
    if not isinstance(value, dict) or not isinstance(value.get("time"), str):
        raise ValidationError(f"not a time value: {value!r}")
    m = _WD_TIME_RE.match(value["time"])
    if m is None:
        raise ValidationError(f"malformed time {value['time']!r}")
    sign, y, mo, d = m.groups()
    year = int(y) * (-1 if sign == "-" else 1)
    prec = value.get("precision", 11)
    if not isinstance(prec, int):
        raise ValidationError(f"malformed precision {prec!r}")
    if prec >= 11:
        return KbTimestamp.make(year, int(mo), int(d), Precision.DAY)
    if prec == 10:
        return KbTimestamp.make(year, int(mo), 1, Precision.MONTH)
    return KbTimestamp.make(year, 1, 1, Precision.YEAR)


def _wikidata_object(snak) -> Optional[ObjectValue]:
    dv = snak.get("datavalue") or {}
    value = dv.get("value")
    kind = dv.get("type")
    if kind == "wikibase-entityid":
        eid = value.get("id")
        if eid is None and "numeric-id" in value:
            prefix = "P" if value.get("entity-type") == "property" else "Q"
            eid = f"{prefix}{value['numeric-id']}"
        return ObjectValue.entity(eid)
    if kind == "time":
        return ObjectValue.literal(parse_wikidata_time(value).isoformat())
    if kind == "quantity":
        amount = str(value["amount"]).lstrip("+")
        unit = str(value.get("unit", "1"))
        if unit != "1":
            amount += " " + unit.rsplit("/", 1)[-1]
        return ObjectValue.literal(amount)
    if kind == "string":
        return ObjectValue.literal(str(value))
    if kind == "monolingualtext":
        return ObjectValue.literal(str(value["text"]))
    if kind == "globecoordinate":
        return ObjectValue.literal(f"{value['latitude']},{value['longitude']}")
    if value is None:
        return None
    return ObjectValue.literal(json.dumps(value, sort_keys=True))


def _truthy(statements):
    live = [st for st in statements if st.get("rank", "normal") != "deprecated"]
    preferred = [st for st in live if st.get("rank") == "preferred"]
    return preferred or live


def _qualifier_time(statement, subject, report):
    quals = statement.get("qualifiers") or {}
    for pid in (START_TIME, POINT_IN_TIME):
        for snak in quals.get(pid, ()):
            if snak.get("snaktype", "value") != "value":
                continue
            try:
                return parse_wikidata_time((snak.get("datavalue") or {}).get("value"))
            except (ValidationError, ValueError):
                report.bad_dates += 1
                log.warning("malformed %s qualifier date on %s", pid, statement.get("id") or subject)
                return None
    return None


def iter_wikidata_facts(lines, property_allowlist, sampled_at, report=None):
    """Yield facts for the truthy, allow-listed statements of an entity-per-line dump."""
    if report is None:
        report = ConversionReport()
    allow = set(property_allowlist)
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if line in ("", "[", "]"):
            continue
        if line.endswith(","):
            line = line[:-1]
        try:
            doc = json.loads(line)
            subject = check_id(doc["id"], "entity id")
            claims = doc.get("claims") or {}
        except (ValueError, KeyError, TypeError, AttributeError):
            report.skipped_lines += 1
            log.warning("skipping unreadable dump line %d", lineno)
            continue
        report.entities += 1
        for pid in sorted(allow & claims.keys()):
            for st in _truthy(claims[pid]):
                snak = st.get("mainsnak") or {}
                if snak.get("snaktype", "value") != "value":
                    continue
                try:
                    obj = _wikidata_object(snak)
                except (ValidationError, ValueError, KeyError, TypeError, AttributeError):
                    obj = None
                if obj is None:
                    report.skipped_statements += 1
                    continue
                tv = _qualifier_time(st, subject, report)
                ta = sampled_at
                seen = st.get("first_seen")
                if seen:
                    try:
                        ta = KbTimestamp.parse(str(seen)[:10])
                    except ValidationError:
                        report.bad_dates += 1
                        log.warning("malformed first_seen %r on %s", seen, subject)
                if ta > sampled_at:
                    report.not_yet_visible += 1
                    continue
                report.facts += 1
                yield Fact(subject, pid, obj, tv, ta)


def convert_wikidata(path, property_allowlist, sampled_at, report=None) -> Snapshot:
    """Build a snapshot from a Wikidata-style dump, one entity document per line.

    ``valid_time`` comes from the start-time qualifier, else point-in-time.
    ``transaction_time`` comes from an optional per-statement ``first_seen``
    date, else ``sampled_at``. Statements first seen after ``sampled_at`` are
    dropped.
    """
    if report is None:
        report = ConversionReport()
    grouped: dict = {}
    with open(path, encoding="utf-8") as fh:
        for f in iter_wikidata_facts(fh, property_allowlist, sampled_at, report):
            grouped.setdefault((f.subject, f.property), []).append(f.record)
    for key, recs in grouped.items():
        if len(recs) > 1:
            grouped[key] = _collapse(recs)
    report.facts = sum(len(v) for v in grouped.values())
    if report.skipped_lines or report.bad_dates:
        log.warning(
            "wikidata conversion: %d unreadable lines, %d bad dates",
            report.skipped_lines,
            report.bad_dates,
        )
    return Snapshot.from_groups(sampled_at, grouped)


# -- auxiliary inputs -------------------------------------------------------


def _expect(fields, n, lineno, path):
    if len(fields) != n:
        raise ParseError(f"expected {n} tab-separated fields, got {len(fields)}", lineno, path)


def load_edit_log(path) -> list:
    out = []
    for lineno, fields in _data_lines(path):
        _expect(fields, 4, lineno, path)
        s, p, ta, kind = fields
        if kind not in EDIT_KINDS:
            raise ValidationError(f"{path}:{lineno}: unknown edit kind {kind!r}")
        out.append(EditLogEntry(s, p, _ts(ta, lineno, path), kind))
    return out


def write_edit_log(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(f"{e.subject}\t{e.property}\t{e.transaction_time.isoformat()}\t{e.kind}\n")


def load_articles(path) -> list:
    out = []
    for lineno, fields in _data_lines(path):
        _expect(fields, 3, lineno, path)
        entity, as_of, text = fields
        out.append(ArticleVersion(entity, _ts(as_of, lineno, path), unescape(text)))
    return out


def write_articles(articles, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a in articles:
            fh.write(f"{a.entity}\t{a.as_of.isoformat()}\t{escape(a.text)}\n")


def latest_versions(articles, as_of: KbTimestamp) -> dict:
    """Most recent version per entity at or before ``as_of``."""
    best: dict = {}
    for a in articles:
        if a.as_of > as_of:
            continue
        cur = best.get(a.entity)
        if cur is None or a.as_of > cur.as_of:
            best[a.entity] = a
    return best


def load_embeddings(path) -> EmbeddingTable:
    rows: dict = {}
    dim = None
    for lineno, fields in _data_lines(path):
        entity, values = fields[0], fields[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise ValidationError(
                f"{path}:{lineno}: embedding for {entity} has dimension {len(values)}, expected {dim}"
            )
        try:
            vec = [float(v) for v in values]
        except ValueError as exc:
            raise ParseError(str(exc), lineno, path) from None
        if not all(math.isfinite(v) for v in vec):
            raise ValidationError(f"{path}:{lineno}: non-finite embedding component for {entity}")
        if entity in rows:
            raise ValidationError(f"{path}:{lineno}: duplicate embedding for {entity}")
        rows[entity] = vec
    return EmbeddingTable.from_rows(rows)


def write_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for eid, vec in zip(table.ids, table.matrix):
            fh.write(eid + "\t" + "\t".join(repr(float(v)) for v in vec) + "\n")


def load_labels(path) -> list:
    out = []
    for lineno, fields in _data_lines(path):
        _expect(fields, 5, lineno, path)
        s, p, t1, t2, label = fields
        if label not in LABELS:
            raise ValidationError(f"{path}:{lineno}: unknown label {label!r}")
        try:
            interval = Interval.make(_ts(t1, lineno, path), _ts(t2, lineno, path))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        out.append(GoldLabel(s, p, interval, label))
    return out


def write_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in labels:
            fh.write(
                f"{g.subject}\t{g.property}\t{g.interval.tau1.isoformat()}\t"
                f"{g.interval.tau2.isoformat()}\t{g.label}\n"
            )


def load_entity_list(path) -> list:
    out = []
    for _, fields in _data_lines(path):
        out.append(fields[0].strip())
    return out


def write_entity_list(entities, path) -> None:
    Path(path).write_text("".join(f"{e}\n" for e in entities), encoding="utf-8")


def load_property_labels(path) -> dict:
    """Gold stability of properties: ``property<TAB>unstable|stable`` per line."""
    out = {}
    for lineno, fields in _data_lines(path):
        _expect(fields, 2, lineno, path)
        prop, verdict = fields
        if verdict not in ("unstable", "stable"):
            raise ValidationError(f"{path}:{lineno}: verdict must be unstable or stable")
        out[prop] = verdict == "unstable"
    return out
