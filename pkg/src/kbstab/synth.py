"""Synthetic evolving-KB generator with known change causes.

Each (subject, property) pair gets exactly one cause drawn from the configured
rates, and the snapshots are built so that cause is recoverable:

* real_world: one or two new objects with a valid time inside ``(tau1, tau2]``
* completion: two to four new objects, all recorded on one day, with null or
  pre-``tau1`` valid times
* correction: an existing record is removed, or its object is edited in place
* none: the pair is left untouched
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError
from .ingest import ArticleVersion, GoldLabel
from .model import Interval, KbTimestamp, ObjectValue, Record, Snapshot

CAUSES = ("real_world", "completion", "correction", "none")


@dataclass(frozen=True)
class PropertySpec:
    id: str
    kind: str = "entity"  # or "literal"


DEFAULT_PROPERTIES = (
    PropertySpec("P54", "entity"),
    PropertySpec("P2048", "literal"),
    PropertySpec("P3373", "entity"),
)


@dataclass(frozen=True)
class GeneratorConfig:
    real_world: float = 0.25
    completion: float = 0.25
    correction: float = 0.25
    none: float = 0.25
    entities: int = 100
    properties: tuple = DEFAULT_PROPERTIES
    tau1: KbTimestamp = KbTimestamp.of(2017)
    tau2: KbTimestamp = KbTimestamp.of(2020)

    @property
    def rates(self) -> tuple:
        return (self.real_world, self.completion, self.correction, self.none)

    def validate(self) -> None:
        if any(r < 0 for r in self.rates) or abs(sum(self.rates) - 1.0) > 1e-9:
            raise ContractError(f"rates must be non-negative and sum to 1, got {self.rates}")
        if self.entities < 1:
            raise ContractError("entity count must be at least 1")
        if not self.properties:
            raise ContractError("property schema must be non-empty")
        if not self.tau2 > self.tau1:
            raise ContractError("tau2 must be after tau1")


def _exact_counts(rates, n):
    """Largest-remainder apportionment of ``n`` items to ``rates``."""
    raw = [r * n for r in rates]
    counts = [int(x) for x in raw]
    order = sorted(range(len(rates)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


class _Dates:
    def __init__(self, rng, tau1: KbTimestamp, tau2: KbTimestamp):
        self.rng = rng
        self.t1 = tau1.as_date().toordinal()
        self.t2 = tau2.as_date().toordinal()

    def _day(self, lo, hi):
        return KbTimestamp.from_date(_dt.date.fromordinal(int(self.rng.integers(lo, hi + 1))))

    def before(self, years=12):
        """A day-precision date strictly before tau1 (and so not after it)."""
        return self._day(self.t1 - 365 * years, self.t1 - 1)

    def inside(self, lo=None):
        """A day strictly after tau1 and strictly before tau2."""
        return self._day(max(self.t1 + 1, lo or 0), self.t2 - 1)


def _object(rng, kind, taken):
    while True:
        if kind == "entity":
            value = ObjectValue("entity", f"Q{int(rng.integers(1, 100000))}")
        else:
            value = ObjectValue("literal", f"{int(rng.integers(100, 1000))}cm")
        if value not in taken:
            taken.add(value)
            return value


def _perturb(rng, obj, taken):
    if obj.kind == "literal":
        head = obj.value[:-2] if obj.value.endswith("cm") else obj.value
        for _ in range(100):
            cand = ObjectValue("literal", f"{head}.{int(rng.integers(1, 10))}cm")
            if cand not in taken:
                taken.add(cand)
                return cand
    return _object(rng, obj.kind, taken)


def generate(config: GeneratorConfig = GeneratorConfig(), seed: int = 0):
    """Return ``(snapshot_tau1, snapshot_tau2, gold_labels)``; deterministic under ``seed``."""
    config.validate()
    rng = np.random.default_rng(seed)
    dates = _Dates(rng, config.tau1, config.tau2)
    interval = Interval.make(config.tau1, config.tau2)
    subjects = [f"Q{100000 + i}" for i in range(config.entities)]
    g1: dict = {}
    g2: dict = {}
    gold = []
    for spec in config.properties:
        causes = [c for c, k in zip(CAUSES, _exact_counts(config.rates, config.entities)) for _ in range(k)]
        rng.shuffle(causes)
        for subject, cause in zip(subjects, causes):
            key = (subject, spec.id)
            taken: set = set()
            n_base = int(rng.integers(1, 4)) if cause == "correction" else int(rng.integers(0, 4))
            base = []
            for _ in range(n_base):
                tv = None if rng.random() < 0.5 else dates.before(25)
                base.append(Record(_object(rng, spec.kind, taken), tv, dates.before(10)))
            after = list(base)
            if cause == "real_world":
                for _ in range(1 if rng.random() < 0.8 else 2):
                    tv = dates.inside()
                    ta = dates.inside(lo=tv.as_date().toordinal())
                    after.append(Record(_object(rng, spec.kind, taken), tv, ta))
            elif cause == "completion":
                day = dates.inside()
                for _ in range(int(rng.integers(2, 5))):
                    tv = None if rng.random() < 0.5 else dates.before(25)
                    after.append(Record(_object(rng, spec.kind, taken), tv, day))
            elif cause == "correction":
                i = int(rng.integers(0, len(base)))
                old = after.pop(i)
                if rng.random() < 0.6:
                    after.insert(i, Record(_perturb(rng, old.object, taken), old.valid_time, dates.inside()))
            if base:
                g1[key] = base
            if after:
                g2[key] = after
            gold.append(GoldLabel(subject, spec.id, interval, cause))
    gold.sort(key=lambda g: (g.subject, g.property))
    return Snapshot.from_groups(config.tau1, g1), Snapshot.from_groups(config.tau2, g2), gold


# -- article text -----------------------------------------------------------


@dataclass(frozen=True)
class TextConfig:
    property: Optional[str] = None  # defaults to the first property in the gold labels
    signal_rate: float = 0.9
    signal_tokens: tuple = ("signed",)
    distractor_tokens: tuple = ("club", "season", "match", "league", "goal")
    background_size: int = 300
    lines: tuple = (4, 9)
    words_per_line: tuple = (4, 8)
    appended_lines: tuple = (1, 1)
    distractor_rate: float = 0.5
    background: tuple = field(default=(), repr=False)


def _background(cfg: TextConfig):
    if cfg.background:
        return list(cfg.background)
    return [f"w{i:03d}" for i in range(cfg.background_size)]


def _line(rng, cfg, words, planted=()):
    n = int(rng.integers(cfg.words_per_line[0], cfg.words_per_line[1] + 1))
    toks = [words[int(rng.integers(0, len(words)))] for _ in range(n)]
    if rng.random() < cfg.distractor_rate:
        toks.insert(int(rng.integers(0, len(toks) + 1)),
                    cfg.distractor_tokens[int(rng.integers(0, len(cfg.distractor_tokens)))])
    for t in planted:
        toks.insert(int(rng.integers(0, len(toks) + 1)), t)
    return " ".join(toks)


def generate_text(gold, config: TextConfig = TextConfig(), seed: int = 0):
    """Article pairs ``(as of tau1, as of tau2)`` for each subject of the target property.

    Subjects whose gold cause is real_world get the signal tokens in an added
    line with probability ``signal_rate``. Distractor tokens appear in every
    class at the same rate, so they carry no signal.
    """
    gold = list(gold)
    if not gold:
        return []
    prop = config.property or gold[0].property
    rng = np.random.default_rng(seed)
    words = _background(config)
    pairs = []
    for g in sorted((g for g in gold if g.property == prop), key=lambda g: g.subject):
        n_old = int(rng.integers(config.lines[0], config.lines[1] + 1))
        old_lines = [_line(rng, config, words) for _ in range(n_old)]
        n_new = int(rng.integers(config.appended_lines[0], config.appended_lines[1] + 1))
        new_lines = [_line(rng, config, words) for _ in range(n_new)]
        if g.label == "real_world" and rng.random() < config.signal_rate:
            j = int(rng.integers(0, n_new))
            new_lines[j] = _line(rng, config, words, planted=config.signal_tokens)
        old = ArticleVersion(g.subject, g.interval.tau1, "\n".join(old_lines))
        new = ArticleVersion(g.subject, g.interval.tau2, "\n".join(old_lines + new_lines))
        pairs.append((old, new))
    return pairs
