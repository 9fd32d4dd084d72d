import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbstab.errors import ContractError, ValidationError
from kbstab.model import (
    Fact,
    Interval,
    KbTimestamp,
    ObjectValue,
    PairState,
    Precision,
    Record,
    Snapshot,
    check_id,
    is_stable,
    project,
)

from conftest import ent, fact, rec, state, ts


class TestIdentifiers:
    def test_valid(self):
        assert check_id("Q11571") == "Q11571"

    @pytest.mark.parametrize("bad", ["", "Q 1", "\t"])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            check_id(bad)

    def test_entity_object_validated(self):
        with pytest.raises(ValidationError):
            ObjectValue.entity("not an id")
        assert ObjectValue.literal("185 cm").value == "185 cm"


class TestKbTimestamp:
    def test_canonical_year(self):
        t = KbTimestamp.make(2018, 7, 10, Precision.YEAR)
        assert (t.month, t.day) == (1, 1)
        assert t == KbTimestamp.of(2018)

    def test_parse_forms(self):
        assert KbTimestamp.parse("2018") == KbTimestamp.of(2018)
        assert KbTimestamp.parse("2018-05") == KbTimestamp.of(2018, 5)
        assert KbTimestamp.parse("2018-05-03") == KbTimestamp.of(2018, 5, 3)
        assert KbTimestamp.parse("2018-05-03/y") == KbTimestamp.of(2018)

    def test_isoformat_round_trip(self):
        for text in ("2018-01-01/y", "2018-05-01/m", "2018-05-03/d"):
            assert KbTimestamp.parse(text).isoformat() == text

    @pytest.mark.parametrize("bad", ["", "2018-13-01", "2018-02-30", "2018/x", "yesterday"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValidationError):
            KbTimestamp.parse(bad)

    def test_order_earliest_instant_then_finer(self):
        day = KbTimestamp.of(2018, 1, 1)
        month = KbTimestamp.of(2018, 1)
        year = KbTimestamp.of(2018)
        assert day < month < year
        assert year < KbTimestamp.of(2018, 1, 2)

    def test_year_fraction(self):
        assert KbTimestamp.of(2018).year_fraction() == 2018.0
        assert KbTimestamp.of(2018, 7, 2).year_fraction() == pytest.approx(2018 + 182 / 365)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 2100), st.integers(1, 12), st.integers(1, 28),
                              st.sampled_from(list(Precision))), min_size=3, max_size=3))
    def test_total_order(self, parts):
        a, b, c = (KbTimestamp.make(*p) for p in parts)
        assert (a <= b) or (b <= a)
        if a <= b and b <= a:
            assert a == b
        if a <= b and b <= c:
            assert a <= c


class TestInterval:
    def test_requires_order(self):
        with pytest.raises(ValidationError):
            Interval.make(ts(2020), ts(2017))

    def test_half_open(self):
        iv = Interval.make(ts(2017), ts(2020))
        assert not iv.contains(ts(2017))
        assert iv.contains(ts(2018))
        assert iv.contains(ts(2020))
        assert not iv.contains(None)


class TestPairState:
    def test_duplicate_object_valid_time_rejected(self):
        with pytest.raises(ValidationError):
            state("Q1", "P54", rec("Q2", 2010, 2011), rec("Q2", 2010, 2012))

    def test_same_object_other_valid_time_allowed(self):
        assert len(state("Q1", "P54", rec("Q2", 2010), rec("Q2", 2012))) == 2

    def test_immutable(self):
        s = state("Q1", "P54")
        with pytest.raises(AttributeError):
            s.subject = "Q2"


def ronaldo_snapshots():
    madrid = fact("Q11571", "P551", "Madrid", 2010, 2012)
    turin = fact("Q11571", "P551", "Turin", 2018, 2018)
    k2017 = Snapshot(ts(2017), [madrid])
    k2020 = Snapshot(ts(2020), [madrid, turin])
    return k2017, k2020


class TestProject:
    def test_ronaldo_residence(self):
        k2017, _ = ronaldo_snapshots()
        got = project(k2017, "Q11571", "P551")
        assert got.records == {rec("Madrid", 2010, 2012)}

    def test_empty_snapshot(self):
        got = project(Snapshot(ts(2017)), "Q1", "P1")
        assert len(got) == 0 and got.subject == "Q1"

    def test_five_fact_linear_scan(self):
        facts = [
            fact("Q1", "P1", "Q10", 2001, 2002),
            fact("Q1", "P2", "Q11", None, 2002),
            fact("Q2", "P1", "Q12", 2003, 2004),
            fact("Q1", "P1", "Q13", None, 2005),
            fact("Q3", "P3", "x", None, 2005),
        ]
        snap = Snapshot(ts(2010), facts)
        expected = {Record(f.object, f.valid_time, f.transaction_time)
                    for f in facts if f.subject == "Q1" and f.property == "P1"}
        assert project(snap, "Q1", "P1").records == expected
        assert len(expected) == 2


class TestSnapshot:
    def test_transaction_time_bound(self):
        with pytest.raises(ValidationError):
            Snapshot(ts(2017), [fact("Q1", "P1", "Q2", None, 2018)])

    def test_duplicate_facts_rejected(self):
        with pytest.raises(ValidationError):
            Snapshot(ts(2017), [fact("Q1", "P1", "Q2", 2010, 2011), fact("Q1", "P1", "Q2", 2010, 2012)])

    def test_iteration_is_sorted(self):
        facts = [fact("Q2", "P1", "b"), fact("Q1", "P2", "a"), fact("Q1", "P1", "c"), fact("Q1", "P1", "a")]
        snap = Snapshot(ts(2017), facts)
        got = [(f.subject, f.property, f.object.value) for f in snap]
        assert got == sorted(got)
        assert len(snap) == 4
        assert snap.properties_of("Q1") == ("P1", "P2")

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 4), st.integers(0, 30),
                              st.one_of(st.none(), st.integers(1990, 2016))), max_size=300))
    def test_project_matches_scan(self, rows):
        facts = {}
        for s, p, o, tv in rows:
            f = fact(f"Q{s}", f"P{p}", f"Q{o + 100}", tv, 2016)
            facts[f[:4]] = f
        snap = Snapshot(ts(2017), facts.values())
        for s, p in itertools.product(range(21), range(5)):
            got = project(snap, f"Q{s}", f"P{p}")
            want = [f for f in facts.values() if f.subject == f"Q{s}" and f.property == f"P{p}"]
            assert len(got) == len(want)


class TestIsStable:
    def test_ronaldo_change(self):
        k2017, k2020 = ronaldo_snapshots()
        s1 = project(k2017, "Q11571", "P551")
        s2 = project(k2020, "Q11571", "P551")
        assert not is_stable(s1, s2)

    def test_reflexive(self):
        s = state("Q1", "P1", rec("Q2", 2010, 2011))
        assert is_stable(s, s)

    def test_empty(self):
        assert is_stable(state("Q1", "P1"), state("Q1", "P1"))

    def test_transaction_time_ignored_unless_strict(self):
        a = state("Q1", "P1", rec("Q2", 2010, 2011))
        b = state("Q1", "P1", rec("Q2", 2010, 2015))
        assert is_stable(a, b)
        assert not is_stable(a, b, strict=True)

    def test_mismatched_pair(self):
        with pytest.raises(ContractError):
            is_stable(state("Q1", "P1"), state("Q1", "P2"))

    @settings(max_examples=100, deadline=None)
    @given(st.sets(st.tuples(st.integers(0, 5), st.one_of(st.none(), st.integers(2000, 2003)))),
           st.sets(st.tuples(st.integers(0, 5), st.one_of(st.none(), st.integers(2000, 2003)))))
    def test_symmetric_difference(self, a, b):
        sa = state("Q1", "P1", *(rec(f"Q{o}", tv) for o, tv in a))
        sb = state("Q1", "P1", *(rec(f"Q{o}", tv) for o, tv in b))
        assert is_stable(sa, sb) == is_stable(sb, sa) == (not (a ^ b))
