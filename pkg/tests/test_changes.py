from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbstab import changes, ingest
from kbstab.changes import (
    bulk_criterion,
    classify,
    diff,
    evaluate_criteria,
    observable_change,
    pca_criterion,
    timestamp_criterion,
)
from kbstab.errors import ContractError
from kbstab.ingest import GoldLabel
from kbstab.model import Interval, Snapshot, is_stable, project, record_sort_key

from conftest import fact, rec, state, ts

IV = Interval.make(ts(2017), ts(2020))


def john_siblings():
    before = state("John", "P3373")
    after = state("John", "P3373", *(rec(n, None, "2019-06-01") for n in ("Maria", "Anna", "Julian", "Roger")))
    return before, after


def john_citizenship():
    return state("John", "P27", rec("UK", None, "2015")), state("John", "P27", rec("Britain", None, "2019-03-03"))


def ronaldo():
    s1 = state("Ronaldo", "P551", rec("Madrid", 2010, 2012))
    s2 = state("Ronaldo", "P551", rec("Madrid", 2010, 2012), rec("Turin", 2018, 2018))
    return s1, s2


class TestObservableChange:
    def test_john_sibling(self):
        assert observable_change(*john_siblings())

    def test_john_citizenship(self):
        assert observable_change(*john_citizenship())

    def test_identical(self):
        s, _ = ronaldo()
        assert not observable_change(s, s)

    def test_mismatched_pair(self):
        with pytest.raises(ContractError):
            observable_change(state("a", "P1"), state("b", "P1"))


class TestDiff:
    def test_ronaldo_addition(self):
        d = diff(*ronaldo())
        assert d.added == (rec("Turin", 2018, 2018),)
        assert d.removed == () and d.modified == ()

    def test_height_correction_is_modification(self):
        s1 = state("R", "P2048", rec("185cm", None, 2015))
        s2 = state("R", "P2048", rec("185.4cm", None, 2018))
        d = diff(s1, s2)
        assert d.modified == ((rec("185cm", None, 2015), rec("185.4cm", None, 2018)),)
        assert d.added == () and d.removed == ()

    def test_same_object_new_valid_time(self):
        d = diff(state("R", "P1", rec("Q5", 2010)), state("R", "P1", rec("Q5", 2011)))
        assert len(d.modified) == 1

    def test_identity(self):
        s, _ = ronaldo()
        d = diff(s, s)
        assert d.empty and d.carried == tuple(s.sorted_records())

    def test_unrelated_replacement_not_matched(self):
        d = diff(*john_citizenship())
        assert len(d.added) == 1 and len(d.removed) == 1 and not d.modified

    @settings(max_examples=200, deadline=None)
    @given(st.sets(st.tuples(st.sampled_from(["185cm", "185.4cm", "Q1", "Q2", "abc", "abd"]),
                             st.one_of(st.none(), st.integers(2015, 2019)))),
           st.sets(st.tuples(st.sampled_from(["185cm", "185.4cm", "Q1", "Q2", "abc", "abd"]),
                             st.one_of(st.none(), st.integers(2015, 2019)))))
    def test_partition(self, a, b):
        s1 = state("S", "P", *(rec(o, tv) for o, tv in a))
        s2 = state("S", "P", *(rec(o, tv) for o, tv in b))
        d = diff(s1, s2)
        after = list(d.carried) + list(d.added) + [y for _, y in d.modified]
        before_keys = [r[:2] for r in d.carried] + [r[:2] for r in d.removed] + [x[:2] for x, _ in d.modified]
        assert sorted(after, key=record_sort_key) == sorted(s2.records, key=record_sort_key)
        assert sorted(before_keys, key=repr) == sorted((r[:2] for r in s1.records), key=repr)
        assert len(after) == len(set(after))


class TestTimestampCriterion:
    def test_juventus(self):
        s2 = state("Ronaldo", "P54", rec("Real_Madrid", 2009, 2013), rec("Juventus", 2018, 2018))
        assert timestamp_criterion(s2, IV)

    def test_all_null(self):
        _, after = john_siblings()
        assert not timestamp_criterion(after, IV)

    def test_strict_lower_bound(self):
        assert not timestamp_criterion(state("S", "P", rec("x", 2017)), IV)
        assert timestamp_criterion(state("S", "P", rec("x", 2020)), IV)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.one_of(st.none(), st.integers(2010, 2025)), max_size=5, unique=True),
           st.integers(0, 3), st.integers(0, 3))
    def test_monotone_in_interval(self, tvs, widen_lo, widen_hi):
        s2 = state("S", "P", *(rec(f"Q{i}", tv) for i, tv in enumerate(tvs)))
        wide = Interval.make(ts(2017 - widen_lo), ts(2020 + widen_hi))
        if timestamp_criterion(s2, IV):
            assert timestamp_criterion(s2, wide)


class TestPcaCriterion:
    def test_john_sibling_empty_before(self):
        assert not pca_criterion(*john_siblings())

    def test_ronaldo(self):
        assert pca_criterion(*ronaldo())

    def test_no_new_object(self):
        s1, s2 = ronaldo()
        assert not pca_criterion(s2, s1)

    @settings(max_examples=50, deadline=None)
    @given(st.sets(st.integers(0, 9)))
    def test_empty_before_is_false(self, objs):
        assert not pca_criterion(state("S", "P"), state("S", "P", *(rec(f"Q{o}") for o in objs)))


class TestBulkCriterion:
    def test_siblings_same_day(self):
        assert not bulk_criterion(*john_siblings())

    def test_one_day_apart(self):
        s2 = state("S", "P", rec("Q1", None, "2018-05-01"), rec("Q2", None, "2018-05-02"))
        assert bulk_criterion(state("S", "P"), s2)

    def test_no_new_objects(self):
        s1, _ = ronaldo()
        assert bulk_criterion(s1, s1)

    def test_single_new_object(self):
        assert bulk_criterion(*ronaldo())


def bulk_oracle(s1, s2):
    """Negation of: all distinct new objects share one transaction day, for two or more objects."""
    new = [r for r in s2.records if r[:2] not in {x[:2] for x in s1.records}]
    objs = {r.object for r in new}
    if len(objs) <= 1:
        return True
    return any(a.object != b.object and a.transaction_time.as_date() != b.transaction_time.as_date()
               for a in new for b in new)


class TestClassify:
    def test_uk_britain_is_correction(self):
        assert classify(*john_citizenship(), IV).assigned_label == "correction"

    def test_juventus_real_world(self):
        s1 = state("Ronaldo", "P54", rec("Real_Madrid", 2009, 2013))
        s2 = state("Ronaldo", "P54", rec("Real_Madrid", 2009, 2013), rec("Juventus", 2018, 2018))
        r = classify(s1, s2, IV, "timestamp")
        assert r.assigned_label == "real_world"
        assert set(r.signals) >= {"timestamp", "pca", "bulk"}

    def test_siblings_completion(self):
        assert classify(*john_siblings(), IV, "timestamp").assigned_label == "completion"

    def test_removal_is_correction(self):
        s1 = state("S", "P", rec("Q1", 2010), rec("Q2", 2012))
        s2 = state("S", "P", rec("Q1", 2010))
        assert classify(s1, s2, IV).assigned_label == "correction"

    def test_no_change(self):
        s, _ = ronaldo()
        r = classify(s, s, IV)
        assert r.assigned_label == "none" and not (r.added or r.removed or r.modified)

    def test_mixed_record_carries_correction_flag(self):
        s1 = state("S", "P", rec("Q1", 2014))
        s2 = state("S", "P", rec("Q2", 2018))
        r = classify(s1, s2, IV, "timestamp")
        assert r.assigned_label == "real_world" and r.signals["correction"]

    def test_strict_timestamp_looks_at_additions_only(self):
        s1 = state("S", "P", rec("Q1", 2018, 2018))
        s2 = state("S", "P", rec("Q1", 2018, 2018), rec("Q2", None, 2019))
        assert classify(s1, s2, IV).assigned_label == "real_world"
        assert classify(s1, s2, IV, strict_timestamp=True).assigned_label == "completion"

    def test_unknown_criterion(self):
        with pytest.raises(ContractError):
            classify(*ronaldo(), IV, "magic")

    @settings(max_examples=200, deadline=None)
    @given(st.sets(st.tuples(st.integers(0, 4), st.one_of(st.none(), st.integers(2014, 2020)))),
           st.lists(st.tuples(st.integers(0, 6), st.one_of(st.none(), st.integers(2014, 2020)),
                              st.integers(1, 3)), max_size=6),
           st.sampled_from(changes.CRITERIA))
    def test_label_none_iff_stable(self, before, after, criterion):
        s1 = state("S", "P", *(rec(f"Q{o}", tv, 2016) for o, tv in before))
        uniq = {}
        for o, tv, day in after:
            uniq[(o, tv)] = rec(f"Q{o}", tv, f"2018-01-0{day}")
        s2 = state("S", "P", *uniq.values())
        r = classify(s1, s2, IV, criterion)
        assert (r.assigned_label == "none") == is_stable(s1, s2)
        assert r.signals["bulk"] == bulk_oracle(s1, s2)
        for c in changes.CRITERIA:
            assert r.label_under(c) == classify(s1, s2, IV, c).assigned_label


class TestAnalyze:
    def test_matches_pairwise_classification(self):
        facts1 = [fact("Q1", "P1", "Q10", 2010, 2011), fact("Q2", "P1", "Q11", None, 2011),
                  fact("Q3", "P1", "Q12", 2010, 2011)]
        facts2 = [fact("Q1", "P1", "Q10", 2010, 2011), fact("Q1", "P1", "Q13", 2018, 2018),
                  fact("Q3", "P1", "Q12", 2010, 2011), fact("Q4", "P1", "Q14", None, 2019)]
        s1, s2 = Snapshot(ts(2017), facts1), Snapshot(ts(2020), facts2)
        got = changes.analyze(s1, s2)
        assert [(r.subject, r.assigned_label) for r in got] == [
            ("Q1", "real_world"), ("Q2", "correction"), ("Q4", "completion")]
        for r in got:
            want = classify(project(s1, r.subject, r.property), project(s2, r.subject, r.property), IV)
            assert r == want

    def test_transaction_time_only_difference_is_stable(self):
        s1 = Snapshot(ts(2017), [fact("Q1", "P1", "Q10", 2010, 2011)])
        s2 = Snapshot(ts(2020), [fact("Q1", "P1", "Q10", 2010, 2012)])
        assert changes.analyze(s1, s2) == []
        assert len(changes.analyze(s1, s2, strict=True)) == 1

    def test_workers_same_output(self):
        from kbstab import synth
        s1, s2, _ = synth.generate(synth.GeneratorConfig(entities=800), seed=5)
        assert changes.analyze(s1, s2, workers=2) == changes.analyze(s1, s2)

    def test_json_round_trip(self):
        s1 = state("S", "P2048", rec("185cm", None, 2015), rec("Q1", 2012, 2013))
        s2 = state("S", "P2048", rec("185.4cm", None, 2018), rec("Q2", 2018, "2018-02-03"))
        r = classify(s1, s2, IV, "bulk")
        assert changes.record_from_json(changes.record_to_json(r)) == r


class TestEvaluateCriteria:
    def test_perfect(self):
        s1, s2 = ronaldo()
        r = classify(s1, s2, IV)
        m = evaluate_criteria([r], [GoldLabel("Ronaldo", "P551", IV, "real_world")], ["timestamp"])
        m = m.metrics["timestamp"]
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)

    def test_all_negative_predictions(self):
        rec_ = classify(*john_siblings(), IV)
        gold = [GoldLabel("John", "P3373", IV, "real_world"), GoldLabel("X", "P1", IV, "completion")]
        m = evaluate_criteria([rec_], gold).metrics["timestamp"]
        assert m.recall == 0.0

    def test_unmatched_record(self):
        with pytest.raises(ContractError, match="Ronaldo"):
            evaluate_criteria([classify(*ronaldo(), IV)], [])

    def test_fixture_hand_confusion(self, data_dir):
        d = data_dir / "criteria"
        recs = changes.analyze(ingest.load_snapshot(d / "snapshot_t1.tsv"),
                               ingest.load_snapshot(d / "snapshot_t2.tsv"))
        assert len(recs) == 20
        report = evaluate_criteria(recs, ingest.load_labels(d / "labels.tsv"))
        # hand-computed, see tests/data/criteria/README
        want = {"timestamp": (8, 1, 2, 10), "pca": (7, 3, 3, 8), "bulk": (8, 2, 2, 9)}
        for c, (tp, fp, fn, tn) in want.items():
            m = report.metrics[c]
            assert (m.tp, m.fp, m.fn, m.tn) == (tp, fp, fn, tn)
            p, r = Fraction(tp, tp + fp), Fraction(tp, tp + fn)
            assert m.precision == float(p) and m.recall == float(r)
            assert m.f1 == pytest.approx(float(2 * p * r / (p + r)), abs=1e-15)
        assert report.distribution["all"] == {"real_world": 10, "completion": 5, "correction": 5}
        assert report.metrics["timestamp"].confusion["real_world"]["completion"] == 2
