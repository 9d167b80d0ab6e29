import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogslice.ingest import MonitoringRecord
from cogslice.kb import (
    ConflictError,
    CountingFilter,
    DatasetMeta,
    FeedbackEntry,
    IncompatibleFilterError,
    IntegrityError,
    KBError,
    PolicySet,
    apply_sharing_filter,
    cf_insert,
    cf_merge,
    cf_query,
    kb_init,
)
from cogslice.table import DataTable


def _table(n=1000):
    return DataTable({"timestamp_ms": np.arange(n) * 10.0, "ue_id": ["ue-0"] * n, "wb_cqi": np.full(n, 9.0)})


def test_empty_kb(tmp_path):
    kb = kb_init(tmp_path / "kb")
    assert kb.manifest == [] and kb.models == []


def test_reinit_loads_manifest_unchanged(tmp_path):
    kb = kb_init(tmp_path)
    kb.put_dataset(_table(10), DatasetMeta("raw-a"))
    before = (tmp_path / "kb.json").read_text()
    again = kb_init(tmp_path)
    assert (tmp_path / "kb.json").read_text() == before
    assert [m.id for m in again.manifest] == ["raw-a"]


def test_put_dataset_counts_and_round_trips(tmp_path):
    kb = kb_init(tmp_path)
    t = _table()
    kb.put_dataset(t, DatasetMeta("raw-a"))
    assert len(kb.manifest) == 1
    assert kb.dataset_meta("raw-a").row_count == 1000
    assert kb.get_dataset("raw-a").to_csv() == t.to_csv()


def test_unknown_parent_rejected(tmp_path):
    kb = kb_init(tmp_path)
    with pytest.raises(KBError):
        kb.put_dataset(_table(5), DatasetMeta("proc", "processed", parent="nope"))


def test_duplicate_id_conflicts(tmp_path):
    kb = kb_init(tmp_path)
    kb.put_dataset(_table(5), DatasetMeta("raw-a"))
    with pytest.raises(ConflictError):
        kb.put_dataset(_table(6), DatasetMeta("raw-a"))


def test_tampered_dataset_detected(tmp_path):
    kb = kb_init(tmp_path)
    kb.put_dataset(_table(5), DatasetMeta("raw-a"))
    path = kb.dataset_path("raw-a")
    path.write_text(path.read_text() + "x")
    with pytest.raises(IntegrityError):
        kb.get_dataset("raw-a")


def test_feedback_is_monotone(tmp_path):
    kb = kb_init(tmp_path)
    kb.append_feedback([FeedbackEntry(1, 9.2, 9.0), FeedbackEntry(2, 8.7, 9.0)])
    first = (tmp_path / "feedback.jsonl").read_text()
    with pytest.raises(KBError):
        kb.append_feedback([FeedbackEntry(1, 1.0, 1.0)])
    kb.append_feedback([FeedbackEntry(2, 8.0, 8.0)])
    text = (tmp_path / "feedback.jsonl").read_text()
    assert text.startswith(first)
    assert [e.tick for e in kb_init(tmp_path).read_feedback()] == [1, 2, 2]


RECORD = MonitoringRecord(100, "ue-1", "gnb-0", {"rsrp": -90.0, "wb_cqi": 11.0})


def test_sharing_filter_identity():
    assert apply_sharing_filter(PolicySet({"rsrp": "share"}), RECORD) == RECORD


def test_sharing_filter_redacts_ue_id():
    out = apply_sharing_filter(PolicySet({"ue_id": "redact"}), RECORD)
    assert out.ue_id is None
    assert (out.timestamp_ms, out.gnb_id, out.metrics) == (RECORD.timestamp_ms, RECORD.gnb_id, RECORD.metrics)


def test_sharing_filter_redact_all_keeps_timestamp():
    pol = PolicySet({k: "redact" for k in ("ue_id", "gnb_id", "rsrp", "wb_cqi")})
    out = apply_sharing_filter(pol, RECORD)
    assert out.to_dict() == {"timestamp_ms": 100}


@given(st.sets(st.sampled_from(["ue_id", "gnb_id", "rsrp", "wb_cqi"])))
def test_sharing_filter_idempotent(hidden):
    pol = PolicySet({k: "redact" for k in hidden})
    once = apply_sharing_filter(pol, RECORD)
    assert apply_sharing_filter(pol, once) == once


def test_policy_rejects_unknown_mode():
    with pytest.raises(ValueError):
        PolicySet({"rsrp": "hide"})


# -- counting filter --------------------------------------------------------

items = st.lists(st.binary(min_size=1, max_size=8), max_size=30)


def _fill(xs, m=256, seed=0):
    cf = CountingFilter.empty(m, 3, seed)
    for x in xs:
        cf = cf_insert(cf, x)
    return cf


def test_counting_filter_basics():
    cf = CountingFilter.empty()
    assert cf_query(cf, b"y") == 0
    cf = cf_insert(cf, b"x")
    assert cf_query(cf, b"x") >= 1
    assert cf_query(cf_insert(cf, b"x"), b"x") >= 2


@given(items)
def test_no_false_negatives(xs):
    cf = _fill(xs)
    for x in set(xs):
        assert cf_query(cf, x) >= xs.count(x)


@given(items, items)
def test_merge_is_elementwise_sum(xs, ys):
    a, b = _fill(xs), _fill(ys)
    m = cf_merge(a, b)
    assert np.array_equal(m.counters, a.counters + b.counters)
    assert np.array_equal(cf_merge(a, CountingFilter.empty(256)).counters, a.counters)
    for x in xs:
        assert cf_query(m, x) >= cf_query(a, x)


@given(items, items, items)
def test_merge_associative_commutative(xs, ys, zs):
    a, b, c = _fill(xs), _fill(ys), _fill(zs)
    assert np.array_equal(cf_merge(a, b).counters, cf_merge(b, a).counters)
    assert np.array_equal(cf_merge(cf_merge(a, b), c).counters, cf_merge(a, cf_merge(b, c)).counters)


def test_merge_incompatible():
    with pytest.raises(IncompatibleFilterError):
        cf_merge(CountingFilter.empty(64), CountingFilter.empty(64, seed=1))
