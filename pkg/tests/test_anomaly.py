import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cogslice.anomaly import (
    UNKNOWN,
    AnomalyConfig,
    AnomalyScore,
    ClusterModel,
    UnlabeledModelError,
    Window,
    assign,
    categorize,
    detect,
    kmeans_fit,
    label_clusters,
    score_window,
    summarize_window,
)
from cogslice.ingest import MonitoringRecord


def _w(resid, start=0):
    return Window(start, start + 10, (10.0, 10.0, float(resid), 5.0, 0.0, 1e6))


def test_score_waits_for_history():
    assert score_window([_w(1)] * 9, _w(1)) is None


def test_score_examples():
    hist = [_w(r) for r in (1, 2, 3, 2, 1, 2, 3, 2, 1, 3)]
    mean = np.mean([1, 2, 3, 2, 1, 2, 3, 2, 1, 3])
    assert score_window(hist, _w(mean)).value == pytest.approx(0.0, abs=1e-12)
    flat = [_w(1)] * 10
    assert score_window(flat, _w(3)).value == 1e6
    # same history with the cap lifted: (3 - 1) / eps
    big = AnomalyConfig(max_score=1e12)
    assert score_window(flat, _w(3), big).value == pytest.approx(2.0 / 1e-9)


@given(hnp.arrays(float, 12, elements=st.floats(0, 10)), st.floats(0, 10), st.floats(-5, 5))
def test_score_translation_invariant(h, cur, c):
    a = score_window([_w(x) for x in h], _w(cur))
    b = score_window([_w(x + c) for x in h], _w(cur + c))
    if np.std(h) > 1e-3:
        assert a.value == pytest.approx(b.value, rel=1e-6, abs=1e-6)


def test_detect_boundary():
    assert not detect(AnomalyScore(0.0, _w(1)))
    assert detect(AnomalyScore(3.0, _w(1), 3.0))
    assert not detect(None)


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_detect_monotone(a, b):
    lo, hi = sorted((a, b))
    if detect(AnomalyScore(lo, _w(1))):
        assert detect(AnomalyScore(hi, _w(1)))


def test_kmeans_k1_mean(rng):
    X = rng.normal(size=(40, 3))
    cm = kmeans_fit(X, 1)
    assert np.allclose(cm.centroids[0], X.mean(axis=0))
    assert cm.inertia == pytest.approx(X.var(axis=0).sum() * 40)


def test_kmeans_two_blobs(rng):
    a = rng.uniform(0, 1, (30, 2))
    b = rng.uniform(10, 11, (30, 2))
    cm = kmeans_fit(np.vstack([a, b]), 2, seed=5)
    for blob in (a, b):
        inside = [np.all((c >= blob.min(0)) & (c <= blob.max(0))) for c in cm.centroid_points()]
        assert sum(inside) == 1


def test_kmeans_k_equals_n(rng):
    X = rng.normal(size=(8, 2))
    assert kmeans_fit(X, 8).inertia == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(ValueError):
        kmeans_fit(np.ones((5, 2)), 2)


@given(st.integers(0, 10**6), st.integers(1, 5), st.booleans())
def test_kmeans_inertia_nonincreasing_and_fixpoint(seed, k, std):
    X = np.random.default_rng(seed).normal(size=(40, 3))
    cm = kmeans_fit(X, k, seed, standardize=std)
    assert np.all(np.diff(cm.inertia_history) <= 1e-9)
    lab = assign(cm, X)
    Z = cm.transform(X)
    for j in range(k):
        if np.any(lab == j):
            assert np.allclose(Z[lab == j].mean(axis=0), cm.centroids[j])


def test_kmeans_restarts_never_worse(rng):
    X = rng.normal(size=(60, 2))
    one = kmeans_fit(X, 4, 3, n_init=1)
    many = kmeans_fit(X, 4, 3, n_init=8)
    assert many.inertia <= one.inertia + 1e-12


def test_categorize(rng):
    a = rng.normal(0, 0.1, (20, 6))
    b = rng.normal(5, 0.1, (20, 6))
    X = np.vstack([a, b])
    cm = kmeans_fit(X, 2, 1)
    with pytest.raises(UnlabeledModelError):
        categorize(cm, X[0])
    cm = label_clusters(cm, X, ["mie_surge"] * 20 + ["route_shift"] * 20, {"mie_surge": "lasso-mie"})
    c = categorize(cm, cm.centroid_points()[assign(cm, a[:1])[0]])
    assert c.name == "mie_surge" and c.recommended_model_id == "lasso-mie"
    assert categorize(cm, np.full(6, 100.0)).name == UNKNOWN


def test_cluster_json_round_trip(rng):
    X = rng.normal(size=(30, 6))
    cm = label_clusters(kmeans_fit(X, 3, 2, standardize=True), X, ["a"] * 15 + ["b"] * 15)
    back = ClusterModel.from_dict(json.loads(json.dumps(cm.to_dict())))
    assert np.array_equal(assign(back, X), assign(cm, X))


def _rec(t, ue, gnb, cqi):
    return MonitoringRecord(t, ue, gnb, {"wb_cqi": float(cqi), "demand_bps": 8e6})


def test_summarize_window():
    w = summarize_window([_rec(0, "a", "g0", 9)], [8.5], 0, 1)
    assert w.summary[:4] == (9.0, 8.5, 0.5, 1.0)
    w = summarize_window([_rec(0, "a", "g0", 10), _rec(0, "b", "g0", 12)], [10, 12], 0, 1)
    assert w.summary[0] == 11.0
    recs = [_rec(t, "a", g, 10) for t, g in enumerate(["g0", "g0", "g1", "g1", "g0"])]
    assert summarize_window(recs, [10] * 5, 0, 5).summary[4] == 2.0


def test_summarize_skips_missing_predictions():
    w = summarize_window([_rec(0, "a", "g0", 9), _rec(0, "b", "g0", 5)], [9.0, None], 0, 1)
    assert w.summary[1] == 9.0 and w.summary[2] == 0.0
