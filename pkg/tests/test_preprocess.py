import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cogslice.ingest import GeneratorConfig, TraceScenario, default_scenarios, generate_trace
from cogslice.preprocess import (
    DetectorConfig,
    IrreparableColumnError,
    OrderingError,
    add_relative_timestamps,
    denormalize,
    normalize,
    preprocess,
    prune_static_fields,
    repair_target_spikes,
    repair_values,
)
from cogslice.table import DataTable


def test_relative_timestamps():
    t = add_relative_timestamps(DataTable({"timestamp_ms": [0.0, 10.0, 20.0]}))
    assert t["dt_ms"].tolist() == [0, 10, 10]
    assert add_relative_timestamps(DataTable({"timestamp_ms": [5.0]}))["dt_ms"].tolist() == [0]
    with pytest.raises(OrderingError):
        add_relative_timestamps(DataTable({"timestamp_ms": [0.0, 10.0, 5.0]}))


def test_relative_timestamps_per_ue():
    t = DataTable({"timestamp_ms": [0.0, 3.0, 10.0, 13.0], "ue_id": ["a", "b", "a", "b"]})
    assert add_relative_timestamps(t)["dt_ms"].tolist() == [0, 0, 10, 10]


def test_prune_static():
    t = DataTable({"a": [5.0, 5.0, 5.0], "b": [5.0, 5.0, 5.1]})
    out, removed = prune_static_fields(t)
    assert removed == ["a"] and out.names == ["b"]


def test_prune_matches_generator_static_fields():
    cfg = GeneratorConfig(seed=2, scenarios=default_scenarios(samples=200), static_field_count=7)
    raw, _ = generate_trace(cfg)
    _, removed = prune_static_fields(raw)
    assert sorted(removed) == [f"static_{j:02d}" for j in range(7)]


@given(hnp.arrays(float, (12, 3), elements=st.sampled_from([0.0, 1.0, 2.0])))
def test_prune_idempotent(a):
    t = DataTable({f"c{j}": a[:, j] for j in range(3)})
    once, _ = prune_static_fields(t)
    twice, removed = prune_static_fields(once)
    assert removed == [] and twice.names == once.names


def test_repair_neighbor_median():
    t = DataTable({"x": [1.0, 999.0, 3.0]})
    out, rep = repair_values(t, "x", DetectorConfig(valid_range=(0, 20), neighbors=2))
    assert out["x"].tolist() == [1.0, 2.0, 3.0]
    assert rep.repaired_cells == [(1, "x", 999.0, 2.0)]


def test_repair_clean_identity():
    t = DataTable({"x": [1.0, 2.0, 3.0]})
    out, rep = repair_values(t, "x", DetectorConfig(valid_range=(0, 20)))
    assert out is t and rep.cells == []


def test_repair_restores_injected_out_of_range(rng):
    sc = [TraceScenario("pedestrian", duration_ms=30_000, speed_mps=1.4, start_distance_m=70.0, span_m=60.0)]
    raw, _ = generate_trace(GeneratorConfig(seed=4, scenarios=sc, noise_sigma_db=0.0))
    truth = raw["rsrp"].copy()
    bad = rng.choice(raw.row_count, 60, replace=False)
    v = truth.copy()
    v[bad] = 50.0
    out, rep = repair_values(raw.with_column("rsrp", v), "rsrp", DetectorConfig(valid_range=(-156.0, 0.0)))
    ok = np.abs(out["rsrp"][bad] - truth[bad]) <= 1.0
    assert ok.mean() >= 0.99
    assert len(rep.cells) == 60


def test_spike_in_flat_series():
    v = np.full(120, 14.0)
    v[60] = 3.0
    out, rep = repair_target_spikes(DataTable({"wb_cqi": v}))
    assert np.all(out["wb_cqi"] == 14.0)
    assert rep.repaired_cells == [(60, "wb_cqi", 3.0, 14.0)]


def test_spike_clean_series_unchanged():
    v = np.repeat([14.0, 13.0, 10.0, 8.0], 80)
    out, rep = repair_target_spikes(DataTable({"wb_cqi": v}))
    assert np.array_equal(out["wb_cqi"], v) and rep.cells == []


@given(hnp.arrays(float, 150, elements=st.integers(1, 15).map(float)))
def test_repairs_only_touch_reported_cells(v):
    t = DataTable({"wb_cqi": v})
    out, rep = repair_target_spikes(t)
    changed = np.flatnonzero(out["wb_cqi"] != v)
    assert sorted(changed.tolist()) == rep.rows()
    assert all(v[c.row] == c.old for c in rep.cells)
    assert np.all((out["wb_cqi"] >= 1) & (out["wb_cqi"] <= 15))


def test_spike_repair_all_invalid_raises():
    with pytest.raises(IrreparableColumnError):
        repair_target_spikes(DataTable({"wb_cqi": np.zeros(20)}))


def test_normalize_examples():
    t = DataTable({"rsrp": [-100.0, -80.0, -60.0], "k": [2.0, 2.0, 2.0]})
    out, params = normalize(t)
    assert out["rsrp"].tolist() == [0.0, 0.5, 1.0]
    assert out["k"].tolist() == [0.0, 0.0, 0.0] and params.degenerate == {"k"}
    test, _ = normalize(DataTable({"rsrp": [-120.0]}), params)
    assert test["rsrp"].tolist() == [0.0]


@given(hnp.arrays(float, 20, elements=st.floats(-1e4, 1e4)))
def test_normalize_round_trip(x):
    t = DataTable({"x": x})
    out, params = normalize(t)
    if params.degenerate:
        return
    back = denormalize(out, params)["x"]
    scale = max(np.abs(x).max(), 1.0)
    assert np.allclose(back, x, rtol=0, atol=1e-9 * scale)


def test_preprocess_full_pass(small_generator):
    raw, _ = generate_trace(small_generator)
    out, removed, rep = preprocess(raw)
    assert "dt_ms" in out and set(removed) >= {f"static_{j:02d}" for j in range(5)}
