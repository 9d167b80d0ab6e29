import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogslice.ingest import (
    ChannelModel,
    CorruptionSpec,
    GeneratorConfig,
    ParseError,
    TraceScenario,
    generate_trace,
    inject_corruption,
    mcs_from_cqi,
    parse_records,
    round_half_away,
    serialize_records,
)
from cogslice.table import DataTable


def _line(**kw):
    base = {"timestamp_ms": 0, "ue_id": "ue-0", "gnb_id": "gnb-0", "rsrp": -90.0, "rsrq": -10.0, "phr": 20.0, "wb_cqi": 7, "mcs1_dl": 13}
    base.update(kw)
    return json.dumps({k: v for k, v in base.items() if v is not ...})


def test_parse_three_lines():
    t = parse_records("\n".join(_line(timestamp_ms=i) for i in range(3)))
    assert t.row_count == 3
    assert t["wb_cqi"][0] == 7.0


def test_missing_metric_is_nan_and_row_kept():
    t = parse_records(_line() + "\n" + _line(timestamp_ms=10, rsrq=...))
    assert t.row_count == 2
    assert math.isnan(t["rsrq"][1]) and not math.isnan(t["rsrq"][0])


def test_unknown_keys_become_columns():
    assert "mac_ctr_00" in parse_records(_line(mac_ctr_00=4.0))


def test_parse_errors_carry_line_number():
    with pytest.raises(ParseError) as e:
        parse_records(_line() + "\n{not json")
    assert e.value.lineno == 2
    with pytest.raises(ParseError):
        parse_records(_line(ue_id=...))
    with pytest.raises(TypeError):
        parse_records(_line(rsrp="high"))


def test_round_half_away():
    assert round_half_away([0.5, 1.5, 2.5, -0.5, 7.49]).tolist() == [1.0, 2.0, 3.0, -1.0, 7.0]


def test_mcs_depends_on_cqi():
    assert mcs_from_cqi([1, 7, 15]).tolist() == [2.0, 13.0, 28.0]


def _static_cfg(**kw):
    sc = [TraceScenario("static", duration_ms=2000, sample_period_ms=10, start_distance_m=90.0)]
    return GeneratorConfig(seed=3, scenarios=sc, noise_sigma_db=0.0, **kw)


def test_static_noise_free_cqi_constant():
    raw, _ = generate_trace(_static_cfg())
    assert np.unique(raw["wb_cqi"]).size == 1


def test_no_corruption_matches_truth(small_generator):
    raw, truth = generate_trace(small_generator)
    assert np.array_equal(raw["wb_cqi"], truth["wb_cqi"])
    assert truth["corrupted"].sum() == 0


def test_generator_deterministic(small_generator):
    a, ta = generate_trace(small_generator)
    b, tb = generate_trace(small_generator)
    assert a.to_csv() == b.to_csv() and ta.to_csv() == tb.to_csv()


def test_drive_away_cqi_nonincreasing():
    sc = [TraceScenario("drive_away", duration_ms=30_000, speed_mps=5.0, start_distance_m=20.0)]
    raw, truth = generate_trace(GeneratorConfig(seed=0, scenarios=sc, noise_sigma_db=0.0))
    order = np.argsort(truth["distance_m"])
    assert np.all(np.diff(raw["wb_cqi"][order]) <= 0)


def test_corruption_degenerate_cases():
    t = DataTable({"wb_cqi": np.full(50, 12.0)})
    out, idx = inject_corruption(t, CorruptionSpec(3, 0.0), 0)
    assert idx == [] and out is t
    out, idx = inject_corruption(t, CorruptionSpec(3, 1.0, 1), 0)
    assert idx == list(range(50))


@given(st.floats(0.0, 0.3), st.integers(1, 4), st.integers(0, 2**32))
def test_corruption_touches_exactly_listed_rows(p, run, seed):
    t = DataTable({"wb_cqi": np.arange(200, dtype=float) % 13 + 1})
    out, idx = inject_corruption(t, CorruptionSpec(3, p, run), seed)
    mask = np.zeros(200, bool)
    mask[idx] = True
    assert np.all(out["wb_cqi"][mask] == 3)
    assert np.array_equal(out["wb_cqi"][~mask], t["wb_cqi"][~mask])


def test_serialize_round_trip(small_generator):
    raw, _ = generate_trace(small_generator)
    head = raw.take(np.arange(40))
    assert parse_records(serialize_records(head)).select(head.names).to_csv() == head.to_csv()


@given(st.lists(st.tuples(st.integers(0, 10**9), st.floats(-150, 0), st.one_of(st.none(), st.floats(1, 15))), min_size=1, max_size=20))
def test_parse_serialize_identity(rows):
    lines = [json.dumps({"timestamp_ms": t, "ue_id": "u", "gnb_id": "g", "rsrp": r, "wb_cqi": c}) for t, r, c in rows]
    t1 = parse_records("\n".join(lines))
    t2 = parse_records(serialize_records(t1))
    assert t1.to_csv() == t2.to_csv()


def test_channel_cqi_monotone_in_distance():
    ch = ChannelModel()
    d = np.linspace(1, 500, 200)
    assert np.all(np.diff(ch.cqi(ch.sinr(d))) <= 0)
