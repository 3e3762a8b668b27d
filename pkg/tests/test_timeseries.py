import json
import struct

import numpy as np
import pytest

from deltacast.dataset_io import DatasetFormatError, read_dataset, write_dataset
from deltacast.seeding import child_seed, derive_rng
from deltacast.timeseries import (Frequency, Scaler, ScalerKind, TimeSeries, Unit, append_provenance, date_grid,
                                  fit_scaler, provenance_stages, seasonal_period, time_features)


def test_frequency_parse_and_format():
    assert Frequency.parse("15T") == Frequency(Unit.MINUTES, 15)
    assert Frequency.parse("10S") == Frequency(Unit.SECONDS, 10)
    assert Frequency.parse("A") == Frequency(Unit.YEARS)
    for text in ("15T", "H", "D", "W", "M", "Q", "A", "10S", "5T"):
        assert str(Frequency.parse(text)) == text
    with pytest.raises(ValueError):
        Frequency.parse("fortnight")
    with pytest.raises(ValueError):
        Frequency(Unit.HOURS, 0)


@pytest.mark.parametrize("text,season", [
    ("H", 24), ("D", 7), ("W", 52), ("M", 12), ("Q", 4), ("A", 1), ("15T", 96), ("5T", 288), ("10S", 8640),
])
def test_seasonal_period(text, season):
    assert seasonal_period(Frequency.parse(text)) == season


def test_date_grid_months_clamp_to_month_end():
    g = date_grid("2021-01-31", Frequency(Unit.MONTHS), 3)
    assert [str(x)[:10] for x in g] == ["2021-01-31", "2021-02-28", "2021-03-31"]


def test_date_grid_overflow_is_explicit():
    with pytest.raises(OverflowError):
        date_grid("9999-12-31", Frequency(Unit.DAYS), 3)
    with pytest.raises(OverflowError):
        time_features("9999-12-01", Frequency(Unit.MONTHS), 1, 5)


def test_time_features_midnight_monday_hour():
    # 2024-01-01 was a Monday
    f = time_features("2024-01-01T00:00:00", Frequency(Unit.HOURS), 1, 0)
    assert f.shape == (1, 6)
    assert f[0, 2] == -0.5  # hour-of-day
    assert f[0, 3] == -0.5  # Monday


@pytest.mark.parametrize("text", ["10S", "15T", "H", "D", "W", "M", "Q", "A"])
def test_time_features_rows_and_bounds(text):
    f = time_features("2019-06-15T13:45:10", Frequency.parse(text), 3, 2)
    assert f.shape[0] == 5
    assert np.all(f >= -0.5) and np.all(f <= 0.5)
    assert np.array_equal(f, time_features("2019-06-15T13:45:10", Frequency.parse(text), 3, 2))


def test_time_features_future_rolls_calendar():
    f = time_features("2024-01-01", Frequency(Unit.DAYS), 2, 5)
    dow = (f[:, 0] + 0.5) * 6
    assert np.allclose(dow, [0, 1, 2, 3, 4, 5, 6])


def test_series_masks_missing_values():
    s = TimeSeries.from_array([1.0, np.nan, 3.0])
    assert s.mask.tolist() == [True, False, True]
    assert s.values[1] == 0.0
    with pytest.raises(ValueError):
        TimeSeries(np.array([1.0, np.inf]), np.array([True, True]))
    with pytest.raises(ValueError):
        TimeSeries(np.zeros(3), np.ones(2, bool))
    # infinities behind the mask are harmless
    assert TimeSeries(np.array([1.0, np.inf]), np.array([True, False])).values[1] == 0.0


def test_minmax_endpoints():
    sc = fit_scaler("minmax", [0.0, 10.0])
    assert sc.apply(np.array([0.0, 10.0])).tolist() == [0.0, 1.0]


def _order_stat_quantile(x, q):
    """Linear interpolation between order statistics, written out by hand."""
    xs = sorted(x)
    pos = q * (len(xs) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (pos - lo) * (xs[hi] - xs[lo])


def test_robust_scaler_golden():
    sc = fit_scaler("robust", [1.0, 2.0, 3.0, 100.0])
    assert sc.shift == 2.5
    iqr = _order_stat_quantile([1, 2, 3, 100], 0.75) - _order_stat_quantile([1, 2, 3, 100], 0.25)
    assert sc.scale == pytest.approx(iqr, abs=0)
    assert sc.scale == 25.5  # 27.25 - 1.75


@pytest.mark.parametrize("kind", list(ScalerKind))
def test_scaler_roundtrip(kind):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(3, 10, size=50)
        sc = fit_scaler(kind, x)
        assert np.max(np.abs(sc.invert(sc.apply(x)) - x)) <= 1e-12 * max(1.0, np.abs(x).max())


def test_scaler_median_mean_definitions():
    x = np.array([-4.0, 1.0, 2.0])
    assert fit_scaler("median", x) == Scaler(ScalerKind.MEDIAN, 0.0, 2.0)
    assert fit_scaler("mean", x).scale == pytest.approx(7 / 3)


def test_scaler_guards():
    with pytest.raises(ValueError):
        fit_scaler("robust", [np.nan, np.nan])
    assert fit_scaler("minmax", [5.0, 5.0]).scale == 1e-10


def test_scaler_leaves_missing_positions():
    s = TimeSeries.from_array([1.0, np.nan, 5.0])
    sc = fit_scaler("minmax", s)
    out = sc.apply(s)
    assert out.mask.tolist() == [True, False, True]
    assert out.values.tolist() == [0.0, 0.0, 1.0]


def test_provenance_is_json_list():
    p = append_provenance("", {"op": "a"})
    p = append_provenance(p, {"op": "b"})
    assert [r["op"] for r in provenance_stages(p)] == ["a", "b"]
    assert provenance_stages(append_provenance("legacy", {"op": "c"}))[0] == {"op": "note", "text": "legacy"}


def _corpus(n=5, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        v = rng.normal(size=20 + i)
        v[rng.random(v.size) < 0.2] = np.nan
        out.append(TimeSeries.from_array(v, start="2020-03-01T06:00:00", freq=Frequency.parse(["H", "15T", "D", "M", "10S"][i % 5]),
                                         id=f"s{i}", provenance=json.dumps([{"op": "gen", "i": i}])))
    return out


def _same(a, b, exact=True):
    assert a.id == b.id and a.freq == b.freq and a.start == b.start and a.provenance == b.provenance
    assert np.array_equal(a.mask, b.mask)
    if exact:
        assert np.array_equal(a.values, b.values)


def test_jsonl_roundtrip_is_exact(tmp_path):
    src = _corpus()
    write_dataset(src, tmp_path / "d.jsonl")
    for a, b in zip(src, read_dataset(tmp_path / "d.jsonl")):
        _same(a, b)


def test_binary_roundtrip(tmp_path):
    src = _corpus()
    write_dataset(src, tmp_path / "d.bin", version=2)
    for a, b in zip(src, read_dataset(tmp_path / "d.bin")):
        _same(a, b)
    write_dataset(src, tmp_path / "f.bin")  # default: 32-bit values
    for a, b in zip(src, read_dataset(tmp_path / "f.bin")):
        _same(a, b, exact=False)
        assert np.array_equal(b.values, a.values.astype(np.float32).astype(np.float64))


def test_binary_header_layout(tmp_path):
    write_dataset(_corpus(3), tmp_path / "d.bin")
    raw = (tmp_path / "d.bin").read_bytes()
    magic, version, count = struct.unpack("<4sHQ", raw[:14])
    assert (magic, version, count) == (b"TPFN", 1, 3)


def test_binary_rewrite_is_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    src = [TimeSeries.from_array(rng.normal(size=8), id=str(i)) for i in range(10_000)]
    write_dataset(src, tmp_path / "a.bin")
    write_dataset(read_dataset(tmp_path / "a.bin"), tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_truncated_binary_names_offset(tmp_path):
    write_dataset(_corpus(3), tmp_path / "d.bin")
    raw = (tmp_path / "d.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-10])
    with pytest.raises(DatasetFormatError, match=r"record 2 at byte offset \d+"):
        read_dataset(tmp_path / "t.bin")


def test_malformed_jsonl_names_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id":"a","freq":"H","start":"2020-01-01","values":[1]}\n{"id":"b"}\n')
    with pytest.raises(DatasetFormatError, match=":2:"):
        read_dataset(p)


def test_seed_streams_are_independent_and_stable():
    a = derive_rng(7, "generate", 0).random(4)
    assert np.array_equal(a, derive_rng(7, "generate", 0).random(4))
    assert not np.array_equal(a, derive_rng(7, "generate", 1).random(4))
    assert not np.array_equal(a, derive_rng(7, "augment", 0).random(4))
    s = child_seed(derive_rng(0, "x"))
    assert 0 <= s < 2**63
