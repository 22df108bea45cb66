from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mshllm.data import (
    DataError,
    SynthSpec,
    TimeSeriesDataset,
    chronological_split,
    generate_synthetic,
    inject_mask,
    load_csv,
    load_m4_csv,
    make_windows,
    revin_denormalize,
    revin_normalize,
    subsample_fraction,
    window_count,
    write_csv,
)


def ds_of(T: int, D: int = 1) -> TimeSeriesDataset:
    return TimeSeriesDataset(np.arange(T * D, dtype=float).reshape(T, D), tuple(f"c{j}" for j in range(D)))


# ingestion -----------------------------------------------------------------
def test_load_plain_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1,2\n3,4\n5,6\n")
    ds = load_csv(p)
    assert (ds.T, ds.D) == (3, 2)
    np.testing.assert_array_equal(ds.values[:, 1], [2, 4, 6])


def test_header_and_timestamp_dropped(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,x,y\n2020-01-01 00:00,1,2\n2020-01-01 01:00,3,4\n")
    ds = load_csv(p, frequency="hourly")
    assert ds.column_names == ("x", "y")
    assert (ds.T, ds.D) == (2, 2)
    assert ds.frequency == "hourly"


def test_ett_style_fixture(tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "ett.csv"
    rows = ["date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT"]
    for i in range(100):
        rows.append(f"2016-07-01 {i:03d}," + ",".join(f"{v:.3f}" for v in rng.normal(size=7)))
    p.write_text("\n".join(rows) + "\n")
    ds = load_csv(p)
    assert ds.values.shape == (100, 7)


def test_non_numeric_cell_reports_position(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("x,y\n1,2\n3,abc\n")
    with pytest.raises(DataError, match=r"row 3, column 2"):
        load_csv(p)


def test_missing_cell_is_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n1,2\n3,nan\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(p)


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_csv(p)


def test_ragged_row(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(p)


def test_m4_style_file(tmp_path):
    p = tmp_path / "m4.csv"
    p.write_text('"V1","V2","V3","V4"\n"H1",1,2,3\n"H2",4,5\n')
    series = load_m4_csv(p, "hourly")
    assert [s.name for s in series] == ["H1", "H2"]
    assert [s.T for s in series] == [3, 2]


def test_write_then_load_roundtrip(tmp_path):
    ds = generate_synthetic(SynthSpec(length=50, channels=3, seed=4))
    write_csv(ds, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", "hourly")
    np.testing.assert_array_equal(back.values, ds.values)


# splits --------------------------------------------------------------------
@pytest.mark.parametrize(
    "T, ratio, expected",
    [(10, (0.6, 0.2, 0.2), (6, 2, 2)), (100, (0.7, 0.2, 0.1), (70, 20, 10)), (101, (0.6, 0.2, 0.2), (61, 20, 20))],
)
def test_split_lengths(T, ratio, expected):
    parts = chronological_split(ds_of(T), ratio)
    assert tuple(p.T for p in parts) == expected


def test_split_concatenates_back():
    ds = ds_of(57, 2)
    parts = chronological_split(ds, (0.6, 0.2, 0.2))
    np.testing.assert_array_equal(np.concatenate([p.values for p in parts]), ds.values)


def test_split_errors():
    with pytest.raises(DataError, match="sum to 1"):
        chronological_split(ds_of(10), (0.5, 0.2, 0.2))
    with pytest.raises(DataError, match="empty"):
        chronological_split(ds_of(3), (0.6, 0.2, 0.2))


# windows -------------------------------------------------------------------
def test_window_counts():
    assert len(make_windows(ds_of(12), 8, 4)) == 1
    assert len(make_windows(ds_of(14), 8, 4)) == 3
    assert len(make_windows(ds_of(14), 8, 4, stride=2)) == 2
    assert window_count(14, 8, 4, 2) == 2


def test_windows_are_contiguous_and_ordered():
    for w in make_windows(ds_of(30), 5, 3, stride=4):
        o = w.origin_index
        np.testing.assert_array_equal(w.input[:, 0], np.arange(o, o + 5))
        np.testing.assert_array_equal(w.target[:, 0], np.arange(o + 5, o + 8))


def test_window_too_short_names_minimum():
    with pytest.raises(DataError, match="12"):
        make_windows(ds_of(10), 8, 4)


# RevIN ---------------------------------------------------------------------
def test_revin_constant_channel():
    x = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
    z, state = revin_normalize(x)
    np.testing.assert_array_equal(z[:, 0], 0.0)
    assert state.std[0, 0] == pytest.approx(1e-8)


def test_revin_standardized_input_unchanged(rng):
    x = rng.normal(size=(64, 3))
    x = (x - x.mean(0)) / x.std(0)
    z, _ = revin_normalize(x)
    np.testing.assert_allclose(z, x, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (24, 3), elements=st.floats(-1e3, 1e3)))
def test_revin_roundtrip_property(x):
    z, state = revin_normalize(x)
    np.testing.assert_allclose(revin_denormalize(z, state), x, atol=1e-9, rtol=0)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)


# few-shot ------------------------------------------------------------------
def test_fraction_rules():
    assert subsample_fraction(ds_of(1000), 1.0).T == 1000
    assert subsample_fraction(ds_of(1000), 0.10).T == 100
    assert subsample_fraction(ds_of(1001), 0.05).T == 51


def test_fraction_is_prefix():
    sub = subsample_fraction(ds_of(200), 0.1)
    np.testing.assert_array_equal(sub.values[:, 0], np.arange(20))


def test_fraction_too_short():
    with pytest.raises(DataError, match="one window needs"):
        subsample_fraction(ds_of(100), 0.05, min_length=12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5000), st.sampled_from([0.05, 0.1, 0.37, 1.0]))
def test_fraction_ceil_property(T, f):
    assert subsample_fraction(ds_of(T), f).T == math.ceil(round(f * T, 9))


# synthetic -----------------------------------------------------------------
def test_synthetic_closed_form():
    ds = generate_synthetic(SynthSpec(length=200, channels=1, components=((24.0, 2.0),), noise_std=0.0))
    t = np.arange(200)
    np.testing.assert_allclose(ds.values[:, 0], 2.0 * np.sin(2 * np.pi * t / 24), atol=1e-12)


def test_synthetic_reproducible():
    a = generate_synthetic(SynthSpec(length=300, seed=9))
    b = generate_synthetic(SynthSpec(length=300, seed=9))
    np.testing.assert_array_equal(a.values, b.values)


def test_synthetic_spectral_peak():
    ds = generate_synthetic(SynthSpec(length=960, channels=1, components=((24.0, 1.0),), noise_std=0.1, seed=1))
    spec = np.abs(np.fft.rfft(ds.values[:, 0]))
    freqs = np.fft.rfftfreq(960)
    assert freqs[np.argmax(spec[1:]) + 1] == pytest.approx(1 / 24)


def test_mask_injection(rng):
    x = rng.normal(size=(4, 50, 2))
    masked, mask = inject_mask(x, 0.2, np.random.default_rng(0))
    assert 0.1 < mask.mean() < 0.3
    fill = np.broadcast_to(x.mean(axis=1, keepdims=True), x.shape)
    np.testing.assert_array_equal(masked[mask], fill[mask])
    np.testing.assert_array_equal(masked[~mask], x[~mask])
