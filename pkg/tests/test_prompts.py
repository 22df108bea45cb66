from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mshllm.prompts import (
    TEMPLATE_VERSION,
    DatasetMeta,
    build_capability_prompt,
    build_data_prompt,
    hash_token,
    init_learnable_prompts,
    series_statistics,
    token_table,
    tokenize,
    tokenize_embed,
    trend_label,
)

META = DatasetMeta("toy", "hourly", 2)


def test_constant_window_statistics():
    st_ = series_statistics(np.full(12, 2.5))
    assert st_ == {"min": 2.5, "max": 2.5, "median": 2.5, "trend": "flat"}


def test_ramp_trend_up_and_down():
    assert trend_label(np.arange(10.0)) == "up"
    assert trend_label(-np.arange(10.0)) == "down"


def test_hand_statistics():
    st_ = series_statistics(np.array([1.0, 3.0, 2.0, 4.0]))
    assert (st_["min"], st_["max"], st_["median"]) == (1.0, 4.0, 2.5)


def test_data_prompt_covers_every_scale():
    window = np.column_stack([np.arange(32.0), np.arange(32.0)])
    p = build_data_prompt(META, window, windows=(4, 2), horizon=8)
    names = [n for n, _ in p.segments]
    assert names == ["description", "task", "statistics"]
    stats = dict(p.segments)["statistics"]
    assert "input:" in stats and "scale 2:" in stats and "scale 3:" in stats
    assert "min 0," in stats and "max 31," in stats and "trend up" in stats
    assert "<statistics>" in p.rendered and "Forecast 8" in p.rendered


def test_capability_prompt_deterministic_with_markers():
    a = build_capability_prompt("long_forecast")
    assert a == build_capability_prompt("long_forecast")
    for marker in ("<logic>", "<emotion>", "<reasoning>"):
        assert marker in a.rendered
    assert [n for n, _ in a.segments] == ["logic", "emotion", "reasoning"]


def test_long_and_short_differ_only_in_task_slots():
    long_ = build_capability_prompt("long_forecast").rendered
    short = build_capability_prompt("short_forecast").rendered
    assert long_ != short
    assert long_.replace("long-term", "X") == short.replace("short-term", "X")


def test_unknown_task():
    with pytest.raises(ValueError):
        build_capability_prompt("classify")


def test_single_word_embedding_is_table_row():
    table = token_table(64, 3)
    emb = tokenize_embed("trend", table)
    assert emb.token_ids == [hash_token("trend", 64)]
    np.testing.assert_array_equal(emb.embedded[0], table[hash_token("trend", 64)])


def test_tokenizer_splits_words_numbers_punctuation():
    assert tokenize("Min -1.5e-05, max 3; UP") == ["min", "-1.5e-05", ",", "max", "3", ";", "up"]


def test_empty_prompt_rejected():
    with pytest.raises(ValueError, match="empty"):
        tokenize_embed("   ", token_table(8, 2))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (16, 2), elements=st.floats(-1e6, 1e6)))
def test_data_prompt_token_count_is_fixed(window):
    table = token_table(128, 2)
    ref = tokenize_embed(build_data_prompt(META, np.zeros((16, 2)), (4,), 4), table).embedded.shape
    got = tokenize_embed(build_data_prompt(META, window, (4,), 4), table).embedded.shape
    assert got == ref


def test_hash_ids_in_range():
    ids = [hash_token(t, 50) for t in tokenize(build_capability_prompt().rendered)]
    assert min(ids) >= 0 and max(ids) < 50


def test_learnable_prompts_shapes(rng):
    params = init_learnable_prompts((4, 0, 2), 3, rng)
    assert sorted(params) == ["prompt1", "prompt3"]
    assert params["prompt1"].shape == (4, 3) and params["prompt1"].trainable


def test_template_version_recorded():
    assert TEMPLATE_VERSION == "1"
