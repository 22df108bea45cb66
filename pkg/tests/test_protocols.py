from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest

from mshllm.config import ConfigError, DataSource, RunConfig, grid_configs, load_config
from mshllm.data import SynthSpec
from mshllm.model import MSHLLM
from mshllm.protocols import (
    ABLATIONS,
    CheckpointMismatch,
    apply_variant,
    prepare,
    run_ablate,
    run_eval,
    run_grid,
    run_train,
    run_transfer,
    select_model,
)

from .conftest import tiny_model_config, tiny_run_config


def test_run_config_json_round_trip(tmp_path):
    cfg = tiny_run_config(val_stride=3, protocol="fewshot_10")
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert load_config(path) == cfg
    assert load_config(path).config_hash() == cfg.config_hash()


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"version": 99})
    with pytest.raises(ConfigError):
        RunConfig(protocol="fewshot_50")
    with pytest.raises(ConfigError):
        RunConfig(stride=0)
    with pytest.raises(ConfigError):
        DataSource()


def test_with_seed_updates_model_and_training_seeds():
    cfg = tiny_run_config().with_seed(9)
    assert (cfg.seed, cfg.model.seed, cfg.train.seed) == (9, 9, 9)


def test_every_variant_changes_one_switch():
    base = tiny_run_config()
    seen = set()
    for v in ABLATIONS:
        cfg = apply_variant(base, v)
        assert cfg != base
        seen.add(cfg.config_hash())
    assert len(seen) == len(ABLATIONS)
    with pytest.raises(ConfigError):
        apply_variant(base, "-w/o everything")


def test_without_mop_sequence_is_aligned_blocks_only():
    cfg = apply_variant(tiny_run_config(), "-w/o MoP")
    model = MSHLLM(prepare(cfg).model_cfg)
    assert model.total_length == sum(cfg.model.hyperedges.counts)


def test_without_me_uses_one_scale():
    cfg = apply_variant(tiny_run_config(), "-w/o ME")
    model = MSHLLM(prepare(cfg).model_cfg)
    assert model.cfg.scales.S == 1
    assert model.predict(np.zeros((32, 2)) + 1.0).shape == (8, 2)


def test_patch_ablation_runs_end_to_end(tmp_path):
    outcome = run_ablate(tiny_run_config(), "-PM", tmp_path)
    values = {r.metric: r.value for r in outcome.records}
    assert set(values) == {"mse", "mae", "smape", "mase"}
    assert all(np.isfinite(v) for v in values.values())
    assert "variant=-PM" in (tmp_path / "metrics.csv").read_text()


def test_run_train_writes_artifacts(tmp_path):
    cfg = tiny_run_config()
    run_train(cfg, tmp_path, export_embeddings=True, dump_attention=True)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"config.json", "metrics.csv", "train_log.csv", "forecast.svg", "training_curve.svg", "model.npz"} <= names
    assert f"config_hash={cfg.config_hash()}" in (tmp_path / "metrics.csv").read_text()
    assert json.loads((tmp_path / "config.json").read_text())["seed"] == cfg.seed
    assert (tmp_path / "forecast.svg").read_text().startswith("<svg")
    emb = sorted(p.name for p in (tmp_path / "embeddings").iterdir())
    assert emb == [f"epoch{e:03d}_scale{s}.csv" for e in range(2) for s in (1, 2)]
    assert (tmp_path / "attention_scale1.csv").exists()


def test_eval_reproduces_training_metrics_and_rejects_other_configs(tmp_path):
    cfg = tiny_run_config()
    trained = run_train(cfg, tmp_path)
    evaluated = run_eval(cfg, tmp_path / "model.npz")
    for a, b in zip(trained.records, evaluated.records):
        assert a.metric == b.metric and a.value == pytest.approx(b.value, abs=1e-12)
    other = replace(cfg, model=tiny_model_config(heads=1))
    with pytest.raises(CheckpointMismatch):
        run_eval(other, tmp_path / "model.npz")


def test_transfer_to_same_dataset_equals_eval(tmp_path):
    cfg = tiny_run_config()
    run_train(cfg, tmp_path)
    ev = run_eval(cfg, tmp_path / "model.npz")
    tr = run_transfer(cfg, cfg, checkpoint=tmp_path / "model.npz")
    for a, b in zip(ev.records, tr.records):
        assert a.metric == b.metric
        assert abs(a.value - b.value) <= 1e-12
    assert tr.records[0].protocol == "zeroshot toy→toy"


def test_model_selection_rules():
    a, b = object(), object()
    models = {"hourly": a, "monthly": b}
    assert select_model(models, "hourly") is a
    assert select_model(models, "quarterly", mapping={"quarterly": "monthly"}) is b
    assert select_model(models, "yearly", fallback="monthly") is b
    with pytest.raises(ConfigError):
        select_model(models, "yearly")


def test_transfer_rejects_channel_mismatch():
    src = tiny_run_config()
    synth = SynthSpec(length=400, channels=3, seed=1, name="wide")
    with pytest.raises(ConfigError):
        run_transfer(src, replace(src, data=DataSource(synth=synth, frequency="hourly")))


def test_grid_sampling_is_deterministic_and_valid():
    base = RunConfig()
    a = grid_configs(base, 5)
    b = grid_configs(base, 5)
    assert [c.config_hash() for c in a] == [c.config_hash() for c in b]
    assert 0 < len(a) <= 5
    for c in a:
        assert c.model.scales.S == 3


def test_run_grid_writes_best_config(tmp_path):
    base = tiny_run_config(model=tiny_model_config(prototypes=replace(tiny_model_config().prototypes, vocab_size=4000)))
    best, rows = run_grid(base, 2, tmp_path)
    assert rows and best.config_hash() in {r["config_hash"] for r in rows}
    assert load_config(tmp_path / "best_config.json") == best
    assert (tmp_path / "grid.csv").read_text().startswith("index,config_hash,val_mse,config")
