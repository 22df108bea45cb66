"""Run workflows: standard / few-shot training, evaluation, zero-shot transfer, ablations and grid search."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import FEWSHOT_FRACTIONS, ConfigError, RunConfig, grid_configs
from .data import (
    TimeSeriesDataset,
    chronological_split,
    generate_synthetic,
    inject_mask,
    load_csv,
    subsample_fraction,
    window_arrays,
)
from .evaluation import MetricRecord, mse_mae, records_to_csv, short_term_metrics
from .model import MSHLLM, ModelConfig
from .plots import forecast_plot, training_curve, write_svg
from .training import SplitData, TrainResult, evaluate_mse, load_checkpoint, save_checkpoint, train

log = logging.getLogger(__name__)

ABLATIONS = (
    "-w/o C_l",
    "-w/o C_d",
    "-w/o C_c",
    "-w/o MoP",
    "-w/o HM",
    "-PM",
    "-w/o ME",
    "-LLM2Attn",
    "-w/o LLM",
    "-ASO",
    "R.1",
    "R.2",
)


class CheckpointMismatch(ConfigError):
    pass


def apply_variant(cfg: RunConfig, variant: str) -> RunConfig:
    """Apply exactly one structural switch; everything else is reused."""
    m = cfg.model
    if variant == "-w/o C_l":
        m = replace(m, use_learnable_prompts=False)
    elif variant == "-w/o C_d":
        m = replace(m, use_data_prompt=False)
    elif variant == "-w/o C_c":
        m = replace(m, use_capability_prompt=False)
    elif variant == "-w/o MoP":
        m = replace(m, use_learnable_prompts=False, use_data_prompt=False, use_capability_prompt=False)
    elif variant == "-w/o HM":
        m = replace(m, hyper_mode="none")
    elif variant == "-PM":
        m = replace(m, hyper_mode="patch")
    elif variant == "-w/o ME":
        m = replace(
            m,
            scales=replace(m.scales, S=1, windows=()),
            hyperedges=replace(m.hyperedges, counts=m.hyperedges.counts[:1]),
            prototypes=replace(m.prototypes, counts=m.prototypes.counts[:1]),
            prompt_lengths=m.prompt_lengths[:1],
        )
    elif variant == "-LLM2Attn":
        m = replace(m, backbone=replace(m.backbone, variant="attention_only"))
    elif variant == "-w/o LLM":
        m = replace(m, backbone=replace(m.backbone, variant="identity"))
    elif variant == "-ASO":
        return replace(cfg, train=replace(cfg.train, loss="aso_two_stage"))
    elif variant == "R.1":
        m = replace(m, prototypes=replace(m.prototypes, source="manual"))
    elif variant == "R.2":
        m = replace(m, prototypes=replace(m.prototypes, source="random"))
    else:
        raise ConfigError(f"unknown ablation variant {variant!r}; expected one of {ABLATIONS}")
    return replace(cfg, model=m)


def load_dataset(cfg: RunConfig) -> TimeSeriesDataset:
    src = cfg.data
    if src.synth is not None:
        ds = generate_synthetic(src.synth)
    else:
        ds = load_csv(src.csv, src.frequency, src.name)
    if src.name and ds.name != src.name:
        ds = TimeSeriesDataset(ds.values, ds.column_names, ds.frequency, src.name)
    return ds


def model_config_for(cfg: RunConfig, ds: TimeSeriesDataset) -> ModelConfig:
    """The configured model with channel count and prompt metadata taken from the data."""
    m = cfg.model
    try:
        return replace(
            m,
            channels=ds.D,
            backbone=replace(m.backbone, width=ds.D, heads=m.backbone.heads if ds.D % m.backbone.heads == 0 else 1),
            dataset_name=ds.name,
            frequency=ds.frequency,
        )
    except ValueError as exc:
        raise ConfigError(f"model config incompatible with {ds.name} (D={ds.D}): {exc}") from exc


@dataclass
class Prepared:
    dataset: TimeSeriesDataset
    train: TimeSeriesDataset
    val: TimeSeriesDataset
    test: TimeSeriesDataset
    model_cfg: ModelConfig


def prepare(cfg: RunConfig) -> Prepared:
    ds = load_dataset(cfg)
    tr, va, te = chronological_split(ds, cfg.split)
    m = model_config_for(cfg, ds)
    need = m.input_length + m.horizon
    frac = FEWSHOT_FRACTIONS[cfg.protocol]
    if frac < 1.0:
        tr = subsample_fraction(tr, frac, min_length=need)
    for part in (tr, va, te):
        if part.T < need:
            raise ConfigError(f"{part.name}: {part.T} rows, need at least T_in + H = {need}")
    return Prepared(ds, tr, va, te, m)


def split_data(model: MSHLLM, ds: TimeSeriesDataset, stride: int, mask_rate: float = 0.0, seed: int = 0) -> SplitData:
    x, y, _ = window_arrays(ds, model.cfg.input_length, model.cfg.horizon, stride)
    if mask_rate > 0:
        x, _ = inject_mask(x, mask_rate, np.random.default_rng(seed))
    return SplitData.build(model, x, y)


def evaluate_model(
    model: MSHLLM,
    split: SplitData,
    metrics,
    dataset: str,
    frequency: str,
    split_name: str = "test",
    protocol: str = "standard",
) -> tuple[list[MetricRecord], np.ndarray]:
    chunks = []
    for i in range(0, len(split), 256):
        x, _, emb = split.batch(slice(i, i + 256))
        chunks.append(model.forward(x, emb).forecast.data)
    preds = np.concatenate(chunks)
    values: dict[str, float] = {}
    if "mse" in metrics or "mae" in metrics:
        values["mse"], values["mae"] = mse_mae(preds, split.y)
    if {"smape", "mase", "owa"} & set(metrics):
        values.update(short_term_metrics(preds, split.y, split.x, frequency))
    H = model.cfg.horizon
    records = [MetricRecord(dataset, H, split_name, k, values[k], protocol) for k in metrics]
    return records, preds


def _header(cfg: RunConfig, extra: str = "") -> str:
    return f"config_hash={cfg.config_hash()}" + (f" {extra}" if extra else "")


@dataclass
class RunOutcome:
    model: MSHLLM
    records: list[MetricRecord]
    result: TrainResult | None = None
    files: dict[str, Path] = field(default_factory=dict)


def _embedding_exporter(out: Path):
    out.mkdir(parents=True, exist_ok=True)

    def hook(epoch: int, model: MSHLLM) -> None:
        for s in range(1, model.cfg.scales.S + 1):
            e = model.params[f"hyper{s}.e_hyper"].data
            np.savetxt(out / f"epoch{epoch:03d}_scale{s}.csv", e, delimiter=",", fmt="%.17g")

    return hook


def _write_attention(model: MSHLLM, split: SplitData, out: Path) -> None:
    weights = model.attention_weights(split.x[:1])
    for s, w in enumerate(weights, start=1):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["head", "hyperedge", "prototype", "weight"])
        _, J, M, V = w.shape
        for j in range(J):
            for i in range(M):
                for v in range(V):
                    wr.writerow([j, i, v, repr(float(w[0, j, i, v]))])
        (out / f"attention_scale{s}.csv").write_text(buf.getvalue(), encoding="utf-8")


def _write_outputs(cfg: RunConfig, out: Path, outcome: RunOutcome, split: SplitData, preds: np.ndarray, header: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    files = outcome.files
    files["config"] = out / "config.json"
    files["config"].write_text(cfg.to_json() + "\n", encoding="utf-8")
    files["metrics"] = out / "metrics.csv"
    files["metrics"].write_text(records_to_csv(outcome.records, header), encoding="utf-8")
    if len(split):
        files["forecast_plot"] = out / "forecast.svg"
        write_svg(forecast_plot(split.x[0], split.y[0], preds[0]), files["forecast_plot"])
    if outcome.result is not None:
        files["train_log"] = out / "train_log.csv"
        files["train_log"].write_text(outcome.result.log_csv(), encoding="utf-8")
        files["training_curve"] = out / "training_curve.svg"
        write_svg(training_curve(outcome.result.epochs), files["training_curve"])


def run_train(
    cfg: RunConfig,
    out_dir=None,
    export_embeddings: bool = False,
    dump_attention: bool = False,
    variant: str | None = None,
) -> RunOutcome:
    """Train on the (possibly few-shot) training split, select on validation, report on test."""
    prep = prepare(cfg)
    model = MSHLLM(prep.model_cfg)
    tr = split_data(model, prep.train, cfg.stride)
    va = split_data(model, prep.val, cfg.val_stride or cfg.eval_stride)
    te = split_data(model, prep.test, cfg.eval_stride, cfg.mask_rate, cfg.seed)
    hook = None
    out = Path(out_dir) if out_dir is not None else None
    if export_embeddings:
        if prep.model_cfg.hyper_mode != "hyperedge":
            raise ConfigError("--export-embeddings needs the hyperedging mechanism (hyper_mode 'hyperedge')")
        if out is None:
            raise ConfigError("--export-embeddings needs an output directory")
        hook = _embedding_exporter(out / "embeddings")
    result = train(model, tr, cfg.train, va, on_epoch_end=hook)
    records, preds = evaluate_model(model, te, cfg.metrics, prep.dataset.name, prep.dataset.frequency, "test", cfg.protocol)
    outcome = RunOutcome(model, records, result)
    if out is not None:
        extra = f"variant={variant}" if variant else ""
        _write_outputs(cfg, out, outcome, te, preds, _header(cfg, extra))
        outcome.files["checkpoint"] = out / "model.npz"
        save_checkpoint(model, outcome.files["checkpoint"], {"run_config_hash": cfg.config_hash()})
        if dump_attention:
            _write_attention(model, te, out)
    return outcome


def run_eval(cfg: RunConfig, checkpoint, out_dir=None) -> RunOutcome:
    """Evaluate a checkpoint on the test split; refuses checkpoints built from a different config."""
    prep = prepare(cfg)
    try:
        model, _ = load_checkpoint(checkpoint, expected_hash=prep.model_cfg.config_hash())
    except ValueError as exc:
        raise CheckpointMismatch(str(exc)) from exc
    te = split_data(model, prep.test, cfg.eval_stride, cfg.mask_rate, cfg.seed)
    records, preds = evaluate_model(model, te, cfg.metrics, prep.dataset.name, prep.dataset.frequency, "test", cfg.protocol)
    outcome = RunOutcome(model, records)
    if out_dir is not None:
        _write_outputs(cfg, Path(out_dir), outcome, te, preds, _header(cfg, "eval"))
    return outcome


def select_model(models: dict[str, MSHLLM], frequency: str, mapping: dict[str, str] | None = None, fallback: str | None = None) -> MSHLLM:
    """Same-frequency model first, then the explicit mapping, then the fallback frequency."""
    mapping = mapping or {}
    for key in (frequency, mapping.get(frequency), fallback):
        if key is not None and key in models:
            return models[key]
    raise ConfigError(f"no model for target frequency {frequency!r} and no usable fallback (have {sorted(models)})")


def zero_shot_eval(
    models: dict[str, MSHLLM],
    target: RunConfig,
    source_name: str,
    mapping: dict[str, str] | None = None,
    fallback: str | None = None,
) -> tuple[list[MetricRecord], MSHLLM, SplitData, np.ndarray]:
    """Evaluate a trained model on another dataset's test split without touching its parameters."""
    ds = load_dataset(target)
    _, _, te_ds = chronological_split(ds, target.split)
    model = select_model(models, ds.frequency, mapping, fallback)
    if ds.D != model.cfg.channels:
        raise ConfigError(f"target {ds.name} has {ds.D} channels, model expects {model.cfg.channels}")
    before = model.state_hash()
    te = split_data(model, te_ds, target.eval_stride, target.mask_rate, target.seed)
    tag = f"zeroshot {source_name}→{ds.name}"
    records, preds = evaluate_model(model, te, target.metrics, ds.name, ds.frequency, "test", tag)
    if model.state_hash() != before:
        raise RuntimeError("parameters changed during zero-shot evaluation")
    return records, model, te, preds


def run_transfer(cfg_a: RunConfig, cfg_b: RunConfig, out_dir=None, checkpoint=None, fallback: str | None = None) -> RunOutcome:
    """Train on A (or load A's checkpoint) and evaluate zero-shot on B."""
    if checkpoint is not None:
        prep = prepare(cfg_a)
        try:
            model, _ = load_checkpoint(checkpoint, expected_hash=prep.model_cfg.config_hash())
        except ValueError as exc:
            raise CheckpointMismatch(str(exc)) from exc
        source, result = prep.dataset, None
    else:
        trained = run_train(cfg_a)
        model, result = trained.model, trained.result
        source = load_dataset(cfg_a)
    records, model, te, preds = zero_shot_eval({source.frequency: model}, cfg_b, source.name, fallback=fallback)
    outcome = RunOutcome(model, records, result)
    if out_dir is not None:
        header = _header(cfg_b, f"source_config_hash={cfg_a.config_hash()}")
        _write_outputs(cfg_b, Path(out_dir), outcome, te, preds, header)
    return outcome


def run_ablate(cfg: RunConfig, variant: str, out_dir=None) -> RunOutcome:
    return run_train(apply_variant(cfg, variant), out_dir, variant=variant)


def run_grid(cfg: RunConfig, budget: int, out_dir=None) -> tuple[RunConfig, list[dict]]:
    """Train each sampled grid point; the best validation MSE wins."""
    rows = []
    best: tuple[float, RunConfig | None] = (float("inf"), None)
    candidates = grid_configs(cfg, budget, cfg.seed)
    if not candidates:
        raise ConfigError("grid produced no valid configurations")
    for i, c in enumerate(candidates):
        prep = prepare(c)
        model = MSHLLM(prep.model_cfg)
        tr = split_data(model, prep.train, c.stride)
        va = split_data(model, prep.val, c.val_stride or c.eval_stride)
        res = train(model, tr, c.train, va)
        val = res.best_val_mse if np.isfinite(res.best_val_mse) else evaluate_mse(model, va)[0]
        rows.append({"index": i, "config_hash": c.config_hash(), "val_mse": val, "config": json.dumps(c.to_dict(), sort_keys=True)})
        if val < best[0]:
            best = (val, c)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "config_hash", "val_mse", "config"])
        for r in rows:
            w.writerow([r["index"], r["config_hash"], repr(float(r["val_mse"])), r["config"]])
        (out / "grid.csv").write_text(buf.getvalue(), encoding="utf-8")
        (out / "best_config.json").write_text(best[1].to_json() + "\n", encoding="utf-8")
    return best[1], rows
