"""Mixture of prompts: learnable per-scale prompts plus data-correlated and
capability-enhancing text prompts embedded through a frozen hashed vocabulary.

Internal names for the text segments: ``description`` / ``task`` /
``statistics`` for the data prompt, ``logic`` / ``emotion`` / ``reasoning``
for the capability prompt.
"""
from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .multiscale import avgpool_pyramid
from .numerics import Parameter

TEMPLATE_VERSION = resources.files(__package__).joinpath("templates/VERSION").read_text().strip()
TASKS = {"long_forecast": "long-term", "short_forecast": "short-term"}
TOKEN_RE = re.compile(r"[-+]?\d+(?:\.\d+)?(?:e[-+]?\d+)?|[A-Za-z_]+|[^\sA-Za-z_\d]")
DEFAULT_VOCAB = 4096


def _template(name: str) -> str:
    return resources.files(__package__).joinpath(f"templates/{name}.v{TEMPLATE_VERSION}.txt").read_text().strip()


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    frequency: str = "other"
    channels: int = 1
    description: str | None = None

    def describe(self) -> str:
        if self.description:
            return self.description
        return f"{self.name} holds {self.channels} {self.frequency} channels"


@dataclass(frozen=True)
class TextPrompt:
    kind: str
    segments: tuple[tuple[str, str], ...]
    rendered: str


@dataclass
class TokenEmbedding:
    token_ids: list[int]
    embedded: np.ndarray


def fmt(value: float) -> str:
    return f"{float(value):.6g}"


def trend_label(series: np.ndarray) -> str:
    """Sign of the least-squares slope: ``up``, ``down`` or ``flat``."""
    y = np.asarray(series, dtype=np.float64)
    if y.size < 2:
        return "flat"
    t = np.arange(y.size, dtype=np.float64)
    t -= t.mean()
    slope = float(t @ (y - y.mean()) / (t @ t))
    tol = 1e-12 * (1.0 + float(np.max(np.abs(y))))
    if slope > tol:
        return "up"
    if slope < -tol:
        return "down"
    return "flat"


def series_statistics(series: np.ndarray) -> dict[str, str | float]:
    y = np.asarray(series, dtype=np.float64)
    return {"min": float(y.min()), "max": float(y.max()), "median": float(np.median(y)), "trend": trend_label(y)}


def _render_stats(label: str, series: np.ndarray) -> str:
    st = series_statistics(series)
    return f"{label}: min {fmt(st['min'])}, max {fmt(st['max'])}, median {fmt(st['median'])}, trend {st['trend']};"


def build_data_prompt(meta: DatasetMeta, window: np.ndarray, windows=(), horizon: int = 0, task: str = "long_forecast") -> TextPrompt:
    """Render description, task and per-scale statistics for one input window.

    Statistics are taken on the channel-averaged window and on each level of
    its average-pooled pyramid, so the text depends only on the raw values.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    window = np.asarray(window, dtype=np.float64)
    if window.ndim == 1:
        window = window[:, None]
    levels = avgpool_pyramid(window, windows)
    parts = [_render_stats("input", levels[0].mean(axis=-1))]
    parts += [_render_stats(f"scale {s}", lvl.mean(axis=-1)) for s, lvl in enumerate(levels[1:], start=2)]
    segments = (
        ("description", meta.describe()),
        ("task", f"Forecast {horizon} {TASKS[task]} steps from {window.shape[0]} {meta.frequency} steps."),
        ("statistics", " ".join(parts)),
    )
    rendered = _template("data_prompt").format(
        description=meta.describe(),
        horizon=horizon,
        input_length=window.shape[0],
        task_kind=TASKS[task],
        frequency=meta.frequency,
        statistics=" ".join(parts),
    )
    return TextPrompt("data_correlated", segments, rendered)


def build_capability_prompt(task: str = "long_forecast") -> TextPrompt:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    rendered = _template("capability_prompt").format(task_kind=TASKS[task])
    segments = tuple(
        (name, m.group(1).strip())
        for name in ("logic", "emotion", "reasoning")
        for m in [re.search(rf"<{name}>(.*?)</{name}>", rendered)]
    )
    return TextPrompt("capability", segments, rendered)


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in TOKEN_RE.findall(text)]


def hash_token(token: str, vocab_size: int = DEFAULT_VOCAB) -> int:
    return zlib.crc32(token.lower().encode("utf-8")) % vocab_size


def token_table(vocab_size: int, width: int, seed: int = 4321) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0, size=(vocab_size, width))


def tokenize_embed(prompt: TextPrompt | str, vocab_table: np.ndarray) -> TokenEmbedding:
    text = prompt.rendered if isinstance(prompt, TextPrompt) else prompt
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("cannot embed an empty prompt")
    ids = [hash_token(t, vocab_table.shape[0]) for t in tokens]
    return TokenEmbedding(ids, vocab_table[ids])


def init_learnable_prompts(lengths, D: int, rng: np.random.Generator) -> dict[str, Parameter]:
    return {
        f"prompt{s}": Parameter(rng.normal(0.0, 0.1, size=(L, D)), name=f"prompt{s}")
        for s, L in enumerate(lengths, start=1)
        if L > 0
    }
