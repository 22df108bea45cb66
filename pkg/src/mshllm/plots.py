"""Minimal SVG line plots (forecast vs truth, training curves) with no plotting dependency."""
from __future__ import annotations

from html import escape
from pathlib import Path

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def line_plot(
    series: dict[str, tuple],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 640,
    height: int = 360,
) -> str:
    """Render ``{label: (x, y)}`` as a standalone SVG document."""
    if not series:
        raise ValueError("nothing to plot")
    left, right, top, bottom = 60, 140, 30, 45
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    finite = np.isfinite(ys)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys[finite].min()), float(ys[finite].max())) if finite.any() else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.1f}" y="{top + ph + 15}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left}" x2="{left + pw}" y1="{sy(t):.1f}" y2="{sy(t):.1f}" stroke="#eee"/>')
        out.append(f'<text x="{left - 5}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:.4g}</text>')
    for i, (label, (x, y)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(
            f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(np.asarray(x, float), np.asarray(y, float)) if np.isfinite(b)
        )
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" x2="{left + pw + 30}" y1="{ly - 4}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def forecast_plot(history: np.ndarray, truth: np.ndarray, forecast: np.ndarray, channel: int = 0, title: str = "") -> str:
    T_in, H = len(history), len(truth)
    t_hist = np.arange(T_in)
    t_fut = np.arange(T_in, T_in + H)
    return line_plot(
        {
            "history": (t_hist, history[:, channel]),
            "truth": (t_fut, truth[:, channel]),
            "forecast": (t_fut, forecast[:, channel]),
        },
        title=title or f"forecast vs truth (channel {channel})",
        xlabel="step",
        ylabel="value",
    )


def training_curve(epochs: list[dict], title: str = "training curve") -> str:
    e = np.array([r["epoch"] for r in epochs], dtype=float)
    series = {"train loss": (e, np.array([r["train_loss"] for r in epochs]))}
    if any("val_mse" in r for r in epochs):
        series["val mse"] = (e, np.array([r.get("val_mse", np.nan) for r in epochs]))
    return line_plot(series, title=title, xlabel="epoch", ylabel="loss")


def write_svg(svg: str, path) -> None:
    Path(path).write_text(svg, encoding="utf-8")
