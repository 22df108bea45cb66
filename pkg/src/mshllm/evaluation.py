"""Forecast metrics, the Naive2 reference, metric records and report formatting."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

# M4 conventions used throughout; repeated in every report header
CONVENTIONS = (
    "smape=200*|f-y|/(|f|+|y|) with 0/0:=0; "
    "mase scale=mean |y_t - y_(t-m)| over the in-sample window; "
    "naive2=last value of the multiplicatively deseasonalised series, reseasonalised, "
    "seasonality by 90% acf test at lag m"
)

SEASONAL_PERIODS = {
    "hourly": 24,
    "daily": 7,
    "weekly": 1,
    "monthly": 12,
    "quarterly": 4,
    "yearly": 1,
    "15min": 1,
    "10min": 1,
    "other": 1,
}


class MetricError(ValueError):
    pass


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise MetricError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return pred, target


def mse_mae(pred, target) -> tuple[float, float]:
    pred, target = _pair(pred, target)
    err = pred - target
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def smape(pred, target) -> float:
    """Symmetric MAPE in [0, 200]; steps where both values are zero contribute 0."""
    pred, target = _pair(pred, target)
    num = np.abs(pred - target)
    den = np.abs(pred) + np.abs(target)
    ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(200.0 * np.mean(ratio))


def seasonal_scale(insample, m: int) -> np.ndarray:
    x = np.asarray(insample, dtype=np.float64)
    if x.shape[0] <= m:
        raise MetricError(f"in-sample length {x.shape[0]} must exceed seasonal period {m}")
    return np.mean(np.abs(x[m:] - x[:-m]), axis=0)


def mase(pred, target, insample, m: int = 1) -> float:
    """Mean absolute error scaled by the in-sample mean absolute lag-``m`` difference.

    Multichannel inputs (time on axis 0) are scaled per channel, then averaged.
    """
    pred, target = _pair(pred, target)
    scale = seasonal_scale(insample, m)
    if np.any(scale <= 0):
        raise MetricError("degenerate scale: in-sample series has no lag-m variation")
    mae = np.mean(np.abs(pred - target), axis=0)
    return float(np.mean(mae / scale))


def owa(smape_model: float, mase_model: float, smape_naive2: float, mase_naive2: float) -> float:
    if smape_naive2 <= 0 or mase_naive2 <= 0:
        raise MetricError("OWA reference values must be positive")
    return 0.5 * (smape_model / smape_naive2 + mase_model / mase_naive2)


def acf(x: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    xm = x - x.mean()
    den = float(xm @ xm)
    if den == 0:
        return np.zeros(max_lag + 1)
    return np.array([1.0] + [float(xm[k:] @ xm[:-k]) / den for k in range(1, max_lag + 1)])


def seasonality_test(x, m: int) -> bool:
    """90% significance of the lag-``m`` autocorrelation (M4 benchmark rule)."""
    x = np.asarray(x, dtype=np.float64)
    if m <= 1 or x.size < 3 * m:
        return False
    r = acf(x, m)
    limit = 1.645 * math.sqrt((1.0 + 2.0 * float(np.sum(r[1:m] ** 2))) / x.size)
    return abs(r[m]) > limit


def seasonal_indices(x, m: int) -> np.ndarray:
    """Classical multiplicative decomposition: phase means of ``x / centred MA``, normalised to mean 1."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if m % 2 == 0:
        kernel = np.r_[0.5, np.ones(m - 1), 0.5] / m
    else:
        kernel = np.ones(m) / m
    half = len(kernel) // 2
    trend = np.full(n, np.nan)
    trend[half : n - half] = np.convolve(x, kernel, mode="valid")
    ratio = x / trend
    idx = np.array([np.nanmean(ratio[p::m]) for p in range(m)])
    return idx * m / idx.sum()


def naive2(insample, m: int, H: int, test_seasonality: bool = True) -> np.ndarray:
    x = np.asarray(insample, dtype=np.float64)
    if x.ndim == 2:
        return np.stack([naive2(x[:, c], m, H, test_seasonality) for c in range(x.shape[1])], axis=1)
    if x.size < 1 or (m > 1 and x.size <= m):
        raise MetricError(f"insufficient history ({x.size}) for seasonal period {m}")
    # multiplicative adjustment is only defined for strictly positive series
    seasonal = m > 1 and bool(np.all(x > 0)) and (seasonality_test(x, m) if test_seasonality else x.size >= 2 * m)
    if not seasonal:
        return np.full(H, x[-1])
    si = seasonal_indices(x, m)
    n = x.size
    phases_in = np.arange(n) % m
    deseason = x / si[phases_in]
    phases_out = (n + np.arange(H)) % m
    return deseason[-1] * si[phases_out]


def period_for(frequency: str, n_insample: int | None = None) -> int:
    m = SEASONAL_PERIODS.get(frequency, 1)
    if n_insample is not None and n_insample <= m:
        return 1
    return m


@dataclass(frozen=True)
class MetricRecord:
    dataset: str
    horizon: int
    split: str
    metric: str
    value: float
    protocol: str = "standard"


def short_term_metrics(preds, targets, insamples, frequency: str, test_seasonality: bool = True) -> dict[str, float]:
    """Average SMAPE / MASE over windows, Naive2 references and OWA."""
    sm, ms, sm2, ms2 = [], [], [], []
    for f, y, x in zip(preds, targets, insamples):
        m = period_for(frequency, len(x))
        ref = naive2(x, m, len(y), test_seasonality)
        if np.ndim(y) == 2 and np.ndim(ref) == 1:
            ref = ref[:, None]
        sm.append(smape(f, y))
        sm2.append(smape(ref, y))
        ms.append(mase(f, y, x, m))
        ms2.append(mase(ref, y, x, m))
    out = {"smape": float(np.mean(sm)), "mase": float(np.mean(ms))}
    out["smape_naive2"], out["mase_naive2"] = float(np.mean(sm2)), float(np.mean(ms2))
    out["owa"] = owa(out["smape"], out["mase"], out["smape_naive2"], out["mase_naive2"])
    return out


def records_to_csv(records: list[MetricRecord], header: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# conventions: {CONVENTIONS}\n")
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "horizon", "split", "metric", "value", "protocol"])
    for r in records:
        w.writerow([r.dataset, r.horizon, r.split, r.metric, repr(float(r.value)), r.protocol])
    return buf.getvalue()


def pretty_table(records: list[MetricRecord]) -> str:
    rows = [("dataset", "H", "split", "protocol", "metric", "value")]
    rows += [(r.dataset, str(r.horizon), r.split, r.protocol, r.metric, f"{r.value:.6f}") for r in records]
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
