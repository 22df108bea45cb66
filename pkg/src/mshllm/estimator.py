"""scikit-learn style wrappers around the forecaster and RevIN."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import TimeSeriesDataset, revin_denormalize, revin_normalize, window_arrays
from .model import MSHLLM, ModelConfig
from .training import SplitData, TrainConfig, train


def _as_windows(X, T_in: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"expected windows of shape (n, T_in, D) or (T_in, D), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains NaN or infinite values")
    if T_in is not None and X.shape[1] != T_in:
        raise ValueError(f"expected windows of length {T_in}, got {X.shape[1]}")
    return X


class RevIN(TransformerMixin, BaseEstimator):
    """Per-window instance normalisation; ``inverse_transform`` uses the statistics of the last ``transform``."""

    def __init__(self, eps: float = 1e-8):
        self.eps = eps

    def fit(self, X, y=None):
        X = _as_windows(X)
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _as_windows(X)
        if X.shape[-1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[-1]} channels, RevIN was fitted with {self.n_features_in_}")
        Z, self.state_ = revin_normalize(X, self.eps)
        return Z

    def inverse_transform(self, Z):
        check_is_fitted(self, "state_")
        return revin_denormalize(np.asarray(Z, dtype=np.float64), self.state_)


class MSHForecaster(BaseEstimator):
    """Fit on a ``(T, D)`` series (windowed internally) or on ``(windows, targets)`` pairs.

    ``predict`` maps ``(n, input_length, D)`` windows to ``(n, horizon, D)`` forecasts.
    """

    def __init__(
        self,
        input_length: int = 256,
        horizon: int = 48,
        hyper_mode: str = "hyperedge",
        heads: int = 2,
        lr: float = 1e-3,
        batch_size: int = 32,
        epochs: int = 10,
        stride: int = 1,
        validation_fraction: float = 0.0,
        random_state: int = 0,
        model_config: ModelConfig | None = None,
    ):
        self.input_length = input_length
        self.horizon = horizon
        self.hyper_mode = hyper_mode
        self.heads = heads
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.stride = stride
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.model_config = model_config

    def _build_config(self, D: int) -> ModelConfig:
        base = self.model_config or ModelConfig()
        return replace(
            base,
            input_length=self.input_length,
            horizon=self.horizon,
            channels=D,
            heads=self.heads,
            hyper_mode=self.hyper_mode,
            backbone=replace(base.backbone, width=D, heads=1),
            seed=self.random_state,
        )

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if y is None:
            if X.ndim == 1:
                X = X[:, None]
            if X.ndim != 2:
                raise ValueError(f"a raw series must be (T, D), got {X.shape}")
            ds = TimeSeriesDataset(X, tuple(f"ch{j}" for j in range(X.shape[1])))
            X, y, _ = window_arrays(ds, self.input_length, self.horizon, self.stride)
        else:
            X = _as_windows(X, self.input_length)
            y = np.asarray(y, dtype=np.float64)
            if y.shape != (X.shape[0], self.horizon, X.shape[2]):
                raise ValueError(f"targets must have shape {(X.shape[0], self.horizon, X.shape[2])}, got {y.shape}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        self.model_ = MSHLLM(self._build_config(X.shape[2]))
        n_val = int(len(X) * self.validation_fraction)
        n_tr = len(X) - n_val
        if n_tr < 1:
            raise ValueError("no training windows left after the validation hold-out")
        tr = SplitData.build(self.model_, X[:n_tr], y[:n_tr])
        va = SplitData.build(self.model_, X[n_tr:], y[n_tr:]) if n_val else None
        cfg = TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, seed=self.random_state)
        self.train_result_ = train(self.model_, tr, cfg, va)
        self.n_features_in_ = X.shape[2]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = _as_windows(X, self.input_length)
        if X.shape[2] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[2]} channels, model was fitted with {self.n_features_in_}")
        return self.model_.predict(X)

    def score(self, X, y) -> float:
        """Negative mean squared error (higher is better)."""
        pred = self.predict(X)
        return -float(np.mean((pred - np.asarray(y, dtype=np.float64)) ** 2))
