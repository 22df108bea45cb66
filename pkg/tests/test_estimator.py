from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone

from mshllm.data import SynthSpec, generate_synthetic
from mshllm.estimator import MSHForecaster, RevIN

from .conftest import tiny_model_config


def _series():
    return generate_synthetic(SynthSpec(length=200, channels=2, components=((12.0, 1.0),), noise_std=0.05, seed=2)).values


def _forecaster(**kw):
    params = dict(input_length=32, horizon=8, epochs=1, batch_size=16, stride=4, model_config=tiny_model_config())
    params.update(kw)
    return MSHForecaster(**params)


def test_params_and_clone():
    est = _forecaster(lr=5e-3)
    params = est.get_params()
    assert params["lr"] == 5e-3 and params["horizon"] == 8
    twin = clone(est)
    assert twin.get_params()["model_config"] == est.model_config
    est.set_params(heads=1)
    assert est.heads == 1


def test_fit_predict_on_raw_series():
    est = _forecaster(validation_fraction=0.25).fit(_series())
    x = _series()[-32:]
    assert est.predict(x).shape == (1, 8, 2)
    assert np.isfinite(est.train_result_.best_val_mse)


def test_fit_on_window_pairs_and_score(rng):
    X = rng.normal(size=(20, 32, 2))
    y = rng.normal(size=(20, 8, 2))
    est = _forecaster(hyper_mode="none").fit(X, y)
    assert est.predict(X).shape == (20, 8, 2)
    assert est.score(X, y) <= 0.0


def test_input_validation(rng):
    est = _forecaster()
    with pytest.raises(ValueError):
        est.fit(rng.normal(size=(10, 32, 2)), rng.normal(size=(10, 4, 2)))
    est.fit(_series())
    with pytest.raises(ValueError):
        est.predict(rng.normal(size=(3, 30, 2)))
    with pytest.raises(ValueError):
        est.predict(np.full((1, 32, 2), np.nan))


def test_revin_transformer_round_trip(rng):
    X = rng.normal(size=(5, 16, 3)) * 4.0 + 2.0
    X[:, :, 1] = 7.0
    tf = RevIN().fit(X)
    Z = tf.transform(X)
    np.testing.assert_allclose(Z.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_array_equal(Z[:, :, 1], 0.0)
    np.testing.assert_allclose(tf.inverse_transform(Z), X, atol=1e-12)
    with pytest.raises(ValueError):
        tf.transform(rng.normal(size=(2, 16, 4)))
