import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import KFold, cross_val_score

from deepdeff.errors import InputError, ShapeError
from deepdeff.estimators import (
    BaselineForecaster,
    DeepDeffForecaster,
    check_sequence_array,
    samples_to_arrays,
)
from deepdeff.features import build_samples
from deepdeff.numerics import SeededRng
from helpers import make_series


def toy_xy(n=60, k=3, f=9, seed=0):
    rng = SeededRng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, k, f))
    y = 2.0 + 0.8 * X.mean(axis=(1, 2))
    return X, y


FAST = dict(hidden_size=6, epochs=12, batch_size=16, patience=None, seed=7)


class TestValidation:
    def test_rejects_2d_input(self):
        with pytest.raises(ShapeError):
            check_sequence_array(np.zeros((5, 3)))

    def test_rejects_nan(self):
        X = np.zeros((2, 3, 4))
        X[0, 0, 0] = np.nan
        with pytest.raises(InputError):
            check_sequence_array(X)

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            check_sequence_array(np.zeros((0, 3, 4)))

    def test_y_length_mismatch(self):
        X, y = toy_xy(10)
        with pytest.raises(ShapeError):
            DeepDeffForecaster(**FAST).fit(X, y[:-1])


class TestSamplesToArrays:
    def test_layout_matches_branches(self):
        series = make_series(300, interval=60)
        samples = build_samples(series, 2)
        X, y = samples_to_arrays(samples)
        assert X.shape == (len(samples), 2, 33 + 4)
        assert np.array_equal(X[0, :, :33], samples[0].basic_seq)
        assert np.array_equal(X[0, :, 33:], samples[0].derived_seq)
        assert y[0] == samples[0].target


class TestFitPredict:
    def test_fit_predict_shapes(self):
        X, y = toy_xy()
        est = DeepDeffForecaster(**FAST).fit(X, y)
        preds = est.predict(X)
        assert preds.shape == (len(y),)
        assert est.n_features_in_ == X.shape[2]
        assert est.timesteps_ == X.shape[1]

    def test_explicit_eval_set(self):
        X, y = toy_xy()
        est = DeepDeffForecaster(**FAST).fit(X[:45], y[:45], eval_set=(X[45:], y[45:]))
        assert est.report_.epochs_run > 0

    def test_learns_toy_relation(self):
        X, y = toy_xy(n=80, seed=3)
        est = DeepDeffForecaster(
            cell="gru", bidirectional=False, hidden_size=8, epochs=120,
            dropout=0.0, batch_size=16, patience=None, seed=5,
        ).fit(X, y)
        preds = est.predict(X)
        assert np.mean(np.abs((y - preds) / y)) < 0.05

    def test_seed_reproducibility(self):
        X, y = toy_xy()
        a = DeepDeffForecaster(**FAST).fit(X, y).predict(X)
        b = DeepDeffForecaster(**FAST).fit(X, y).predict(X)
        assert np.array_equal(a, b)

    def test_predict_before_fit(self):
        X, _ = toy_xy(5)
        with pytest.raises(NotFittedError):
            DeepDeffForecaster().predict(X)

    def test_predict_shape_mismatch(self):
        X, y = toy_xy()
        est = DeepDeffForecaster(**FAST).fit(X, y)
        with pytest.raises(ShapeError):
            est.predict(X[:, :2, :])

    def test_baseline_fit_predict(self):
        X, y = toy_xy(f=5)
        est = BaselineForecaster(cell="rnn", **FAST).fit(X, y)
        assert est.predict(X).shape == (len(y),)
        assert est.loss == "mae"

    def test_derived_wider_than_features_rejected(self):
        X, y = toy_xy(f=4)
        with pytest.raises(ShapeError):
            DeepDeffForecaster(derived_features=4, **FAST).fit(X, y)


class TestSklearnProtocol:
    def test_get_params_round_trip(self):
        est = DeepDeffForecaster(cell="lstm", hidden_size=11, seed=42)
        params = est.get_params()
        assert params["cell"] == "lstm" and params["hidden_size"] == 11
        est2 = DeepDeffForecaster(**params)
        assert est2.get_params() == params

    def test_clone_trains_identically(self):
        X, y = toy_xy()
        a = DeepDeffForecaster(**FAST)
        b = clone(a)
        assert np.array_equal(a.fit(X, y).predict(X), b.fit(X, y).predict(X))

    def test_set_params(self):
        est = DeepDeffForecaster().set_params(cell="rnn", epochs=3)
        assert est.cell == "rnn" and est.epochs == 3

    def test_cross_val_score_smoke(self):
        X, y = toy_xy(n=36)
        est = DeepDeffForecaster(hidden_size=4, epochs=3, batch_size=12,
                                 patience=None, seed=1)
        scores = cross_val_score(est, X, y, cv=KFold(n_splits=3))
        assert scores.shape == (3,)
        assert np.all(np.isfinite(scores))
