"""Scikit-learn style wrappers around the core model.

``X`` is a 3-D float array ``(n_samples, timesteps, n_features)`` holding the
per-step feature rows; for :class:`DeepDeffForecaster` the trailing
``derived_features`` columns of each row form the derived-statistics branch
and the rest the basic branch. ``samples_to_arrays`` packs the output of
:func:`deepdeff.features.build_samples` into exactly that layout.

The wrappers implement fit/predict/get_params and clone cleanly, so they
compose with model selection utilities from the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, InputError, ShapeError
from .features import Sample
from .model import TrainConfig, build_baseline, build_model, predict_batch, train
from .numerics import SeededRng, derive_seed


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Pack Samples into (X, y): basic columns first, derived columns last."""
    if not samples:
        raise InputError("no samples to pack")
    X = np.stack(
        [np.concatenate([s.basic_seq, s.derived_seq], axis=1) for s in samples]
    )
    y = np.array([s.target for s in samples], dtype=np.float64)
    return X, y


def check_sequence_array(X, name: str = "X") -> np.ndarray:
    """Validate a (n_samples, timesteps, n_features) feature array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ShapeError(
            f"{name} must be 3-D (n_samples, timesteps, n_features), got shape {X.shape}"
        )
    if X.shape[0] == 0:
        raise InputError(f"{name} contains no samples")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite values")
    return X


def check_targets(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != n_samples:
        raise ShapeError(f"y has {len(y)} entries for {n_samples} samples")
    if not np.all(np.isfinite(y)):
        raise InputError("y contains non-finite values")
    return y


def _rows_to_samples(basic, derived, y):
    n, k, _ = basic.shape
    return [
        Sample(
            basic_seq=basic[i],
            derived_seq=derived[i] if derived is not None else np.zeros((k, 0)),
            target=float(y[i]),
            target_slot=0,
            target_timestamp=np.datetime64("1970-01-01T00:00", "m"),
            target_index=i,
        )
        for i in range(n)
    ]


class _SequenceForecaster(BaseEstimator, RegressorMixin):
    """Shared fit/predict machinery; subclasses choose the architecture."""

    _kind = None  # "deepdeff" | "basic"

    def _split_branches(self, X):
        raise NotImplementedError

    def _build(self, timesteps, f_basic, rng):
        raise NotImplementedError

    def fit(self, X, y, eval_set=None):
        """Train on (X, y); ``eval_set=(X_val, y_val)`` selects the best
        epoch. Without it the time-ordered tail of ``val_fraction`` is held
        out, so pass rows in chronological order."""
        X = check_sequence_array(X)
        y = check_targets(y, X.shape[0])
        basic, derived = self._split_branches(X)

        if eval_set is not None:
            X_val = check_sequence_array(eval_set[0], "eval_set[0]")
            y_val = check_targets(eval_set[1], X_val.shape[0])
            if X_val.shape[1:] != X.shape[1:]:
                raise ShapeError(
                    f"eval_set rows {X_val.shape[1:]} do not match X rows {X.shape[1:]}"
                )
            vb, vd = self._split_branches(X_val)
            train_samples = _rows_to_samples(basic, derived, y)
            val_samples = _rows_to_samples(vb, vd, y_val)
        else:
            n_val = max(1, int(round(self.val_fraction * X.shape[0])))
            if n_val >= X.shape[0]:
                raise InputError(
                    f"val_fraction={self.val_fraction} leaves no training rows "
                    f"out of {X.shape[0]}"
                )
            cut = X.shape[0] - n_val
            samples = _rows_to_samples(basic, derived, y)
            train_samples, val_samples = samples[:cut], samples[cut:]

        rng = SeededRng(self.seed)
        model = self._build(X.shape[1], basic.shape[2], rng)
        config = TrainConfig(
            lr=self.lr,
            dropout=self.dropout,
            epochs=self.epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            loss=self.loss,
            seed=derive_seed(self.seed, "train"),
        )
        _, report = train(model, train_samples, val_samples, config)
        self.model_ = model
        self.report_ = report
        self.n_features_in_ = X.shape[2]
        self.timesteps_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet"
            )
        X = check_sequence_array(X)
        if X.shape[1] != self.timesteps_ or X.shape[2] != self.n_features_in_:
            raise ShapeError(
                f"X rows {X.shape[1:]} do not match fitted shape "
                f"({self.timesteps_}, {self.n_features_in_})"
            )
        basic, derived = self._split_branches(X)
        return predict_batch(
            self.model_, _rows_to_samples(basic, derived, np.zeros(X.shape[0]))
        )


class DeepDeffForecaster(_SequenceForecaster):
    """Dual-branch forecaster: basic features plus derived statistics."""

    _kind = "deepdeff"

    def __init__(
        self,
        cell="gru",
        bidirectional=True,
        hidden_size=20,
        dense_size=20,
        derived_features=4,
        lr=0.01,
        dropout=0.2,
        epochs=200,
        batch_size=32,
        patience=20,
        loss="mape",
        val_fraction=0.2,
        seed=0,
    ):
        self.cell = cell
        self.bidirectional = bidirectional
        self.hidden_size = hidden_size
        self.dense_size = dense_size
        self.derived_features = derived_features
        self.lr = lr
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.loss = loss
        self.val_fraction = val_fraction
        self.seed = seed

    def _split_branches(self, X):
        if self.derived_features < 1:
            raise ConfigError("derived_features must be >= 1 for the dual-branch model")
        if X.shape[2] <= self.derived_features:
            raise ShapeError(
                f"X has {X.shape[2]} feature columns, need more than "
                f"derived_features={self.derived_features}"
            )
        split = X.shape[2] - self.derived_features
        return X[:, :, :split], X[:, :, split:]

    def _build(self, timesteps, f_basic, rng):
        return build_model(
            self.cell,
            self.bidirectional,
            timesteps,
            f_basic,
            f_derived=self.derived_features,
            hidden_size=self.hidden_size,
            dense_size=self.dense_size,
            rng=rng.spawn("init"),
        )


class BaselineForecaster(_SequenceForecaster):
    """Two stacked recurrent layers over the full feature rows, MAE loss."""

    _kind = "basic"

    def __init__(
        self,
        cell="lstm",
        bidirectional=False,
        hidden_size=20,
        dense_size=20,
        lr=0.01,
        dropout=0.2,
        epochs=200,
        batch_size=32,
        patience=20,
        loss="mae",
        val_fraction=0.2,
        seed=0,
    ):
        self.cell = cell
        self.bidirectional = bidirectional
        self.hidden_size = hidden_size
        self.dense_size = dense_size
        self.lr = lr
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.loss = loss
        self.val_fraction = val_fraction
        self.seed = seed

    def _split_branches(self, X):
        return X, None

    def _build(self, timesteps, f_basic, rng):
        return build_baseline(
            self.cell,
            self.bidirectional,
            timesteps,
            f_basic,
            hidden_size=self.hidden_size,
            dense_size=self.dense_size,
            rng=rng.spawn("init"),
        )
