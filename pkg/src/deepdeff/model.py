"""The dual-branch forecasting network and its training loop.

Two recurrent branches (one over the basic feature sequence, one over the
derived statistics) run in parallel; their final states are concatenated,
passed through a ReLU dense layer, and read out by a linear head predicting
the next-interval load. The companion baseline stacks two recurrent layers
over the basic sequence alone and trains on MAE instead of MAPE.

Training is mini-batch Adam with per-epoch validation; the weights from the
best validation epoch are restored at the end.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from . import cells
from .cells import (
    backprop_sequence,
    bidirectional_backward,
    bidirectional_forward,
    dropout_mask,
    forward_sequence,
    init_cell_params,
)
from .errors import ConfigError, FormatError, InputError, ShapeError, TrainingError
from .numerics import AdamState, SeededRng, adam_step, glorot_uniform

N_DERIVED = 4
METHODS = {
    "RNN": ("rnn", False),
    "BRNN": ("rnn", True),
    "GRU": ("gru", False),
    "BGRU": ("gru", True),
    "LSTM": ("lstm", False),
    "BLSTM": ("lstm", True),
}


@dataclass
class BranchParams:
    forward: object            # cell params
    reverse: object | None     # present when bidirectional


@dataclass
class DeepDeffModel:
    kind: str                  # "deepdeff" | "basic"
    cell_type: str
    bidirectional: bool
    timesteps: int
    f_basic: int
    f_derived: int
    hidden_size: int
    dense_size: int
    branches: dict
    dense_w: np.ndarray
    dense_b: np.ndarray
    head_w: np.ndarray         # (D, 1)
    head_b: np.ndarray         # (1,)

    @property
    def branch_width(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)

    def branch_order(self) -> tuple:
        return ("basic", "derived") if self.kind == "deepdeff" else ("layer1", "layer2")


@dataclass
class TrainConfig:
    lr: float = 0.01
    dropout: float = 0.2
    epochs: int = 200
    batch_size: int = 32
    patience: int | None = 20
    loss: str = "mape"
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.loss not in ("mape", "mae"):
            raise ConfigError(f"loss must be 'mape' or 'mae', got {self.loss!r}")


@dataclass
class TrainReport:
    train_losses: list = field(default_factory=list)
    val_mapes: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_mape: float = float("inf")
    test_mape: float | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_losses)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _make_branch(cell_type, bidirectional, n_inputs, hidden, rng) -> BranchParams:
    fwd = init_cell_params(cell_type, n_inputs, hidden, rng.spawn("fwd"))
    rev = init_cell_params(cell_type, n_inputs, hidden, rng.spawn("rev")) if bidirectional else None
    return BranchParams(forward=fwd, reverse=rev)


def build_model(
    cell_type: str,
    bidirectional: bool,
    timesteps: int,
    f_basic: int,
    f_derived: int = N_DERIVED,
    hidden_size: int = 20,
    dense_size: int = 20,
    rng: SeededRng | None = None,
) -> DeepDeffModel:
    """Dual-branch model: basic and derived sequences, merged by concatenation."""
    rng = rng or SeededRng(0)
    width = hidden_size * (2 if bidirectional else 1)
    merge = 2 * width
    return DeepDeffModel(
        kind="deepdeff",
        cell_type=cell_type,
        bidirectional=bidirectional,
        timesteps=timesteps,
        f_basic=f_basic,
        f_derived=f_derived,
        hidden_size=hidden_size,
        dense_size=dense_size,
        branches={
            "basic": _make_branch(cell_type, bidirectional, f_basic, hidden_size, rng.spawn("basic")),
            "derived": _make_branch(cell_type, bidirectional, f_derived, hidden_size, rng.spawn("derived")),
        },
        dense_w=glorot_uniform(merge, dense_size, rng.spawn("dense")),
        dense_b=np.zeros(dense_size),
        head_w=glorot_uniform(dense_size, 1, rng.spawn("head")),
        head_b=np.zeros(1),
    )


def build_baseline(
    cell_type: str,
    bidirectional: bool,
    timesteps: int,
    f_basic: int,
    hidden_size: int = 20,
    dense_size: int = 20,
    rng: SeededRng | None = None,
) -> DeepDeffModel:
    """Two stacked recurrent layers over the basic sequence only."""
    rng = rng or SeededRng(0)
    width = hidden_size * (2 if bidirectional else 1)
    return DeepDeffModel(
        kind="basic",
        cell_type=cell_type,
        bidirectional=bidirectional,
        timesteps=timesteps,
        f_basic=f_basic,
        f_derived=0,
        hidden_size=hidden_size,
        dense_size=dense_size,
        branches={
            "layer1": _make_branch(cell_type, bidirectional, f_basic, hidden_size, rng.spawn("layer1")),
            "layer2": _make_branch(cell_type, bidirectional, width, hidden_size, rng.spawn("layer2")),
        },
        dense_w=glorot_uniform(width, dense_size, rng.spawn("dense")),
        dense_b=np.zeros(dense_size),
        head_w=glorot_uniform(dense_size, 1, rng.spawn("head")),
        head_b=np.zeros(1),
    )


def build_method(method: str, kind: str, timesteps: int, f_basic: int, **kwargs) -> DeepDeffModel:
    """Construct by table name ('BGRU', 'LSTM', ...) and model kind."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    cell_type, bidirectional = METHODS[method]
    builder = build_model if kind == "deepdeff" else build_baseline
    if kind not in ("deepdeff", "basic"):
        raise ConfigError(f"model kind must be 'deepdeff' or 'basic', got {kind!r}")
    return builder(cell_type, bidirectional, timesteps, f_basic, **kwargs)


# ---------------------------------------------------------------------------
# Parameter access
# ---------------------------------------------------------------------------

def named_parameters(model: DeepDeffModel) -> list[tuple[str, np.ndarray]]:
    """Stable (path, array) listing used by the optimizer and weights files."""
    out = []
    for bname in model.branch_order():
        branch = model.branches[bname]
        sides = [("forward", branch.forward)]
        if branch.reverse is not None:
            sides.append(("reverse", branch.reverse))
        for side, params in sides:
            for pname, arr in cells.named_arrays(params):
                out.append((f"branches.{bname}.{side}.{pname}", arr))
    out.append(("dense_w", model.dense_w))
    out.append(("dense_b", model.dense_b))
    out.append(("head_w", model.head_w))
    out.append(("head_b", model.head_b))
    return out


def snapshot_parameters(model) -> dict:
    return {name: arr.copy() for name, arr in named_parameters(model)}


def restore_parameters(model, snapshot: dict) -> None:
    for name, arr in named_parameters(model):
        arr[...] = snapshot[name]


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _branch_forward(branch: BranchParams, seq):
    if branch.reverse is not None:
        return bidirectional_forward(branch.forward, branch.reverse, seq)
    return forward_sequence(branch.forward, seq)


def _branch_backward(branch, tapes, d_state, d_state_seq=None):
    if branch.reverse is not None:
        g_fwd, g_rev, dx = bidirectional_backward(
            branch.forward, branch.reverse, tapes, d_state, d_state_seq
        )
        return {"forward": g_fwd, "reverse": g_rev}, dx
    grads, dx = backprop_sequence(branch.forward, tapes, d_state, d_state_seq)
    return {"forward": grads}, dx


def _branch_step_outputs(branch, tapes):
    """Per-step branch output (K, B, width) in original time order."""
    if branch.reverse is not None:
        tape_fwd, tape_rev = tapes
        return np.concatenate(
            [tape_fwd.hidden_sequence(), tape_rev.hidden_sequence()], axis=-1
        )
    return tapes.hidden_sequence()


@dataclass
class _Cache:
    tapes: dict
    masks: dict
    merged: np.ndarray
    dense_pre: np.ndarray
    dense_out: np.ndarray


def _forward_batch(model, basic, derived, training=False, rng=None, dropout_rate=0.0):
    """Predictions for a batch. ``basic``: (B, K, f_basic); ``derived``:
    (B, K, f_derived) or None for the baseline kind."""
    if training and dropout_rate > 0.0 and rng is None:
        raise ConfigError("training with dropout requires an rng")
    seq_basic = np.ascontiguousarray(np.swapaxes(basic, 0, 1))  # (K, B, f)
    tapes: dict = {}
    masks: dict = {}

    if model.kind == "deepdeff":
        seq_derived = np.ascontiguousarray(np.swapaxes(derived, 0, 1))
        out_b, tapes["basic"] = _branch_forward(model.branches["basic"], seq_basic)
        out_d, tapes["derived"] = _branch_forward(model.branches["derived"], seq_derived)
        if training and dropout_rate > 0.0:
            masks["basic"] = dropout_mask(out_b.shape, dropout_rate, rng)
            masks["derived"] = dropout_mask(out_d.shape, dropout_rate, rng)
            out_b = out_b * masks["basic"]
            out_d = out_d * masks["derived"]
        merged = np.concatenate([out_b, out_d], axis=-1)
    else:
        _, tapes["layer1"] = _branch_forward(model.branches["layer1"], seq_basic)
        seq_mid = _branch_step_outputs(model.branches["layer1"], tapes["layer1"])
        out, tapes["layer2"] = _branch_forward(model.branches["layer2"], seq_mid)
        if training and dropout_rate > 0.0:
            masks["layer2"] = dropout_mask(out.shape, dropout_rate, rng)
            out = out * masks["layer2"]
        merged = out

    dense_pre = merged @ model.dense_w + model.dense_b
    dense_out = np.maximum(dense_pre, 0.0)
    preds = (dense_out @ model.head_w)[:, 0] + model.head_b[0]
    return preds, _Cache(tapes, masks, merged, dense_pre, dense_out)


def _backward_batch(model, cache: _Cache, d_preds) -> dict:
    """Parameter gradients (same keys as named_parameters) summed over the batch."""
    grads: dict[str, np.ndarray] = {}
    d_preds = np.asarray(d_preds, dtype=np.float64)

    grads["head_w"] = cache.dense_out.T @ d_preds[:, None]
    grads["head_b"] = np.array([d_preds.sum()])
    d_dense_out = d_preds[:, None] @ model.head_w.T
    d_dense_pre = d_dense_out * (cache.dense_pre > 0.0)
    grads["dense_w"] = cache.merged.T @ d_dense_pre
    grads["dense_b"] = d_dense_pre.sum(axis=0)
    d_merged = d_dense_pre @ model.dense_w.T

    def collect(bname, cell_grads):
        for side, g in cell_grads.items():
            for pname, arr in cells.named_arrays(g):
                grads[f"branches.{bname}.{side}.{pname}"] = arr

    if model.kind == "deepdeff":
        width = model.branch_width
        d_out_b, d_out_d = d_merged[:, :width], d_merged[:, width:]
        if cache.masks:
            d_out_b = d_out_b * cache.masks["basic"]
            d_out_d = d_out_d * cache.masks["derived"]
        g_basic, _ = _branch_backward(model.branches["basic"], cache.tapes["basic"], d_out_b)
        g_derived, _ = _branch_backward(model.branches["derived"], cache.tapes["derived"], d_out_d)
        collect("basic", g_basic)
        collect("derived", g_derived)
    else:
        d_out = d_merged
        if cache.masks:
            d_out = d_out * cache.masks["layer2"]
        g2, d_mid = _branch_backward(model.branches["layer2"], cache.tapes["layer2"], d_out)
        zeros_last = np.zeros((d_mid.shape[1], model.branch_width))
        g1, _ = _branch_backward(
            model.branches["layer1"], cache.tapes["layer1"], zeros_last, d_state_seq=d_mid
        )
        collect("layer2", g2)
        collect("layer1", g1)
    return grads


def _check_sample_shapes(model, sample):
    if sample.basic_seq.shape != (model.timesteps, model.f_basic):
        raise ShapeError(
            f"sample basic_seq {sample.basic_seq.shape} does not match model "
            f"({model.timesteps}, {model.f_basic})"
        )
    if model.kind == "deepdeff" and sample.derived_seq.shape != (model.timesteps, model.f_derived):
        raise ShapeError(
            f"sample derived_seq {sample.derived_seq.shape} does not match model "
            f"({model.timesteps}, {model.f_derived})"
        )


def forward(model, sample, training: bool = False, rng=None, dropout_rate: float = 0.2):
    """Predict one sample's next-interval load."""
    _check_sample_shapes(model, sample)
    basic = sample.basic_seq[None, :, :]
    derived = sample.derived_seq[None, :, :] if model.kind == "deepdeff" else None
    preds, _ = _forward_batch(
        model, basic, derived, training=training, rng=rng, dropout_rate=dropout_rate
    )
    return float(preds[0])


def _stack_samples(model, samples):
    basic = np.stack([s.basic_seq for s in samples])
    derived = (
        np.stack([s.derived_seq for s in samples]) if model.kind == "deepdeff" else None
    )
    targets = np.array([s.target for s in samples], dtype=np.float64)
    return basic, derived, targets


def predict_batch(model, samples) -> np.ndarray:
    if not samples:
        raise InputError("no samples to predict")
    for sample in samples:
        _check_sample_shapes(model, sample)
    basic, derived, _ = _stack_samples(model, samples)
    preds, _ = _forward_batch(model, basic, derived, training=False)
    return preds


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def mape(predictions, actuals) -> float:
    """Mean absolute percentage error, 100/N * sum(|(a - p)/a|)."""
    p = np.asarray(predictions, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    if p.shape != a.shape:
        raise ShapeError(f"length mismatch: predictions {p.shape} vs actuals {a.shape}")
    if p.size == 0:
        raise InputError("mape needs at least one point")
    if np.any(a == 0.0):
        raise ZeroDivisionError("mape undefined: actuals contain zero")
    return float(100.0 * np.mean(np.abs((a - p) / a)))


def mae(predictions, actuals) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    if p.shape != a.shape:
        raise ShapeError(f"length mismatch: predictions {p.shape} vs actuals {a.shape}")
    if p.size == 0:
        raise InputError("mae needs at least one point")
    return float(np.mean(np.abs(a - p)))


def _loss_and_grad(preds, targets, loss: str):
    n = len(targets)
    if loss == "mape":
        if np.any(targets == 0.0):
            raise ZeroDivisionError("mape loss undefined: targets contain zero")
        value = 100.0 * np.mean(np.abs((targets - preds) / targets))
        grad = 100.0 / n * np.sign(preds - targets) / np.abs(targets)
    else:
        value = np.mean(np.abs(targets - preds))
        grad = np.sign(preds - targets) / n
    return float(value), grad


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

def evaluate(model, samples) -> float:
    """Test MAPE with dropout off."""
    if not samples:
        raise InputError("cannot evaluate on an empty sample set")
    _, _, targets = _stack_samples(model, samples)
    return mape(predict_batch(model, samples), targets)


def train(model, train_samples, val_samples, config: TrainConfig):
    """Mini-batch Adam on the configured loss; keeps the best-validation
    weights. Returns ``(model, TrainReport)``; the model is updated in place.
    """
    if not train_samples or not val_samples:
        raise InputError("train and validation sets must be nonempty")
    for sample in list(train_samples) + list(val_samples):
        _check_sample_shapes(model, sample)

    report = TrainReport()
    if config.epochs == 0:
        return model, report

    rng = SeededRng(config.seed)
    shuffle_rng = rng.spawn("shuffle")
    dropout_rng = rng.spawn("dropout")

    basic, derived, targets = _stack_samples(model, train_samples)
    n = len(train_samples)
    params = named_parameters(model)
    adam = {name: AdamState(arr.shape, lr=config.lr) for name, arr in params}
    best_snapshot = snapshot_parameters(model)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            preds, cache = _forward_batch(
                model,
                basic[idx],
                None if derived is None else derived[idx],
                training=True,
                rng=dropout_rng,
                dropout_rate=config.dropout,
            )
            loss, d_preds = _loss_and_grad(preds, targets[idx], config.loss)
            epoch_loss += loss * len(idx)
            grads = _backward_batch(model, cache, d_preds)
            for name, arr in params:
                arr[...] = adam_step(arr, grads[name], adam[name])

        train_loss = epoch_loss / n
        if not np.isfinite(train_loss):
            raise TrainingError(f"training diverged at epoch {epoch}: loss={train_loss}", epoch)
        val_mape = evaluate(model, val_samples)
        if not np.isfinite(val_mape):
            raise TrainingError(f"training diverged at epoch {epoch}: val={val_mape}", epoch)
        report.train_losses.append(train_loss)
        report.val_mapes.append(val_mape)

        if val_mape < report.best_val_mape:
            report.best_val_mape = val_mape
            report.best_epoch = epoch
            best_snapshot = snapshot_parameters(model)
        elif config.patience is not None and epoch - report.best_epoch >= config.patience:
            break

    restore_parameters(model, best_snapshot)
    return model, report


# ---------------------------------------------------------------------------
# Weights files
# ---------------------------------------------------------------------------

WEIGHTS_FORMAT = "deepdeff-weights"
WEIGHTS_VERSION = 1


def save_weights(model: DeepDeffModel, path) -> None:
    """Versioned npz container: architecture metadata plus named arrays."""
    meta = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "kind": model.kind,
        "cell_type": model.cell_type,
        "bidirectional": model.bidirectional,
        "timesteps": model.timesteps,
        "f_basic": model.f_basic,
        "f_derived": model.f_derived,
        "hidden_size": model.hidden_size,
        "dense_size": model.dense_size,
    }
    arrays = {name: arr for name, arr in named_parameters(model)}
    with open(path, "wb") as fh:  # keep the exact path (np.savez would append .npz)
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_weights(path) -> DeepDeffModel:
    try:
        with np.load(path, allow_pickle=False) as payload:
            if "__meta__" not in payload:
                raise FormatError(f"{path}: not a weights file (missing metadata)")
            meta = json.loads(str(payload["__meta__"]))
            arrays = {k: payload[k] for k in payload.files if k != "__meta__"}
    except (OSError, zipfile.BadZipFile, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: unreadable weights file ({exc})") from exc

    if meta.get("format") != WEIGHTS_FORMAT:
        raise FormatError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != WEIGHTS_VERSION:
        raise FormatError(f"{path}: unsupported version {meta.get('version')!r}")

    builder = build_model if meta["kind"] == "deepdeff" else build_baseline
    kwargs = dict(
        cell_type=meta["cell_type"],
        bidirectional=meta["bidirectional"],
        timesteps=meta["timesteps"],
        f_basic=meta["f_basic"],
        hidden_size=meta["hidden_size"],
        dense_size=meta["dense_size"],
        rng=SeededRng(0),
    )
    if meta["kind"] == "deepdeff":
        kwargs["f_derived"] = meta["f_derived"]
    model = builder(**kwargs)
    for name, arr in named_parameters(model):
        if name not in arrays:
            raise FormatError(f"{path}: missing parameter {name!r}")
        stored = arrays[name]
        if stored.shape != arr.shape:
            raise FormatError(
                f"{path}: parameter {name!r} has shape {stored.shape}, expected {arr.shape}"
            )
        arr[...] = stored
    return model
