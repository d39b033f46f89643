"""Recurrent cell mathematics: RNN, GRU, LSTM steps, sequence unrolling,
backpropagation through time, bidirectional composition, and dropout.

Gradients are hand-derived per cell; there is no autodiff graph. The tape
produced by a forward pass records exactly the intermediates the matching
backward pass needs.

Conventions
-----------
Vectors are rows: a step computes ``x @ W_x + h @ W_h + b`` with
``W_x: (f, H)`` and ``W_h: (H, H)``. Every function accepts either a single
vector ``(f,)`` / sequence ``(K, f)`` or a batch ``(B, f)`` / ``(K, B, f)``;
batched inputs produce batched outputs, and parameter gradients are summed
over the batch. ``direction="reverse"`` processes the input sequence in
time-reversed order; tapes record steps in processed order, while
``d_state_seq`` and returned input gradients use original time order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, ShapeError
from .numerics import SeededRng, glorot_uniform

FORWARD = "forward"
REVERSE = "reverse"


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass
class RnnParams:
    w_x: np.ndarray  # (f, H)
    w_h: np.ndarray  # (H, H)
    b: np.ndarray    # (H,)


@dataclass
class GruParams:
    # update gate z, reset gate r, candidate n
    w_xz: np.ndarray
    w_hz: np.ndarray
    b_z: np.ndarray
    w_xr: np.ndarray
    w_hr: np.ndarray
    b_r: np.ndarray
    w_xn: np.ndarray
    w_hn: np.ndarray
    b_n: np.ndarray


@dataclass
class LstmParams:
    # input gate i, forget gate f, candidate g, output gate o
    w_xi: np.ndarray
    w_hi: np.ndarray
    b_i: np.ndarray
    w_xf: np.ndarray
    w_hf: np.ndarray
    b_f: np.ndarray
    w_xg: np.ndarray
    w_hg: np.ndarray
    b_g: np.ndarray
    w_xo: np.ndarray
    w_ho: np.ndarray
    b_o: np.ndarray


CELL_TYPES = {"rnn": RnnParams, "gru": GruParams, "lstm": LstmParams}


def cell_type_of(params) -> str:
    for name, cls in CELL_TYPES.items():
        if isinstance(params, cls):
            return name
    raise TypeError(f"not a cell parameter set: {type(params).__name__}")


def input_size(params) -> int:
    return named_arrays(params)[0][1].shape[0]


def hidden_size(params) -> int:
    return named_arrays(params)[0][1].shape[1]


def named_arrays(params) -> list[tuple[str, np.ndarray]]:
    """(name, array) pairs for every parameter field, in declaration order."""
    return [(f.name, getattr(params, f.name)) for f in dataclasses.fields(params)]


def zeros_like_params(params):
    return type(params)(**{n: np.zeros_like(a) for n, a in named_arrays(params)})


def copy_params(params):
    return type(params)(**{n: a.copy() for n, a in named_arrays(params)})


def iadd_params(target, other) -> None:
    for name, arr in named_arrays(other):
        getattr(target, name).__iadd__(arr)


def scale_params(params, factor: float) -> None:
    for _, arr in named_arrays(params):
        arr *= factor


def init_cell_params(cell_type: str, n_inputs: int, n_hidden: int, rng: SeededRng):
    """Glorot-uniform weights, zero biases; LSTM forget-gate bias starts at 1
    so early training does not flush the cell state on small datasets."""
    if cell_type not in CELL_TYPES:
        raise ConfigError(f"unknown cell type {cell_type!r}")

    def w(rows, cols):
        return glorot_uniform(rows, cols, rng)

    f, h = n_inputs, n_hidden
    if cell_type == "rnn":
        return RnnParams(w(f, h), w(h, h), np.zeros(h))
    if cell_type == "gru":
        return GruParams(
            w(f, h), w(h, h), np.zeros(h),
            w(f, h), w(h, h), np.zeros(h),
            w(f, h), w(h, h), np.zeros(h),
        )
    return LstmParams(
        w(f, h), w(h, h), np.zeros(h),
        w(f, h), w(h, h), np.ones(h),
        w(f, h), w(h, h), np.zeros(h),
        w(f, h), w(h, h), np.zeros(h),
    )


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _check_step_shapes(params, x, h):
    f, hsz = input_size(params), hidden_size(params)
    if x.shape[-1] != f:
        raise ShapeError(f"input width {x.shape[-1]} != cell input size {f}")
    if h.shape[-1] != hsz:
        raise ShapeError(f"state width {h.shape[-1]} != cell hidden size {hsz}")


def cell_step(params, x: np.ndarray, state):
    """One recurrent step; returns the new state.

    RNN/GRU state is the hidden vector; LSTM state is an ``(h, c)`` pair.
    """
    kind = cell_type_of(params)
    x = np.asarray(x, dtype=np.float64)
    if kind == "rnn":
        h = np.asarray(state, dtype=np.float64)
        _check_step_shapes(params, x, h)
        return np.tanh(x @ params.w_x + h @ params.w_h + params.b)
    if kind == "gru":
        h = np.asarray(state, dtype=np.float64)
        _check_step_shapes(params, x, h)
        z = _sigmoid(x @ params.w_xz + h @ params.w_hz + params.b_z)
        r = _sigmoid(x @ params.w_xr + h @ params.w_hr + params.b_r)
        n = np.tanh(x @ params.w_xn + (r * h) @ params.w_hn + params.b_n)
        return (1.0 - z) * h + z * n
    h, c = (np.asarray(s, dtype=np.float64) for s in state)
    _check_step_shapes(params, x, h)
    i = _sigmoid(x @ params.w_xi + h @ params.w_hi + params.b_i)
    f = _sigmoid(x @ params.w_xf + h @ params.w_hf + params.b_f)
    g = np.tanh(x @ params.w_xg + h @ params.w_hg + params.b_g)
    o = _sigmoid(x @ params.w_xo + h @ params.w_ho + params.b_o)
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


# ---------------------------------------------------------------------------
# Sequence unrolling
# ---------------------------------------------------------------------------

@dataclass
class SequenceTape:
    """Per-timestep record of everything BPTT needs, in processed order."""

    cell_type: str
    direction: str
    inputs: np.ndarray   # (K, B, f)
    states: np.ndarray   # (K+1, B, H), states[0] is the zero initial state
    gates: dict          # cell-specific intermediates, each (K, B, H)
    squeeze: bool        # True when the caller passed unbatched vectors

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    def hidden_sequence(self) -> np.ndarray:
        """Hidden states (K, B, H) arranged in original time order."""
        out = self.states[1:]
        return out[::-1] if self.direction == REVERSE else out


def _as_batch_sequence(inputs):
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim == 2:  # (K, f)
        return arr[:, None, :], True
    if arr.ndim == 3:  # (K, B, f)
        return arr, False
    raise ShapeError(f"sequence input must be (K, f) or (K, B, f), got {arr.shape}")


def forward_sequence(params, inputs, direction: str = FORWARD):
    """Unroll over K steps from a zero initial state.

    Returns ``(last_hidden, tape)`` where ``last_hidden`` is the hidden state
    after the final processed step.
    """
    if direction not in (FORWARD, REVERSE):
        raise ConfigError(f"direction must be 'forward' or 'reverse', got {direction!r}")
    seq, squeeze = _as_batch_sequence(inputs)
    if seq.shape[0] == 0:
        raise InputError("cannot unroll an empty sequence")
    if direction == REVERSE:
        seq = seq[::-1]
    kind = cell_type_of(params)
    k, b, _ = seq.shape
    hsz = hidden_size(params)

    states = np.zeros((k + 1, b, hsz))
    gates: dict[str, np.ndarray] = {}
    if kind == "gru":
        gates = {n: np.zeros((k, b, hsz)) for n in ("z", "r", "n")}
    elif kind == "lstm":
        gates = {n: np.zeros((k, b, hsz)) for n in ("i", "f", "g", "o", "tanh_c")}
        gates["c"] = np.zeros((k + 1, b, hsz))

    h = states[0]
    c = gates["c"][0] if kind == "lstm" else None
    for t in range(k):
        x = seq[t]
        if kind == "rnn":
            h = cell_step(params, x, h)
        elif kind == "gru":
            _check_step_shapes(params, x, h)
            z = _sigmoid(x @ params.w_xz + h @ params.w_hz + params.b_z)
            r = _sigmoid(x @ params.w_xr + h @ params.w_hr + params.b_r)
            n = np.tanh(x @ params.w_xn + (r * h) @ params.w_hn + params.b_n)
            gates["z"][t], gates["r"][t], gates["n"][t] = z, r, n
            h = (1.0 - z) * h + z * n
        else:
            _check_step_shapes(params, x, h)
            i = _sigmoid(x @ params.w_xi + h @ params.w_hi + params.b_i)
            fg = _sigmoid(x @ params.w_xf + h @ params.w_hf + params.b_f)
            g = np.tanh(x @ params.w_xg + h @ params.w_hg + params.b_g)
            o = _sigmoid(x @ params.w_xo + h @ params.w_ho + params.b_o)
            c = fg * c + i * g
            tanh_c = np.tanh(c)
            gates["i"][t], gates["f"][t], gates["g"][t], gates["o"][t] = i, fg, g, o
            gates["c"][t + 1] = c
            gates["tanh_c"][t] = tanh_c
            h = o * tanh_c
        states[t + 1] = h

    tape = SequenceTape(kind, direction, seq, states, gates, squeeze)
    last = states[-1][0] if squeeze else states[-1]
    return last, tape


# ---------------------------------------------------------------------------
# Backpropagation through time
# ---------------------------------------------------------------------------

def backprop_sequence(params, tape: SequenceTape, d_last_state=None, d_state_seq=None):
    """Exact gradients of a scalar loss through an unrolled sequence.

    ``d_last_state`` is the upstream gradient at the final processed hidden
    state; ``d_state_seq`` (original time order, shape of the hidden
    sequence) adds upstream gradient at every step, which stacked layers
    need. Returns ``(d_params, d_inputs)`` with ``d_inputs`` in original
    time order.
    """
    if cell_type_of(params) != tape.cell_type:
        raise ShapeError(
            f"tape built for {tape.cell_type!r} cell, params are {cell_type_of(params)!r}"
        )
    k, b, f = tape.inputs.shape
    hsz = tape.states.shape[-1]
    if input_size(params) != f or hidden_size(params) != hsz:
        raise ShapeError(
            f"tape shapes (f={f}, H={hsz}) do not match params "
            f"(f={input_size(params)}, H={hidden_size(params)})"
        )

    d_steps = np.zeros((k, b, hsz))
    if d_last_state is not None:
        d_last = np.asarray(d_last_state, dtype=np.float64)
        d_steps[k - 1] += d_last[None, :] if d_last.ndim == 1 else d_last
    if d_state_seq is not None:
        seq = np.asarray(d_state_seq, dtype=np.float64)
        if seq.ndim == 2:
            seq = seq[:, None, :]
        if tape.direction == REVERSE:
            seq = seq[::-1]
        d_steps += seq

    grads = zeros_like_params(params)
    d_inputs = np.zeros_like(tape.inputs)
    dh_carry = np.zeros((b, hsz))
    dc_carry = np.zeros((b, hsz)) if tape.cell_type == "lstm" else None

    for t in range(k - 1, -1, -1):
        dh = d_steps[t] + dh_carry
        x, h_prev = tape.inputs[t], tape.states[t]
        if tape.cell_type == "rnn":
            h_t = tape.states[t + 1]
            da = dh * (1.0 - h_t * h_t)
            grads.w_x += x.T @ da
            grads.w_h += h_prev.T @ da
            grads.b += da.sum(axis=0)
            d_inputs[t] = da @ params.w_x.T
            dh_carry = da @ params.w_h.T
        elif tape.cell_type == "gru":
            z, r, n = tape.gates["z"][t], tape.gates["r"][t], tape.gates["n"][t]
            dn = dh * z
            dz = dh * (n - h_prev)
            dh_prev = dh * (1.0 - z)
            dn_pre = dn * (1.0 - n * n)
            grads.w_xn += x.T @ dn_pre
            grads.w_hn += (r * h_prev).T @ dn_pre
            grads.b_n += dn_pre.sum(axis=0)
            drh = dn_pre @ params.w_hn.T
            dr = drh * h_prev
            dh_prev += drh * r
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            grads.w_xz += x.T @ dz_pre
            grads.w_hz += h_prev.T @ dz_pre
            grads.b_z += dz_pre.sum(axis=0)
            grads.w_xr += x.T @ dr_pre
            grads.w_hr += h_prev.T @ dr_pre
            grads.b_r += dr_pre.sum(axis=0)
            dh_prev += dz_pre @ params.w_hz.T + dr_pre @ params.w_hr.T
            d_inputs[t] = (
                dz_pre @ params.w_xz.T + dr_pre @ params.w_xr.T + dn_pre @ params.w_xn.T
            )
            dh_carry = dh_prev
        else:
            g_ = tape.gates
            i, f_, g, o = g_["i"][t], g_["f"][t], g_["g"][t], g_["o"][t]
            c_prev, tanh_c = g_["c"][t], g_["tanh_c"][t]
            do = dh * tanh_c
            dc = dc_carry + dh * o * (1.0 - tanh_c * tanh_c)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_carry = dc * f_
            di_pre = di * i * (1.0 - i)
            df_pre = df * f_ * (1.0 - f_)
            dg_pre = dg * (1.0 - g * g)
            do_pre = do * o * (1.0 - o)
            for pre, wx, wh, bias in (
                (di_pre, "w_xi", "w_hi", "b_i"),
                (df_pre, "w_xf", "w_hf", "b_f"),
                (dg_pre, "w_xg", "w_hg", "b_g"),
                (do_pre, "w_xo", "w_ho", "b_o"),
            ):
                getattr(grads, wx).__iadd__(x.T @ pre)
                getattr(grads, wh).__iadd__(h_prev.T @ pre)
                getattr(grads, bias).__iadd__(pre.sum(axis=0))
            dh_carry = (
                di_pre @ params.w_hi.T
                + df_pre @ params.w_hf.T
                + dg_pre @ params.w_hg.T
                + do_pre @ params.w_ho.T
            )
            d_inputs[t] = (
                di_pre @ params.w_xi.T
                + df_pre @ params.w_xf.T
                + dg_pre @ params.w_xg.T
                + do_pre @ params.w_xo.T
            )

    if tape.direction == REVERSE:
        d_inputs = d_inputs[::-1]
    if tape.squeeze:
        d_inputs = d_inputs[:, 0, :]
    return grads, d_inputs


# ---------------------------------------------------------------------------
# Bidirectional composition
# ---------------------------------------------------------------------------

def bidirectional_forward(fwd_params, rev_params, inputs):
    """Run the sequence forward and time-reversed, concatenate final states.

    Returns ``(state, (fwd_tape, rev_tape))``; the state has width 2H:
    forward half first.
    """
    if input_size(fwd_params) != input_size(rev_params) or hidden_size(
        fwd_params
    ) != hidden_size(rev_params):
        raise ShapeError(
            f"bidirectional halves disagree: "
            f"(f={input_size(fwd_params)}, H={hidden_size(fwd_params)}) vs "
            f"(f={input_size(rev_params)}, H={hidden_size(rev_params)})"
        )
    h_fwd, tape_fwd = forward_sequence(fwd_params, inputs, FORWARD)
    h_rev, tape_rev = forward_sequence(rev_params, inputs, REVERSE)
    return np.concatenate([h_fwd, h_rev], axis=-1), (tape_fwd, tape_rev)


def bidirectional_backward(fwd_params, rev_params, tapes, d_state, d_state_seq=None):
    """Backward through both halves; ``d_state`` has width 2H.

    ``d_state_seq`` (original order, width 2H per step) supports stacked
    layers whose per-step output is the forward/reverse concatenation.
    Returns ``(d_fwd_params, d_rev_params, d_inputs)``.
    """
    tape_fwd, tape_rev = tapes
    hsz = tape_fwd.states.shape[-1]
    d_state = np.asarray(d_state, dtype=np.float64)
    d_fwd_last, d_rev_last = d_state[..., :hsz], d_state[..., hsz:]
    d_fwd_seq = d_rev_seq = None
    if d_state_seq is not None:
        seq = np.asarray(d_state_seq, dtype=np.float64)
        d_fwd_seq, d_rev_seq = seq[..., :hsz], seq[..., hsz:]
    g_fwd, dx_fwd = backprop_sequence(fwd_params, tape_fwd, d_fwd_last, d_fwd_seq)
    g_rev, dx_rev = backprop_sequence(rev_params, tape_rev, d_rev_last, d_rev_seq)
    return g_fwd, g_rev, dx_fwd + dx_rev


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------

def dropout_mask(shape, rate: float, rng: SeededRng) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, survivors
    scaled by 1/(1-rate) so inference needs no rescaling."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.uniform(size=shape) >= rate
    return keep / (1.0 - rate)


def dropout(vector, rate: float, rng: SeededRng, training: bool):
    if not training:
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        return np.asarray(vector, dtype=np.float64)
    return np.asarray(vector, dtype=np.float64) * dropout_mask(
        np.shape(vector), rate, rng
    )
