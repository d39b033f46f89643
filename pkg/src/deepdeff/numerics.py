"""Dense linear algebra, seeded randomness, initialization, and Adam.

Everything downstream (cells, model, harness) funnels its math and its
randomness through this module so that a run is fully determined by the
seeds it was given. All floating point work is double precision.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

_U64 = 0xFFFFFFFFFFFFFFFF

# SplitMix64 constants (Steele, Lea & Flood 2014). The generator is run in
# counter mode: draw i of a block is a pure function of state + (i+1)*GAMMA,
# which lets blocks be produced with vectorized uint64 arithmetic while
# keeping the exact same stream as repeated single draws.
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SeededRng:
    """Deterministic SplitMix64 stream seeded from a 64-bit integer.

    The algorithm is fixed and self-contained (no platform RNG involved), so
    the same seed yields the same draw sequence on every platform.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _U64

    def next_uint64_block(self, n: int) -> np.ndarray:
        """Return the next ``n`` raw 64-bit outputs as a uint64 array."""
        if n < 0:
            raise ValueError(f"block size must be >= 0, got {n}")
        counters = (
            np.uint64(self._state)
            + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        )
        self._state = (self._state + n * _GAMMA) & _U64
        z = counters
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def next_uint64(self) -> int:
        return int(self.next_uint64_block(1)[0])

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        """Uniform doubles in [low, high) built from the top 53 bits."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.next_uint64_block(n) >> np.uint64(11)).astype(np.float64)
        u *= 2.0**-53
        out = low + (high - low) * u
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def integer_below(self, n: int) -> int:
        """Uniform integer in [0, n) via the multiply-shift reduction."""
        if n <= 0:
            raise ValueError(f"upper bound must be positive, got {n}")
        return (self.next_uint64() * n) >> 64

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer_below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def spawn(self, tag) -> "SeededRng":
        """Child generator decorrelated from this one by ``tag``."""
        return SeededRng(derive_seed(self._state, tag))


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary labels (ints, strings).

    Used to give every (entity, method, timesteps, ...) cell of an experiment
    its own reproducible stream without the streams being correlated.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def glorot_uniform(rows: int, cols: int, rng: SeededRng) -> np.ndarray:
    """Weights drawn uniformly from [-L, L], L = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dims must be >= 1, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


@dataclass
class AdamState:
    """Optimizer slots for one parameter array.

    lr follows the published training setup; beta1/beta2/eps are the
    canonical defaults.
    """

    shape: tuple
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.m = np.zeros(self.shape, dtype=np.float64)
        self.v = np.zeros(self.shape, dtype=np.float64)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter array.

    Mutates ``state`` (moments and step count); ``param`` itself is not
    modified in place.
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(
            f"adam_step shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"state {state.m.shape}"
        )
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
