"""Turn a load series into supervised samples.

Each sample pairs two sequences over the same K past records:

* ``basic_seq`` (K x f_basic): reading, one-hot intra-day slot, one-hot
  weekday, holiday flag. f_basic = 1 + slots_per_day + 7 + 1.
* ``derived_seq`` (K x 4): rolling mean/std of the K readings ending at that
  row, and the mean/std of the target's slot over the K days before the
  target (constant down the column).

The target is the reading immediately after the window. A position yields a
sample only when every ingredient exists: the window itself, the K-step
history each rolling row needs, and K prior days at the target's slot. With
S slots per day that means the first K*S + K records are warm-up, and any
gap (NaN) inside the required span skips the position rather than feeding
fabricated statistics to the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TimeSeries, annotate_calendar
from .errors import EncodingError, HistoryError, InputError

N_DERIVED = 4


@dataclass
class Sample:
    basic_seq: np.ndarray     # (K, f_basic)
    derived_seq: np.ndarray   # (K, 4)
    target: float
    target_slot: int
    target_timestamp: np.datetime64
    target_index: int         # position of the target in the source series


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise EncodingError(f"one-hot index {index} out of range for size {size}")
    out = np.zeros(size)
    out[index] = 1.0
    return out


def window_stats(values, end_index: int, k: int) -> tuple[float, float]:
    """Population mean/std of the k readings ending at ``end_index`` inclusive."""
    if k < 1:
        raise InputError(f"window length must be >= 1, got {k}")
    if end_index < k - 1:
        raise HistoryError(
            f"need {k} readings ending at index {end_index}, series starts at 0"
        )
    window = np.asarray(values, dtype=np.float64)[end_index - k + 1 : end_index + 1]
    if not np.all(np.isfinite(window)):
        raise HistoryError(f"gap inside the {k}-step window ending at {end_index}")
    return float(window.mean()), float(window.std())


def slot_history_stats(series: TimeSeries, target_index: int, k: int) -> tuple[float, float]:
    """Population mean/std of the target slot's reading on the k prior days."""
    s = series.slots_per_day
    idx = target_index - s * np.arange(1, k + 1)
    if idx[-1] < 0:
        raise HistoryError(
            f"need {k} full days before index {target_index}, have {target_index // s}"
        )
    history = series.values[idx]
    if not np.all(np.isfinite(history)):
        raise HistoryError(
            f"missing same-slot reading within {k} days before index {target_index}"
        )
    return float(history.mean()), float(history.std())


def basic_feature_width(slots_per_day: int) -> int:
    return 1 + slots_per_day + 7 + 1


def build_samples(series: TimeSeries, k: int, derived_per_row: bool = True) -> list[Sample]:
    """Sliding-window samples with basic and derived feature sequences.

    ``derived_per_row=False`` switches to a single derived vector (window
    stats over the whole K-window) replicated across the K rows instead of
    recomputing the rolling pair per row.
    """
    if k < 1:
        raise InputError(f"timesteps must be >= 1, got {k}")
    if not series.is_annotated():
        series = annotate_calendar(series)
    s = series.slots_per_day
    n = len(series)
    warmup = k * s + k
    if n <= warmup:
        raise InputError(
            f"series of {n} records is too short: needs more than {warmup} "
            f"({k} days of slot history plus a {k}-step window)"
        )

    values = series.values
    stamps = series.timestamps()
    f_basic = basic_feature_width(s)

    # one basic row per record, assembled once
    basic_rows = np.zeros((n, f_basic))
    basic_rows[:, 0] = values
    basic_rows[np.arange(n), 1 + series.slots] = 1.0
    basic_rows[np.arange(n), 1 + s + series.weekdays] = 1.0
    basic_rows[:, 1 + s + 7] = series.holidays

    finite = np.isfinite(values)
    samples: list[Sample] = []
    for t in range(warmup, n):
        lo = t - 2 * k + 1  # rolling row i needs the k readings ending at it
        if not finite[lo : t + 1].all():
            continue
        day_idx = t - s * np.arange(1, k + 1)
        if not finite[day_idx].all():
            continue

        slot_mean, slot_std = slot_history_stats(series, t, k)
        derived = np.empty((k, N_DERIVED))
        if derived_per_row:
            for i in range(k):
                w_mean, w_std = window_stats(values, t - k + i, k)
                derived[i] = (w_mean, w_std, slot_mean, slot_std)
        else:
            w_mean, w_std = window_stats(values, t - 1, k)
            derived[:] = (w_mean, w_std, slot_mean, slot_std)

        samples.append(
            Sample(
                basic_seq=basic_rows[t - k : t].copy(),
                derived_seq=derived,
                target=float(values[t]),
                target_slot=int(series.slots[t]),
                target_timestamp=stamps[t],
                target_index=t,
            )
        )
    return samples
