"""Synthetic-series builders shared by the test modules."""

import csv

import numpy as np

from deepdeff.data import TimeSeries, annotate_calendar


def make_series(
    n,
    interval=30,
    start="2013-06-01T00:00",
    values=None,
    unit="kW",
    source_id="test",
    annotate=True,
):
    if values is None:
        values = 2.0 + np.sin(np.arange(n) * 0.1)
    series = TimeSeries(
        start=np.datetime64(start, "m"),
        interval_minutes=interval,
        values=np.asarray(values, dtype=np.float64),
        unit=unit,
        source_id=source_id,
    )
    return annotate_calendar(series) if annotate else series


def daily_profile_series(n_days, interval=30, start="2013-06-01T00:00", noise=None, base=2.0):
    """Load with a smooth daily shape; optionally add a noise array."""
    s = 1440 // interval
    n = n_days * s
    slot = np.arange(n) % s
    values = base + np.sin(2 * np.pi * slot / s)
    if noise is not None:
        values = values + noise
    return make_series(n, interval=interval, start=start, values=values)


def write_csv(path, rows, header=("timestamp", "load"), delimiter=","):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(header)
        writer.writerows(rows)
    return path
