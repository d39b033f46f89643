"""Dataset ingestion, resampling, cleaning, calendar annotation, and
train/validation/test splitting.

A :class:`TimeSeries` lives on a uniform minute-resolution grid; readings the
source file never supplied are held as NaN so that downstream feature windows
can skip them instead of silently consuming fabricated values.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from datetime import datetime

import numpy as np

from .errors import ConfigError, InputError, ParseError

log = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440


@dataclass
class TimeSeries:
    """Load readings at a fixed interval, plus calendar annotations.

    ``values`` uses NaN for gaps. Treated as immutable after construction;
    operations return new instances.
    """

    start: np.datetime64          # timestamp of record 0, minute precision
    interval_minutes: int
    values: np.ndarray            # float64
    unit: str = "kW"
    source_id: str = ""
    slots: np.ndarray | None = None
    weekdays: np.ndarray | None = None
    holidays: np.ndarray | None = None
    gaps: tuple = ()              # missing spans reported by ingestion

    def __post_init__(self):
        self.start = np.datetime64(self.start, "m")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.interval_minutes < 1:
            raise ConfigError(f"interval must be >= 1 minute, got {self.interval_minutes}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def slots_per_day(self) -> int:
        if MINUTES_PER_DAY % self.interval_minutes != 0:
            raise ConfigError(
                f"interval of {self.interval_minutes} min does not divide a day"
            )
        return MINUTES_PER_DAY // self.interval_minutes

    def timestamps(self) -> np.ndarray:
        step = np.timedelta64(self.interval_minutes, "m")
        return self.start + np.arange(len(self.values)) * step

    def is_annotated(self) -> bool:
        return self.slots is not None


@dataclass
class SeriesSubset:
    """Records selected from a series by a split; not necessarily contiguous."""

    name: str
    indices: np.ndarray
    timestamps: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class SplitSpec:
    """Either three inclusive date ranges, or a per-month day partition."""

    mode: str                                  # "date-ranges" | "month-wise"
    ranges: tuple | None = None                # ((start, end) x3), datetime.date
    day_boundaries: tuple[int, int] = (21, 26)

    def __post_init__(self):
        if self.mode not in ("date-ranges", "month-wise"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if self.mode == "date-ranges":
            if self.ranges is None or len(self.ranges) != 3:
                raise ConfigError("date-ranges mode needs exactly 3 (start, end) pairs")
            for start, end in self.ranges:
                if start > end:
                    raise ConfigError(f"range start {start} after end {end}")
            for (_, prev_end), (next_start, _) in zip(self.ranges, self.ranges[1:]):
                if next_start <= prev_end:
                    raise ConfigError(
                        f"split ranges overlap or are unordered near {prev_end}"
                    )
        else:
            lo, hi = self.day_boundaries
            if not 1 <= lo < hi <= 28:
                raise ConfigError(f"bad month-wise day boundaries {self.day_boundaries}")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for one dataset flavour."""

    timestamp_column: str
    load_column: str
    timestamp_format: str = "%Y-%m-%d %H:%M:%S"
    delimiter: str = ","
    unit: str = "kW"
    entity_column: str | None = None
    interval_minutes: int | None = None  # inferred from the data when None


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def load_csv(path, schema: CsvSchema, entity: str | None = None) -> TimeSeries:
    """Parse a CSV file into a gap-annotated uniform series.

    Rows are sorted by timestamp, duplicate timestamps are collapsed by
    averaging, and any missing grid positions are reported and kept as NaN.
    """
    rows: list[tuple[datetime, float]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        for record in reader:
            line = reader.line_num
            if schema.entity_column is not None and entity is not None:
                if record.get(schema.entity_column) != str(entity):
                    continue
            try:
                ts = datetime.strptime(
                    record[schema.timestamp_column].strip(), schema.timestamp_format
                )
                value = float(record[schema.load_column])
            except (KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{line}: missing column ({exc})", line) from exc
            except ValueError as exc:
                raise ParseError(f"{path}:{line}: {exc}", line) from exc
            rows.append((ts, value))
    if not rows:
        detail = f" for entity {entity!r}" if entity is not None else ""
        raise InputError(f"{path}: no data rows{detail}")

    rows.sort(key=lambda r: r[0])
    stamps: list[np.datetime64] = []
    values: list[float] = []
    i = 0
    while i < len(rows):
        j = i
        acc = 0.0
        while j < len(rows) and rows[j][0] == rows[i][0]:
            acc += rows[j][1]
            j += 1
        stamps.append(np.datetime64(rows[i][0], "m"))
        values.append(acc / (j - i))
        i = j

    interval = schema.interval_minutes
    if interval is None:
        if len(stamps) < 2:
            raise InputError(f"{path}: cannot infer interval from a single record")
        diffs = np.diff(np.array(stamps)).astype("timedelta64[m]").astype(int)
        interval = int(diffs[diffs > 0].min())

    start = stamps[0]
    n = int((stamps[-1] - start) / np.timedelta64(interval, "m")) + 1
    grid = np.full(n, np.nan)
    offsets = ((np.array(stamps) - start) / np.timedelta64(interval, "m")).astype(float)
    if not np.allclose(offsets, np.round(offsets)):
        raise InputError(f"{path}: timestamps do not align to a {interval}-minute grid")
    grid[offsets.astype(int)] = values

    gaps = _gap_spans(start, interval, grid)
    if gaps:
        missing = int(np.isnan(grid).sum())
        log.warning("%s: %d missing readings in %d gap span(s)", path, missing, len(gaps))
    return TimeSeries(
        start=start,
        interval_minutes=interval,
        values=grid,
        unit=schema.unit,
        source_id=str(entity) if entity is not None else "",
        gaps=gaps,
    )


def _gap_spans(start, interval, values) -> tuple:
    step = np.timedelta64(interval, "m")
    missing = np.flatnonzero(np.isnan(values))
    if missing.size == 0:
        return ()
    spans = []
    run_start = missing[0]
    prev = missing[0]
    for idx in missing[1:]:
        if idx != prev + 1:
            spans.append((start + run_start * step, start + prev * step))
            run_start = idx
        prev = idx
    spans.append((start + run_start * step, start + prev * step))
    return tuple(spans)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def resample_average(
    series: TimeSeries, target_interval_minutes: int, trim_partial_edges: bool = False
) -> TimeSeries:
    """Downsample by arithmetic mean over clock-aligned buckets.

    Partially filled buckets average whatever readings they have;
    ``trim_partial_edges`` drops an incomplete first/last bucket instead,
    which is how the household adapters count their points.
    """
    ratio = target_interval_minutes / series.interval_minutes
    if target_interval_minutes % series.interval_minutes != 0:
        raise ConfigError(
            f"target interval {target_interval_minutes} min is not a multiple of "
            f"source interval {series.interval_minutes} min"
        )
    ratio = int(ratio)
    if ratio == 1:
        return replace(series, slots=None, weekdays=None, holidays=None)

    epoch_min = series.start.astype("int64")  # minutes since epoch
    first_bucket = epoch_min // target_interval_minutes
    offset_in_bucket = (epoch_min % target_interval_minutes) // series.interval_minutes

    n = len(series.values)
    bucket_of = (offset_in_bucket + np.arange(n)) // ratio
    n_buckets = int(bucket_of[-1]) + 1

    sums = np.zeros(n_buckets)
    counts = np.zeros(n_buckets)
    finite = np.isfinite(series.values)
    np.add.at(sums, bucket_of[finite], series.values[finite])
    np.add.at(counts, bucket_of[finite], 1.0)
    present = np.zeros(n_buckets)
    np.add.at(present, bucket_of, 1.0)  # grid positions, NaN or not

    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1.0), np.nan)

    start_bucket = 0
    end_bucket = n_buckets
    if trim_partial_edges:
        if present[0] < ratio:
            start_bucket = 1
        if present[-1] < ratio:
            end_bucket -= 1
        if end_bucket <= start_bucket:
            raise InputError("series too short: no complete bucket to keep")

    new_start_min = (first_bucket + start_bucket) * target_interval_minutes
    return TimeSeries(
        start=np.datetime64(int(new_start_min), "m"),
        interval_minutes=target_interval_minutes,
        values=means[start_bucket:end_bucket],
        unit=series.unit,
        source_id=series.source_id,
        gaps=series.gaps,
    )


def apply_offset(series: TimeSeries, offset: float) -> TimeSeries:
    """Shift every reading by ``offset`` (used to clear near-zero targets)."""
    return replace(
        series,
        values=series.values + offset,
        slots=series.slots,
        weekdays=series.weekdays,
        holidays=series.holidays,
    )


def annotate_calendar(series: TimeSeries) -> TimeSeries:
    """Populate slot, weekday, and holiday fields.

    Weekday is 0=Monday..6=Sunday; holiday flags Saturdays and Sundays only.
    Idempotent.
    """
    total_minutes = series.timestamps().astype("int64")
    minutes_into_day = total_minutes % MINUTES_PER_DAY
    if np.any(minutes_into_day % series.interval_minutes != 0):
        raise ConfigError("timestamps are not aligned to the interval grid")
    slots = (minutes_into_day // series.interval_minutes).astype(np.int64)
    day_index = total_minutes // MINUTES_PER_DAY
    weekdays = ((day_index + 3) % 7).astype(np.int64)  # 1970-01-01 was a Thursday
    holidays = (weekdays >= 5).astype(np.int64)
    return replace(series, slots=slots, weekdays=weekdays, holidays=holidays)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split(series: TimeSeries, spec: SplitSpec):
    """Partition records into train/validation/test subsets by calendar date."""
    ts = series.timestamps()
    days = ts.astype("datetime64[D]")

    if spec.mode == "date-ranges":
        masks = []
        for start, end in spec.ranges:
            lo = np.datetime64(start, "D")
            hi = np.datetime64(end, "D")
            if lo > days[-1] or hi < days[0]:
                raise ConfigError(
                    f"split range {start}..{end} lies outside the series span "
                    f"{days[0]}..{days[-1]}"
                )
            mask = (days >= lo) & (days <= hi)
            if not mask.any():
                raise ConfigError(f"split range {start}..{end} selects no records")
            masks.append(mask)
    else:
        day_of_month = (days - days.astype("datetime64[M]")).astype(int) + 1
        lo, hi = spec.day_boundaries
        masks = [day_of_month <= lo, (day_of_month > lo) & (day_of_month <= hi), day_of_month > hi]

    names = ("train", "val", "test")
    return tuple(
        SeriesSubset(
            name=name,
            indices=np.flatnonzero(mask),
            timestamps=ts[mask],
            values=series.values[mask],
        )
        for name, mask in zip(names, masks)
    )


def partition_index_sets(series: TimeSeries, spec: SplitSpec):
    """Index sets of the three partitions, for assigning samples by target."""
    return tuple(set(subset.indices.tolist()) for subset in split(series, spec))


# ---------------------------------------------------------------------------
# Canonical cache format
# ---------------------------------------------------------------------------

CANONICAL_COLUMNS = ("timestamp", "load", "slot", "weekday", "holiday")


def write_canonical(series: TimeSeries, path) -> None:
    """CSV cache: ISO-8601 timestamp, load, slot, weekday, holiday."""
    annotated = series if series.is_annotated() else annotate_calendar(series)
    stamps = annotated.timestamps()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_COLUMNS)
        for i in range(len(annotated)):
            value = annotated.values[i]
            writer.writerow(
                [
                    np.datetime_as_string(stamps[i], unit="m"),
                    repr(float(value)) if np.isfinite(value) else "",
                    int(annotated.slots[i]),
                    int(annotated.weekdays[i]),
                    int(annotated.holidays[i]),
                ]
            )


def read_canonical(path, unit: str = "kW", source_id: str = "") -> TimeSeries:
    schema = CsvSchema(
        timestamp_column="timestamp",
        load_column="load",
        timestamp_format="%Y-%m-%dT%H:%M",
        unit=unit,
    )
    stamps = []
    values = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        for record in reader:
            try:
                stamps.append(
                    np.datetime64(
                        datetime.strptime(record["timestamp"], schema.timestamp_format), "m"
                    )
                )
                raw = record["load"]
                values.append(float(raw) if raw not in ("", None) else np.nan)
            except (KeyError, ValueError) as exc:
                raise ParseError(f"{path}:{reader.line_num}: {exc}", reader.line_num) from exc
    if not stamps:
        raise InputError(f"{path}: no data rows")
    if len(stamps) > 1:
        interval = int((stamps[1] - stamps[0]) / np.timedelta64(1, "m"))
    else:
        interval = 30
    series = TimeSeries(
        start=stamps[0],
        interval_minutes=interval,
        values=np.array(values),
        unit=unit,
        source_id=source_id,
    )
    return annotate_calendar(series)


# ---------------------------------------------------------------------------
# Dataset presets (adapters: column mappings, units, published split dates)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetPreset:
    name: str
    schema: CsvSchema
    split_spec: SplitSpec
    resample_to: int | None = None   # minutes; None keeps source resolution
    offset: float = 0.0
    trim_partial_edges: bool = False


def _dates(a, b):
    return (np.datetime64(a).astype("O"), np.datetime64(b).astype("O"))


PRESETS: dict[str, DatasetPreset] = {
    "sgsc": DatasetPreset(
        name="sgsc",
        schema=CsvSchema(
            timestamp_column="timestamp",
            load_column="load",
            timestamp_format="%Y-%m-%d %H:%M:%S",
            unit="kW",
            entity_column="customer_id",
            interval_minutes=30,
        ),
        split_spec=SplitSpec(
            mode="date-ranges",
            ranges=(
                _dates("2013-06-01", "2013-08-05"),
                _dates("2013-08-06", "2013-08-22"),
                _dates("2013-08-23", "2013-08-31"),
            ),
        ),
    ),
    "ampds": DatasetPreset(
        name="ampds",
        schema=CsvSchema(
            timestamp_column="timestamp",
            load_column="load",
            timestamp_format="%Y-%m-%d %H:%M:%S",
            unit="A",
            interval_minutes=1,
        ),
        split_spec=SplitSpec(
            mode="date-ranges",
            ranges=(
                _dates("2012-04-01", "2012-12-17"),
                _dates("2012-12-18", "2013-02-23"),
                _dates("2013-02-24", "2013-04-01"),
            ),
        ),
        resample_to=30,
        trim_partial_edges=True,
    ),
    "rte": DatasetPreset(
        name="rte",
        schema=CsvSchema(
            timestamp_column="timestamp",
            load_column="load",
            timestamp_format="%Y-%m-%d %H:%M:%S",
            unit="MW",
            interval_minutes=30,
        ),
        split_spec=SplitSpec(
            mode="date-ranges",
            ranges=(
                _dates("2013-01-01", "2015-11-18"),
                _dates("2015-11-19", "2016-08-07"),
                _dates("2016-08-08", "2016-12-31"),
            ),
        ),
    ),
    "ercot": DatasetPreset(
        name="ercot",
        schema=CsvSchema(
            timestamp_column="timestamp",
            load_column="load",
            timestamp_format="%Y-%m-%d %H:%M:%S",
            unit="MW",
            interval_minutes=60,
        ),
        split_spec=SplitSpec(
            mode="date-ranges",
            ranges=(
                _dates("2011-01-01", "2013-05-26"),
                _dates("2013-05-27", "2013-12-31"),
                _dates("2014-01-01", "2015-12-31"),
            ),
        ),
    ),
    "precon": DatasetPreset(
        name="precon",
        schema=CsvSchema(
            timestamp_column="timestamp",
            load_column="load",
            timestamp_format="%Y-%m-%d %H:%M:%S",
            unit="kW",
            interval_minutes=1,
        ),
        split_spec=SplitSpec(mode="month-wise", day_boundaries=(21, 26)),
        resample_to=30,
        offset=0.1,
        trim_partial_edges=True,
    ),
    "canonical": DatasetPreset(
        name="canonical",
        schema=CsvSchema(
            timestamp_column="timestamp",
            load_column="load",
            timestamp_format="%Y-%m-%dT%H:%M",
            unit="kW",
        ),
        split_spec=SplitSpec(mode="month-wise", day_boundaries=(21, 26)),
    ),
}


def preset(name: str) -> DatasetPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown dataset preset {name!r}; available: {sorted(PRESETS)}"
        ) from None


def preprocess(series: TimeSeries, p: DatasetPreset) -> TimeSeries:
    """Apply a preset's resampling, offset, and calendar annotation."""
    out = series
    if p.resample_to is not None and p.resample_to != out.interval_minutes:
        out = resample_average(out, p.resample_to, trim_partial_edges=p.trim_partial_edges)
    if p.offset:
        out = apply_offset(out, p.offset)
    return annotate_calendar(out)
