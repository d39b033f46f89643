import numpy as np
import pytest

from deepdeff.data import (
    CsvSchema,
    SplitSpec,
    annotate_calendar,
    apply_offset,
    load_csv,
    preset,
    preprocess,
    read_canonical,
    resample_average,
    split,
    write_canonical,
)
from deepdeff.errors import ConfigError, InputError, ParseError
from helpers import make_series, write_csv

SCHEMA = CsvSchema(timestamp_column="timestamp", load_column="load")


class TestLoadCsv:
    def test_well_formed_three_rows(self, tmp_path):
        path = write_csv(
            tmp_path / "a.csv",
            [
                ("2013-06-01 00:00:00", "1.5"),
                ("2013-06-01 00:30:00", "2.5"),
                ("2013-06-01 01:00:00", "3.5"),
            ],
        )
        series = load_csv(path, SCHEMA)
        assert len(series) == 3
        assert series.interval_minutes == 30
        assert np.array_equal(series.values, [1.5, 2.5, 3.5])
        assert series.gaps == ()

    def test_shuffled_rows_match_sorted(self, tmp_path):
        rows = [
            ("2013-06-01 01:00:00", "3.5"),
            ("2013-06-01 00:00:00", "1.5"),
            ("2013-06-01 00:30:00", "2.5"),
        ]
        a = load_csv(write_csv(tmp_path / "shuffled.csv", rows), SCHEMA)
        b = load_csv(write_csv(tmp_path / "sorted.csv", sorted(rows)), SCHEMA)
        assert np.array_equal(a.values, b.values)
        assert a.start == b.start

    def test_duplicate_timestamps_averaged(self, tmp_path):
        path = write_csv(
            tmp_path / "dup.csv",
            [
                ("2013-06-01 00:00:00", "2.0"),
                ("2013-06-01 00:00:00", "4.0"),
                ("2013-06-01 00:30:00", "5.0"),
            ],
        )
        series = load_csv(path, SCHEMA)
        assert len(series) == 2
        assert series.values[0] == 3.0

    def test_unparseable_row_reports_line_number(self, tmp_path):
        path = write_csv(
            tmp_path / "bad.csv",
            [("2013-06-01 00:00:00", "1.0"), ("not-a-date", "2.0")],
        )
        with pytest.raises(ParseError) as err:
            load_csv(path, SCHEMA)
        assert err.value.line_number == 3
        assert ":3:" in str(err.value)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(InputError):
            load_csv(path, SCHEMA)
        header_only = write_csv(tmp_path / "header.csv", [])
        with pytest.raises(InputError):
            load_csv(header_only, SCHEMA)

    def test_gap_reported_as_nan(self, tmp_path):
        path = write_csv(
            tmp_path / "gap.csv",
            [
                ("2013-06-01 00:00:00", "1.0"),
                ("2013-06-01 01:30:00", "4.0"),  # 00:30 and 01:00 missing
            ],
        )
        series = load_csv(path, CsvSchema("timestamp", "load", interval_minutes=30))
        assert len(series) == 4
        assert np.isnan(series.values[1]) and np.isnan(series.values[2])
        assert len(series.gaps) == 1

    def test_entity_filter(self, tmp_path):
        path = write_csv(
            tmp_path / "multi.csv",
            [
                ("2013-06-01 00:00:00", "1.0", "h1"),
                ("2013-06-01 00:00:00", "9.0", "h2"),
                ("2013-06-01 00:30:00", "2.0", "h1"),
            ],
            header=("timestamp", "load", "house"),
        )
        schema = CsvSchema("timestamp", "load", entity_column="house")
        series = load_csv(path, schema, entity="h1")
        assert np.array_equal(series.values, [1.0, 2.0])

    def test_deterministic(self, tmp_path):
        rows = [("2013-06-01 00:00:00", "1.0"), ("2013-06-01 00:30:00", "2.0")]
        path = write_csv(tmp_path / "d.csv", rows)
        a, b = load_csv(path, SCHEMA), load_csv(path, SCHEMA)
        assert np.array_equal(a.values, b.values) and a.start == b.start

    def test_custom_delimiter(self, tmp_path):
        rows = [("2013-06-01 00:00:00", "1.0"), ("2013-06-01 00:30:00", "2.0")]
        path = write_csv(tmp_path / "semi.csv", rows, delimiter=";")
        series = load_csv(path, CsvSchema("timestamp", "load", delimiter=";"))
        assert np.array_equal(series.values, [1.0, 2.0])


class TestResample:
    def test_constant_series(self):
        series = make_series(60, interval=1, values=np.full(60, 3.0), annotate=False)
        out = resample_average(series, 30)
        assert out.interval_minutes == 30
        assert np.array_equal(out.values, [3.0, 3.0])

    def test_thirty_readings_average(self):
        series = make_series(
            30, interval=1, values=np.arange(1.0, 31.0), annotate=False
        )
        out = resample_average(series, 30)
        assert len(out) == 1
        assert out.values[0] == 15.5

    def test_non_integer_ratio_rejected(self):
        series = make_series(100, interval=7, annotate=False)
        with pytest.raises(ConfigError):
            resample_average(series, 30)

    def test_energy_preserved_on_full_buckets(self):
        values = 1.0 + np.arange(120.0) * 0.3
        series = make_series(120, interval=1, values=values, annotate=False)
        out = resample_average(series, 30)
        assert out.values.sum() * 30 == pytest.approx(values.sum(), rel=1e-12)

    def test_partial_edge_buckets(self):
        # starts at 00:07: first bucket holds 23 readings, clock-aligned
        values = np.ones(23 + 60)
        series = make_series(
            len(values), interval=1, start="2013-06-01T00:07", values=values, annotate=False
        )
        kept = resample_average(series, 30)
        assert len(kept) == 3  # partial head averaged in
        assert str(kept.start) == "2013-06-01T00:00"
        trimmed = resample_average(series, 30, trim_partial_edges=True)
        assert len(trimmed) == 2
        assert str(trimmed.start) == "2013-06-01T00:30"

    def test_ampds_shaped_year_yields_17483_points(self):
        # one year of minute data with ragged ends, the household-meter shape:
        # trimming incomplete edge buckets leaves the published point count
        n = 23 + 17483 * 30 + 17
        series = make_series(
            n, interval=1, start="2012-04-01T00:07", values=np.ones(n), annotate=False
        )
        out = resample_average(series, 30, trim_partial_edges=True)
        assert len(out) == 17483


class TestOffsetAndCalendar:
    def test_offset_values(self):
        series = make_series(3, values=np.array([0.0, 2.5, 1.0]), annotate=False)
        out = apply_offset(series, 0.1)
        assert np.allclose(out.values, [0.1, 2.6, 1.1])
        assert out.values.min() >= 0.1

    def test_calendar_facts(self):
        series = make_series(100, start="2013-08-23T00:00", interval=30)
        assert series.slots[0] == 0
        assert series.weekdays[0] == 4  # Friday
        assert series.holidays[0] == 0
        # 2013-08-24 is a Saturday: records 48.. are holiday
        assert series.holidays[48] == 1
        # 13:30 at 30-minute resolution is slot 27
        idx = 27
        assert series.slots[idx] == 27

    def test_idempotent(self):
        series = make_series(100)
        again = annotate_calendar(series)
        assert np.array_equal(series.slots, again.slots)
        assert np.array_equal(series.weekdays, again.weekdays)
        assert np.array_equal(series.holidays, again.holidays)


class TestSplit:
    def test_sgsc_preset_test_days(self):
        # full SGSC span at 30 minutes; the test range covers 9 days
        n_days = (np.datetime64("2013-09-01") - np.datetime64("2013-06-01")).astype(int)
        series = make_series(n_days * 48, start="2013-06-01T00:00", interval=30)
        train, val, test = split(series, preset("sgsc").split_spec)
        assert len(test) == 9 * 48
        assert len(test) * 69 == 29808  # published evaluation-point count
        assert len(train) + len(val) + len(test) == len(series)

    def test_month_wise_partition(self):
        series = make_series(30 * 48, start="2013-06-01T00:00", interval=30)  # June: 30 days
        train, val, test = split(series, SplitSpec(mode="month-wise"))
        assert len(train) == 21 * 48
        assert len(val) == 5 * 48
        assert len(test) == 4 * 48

    def test_partition_property(self):
        series = make_series(500, start="2013-06-01T00:00", interval=60)
        spec = SplitSpec(
            mode="date-ranges",
            ranges=(
                (np.datetime64("2013-06-02").astype("O"), np.datetime64("2013-06-08").astype("O")),
                (np.datetime64("2013-06-09").astype("O"), np.datetime64("2013-06-12").astype("O")),
                (np.datetime64("2013-06-13").astype("O"), np.datetime64("2013-06-15").astype("O")),
            ),
        )
        train, val, test = split(series, spec)
        sets = [set(p.indices.tolist()) for p in (train, val, test)]
        assert not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])
        days = series.timestamps().astype("datetime64[D]")
        in_span = set(
            np.flatnonzero(
                (days >= np.datetime64("2013-06-02")) & (days <= np.datetime64("2013-06-15"))
            ).tolist()
        )
        assert sets[0] | sets[1] | sets[2] == in_span

    def test_overlapping_ranges_rejected(self):
        with pytest.raises(ConfigError):
            SplitSpec(
                mode="date-ranges",
                ranges=(
                    (np.datetime64("2013-06-01").astype("O"), np.datetime64("2013-06-10").astype("O")),
                    (np.datetime64("2013-06-05").astype("O"), np.datetime64("2013-06-12").astype("O")),
                    (np.datetime64("2013-06-13").astype("O"), np.datetime64("2013-06-15").astype("O")),
                ),
            )

    def test_out_of_span_range_rejected(self):
        series = make_series(48, start="2013-06-01T00:00", interval=30)
        spec = SplitSpec(
            mode="date-ranges",
            ranges=(
                (np.datetime64("2013-06-01").astype("O"), np.datetime64("2013-06-01").astype("O")),
                (np.datetime64("2013-06-02").astype("O"), np.datetime64("2013-06-03").astype("O")),
                (np.datetime64("2013-07-01").astype("O"), np.datetime64("2013-07-02").astype("O")),
            ),
        )
        with pytest.raises(ConfigError):
            split(series, spec)


class TestCanonicalCache:
    def test_round_trip(self, tmp_path):
        values = np.array([1.5, np.nan, 2.25, 0.1])
        series = make_series(4, values=values, interval=30)
        path = tmp_path / "cache.csv"
        write_canonical(series, path)
        back = read_canonical(path)
        assert back.interval_minutes == 30
        assert back.start == series.start
        assert np.array_equal(np.isnan(back.values), np.isnan(values))
        finite = np.isfinite(values)
        assert np.array_equal(back.values[finite], values[finite])
        assert np.array_equal(back.slots, series.slots)

    def test_header_matches_documented_format(self, tmp_path):
        series = make_series(2)
        path = tmp_path / "c.csv"
        write_canonical(series, path)
        assert path.read_text().splitlines()[0] == "timestamp,load,slot,weekday,holiday"


class TestPresets:
    def test_precon_preset_pipeline(self):
        minutes = 3 * 1440
        values = np.zeros(minutes)  # outage-like zeros
        series = make_series(minutes, interval=1, values=values, annotate=False,
                             start="2018-06-01T00:00")
        out = preprocess(series, preset("precon"))
        assert out.interval_minutes == 30
        assert np.all(out.values >= 0.1)  # offset clears zero targets
        assert out.is_annotated()

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("nosuch")

    def test_ercot_is_hourly(self):
        p = preset("ercot")
        assert p.schema.interval_minutes == 60
