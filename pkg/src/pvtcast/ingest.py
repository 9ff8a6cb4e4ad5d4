"""Ingestion: CSV parsing, heat computation, 3h aggregation, day assembly.

Raw inputs are two CSV series (collector instrumentation and regional
weather). This module turns them into DayWindow objects: per-window heat
energy labels derived from flow and temperature lift, and per-window
weather features. Out-of-range sensor values are kept but flagged
invalid; a window whose invalid/uncovered time exceeds a configurable
limit gets a masked label rather than a guessed one.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta
from typing import Iterable, Sequence

import numpy as np

from pvtcast.core import (
    DAY_SECONDS,
    DEFAULT_DAY_OFFSET_MINUTES,
    STEPS_PER_DAY,
    TEMP_MAX_C,
    TEMP_MIN_C,
    WINDOW_SECONDS,
    DayWindow,
    InputError,
    SensorRecord,
    Timestamp,
    WeatherRecord,
    day_span_start,
)
from pvtcast.timefeat import window_clear_sky

log = logging.getLogger(__name__)

SENSOR_HEADER = ("ts", "t_in", "t_out", "flow", "solar_rad", "ambient_temp")
WEATHER_HEADER = ("ts", "temp", "humidity", "pressure", "wind_speed", "rain", "snow")

# per-window weather aggregates, the day ordinal as a trend input, and an
# engineered irradiance proxy: clear-sky solar geometry scaled by the
# humidity-implied clearness (the first feature any solar forecaster builds)
FEATURE_NAMES = (
    "temperature_mean",
    "humidity_mean",
    "pressure_mean",
    "wind_speed_mean",
    "rain_sum",
    "snow_sum",
    "day_index",
    "irradiance_proxy",
)
WEATHER_FEATURE_COUNT = 6
HUMIDITY_COLUMN = 1
DAY_INDEX_COLUMN = 6
IRRADIANCE_PROXY_COLUMN = 7

DEFAULT_MASKED_TIME_LIMIT = 0.25

_EPOCH_DATE = Date(1970, 1, 1)


@dataclass(frozen=True)
class QpvtParams:
    """Constants for converting flow and temperature lift to heat rate."""

    specific_heat: float = 4186.0  # J/(kg*K), water
    collector_area: float = 8.6  # m2, informational

    def __post_init__(self) -> None:
        if self.specific_heat <= 0:
            raise ValueError(f"specific_heat must be positive, got {self.specific_heat}")


def day_index_of(date: Date) -> float:
    """Days since 1970-01-01; the always-observed trend feature."""
    return float((date - _EPOCH_DATE).days)


# ---------------------------------------------------------------- parsing


def _parse_cell(raw: str, field: str, line_no: int) -> tuple[float, bool]:
    """A CSV cell as (value, valid). Empty means missing; junk is an error."""
    text = raw.strip()
    if not text:
        return (math.nan, False)
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"line {line_no}: field {field!r} is not a number: {raw!r}") from None
    if not math.isfinite(value):
        return (value, False)
    return (value, True)


def _read_rows(path, expected_header: Sequence[str]):
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, expected header {','.join(expected_header)}")
        if tuple(h.strip() for h in header) != tuple(expected_header):
            raise InputError(
                f"{path}: header mismatch: expected {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(expected_header):
                raise InputError(
                    f"{path} line {line_no}: expected {len(expected_header)} fields, "
                    f"got {len(row)}"
                )
            yield line_no, row


def _check_monotone(prev: Timestamp | None, ts: Timestamp, path, line_no: int) -> None:
    if prev is not None and ts.epoch_seconds <= prev.epoch_seconds:
        raise InputError(f"{path} line {line_no}: timestamps must be strictly increasing")


def parse_sensor_csv(path) -> list[SensorRecord]:
    """Load collector instrumentation rows, flagging bad values instead of dropping rows."""
    records: list[SensorRecord] = []
    prev: Timestamp | None = None
    for line_no, row in _read_rows(path, SENSOR_HEADER):
        try:
            ts = Timestamp.from_iso(row[0])
        except InputError as exc:
            raise InputError(f"{path} line {line_no}: {exc}") from None
        _check_monotone(prev, ts, path, line_no)
        prev = ts
        t_in, t_in_ok = _parse_cell(row[1], "t_in", line_no)
        t_out, t_out_ok = _parse_cell(row[2], "t_out", line_no)
        flow, flow_ok = _parse_cell(row[3], "flow", line_no)
        solar, solar_ok = _parse_cell(row[4], "solar_rad", line_no)
        ambient, ambient_ok = _parse_cell(row[5], "ambient_temp", line_no)
        # out-of-range readings are sensor glitches: keep the value, drop the flag
        if t_in_ok and not (TEMP_MIN_C <= t_in <= TEMP_MAX_C):
            t_in_ok = False
        if t_out_ok and not (TEMP_MIN_C <= t_out <= TEMP_MAX_C):
            t_out_ok = False
        if flow_ok and flow < 0:
            flow_ok = False
        records.append(
            SensorRecord(
                ts=ts,
                t_in=t_in,
                t_out=t_out,
                flow=flow,
                solar_radiation=solar,
                ambient_temp=ambient,
                t_in_ok=t_in_ok,
                t_out_ok=t_out_ok,
                flow_ok=flow_ok,
                solar_radiation_ok=solar_ok,
                ambient_temp_ok=ambient_ok,
            )
        )
    return records


def parse_weather_csv(path) -> list[WeatherRecord]:
    """Load weather rows; physically impossible values are flagged invalid."""
    records: list[WeatherRecord] = []
    prev: Timestamp | None = None
    for line_no, row in _read_rows(path, WEATHER_HEADER):
        try:
            ts = Timestamp.from_iso(row[0])
        except InputError as exc:
            raise InputError(f"{path} line {line_no}: {exc}") from None
        _check_monotone(prev, ts, path, line_no)
        prev = ts
        temp, temp_ok = _parse_cell(row[1], "temp", line_no)
        hum, hum_ok = _parse_cell(row[2], "humidity", line_no)
        pres, pres_ok = _parse_cell(row[3], "pressure", line_no)
        wind, wind_ok = _parse_cell(row[4], "wind_speed", line_no)
        rain, rain_ok = _parse_cell(row[5], "rain", line_no)
        snow, snow_ok = _parse_cell(row[6], "snow", line_no)
        if hum_ok and not (0.0 <= hum <= 100.0):
            hum_ok = False
        if rain_ok and rain < 0:
            rain_ok = False
        if snow_ok and snow < 0:
            snow_ok = False
        records.append(
            WeatherRecord(
                ts=ts,
                temperature=temp,
                humidity=hum,
                pressure=pres,
                wind_speed=wind,
                rain_accum=rain,
                snow_accum=snow,
                temperature_ok=temp_ok,
                humidity_ok=hum_ok,
                pressure_ok=pres_ok,
                wind_speed_ok=wind_ok,
                rain_accum_ok=rain_ok,
                snow_accum_ok=snow_ok,
            )
        )
    return records


# ------------------------------------------------------------ heat labels


def compute_qpvt_power(record: SensorRecord, params: QpvtParams) -> float | None:
    """Instantaneous heat rate in W, or None when any input is invalid.

    Negative rates (reverse flow, nighttime cooling) count as zero
    production rather than negative production.
    """
    if not (record.flow_ok and record.t_in_ok and record.t_out_ok):
        return None
    power = record.flow * params.specific_heat * (record.t_out - record.t_in)
    return max(power, 0.0)


def aggregate_power_windows(
    samples: Sequence[tuple[Timestamp, float | None]],
    span_start: Timestamp,
    masked_limit: float = DEFAULT_MASKED_TIME_LIMIT,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-window energies (kWh) and label mask for one day span.

    Each sample's value holds from its own timestamp until the next
    sample (step interpolation); time after the final sample or before
    the first is uncovered. A window is masked when invalid plus
    uncovered time exceeds ``masked_limit`` of its 3 hours; otherwise the
    integral over covered time is rescaled to the full window.
    """
    if not 0.0 <= masked_limit < 1.0:
        raise ValueError(f"masked_limit must be in [0, 1), got {masked_limit}")
    times = np.array([ts.epoch_seconds for ts, _ in samples], dtype=np.int64)
    if times.size and np.any(np.diff(times) <= 0):
        raise ValueError("samples must be strictly increasing in time")
    powers = np.array(
        [0.0 if p is None else p for _, p in samples], dtype=np.float64
    )
    valid = np.array([p is not None for _, p in samples], dtype=bool)

    energies = np.zeros(STEPS_PER_DAY, dtype=np.float64)
    mask = np.zeros(STEPS_PER_DAY, dtype=bool)
    base = span_start.epoch_seconds
    for step in range(STEPS_PER_DAY):
        w0 = base + step * WINDOW_SECONDS
        w1 = w0 + WINDOW_SECONDS
        if times.size == 0:
            continue
        # samples whose hold segment [t_i, t_{i+1}) can overlap [w0, w1)
        first = max(int(np.searchsorted(times, w0, side="right")) - 1, 0)
        last = int(np.searchsorted(times, w1, side="left"))
        if last <= first:
            continue
        seg_start = times[first:last]
        nxt = times[first + 1 : last + 1]
        # the final sample holds nothing: its segment is zero-length
        seg_end = np.concatenate([nxt, seg_start[nxt.size :]])
        lo = np.maximum(seg_start, w0)
        hi = np.minimum(seg_end, w1)
        dur = np.clip(hi - lo, 0, None).astype(np.float64)
        window_valid = valid[first:last]
        # fsum keeps the integral exactly rounded, independent of term order
        observed = math.fsum(dur[window_valid])
        masked_time = float(WINDOW_SECONDS) - observed
        if masked_time / WINDOW_SECONDS > masked_limit or observed == 0.0:
            continue
        integral = math.fsum((powers[first:last] * dur)[window_valid])
        energies[step] = integral * (WINDOW_SECONDS / observed) / 3.6e6
        mask[step] = True
    return energies, mask


# --------------------------------------------------------------- features


def aggregate_weather(
    records: Sequence[WeatherRecord],
    span_start: Timestamp,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-window weather aggregates: (8, 6) features and observation mask.

    Temperature, humidity, pressure and wind are averaged over the valid
    samples falling inside each window; rain and snow accumulations are
    summed. A feature with no valid sample in a window is masked.
    """
    times = np.array([r.ts.epoch_seconds for r in records], dtype=np.int64)
    features = np.zeros((STEPS_PER_DAY, WEATHER_FEATURE_COUNT), dtype=np.float64)
    mask = np.zeros((STEPS_PER_DAY, WEATHER_FEATURE_COUNT), dtype=bool)
    base = span_start.epoch_seconds
    field_ops = (
        ("temperature", "mean"),
        ("humidity", "mean"),
        ("pressure", "mean"),
        ("wind_speed", "mean"),
        ("rain_accum", "sum"),
        ("snow_accum", "sum"),
    )
    for step in range(STEPS_PER_DAY):
        w0 = base + step * WINDOW_SECONDS
        w1 = w0 + WINDOW_SECONDS
        i0 = int(np.searchsorted(times, w0, side="left"))
        i1 = int(np.searchsorted(times, w1, side="left"))
        if i0 == i1:
            continue
        inside = records[i0:i1]
        for col, (field, op) in enumerate(field_ops):
            values = [getattr(r, field) for r in inside if getattr(r, f"{field}_ok")]
            if not values:
                continue
            total = math.fsum(values)
            features[step, col] = total / len(values) if op == "mean" else total
            mask[step, col] = True
    return features, mask


# ------------------------------------------------------------- assembly


def _step_times(span_start: Timestamp) -> tuple[Timestamp, ...]:
    return tuple(span_start.shifted(WINDOW_SECONDS * s) for s in range(STEPS_PER_DAY))


def assemble_features(
    date: Date,
    step_times: Sequence[Timestamp],
    weather: np.ndarray,
    weather_mask: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Full per-day feature matrix and mask from the windowed weather block.

    Columns follow FEATURE_NAMES: the six weather aggregates, the always
    observed day ordinal, and the irradiance proxy — per-window clear-sky
    geometry times (1 - humidity/100), masked wherever humidity is.
    """
    features = np.zeros((STEPS_PER_DAY, len(FEATURE_NAMES)), dtype=np.float64)
    feature_mask = np.zeros((STEPS_PER_DAY, len(FEATURE_NAMES)), dtype=bool)
    features[:, :WEATHER_FEATURE_COUNT] = np.where(weather_mask, weather, 0.0)
    feature_mask[:, :WEATHER_FEATURE_COUNT] = weather_mask
    features[:, DAY_INDEX_COLUMN] = day_index_of(date)
    feature_mask[:, DAY_INDEX_COLUMN] = True
    geometry = np.array([window_clear_sky(ts) for ts in step_times])
    humidity = features[:, HUMIDITY_COLUMN]
    humidity_ok = feature_mask[:, HUMIDITY_COLUMN]
    proxy = geometry * (1.0 - humidity / 100.0)
    features[:, IRRADIANCE_PROXY_COLUMN] = np.where(humidity_ok, proxy, 0.0)
    feature_mask[:, IRRADIANCE_PROXY_COLUMN] = humidity_ok
    return features, feature_mask


def covered_dates(
    sensor_records: Sequence[SensorRecord],
    day_offset_minutes: int,
) -> list[Date]:
    """Calendar dates whose full window span lies inside the sensor series."""
    if not sensor_records:
        return []
    offset = sensor_records[0].ts.local_offset_minutes
    first = sensor_records[0].ts
    last = sensor_records[-1].ts
    dates = []
    day = first.local_date()
    end_day = last.local_date()
    while day <= end_day:
        start = day_span_start(day, offset, day_offset_minutes)
        if start.epoch_seconds >= first.epoch_seconds and (
            start.epoch_seconds + DAY_SECONDS <= last.epoch_seconds
        ):
            dates.append(day)
        day = day + timedelta(days=1)
    return dates


def build_dataset(
    sensor_records: Sequence[SensorRecord],
    weather_records: Sequence[WeatherRecord],
    day_offset_minutes: int = DEFAULT_DAY_OFFSET_MINUTES,
    qpvt_params: QpvtParams | None = None,
    masked_limit: float = DEFAULT_MASKED_TIME_LIMIT,
) -> list[DayWindow]:
    """Assemble one DayWindow per fully covered calendar day.

    Features are the six windowed weather aggregates, the day ordinal,
    and the irradiance proxy (see FEATURE_NAMES); labels are windowed
    heat energies. Partially covered edge days are skipped with a log
    message.
    """
    if not sensor_records:
        raise InputError("sensor series is empty; nothing to assemble")
    params = qpvt_params or QpvtParams()
    offset = sensor_records[0].ts.local_offset_minutes
    dates = covered_dates(sensor_records, day_offset_minutes)
    if not dates:
        raise InputError("sensor series does not cover a single full day span")
    total_days = (
        sensor_records[-1].ts.local_date() - sensor_records[0].ts.local_date()
    ).days + 1
    if total_days > len(dates):
        log.info("skipping %d partially covered edge day(s)", total_days - len(dates))

    power_samples = [(r.ts, compute_qpvt_power(r, params)) for r in sensor_records]
    days = []
    for day in dates:
        start = day_span_start(day, offset, day_offset_minutes)
        energies, label_mask = aggregate_power_windows(power_samples, start, masked_limit)
        weather, weather_mask = aggregate_weather(weather_records, start)
        step_times = _step_times(start)
        features, feature_mask = assemble_features(day, step_times, weather, weather_mask)
        days.append(
            DayWindow(
                date=day,
                step_times=step_times,
                features=features,
                feature_mask=feature_mask,
                qpvt_kwh=np.where(label_mask, energies, 0.0),
                label_mask=label_mask,
            )
        )
    return days


# ----------------------------------------------------------------- split


def split_train_test(days: Sequence[DayWindow]) -> tuple[list[DayWindow], list[DayWindow]]:
    """Hold out the last two calendar days present in every month.

    Months contributing fewer than 3 days go entirely to train (holding
    out 2 of 2 would leave nothing to learn the month from); a warning
    is logged for each.
    """
    by_month: dict[tuple[int, int], list[DayWindow]] = {}
    for day in sorted(days, key=lambda d: d.date):
        by_month.setdefault((day.date.year, day.date.month), []).append(day)
    train: list[DayWindow] = []
    test: list[DayWindow] = []
    for (year, month), month_days in sorted(by_month.items()):
        if len(month_days) < 3:
            log.warning(
                "month %04d-%02d has only %d day(s); keeping all in train",
                year,
                month,
                len(month_days),
            )
            train.extend(month_days)
            continue
        test_dates = {d.date for d in month_days[-2:]}
        for day in month_days:
            (test if day.date in test_dates else train).append(day)
    return train, test
