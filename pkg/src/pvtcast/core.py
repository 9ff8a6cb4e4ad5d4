"""Shared domain types for the heat-band forecasting pipeline.

Unit conventions, fixed once at ingestion and used everywhere else:
temperatures in degC, flow in kg/s, power in W, window energies in kWh.
A day is modelled as 8 consecutive 3-hour windows; the grid is anchored
at local midnight plus a configurable offset (default 01:00 local).

All containers are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date as Date
from datetime import datetime, timedelta, timezone

import numpy as np

CLASS_COUNT = 5
STEPS_PER_DAY = 8
WINDOW_SECONDS = 3 * 3600
DAY_SECONDS = 24 * 3600
DEFAULT_DAY_OFFSET_MINUTES = 60  # window grid anchored at 01:00 local

# accepted water-temperature range; values outside are sensor glitches
TEMP_MIN_C = -20.0
TEMP_MAX_C = 100.0

JOULES_PER_KWH = 3.6e6

SCHEME_NAMES = ("balanced_ranges", "balanced_classes", "max_margins")


class PvtcastError(Exception):
    """Base class for package errors."""


class InputError(PvtcastError):
    """Bad user input: unreadable files, schema violations, degenerate data."""


class AllMaskedError(PvtcastError):
    """A series has no observed value, so interpolation is impossible."""


class TrainingDivergedError(PvtcastError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class Timestamp:
    """A point in time: UTC epoch seconds plus a fixed local offset.

    Local time is fully determined by the two fields; no time-zone
    database is consulted. Ordering compares epoch seconds only.
    """

    epoch_seconds: int
    local_offset_minutes: int

    def __lt__(self, other: "Timestamp") -> bool:
        return self.epoch_seconds < other.epoch_seconds

    def __le__(self, other: "Timestamp") -> bool:
        return self.epoch_seconds <= other.epoch_seconds

    def __gt__(self, other: "Timestamp") -> bool:
        return self.epoch_seconds > other.epoch_seconds

    def __ge__(self, other: "Timestamp") -> bool:
        return self.epoch_seconds >= other.epoch_seconds

    def shifted(self, seconds: int) -> "Timestamp":
        return Timestamp(self.epoch_seconds + seconds, self.local_offset_minutes)

    def local_datetime(self) -> datetime:
        tz = timezone(timedelta(minutes=self.local_offset_minutes))
        return datetime.fromtimestamp(self.epoch_seconds, tz=tz)

    def local_date(self) -> Date:
        return self.local_datetime().date()

    def to_iso(self) -> str:
        return self.local_datetime().isoformat()

    @classmethod
    def from_iso(cls, text: str) -> "Timestamp":
        """Parse an ISO-8601 timestamp with an explicit UTC offset."""
        raw = text.strip()
        if raw.endswith(("Z", "z")):
            raw = raw[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(raw)
        except ValueError as exc:
            raise InputError(f"invalid timestamp {text!r}: {exc}") from None
        if dt.tzinfo is None:
            raise InputError(f"timestamp {text!r} has no UTC offset")
        offset = dt.utcoffset()
        assert offset is not None
        return cls(int(dt.timestamp()), int(offset.total_seconds() // 60))

    @classmethod
    def from_local(cls, dt: datetime, offset_minutes: int) -> "Timestamp":
        """Interpret a naive datetime as local time at the given offset."""
        aware = dt.replace(tzinfo=timezone(timedelta(minutes=offset_minutes)))
        return cls(int(aware.timestamp()), offset_minutes)


def local_hour(ts: Timestamp) -> float:
    """Local hour of day in [0, 24), including the fractional part."""
    local_sec = (ts.epoch_seconds + ts.local_offset_minutes * 60) % DAY_SECONDS
    return local_sec / 3600.0


def day_span_start(day: Date, offset_minutes: int, day_offset_minutes: int) -> Timestamp:
    """Start of the window grid for a calendar day: local midnight + grid offset."""
    midnight = datetime(day.year, day.month, day.day)
    anchor = midnight + timedelta(minutes=day_offset_minutes)
    return Timestamp.from_local(anchor, offset_minutes)


def _require_finite_when_valid(name: str, value: float, valid: bool) -> None:
    if valid and not math.isfinite(value):
        raise ValueError(f"{name} flagged valid but is not finite: {value!r}")


@dataclass(frozen=True)
class SensorRecord:
    """One row of collector instrumentation, with per-field validity flags.

    Out-of-range temperatures are retained (for diagnostics) but must be
    flagged invalid; the constructor enforces that consistency.
    """

    ts: Timestamp
    t_in: float  # degC
    t_out: float  # degC
    flow: float  # kg/s
    solar_radiation: float  # W/m2
    ambient_temp: float  # degC
    t_in_ok: bool = True
    t_out_ok: bool = True
    flow_ok: bool = True
    solar_radiation_ok: bool = True
    ambient_temp_ok: bool = True

    def __post_init__(self) -> None:
        for name in ("t_in", "t_out"):
            value, valid = getattr(self, name), getattr(self, f"{name}_ok")
            _require_finite_when_valid(name, value, valid)
            if valid and not (TEMP_MIN_C <= value <= TEMP_MAX_C):
                raise ValueError(
                    f"{name}={value} is outside [{TEMP_MIN_C}, {TEMP_MAX_C}] degC "
                    "but flagged valid"
                )
        for name in ("flow", "solar_radiation", "ambient_temp"):
            _require_finite_when_valid(name, getattr(self, name), getattr(self, f"{name}_ok"))
        if self.flow_ok and self.flow < 0:
            raise ValueError(f"flow={self.flow} is negative but flagged valid")


WEATHER_FIELDS = ("temperature", "humidity", "pressure", "wind_speed", "rain_accum", "snow_accum")


@dataclass(frozen=True)
class WeatherRecord:
    """One row of regional weather data, the shape weather forecasts come in."""

    ts: Timestamp
    temperature: float  # degC
    humidity: float  # %RH
    pressure: float  # hPa
    wind_speed: float  # m/s
    rain_accum: float  # mm
    snow_accum: float  # mm
    temperature_ok: bool = True
    humidity_ok: bool = True
    pressure_ok: bool = True
    wind_speed_ok: bool = True
    rain_accum_ok: bool = True
    snow_accum_ok: bool = True

    def __post_init__(self) -> None:
        for name in WEATHER_FIELDS:
            _require_finite_when_valid(name, getattr(self, name), getattr(self, f"{name}_ok"))
        if self.humidity_ok and not (0.0 <= self.humidity <= 100.0):
            raise ValueError(f"humidity={self.humidity} outside [0, 100] but flagged valid")
        for name in ("rain_accum", "snow_accum"):
            if getattr(self, f"{name}_ok") and getattr(self, name) < 0:
                raise ValueError(f"{name}={getattr(self, name)} negative but flagged valid")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DayWindow:
    """One day as 8 three-hour steps of features and energy labels.

    ``features`` is an 8 x F matrix with ``feature_mask`` marking observed
    entries; ``qpvt_kwh`` holds per-window heat production with
    ``label_mask`` marking windows whose ground truth was computable.
    Masked entries are written as 0 by the pipeline, but no consumer may
    rely on that sentinel: anything behind a false mask is meaningless.
    """

    date: Date
    step_times: tuple[Timestamp, ...]
    features: np.ndarray  # (8, F) float64
    feature_mask: np.ndarray  # (8, F) bool
    qpvt_kwh: np.ndarray  # (8,) float64, kWh
    label_mask: np.ndarray  # (8,) bool

    def __post_init__(self) -> None:
        if len(self.step_times) != STEPS_PER_DAY:
            raise ValueError(f"expected {STEPS_PER_DAY} step times, got {len(self.step_times)}")
        for prev, cur in zip(self.step_times, self.step_times[1:]):
            if cur.epoch_seconds - prev.epoch_seconds != WINDOW_SECONDS:
                raise ValueError("step times must be consecutive 3-hour window starts")
        object.__setattr__(self, "step_times", tuple(self.step_times))
        feats = _frozen_array(self.features, np.float64)
        fmask = _frozen_array(self.feature_mask, bool)
        qpvt = _frozen_array(self.qpvt_kwh, np.float64)
        lmask = _frozen_array(self.label_mask, bool)
        if feats.ndim != 2 or feats.shape[0] != STEPS_PER_DAY:
            raise ValueError(f"features must be ({STEPS_PER_DAY}, F), got {feats.shape}")
        if fmask.shape != feats.shape:
            raise ValueError("feature_mask shape must match features")
        if qpvt.shape != (STEPS_PER_DAY,) or lmask.shape != (STEPS_PER_DAY,):
            raise ValueError("qpvt_kwh and label_mask must have 8 entries")
        # masked entries may hold any sentinel, but it must stay finite so
        # that exact-zero masking (0 * sentinel) is well defined downstream
        if not np.isfinite(feats).all() or not np.isfinite(qpvt).all():
            raise ValueError("features and qpvt_kwh must be finite everywhere")
        if np.any(qpvt[lmask] < 0):
            raise ValueError("observed qpvt_kwh must be non-negative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "feature_mask", fmask)
        object.__setattr__(self, "qpvt_kwh", qpvt)
        object.__setattr__(self, "label_mask", lmask)

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ThresholdScheme:
    """Four ordered energy cut points defining 5 production bands (kWh)."""

    name: str
    thresholds: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if self.name not in SCHEME_NAMES:
            raise ValueError(f"unknown scheme name {self.name!r}; expected one of {SCHEME_NAMES}")
        thr = tuple(float(t) for t in self.thresholds)
        if len(thr) != 4:
            raise ValueError(f"expected 4 thresholds, got {len(thr)}")
        if thr[0] <= 0:
            raise ValueError("first threshold must be positive")
        if any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValueError(f"thresholds must be strictly increasing, got {thr}")
        object.__setattr__(self, "thresholds", thr)


@dataclass(frozen=True)
class ClassDistribution:
    """Predicted likelihoods over the 5 production bands."""

    probs: tuple[float, float, float, float, float] = field()

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        if len(probs) != CLASS_COUNT:
            raise ValueError(f"expected {CLASS_COUNT} probabilities, got {len(probs)}")
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ValueError(f"probabilities must lie in [0, 1], got {probs}")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise ValueError(f"probabilities must sum to 1 within 1e-6, got sum {sum(probs)}")
        object.__setattr__(self, "probs", probs)

    def as_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=np.float64)
