"""Domain type invariants: timestamps, records, windows, schemes."""

from datetime import date as Date
from datetime import datetime

import numpy as np
import pytest

from conftest import build_window
from pvtcast.core import (
    STEPS_PER_DAY,
    WINDOW_SECONDS,
    ClassDistribution,
    DayWindow,
    InputError,
    SensorRecord,
    ThresholdScheme,
    Timestamp,
    WeatherRecord,
    day_span_start,
    local_hour,
)


class TestTimestamp:
    def test_iso_round_trip_keeps_offset(self):
        ts = Timestamp.from_iso("2021-06-01T13:30:00+02:00")
        assert ts.local_offset_minutes == 120
        assert ts.to_iso() == "2021-06-01T13:30:00+02:00"

    def test_zulu_suffix_is_utc(self):
        ts = Timestamp.from_iso("2021-06-01T12:00:00Z")
        assert ts.local_offset_minutes == 0
        assert ts.epoch_seconds == Timestamp.from_iso("2021-06-01T13:00:00+01:00").epoch_seconds

    def test_missing_offset_rejected(self):
        with pytest.raises(InputError):
            Timestamp.from_iso("2021-06-01T12:00:00")

    def test_garbage_rejected(self):
        with pytest.raises(InputError):
            Timestamp.from_iso("yesterday")

    def test_ordering_uses_epoch_only(self):
        early = Timestamp.from_iso("2021-06-01T12:00:00+02:00")
        late = Timestamp.from_iso("2021-06-01T11:30:00+00:00")
        assert early < late
        assert late >= early

    def test_shifted(self):
        ts = Timestamp.from_iso("2021-06-01T00:00:00+01:00")
        assert ts.shifted(3600).to_iso() == "2021-06-01T01:00:00+01:00"

    def test_local_date_respects_offset(self):
        # 23:30 UTC on May 31 is already June 1 at +01:00
        ts = Timestamp.from_iso("2021-05-31T23:30:00Z")
        assert Timestamp(ts.epoch_seconds, 60).local_date() == Date(2021, 6, 1)

    def test_from_local(self):
        ts = Timestamp.from_local(datetime(2021, 6, 1, 1, 0), 60)
        assert ts.to_iso() == "2021-06-01T01:00:00+01:00"


def test_local_hour_fractional():
    ts = Timestamp.from_iso("2021-06-01T13:45:00+01:00")
    assert local_hour(ts) == pytest.approx(13.75, abs=1e-12)


def test_day_span_start_is_offset_past_local_midnight():
    start = day_span_start(Date(2021, 6, 1), offset_minutes=60, day_offset_minutes=60)
    assert start.to_iso() == "2021-06-01T01:00:00+01:00"
    assert local_hour(start) == pytest.approx(1.0)


class TestRecords:
    TS = Timestamp.from_iso("2021-06-01T12:00:00+01:00")

    def _sensor(self, **kw):
        base = dict(ts=self.TS, t_in=20.0, t_out=25.0, flow=0.1,
                    solar_radiation=500.0, ambient_temp=15.0)
        base.update(kw)
        return SensorRecord(**base)

    def test_valid_record(self):
        rec = self._sensor()
        assert rec.t_in_ok and rec.flow_ok

    def test_out_of_range_temp_must_be_flagged(self):
        with pytest.raises(ValueError):
            self._sensor(t_out=150.0)
        rec = self._sensor(t_out=150.0, t_out_ok=False)
        assert rec.t_out == 150.0 and not rec.t_out_ok

    def test_negative_flow_must_be_flagged(self):
        with pytest.raises(ValueError):
            self._sensor(flow=-0.1)

    def test_nonfinite_valid_value_rejected(self):
        with pytest.raises(ValueError):
            self._sensor(ambient_temp=float("nan"))

    def test_weather_humidity_range(self):
        base = dict(ts=self.TS, temperature=10.0, humidity=50.0, pressure=1013.0,
                    wind_speed=3.0, rain_accum=0.0, snow_accum=0.0)
        WeatherRecord(**base)
        with pytest.raises(ValueError):
            WeatherRecord(**{**base, "humidity": 120.0})
        rec = WeatherRecord(**{**base, "humidity": 120.0, "humidity_ok": False})
        assert not rec.humidity_ok

    def test_weather_negative_accumulation_rejected(self):
        base = dict(ts=self.TS, temperature=10.0, humidity=50.0, pressure=1013.0,
                    wind_speed=3.0, rain_accum=-1.0, snow_accum=0.0)
        with pytest.raises(ValueError):
            WeatherRecord(**base)


class TestDayWindow:
    def test_wrong_step_count(self):
        good = build_window()
        with pytest.raises(ValueError):
            DayWindow(
                date=good.date,
                step_times=good.step_times[:-1],
                features=good.features,
                feature_mask=good.feature_mask,
                qpvt_kwh=good.qpvt_kwh,
                label_mask=good.label_mask,
            )

    def test_step_times_must_be_three_hours_apart(self):
        good = build_window()
        times = list(good.step_times)
        times[3] = times[3].shifted(60)
        with pytest.raises(ValueError):
            DayWindow(
                date=good.date,
                step_times=tuple(times),
                features=good.features,
                feature_mask=good.feature_mask,
                qpvt_kwh=good.qpvt_kwh,
                label_mask=good.label_mask,
            )

    def test_nan_feature_rejected_even_when_masked(self):
        features = np.zeros((STEPS_PER_DAY, 2))
        features[0, 0] = np.nan
        mask = np.ones((STEPS_PER_DAY, 2), dtype=bool)
        mask[0, 0] = False
        with pytest.raises(ValueError):
            build_window(feature_count=2, features=features, feature_mask=mask)

    def test_negative_observed_energy_rejected(self):
        with pytest.raises(ValueError):
            build_window(qpvt=[-0.1] + [0.0] * 7)

    def test_negative_masked_energy_tolerated(self):
        mask = np.ones(STEPS_PER_DAY, dtype=bool)
        mask[0] = False
        day = build_window(qpvt=[-0.1] + [0.0] * 7, label_mask=mask)
        assert not day.label_mask[0]

    def test_arrays_are_read_only(self):
        day = build_window()
        with pytest.raises(ValueError):
            day.features[0, 0] = 1.0
        with pytest.raises(ValueError):
            day.label_mask[0] = False

    def test_step_duration_constant(self):
        day = build_window()
        deltas = {
            b.epoch_seconds - a.epoch_seconds
            for a, b in zip(day.step_times, day.step_times[1:])
        }
        assert deltas == {WINDOW_SECONDS}


class TestThresholdScheme:
    def test_valid(self):
        scheme = ThresholdScheme("max_margins", (0.05, 0.21, 0.53, 1.05))
        assert scheme.thresholds == (0.05, 0.21, 0.53, 1.05)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            ThresholdScheme("quantiles", (0.05, 0.2, 0.5, 1.0))

    def test_not_increasing(self):
        with pytest.raises(ValueError):
            ThresholdScheme("max_margins", (0.05, 0.5, 0.5, 1.0))

    def test_first_must_be_positive(self):
        with pytest.raises(ValueError):
            ThresholdScheme("max_margins", (0.0, 0.2, 0.5, 1.0))

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            ThresholdScheme("max_margins", (0.05, 0.2, 0.5))


class TestClassDistribution:
    def test_valid(self):
        dist = ClassDistribution((0.5, 0.2, 0.1, 0.1, 0.1))
        assert dist.as_array().sum() == pytest.approx(1.0)

    def test_sum_checked(self):
        with pytest.raises(ValueError):
            ClassDistribution((0.5, 0.2, 0.1, 0.1, 0.2))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ClassDistribution((1.1, -0.1, 0.0, 0.0, 0.0))

    def test_arity(self):
        with pytest.raises(ValueError):
            ClassDistribution((0.5, 0.5))
