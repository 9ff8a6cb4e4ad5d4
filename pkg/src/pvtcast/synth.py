"""Seeded synthetic year: collector sensors, weather, and ground truth.

The generator plays the role of the (private) pilot installation. A
latitude-driven clear-sky irradiance model is attenuated by a per-day
Markov cloud state with smooth intraday variation; the collector turns
its pump on under sufficient irradiance and produces heat following an
efficiency that degrades slowly over the year. Weather variables are
noisy views of the same cloudiness, so they genuinely inform the label.

Corruption is applied after the clean signals are fixed, from separate
random streams: bursts of out-of-range temperatures knock out whole
label windows (the configured fraction), occasional isolated spikes add
realism, and weather features drop out per window. Ground truth window
energies are computed from the clean stream with an independent
exactly-rounded integrator, so they can be compared bit-for-bit against
the ingestion pipeline run on the uncorrupted stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta
from pathlib import Path

import numpy as np

from pvtcast.core import DAY_SECONDS, STEPS_PER_DAY, WINDOW_SECONDS, Timestamp, day_span_start

SENSOR_HEADER_LINE = "ts,t_in,t_out,flow,solar_rad,ambient_temp"
WEATHER_HEADER_LINE = "ts,temp,humidity,pressure,wind_speed,rain,snow"
TRUTH_HEADER_LINE = "date,window,qpvt_kwh"

PUMP_ON_IRRADIANCE = 60.0  # W/m2

# cloud states: clear, partly cloudy, overcast
_CLOUD_TRANSITIONS = (
    (0.60, 0.30, 0.10),
    (0.25, 0.50, 0.25),
    (0.15, 0.35, 0.50),
)
_ATTENUATION_BASE = (0.95, 0.55, 0.20)
_ATTENUATION_AMP = (0.05, 0.30, 0.12)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    days: int = 365
    start_date: Date = Date(2021, 1, 1)
    utc_offset_minutes: int = 60
    day_offset_minutes: int = 60
    latitude_deg: float = 48.0
    peak_irradiance: float = 950.0  # W/m2, clear summer noon
    base_efficiency: float = 0.155
    degradation_per_year: float = 0.05
    collector_area: float = 8.6  # m2
    flow_rate: float = 0.075  # kg/s while the pump runs
    specific_heat: float = 4186.0  # J/(kg*K)
    loss_coefficient: float = 4.0  # W/K against ambient
    noise_std_w: float = 40.0
    missing_fraction: float = 0.15  # share of label windows knocked out
    spike_rate: float = 0.002  # isolated out-of-range samples
    weather_missing_fraction: float = 0.12  # per (window, feature)
    sensor_cadence_s: int = 600
    weather_cadence_s: int = 3600

    def __post_init__(self) -> None:
        if self.days < 1:
            raise ValueError("days must be positive")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        if not 0.0 < self.base_efficiency <= 1.0:
            raise ValueError("base_efficiency must lie in (0, 1]")
        if WINDOW_SECONDS % self.sensor_cadence_s != 0:
            raise ValueError("sensor cadence must divide the 3h window")
        if WINDOW_SECONDS % self.weather_cadence_s != 0:
            raise ValueError("weather cadence must divide the 3h window")
        if self.day_offset_minutes * 60 % self.sensor_cadence_s != 0:
            raise ValueError("day offset must be a multiple of the sensor cadence")


@dataclass(frozen=True)
class SynthData:
    """One generated year, plus the uncorrupted stream for verification."""

    sensor_csv: str
    weather_csv: str
    truth_csv: str
    clean_sensor_csv: str
    truth_kwh: np.ndarray  # (days, 8)


@dataclass(frozen=True)
class _DayParams:
    cloud_state: int
    atten_base: float
    atten_amp: float
    atten_period_h: float
    atten_phase: float
    sunrise: float
    sunset: float
    clear_peak: float
    pressure_walk: float
    t_in_base: float
    seasonal_temp: float


def _fmt(value) -> str:
    # repr of a Python float round-trips exactly; numpy scalars do not
    return repr(float(value))


def _declination_deg(day_of_year: float) -> float:
    return -23.44 * math.cos(2.0 * math.pi * (day_of_year + 10.0) / 365.25)


def _day_parameters(cfg: SynthConfig, rng: np.random.Generator, total: int) -> list[_DayParams]:
    params = []
    state = 0
    walk = 0.0
    lat = math.radians(cfg.latitude_deg)
    for d in range(total):
        roll = rng.random()
        acc = 0.0
        for nxt, p in enumerate(_CLOUD_TRANSITIONS[state]):
            acc += p
            if roll < acc:
                state = nxt
                break
        date = cfg.start_date + timedelta(days=d)
        doy = date.timetuple().tm_yday - 1
        decl = math.radians(_declination_deg(doy))
        cos_half = max(-1.0, min(1.0, -math.tan(lat) * math.tan(decl)))
        daylight = 2.0 * math.degrees(math.acos(cos_half)) / 15.0
        noon_factor = max(math.cos(lat - decl), 0.0)
        walk += rng.normal(0.0, 1.5)
        walk *= 0.9  # mean-reverting so pressure stays plausible
        seasonal = -math.cos(2.0 * math.pi * (doy - 15.0) / 365.25)
        params.append(
            _DayParams(
                cloud_state=state,
                atten_base=_ATTENUATION_BASE[state] + rng.normal(0.0, 0.03),
                atten_amp=_ATTENUATION_AMP[state],
                atten_period_h=rng.uniform(3.0, 8.0),
                atten_phase=rng.uniform(0.0, 2.0 * math.pi),
                sunrise=12.0 - daylight / 2.0,
                sunset=12.0 + daylight / 2.0,
                clear_peak=cfg.peak_irradiance * noon_factor,
                pressure_walk=walk,
                t_in_base=24.0 + 5.0 * seasonal + rng.normal(0.0, 1.0),
                seasonal_temp=10.0 + 11.0 * seasonal,
            )
        )
    return params


def _attenuation(day: _DayParams, hour: float) -> float:
    wave = day.atten_amp * math.sin(
        2.0 * math.pi * hour / day.atten_period_h + day.atten_phase
    )
    return min(max(day.atten_base + wave, 0.05), 1.0)


def _irradiance(day: _DayParams, hour: float) -> float:
    if not day.sunrise < hour < day.sunset:
        return 0.0
    shape = math.sin(math.pi * (hour - day.sunrise) / (day.sunset - day.sunrise))
    return day.clear_peak * max(shape, 0.0) * _attenuation(day, hour)


def _ambient(day: _DayParams, hour: float) -> float:
    cloudiness = 1.0 - _attenuation(day, hour)
    diurnal = 4.0 * math.sin(2.0 * math.pi * (hour - 9.0) / 24.0)
    return day.seasonal_temp + diurnal * (1.0 - 0.5 * cloudiness) - 2.0 * cloudiness


def generate_year(cfg: SynthConfig) -> SynthData:
    signal_rng, burst_rng, weather_drop_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3)
    )
    # one extra day of parameters: the final span spills past midnight
    day_params = _day_parameters(cfg, signal_rng, cfg.days + 1)

    base = day_span_start(cfg.start_date, cfg.utc_offset_minutes, 0)
    span0 = base.epoch_seconds + cfg.day_offset_minutes * 60
    end_epoch = span0 + (cfg.days - 1) * DAY_SECONDS + DAY_SECONDS
    cp = cfg.specific_heat
    area = cfg.collector_area

    # ---- clean sensor samples
    epochs = list(range(base.epoch_seconds, end_epoch + 1, cfg.sensor_cadence_s))
    n = len(epochs)
    t_in = np.zeros(n)
    t_out = np.zeros(n)
    flow = np.zeros(n)
    solar = np.zeros(n)
    ambient = np.zeros(n)
    for i, epoch in enumerate(epochs):
        ts = Timestamp(epoch, cfg.utc_offset_minutes)
        local = ts.local_datetime()
        d = (local.date() - cfg.start_date).days
        day = day_params[d]
        hour = local.hour + local.minute / 60.0 + local.second / 3600.0
        rad = _irradiance(day, hour)
        amb = _ambient(day, hour) + signal_rng.normal(0.0, 0.3)
        year_frac = (d + hour / 24.0) / 365.0
        efficiency = cfg.base_efficiency * (1.0 - cfg.degradation_per_year * year_frac)
        if rad > PUMP_ON_IRRADIANCE:
            f = max(cfg.flow_rate + signal_rng.normal(0.0, 0.002), 0.01)
            tin = day.t_in_base + 3.0 * math.sin(2.0 * math.pi * (hour - 15.0) / 24.0)
            tin += signal_rng.normal(0.0, 0.4)
            clean_power = max(
                efficiency * area * rad - cfg.loss_coefficient * (tin - amb), 0.0
            )
            power = max(clean_power + signal_rng.normal(0.0, cfg.noise_std_w), 0.0)
            tout = tin + power / (f * cp)
        else:
            f = 0.0
            tin = day.t_in_base + signal_rng.normal(0.0, 0.4)
            tout = tin - 1.5 + signal_rng.normal(0.0, 0.3)
        t_in[i] = tin
        t_out[i] = tout
        flow[i] = f
        solar[i] = max(rad + signal_rng.normal(0.0, 8.0), 0.0)
        ambient[i] = amb

    # recovered heat rate, exactly as a consumer of the CSV would compute it
    powers = flow * cp * (t_out - t_in)
    powers = np.where(powers > 0.0, powers, 0.0)

    # ---- ground truth from the clean stream (independent integrator)
    per_window = WINDOW_SECONDS // cfg.sensor_cadence_s
    first_span_index = (span0 - base.epoch_seconds) // cfg.sensor_cadence_s
    truth = np.zeros((cfg.days, STEPS_PER_DAY))
    dur = float(cfg.sensor_cadence_s)
    for d in range(cfg.days):
        for w in range(STEPS_PER_DAY):
            i0 = first_span_index + d * (DAY_SECONDS // cfg.sensor_cadence_s) + w * per_window
            terms = [powers[i] * dur for i in range(i0, i0 + per_window)]
            observed = math.fsum([dur] * per_window)
            integral = math.fsum(terms)
            truth[d, w] = integral * (float(WINDOW_SECONDS) / observed) / 3.6e6

    # ---- clean weather samples
    w_epochs = list(range(base.epoch_seconds, end_epoch + 1, cfg.weather_cadence_s))
    wn = len(w_epochs)
    w_temp = np.zeros(wn)
    w_hum = np.zeros(wn)
    w_pres = np.zeros(wn)
    w_wind = np.zeros(wn)
    w_rain = np.zeros(wn)
    w_snow = np.zeros(wn)
    for i, epoch in enumerate(w_epochs):
        ts = Timestamp(epoch, cfg.utc_offset_minutes)
        local = ts.local_datetime()
        d = (local.date() - cfg.start_date).days
        day = day_params[d]
        hour = local.hour + local.minute / 60.0
        cloudiness = 1.0 - _attenuation(day, hour)
        temp = _ambient(day, hour) + signal_rng.normal(0.0, 0.5)
        w_temp[i] = temp
        w_hum[i] = min(max(25.0 + 60.0 * cloudiness + signal_rng.normal(0.0, 6.0), 2.0), 100.0)
        w_pres[i] = 1013.0 + day.pressure_walk - 10.0 * cloudiness + signal_rng.normal(0.0, 0.8)
        w_wind[i] = max(1.5 + 4.0 * cloudiness + signal_rng.normal(0.0, 1.2), 0.0)
        precip = max(2.2 * (cloudiness - 0.55) + signal_rng.normal(0.0, 0.05), 0.0)
        if temp < 0.5:
            w_rain[i], w_snow[i] = 0.0, precip
        else:
            w_rain[i], w_snow[i] = precip, 0.0

    clean_sensor_lines = [SENSOR_HEADER_LINE]
    for i, epoch in enumerate(epochs):
        iso = Timestamp(epoch, cfg.utc_offset_minutes).to_iso()
        clean_sensor_lines.append(
            f"{iso},{_fmt(t_in[i])},{_fmt(t_out[i])},{_fmt(flow[i])},"
            f"{_fmt(solar[i])},{_fmt(ambient[i])}"
        )

    # ---- corruption: bursts that mask whole windows, plus isolated spikes
    sensor_cells = [
        [_fmt(t_in[i]), _fmt(t_out[i]), _fmt(flow[i]), _fmt(solar[i]), _fmt(ambient[i])]
        for i in range(n)
    ]
    for d in range(cfg.days):
        day_base = first_span_index + d * (DAY_SECONDS // cfg.sensor_cadence_s)
        for w in range(STEPS_PER_DAY):
            if burst_rng.random() >= cfg.missing_fraction:
                continue
            # corrupt well past the 25% masking rule, so the window is lost
            count = int(math.ceil(burst_rng.uniform(0.35, 1.0) * per_window))
            start = int(burst_rng.integers(0, per_window - count + 1))
            i0 = day_base + w * per_window + start
            for i in range(i0, i0 + count):
                sensor_cells[i][1] = _fmt(150.0 + float(burst_rng.uniform(0.0, 40.0)))
    for i in range(n):
        if burst_rng.random() < cfg.spike_rate:
            sensor_cells[i][0] = _fmt(-30.0 - float(burst_rng.uniform(0.0, 20.0)))

    sensor_lines = [SENSOR_HEADER_LINE]
    for i, epoch in enumerate(epochs):
        iso = Timestamp(epoch, cfg.utc_offset_minutes).to_iso()
        sensor_lines.append(f"{iso}," + ",".join(sensor_cells[i]))

    # ---- weather dropout per (day, window, feature)
    weather_cells = [
        [_fmt(w_temp[i]), _fmt(w_hum[i]), _fmt(w_pres[i]), _fmt(w_wind[i]),
         _fmt(w_rain[i]), _fmt(w_snow[i])]
        for i in range(wn)
    ]
    per_window_weather = WINDOW_SECONDS // cfg.weather_cadence_s
    weather_span_index = (span0 - base.epoch_seconds) // cfg.weather_cadence_s
    for d in range(cfg.days):
        day_base = weather_span_index + d * (DAY_SECONDS // cfg.weather_cadence_s)
        for w in range(STEPS_PER_DAY):
            for feature in range(6):
                if weather_drop_rng.random() >= cfg.weather_missing_fraction:
                    continue
                i0 = day_base + w * per_window_weather
                for i in range(i0, i0 + per_window_weather):
                    weather_cells[i][feature] = ""
    weather_lines = [WEATHER_HEADER_LINE]
    for i, epoch in enumerate(w_epochs):
        iso = Timestamp(epoch, cfg.utc_offset_minutes).to_iso()
        weather_lines.append(f"{iso}," + ",".join(weather_cells[i]))

    truth_lines = [TRUTH_HEADER_LINE]
    for d in range(cfg.days):
        date = (cfg.start_date + timedelta(days=d)).isoformat()
        for w in range(STEPS_PER_DAY):
            truth_lines.append(f"{date},{w},{_fmt(truth[d, w])}")

    return SynthData(
        sensor_csv="\n".join(sensor_lines) + "\n",
        weather_csv="\n".join(weather_lines) + "\n",
        truth_csv="\n".join(truth_lines) + "\n",
        clean_sensor_csv="\n".join(clean_sensor_lines) + "\n",
        truth_kwh=truth,
    )


def write_dataset(cfg: SynthConfig, out_dir) -> dict[str, str]:
    """Generate and write sensor.csv, weather.csv, truth.csv; returns paths."""
    data = generate_year(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "sensor": str(out / "sensor.csv"),
        "weather": str(out / "weather.csv"),
        "truth": str(out / "truth.csv"),
    }
    (out / "sensor.csv").write_text(data.sensor_csv, encoding="utf-8")
    (out / "weather.csv").write_text(data.weather_csv, encoding="utf-8")
    (out / "truth.csv").write_text(data.truth_csv, encoding="utf-8")
    return paths


def oracle_bin_counts(values, thresholds) -> list[int]:
    """Brute-force per-class counts: the independent check for binning.

    Walks every value and compares against each threshold in turn; no
    shared code with the production implementation.
    """
    counts = [0] * (len(thresholds) + 1)
    for value in values:
        cls = 0
        for t in thresholds:
            if value >= t:
                cls += 1
        counts[cls] += 1
    return counts
