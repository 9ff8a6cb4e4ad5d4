"""Time features: cyclic encodings, solar geometry, a learnable embedding.

The cyclic encodings place local hour-of-day, day-of-year, and
month-of-year on the unit circle; they are fixed functions of the
timestamp. The solar-geometry functions give the clear-sky strength of a
time window from textbook sun-position math. The learnable embedding
maps a scalar time to a vector whose first dimension is linear in time
(a trend channel) and whose remaining dimensions are sinusoids with
trainable frequency and phase, so the attention kernel built on top of
it can express both periodic structure and drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from pvtcast.core import WINDOW_SECONDS, Timestamp, local_hour

HOUR_PERIOD = 24.0
DAY_OF_YEAR_PERIOD = 365.25
MONTH_PERIOD = 12.0

# sinusoid frequencies start log-uniform over this many cycles per unit time
FREQ_INIT_MIN_CYCLES = 1.0
FREQ_INIT_MAX_CYCLES = 96.0

CYCLIC_FEATURE_NAMES = (
    "hour_sin",
    "hour_cos",
    "day_of_year_sin",
    "day_of_year_cos",
    "month_sin",
    "month_cos",
)

# the pilot installation's latitude; solar geometry is site-specific and
# baked into trained checkpoints, so it is a constant, not a config knob
SITE_LATITUDE_DEG = 48.0


def cyclic_pair(position: float, period: float) -> tuple[float, float]:
    """(sin, cos) of a position expressed on a circle of the given period."""
    angle = 2.0 * math.pi * position / period
    return (math.sin(angle), math.cos(angle))


@dataclass(frozen=True)
class CyclicFeatures:
    """Unit-circle encodings of one timestamp at three calendar scales."""

    hour: tuple[float, float]
    day_of_year: tuple[float, float]
    month: tuple[float, float]

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return self.hour + self.day_of_year + self.month


def cyclic_features(ts: Timestamp) -> CyclicFeatures:
    """Fixed cyclic encodings of a timestamp, computed in local time.

    Hour runs over [0, 24); day-of-year is the fractional 0-based day
    position over a 365.25-day period; months 1..12 map to positions
    0..11 over a 12-month period.
    """
    local = ts.local_datetime()
    hour = local_hour(ts)
    day_position = (local.timetuple().tm_yday - 1) + hour / 24.0
    month_position = local.month - 1
    return CyclicFeatures(
        hour=cyclic_pair(hour, HOUR_PERIOD),
        day_of_year=cyclic_pair(day_position, DAY_OF_YEAR_PERIOD),
        month=cyclic_pair(month_position, MONTH_PERIOD),
    )


def solar_elevation_sine(ts: Timestamp, latitude_deg: float = SITE_LATITUDE_DEG) -> float:
    """Sine of the solar elevation at ts, clamped at the horizon.

    Textbook sun position: declination from the day of year, hour angle
    from the local clock (15 degrees per hour off noon). Proportional to
    clear-sky irradiance on a horizontal plane; zero while the sun is
    below the horizon.
    """
    local = ts.local_datetime()
    doy = local.timetuple().tm_yday - 1
    hour = local.hour + local.minute / 60.0 + local.second / 3600.0
    return _elevation_sine(doy, hour, latitude_deg)


def _elevation_sine(doy: int, hour: float, latitude_deg: float) -> float:
    decl = math.radians(-23.44 * math.cos(2.0 * math.pi * (doy + 10.0) / 365.25))
    lat = math.radians(latitude_deg)
    hour_angle = math.radians(15.0 * (hour - 12.0))
    elevation = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * math.cos(
        hour_angle
    )
    return max(elevation, 0.0)


def window_clear_sky(start: Timestamp, latitude_deg: float = SITE_LATITUDE_DEG) -> float:
    """Mean clamped elevation sine over the 3h window starting at start.

    Sampled at the three hour midpoints past the window start; the
    start's local date fixes the declination, so a window crossing
    midnight keeps one consistent solar day (hours simply run past 24).
    """
    local = start.local_datetime()
    doy = local.timetuple().tm_yday - 1
    base_hour = local.hour + local.minute / 60.0 + local.second / 3600.0
    hours = WINDOW_SECONDS // 3600
    samples = [_elevation_sine(doy, base_hour + k + 0.5, latitude_deg) for k in range(hours)]
    return sum(samples) / len(samples)


class TimeEmbedding(nn.Module):
    """Learnable map from scalar time to a d-dimensional vector.

    Output dimension 0 is ``w0 * t + b0`` (non-periodic trend channel);
    dimension i >= 1 is ``sin(w_i * t + b_i)``. Times are expected
    normalized to [0, 1] within a day, so the initial frequencies span
    roughly 1 to 96 cycles per day.
    """

    def __init__(self, dim: int):
        super().__init__()
        if dim < 2:
            raise ValueError(f"embedding dim must be >= 2, got {dim}")
        self.dim = dim
        self.linear_weight = nn.Parameter(torch.ones((), dtype=torch.float64))
        self.linear_bias = nn.Parameter(torch.zeros((), dtype=torch.float64))
        log_lo, log_hi = math.log(FREQ_INIT_MIN_CYCLES), math.log(FREQ_INIT_MAX_CYCLES)
        cycles = torch.exp(torch.empty(dim - 1, dtype=torch.float64).uniform_(log_lo, log_hi))
        self.frequencies = nn.Parameter(2.0 * math.pi * cycles)
        self.phases = nn.Parameter(
            torch.empty(dim - 1, dtype=torch.float64).uniform_(0.0, 2.0 * math.pi)
        )

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        """Embed times of any shape (...,) into (..., dim)."""
        trend = (self.linear_weight * t + self.linear_bias).unsqueeze(-1)
        periodic = torch.sin(t.unsqueeze(-1) * self.frequencies + self.phases)
        return torch.cat([trend, periodic], dim=-1)
