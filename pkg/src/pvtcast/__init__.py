"""Heat-production band forecasting for solar thermal (PVT) collectors."""

from pvtcast.core import (
    AllMaskedError,
    ClassDistribution,
    DayWindow,
    InputError,
    PvtcastError,
    SensorRecord,
    ThresholdScheme,
    Timestamp,
    TrainingDivergedError,
    WeatherRecord,
)

__version__ = "0.1.0"

__all__ = [
    "AllMaskedError",
    "ClassDistribution",
    "DayWindow",
    "InputError",
    "PvtcastError",
    "SensorRecord",
    "ThresholdScheme",
    "Timestamp",
    "TrainingDivergedError",
    "WeatherRecord",
    "__version__",
]
