"""Dataset files: one JSON object per line, one DayWindow per object.

The first line is a header carrying the feature names and the window
grid offset; every following line is one day. Floats are written with
full repr precision so a write/read cycle reproduces every value
bit-exactly. Masked entries are normalized to 0 on write; readers must
consult the masks, never the sentinel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date as Date
from typing import Iterable, Sequence

import numpy as np

from pvtcast.core import DayWindow, InputError, Timestamp

FORMAT_NAME = "pvtcast-days-v1"


@dataclass(frozen=True)
class DatasetFile:
    """A parsed dataset: the day records plus the header metadata."""

    days: tuple[DayWindow, ...]
    feature_names: tuple[str, ...]
    day_offset_minutes: int


def _day_to_obj(day: DayWindow) -> dict:
    features = np.where(day.feature_mask, day.features, 0.0)
    qpvt = np.where(day.label_mask, day.qpvt_kwh, 0.0)
    return {
        "date": day.date.isoformat(),
        "epochs": [ts.epoch_seconds for ts in day.step_times],
        "offsets": [ts.local_offset_minutes for ts in day.step_times],
        "features": features.tolist(),
        "feature_mask": day.feature_mask.astype(int).tolist(),
        "qpvt_kwh": qpvt.tolist(),
        "label_mask": day.label_mask.astype(int).tolist(),
    }


def _day_from_obj(obj: dict, feature_count: int, where: str) -> DayWindow:
    try:
        date = Date.fromisoformat(obj["date"])
        step_times = tuple(
            Timestamp(int(e), int(o)) for e, o in zip(obj["epochs"], obj["offsets"], strict=True)
        )
        features = np.array(obj["features"], dtype=np.float64)
        feature_mask = np.array(obj["feature_mask"], dtype=bool)
        qpvt = np.array(obj["qpvt_kwh"], dtype=np.float64)
        label_mask = np.array(obj["label_mask"], dtype=bool)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{where}: malformed day record: {exc}") from None
    if features.shape != (8, feature_count):
        raise InputError(
            f"{where}: feature matrix shape {features.shape} does not match "
            f"the {feature_count} declared feature names"
        )
    try:
        return DayWindow(
            date=date,
            step_times=step_times,
            features=features,
            feature_mask=feature_mask,
            qpvt_kwh=qpvt,
            label_mask=label_mask,
        )
    except ValueError as exc:
        raise InputError(f"{where}: invalid day record: {exc}") from None


def write_days(
    path,
    days: Iterable[DayWindow],
    feature_names: Sequence[str],
    day_offset_minutes: int,
) -> None:
    header = {
        "day_offset_minutes": int(day_offset_minutes),
        "feature_names": list(feature_names),
        "format": FORMAT_NAME,
    }
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for day in days:
            if day.feature_count != len(feature_names):
                raise ValueError(
                    f"day {day.date} has {day.feature_count} features, "
                    f"expected {len(feature_names)}"
                )
            handle.write(json.dumps(_day_to_obj(day), sort_keys=True) + "\n")


def read_days(path) -> DatasetFile:
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    with handle:
        first = handle.readline()
        if not first:
            raise InputError(f"{path}: empty dataset file")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path} line 1: invalid JSON header: {exc}") from None
        if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
            raise InputError(f"{path}: not a {FORMAT_NAME} dataset file")
        feature_names = tuple(str(n) for n in header.get("feature_names", ()))
        if not feature_names:
            raise InputError(f"{path}: header declares no feature names")
        day_offset = int(header.get("day_offset_minutes", -1))
        if day_offset < 0:
            raise InputError(f"{path}: header missing day_offset_minutes")
        days = []
        for line_no, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path} line {line_no}: invalid JSON: {exc}") from None
            days.append(_day_from_obj(obj, len(feature_names), f"{path} line {line_no}"))
    return DatasetFile(
        days=tuple(days), feature_names=feature_names, day_offset_minutes=day_offset
    )
