"""Quantization of window energies into 5 production bands.

Three ways to place the 4 cut points, all sharing a small positive
"zero floor" as the first threshold so that band 0 means "effectively
no production":

- balanced_ranges: bands above the floor have equal width up to an
  expected maximum.
- balanced_classes: empirical quantiles of the above-floor energies,
  so each band gets roughly the same number of samples.
- max_margins: cut points placed in the widest gaps of the sorted
  above-floor energies, keeping samples far from the boundaries.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from pvtcast.core import CLASS_COUNT, STEPS_PER_DAY, DayWindow, InputError, ThresholdScheme

DEFAULT_ZERO_FLOOR_KWH = 0.05
DEFAULT_EXPECTED_MAX_KWH = 2.0

# Cut points measured on the pilot installation; shipped as defaults so
# models can be compared without access to the original label pool.
PILOT_THRESHOLDS = {
    "balanced_ranges": (0.05, 0.50, 1.00, 1.50),
    "balanced_classes": (0.05, 0.29, 1.24, 3.70),
    "max_margins": (0.05, 0.21, 0.53, 1.05),
}


def bin_value(value: float, thresholds: Sequence[float]) -> int:
    """Class index of an energy value: the number of thresholds it reaches.

    A value exactly on a cut point belongs to the upper band.
    """
    thr = list(thresholds)
    if sorted(thr) != thr:
        raise ValueError(f"thresholds must be sorted ascending, got {thr}")
    return int(sum(1 for t in thr if value >= t))


def bin_array(values: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """Vectorized ``bin_value``; returns int64 class indices, same shape."""
    thr = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thr) < 0):
        raise ValueError(f"thresholds must be sorted ascending, got {thresholds}")
    # side='right' counts thresholds <= value, matching the upper-band tie rule
    return np.searchsorted(thr, np.asarray(values, dtype=np.float64), side="right").astype(
        np.int64
    )


def balanced_class_thresholds(values: Sequence[float], class_count: int) -> tuple[float, ...]:
    """Cut points splitting ``values`` into ``class_count`` equal-size groups.

    The sorted values are divided into consecutive runs whose sizes differ
    by at most one (longer runs first); each cut point is the midpoint
    between the last value of one run and the first value of the next.
    """
    if class_count < 2:
        raise ValueError(f"need at least 2 classes, got {class_count}")
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if vals.size < class_count:
        raise InputError(
            f"need at least {class_count} values to cut into {class_count} classes, "
            f"got {vals.size}"
        )
    base, extra = divmod(vals.size, class_count)
    cuts = []
    pos = 0
    for group in range(class_count - 1):
        pos += base + (1 if group < extra else 0)
        cuts.append((vals[pos - 1] + vals[pos]) / 2.0)
    return tuple(float(c) for c in cuts)


def equal_width_thresholds(
    expected_max: float = DEFAULT_EXPECTED_MAX_KWH,
    zero_floor: float = DEFAULT_ZERO_FLOOR_KWH,
    class_count: int = CLASS_COUNT,
) -> tuple[float, ...]:
    """Floor threshold plus equally spaced cuts at multiples of max/(k-1).

    With the defaults (max 2.0 kWh, 5 classes) this yields
    (0.05, 0.5, 1.0, 1.5): band widths of 0.5 kWh above the floor, with
    the top band open-ended.
    """
    if expected_max <= zero_floor:
        raise ValueError(f"expected_max {expected_max} must exceed zero_floor {zero_floor}")
    width = expected_max / (class_count - 1)
    return (float(zero_floor),) + tuple(float(width * i) for i in range(1, class_count - 1))


def max_margin_thresholds(
    values: Sequence[float],
    zero_floor: float = DEFAULT_ZERO_FLOOR_KWH,
    cut_count: int | None = None,
) -> tuple[float, ...]:
    """Floor threshold plus cuts at the midpoints of the widest value gaps.

    Values at or below the floor are dropped first. Gaps between
    consecutive remaining sorted values are ranked by width; the
    ``cut_count`` widest (default: one fewer than the number of distinct
    values, capped at 3 so the floor plus the cuts give 5 bands) are cut
    at their midpoints. Duplicate values produce zero-width gaps and are
    never selected while wider gaps remain.
    """
    vals = np.sort(np.asarray(values, dtype=np.float64))
    vals = vals[vals > zero_floor]
    distinct = np.unique(vals)
    if cut_count is None:
        cut_count = min(CLASS_COUNT - 2, distinct.size - 1)
    if distinct.size < cut_count + 1:
        raise InputError(
            f"need at least {cut_count + 1} distinct values above the floor "
            f"for {cut_count} cuts, got {distinct.size}"
        )
    gaps = np.diff(vals)
    # stable: among equal gaps prefer the leftmost, so results are reproducible
    order = np.argsort(-gaps, kind="stable")
    chosen = np.sort(order[:cut_count])
    cuts = (vals[chosen] + vals[chosen + 1]) / 2.0
    return (float(zero_floor),) + tuple(float(c) for c in cuts)


def scheme_from_energies(
    name: str,
    energies: Sequence[float],
    zero_floor: float = DEFAULT_ZERO_FLOOR_KWH,
    expected_max: float = DEFAULT_EXPECTED_MAX_KWH,
) -> ThresholdScheme:
    """Build one of the three named schemes from a pool of window energies."""
    if name == "balanced_ranges":
        return ThresholdScheme(name, equal_width_thresholds(expected_max, zero_floor))
    arr = np.asarray(energies, dtype=np.float64)
    if name == "balanced_classes":
        above = arr[arr > zero_floor]
        if above.size < CLASS_COUNT - 1:
            raise InputError(
                f"need at least {CLASS_COUNT - 1} energies above the floor, got {above.size}"
            )
        cuts = balanced_class_thresholds(above, CLASS_COUNT - 1)
        return ThresholdScheme(name, (float(zero_floor),) + cuts)
    if name == "max_margins":
        return ThresholdScheme(name, max_margin_thresholds(arr, zero_floor, CLASS_COUNT - 2))
    raise InputError(f"unknown scheme {name!r}")


def pilot_scheme(name: str) -> ThresholdScheme:
    """The shipped default cut points for a named scheme."""
    if name not in PILOT_THRESHOLDS:
        raise InputError(f"unknown scheme {name!r}")
    return ThresholdScheme(name, PILOT_THRESHOLDS[name])


@dataclass(frozen=True)
class LabeledDay:
    """A DayWindow paired with its 8 class labels under one scheme.

    Labels are meaningful only where ``window.label_mask`` is true; the
    masked positions carry 0 as a sentinel and must never be read.
    """

    window: DayWindow
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        labels = tuple(int(v) for v in self.labels)
        if len(labels) != STEPS_PER_DAY:
            raise ValueError(f"expected {STEPS_PER_DAY} labels, got {len(labels)}")
        if any(not 0 <= v < CLASS_COUNT for v in labels):
            raise ValueError(f"labels must lie in 0..{CLASS_COUNT - 1}, got {labels}")
        object.__setattr__(self, "labels", labels)


def label_days(days: Sequence[DayWindow], scheme: ThresholdScheme) -> list[LabeledDay]:
    """Bin every observed window energy of every day under one scheme."""
    labeled = []
    for day in days:
        classes = bin_array(day.qpvt_kwh, scheme.thresholds)
        classes = np.where(day.label_mask, classes, 0)
        labeled.append(LabeledDay(window=day, labels=tuple(int(c) for c in classes)))
    return labeled
