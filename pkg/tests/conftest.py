"""Shared builders for the test suite.

Single-threaded torch keeps reduction order fixed, which several
bit-exactness tests rely on.
"""

from datetime import date as Date
from datetime import timedelta

import numpy as np
import torch

from pvtcast.binning import LabeledDay
from pvtcast.core import CLASS_COUNT, STEPS_PER_DAY, WINDOW_SECONDS, DayWindow, day_span_start

torch.set_num_threads(1)


def build_window(
    date=Date(2021, 6, 1),
    feature_count=3,
    features=None,
    feature_mask=None,
    qpvt=None,
    label_mask=None,
    offset_minutes=60,
    day_offset_minutes=60,
):
    """A DayWindow with explicit or neutral contents."""
    start = day_span_start(date, offset_minutes, day_offset_minutes)
    steps = tuple(start.shifted(WINDOW_SECONDS * s) for s in range(STEPS_PER_DAY))
    if features is None:
        features = np.zeros((STEPS_PER_DAY, feature_count))
    features = np.asarray(features, dtype=np.float64)
    if feature_mask is None:
        feature_mask = np.ones(features.shape, dtype=bool)
    if qpvt is None:
        qpvt = np.zeros(STEPS_PER_DAY)
    if label_mask is None:
        label_mask = np.ones(STEPS_PER_DAY, dtype=bool)
    return DayWindow(
        date=date,
        step_times=steps,
        features=features,
        feature_mask=np.asarray(feature_mask, dtype=bool),
        qpvt_kwh=np.asarray(qpvt, dtype=np.float64),
        label_mask=np.asarray(label_mask, dtype=bool),
    )


def fd_gradients(module, loss_fn, step=1e-5):
    """Central finite differences of loss_fn() w.r.t. every parameter."""
    grads = {}
    for name, param in module.named_parameters():
        grad = torch.zeros_like(param)
        flat = param.data.view(-1)
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + step
            hi = loss_fn().item()
            flat[i] = original - step
            lo = loss_fn().item()
            flat[i] = original
            grad.view(-1)[i] = (hi - lo) / (2 * step)
        grads[name] = grad
    return grads


def relative_error(analytic, numeric):
    scale = max(analytic.abs().max().item(), numeric.abs().max().item(), 1e-6)
    return (analytic - numeric).abs().max().item() / scale


def oracle_quantile_cuts(values, groups):
    """Sort-and-slice reference for equal-count thresholds.

    Groups get sizes differing by at most one, larger groups first; each
    cut is the midpoint across adjacent group boundaries.
    """
    ordered = sorted(float(v) for v in values)
    base, extra = divmod(len(ordered), groups)
    sizes = [base + 1 if g < extra else base for g in range(groups)]
    cuts = []
    pos = 0
    for size in sizes[:-1]:
        pos += size
        cuts.append((ordered[pos - 1] + ordered[pos]) / 2.0)
    return tuple(cuts)


def random_labeled_days(
    rng,
    count,
    feature_count=3,
    feature_mask_rate=0.25,
    label_mask_rate=0.2,
    start=Date(2021, 3, 1),
):
    """Random labeled days; every feature keeps at least one observation."""
    days = []
    for i in range(count):
        date = start + timedelta(days=i)
        features = rng.normal(0.0, 2.0, size=(STEPS_PER_DAY, feature_count))
        mask = rng.random((STEPS_PER_DAY, feature_count)) >= feature_mask_rate
        for f in range(feature_count):
            if not mask[:, f].any():
                mask[int(rng.integers(0, STEPS_PER_DAY)), f] = True
        label_mask = rng.random(STEPS_PER_DAY) >= label_mask_rate
        if not label_mask.any():
            label_mask[0] = True
        labels = rng.integers(0, CLASS_COUNT, size=STEPS_PER_DAY)
        window = build_window(
            date=date,
            feature_count=feature_count,
            features=features,
            feature_mask=mask,
            qpvt=np.abs(features[:, 0]),
            label_mask=label_mask,
        )
        days.append(
            LabeledDay(
                window=window,
                labels=tuple(int(v) if m else 0 for v, m in zip(labels, label_mask)),
            )
        )
    return days
