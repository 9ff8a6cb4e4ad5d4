"""Evaluation: classification metrics, their aggregation, and reports.

All metrics run over observed test steps only. Seed-level results are
aggregated as mean plus population standard deviation. Reports are
emitted as JSON (machine-readable), a text table, and per-model CSVs of
the margin and class-distance analyses; bar-chart rendering is optional.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from pvtcast.binning import LabeledDay
from pvtcast.core import CLASS_COUNT, WINDOW_SECONDS, ClassDistribution, Timestamp, local_hour
from pvtcast.models import make_batch, predict_log_probs
from pvtcast.train import Checkpoint, usable_days

DEFAULT_MARGIN_BOUNDS = (0.0, 0.2, 0.4, 0.6, 0.8)

# local-time error bins: early daylight and the main production period
EARLY_BIN = (7.0, 10.0)
MAIN_BIN = (10.0, 19.0)


# ----------------------------------------------------------------- metrics


def confusion_matrix(truth: Sequence[int], predictions: Sequence[int]) -> np.ndarray:
    """5x5 count matrix, rows = truth, columns = prediction."""
    if len(truth) != len(predictions):
        raise ValueError("truth and predictions must have equal length")
    matrix = np.zeros((CLASS_COUNT, CLASS_COUNT), dtype=np.int64)
    for t, p in zip(truth, predictions):
        if not (0 <= t < CLASS_COUNT and 0 <= p < CLASS_COUNT):
            raise ValueError(f"class ids must lie in 0..{CLASS_COUNT - 1}, got ({t}, {p})")
        matrix[t, p] += 1
    return matrix


@dataclass(frozen=True)
class PrfReport:
    micro_precision: float
    micro_recall: float
    micro_f: float
    macro_precision: float
    macro_recall: float
    macro_f: float
    weighted_precision: float
    weighted_recall: float
    weighted_f: float
    zero_support_classes: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f": self.micro_f,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f": self.macro_f,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f": self.weighted_f,
        }


def compute_prf(matrix: np.ndarray) -> PrfReport:
    """Micro, macro, and weighted precision/recall/F from a count matrix.

    Classes absent from the truth are excluded from the macro average
    (and recorded); weighting is by truth support.
    """
    cm = np.asarray(matrix, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    diag = np.diag(cm)
    precision = np.divide(diag, predicted, out=np.zeros(CLASS_COUNT), where=predicted > 0)
    recall = np.divide(diag, support, out=np.zeros(CLASS_COUNT), where=support > 0)
    pr_sum = precision + recall
    f_score = np.divide(
        2 * precision * recall, pr_sum, out=np.zeros(CLASS_COUNT), where=pr_sum > 0
    )
    present = support > 0
    micro = float(diag.sum() / total)
    weights = support[present] / support[present].sum()
    return PrfReport(
        micro_precision=micro,
        micro_recall=micro,
        micro_f=micro,
        macro_precision=float(precision[present].mean()),
        macro_recall=float(recall[present].mean()),
        macro_f=float(f_score[present].mean()),
        weighted_precision=float((weights * precision[present]).sum()),
        weighted_recall=float((weights * recall[present]).sum()),
        weighted_f=float((weights * f_score[present]).sum()),
        zero_support_classes=tuple(int(c) for c in np.flatnonzero(~present)),
    )


def margin(dist: ClassDistribution | Sequence[float]) -> float:
    """Top probability minus second probability: the confidence measure."""
    probs = dist.probs if isinstance(dist, ClassDistribution) else tuple(dist)
    top = sorted(probs, reverse=True)
    return float(top[0] - top[1])


@dataclass(frozen=True)
class MarginRecord:
    margin: float
    correct: bool

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ValueError(f"margin must be non-negative, got {self.margin}")


@dataclass(frozen=True)
class MarginBucket:
    bound: float
    count: int
    accuracy: float | None  # None marks an empty subset, distinct from 0%


def margin_buckets(
    records: Sequence[MarginRecord],
    bounds: Sequence[float] = DEFAULT_MARGIN_BOUNDS,
) -> list[MarginBucket]:
    """Accuracy over the nested subsets with margin >= each bound."""
    if not records:
        raise ValueError("margin_buckets needs at least one record")
    buckets = []
    for bound in bounds:
        subset = [r for r in records if r.margin >= bound]
        accuracy = (
            100.0 * sum(1 for r in subset if r.correct) / len(subset) if subset else None
        )
        buckets.append(MarginBucket(bound=float(bound), count=len(subset), accuracy=accuracy))
    return buckets


def class_distance_cdf(truth: Sequence[int], predictions: Sequence[int]) -> tuple[float, ...]:
    """Cumulative % of predictions within N classes of the truth, N = 0..4."""
    if len(truth) != len(predictions):
        raise ValueError("truth and predictions must have equal length")
    if not truth:
        raise ValueError("class_distance_cdf needs at least one prediction")
    distances = np.abs(np.asarray(predictions) - np.asarray(truth))
    return tuple(
        float(100.0 * (distances <= n).sum() / len(distances)) for n in range(CLASS_COUNT)
    )


def _overlaps(start_hour: float, duration_hours: float, bin_lo: float, bin_hi: float) -> bool:
    # open-interval overlap; windows crossing midnight are checked on both sides
    for lo in (start_hour, start_hour - 24.0):
        if lo < bin_hi and bin_lo < lo + duration_hours:
            return True
    return False


@dataclass(frozen=True)
class TimeOfDaySplit:
    early_pct: float
    main_pct: float
    error_count: int

    @property
    def no_errors(self) -> bool:
        return self.error_count == 0


def time_of_day_errors(error_window_starts: Sequence[Timestamp]) -> TimeOfDaySplit:
    """Share of all errors whose window overlaps the early (07-10) and
    main (10-19) local-time bins. A window overlapping both counts as
    early only; windows outside both bins form the implicit remainder,
    so the two shares need not sum to 100%.
    """
    if not error_window_starts:
        return TimeOfDaySplit(early_pct=0.0, main_pct=0.0, error_count=0)
    duration = WINDOW_SECONDS / 3600.0
    early = main = 0
    for ts in error_window_starts:
        hour = local_hour(ts)
        if _overlaps(hour, duration, *EARLY_BIN):
            early += 1
        elif _overlaps(hour, duration, *MAIN_BIN):
            main += 1
    total = len(error_window_starts)
    return TimeOfDaySplit(
        early_pct=100.0 * early / total,
        main_pct=100.0 * main / total,
        error_count=total,
    )


def aggregate_seeds(per_seed: Sequence[dict]) -> dict:
    """Mean and population standard deviation of each metric across seeds."""
    if not per_seed:
        raise ValueError("aggregate_seeds needs at least one seed")
    keys = per_seed[0].keys()
    out = {}
    for key in keys:
        values = np.array([float(m[key]) for m in per_seed], dtype=np.float64)
        out[key] = {"mean": float(values.mean()), "std": float(values.std())}
    return out


# ------------------------------------------------------------ seed runs


@dataclass(frozen=True)
class SeedEvaluation:
    seed: int
    observed_steps: int
    confusion: np.ndarray
    prf: PrfReport
    margin_records: tuple[MarginRecord, ...]
    buckets: tuple[MarginBucket, ...]
    distance_cdf: tuple[float, ...]
    time_of_day: TimeOfDaySplit


def evaluate_checkpoint(
    checkpoint: Checkpoint,
    test_days: Sequence[LabeledDay],
    margin_bounds: Sequence[float] = DEFAULT_MARGIN_BOUNDS,
) -> SeedEvaluation:
    """All per-seed analyses of one trained model on the test split."""
    days = usable_days(checkpoint.model.model_kind, test_days)
    if not days:
        raise ValueError("no usable test days for this model")
    model = checkpoint.build()
    batch = make_batch(days, checkpoint.stats)
    log_probs = predict_log_probs(model, batch).numpy()
    probs = np.exp(log_probs)
    probs = probs / probs.sum(axis=-1, keepdims=True)
    predictions = probs.argmax(axis=-1)

    truth: list[int] = []
    preds: list[int] = []
    records: list[MarginRecord] = []
    error_starts: list[Timestamp] = []
    for day_pos, day in enumerate(days):
        for step in range(len(day.labels)):
            if not day.window.label_mask[step]:
                continue
            true_class = day.labels[step]
            pred_class = int(predictions[day_pos, step])
            truth.append(true_class)
            preds.append(pred_class)
            correct = pred_class == true_class
            records.append(
                MarginRecord(margin=margin(probs[day_pos, step]), correct=correct)
            )
            if not correct:
                error_starts.append(day.window.step_times[step])
    if not truth:
        raise ValueError("test split has no observed step; nothing to evaluate")
    cm = confusion_matrix(truth, preds)
    return SeedEvaluation(
        seed=checkpoint.seed,
        observed_steps=len(truth),
        confusion=cm,
        prf=compute_prf(cm),
        margin_records=tuple(records),
        buckets=tuple(margin_buckets(records, margin_bounds)),
        distance_cdf=class_distance_cdf(truth, preds),
        time_of_day=time_of_day_errors(error_starts),
    )


# ---------------------------------------------------------------- reports


def _aggregate_buckets(per_seed: Sequence[SeedEvaluation]) -> list[dict]:
    out = []
    for pos, bound in enumerate(
        [b.bound for b in per_seed[0].buckets]
    ):
        accuracies = [s.buckets[pos].accuracy for s in per_seed]
        counts = [s.buckets[pos].count for s in per_seed]
        filled = [a for a in accuracies if a is not None]
        entry = {
            "bound": bound,
            "count_mean": float(np.mean(counts)),
            "empty_seeds": sum(1 for a in accuracies if a is None),
        }
        if filled:
            entry["accuracy_mean"] = float(np.mean(filled))
            entry["accuracy_std"] = float(np.std(filled))
        else:
            entry["accuracy_mean"] = None
            entry["accuracy_std"] = None
        out.append(entry)
    return out


def summarize_model(per_seed: Sequence[SeedEvaluation]) -> dict:
    """Aggregate one model's seed evaluations into the report structure."""
    if not per_seed:
        raise ValueError("summarize_model needs at least one seed evaluation")
    ordered = sorted(per_seed, key=lambda s: s.seed)
    cdf = np.array([s.distance_cdf for s in ordered], dtype=np.float64)
    tod = {
        "early_pct": aggregate_seeds([{"v": s.time_of_day.early_pct} for s in ordered])["v"],
        "main_pct": aggregate_seeds([{"v": s.time_of_day.main_pct} for s in ordered])["v"],
        "seeds_without_errors": [s.seed for s in ordered if s.time_of_day.no_errors],
    }
    return {
        "seeds": [s.seed for s in ordered],
        "per_seed": [
            {
                "seed": s.seed,
                "observed_steps": s.observed_steps,
                "confusion": s.confusion.tolist(),
                "zero_support_classes": list(s.prf.zero_support_classes),
                **s.prf.as_dict(),
            }
            for s in ordered
        ],
        "metrics": aggregate_seeds([s.prf.as_dict() for s in ordered]),
        "margin_buckets": _aggregate_buckets(ordered),
        "class_distance_cdf": {
            "mean": [float(v) for v in cdf.mean(axis=0)],
            "std": [float(v) for v in cdf.std(axis=0)],
        },
        "time_of_day": tod,
    }


_TABLE_METRICS = (
    ("micro_precision", "micro precision"),
    ("micro_recall", "micro recall"),
    ("micro_f", "micro F-score"),
    ("macro_precision", "macro precision"),
    ("macro_recall", "macro recall"),
    ("macro_f", "macro F-score"),
    ("weighted_precision", "weighted precision"),
    ("weighted_recall", "weighted recall"),
    ("weighted_f", "weighted F-score"),
)


def render_table(report: dict) -> str:
    """Plain-text metric table: one row per metric, one column per model."""
    model_names = sorted(report["models"])
    width = 22
    lines = ["".ljust(width) + "".join(name.ljust(width) for name in model_names)]
    for key, label in _TABLE_METRICS:
        cells = []
        for name in model_names:
            stat = report["models"][name]["metrics"][key]
            cells.append(f"{stat['mean']:.3f} ± {stat['std']:.3f}".ljust(width))
        lines.append(label.ljust(width) + "".join(cells))
    return "\n".join(lines) + "\n"


def build_report(
    per_model: dict[str, Sequence[SeedEvaluation]],
    scheme_name: str,
    thresholds: Sequence[float],
    test_day_count: int,
) -> dict:
    return {
        "scheme": {"name": scheme_name, "thresholds": [float(t) for t in thresholds]},
        "test_days": int(test_day_count),
        "models": {
            name: summarize_model(evals) for name, evals in sorted(per_model.items())
        },
    }


def write_report(out_dir, report: dict) -> list[str]:
    """Emit report.json, report.txt, and per-model analysis CSVs.

    Returns the names of the files written (stable order).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with open(out / "report.json", "w", encoding="utf-8") as handle:
        json.dump(report, handle, sort_keys=True, indent=1)
        handle.write("\n")
    written.append("report.json")
    with open(out / "report.txt", "w", encoding="utf-8") as handle:
        handle.write(render_table(report))
    written.append("report.txt")
    for name in sorted(report["models"]):
        body = report["models"][name]
        margins_name = f"margins_{name}.csv"
        with open(out / margins_name, "w", encoding="utf-8") as handle:
            handle.write("bound,count_mean,accuracy_mean,accuracy_std,empty_seeds\n")
            for bucket in body["margin_buckets"]:
                acc = "" if bucket["accuracy_mean"] is None else repr(bucket["accuracy_mean"])
                std = "" if bucket["accuracy_std"] is None else repr(bucket["accuracy_std"])
                handle.write(
                    f"{bucket['bound']!r},{bucket['count_mean']!r},{acc},{std},"
                    f"{bucket['empty_seeds']}\n"
                )
        written.append(margins_name)
        distance_name = f"class_distance_{name}.csv"
        with open(out / distance_name, "w", encoding="utf-8") as handle:
            handle.write("distance,cumulative_pct_mean,cumulative_pct_std\n")
            cdf = body["class_distance_cdf"]
            for n, (m, s) in enumerate(zip(cdf["mean"], cdf["std"])):
                handle.write(f"{n},{m!r},{s!r}\n")
        written.append(distance_name)
    return written


def write_plots(out_dir, report: dict) -> list[str]:
    """Optional bar charts of the margin and class-distance analyses."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(report["models"]):
        body = report["models"][name]
        fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
        buckets = body["margin_buckets"]
        ys = [b["accuracy_mean"] if b["accuracy_mean"] is not None else 0.0 for b in buckets]
        left.bar(range(len(buckets)), ys, color="tab:blue")
        left.set_xticks(range(len(buckets)), [f">= {b['bound']:.1f}" for b in buckets])
        left.set_ylim(0, 100)
        left.set_ylabel("accuracy (%)")
        left.set_title(f"{name}: accuracy by likelihood margin")
        cdf = body["class_distance_cdf"]["mean"]
        right.bar(range(len(cdf)), cdf, color="tab:orange")
        right.set_xticks(range(len(cdf)))
        right.set_ylim(0, 100)
        right.set_ylabel("cumulative (%)")
        right.set_title(f"{name}: predictions within N classes")
        fig.tight_layout()
        plot_name = f"analysis_{name}.png"
        fig.savefig(out / plot_name, metadata={"Software": ""})
        plt.close(fig)
        written.append(plot_name)
    return written
