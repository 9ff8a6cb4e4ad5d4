"""Metric math, checked against small examples computed by hand."""

import json

import numpy as np
import pytest

from conftest import random_labeled_days
from pvtcast.binning import LabeledDay, pilot_scheme
from pvtcast.core import ClassDistribution, Timestamp
from pvtcast.evaluate import (
    DEFAULT_MARGIN_BOUNDS,
    MarginRecord,
    SeedEvaluation,
    aggregate_seeds,
    build_report,
    class_distance_cdf,
    compute_prf,
    confusion_matrix,
    evaluate_checkpoint,
    margin,
    margin_buckets,
    render_table,
    summarize_model,
    time_of_day_errors,
    write_plots,
    write_report,
)
from pvtcast.models import ModelConfig
from pvtcast.train import TrainConfig, train_model

SCHEME = pilot_scheme("balanced_ranges")


def at_hour(hour, minute=0):
    return Timestamp.from_iso(f"2021-06-01T{hour:02d}:{minute:02d}:00+00:00")


class TestConfusionMatrix:
    def test_counts(self):
        cm = confusion_matrix([0, 1, 2, 1], [0, 2, 2, 1])
        assert cm[0, 0] == 1 and cm[1, 1] == 1 and cm[1, 2] == 1 and cm[2, 2] == 1
        assert cm.sum() == 4

    def test_rows_are_truth(self):
        cm = confusion_matrix([3], [1])
        assert cm[3, 1] == 1
        assert cm[1, 3] == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion_matrix([0], [0, 1])

    def test_out_of_range_class(self):
        with pytest.raises(ValueError):
            confusion_matrix([5], [0])


class TestPrf:
    def test_micro_is_accuracy(self):
        cm = confusion_matrix([0, 1, 2, 1], [0, 2, 2, 1])
        prf = compute_prf(cm)
        assert prf.micro_precision == pytest.approx(0.75, abs=1e-12)
        assert prf.micro_recall == pytest.approx(0.75, abs=1e-12)
        assert prf.micro_f == pytest.approx(0.75, abs=1e-12)

    def test_perfect_predictions(self):
        cm = confusion_matrix([0, 1, 2, 3, 4], [0, 1, 2, 3, 4])
        prf = compute_prf(cm)
        for value in prf.as_dict().values():
            assert value == pytest.approx(1.0, abs=1e-12)
        assert prf.zero_support_classes == ()

    def test_macro_f_by_hand(self):
        # class 0: P=2/3, R=1, F=0.8; class 1: P=1, R=1/2, F=2/3
        cm = confusion_matrix([0, 0, 1, 1], [0, 0, 0, 1])
        prf = compute_prf(cm)
        assert prf.macro_f == pytest.approx((0.8 + 2.0 / 3.0) / 2.0, abs=1e-9)
        assert prf.macro_recall == pytest.approx(0.75, abs=1e-12)
        assert prf.zero_support_classes == (2, 3, 4)

    def test_micro_identity_on_random_matrices(self):
        rng = np.random.default_rng(90)
        for _ in range(50):
            cm = rng.integers(0, 20, size=(5, 5))
            if cm.sum() == 0:
                continue
            prf = compute_prf(cm)
            assert abs(prf.micro_precision - prf.micro_recall) <= 1e-9
            assert abs(prf.micro_precision - prf.micro_f) <= 1e-9
            assert prf.micro_precision == pytest.approx(
                np.diag(cm).sum() / cm.sum(), abs=1e-9
            )

    def test_weighted_recall_equals_micro(self):
        rng = np.random.default_rng(91)
        for _ in range(50):
            cm = rng.integers(0, 20, size=(5, 5))
            if cm.sum() == 0:
                continue
            prf = compute_prf(cm)
            assert prf.weighted_recall == pytest.approx(prf.micro_recall, abs=1e-12)

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError):
            compute_prf(np.zeros((5, 5)))


class TestMargin:
    def test_examples(self):
        assert margin((0.5, 0.3, 0.1, 0.05, 0.05)) == pytest.approx(0.2, abs=1e-12)
        assert margin((1.0, 0.0, 0.0, 0.0, 0.0)) == pytest.approx(1.0, abs=1e-12)
        assert margin((0.2, 0.2, 0.2, 0.2, 0.2)) == pytest.approx(0.0, abs=1e-12)

    def test_accepts_class_distribution(self):
        dist = ClassDistribution((0.6, 0.25, 0.05, 0.05, 0.05))
        assert margin(dist) == pytest.approx(0.35, abs=1e-12)

    def test_order_does_not_matter(self):
        assert margin((0.1, 0.6, 0.05, 0.2, 0.05)) == pytest.approx(0.4, abs=1e-12)

    def test_negative_margin_record_rejected(self):
        with pytest.raises(ValueError):
            MarginRecord(margin=-0.1, correct=True)


class TestMarginBuckets:
    def test_bound_zero_is_overall_accuracy(self):
        records = [MarginRecord(0.1, False), MarginRecord(0.9, True)]
        buckets = margin_buckets(records, bounds=(0.0, 0.5))
        assert buckets[0].count == 2
        assert buckets[0].accuracy == pytest.approx(50.0, abs=1e-12)
        assert buckets[1].count == 1
        assert buckets[1].accuracy == pytest.approx(100.0, abs=1e-12)

    def test_counts_are_nested_non_increasing(self):
        rng = np.random.default_rng(92)
        records = [
            MarginRecord(float(m), bool(c))
            for m, c in zip(rng.random(200), rng.random(200) > 0.5)
        ]
        buckets = margin_buckets(records, DEFAULT_MARGIN_BOUNDS)
        counts = [b.count for b in buckets]
        assert counts == sorted(counts, reverse=True)
        assert counts[0] == len(records)

    def test_empty_bucket_is_none_not_zero(self):
        records = [MarginRecord(0.1, True)]
        buckets = margin_buckets(records, bounds=(0.0, 0.5))
        assert buckets[1].count == 0
        assert buckets[1].accuracy is None

    def test_no_records_rejected(self):
        with pytest.raises(ValueError):
            margin_buckets([], bounds=(0.0,))


class TestClassDistanceCdf:
    def test_by_hand(self):
        assert class_distance_cdf([0, 0], [1, 3]) == (0.0, 50.0, 50.0, 100.0, 100.0)

    def test_all_correct(self):
        assert class_distance_cdf([2, 4], [2, 4]) == (100.0,) * 5

    def test_monotone_ending_at_hundred(self):
        rng = np.random.default_rng(93)
        truth = rng.integers(0, 5, size=300).tolist()
        preds = rng.integers(0, 5, size=300).tolist()
        cdf = class_distance_cdf(truth, preds)
        assert list(cdf) == sorted(cdf)
        assert cdf[4] == 100.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            class_distance_cdf([], [])


class TestTimeOfDay:
    def test_early_window(self):
        split = time_of_day_errors([at_hour(7)])
        assert split.early_pct == 100.0
        assert split.main_pct == 0.0

    def test_main_window(self):
        split = time_of_day_errors([at_hour(13)])
        assert split.main_pct == 100.0

    def test_overlap_prefers_early(self):
        # 09:00-12:00 overlaps both bins; it must count as early only
        split = time_of_day_errors([at_hour(9)])
        assert split.early_pct == 100.0
        assert split.main_pct == 0.0

    def test_window_ending_at_bin_start_does_not_overlap(self):
        # 04:00-07:00 touches the early bin only at its open edge
        split = time_of_day_errors([at_hour(4)])
        assert split.early_pct == 0.0
        assert split.main_pct == 0.0

    def test_night_window_wrapping_midnight(self):
        split = time_of_day_errors([at_hour(22)])
        assert split.early_pct == 0.0
        assert split.main_pct == 0.0

    def test_window_entering_bin_partway(self):
        # 18:00-21:00 still touches the tail of the main bin
        split = time_of_day_errors([at_hour(18)])
        assert split.main_pct == 100.0
        assert time_of_day_errors([at_hour(19)]).main_pct == 0.0

    def test_shares(self):
        split = time_of_day_errors([at_hour(7), at_hour(8), at_hour(13), at_hour(22)])
        assert split.early_pct == pytest.approx(50.0, abs=1e-12)
        assert split.main_pct == pytest.approx(25.0, abs=1e-12)
        assert split.error_count == 4

    def test_no_errors(self):
        split = time_of_day_errors([])
        assert split.no_errors
        assert split.early_pct == 0.0 and split.main_pct == 0.0


class TestAggregateSeeds:
    def test_two_seeds(self):
        got = aggregate_seeds([{"acc": 0.7}, {"acc": 0.9}])
        assert got["acc"]["mean"] == pytest.approx(0.8, abs=1e-12)
        assert got["acc"]["std"] == pytest.approx(0.1, abs=1e-12)

    def test_identical_seeds_have_zero_std(self):
        got = aggregate_seeds([{"acc": 0.8}, {"acc": 0.8}])
        assert got["acc"] == {"mean": 0.8, "std": 0.0}

    def test_single_seed(self):
        got = aggregate_seeds([{"acc": 0.5}])
        assert got["acc"]["std"] == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_seeds([])


def trained_checkpoint(days, seed=0):
    cfg = ModelConfig(
        model_kind="mtan",
        feature_count=3,
        hidden_dim=8,
        num_heads=2,
        ref_points=32,
        time_embed_dim=4,
        dropout=0.0,
    )
    tcfg = TrainConfig(seeds=(seed,), epochs=0, patience=1)
    return train_model(days, SCHEME, cfg, tcfg, seed, ("a", "b", "c"), 60)[0]


class TestEvaluateCheckpoint:
    def test_counts_only_observed_steps(self):
        rng = np.random.default_rng(94)
        days = random_labeled_days(rng, 6, label_mask_rate=0.3)
        checkpoint = trained_checkpoint(days)
        result = evaluate_checkpoint(checkpoint, days)
        observed = int(sum(d.window.label_mask.sum() for d in days))
        assert result.observed_steps == observed
        assert result.confusion.sum() == observed
        assert len(result.margin_records) == observed
        assert result.buckets[0].count == observed

    def test_error_count_matches_confusion(self):
        rng = np.random.default_rng(95)
        days = random_labeled_days(rng, 6)
        checkpoint = trained_checkpoint(days)
        result = evaluate_checkpoint(checkpoint, days)
        errors = int(result.confusion.sum() - np.diag(result.confusion).sum())
        assert result.time_of_day.error_count == errors

    def test_masked_labels_cannot_change_the_verdict(self):
        rng = np.random.default_rng(96)
        days = random_labeled_days(rng, 5, label_mask_rate=0.4)
        resentineled = [
            LabeledDay(
                d.window,
                tuple(
                    label if observed else 3
                    for label, observed in zip(d.labels, d.window.label_mask)
                ),
            )
            for d in days
        ]
        checkpoint = trained_checkpoint(days)
        a = evaluate_checkpoint(checkpoint, days)
        b = evaluate_checkpoint(checkpoint, resentineled)
        assert np.array_equal(a.confusion, b.confusion)
        assert a.prf == b.prf
        assert a.distance_cdf == b.distance_cdf

    def test_fully_masked_split_rejected(self):
        rng = np.random.default_rng(97)
        days = random_labeled_days(rng, 2)
        blind = []
        for d in days:
            window = d.window
            from conftest import build_window

            blind.append(
                LabeledDay(
                    build_window(
                        date=window.date,
                        features=window.features,
                        feature_mask=window.feature_mask,
                        qpvt=window.qpvt_kwh,
                        label_mask=np.zeros(8, dtype=bool),
                    ),
                    d.labels,
                )
            )
        checkpoint = trained_checkpoint(days)
        with pytest.raises(ValueError):
            evaluate_checkpoint(checkpoint, blind)


def hand_evaluation(seed, correct, total):
    truth = [0] * total
    preds = [0] * correct + [1] * (total - correct)
    cm = confusion_matrix(truth, preds)
    records = tuple(MarginRecord(0.5, i < correct) for i in range(total))
    return SeedEvaluation(
        seed=seed,
        observed_steps=total,
        confusion=cm,
        prf=compute_prf(cm),
        margin_records=records,
        buckets=tuple(margin_buckets(records)),
        distance_cdf=class_distance_cdf(truth, preds),
        time_of_day=time_of_day_errors([at_hour(13)] * (total - correct)),
    )


class TestSummarizeAndReport:
    def test_seeds_sorted_and_metrics_aggregated(self):
        summary = summarize_model([hand_evaluation(1, 3, 4), hand_evaluation(0, 1, 4)])
        assert summary["seeds"] == [0, 1]
        micro = summary["metrics"]["micro_f"]
        assert micro["mean"] == pytest.approx(0.5, abs=1e-12)
        assert micro["std"] == pytest.approx(0.25, abs=1e-12)
        assert [p["seed"] for p in summary["per_seed"]] == [0, 1]

    def test_bucket_aggregation_keeps_empties_distinct(self):
        summary = summarize_model([hand_evaluation(0, 2, 4)])
        top = [b for b in summary["margin_buckets"] if b["bound"] == 0.8][0]
        assert top["empty_seeds"] == 1
        assert top["accuracy_mean"] is None

    def test_report_structure_and_table(self):
        report = build_report(
            {"mtan": [hand_evaluation(0, 3, 4)], "rnn": [hand_evaluation(0, 2, 4)]},
            scheme_name="balanced_ranges",
            thresholds=SCHEME.thresholds,
            test_day_count=4,
        )
        assert sorted(report["models"]) == ["mtan", "rnn"]
        table = render_table(report)
        lines = table.splitlines()
        assert len(lines) == 10  # header + 9 metric rows
        assert "mtan" in lines[0] and "rnn" in lines[0]
        assert lines[0].index("mtan") < lines[0].index("rnn")
        assert "0.750" in table and "0.500" in table

    def test_write_report_files(self, tmp_path):
        report = build_report(
            {"mtan": [hand_evaluation(0, 3, 4)]},
            scheme_name="balanced_ranges",
            thresholds=SCHEME.thresholds,
            test_day_count=4,
        )
        written = write_report(tmp_path, report)
        assert written == [
            "report.json",
            "report.txt",
            "margins_mtan.csv",
            "class_distance_mtan.csv",
        ]
        loaded = json.loads((tmp_path / "report.json").read_text())
        assert loaded["test_days"] == 4
        margins = (tmp_path / "margins_mtan.csv").read_text().splitlines()
        assert margins[0] == "bound,count_mean,accuracy_mean,accuracy_std,empty_seeds"
        assert len(margins) == 1 + len(DEFAULT_MARGIN_BOUNDS)
        distance = (tmp_path / "class_distance_mtan.csv").read_text().splitlines()
        assert distance[1].startswith("0,")
        assert len(distance) == 6

    def test_report_bytes_are_deterministic(self, tmp_path):
        report = build_report(
            {"mtan": [hand_evaluation(0, 3, 4)]},
            scheme_name="balanced_ranges",
            thresholds=SCHEME.thresholds,
            test_day_count=4,
        )
        write_report(tmp_path / "a", report)
        write_report(tmp_path / "b", report)
        for name in ("report.json", "report.txt", "margins_mtan.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_write_plots(self, tmp_path):
        report = build_report(
            {"mtan": [hand_evaluation(0, 3, 4)]},
            scheme_name="balanced_ranges",
            thresholds=SCHEME.thresholds,
            test_day_count=4,
        )
        written = write_plots(tmp_path, report)
        assert written == ["analysis_mtan.png"]
        assert (tmp_path / "analysis_mtan.png").stat().st_size > 0
