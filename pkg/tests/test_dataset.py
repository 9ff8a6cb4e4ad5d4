"""JSON-lines day files: bit-exact round-trip and schema validation."""

import json

import numpy as np
import pytest

from conftest import random_labeled_days
from pvtcast.core import InputError
from pvtcast.dataset import FORMAT_NAME, read_days, write_days

NAMES = ("a", "b", "c")


def _days(count=5):
    rng = np.random.default_rng(41)
    return [d.window for d in random_labeled_days(rng, count, feature_count=3)]


def test_round_trip_is_bit_exact(tmp_path):
    days = _days()
    path = tmp_path / "days.jsonl"
    write_days(path, days, NAMES, 60)
    loaded = read_days(path)
    assert loaded.feature_names == NAMES
    assert loaded.day_offset_minutes == 60
    assert len(loaded.days) == len(days)
    for orig, back in zip(days, loaded.days):
        assert back.date == orig.date
        assert back.step_times == orig.step_times
        assert np.array_equal(back.feature_mask, orig.feature_mask)
        assert np.array_equal(back.label_mask, orig.label_mask)
        # observed values byte-identical; masked slots normalized to 0
        assert np.array_equal(
            back.features, np.where(orig.feature_mask, orig.features, 0.0)
        )
        assert np.array_equal(back.qpvt_kwh, np.where(orig.label_mask, orig.qpvt_kwh, 0.0))


def test_rewrite_is_byte_identical(tmp_path):
    days = _days()
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    write_days(first, days, NAMES, 60)
    write_days(second, read_days(first).days, NAMES, 60)
    assert first.read_bytes() == second.read_bytes()


def test_empty_dataset_round_trips(tmp_path):
    path = tmp_path / "empty.jsonl"
    write_days(path, [], NAMES, 60)
    loaded = read_days(path)
    assert loaded.days == ()


def test_feature_count_mismatch_on_write(tmp_path):
    with pytest.raises(ValueError, match="features"):
        write_days(tmp_path / "bad.jsonl", _days(1), ("only", "two"), 60)


def test_feature_count_mismatch_on_read(tmp_path):
    path = tmp_path / "days.jsonl"
    write_days(path, _days(1), NAMES, 60)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["feature_names"] = ["a", "b"]
    path.write_text("\n".join([json.dumps(header, sort_keys=True)] + lines[1:]) + "\n")
    with pytest.raises(InputError, match="declared"):
        read_days(path)


def test_wrong_format_marker(tmp_path):
    path = tmp_path / "days.jsonl"
    path.write_text(json.dumps({"format": "something-else"}) + "\n")
    with pytest.raises(InputError, match=FORMAT_NAME):
        read_days(path)


def test_corrupt_day_line_reports_line_number(tmp_path):
    path = tmp_path / "days.jsonl"
    write_days(path, _days(2), NAMES, 60)
    lines = path.read_text().splitlines()
    lines[2] = "{not json"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InputError, match="line 3"):
        read_days(path)


def test_missing_file(tmp_path):
    with pytest.raises(InputError, match="cannot read"):
        read_days(tmp_path / "absent.jsonl")
