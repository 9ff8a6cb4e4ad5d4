"""Command-line pipeline: synth, prepare, train, evaluate, predict.

Every command reads the same YAML run config (all keys defaulted),
writes its outputs into --out, and drops a manifest.json recording the
resolved config, input digests, seeds, and output names. Nothing in any
output depends on the wall clock, so re-running a command from its
manifest reproduces the outputs byte for byte.

Exit codes: 0 success, 1 internal failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from pvtcast import __version__
from pvtcast.binning import label_days, scheme_from_energies
from pvtcast.config import RunConfig, load_config
from pvtcast.core import (
    SCHEME_NAMES,
    STEPS_PER_DAY,
    WINDOW_SECONDS,
    AllMaskedError,
    DayWindow,
    InputError,
    PvtcastError,
    ThresholdScheme,
    day_span_start,
    local_hour,
)
from pvtcast.dataset import read_days, write_days
from pvtcast.evaluate import (
    build_report,
    evaluate_checkpoint,
    margin,
    write_plots,
    write_report,
)
from pvtcast.ingest import (
    FEATURE_NAMES,
    QpvtParams,
    aggregate_weather,
    assemble_features,
    build_dataset,
    parse_sensor_csv,
    parse_weather_csv,
    split_train_test,
)
from pvtcast.models import MODEL_KINDS, distributions_from_log_probs, make_batch, predict_log_probs
from pvtcast.synth import write_dataset
from pvtcast.train import Checkpoint, train_all_seeds, write_loss_curve

log = logging.getLogger(__name__)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _ensure_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {path}: {exc}") from None
    return out


def _write_manifest(
    out_dir: Path,
    command: str,
    cfg: RunConfig,
    inputs: dict[str, str],
    outputs: list[str],
    seeds: list[int],
    extra: dict | None = None,
) -> None:
    manifest = {
        "command": command,
        "config": cfg.as_dict(),
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "outputs": sorted(outputs),
        "seeds": list(seeds),
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, sort_keys=True, indent=1)
        handle.write("\n")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    out = _ensure_dir(args.out)
    paths = write_dataset(cfg.synth, out)
    _write_manifest(
        out,
        "synth",
        cfg,
        inputs={},
        outputs=[Path(p).name for p in paths.values()],
        seeds=[cfg.synth.seed],
    )
    log.info("wrote %d-day synthetic dataset to %s", cfg.synth.days, out)
    return 0


def _resolve_scheme(cfg: RunConfig, name: str, train_days) -> tuple[ThresholdScheme, str]:
    if name == "balanced_classes":
        energies = np.concatenate(
            [day.qpvt_kwh[day.label_mask] for day in train_days]
        ) if train_days else np.array([])
        scheme = scheme_from_energies(
            name, energies, cfg.prepare.zero_floor, cfg.prepare.expected_max
        )
        return scheme, "computed-from-train-split"
    if name == "balanced_ranges":
        # equal widths from config, so the cut points follow expected_max
        scheme = scheme_from_energies(
            name, np.array([]), cfg.prepare.zero_floor, cfg.prepare.expected_max
        )
        return scheme, "config-defaults"
    return ThresholdScheme(name, cfg.scheme_thresholds[name]), "config-defaults"


def cmd_prepare(args) -> int:
    cfg = load_config(args.config)
    scheme_name = args.scheme or cfg.scheme
    out = _ensure_dir(args.out)
    sensor = parse_sensor_csv(args.sensor)
    weather = parse_weather_csv(args.weather)
    days = build_dataset(
        sensor,
        weather,
        day_offset_minutes=cfg.prepare.day_offset_minutes,
        qpvt_params=QpvtParams(
            specific_heat=cfg.prepare.specific_heat,
            collector_area=cfg.prepare.collector_area,
        ),
        masked_limit=cfg.prepare.masked_limit,
    )
    train_days, test_days = split_train_test(days)
    if not train_days:
        raise InputError("train split is empty; not enough data to prepare")
    scheme, source = _resolve_scheme(cfg, scheme_name, train_days)

    write_days(out / "train.jsonl", train_days, FEATURE_NAMES, cfg.prepare.day_offset_minutes)
    write_days(out / "test.jsonl", test_days, FEATURE_NAMES, cfg.prepare.day_offset_minutes)
    with open(out / "thresholds.json", "w", encoding="utf-8") as handle:
        json.dump(
            {"name": scheme.name, "source": source, "thresholds": list(scheme.thresholds)},
            handle,
            sort_keys=True,
        )
        handle.write("\n")
    _write_manifest(
        out,
        "prepare",
        cfg,
        inputs={"sensor_csv": args.sensor, "weather_csv": args.weather},
        outputs=["train.jsonl", "test.jsonl", "thresholds.json"],
        seeds=[],
        extra={"scheme": scheme.name, "train_days": len(train_days), "test_days": len(test_days)},
    )
    masked = sum(int((~d.label_mask).sum()) for d in days)
    log.info(
        "prepared %d train / %d test days (%s thresholds %s; %.1f%% masked labels)",
        len(train_days),
        len(test_days),
        scheme.name,
        scheme.thresholds,
        100.0 * masked / (len(days) * STEPS_PER_DAY),
    )
    return 0


def _load_scheme(data_dir: Path) -> ThresholdScheme:
    path = data_dir / "thresholds.json"
    try:
        with open(path, encoding="utf-8") as handle:
            obj = json.load(handle)
        return ThresholdScheme(obj["name"], tuple(obj["thresholds"]))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed thresholds file: {exc}") from None


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    data_dir = Path(args.data)
    out = _ensure_dir(args.out)
    train_set = read_days(data_dir / "train.jsonl")
    scheme = _load_scheme(data_dir)
    labeled = label_days(train_set.days, scheme)

    train_cfg = cfg.train
    if args.seeds:
        try:
            seeds = tuple(int(s) for s in args.seeds.split(","))
        except ValueError:
            raise InputError(f"--seeds must be a comma-separated integer list: {args.seeds!r}")
        train_cfg = type(train_cfg)(
            seeds=seeds,
            epochs=train_cfg.epochs,
            batch_size=train_cfg.batch_size,
            learning_rate=train_cfg.learning_rate,
            patience=train_cfg.patience,
            val_fraction=train_cfg.val_fraction,
        )
    model_cfg = cfg.model_config(args.model, len(train_set.feature_names))
    results, failures = train_all_seeds(
        labeled,
        scheme,
        model_cfg,
        train_cfg,
        train_set.feature_names,
        train_set.day_offset_minutes,
        jobs=args.jobs,
    )
    outputs = []
    for result in results:
        ckpt_name = f"checkpoint_{args.model}_seed{result.seed}.json"
        curve_name = f"loss_{args.model}_seed{result.seed}.csv"
        result.checkpoint.save(out / ckpt_name)
        write_loss_curve(out / curve_name, result.curve)
        outputs.extend([ckpt_name, curve_name])
    _write_manifest(
        out,
        "train",
        cfg,
        inputs={
            "train_set": data_dir / "train.jsonl",
            "thresholds": data_dir / "thresholds.json",
        },
        outputs=outputs,
        seeds=list(train_cfg.seeds),
        extra={
            "model": args.model,
            "failures": [{"seed": f.seed, "error": f.error} for f in failures],
        },
    )
    if not results:
        raise PvtcastError("all seeds failed to train; see manifest for details")
    log.info("trained %s on %d seed(s), %d failure(s)", args.model, len(results), len(failures))
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    data_dir = Path(args.data)
    out = _ensure_dir(args.out)
    test_set = read_days(data_dir / "test.jsonl")
    if not test_set.days:
        raise InputError("test split is empty; nothing to evaluate")
    scheme = _load_scheme(data_dir)
    labeled = label_days(test_set.days, scheme)

    per_model: dict[str, list] = {}
    inputs = {"test_set": data_dir / "test.jsonl", "thresholds": data_dir / "thresholds.json"}
    for pos, path in enumerate(args.checkpoints):
        ckpt = Checkpoint.load(path)
        if ckpt.scheme.name != scheme.name or ckpt.scheme.thresholds != scheme.thresholds:
            raise InputError(
                f"{path}: checkpoint was trained on scheme {ckpt.scheme.name} "
                f"{ckpt.scheme.thresholds}, dataset uses {scheme.name} {scheme.thresholds}"
            )
        if ckpt.feature_names != test_set.feature_names:
            raise InputError(
                f"{path}: checkpoint features {ckpt.feature_names} do not match "
                f"dataset features {test_set.feature_names}"
            )
        evaluation = evaluate_checkpoint(ckpt, labeled, cfg.evaluate.margin_bounds)
        per_model.setdefault(ckpt.model.model_kind, []).append(evaluation)
        inputs[f"checkpoint_{pos}"] = path

    report = build_report(per_model, scheme.name, scheme.thresholds, len(test_set.days))
    outputs = write_report(out, report)
    if args.plots or cfg.evaluate.plots:
        outputs.extend(write_plots(out, report))
    _write_manifest(out, "evaluate", cfg, inputs=inputs, outputs=outputs, seeds=[])
    log.info("evaluated %s; wrote %s", ", ".join(sorted(per_model)), out / "report.txt")
    sys.stdout.write(open(out / "report.txt", encoding="utf-8").read())
    return 0


def cmd_predict(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    if checkpoint.feature_names != FEATURE_NAMES:
        raise InputError(
            f"{args.checkpoint}: checkpoint features {checkpoint.feature_names} do not "
            f"match this pipeline's features {FEATURE_NAMES}"
        )
    weather = parse_weather_csv(args.weather)
    if not weather:
        raise InputError(f"{args.weather}: no weather rows")
    offset = weather[0].ts.local_offset_minutes
    date = weather[0].ts.local_date()
    span_start = day_span_start(date, offset, checkpoint.day_offset_minutes)
    features6, mask6 = aggregate_weather(weather, span_start)

    missing = [w for w in range(STEPS_PER_DAY) if not mask6[w].any()]
    if missing:
        windows = []
        for w in missing:
            start = local_hour(span_start.shifted(w * WINDOW_SECONDS))
            windows.append(f"window {w} ({start:04.1f}h-{(start + 3) % 24:04.1f}h local)")
        raise InputError(
            f"{args.weather}: day {date} is incomplete; no weather in: " + "; ".join(windows)
        )

    step_times = tuple(span_start.shifted(w * WINDOW_SECONDS) for w in range(STEPS_PER_DAY))
    features, feature_mask = assemble_features(date, step_times, features6, mask6)
    window = DayWindow(
        date=date,
        step_times=step_times,
        features=features,
        feature_mask=feature_mask,
        qpvt_kwh=np.zeros(STEPS_PER_DAY),
        label_mask=np.zeros(STEPS_PER_DAY, dtype=bool),
    )
    labeled = label_days([window], checkpoint.scheme)
    try:
        batch = make_batch(labeled, checkpoint.stats)
        log_probs = predict_log_probs(checkpoint.build(), batch)
    except AllMaskedError as exc:
        raise InputError(f"cannot predict with this checkpoint: {exc}") from None
    dists = distributions_from_log_probs(log_probs[0])

    rows = []
    for w, dist in enumerate(dists):
        start = window.step_times[w]
        rows.append(
            {
                "window": w,
                "start_local": start.to_iso(),
                "band": int(np.argmax(dist.probs)),
                "margin": margin(dist),
                "probs": list(dist.probs),
            }
        )
    print(f"date: {date}  scheme: {checkpoint.scheme.name} {checkpoint.scheme.thresholds}")
    print("window  start local         band  margin  " + "  ".join(f"p{c}" for c in range(5)))
    for row in rows:
        probs = "  ".join(f"{p:.2f}" for p in row["probs"])
        print(
            f"{row['window']:>6}  {row['start_local']}  {row['band']:>4}"
            f"  {row['margin']:.3f}  {probs}"
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(
                {"date": date.isoformat(), "scheme": checkpoint.scheme.name, "windows": rows},
                handle,
                sort_keys=True,
                indent=1,
            )
            handle.write("\n")
    return 0


# ------------------------------------------------------------------ entry


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvtcast",
        description="Heat-production band forecasting for solar (PVT) collectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p_synth.add_argument("--config", help="YAML run config")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    p_prep = sub.add_parser("prepare", help="build labeled train/test day files from CSVs")
    p_prep.add_argument("--sensor", required=True, help="collector sensor CSV")
    p_prep.add_argument("--weather", required=True, help="weather CSV")
    p_prep.add_argument("--scheme", choices=SCHEME_NAMES, help="threshold scheme")
    p_prep.add_argument("--config", help="YAML run config")
    p_prep.add_argument("--out", required=True, help="output directory")
    p_prep.set_defaults(func=cmd_prepare)

    p_train = sub.add_parser("train", help="train one model kind across seeds")
    p_train.add_argument("--data", required=True, help="directory from `prepare`")
    p_train.add_argument("--model", required=True, choices=MODEL_KINDS)
    p_train.add_argument("--seeds", help="comma-separated seed list (overrides config)")
    p_train.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    p_train.add_argument("--config", help="YAML run config")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate checkpoints on the test split")
    p_eval.add_argument("checkpoints", nargs="+", help="checkpoint JSON files")
    p_eval.add_argument("--data", required=True, help="directory from `prepare`")
    p_eval.add_argument("--plots", action="store_true", help="also render bar charts")
    p_eval.add_argument("--config", help="YAML run config")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.set_defaults(func=cmd_evaluate)

    p_pred = sub.add_parser("predict", help="predict one day's bands from weather")
    p_pred.add_argument("--checkpoint", required=True, help="trained checkpoint JSON")
    p_pred.add_argument("--weather", required=True, help="weather CSV covering the day")
    p_pred.add_argument("--out", help="also write predictions JSON here")
    p_pred.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    torch.set_num_threads(1)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return int(args.func(args) or 0)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PvtcastError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
