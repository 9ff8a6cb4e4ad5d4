"""Training: masked cross-entropy, the optimization loop, seeds, checkpoints.

Every source of randomness is derived from the run's integer seed
(parameter init, dropout, shuffling), and reductions run in a fixed
order, so two runs with the same seed produce bit-identical loss curves
and checkpoints. Checkpoints are a single JSON file carrying the model
config, parameters, normalization statistics and threshold scheme, so a
checkpoint alone suffices for prediction.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import torch

from pvtcast import __version__
from pvtcast.binning import LabeledDay
from pvtcast.core import InputError, ThresholdScheme, TrainingDivergedError
from pvtcast.models import (
    DayBatch,
    FeatureStats,
    ModelConfig,
    build_model,
    compute_feature_stats,
    make_batch,
    predict_log_probs,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pvtcast-checkpoint-v1"


@dataclass(frozen=True)
class TrainConfig:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    epochs: int = 80
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 20
    val_fraction: float = 0.1

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class LossCurve:
    """Per-epoch mean training loss; curves are compared normalized."""

    raw: tuple[float, ...]

    @property
    def normalization(self) -> float:
        return self.raw[0] if self.raw else math.nan

    def normalized(self) -> tuple[float, ...]:
        if not self.raw:
            return ()
        first = self.raw[0]
        if first == 0.0:
            return tuple(0.0 for _ in self.raw)
        return tuple(v / first for v in self.raw)


def write_loss_curve(path, curve: LossCurve) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch,raw_loss,normalized_loss\n")
        for epoch, (raw, norm) in enumerate(zip(curve.raw, curve.normalized()), start=1):
            handle.write(f"{epoch},{raw!r},{norm!r}\n")


def masked_cross_entropy(
    log_probs: torch.Tensor,  # (..., 8, C)
    labels: torch.Tensor,  # (..., 8) int64
    label_mask: torch.Tensor,  # (..., 8) bool
) -> tuple[torch.Tensor, int]:
    """Mean negative log-likelihood over observed steps, and their count.

    Masked steps contribute an exact zero (value and gradient); with no
    observed step at all the loss is 0 and the count 0 signals it.
    """
    observed = int(label_mask.sum())
    if observed == 0:
        return torch.zeros((), dtype=log_probs.dtype), 0
    classes = log_probs.shape[-1]
    safe_labels = labels.clamp(min=0, max=classes - 1)
    picked = log_probs.gather(-1, safe_labels.unsqueeze(-1)).squeeze(-1)
    loss = -(picked * label_mask.to(log_probs.dtype)).sum() / observed
    return loss, observed


# ------------------------------------------------------------- checkpoint


@dataclass(frozen=True)
class Checkpoint:
    """Self-describing trained model: config, parameters, and context."""

    model: ModelConfig
    params: dict
    stats: FeatureStats
    scheme: ThresholdScheme
    seed: int
    feature_names: tuple[str, ...]
    day_offset_minutes: int

    def build(self) -> torch.nn.Module:
        model = build_model(self.model)
        state = {
            key: torch.tensor(value, dtype=torch.float64) for key, value in self.params.items()
        }
        model.load_state_dict(state)
        model.eval()
        return model

    def save(self, path) -> None:
        obj = {
            "format": CHECKPOINT_FORMAT,
            "version": __version__,
            "model": {
                "model_kind": self.model.model_kind,
                "feature_count": self.model.feature_count,
                "hidden_dim": self.model.hidden_dim,
                "num_heads": self.model.num_heads,
                "num_layers": self.model.num_layers,
                "ref_points": self.model.ref_points,
                "time_embed_dim": self.model.time_embed_dim,
                "dropout": self.model.dropout,
                "class_count": self.model.class_count,
            },
            "params": self.params,
            "stats": {"mean": list(self.stats.mean), "std": list(self.stats.std)},
            "scheme": {"name": self.scheme.name, "thresholds": list(self.scheme.thresholds)},
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "day_offset_minutes": self.day_offset_minutes,
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(obj, handle, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            with open(path, encoding="utf-8") as handle:
                obj = json.load(handle)
        except OSError as exc:
            raise InputError(f"cannot read checkpoint {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid checkpoint JSON: {exc}") from None
        if obj.get("format") != CHECKPOINT_FORMAT:
            raise InputError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        try:
            return cls(
                model=ModelConfig(**obj["model"]),
                params=obj["params"],
                stats=FeatureStats(
                    mean=tuple(obj["stats"]["mean"]), std=tuple(obj["stats"]["std"])
                ),
                scheme=ThresholdScheme(
                    obj["scheme"]["name"], tuple(obj["scheme"]["thresholds"])
                ),
                seed=int(obj["seed"]),
                feature_names=tuple(obj["feature_names"]),
                day_offset_minutes=int(obj["day_offset_minutes"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: malformed checkpoint: {exc}") from None


# ------------------------------------------------------------------ loop


def _index_batch(batch: DayBatch, idx: torch.Tensor) -> DayBatch:
    return DayBatch(
        features=batch.features[idx],
        feature_mask=batch.feature_mask[idx],
        labels=batch.labels[idx],
        label_mask=batch.label_mask[idx],
        norm_times=batch.norm_times[idx],
        cyclic=batch.cyclic[idx],
    )


def usable_days(model_kind: str, days: Sequence[LabeledDay]) -> list[LabeledDay]:
    """Days a model can consume.

    The interpolation baseline cannot fill a feature that is missing at
    every step of a day, so such days are dropped for it (with a log
    message); the attention models keep every day.
    """
    if model_kind != "rnn":
        return list(days)
    usable = [d for d in days if bool(d.window.feature_mask.any(axis=0).all())]
    dropped = len(days) - len(usable)
    if dropped:
        log.warning(
            "interpolation baseline: dropped %d day(s) with a fully missing feature", dropped
        )
    return usable


def train_model(
    train_days: Sequence[LabeledDay],
    scheme: ThresholdScheme,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: int,
    feature_names: Sequence[str],
    day_offset_minutes: int,
) -> tuple[Checkpoint, LossCurve]:
    """One deterministic training run; returns best-validation parameters."""
    days = usable_days(model_cfg.model_kind, train_days)
    if not days:
        raise InputError("no usable training days")

    torch.manual_seed(seed)
    shuffler = torch.Generator()
    shuffler.manual_seed(seed)

    stats = compute_feature_stats([d.window for d in days])
    val_count = 0
    if train_cfg.val_fraction > 0 and len(days) >= 2:
        val_count = min(max(int(round(len(days) * train_cfg.val_fraction)), 1), len(days) - 1)
    fit_days = days[: len(days) - val_count]
    val_batch = make_batch(days[len(days) - val_count :], stats) if val_count else None
    fit_batch = make_batch(fit_days, stats)

    model = build_model(model_cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate)

    best_state = copy.deepcopy(model.state_dict())
    best_val = math.inf
    epochs_since_best = 0
    raw_curve: list[float] = []
    for epoch in range(train_cfg.epochs):
        model.train()
        order = torch.randperm(len(fit_days), generator=shuffler)
        loss_sum = 0.0
        observed_total = 0
        for chunk in order.split(train_cfg.batch_size):
            batch = _index_batch(fit_batch, chunk)
            loss, observed = masked_cross_entropy(model(batch), batch.labels, batch.label_mask)
            if observed == 0:
                continue
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += float(loss.detach()) * observed
            observed_total += observed
        epoch_loss = loss_sum / observed_total if observed_total else 0.0
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"{model_cfg.model_kind} seed {seed}: non-finite loss at epoch {epoch + 1}"
            )
        raw_curve.append(epoch_loss)

        if val_batch is not None:
            val_out = predict_log_probs(model, val_batch)
            val_loss_t, val_obs = masked_cross_entropy(
                val_out, val_batch.labels, val_batch.label_mask
            )
            val_loss = float(val_loss_t) if val_obs else epoch_loss
        else:
            val_loss = epoch_loss
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= train_cfg.patience:
                log.info(
                    "%s seed %d: early stop at epoch %d", model_cfg.model_kind, seed, epoch + 1
                )
                break

    checkpoint = Checkpoint(
        model=model_cfg,
        params={key: value.tolist() for key, value in best_state.items()},
        stats=stats,
        scheme=scheme,
        seed=seed,
        feature_names=tuple(feature_names),
        day_offset_minutes=day_offset_minutes,
    )
    return checkpoint, LossCurve(raw=tuple(raw_curve))


@dataclass(frozen=True)
class SeedFailure:
    seed: int
    error: str


@dataclass(frozen=True)
class SeedResult:
    seed: int
    checkpoint: Checkpoint
    curve: LossCurve


def _train_one(args) -> SeedResult:
    train_days, scheme, model_cfg, train_cfg, seed, feature_names, day_offset = args
    checkpoint, curve = train_model(
        train_days, scheme, model_cfg, train_cfg, seed, feature_names, day_offset
    )
    return SeedResult(seed=seed, checkpoint=checkpoint, curve=curve)


def train_all_seeds(
    train_days: Sequence[LabeledDay],
    scheme: ThresholdScheme,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    feature_names: Sequence[str],
    day_offset_minutes: int,
    jobs: int = 1,
) -> tuple[list[SeedResult], list[SeedFailure]]:
    """Train one run per configured seed; failures do not abort the rest."""
    tasks = [
        (list(train_days), scheme, model_cfg, train_cfg, seed, tuple(feature_names),
         day_offset_minutes)
        for seed in train_cfg.seeds
    ]
    results: list[SeedResult] = []
    failures: list[SeedFailure] = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_one, task) for task in tasks]
            for task, future in zip(tasks, futures):
                try:
                    results.append(future.result())
                except (TrainingDivergedError, InputError) as exc:
                    failures.append(SeedFailure(seed=task[4], error=str(exc)))
    else:
        for task in tasks:
            try:
                results.append(_train_one(task))
            except (TrainingDivergedError, InputError) as exc:
                failures.append(SeedFailure(seed=task[4], error=str(exc)))
    for failure in failures:
        log.error("seed %d failed: %s", failure.seed, failure.error)
    return results, failures
