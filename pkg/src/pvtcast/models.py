"""The three day-sequence classifiers.

- RnnClassifier: linear interpolation fills missing features, then a
  gated recurrent network and a per-step linear classifier. The
  baseline: it sees neither masks nor clock time.
- CycTimeClassifier: a transformer encoder over steps whose inputs carry
  fixed cyclic encodings of hour/day-of-year/month, the zeroed features,
  and their mask bits; a decoder projects back to feature width before
  the linear classifier.
- MtanClassifier: attention from a grid of reference-time embeddings to
  the 8 observation-time embeddings, computed per feature so each
  feature keeps its own mask; attended values are mean-pooled down to
  the 8 steps and classified linearly.

Everything runs in float64 so finite-difference gradient checks are
meaningful and CPU runs are reproducible. Masking is exact: masked
observations receive literal zero attention weight or a literal zero
input, never a small epsilon, so masked sentinels can never leak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from pvtcast.binning import LabeledDay
from pvtcast.core import (
    CLASS_COUNT,
    STEPS_PER_DAY,
    AllMaskedError,
    ClassDistribution,
    DayWindow,
)
from pvtcast.timefeat import TimeEmbedding, cyclic_features

MODEL_KINDS = ("rnn", "cyctime", "mtan")


@dataclass(frozen=True)
class ModelConfig:
    model_kind: str
    feature_count: int
    hidden_dim: int = 64
    num_heads: int = 2
    num_layers: int = 1
    ref_points: int = 32  # mtan only
    time_embed_dim: int = 32  # mtan only
    dropout: float = 0.1
    class_count: int = CLASS_COUNT

    def __post_init__(self) -> None:
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}; expected {MODEL_KINDS}")
        if self.feature_count < 1:
            raise ValueError("feature_count must be positive")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} must be divisible by num_heads {self.num_heads}"
            )
        if self.model_kind == "mtan":
            if self.ref_points % STEPS_PER_DAY != 0:
                raise ValueError(
                    f"ref_points {self.ref_points} must be a multiple of {STEPS_PER_DAY}"
                )
            if self.time_embed_dim % self.num_heads != 0:
                raise ValueError(
                    f"time_embed_dim {self.time_embed_dim} must be divisible by "
                    f"num_heads {self.num_heads}"
                )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature standardization constants, fitted on the train split."""

    mean: tuple[float, ...]
    std: tuple[float, ...]

    def apply(self, features: torch.Tensor) -> torch.Tensor:
        mean = torch.tensor(self.mean, dtype=features.dtype)
        std = torch.tensor(self.std, dtype=features.dtype)
        return (features - mean) / std


def compute_feature_stats(days: Sequence[DayWindow]) -> FeatureStats:
    """Mean/std of each feature over observed entries only.

    Features observed nowhere (or constant) get mean 0 / std 1 so
    standardization stays a well-defined affine map.
    """
    if not days:
        raise ValueError("cannot compute feature statistics of an empty split")
    feats = np.stack([d.features for d in days])  # (N, 8, F)
    mask = np.stack([d.feature_mask for d in days])
    count = mask.sum(axis=(0, 1))
    total = np.where(mask, feats, 0.0).sum(axis=(0, 1))
    mean = np.where(count > 0, total / np.maximum(count, 1), 0.0)
    sq = (np.where(mask, feats - mean, 0.0) ** 2).sum(axis=(0, 1))
    var = np.where(count > 0, sq / np.maximum(count, 1), 1.0)
    std = np.sqrt(var)
    std = np.where(std < 1e-12, 1.0, std)
    return FeatureStats(mean=tuple(float(m) for m in mean), std=tuple(float(s) for s in std))


@dataclass(frozen=True)
class DayBatch:
    """Tensor view of labeled days, standardized and ready for a model.

    Feature values at masked positions are whatever the standardization
    produced from the stored sentinel; models must neutralize them via
    their masks, never by assuming the sentinel.
    """

    features: torch.Tensor  # (B, 8, F) float64, standardized
    feature_mask: torch.Tensor  # (B, 8, F) bool
    labels: torch.Tensor  # (B, 8) int64
    label_mask: torch.Tensor  # (B, 8) bool
    norm_times: torch.Tensor  # (B, 8) float64, within-day position in [0, 1)
    cyclic: torch.Tensor  # (B, 8, 6) float64

    def __len__(self) -> int:
        return self.features.shape[0]


def make_batch(days: Sequence[LabeledDay], stats: FeatureStats) -> DayBatch:
    features = torch.tensor(np.stack([d.window.features for d in days]), dtype=torch.float64)
    feature_mask = torch.tensor(np.stack([d.window.feature_mask for d in days]))
    labels = torch.tensor([d.labels for d in days], dtype=torch.int64)
    label_mask = torch.tensor(np.stack([d.window.label_mask for d in days]))
    cyclic = torch.tensor(
        [[cyclic_features(ts).as_tuple() for ts in d.window.step_times] for d in days],
        dtype=torch.float64,
    )
    steps = torch.arange(STEPS_PER_DAY, dtype=torch.float64) / STEPS_PER_DAY
    norm_times = steps.expand(len(days), STEPS_PER_DAY)
    return DayBatch(
        features=stats.apply(features),
        feature_mask=feature_mask,
        labels=labels,
        label_mask=label_mask,
        norm_times=norm_times,
        cyclic=cyclic,
    )


# ---------------------------------------------------------- interpolation


def interpolate_series(values: Sequence[float], mask: Sequence[bool]) -> list[float]:
    """Fill masked entries of one series by linear interpolation.

    Interior gaps interpolate between the nearest observed neighbours;
    masked boundaries copy the nearest observed value. Reference
    implementation for the batched version below.
    """
    observed = [i for i, m in enumerate(mask) if m]
    if not observed:
        raise AllMaskedError("cannot interpolate a fully masked series")
    xs = np.arange(len(values), dtype=np.float64)
    obs_vals = [float(values[i]) for i in observed]
    return np.interp(xs, np.asarray(observed, dtype=np.float64), obs_vals).tolist()


def masked_linear_interpolate(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Batched linear interpolation along dim 1 of a (B, T, F) tensor.

    Gradients flow only into observed entries: the neighbour lookups
    gather exclusively observed positions, and boundary fills select the
    single observed side.
    """
    if not bool(mask.any(dim=1).all()):
        bad = (~mask.any(dim=1)).nonzero().tolist()
        raise AllMaskedError(f"fully masked series at (day, feature) indices {bad}")
    steps, dtype = values.shape[1], values.dtype
    pos = torch.arange(steps).view(1, steps, 1).expand_as(values)
    prev_idx = torch.where(mask, pos, -1).cummax(dim=1).values
    next_idx = torch.where(mask, pos, steps).flip(1).cummin(dim=1).values.flip(1)
    left = prev_idx.clamp(min=0)
    right = next_idx.clamp(max=steps - 1)
    left_val = values.gather(1, left)
    right_val = values.gather(1, right)
    span = (next_idx - prev_idx).to(dtype)
    weight = (pos - prev_idx).to(dtype) / span.clamp(min=1.0)
    interior = left_val + weight * (right_val - left_val)
    out = torch.where(prev_idx < 0, right_val, interior)
    return torch.where(next_idx >= steps, left_val, out)


# ----------------------------------------------------------------- models


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor, dim: int) -> torch.Tensor:
    """Softmax restricted to masked-in positions, with exact zeros outside.

    Rows whose support is empty come out as all zeros (they contribute
    nothing downstream) instead of NaN.
    """
    filled = scores.masked_fill(~mask, float("-inf"))
    peak = filled.amax(dim=dim, keepdim=True)
    peak = torch.where(torch.isfinite(peak), peak, torch.zeros_like(peak))
    weights = torch.exp(filled - peak)  # exp(-inf) == 0 exactly
    denom = weights.sum(dim=dim, keepdim=True)
    return weights / denom.clamp(min=torch.finfo(scores.dtype).tiny)


@dataclass(frozen=True)
class AttentionOutput:
    """One day's attention internals, for inspection and verification."""

    values: np.ndarray  # (ref_points, hidden) re-represented inputs before pooling
    weights: np.ndarray  # (heads, ref_points, 8, F) weights over observations


class MultiTimeAttention(nn.Module):
    """Attention from reference-time embeddings to observation-time embeddings.

    Scores are shared across features (time similarity only), but the
    softmax support is per feature: each feature excludes its own masked
    observations, so differently gapped features attend differently.
    """

    def __init__(self, embed_dim: int, num_heads: int, feature_count: int, hidden_dim: int):
        super().__init__()
        if embed_dim % num_heads != 0:
            raise ValueError(f"embed_dim {embed_dim} not divisible by num_heads {num_heads}")
        self.embed_dim = embed_dim
        self.num_heads = num_heads
        self.head_dim = embed_dim // num_heads
        self.feature_count = feature_count
        self.query_proj = nn.Linear(embed_dim, embed_dim, dtype=torch.float64)
        self.key_proj = nn.Linear(embed_dim, embed_dim, dtype=torch.float64)
        self.output_proj = nn.Linear(num_heads * feature_count, hidden_dim, dtype=torch.float64)

    def attention_weights(
        self,
        ref_embed: torch.Tensor,  # (R, E)
        obs_embed: torch.Tensor,  # (B, T, E)
        mask: torch.Tensor,  # (B, T, F) bool
    ) -> torch.Tensor:
        batch, obs_steps, _ = obs_embed.shape
        ref_points = ref_embed.shape[0]
        q = self.query_proj(ref_embed).view(ref_points, self.num_heads, self.head_dim)
        k = self.key_proj(obs_embed).view(batch, obs_steps, self.num_heads, self.head_dim)
        # (h, R, d) x (B, h, d, T) -> (B, h, R, T)
        scores = torch.matmul(q.permute(1, 0, 2), k.permute(0, 2, 3, 1))
        scores = scores / math.sqrt(self.head_dim)
        scores = scores.unsqueeze(-1).expand(
            batch, self.num_heads, ref_points, obs_steps, self.feature_count
        )
        support = mask.view(batch, 1, 1, obs_steps, self.feature_count)
        return masked_softmax(scores, support.expand_as(scores), dim=3)

    def forward(
        self,
        ref_embed: torch.Tensor,
        obs_embed: torch.Tensor,
        values: torch.Tensor,  # (B, T, F)
        mask: torch.Tensor,  # (B, T, F) bool
    ) -> tuple[torch.Tensor, torch.Tensor]:
        weights = self.attention_weights(ref_embed, obs_embed, mask)
        batch, obs_steps, _ = values.shape
        spread = values.view(batch, 1, 1, obs_steps, self.feature_count)
        attended = (weights * spread).sum(dim=3)  # (B, h, R, F)
        merged = attended.permute(0, 2, 1, 3).reshape(
            batch, -1, self.num_heads * self.feature_count
        )
        return self.output_proj(merged), weights


class MtanClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.model_kind != "mtan":
            raise ValueError(f"config is for {cfg.model_kind}, not mtan")
        self.cfg = cfg
        self.time_embed = TimeEmbedding(cfg.time_embed_dim)
        self.attention = MultiTimeAttention(
            cfg.time_embed_dim, cfg.num_heads, cfg.feature_count, cfg.hidden_dim
        )
        self.register_buffer(
            "ref_times", torch.linspace(0.0, 1.0, cfg.ref_points, dtype=torch.float64)
        )
        self.dropout = nn.Dropout(cfg.dropout)
        self.classifier = nn.Linear(cfg.hidden_dim, cfg.class_count, dtype=torch.float64)

    def _reference_hidden(self, batch: DayBatch) -> tuple[torch.Tensor, torch.Tensor]:
        ref_embed = self.time_embed(self.ref_times)
        obs_embed = self.time_embed(batch.norm_times)
        return self.attention(ref_embed, obs_embed, batch.features, batch.feature_mask)

    def forward(self, batch: DayBatch) -> torch.Tensor:
        hidden, _ = self._reference_hidden(batch)
        size = len(batch)
        group = self.cfg.ref_points // STEPS_PER_DAY
        pooled = hidden.view(size, STEPS_PER_DAY, group, self.cfg.hidden_dim).mean(dim=2)
        return torch.log_softmax(self.classifier(self.dropout(pooled)), dim=-1)

    def attention_details(self, batch: DayBatch, index: int = 0) -> AttentionOutput:
        """Attention internals for one day of the batch (eval mode math)."""
        with torch.no_grad():
            hidden, weights = self._reference_hidden(batch)
        return AttentionOutput(
            values=hidden[index].numpy(),
            weights=weights[index].numpy(),
        )


class CycTimeClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.model_kind != "cyctime":
            raise ValueError(f"config is for {cfg.model_kind}, not cyctime")
        self.cfg = cfg
        input_dim = cfg.feature_count * 2 + 6  # zeroed features + mask bits + cyclic pairs
        self.input_proj = nn.Linear(input_dim, cfg.hidden_dim, dtype=torch.float64)
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.hidden_dim,
            nhead=cfg.num_heads,
            dim_feedforward=2 * cfg.hidden_dim,
            dropout=cfg.dropout,
            activation="gelu",
            batch_first=True,
            dtype=torch.float64,
        )
        self.encoder = nn.TransformerEncoder(layer, cfg.num_layers, enable_nested_tensor=False)
        self.decoder = nn.Linear(cfg.hidden_dim, cfg.feature_count, dtype=torch.float64)
        self.classifier = nn.Linear(cfg.feature_count, cfg.class_count, dtype=torch.float64)

    def forward(self, batch: DayBatch) -> torch.Tensor:
        mask = batch.feature_mask.to(batch.features.dtype)
        x = torch.cat([batch.features * mask, mask, batch.cyclic], dim=-1)
        hidden = self.encoder(self.input_proj(x))
        recon = self.decoder(hidden)
        return torch.log_softmax(self.classifier(recon), dim=-1)


class RnnClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.model_kind != "rnn":
            raise ValueError(f"config is for {cfg.model_kind}, not rnn")
        self.cfg = cfg
        self.rnn = nn.GRU(
            input_size=cfg.feature_count,
            hidden_size=cfg.hidden_dim,
            num_layers=cfg.num_layers,
            batch_first=True,
            dropout=cfg.dropout if cfg.num_layers > 1 else 0.0,
            dtype=torch.float64,
        )
        self.dropout = nn.Dropout(cfg.dropout)
        self.classifier = nn.Linear(cfg.hidden_dim, cfg.class_count, dtype=torch.float64)

    def forward(self, batch: DayBatch) -> torch.Tensor:
        filled = masked_linear_interpolate(batch.features, batch.feature_mask)
        hidden, _ = self.rnn(filled)
        return torch.log_softmax(self.classifier(self.dropout(hidden)), dim=-1)


def build_model(cfg: ModelConfig) -> nn.Module:
    if cfg.model_kind == "rnn":
        return RnnClassifier(cfg)
    if cfg.model_kind == "cyctime":
        return CycTimeClassifier(cfg)
    if cfg.model_kind == "mtan":
        return MtanClassifier(cfg)
    raise ValueError(f"unknown model kind {cfg.model_kind!r}")


def predict_log_probs(model: nn.Module, batch: DayBatch) -> torch.Tensor:
    """Deterministic (eval-mode) log class probabilities, (B, 8, C)."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(batch)
    finally:
        model.train(was_training)
    return out


def distributions_from_log_probs(log_probs: torch.Tensor) -> list[ClassDistribution]:
    """Convert one day's (8, C) log probabilities to ClassDistributions."""
    probs = torch.exp(log_probs).numpy()
    rows = probs / probs.sum(axis=-1, keepdims=True)
    return [ClassDistribution(tuple(float(p) for p in row)) for row in rows]
