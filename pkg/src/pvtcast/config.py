"""Run configuration: one YAML file drives every pipeline command.

Every key has a default, so an empty (or absent) config is a valid,
fully reproducible run. Unknown keys are rejected rather than ignored:
a typo that silently falls back to a default is worse than an error.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import date as Date
from typing import Any, Mapping

import yaml

from pvtcast.binning import PILOT_THRESHOLDS
from pvtcast.core import SCHEME_NAMES, InputError
from pvtcast.evaluate import DEFAULT_MARGIN_BOUNDS
from pvtcast.models import MODEL_KINDS, ModelConfig
from pvtcast.synth import SynthConfig
from pvtcast.train import TrainConfig

# per-kind architecture defaults; anything not listed falls back to ModelConfig
DEFAULT_MODEL_PARAMS: dict[str, dict[str, Any]] = {
    "rnn": {},
    "cyctime": {"num_layers": 2},
    "mtan": {},
}


@dataclass(frozen=True)
class PrepareConfig:
    day_offset_minutes: int = 60
    specific_heat: float = 4186.0  # J/(kg*K)
    collector_area: float = 8.6  # m2
    masked_limit: float = 0.25
    zero_floor: float = 0.05  # kWh
    expected_max: float = 2.0  # kWh


@dataclass(frozen=True)
class EvaluateConfig:
    margin_bounds: tuple[float, ...] = DEFAULT_MARGIN_BOUNDS
    plots: bool = False


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    prepare: PrepareConfig = field(default_factory=PrepareConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    scheme: str = "max_margins"
    scheme_thresholds: Mapping[str, tuple[float, ...]] = field(
        default_factory=lambda: dict(PILOT_THRESHOLDS)
    )
    model_params: Mapping[str, Mapping[str, Any]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_MODEL_PARAMS.items()}
    )

    def model_config(self, kind: str, feature_count: int) -> ModelConfig:
        if kind not in MODEL_KINDS:
            raise InputError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        params = dict(DEFAULT_MODEL_PARAMS[kind])
        params.update(self.model_params.get(kind, {}))
        try:
            return ModelConfig(model_kind=kind, feature_count=feature_count, **params)
        except (TypeError, ValueError) as exc:
            raise InputError(f"invalid model parameters for {kind}: {exc}") from None

    def as_dict(self) -> dict:
        """JSON-ready snapshot for run manifests."""

        def convert(value):
            if dataclasses.is_dataclass(value) and not isinstance(value, type):
                return {
                    f.name: convert(getattr(value, f.name))
                    for f in dataclasses.fields(value)
                }
            if isinstance(value, Date):
                return value.isoformat()
            if isinstance(value, Mapping):
                return {str(k): convert(v) for k, v in sorted(value.items())}
            if isinstance(value, (list, tuple)):
                return [convert(v) for v in value]
            return value

        return convert(self)


def _build_dataclass(cls, mapping: Mapping, where: str):
    if not isinstance(mapping, Mapping):
        raise InputError(f"config section {where!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise InputError(f"unknown key(s) in {where!r}: {', '.join(unknown)}")
    kwargs = dict(mapping)
    if cls is SynthConfig and "start_date" in kwargs:
        raw = kwargs["start_date"]
        if isinstance(raw, str):
            try:
                kwargs["start_date"] = Date.fromisoformat(raw)
            except ValueError as exc:
                raise InputError(f"{where}.start_date: {exc}") from None
        elif not isinstance(raw, Date):
            raise InputError(f"{where}.start_date must be an ISO date")
    if cls is TrainConfig and "seeds" in kwargs:
        kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
    if cls is EvaluateConfig and "margin_bounds" in kwargs:
        kwargs["margin_bounds"] = tuple(float(b) for b in kwargs["margin_bounds"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid {where!r} config: {exc}") from None


def config_from_mapping(raw: Mapping | None) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise InputError("config root must be a mapping")
    known = {"synth", "prepare", "train", "evaluate", "scheme", "schemes", "models"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InputError(f"unknown top-level config key(s): {', '.join(unknown)}")

    scheme = raw.get("scheme", "max_margins")
    if scheme not in SCHEME_NAMES:
        raise InputError(f"scheme must be one of {SCHEME_NAMES}, got {scheme!r}")

    thresholds = {name: tuple(values) for name, values in PILOT_THRESHOLDS.items()}
    for name, values in (raw.get("schemes") or {}).items():
        if name not in SCHEME_NAMES:
            raise InputError(f"schemes: unknown scheme {name!r}")
        values = tuple(float(v) for v in values)
        if len(values) != 4:
            raise InputError(f"schemes.{name}: expected 4 thresholds, got {len(values)}")
        thresholds[name] = values

    model_params: dict[str, dict] = {k: dict(v) for k, v in DEFAULT_MODEL_PARAMS.items()}
    for kind, params in (raw.get("models") or {}).items():
        if kind not in MODEL_KINDS:
            raise InputError(f"models: unknown model kind {kind!r}")
        if not isinstance(params, Mapping):
            raise InputError(f"models.{kind} must be a mapping")
        allowed = {
            "hidden_dim",
            "num_heads",
            "num_layers",
            "ref_points",
            "time_embed_dim",
            "dropout",
        }
        unknown = sorted(set(params) - allowed)
        if unknown:
            raise InputError(f"unknown key(s) in models.{kind}: {', '.join(unknown)}")
        merged = dict(model_params[kind])
        merged.update(params)
        model_params[kind] = merged

    return RunConfig(
        synth=_build_dataclass(SynthConfig, raw.get("synth", {}), "synth"),
        prepare=_build_dataclass(PrepareConfig, raw.get("prepare", {}), "prepare"),
        train=_build_dataclass(TrainConfig, raw.get("train", {}), "train"),
        evaluate=_build_dataclass(EvaluateConfig, raw.get("evaluate", {}), "evaluate"),
        scheme=scheme,
        scheme_thresholds=thresholds,
        model_params=model_params,
    )


def load_config(path: str | None) -> RunConfig:
    """Parse the YAML run config; None means all defaults."""
    if path is None:
        return config_from_mapping({})
    try:
        with open(path, encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: invalid YAML: {exc}") from None
    return config_from_mapping(raw)
