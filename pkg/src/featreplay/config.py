"""Experiment configuration and its flat text format.

Configs serialize as one dotted key per line (``extractor.epochs = 100``) and
round-trip losslessly: every field is written, floats use repr, and parsing is
typed off the dataclass annotations. Unknown keys are an error; missing keys
fall back to defaults.
"""

from __future__ import annotations

import types
import typing
from dataclasses import dataclass, field, fields, is_dataclass

from .classifier import ClassifierTrainConfig
from .pretrain import ExtractorConfig

BASELINES = ("replay", "masked", "gaussian")


@dataclass(frozen=True)
class DiffusionTrainConfig:
    """Per-experiment generator knobs; feature dim and class count come per phase."""

    num_steps: int = 20
    iterations: int = 100_000
    batch_size: int = 64
    learning_rate: float = 8e-5
    ema_decay: float = 0.995
    cond_drop_prob: float = 0.1
    embed_dim: int = 128
    width_multiplier_initial: int = 2
    width_multiplier_incremental: int = 1
    sampling_steps: int | None = None  # None = full chain
    guidance_scale: float = 1.0
    train_final_generator: bool = True  # the phase-T generator is never sampled


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "shapes"
    dataset_root: str = "./data"
    download: bool = False
    initial_classes: int = 5
    num_incremental: int = 5
    seed: int = 1993
    output_dir: str = "runs/exp"
    baseline: str = "replay"
    replay_per_class: int | None = None  # None = match current phase's per-class count
    enhanced_augmentation: bool = False
    shapes_per_class_train: int = 150
    shapes_per_class_test: int = 60
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    diffusion: DiffusionTrainConfig = field(default_factory=DiffusionTrainConfig)
    classifier: ClassifierTrainConfig = field(default_factory=ClassifierTrainConfig)

    def __post_init__(self):
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")


def _encode(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _decode(text: str, annotation):
    origin = typing.get_origin(annotation)
    if origin in (types.UnionType, typing.Union):
        members = [a for a in typing.get_args(annotation) if a is not type(None)]
        if text == "none":
            return None
        return _decode(text, members[0])
    if annotation is bool:
        try:
            return {"true": True, "false": False}[text]
        except KeyError:
            raise ValueError(f"expected true/false, got {text!r}") from None
    if annotation is int:
        return int(text)
    if annotation is float:
        return float(text)
    if annotation is str:
        return text
    raise TypeError(f"unsupported config field type {annotation!r}")


def _flatten(obj, prefix: str, out: dict[str, str]) -> None:
    for f in fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if is_dataclass(value):
            _flatten(value, key + ".", out)
        else:
            out[key] = _encode(value)


def to_text(config: ExperimentConfig) -> str:
    flat: dict[str, str] = {}
    _flatten(config, "", flat)
    lines = ["# experiment configuration"]
    lines += [f"{key} = {value}" for key, value in flat.items()]
    return "\n".join(lines) + "\n"


def _build(cls, mapping: dict[str, str], prefix: str = ""):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in fields(cls):
        key = f"{prefix}{f.name}"
        annotation = hints[f.name]
        if isinstance(annotation, type) and is_dataclass(annotation):
            kwargs[f.name] = _build(annotation, mapping, key + ".")
        elif key in mapping:
            kwargs[f.name] = _decode(mapping.pop(key), annotation)
    return cls(**kwargs)


def from_text(text: str) -> ExperimentConfig:
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    config = _build(ExperimentConfig, mapping)
    if mapping:
        raise ValueError(f"unknown config keys: {sorted(mapping)}")
    return config


def save_config(path, config: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(config))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return from_text(fh.read())
