"""Unified incremental classifier over frozen features.

A single linear head grows with each phase: new rows are appended (small
Gaussian init) while old rows are untouched at extension time. Phase training
mixes the phase's real features with replayed old-class features and minimizes
cross-entropy over all registered classes. The no-replay baseline instead
restricts the softmax to the current phase's classes (masked softmax).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .store import FeatureSet


@dataclass(frozen=True)
class ClassifierTrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 1993

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ClassifierTrainConfig":
        return cls(**payload)


@dataclass(frozen=True)
class ClassifierState:
    weight: np.ndarray  # (num_classes, feature_dim) float32
    bias: np.ndarray  # (num_classes,) float32
    class_ids: tuple[int, ...]  # registry; row i scores class_ids[i]
    phase: int

    def __post_init__(self):
        if self.weight.shape[0] != len(self.class_ids) or self.bias.shape[0] != len(self.class_ids):
            raise ValueError("row count must equal registry size")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValueError("duplicate class ids in registry")

    @classmethod
    def empty(cls, feature_dim: int) -> "ClassifierState":
        return cls(
            weight=np.zeros((0, feature_dim), dtype=np.float32),
            bias=np.zeros(0, dtype=np.float32),
            class_ids=(),
            phase=-1,
        )

    @property
    def feature_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    def row_of(self, class_id: int) -> int:
        return self.class_ids.index(class_id)

    def save(self, path) -> None:
        np.savez(
            path,
            weight=self.weight,
            bias=self.bias,
            class_ids=np.asarray(self.class_ids, dtype=np.int64),
            phase=np.asarray(self.phase, dtype=np.int64),
        )

    @classmethod
    def load(cls, path) -> "ClassifierState":
        data = np.load(path)
        return cls(
            weight=data["weight"],
            bias=data["bias"],
            class_ids=tuple(int(c) for c in data["class_ids"]),
            phase=int(data["phase"]),
        )


NEW_ROW_STD = 0.01


def extend_classifier(state: ClassifierState, new_class_ids, seed: int = 0) -> ClassifierState:
    """Append rows for new classes; existing rows are copied bit-for-bit."""
    new_ids = tuple(int(c) for c in new_class_ids)
    if len(set(new_ids)) != len(new_ids):
        raise ValueError("duplicate ids in extension")
    overlap = set(new_ids) & set(state.class_ids)
    if overlap:
        raise ValueError(f"classes already registered: {sorted(overlap)}")
    if not new_ids:
        return state
    rng = np.random.default_rng(seed)
    rows = rng.normal(0.0, NEW_ROW_STD, size=(len(new_ids), state.feature_dim)).astype(np.float32)
    return ClassifierState(
        weight=np.concatenate([state.weight, rows], axis=0),
        bias=np.concatenate([state.bias, np.zeros(len(new_ids), dtype=np.float32)]),
        class_ids=state.class_ids + new_ids,
        phase=state.phase,
    )


@dataclass(frozen=True)
class ReplayPlan:
    """How many features to generate per old class and from which checkpoint."""

    counts: dict[int, int]
    sources: dict[int, str] = field(default_factory=dict)

    def validate_covers(self, old_class_ids) -> None:
        missing = sorted(set(old_class_ids) - set(self.counts))
        if missing:
            raise ValueError(f"replay plan missing old classes: {missing}")

    @classmethod
    def balanced(cls, old_class_ids, per_class: int, sources: dict[int, str] | None = None) -> "ReplayPlan":
        return cls(counts={int(c): per_class for c in old_class_ids}, sources=sources or {})


def _fit(
    state: ClassifierState,
    features: np.ndarray,
    rows: np.ndarray,
    config: ClassifierTrainConfig,
    active_columns: np.ndarray | None = None,
) -> tuple[ClassifierState, list[float]]:
    """SGD + cosine annealing on cross-entropy; optionally mask the softmax.

    `rows` are registry row indices. With active_columns set, the loss is
    computed on that logit sub-vector only (labels re-indexed into it), so old
    rows receive no gradient at all.
    """
    weight = torch.from_numpy(state.weight.copy()).requires_grad_(True)
    bias = torch.from_numpy(state.bias.copy()).requires_grad_(True)
    optimizer = torch.optim.SGD(
        [weight, bias], lr=config.learning_rate, momentum=config.momentum, weight_decay=config.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=config.epochs)
    x = torch.from_numpy(np.asarray(features, dtype=np.float32))
    y = torch.from_numpy(np.asarray(rows, dtype=np.int64))
    columns = None
    if active_columns is not None:
        columns = torch.from_numpy(np.asarray(active_columns, dtype=np.int64))
        remap = {int(c): i for i, c in enumerate(active_columns)}
        y = torch.tensor([remap[int(r)] for r in rows], dtype=torch.int64)
    generator = torch.Generator().manual_seed(config.seed)
    n = x.shape[0]
    losses = []
    for _ in range(config.epochs):
        order = torch.randperm(n, generator=generator)
        total, batches = 0.0, 0
        for start in range(0, n, config.batch_size):
            take = order[start : start + config.batch_size]
            logits = x[take] @ weight.T + bias
            if columns is not None:
                logits = logits[:, columns]
            loss = F.cross_entropy(logits, y[take])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            batches += 1
        scheduler.step()
        losses.append(total / batches)
    new_state = ClassifierState(
        weight=weight.detach().numpy().astype(np.float32),
        bias=bias.detach().numpy().astype(np.float32),
        class_ids=state.class_ids,
        phase=state.phase,
    )
    return new_state, losses


def _rows_for_labels(state: ClassifierState, labels: np.ndarray) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(state.class_ids)}
    try:
        return np.asarray([lookup[int(l)] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc} not registered in classifier") from exc


def train_phase(
    state: ClassifierState,
    real: FeatureSet,
    replay: FeatureSet | None,
    config: ClassifierTrainConfig,
    phase: int,
) -> tuple[ClassifierState, list[float]]:
    """Cross-entropy over the union of real and replayed features, shuffled together."""
    new_classes = set(real.class_ids())
    old_classes = set(state.class_ids) - new_classes
    if old_classes:
        if replay is None:
            raise ValueError(f"replay required for old classes {sorted(old_classes)}")
        missing = old_classes - set(replay.class_ids())
        if missing:
            raise ValueError(f"replay does not cover old classes: {sorted(missing)}")
    if replay is not None and len(replay):
        features = np.concatenate([real.features, replay.features], axis=0)
        labels = np.concatenate([real.labels, replay.labels])
    else:
        features, labels = real.features, real.labels
    trained, losses = _fit(state, features, _rows_for_labels(state, labels), config)
    return (
        ClassifierState(trained.weight, trained.bias, trained.class_ids, phase),
        losses,
    )


def train_phase_masked_baseline(
    state: ClassifierState,
    real: FeatureSet,
    config: ClassifierTrainConfig,
    phase: int,
) -> tuple[ClassifierState, list[float]]:
    """No replay: softmax restricted to the current phase's classes."""
    current = sorted(real.class_ids())
    active = np.asarray([state.row_of(c) for c in current], dtype=np.int64)
    trained, losses = _fit(state, real.features, _rows_for_labels(state, real.labels), config, active)
    return (
        ClassifierState(trained.weight, trained.bias, trained.class_ids, phase),
        losses,
    )


def predict(state: ClassifierState, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax over all registered classes; ties break to the lowest class id."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != state.feature_dim:
        raise ValueError(
            f"expected (n, {state.feature_dim}) features, got {features.shape}"
        )
    logits = features @ state.weight.astype(np.float64).T + state.bias.astype(np.float64)
    order = np.argsort(state.class_ids)  # scan columns in ascending class id
    best = order[np.argmax(logits[:, order], axis=1)]
    ids = np.asarray(state.class_ids, dtype=np.int64)[best]
    return ids, logits


def accuracy(state: ClassifierState, features: np.ndarray, labels: np.ndarray) -> float:
    """Percent correct under predict()."""
    predicted, _ = predict(state, features)
    return float(100.0 * np.mean(predicted == np.asarray(labels)))
