"""Class-conditional feature diffusion: training, guidance, sampling.

Feature vectors are diffused in normalized space (see calibration). The noise
predictor is the slim 1-D U-Net; vectors whose dimension is not a multiple of
the network's total downsampling factor are zero-padded transparently and
cropped after sampling.

Sampling runs the full ancestral chain by default. Asking for fewer steps than
the schedule has switches to deterministic step-skipping (eta = 0) on an evenly
spaced subsequence, reusing the same trained predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from .schedule import NoiseSchedule, make_schedule
from .store import FeatureSet
from .unet import UNet1D, UNet1DConfig, count_parameters, padded_length


@dataclass(frozen=True)
class GeneratorConfig:
    feature_dim: int
    num_classes: int
    num_steps: int = 20
    width_multiplier: int = 1
    embed_dim: int = 128
    iterations: int = 100_000
    batch_size: int = 64
    learning_rate: float = 8e-5
    ema_decay: float = 0.995
    cond_drop_prob: float = 0.1
    seed: int = 1993

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if not 0.0 <= self.cond_drop_prob < 1.0:
            raise ValueError("cond_drop_prob must lie in [0, 1)")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")

    def unet_config(self) -> UNet1DConfig:
        return UNet1DConfig(
            num_classes=self.num_classes,
            width_multiplier=self.width_multiplier,
            embed_dim=self.embed_dim,
        )

    def to_dict(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "num_classes": self.num_classes,
            "num_steps": self.num_steps,
            "width_multiplier": self.width_multiplier,
            "embed_dim": self.embed_dim,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "ema_decay": self.ema_decay,
            "cond_drop_prob": self.cond_drop_prob,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GeneratorConfig":
        return cls(**payload)


class EmaWeights:
    """Exponential moving average of a module's parameters and buffers."""

    def __init__(self, module: torch.nn.Module, decay: float):
        self.decay = decay
        self.shadow = {k: v.detach().clone().float() for k, v in module.state_dict().items()}

    @torch.no_grad()
    def update(self, module: torch.nn.Module) -> None:
        for key, value in module.state_dict().items():
            shadow = self.shadow[key]
            if value.dtype.is_floating_point:
                shadow.mul_(self.decay).add_(value.float(), alpha=1.0 - self.decay)
            else:
                shadow.copy_(value)

    def copy_to(self, module: torch.nn.Module) -> None:
        state = module.state_dict()
        module.load_state_dict(
            {k: v.to(state[k].dtype) for k, v in self.shadow.items()}
        )

    def state_dict(self) -> dict:
        return {k: v.clone() for k, v in self.shadow.items()}

    def load_state_dict(self, state: dict) -> None:
        self.shadow = {k: v.clone().float() for k, v in state.items()}


def cfg_combine(eps_uncond: torch.Tensor, eps_cond: torch.Tensor, scale: float) -> torch.Tensor:
    """Guided noise estimate eps_u + scale * (eps_c - eps_u).

    scale 1 and scale 0 return the conditional / unconditional estimate as-is
    so the degenerate settings stay bitwise equal to single-branch sampling.
    """
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError("guidance branches must have matching shapes")
    if scale == 1.0:
        return eps_cond
    if scale == 0.0:
        return eps_uncond
    return eps_uncond + scale * (eps_cond - eps_uncond)


def _pad_features(features: torch.Tensor, target: int) -> torch.Tensor:
    if features.shape[1] == target:
        return features
    return F.pad(features, (0, target - features.shape[1]))


def train_generator(
    features: np.ndarray,
    labels: np.ndarray,
    config: GeneratorConfig,
    schedule: NoiseSchedule | None = None,
    log_every: int = 0,
) -> tuple[UNet1D, EmaWeights, list[float]]:
    """Train the noise predictor on normalized features.

    Returns the online model, its EMA shadow, and the logged loss values.
    Conditioning labels are replaced by the null token with probability
    ``cond_drop_prob`` each iteration so guidance has an unconditional branch.
    """
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise ValueError("features must be (n, d)")
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree on sample count")
    if features.shape[1] != config.feature_dim:
        raise ValueError(
            f"feature dim {features.shape[1]} does not match config {config.feature_dim}"
        )
    if labels.min() < 0 or labels.max() >= config.num_classes:
        raise ValueError("labels out of range for configured class count")
    if schedule is None:
        schedule = make_schedule(config.num_steps)
    if schedule.num_steps != config.num_steps:
        raise ValueError("schedule length differs from config.num_steps")

    generator = torch.Generator().manual_seed(config.seed)
    torch.manual_seed(config.seed)  # weight init determinism
    model = UNet1D(config.unet_config())
    model.train()
    ema = EmaWeights(model, config.ema_decay)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    target_len = padded_length(config.feature_dim)
    data = _pad_features(torch.from_numpy(features), target_len)
    label_tensor = torch.from_numpy(labels)
    sqrt_bars = torch.from_numpy(np.sqrt(schedule.alpha_bars)).float()
    sqrt_one_minus = torch.from_numpy(np.sqrt(1.0 - schedule.alpha_bars)).float()
    null_token = torch.tensor(config.num_classes, dtype=torch.int64)

    losses: list[float] = []
    n = data.shape[0]
    for iteration in range(config.iterations):
        idx = torch.randint(0, n, (config.batch_size,), generator=generator)
        x0 = data[idx]
        cond = label_tensor[idx].clone()
        if config.cond_drop_prob > 0.0:
            drop = torch.rand(config.batch_size, generator=generator) < config.cond_drop_prob
            cond[drop] = null_token
        steps = torch.randint(1, config.num_steps + 1, (config.batch_size,), generator=generator)
        noise = torch.randn(x0.shape, generator=generator)
        x_k = sqrt_bars[steps - 1, None] * x0 + sqrt_one_minus[steps - 1, None] * noise

        predicted = model(x_k[:, None, :], steps, cond)[:, 0, :]
        loss = F.mse_loss(predicted, noise)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        ema.update(model)
        if log_every and (iteration % log_every == 0 or iteration == config.iterations - 1):
            losses.append(float(loss.detach()))
    model.eval()
    return model, ema, losses


def _predict_noise(
    model: UNet1D,
    x: torch.Tensor,
    step: int,
    class_ids: torch.Tensor,
    guidance_scale: float,
) -> torch.Tensor:
    steps = torch.full((x.shape[0],), step, dtype=torch.int64)
    if guidance_scale == 1.0:
        return model(x[:, None, :], steps, class_ids)[:, 0, :]
    null = torch.full_like(class_ids, model.null_class)
    if guidance_scale == 0.0:
        return model(x[:, None, :], steps, null)[:, 0, :]
    eps_cond = model(x[:, None, :], steps, class_ids)[:, 0, :]
    eps_uncond = model(x[:, None, :], steps, null)[:, 0, :]
    return cfg_combine(eps_uncond, eps_cond, guidance_scale)


def _skip_sequence(num_steps: int, num_sampling_steps: int) -> list[int]:
    # evenly spaced subsequence of schedule indices, descending, ending at 0
    taus = np.linspace(0, num_steps, num_sampling_steps + 1)
    taus = sorted({int(round(t)) for t in taus})
    return list(reversed(taus))


@torch.no_grad()
def sample_features(
    model: UNet1D,
    schedule: NoiseSchedule,
    class_ids: np.ndarray,
    feature_dim: int,
    num_sampling_steps: int | None = None,
    guidance_scale: float = 1.0,
    generator: torch.Generator | None = None,
) -> np.ndarray:
    """Draw normalized feature vectors for the given class indices.

    The full schedule runs the stochastic ancestral chain; any shorter step
    count runs the deterministic skipping sampler on the same model.
    """
    was_training = model.training
    model.eval()
    try:
        class_tensor = torch.from_numpy(np.asarray(class_ids, dtype=np.int64))
        if class_tensor.ndim != 1:
            raise ValueError("class_ids must be a flat index array")
        n = class_tensor.shape[0]
        target_len = padded_length(feature_dim)
        if generator is None:
            generator = torch.Generator().manual_seed(0)
        x = torch.randn((n, target_len), generator=generator)
        k_max = schedule.num_steps
        steps = k_max if num_sampling_steps is None else num_sampling_steps
        if not 1 <= steps <= k_max:
            raise ValueError(f"sampling steps must lie in [1, {k_max}]")

        if steps == k_max:
            for k in range(k_max, 0, -1):
                eps = _predict_noise(model, x, k, class_tensor, guidance_scale)
                beta = schedule.betas[k - 1]
                alpha = schedule.alphas[k - 1]
                bar = schedule.alpha_bars[k - 1]
                mean = (x - beta / math.sqrt(1.0 - bar) * eps) / math.sqrt(alpha)
                if k > 1:
                    sigma = schedule.posterior_std(k)
                    x = mean + sigma * torch.randn(x.shape, generator=generator)
                else:
                    x = mean
        else:
            taus = _skip_sequence(k_max, steps)
            for k_hi, k_lo in zip(taus[:-1], taus[1:]):
                eps = _predict_noise(model, x, k_hi, class_tensor, guidance_scale)
                bar_hi = schedule.alpha_bar(k_hi)
                bar_lo = schedule.alpha_bar(k_lo)
                x0_hat = (x - math.sqrt(1.0 - bar_hi) * eps) / math.sqrt(bar_hi)
                x = math.sqrt(bar_lo) * x0_hat + math.sqrt(1.0 - bar_lo) * eps
        return x[:, :feature_dim].numpy().astype(np.float64)
    finally:
        if was_training:
            model.train()


def synthesize_feature_set(
    model: UNet1D,
    schedule: NoiseSchedule,
    stats_by_class: dict,
    per_class: int,
    feature_dim: int,
    phase: int = 0,
    num_sampling_steps: int | None = None,
    guidance_scale: float = 1.0,
    seed: int = 0,
    class_tokens: dict[int, int] | None = None,
) -> FeatureSet:
    """Sample per_class normalized vectors per class and denormalize them.

    class_tokens maps global class ids to the model's condition indices; per
    phase generators are trained on local 0..m-1 tokens. Identity by default.
    """
    from .calibration import denormalize_by_class

    class_ids = sorted(stats_by_class)
    labels = np.repeat(np.asarray(class_ids, dtype=np.int64), per_class)
    tokens = labels if class_tokens is None else np.asarray(
        [class_tokens[int(c)] for c in labels], dtype=np.int64
    )
    generator = torch.Generator().manual_seed(seed)
    raw = sample_features(
        model,
        schedule,
        tokens,
        feature_dim,
        num_sampling_steps=num_sampling_steps,
        guidance_scale=guidance_scale,
        generator=generator,
    )
    parts = []
    for offset, class_id in enumerate(class_ids):
        block = raw[offset * per_class : (offset + 1) * per_class]
        parts.append(denormalize_by_class(block, stats_by_class[class_id]))
    return FeatureSet(
        features=np.concatenate(parts, axis=0), labels=labels, phase=phase
    )


@dataclass
class GeneratorCheckpoint:
    """Everything needed to resume or sample: config, weights, schedule, classes.

    class_ids lists the global class ids this generator covers, in condition
    token order (token for class_ids[i] is i).
    """

    config: GeneratorConfig
    model_state: dict
    ema_state: dict
    schedule: NoiseSchedule
    class_ids: tuple[int, ...] = ()
    trained_iterations: int = 0

    def save(self, path) -> None:
        torch.save(
            {
                "config": self.config.to_dict(),
                "model_state": self.model_state,
                "ema_state": self.ema_state,
                "schedule": self.schedule.to_dict(),
                "class_ids": list(self.class_ids),
                "trained_iterations": self.trained_iterations,
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "GeneratorCheckpoint":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        return cls(
            config=GeneratorConfig.from_dict(payload["config"]),
            model_state=payload["model_state"],
            ema_state=payload["ema_state"],
            schedule=NoiseSchedule.from_dict(payload["schedule"]),
            class_ids=tuple(payload["class_ids"]),
            trained_iterations=payload["trained_iterations"],
        )

    @classmethod
    def from_training(
        cls,
        model: UNet1D,
        ema: EmaWeights,
        config: GeneratorConfig,
        schedule: NoiseSchedule,
        class_ids=(),
        trained_iterations: int = 0,
    ) -> "GeneratorCheckpoint":
        return cls(
            config=config,
            model_state={k: v.clone() for k, v in model.state_dict().items()},
            ema_state=ema.state_dict(),
            schedule=schedule,
            class_ids=tuple(int(c) for c in class_ids),
            trained_iterations=trained_iterations,
        )

    def class_tokens(self) -> dict[int, int]:
        return {int(c): i for i, c in enumerate(self.class_ids)}

    def build_model(self, use_ema: bool = True) -> UNet1D:
        model = UNet1D(self.config.unet_config())
        state = self.ema_state if use_ema else self.model_state
        target = model.state_dict()
        model.load_state_dict({k: v.to(target[k].dtype) for k, v in state.items()})
        model.eval()
        return model
