"""Desk-scale benchmark recipes shared by tests, scripts and the CLI.

Two workloads:

* banana_oracle: trains the feature generator on a curved 2-d distribution
  and scores generated samples against held-out real ones with unbiased MMD,
  alongside the moment-matched Gaussian baseline it must beat.
* the small CIL benchmark: 10 procedural image classes, 5 initial + 5
  single-class phases, small CNN backbone, with the diffusion-replay run and
  the masked-softmax / Gaussian-prototype baselines sharing one pretrained
  extractor per seed.
"""

from __future__ import annotations

import shutil
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .calibration import compute_stats, denormalize_by_class, normalize_by_class
from .classifier import ClassifierTrainConfig
from .config import DiffusionTrainConfig, ExperimentConfig
from .diffusion import GeneratorCheckpoint, GeneratorConfig, sample_features, train_generator
from .harness import replay_eval, run_experiment
from .pretrain import ExtractorConfig
from .schedule import make_schedule
from .synthetic import SyntheticSpec, gaussian_prototype_baseline, mmd, sample_synthetic


def banana_oracle(
    seed: int,
    train_samples: int = 50_000,
    holdout_samples: int = 2_000,
    generated_samples: int = 2_000,
    iterations: int = 2_500,
    batch_size: int = 128,
    learning_rate: float = 3e-4,
    num_steps: int = 20,
) -> dict:
    """Train on the banana distribution; report MMD(generated) vs MMD(gaussian)."""
    params = ({"mean": [0.0, 0.0], "curvature": 1.0},)
    train = sample_synthetic(SyntheticSpec("banana", 2, train_samples, seed, params))
    holdout = sample_synthetic(SyntheticSpec("banana", 2, holdout_samples, seed + 555, params))

    stats = compute_stats(train.features, class_id=0)
    normalized = normalize_by_class(train.features, stats)
    gcfg = GeneratorConfig(
        feature_dim=2,
        num_classes=1,
        num_steps=num_steps,
        iterations=iterations,
        batch_size=batch_size,
        learning_rate=learning_rate,
        seed=seed,
    )
    schedule = make_schedule(num_steps)
    model, ema, _ = train_generator(normalized, np.zeros(len(train), dtype=np.int64), gcfg, schedule)
    sampler = GeneratorCheckpoint.from_training(
        model, ema, gcfg, schedule, class_ids=(0,), trained_iterations=iterations
    ).build_model(use_ema=True)
    raw = sample_features(
        sampler,
        schedule,
        np.zeros(generated_samples, dtype=np.int64),
        feature_dim=2,
        generator=torch.Generator().manual_seed(seed + 99),
    )
    generated = denormalize_by_class(raw, stats)
    baseline = gaussian_prototype_baseline(
        stats, generated_samples, np.random.default_rng(seed + 100)
    )
    mmd_diffusion = mmd(generated, holdout.features)
    mmd_gaussian = mmd(baseline, holdout.features)
    return {
        "seed": seed,
        "mmd_diffusion": mmd_diffusion,
        "mmd_gaussian": mmd_gaussian,
        "improved": mmd_diffusion < mmd_gaussian,
    }


def benchmark_config(
    seed: int,
    variant: str,
    output_dir,
    extractor_epochs: int = 25,
    diffusion_iterations: int = 1_500,
    diffusion_lr: float = 3e-4,
    per_class_train: int = 150,
    per_class_test: int = 60,
) -> ExperimentConfig:
    """10-class shapes stream: 5 initial classes plus 5 single-class phases."""
    return ExperimentConfig(
        dataset="shapes",
        initial_classes=5,
        num_incremental=5,
        seed=seed,
        output_dir=str(output_dir),
        baseline=variant,
        shapes_per_class_train=per_class_train,
        shapes_per_class_test=per_class_test,
        extractor=ExtractorConfig(
            backbone="smallconv",
            epochs=extractor_epochs,
            batch_size=32,
            learning_rate=0.1,
            seed=seed,
        ),
        diffusion=DiffusionTrainConfig(
            iterations=diffusion_iterations,
            learning_rate=diffusion_lr,
            train_final_generator=False,
        ),
        classifier=ClassifierTrainConfig(seed=seed),
    )


def _reuse_shared_stages(target: Path, source: Path) -> None:
    """Copy the pretrained extractor and feature caches from a sibling run."""
    target.mkdir(parents=True, exist_ok=True)
    for name in ("extractor.pt", "pretrain_loss.txt", "pretrain.done", "features.done"):
        if (source / name).exists() and not (target / name).exists():
            shutil.copy2(source / name, target / name)
    if (source / "features").exists() and not (target / "features").exists():
        shutil.copytree(source / "features", target / "features")


def run_small_benchmark(
    seed: int,
    variant: str,
    output_dir,
    reuse_dir=None,
    log=None,
    **knobs,
) -> dict:
    config = benchmark_config(seed, variant, output_dir, **knobs)
    if reuse_dir is not None:
        _reuse_shared_stages(Path(output_dir), Path(reuse_dir))
    return run_experiment(config, log=log)


def run_benchmark_suite(workdir, seeds=(0, 1, 2), log=None, **knobs) -> dict:
    """All arms of the small benchmark plus the sampling-step / guidance evals.

    Returns per-seed A_T lists keyed by arm name, plus their means.
    """
    workdir = Path(workdir)
    arms = {"replay": [], "masked": [], "gaussian": [], "steps10": [], "scale5": []}
    for seed in seeds:
        replay_dir = workdir / f"seed{seed}_replay"
        if log:
            log(f"benchmark seed {seed}: diffusion replay arm")
        result = run_small_benchmark(seed, "replay", replay_dir, log=log, **knobs)
        arms["replay"].append(result["average_incremental_accuracy"])
        for variant in ("masked", "gaussian"):
            if log:
                log(f"benchmark seed {seed}: {variant} arm")
            vdir = workdir / f"seed{seed}_{variant}"
            result = run_small_benchmark(seed, variant, vdir, reuse_dir=replay_dir, log=log, **knobs)
            arms[variant].append(result["average_incremental_accuracy"])
        if log:
            log(f"benchmark seed {seed}: 10-step and scale-5 evals")
        arms["steps10"].append(
            replay_eval(replay_dir, sampling_steps=10)["average_incremental_accuracy"]
        )
        arms["scale5"].append(
            replay_eval(replay_dir, guidance_scale=5.0)["average_incremental_accuracy"]
        )
    summary = {name: values for name, values in arms.items()}
    summary["means"] = {name: sum(v) / len(v) for name, v in arms.items()}
    summary["seeds"] = list(seeds)
    return summary
