"""Non-exemplar class-incremental learning with diffusion-based feature replay.

A frozen extractor (pretrained once with rotation label augmentation plus a
stop-gradient Siamese loss) turns the image stream into feature vectors. Each
phase fits per-class calibration stats and a class-conditional feature
diffusion model; later phases replay old classes by sampling the generators
instead of storing exemplars, and a single growing linear classifier is
trained on real + replayed features.
"""

__version__ = "0.1.0"

from .calibration import compute_stats, denormalize_by_class, normalize_by_class
from .config import DiffusionTrainConfig, ExperimentConfig
from .diffusion import (
    GeneratorCheckpoint,
    GeneratorConfig,
    cfg_combine,
    sample_features,
    train_generator,
)
from .harness import emit_plots, replay_eval, run_experiment
from .metrics import AccuracyMatrix, average_forgetting, average_incremental_accuracy
from .schedule import NoiseSchedule, forward_diffuse, make_schedule
from .store import ClassStats, FeatureSet
from .unet import UNet1D, UNet1DConfig, count_parameters

__all__ = [
    "AccuracyMatrix",
    "ClassStats",
    "DiffusionTrainConfig",
    "ExperimentConfig",
    "FeatureSet",
    "GeneratorCheckpoint",
    "GeneratorConfig",
    "NoiseSchedule",
    "UNet1D",
    "UNet1DConfig",
    "average_forgetting",
    "average_incremental_accuracy",
    "cfg_combine",
    "compute_stats",
    "count_parameters",
    "denormalize_by_class",
    "emit_plots",
    "forward_diffuse",
    "make_schedule",
    "normalize_by_class",
    "replay_eval",
    "run_experiment",
    "sample_features",
    "train_generator",
]
