"""End-to-end experiment orchestration.

A run directory is self-describing: config, phase manifests, extractor
checkpoint, per-phase feature caches, class stats, generator checkpoints,
classifier checkpoints, metrics report and plots. Every stage drops a
``<stage>.done`` marker; rerunning the same config skips completed stages, so
a crashed run resumes where it stopped.

Stage order per run: pretrain -> features -> for each phase t: stats ->
generator -> classifier(+eval). Baselines reuse the same skeleton: ``masked``
skips stats/generator and trains with a softmax restricted to new classes;
``gaussian`` skips the generator and replays moment-matched Gaussian draws.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .calibration import compute_stats_per_class, normalize_set
from .classifier import (
    ClassifierState,
    ReplayPlan,
    accuracy,
    extend_classifier,
    train_phase,
    train_phase_masked_baseline,
)
from .config import ExperimentConfig, load_config, save_config
from .datasets import load_dataset
from .diffusion import (
    GeneratorCheckpoint,
    GeneratorConfig,
    synthesize_feature_set,
    train_generator,
)
from .metrics import (
    AccuracyMatrix,
    average_forgetting,
    average_incremental_accuracy,
    render_report,
)
from .pretrain import extract_features, load_extractor, save_extractor, train_extractor
from .schedule import make_schedule
from .store import FeatureSet, read_class_stats, read_feature_cache, write_class_stats, write_feature_cache
from .tasks import AugmentationPolicy, TaskStream, read_manifests, write_manifests


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def _done(directory: Path, stage: str) -> bool:
    return (directory / f"{stage}.done").exists()


def _mark(directory: Path, stage: str) -> None:
    (directory / f"{stage}.done").write_text("ok\n", encoding="utf-8")


def _phase_dir(run: Path, t: int) -> Path:
    return run / f"phase_{t:02d}"


def _log(log, message: str) -> None:
    if log is not None:
        log(message)


def _replay_counts(config: ExperimentConfig, real: FeatureSet) -> int:
    if config.replay_per_class is not None:
        return config.replay_per_class
    return max(1, round(len(real) / len(real.class_ids())))


def build_replay(
    run: Path,
    config: ExperimentConfig,
    phase: int,
    per_class: int,
    feature_dim: int,
    sampling_steps: int | None,
    guidance_scale: float,
) -> tuple[FeatureSet, ReplayPlan]:
    """Synthesize features for every class of every phase before `phase`."""
    parts: list[FeatureSet] = []
    counts: dict[int, int] = {}
    sources: dict[int, str] = {}
    for tau in range(phase):
        pdir = _phase_dir(run, tau)
        stats = read_class_stats(pdir / "stats.bin")
        if config.baseline == "gaussian":
            from .synthetic import gaussian_prototype_baseline

            for class_id in sorted(stats):
                rng = np.random.default_rng(config.seed + 7919 * phase + 13 * class_id)
                feats = gaussian_prototype_baseline(stats[class_id], per_class, rng)
                parts.append(
                    FeatureSet(feats, np.full(per_class, class_id, dtype=np.int64), phase=tau)
                )
                counts[class_id] = per_class
                sources[class_id] = f"gaussian:phase_{tau:02d}"
        else:
            checkpoint = GeneratorCheckpoint.load(pdir / "generator.pt")
            model = checkpoint.build_model(use_ema=True)
            parts.append(
                synthesize_feature_set(
                    model,
                    checkpoint.schedule,
                    stats,
                    per_class,
                    feature_dim,
                    phase=tau,
                    num_sampling_steps=sampling_steps,
                    guidance_scale=guidance_scale,
                    seed=config.seed + 7919 * phase + 13 * tau,
                    class_tokens=checkpoint.class_tokens(),
                )
            )
            for class_id in checkpoint.class_ids:
                counts[class_id] = per_class
                sources[class_id] = str(pdir / "generator.pt")
    replay = FeatureSet.concat(parts)
    return replay, ReplayPlan(counts=counts, sources=sources)


def _evaluate_phase(
    matrix: AccuracyMatrix,
    state: ClassifierState,
    test_sets: dict[int, FeatureSet],
    t: int,
) -> None:
    seen_parts = []
    for j in range(t + 1):
        task = test_sets[j]
        matrix.set_task(t, j, accuracy(state, task.features, task.labels))
        seen_parts.append(task)
    union = FeatureSet.concat(seen_parts)
    matrix.set_seen(t, accuracy(state, union.features, union.labels))


def _summary(run: Path, matrix: AccuracyMatrix) -> dict:
    phases = sorted(matrix.seen_acc)
    a_t = average_incremental_accuracy([matrix.seen(t) for t in phases])
    last = phases[-1]
    f_t = average_forgetting(matrix, last) if last >= 1 else float("nan")
    return {
        "run_dir": str(run),
        "matrix": matrix,
        "average_incremental_accuracy": a_t,
        "average_forgetting": f_t,
        "report": render_report(matrix),
    }


def run_experiment(config: ExperimentConfig, log=None) -> dict:
    run = Path(config.output_dir)
    run.mkdir(parents=True, exist_ok=True)
    save_config(run / "config.txt", config)

    dataset = load_dataset(
        config.dataset,
        config.dataset_root,
        download=config.download,
        shapes_per_class_train=config.shapes_per_class_train,
        shapes_per_class_test=config.shapes_per_class_test,
        shapes_seed=config.seed,
    )
    stream = TaskStream(dataset, config.initial_classes, config.num_incremental, config.seed)
    policy = AugmentationPolicy.for_dataset(config.dataset, config.enhanced_augmentation)
    write_manifests(run / "manifests_train.txt", stream.manifests("train"))
    write_manifests(run / "manifests_test.txt", stream.manifests("test"))

    # stage: pretrain the extractor on phase 0, then freeze it for good
    extractor_path = run / "extractor.pt"
    if not _done(run, "pretrain"):
        try:
            _log(log, "stage pretrain: training extractor")
            backbone, losses = train_extractor(stream, policy, config.extractor)
            save_extractor(extractor_path, config.extractor.backbone, backbone, config.extractor.seed)
            (run / "pretrain_loss.txt").write_text(
                "".join(f"{i}\t{v:.6f}\n" for i, v in enumerate(losses)), encoding="utf-8"
            )
        except Exception as exc:
            raise StageError("pretrain", exc) from exc
        _mark(run, "pretrain")
    backbone, _meta = load_extractor(extractor_path)
    feature_dim = backbone.feature_dim

    # stage: cache deterministic features for every phase and split
    features_dir = run / "features"
    features_dir.mkdir(exist_ok=True)
    if not _done(run, "features"):
        try:
            _log(log, "stage features: caching frozen-extractor features")
            for t in range(stream.num_phases):
                for split in ("train", "test"):
                    images, labels = stream.phase_arrays(t, split)
                    feats = extract_features(backbone, images, policy)
                    write_feature_cache(
                        features_dir / f"{split}_{t:02d}.bin",
                        FeatureSet(feats, labels, phase=t),
                    )
        except Exception as exc:
            raise StageError("features", exc) from exc
        _mark(run, "features")
    train_sets = {
        t: read_feature_cache(features_dir / f"train_{t:02d}.bin") for t in range(stream.num_phases)
    }
    test_sets = {
        t: read_feature_cache(features_dir / f"test_{t:02d}.bin") for t in range(stream.num_phases)
    }

    metrics_path = run / "metrics.json"
    matrix = AccuracyMatrix.from_json(metrics_path) if metrics_path.exists() else AccuracyMatrix(
        stream.num_phases
    )
    schedule = make_schedule(config.diffusion.num_steps)
    state: ClassifierState | None = None

    for t in range(stream.num_phases):
        pdir = _phase_dir(run, t)
        pdir.mkdir(exist_ok=True)
        real = train_sets[t]
        class_ids = sorted(stream.class_ids(t))

        if config.baseline in ("replay", "gaussian") and not _done(pdir, "stats"):
            try:
                _log(log, f"stage phase_{t:02d}/stats")
                stats = compute_stats_per_class(real)
                write_class_stats(pdir / "stats.bin", [stats[c] for c in sorted(stats)])
            except Exception as exc:
                raise StageError(f"phase_{t:02d}/stats", exc) from exc
            _mark(pdir, "stats")

        last_phase = t == stream.num_phases - 1
        wants_generator = config.baseline == "replay" and (
            not last_phase or config.diffusion.train_final_generator
        )
        if wants_generator and not _done(pdir, "generator"):
            try:
                _log(log, f"stage phase_{t:02d}/generator ({config.diffusion.iterations} iters)")
                stats = read_class_stats(pdir / "stats.bin")
                normalized = normalize_set(real, stats)
                tokens = np.asarray([class_ids.index(int(c)) for c in normalized.labels])
                dcfg = config.diffusion
                gcfg = GeneratorConfig(
                    feature_dim=feature_dim,
                    num_classes=len(class_ids),
                    num_steps=dcfg.num_steps,
                    width_multiplier=dcfg.width_multiplier_initial
                    if t == 0
                    else dcfg.width_multiplier_incremental,
                    embed_dim=dcfg.embed_dim,
                    iterations=dcfg.iterations,
                    batch_size=dcfg.batch_size,
                    learning_rate=dcfg.learning_rate,
                    ema_decay=dcfg.ema_decay,
                    cond_drop_prob=dcfg.cond_drop_prob,
                    seed=config.seed + 101 * t,
                )
                model, ema, _losses = train_generator(
                    normalized.features, tokens, gcfg, schedule
                )
                GeneratorCheckpoint.from_training(
                    model, ema, gcfg, schedule, class_ids=class_ids,
                    trained_iterations=gcfg.iterations,
                ).save(pdir / "generator.pt")
            except Exception as exc:
                raise StageError(f"phase_{t:02d}/generator", exc) from exc
            _mark(pdir, "generator")

        if not _done(pdir, "classifier"):
            try:
                _log(log, f"stage phase_{t:02d}/classifier")
                if state is None:
                    state = (
                        ClassifierState.empty(feature_dim)
                        if t == 0
                        else ClassifierState.load(_phase_dir(run, t - 1) / "classifier.npz")
                    )
                state = extend_classifier(state, class_ids, seed=config.seed + t)
                if t == 0 or config.baseline == "masked":
                    if t == 0:
                        state, _ = train_phase(state, real, None, config.classifier, phase=t)
                    else:
                        state, _ = train_phase_masked_baseline(state, real, config.classifier, phase=t)
                else:
                    replay, plan = build_replay(
                        run,
                        config,
                        t,
                        _replay_counts(config, real),
                        feature_dim,
                        config.diffusion.sampling_steps,
                        config.diffusion.guidance_scale,
                    )
                    plan.validate_covers(set(state.class_ids) - set(class_ids))
                    state, _ = train_phase(state, real, replay, config.classifier, phase=t)
                state.save(pdir / "classifier.npz")
                _evaluate_phase(matrix, state, test_sets, t)
                matrix.to_json(metrics_path)
            except Exception as exc:
                raise StageError(f"phase_{t:02d}/classifier", exc) from exc
            _mark(pdir, "classifier")
        else:
            state = None  # reload lazily if a later phase needs it

    (run / "metrics.txt").write_text(render_report(matrix), encoding="utf-8")
    emit_plots(run)
    return _summary(run, matrix)


def replay_eval(
    run_dir,
    sampling_steps: int | None = None,
    guidance_scale: float = 1.0,
    label: str | None = None,
    log=None,
) -> dict:
    """Re-run classifier phases with different sampling settings.

    Generators, stats and feature caches from the finished run are reused:
    nothing is retrained except the (cheap) per-phase classifiers, which is
    what "sampling without retraining" means operationally.
    """
    run = Path(run_dir)
    config = load_config(run / "config.txt")
    if config.baseline != "replay":
        raise ValueError("replay_eval requires a diffusion-replay run")
    manifests = read_manifests(run / "manifests_train.txt")
    num_phases = len(manifests)
    train_sets = {
        t: read_feature_cache(run / "features" / f"train_{t:02d}.bin") for t in range(num_phases)
    }
    test_sets = {
        t: read_feature_cache(run / "features" / f"test_{t:02d}.bin") for t in range(num_phases)
    }
    feature_dim = train_sets[0].dim

    tag = label or f"steps_{sampling_steps or 'full'}_scale_{guidance_scale:g}"
    out = run / "evals" / tag
    out.mkdir(parents=True, exist_ok=True)
    matrix = AccuracyMatrix(num_phases)
    state = ClassifierState.empty(feature_dim)
    for t in range(num_phases):
        _log(log, f"replay_eval phase {t}")
        real = train_sets[t]
        class_ids = sorted(manifests[t].class_ids)
        state = extend_classifier(state, class_ids, seed=config.seed + t)
        if t == 0:
            state, _ = train_phase(state, real, None, config.classifier, phase=t)
        else:
            replay, _plan = build_replay(
                run, config, t, _replay_counts(config, real), feature_dim,
                sampling_steps, guidance_scale,
            )
            state, _ = train_phase(state, real, replay, config.classifier, phase=t)
        _evaluate_phase(matrix, state, test_sets, t)
    matrix.to_json(out / "metrics.json")
    (out / "metrics.txt").write_text(render_report(matrix), encoding="utf-8")
    return _summary(out, matrix)


def emit_plots(run_dir) -> list[str]:
    """Accuracy curve plus old/new-class accuracy curves from metrics.json."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run = Path(run_dir)
    metrics_path = run / "metrics.json"
    if not metrics_path.exists():
        raise FileNotFoundError(f"no metrics report at {metrics_path}")
    matrix = AccuracyMatrix.from_json(metrics_path)
    phases = sorted(matrix.seen_acc)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(phases, [matrix.seen(t) for t in phases], marker="o")
    ax.set_xlabel("phase")
    ax.set_ylabel("accuracy on seen classes (%)")
    ax.set_title("incremental accuracy")
    fig.tight_layout()
    curve_path = run / "accuracy_curve.png"
    fig.savefig(curve_path, dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    new = [matrix.task(t, t) for t in phases]
    ax.plot(phases, new, marker="o", label="new classes")
    old_phases = [t for t in phases if t >= 1]
    if old_phases:
        # macro average over earlier tasks
        old = [
            sum(matrix.task(t, j) for j in range(t)) / t for t in old_phases
        ]
        ax.plot(old_phases, old, marker="s", label="old classes")
    ax.set_xlabel("phase")
    ax.set_ylabel("accuracy (%)")
    ax.set_title("old vs new class accuracy")
    ax.legend()
    fig.tight_layout()
    split_path = run / "old_new_accuracy.png"
    fig.savefig(split_path, dpi=120)
    plt.close(fig)
    return [str(curve_path), str(split_path)]
