"""Command-line entry points.

Subcommands: run (full experiment), resume (continue a run directory),
eval (re-sample replay with different steps/guidance and re-fit classifiers),
plot (emit curve images), synthetic (banana-distribution generator oracle).
Exit code is nonzero whenever a stage fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .backbones import BACKBONES
from .config import BASELINES, ExperimentConfig, load_config
from .datasets import DATASETS
from .harness import StageError, emit_plots, replay_eval, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featreplay",
        description="class-incremental learning with diffusion-based feature replay",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full experiment")
    run.add_argument("--config", help="config file to start from (defaults otherwise)")
    run.add_argument("--output", help="run directory")
    run.add_argument("--dataset", choices=DATASETS)
    run.add_argument("--dataset-root", help="root directory for downloaded datasets")
    run.add_argument("--download", action="store_true", help="allow dataset download")
    run.add_argument("--seed", type=int)
    run.add_argument("--initial-classes", type=int)
    run.add_argument("--num-incremental", type=int)
    run.add_argument("--baseline", choices=BASELINES)
    run.add_argument("--replay-per-class", type=int)
    run.add_argument("--enhanced", action="store_true", help="color jitter + cutout augmentation")
    run.add_argument("--backbone", choices=BACKBONES)
    run.add_argument("--extractor-epochs", type=int)
    run.add_argument("--extractor-lr", type=float)
    run.add_argument("--diffusion-steps", type=int, help="schedule length K")
    run.add_argument("--diffusion-iters", type=int)
    run.add_argument("--diffusion-lr", type=float)
    run.add_argument("--cond-drop-prob", type=float)
    run.add_argument("--ema-decay", type=float)
    run.add_argument("--sampling-steps", type=int, help="inference steps (< K = step skipping)")
    run.add_argument("--guidance-scale", type=float)
    run.add_argument("--phase-epochs", type=int, help="classifier epochs per phase")
    run.add_argument("--phase-lr", type=float, help="classifier learning rate")

    resume = sub.add_parser("resume", help="continue an interrupted run directory")
    resume.add_argument("--output", required=True)

    ev = sub.add_parser("eval", help="re-evaluate a finished replay run")
    ev.add_argument("--output", required=True, help="finished run directory")
    ev.add_argument("--sampling-steps", type=int)
    ev.add_argument("--guidance-scale", type=float, default=1.0)
    ev.add_argument("--label", help="name for the evals/ subdirectory")

    plot = sub.add_parser("plot", help="emit accuracy plots for a run directory")
    plot.add_argument("--output", required=True)

    synth = sub.add_parser("synthetic", help="banana-distribution generator oracle")
    synth.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    synth.add_argument("--train-samples", type=int, default=50_000)
    synth.add_argument("--iterations", type=int, default=2_500)
    synth.add_argument("--out", help="write results as JSON")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    top = {
        "dataset": args.dataset,
        "dataset_root": args.dataset_root,
        "seed": args.seed,
        "output_dir": args.output,
        "initial_classes": args.initial_classes,
        "num_incremental": args.num_incremental,
        "baseline": args.baseline,
        "replay_per_class": args.replay_per_class,
    }
    config = replace(config, **{k: v for k, v in top.items() if v is not None})
    if args.download:
        config = replace(config, download=True)
    if args.enhanced:
        config = replace(config, enhanced_augmentation=True)

    ext = {
        "backbone": args.backbone,
        "epochs": args.extractor_epochs,
        "learning_rate": args.extractor_lr,
    }
    ext = {k: v for k, v in ext.items() if v is not None}
    if ext:
        config = replace(config, extractor=replace(config.extractor, **ext))
    diff = {
        "num_steps": args.diffusion_steps,
        "iterations": args.diffusion_iters,
        "learning_rate": args.diffusion_lr,
        "cond_drop_prob": args.cond_drop_prob,
        "ema_decay": args.ema_decay,
        "sampling_steps": args.sampling_steps,
        "guidance_scale": args.guidance_scale,
    }
    diff = {k: v for k, v in diff.items() if v is not None}
    if diff:
        config = replace(config, diffusion=replace(config.diffusion, **diff))
    clf = {"epochs": args.phase_epochs, "learning_rate": args.phase_lr}
    clf = {k: v for k, v in clf.items() if v is not None}
    if clf:
        config = replace(config, classifier=replace(config.classifier, **clf))
    return config


def _print_summary(summary: dict) -> None:
    print(summary["report"], end="")
    print(f"run directory: {summary['run_dir']}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            _print_summary(run_experiment(_config_from_args(args), log=print))
        elif args.command == "resume":
            config = load_config(f"{args.output}/config.txt")
            config = replace(config, output_dir=args.output)
            _print_summary(run_experiment(config, log=print))
        elif args.command == "eval":
            summary = replay_eval(
                args.output,
                sampling_steps=args.sampling_steps,
                guidance_scale=args.guidance_scale,
                label=args.label,
                log=print,
            )
            _print_summary(summary)
        elif args.command == "plot":
            for path in emit_plots(args.output):
                print(path)
        elif args.command == "synthetic":
            from .benchmarks import banana_oracle

            results = []
            for seed in args.seeds:
                result = banana_oracle(
                    seed, train_samples=args.train_samples, iterations=args.iterations
                )
                results.append(result)
                print(
                    f"seed {seed}: mmd diffusion {result['mmd_diffusion']:.6f}  "
                    f"gaussian {result['mmd_gaussian']:.6f}  "
                    f"{'OK' if result['improved'] else 'WORSE'}"
                )
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    json.dump(results, fh, indent=2)
            if not all(r["improved"] for r in results):
                return 1
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
