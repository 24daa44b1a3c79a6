"""Command line entry point: ``ngsynth {inspect,train,generate,evaluate,pipeline,toy}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bvh import BVHError, read_bvh
from .pipeline import (
    PipelineConfig,
    StageError,
    load_config,
    run_pipeline,
    stage_evaluate,
    stage_generate,
    stage_train,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

DATA_ERRORS = (BVHError, ValueError, KeyError, FileNotFoundError, OSError)

# flag dest -> (config section or None, key)
OVERRIDES = {
    "input": (None, "input_dir"),
    "out": (None, "output_dir"),
    "synthetic_dir": (None, "synthetic_dir"),
    "seed": (None, "seed"),
    "target_frames": (None, "target_frames"),
    "holdout_per_class": (None, "holdout_per_class"),
    "cv_runs": (None, "cv_runs"),
    "train_fraction": (None, "train_fraction"),
    "n_per_class": ("train", "samples_per_class"),
    "neurons": ("train", "neuron_count"),
    "iterations": ("train", "iterations"),
    "epsilon_initial": ("train", "epsilon_initial"),
    "epsilon_final": ("train", "epsilon_final"),
    "lambda_initial": ("train", "lambda_initial"),
    "lambda_final": ("train", "lambda_final"),
    "noise_std": ("train", "noise_std"),
    "smoothing_sigma": ("train", "smoothing_sigma"),
    "convergence_tol": ("train", "convergence_tol"),
    "trees": ("forest", "tree_count"),
    "max_depth": ("forest", "max_depth"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (flat dotted keys, e.g. train.neuron_count)")
    p.add_argument("--input", help="directory of <class>/*.bvh files")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", help="comma-separated class names (default: all subdirectories)")
    p.add_argument("--n-per-class", type=int)
    p.add_argument("--target-frames", type=int)
    p.add_argument("--holdout-per-class", type=int)
    p.add_argument("--synthetic-dir", help="evaluate these BVH files instead of <out>/synthetic")
    p.add_argument("--cv-runs", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--neurons", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--epsilon-initial", type=float)
    p.add_argument("--epsilon-final", type=float)
    p.add_argument("--lambda-initial", type=float)
    p.add_argument("--lambda-final", type=float)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--smoothing-sigma", type=float)
    p.add_argument("--convergence-tol", type=float)
    p.add_argument("--trees", type=int)
    p.add_argument("--max-depth", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ngsynth", description="Neural gas synthesis of emotion-labelled BVH motion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inspect", help="summarize BVH files")
    p.add_argument("path", help="BVH file or directory (searched recursively)")

    for name, help_ in (
        ("train", "train one neuron field per class"),
        ("generate", "synthesize BVH clips from trained fields"),
        ("evaluate", "metrics and classification arms"),
        ("pipeline", "train, generate and evaluate"),
    ):
        _add_config_flags(sub.add_parser(name, help=help_))

    p = sub.add_parser("toy", help="write the built-in toy corpus")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clips-per-class", type=int, default=8)
    p.add_argument("--frames", type=int, default=300)
    return parser


def resolve_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    for dest, (section, key) in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if section is None:
            config = replace(config, **{key: value})
        else:
            setattr(config, section, replace(getattr(config, section), **{key: value}))
    if args.classes:
        config.classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    return config


def cmd_inspect(path) -> int:
    path = Path(path)
    files = sorted(path.rglob("*.bvh")) if path.is_dir() else [path]
    if not files:
        print(f"no BVH files under {path}", file=sys.stderr)
        return EXIT_DATA
    status = EXIT_OK
    print("file\tjoints\tchannels\tframes\tframe_time\tduration_s")
    for f in files:
        try:
            skel, clip = read_bvh(f)
        except (BVHError, OSError, UnicodeDecodeError) as e:
            print(f"{f}: error: {e}", file=sys.stderr)
            status = EXIT_DATA
            continue
        joints = sum(1 for j in skel.joints if not j.is_end_site)
        print(f"{f}\t{joints}\t{skel.total_channels}\t{clip.n_frames}\t"
              f"{clip.frame_time:.7f}\t{clip.duration:.3f}")
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "inspect":
            return cmd_inspect(args.path)
        if args.command == "toy":
            from .toy import write_toy_corpus
            write_toy_corpus(args.out, args.seed, args.clips_per_class, args.frames)
            print(args.out)
            return EXIT_OK
        config = resolve_config(args)
        if args.command == "train":
            fields = stage_train(config)
            for label, f in fields.items():
                print(f"{label}\titerations={len(f.error_history)}\tconverged_at={f.converged_at}"
                      f"\tfinal_error={f.error_history[-1]:.6f}")
        elif args.command == "generate":
            manifest = stage_generate(config)
            print(f"wrote {len(manifest)} synthetic clips to {Path(config.output_dir) / 'synthetic'}")
        elif args.command == "evaluate":
            summary = stage_evaluate(config)
            _print_summary(summary)
        elif args.command == "pipeline":
            summary = run_pipeline(config)
            _print_summary(summary)
        return EXIT_OK
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA if isinstance(e.cause, DATA_ERRORS) else EXIT_INTERNAL
    except DATA_ERRORS as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def _print_summary(summary: dict) -> None:
    keys = ("sample_count", "accuracy", "std", "precision", "recall", "f1", "mcc",
            "diversity", "fidelity", "fid", "dtw", "mpjpe")
    print("arm\t" + "\t".join(keys))
    for arm, doc in summary["arms"].items():
        cells = []
        for k in keys:
            v = doc[k]
            cells.append("-" if v is None else (str(v) if isinstance(v, int) else f"{v:.4g}"))
        print(arm + "\t" + "\t".join(cells))


if __name__ == "__main__":
    sys.exit(main())
