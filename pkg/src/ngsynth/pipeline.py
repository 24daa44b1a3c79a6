"""Train -> generate -> evaluate stages over a directory of class-labelled BVH
files, with every artifact written under one output directory."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bvh import BVHError, MotionClip, Skeleton, read_bvh, write_bvh
from .classify import ForestConfig
from .experiment import ARMS, run_experiment_arms
from .features import FEATURE_NAMES, feature_matrix, features_csv_text
from .motion import (
    DEFAULT_TARGET_FRAMES,
    fit_standardization,
    forward_kinematics,
    resample,
    standardize,
    unwrap_angles,
)
from .ngn import NeuronField, TrainConfig, generate_dataset, train

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@dataclass
class PipelineConfig:
    input_dir: str = "data"
    output_dir: str = "out"
    synthetic_dir: str | None = None
    classes: list[str] | None = None
    target_frames: int = DEFAULT_TARGET_FRAMES
    holdout_per_class: int = 2
    holdout: dict | None = None
    cv_runs: int = 20
    train_fraction: float = 0.7
    arms: list[str] = field(default_factory=lambda: list(ARMS))
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)

    def to_flat(self, include_output: bool = True) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if k == "output_dir" and not include_output:
                continue
            if isinstance(v, dict) and k in ("train", "forest"):
                out.update({f"{k}.{kk}": vv for kk, vv in v.items()})
            else:
                out[k] = v
        return out

    @classmethod
    def from_flat(cls, d: dict) -> "PipelineConfig":
        """Build from flat dotted keys (``train.neuron_count``) or nested dicts."""
        top, sub = {}, {"train": {}, "forest": {}}
        for k, v in d.items():
            if k in sub and isinstance(v, dict):
                sub[k].update(v)
            elif "." in k:
                head, tail = k.split(".", 1)
                if head not in sub:
                    raise KeyError(f"unknown config section {head!r}")
                sub[head][tail] = v
            else:
                top[k] = v
        known = {f.name for f in fields(cls)}
        unknown = set(top) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        forest_known = {f.name for f in fields(ForestConfig)}
        bad = set(sub["forest"]) - forest_known
        train_known = {f.name for f in fields(TrainConfig)}
        bad |= set(sub["train"]) - train_known
        if bad:
            raise KeyError(f"unknown config keys: {sorted(bad)}")
        return cls(**top, train=TrainConfig(**sub["train"]), forest=ForestConfig(**sub["forest"]))


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return PipelineConfig.from_flat(json.load(fh))


# -- file helpers -------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


# -- corpus -------------------------------------------------------------------

@dataclass
class Entry:
    path: Path
    skeleton: Skeleton
    clip: MotionClip


def load_corpus(input_dir, classes=None) -> dict[str, list[Entry]]:
    """``{class: [Entry, ...]}`` from ``input_dir/<class>/*.bvh`` (sorted)."""
    root = Path(input_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"input directory {root} does not exist")
    labels = classes or sorted(p.name for p in root.iterdir() if p.is_dir())
    corpus = {}
    for label in labels:
        d = root / label
        files = sorted(d.glob("*.bvh")) if d.is_dir() else []
        if not files:
            raise FileNotFoundError(f"class directory {d} has no .bvh files")
        entries = []
        for f in files:
            try:
                skel, clip = read_bvh(f, label=label)
            except BVHError as e:
                raise BVHError(f"{f}: {e}") from e
            clip.source_id = f"{label}/{f.stem}"
            entries.append(Entry(f, skel, clip))
        corpus[label] = entries
    return corpus


def preprocess(skeleton: Skeleton, clip: MotionClip, target_frames: int) -> MotionClip:
    clip = unwrap_angles(clip, skeleton)
    if target_frames and clip.n_frames != target_frames:
        clip = resample(clip, target_frames)
    return clip


def select_holdout(corpus: dict, config: PipelineConfig) -> dict[str, list[str]]:
    """Source ids reserved for synthesis, per class (explicit or seeded choice)."""
    out = {}
    for ci, (label, entries) in enumerate(corpus.items()):
        ids = [e.clip.source_id for e in entries]
        if config.holdout and label in config.holdout:
            chosen = [f"{label}/{Path(n).stem}" for n in config.holdout[label]]
            missing = set(chosen) - set(ids)
            if missing:
                raise FileNotFoundError(f"holdout files not found: {sorted(missing)}")
        else:
            k = min(config.holdout_per_class, len(ids))
            rng = np.random.default_rng([config.seed, 7919, ci])
            chosen = sorted(ids[i] for i in rng.choice(len(ids), size=k, replace=False))
        out[label] = chosen
    return out


def class_seed(seed: int, class_index: int) -> int:
    return int(np.random.SeedSequence([seed, class_index]).generate_state(1, np.uint64)[0] >> 1)


# -- in-memory stages ---------------------------------------------------------

def train_fields(corpus: dict, holdout: dict, config: PipelineConfig) -> dict[str, NeuronField]:
    """One field per class, trained on that class's standardized holdout clips."""
    out = {}
    for ci, (label, entries) in enumerate(corpus.items()):
        refs = [preprocess(e.skeleton, e.clip, config.target_frames)
                for e in entries if e.clip.source_id in holdout[label]]
        model = fit_standardization(refs)
        cfg = TrainConfig(**{**asdict(config.train), "seed": class_seed(config.seed, ci)})
        fld = train([standardize(r, model) for r in refs], cfg, class_label=label,
                    standardization=model)
        log.info("trained %s: %d iterations, final error %.5f", label,
                 len(fld.error_history), fld.error_history[-1])
        out[label] = fld
    return out


def synthesize(corpus: dict, holdout: dict, fields: dict, config: PipelineConfig):
    """Synthetic clips plus the skeleton to write each class with."""
    references, skeletons = {}, {}
    for label, entries in corpus.items():
        fld = fields[label]
        refs = []
        for e in entries:
            if e.clip.source_id in holdout[label]:
                r = preprocess(e.skeleton, e.clip, config.target_frames)
                refs.append(standardize(r, fld.standardization))
                skeletons[label] = e.skeleton
        references[label] = refs
    clips = generate_dataset(fields, references, config.train.samples_per_class,
                             seed=config.seed, config=config.train)
    return clips, skeletons


def split_real(corpus: dict, holdout: dict, target_frames: int):
    """Preprocessed ``(baseline, references, skeletons_by_source_id)``."""
    skeletons, baseline, references = {}, [], []
    for label, entries in corpus.items():
        for e in entries:
            clip = preprocess(e.skeleton, e.clip, target_frames)
            skeletons[clip.source_id] = e.skeleton
            (references if clip.source_id in holdout[label] else baseline).append(clip)
    return baseline, references, skeletons


def run_in_memory(corpus: dict, config: PipelineConfig):
    """Whole experiment without touching disk; returns ``(reports, fields, synthetic)``."""
    holdout = select_holdout(corpus, config)
    fields = train_fields(corpus, holdout, config)
    synthetic, class_skeletons = synthesize(corpus, holdout, fields, config)
    baseline, references, skeletons = split_real(corpus, holdout, config.target_frames)
    for clip in synthetic:
        skeletons[clip.source_id] = class_skeletons[clip.label]
    reports, _, _ = run_experiment_arms(
        baseline, synthetic, skeletons, references, runs=config.cv_runs,
        train_fraction=config.train_fraction, forest_config=config.forest,
        seed=config.seed, arms=config.arms,
    )
    return reports, fields, synthetic


# -- stages with artifacts -------------------------------------------------------

def stage_train(config: PipelineConfig, corpus=None) -> dict[str, NeuronField]:
    corpus = corpus or load_corpus(config.input_dir, config.classes)
    holdout = select_holdout(corpus, config)
    out = Path(config.output_dir)
    fields = train_fields(corpus, holdout, config)
    err_rows = []
    for label, fld in fields.items():
        atomic_write(out / "fields" / f"{label}.field.json", fld.to_json())
        err_rows.extend((label, t, _num(e)) for t, e in enumerate(fld.error_history))
    atomic_write(out / "fields" / "error_history.csv",
                 _csv_text(["class", "iteration", "error"], err_rows))
    atomic_write(out / "holdout.json", json.dumps(holdout, indent=1, sort_keys=True) + "\n")
    return fields


def load_fields(output_dir, labels) -> dict[str, NeuronField]:
    d = Path(output_dir) / "fields"
    return {label: NeuronField.from_json((d / f"{label}.field.json").read_text()) for label in labels}


def stage_generate(config: PipelineConfig, corpus=None, fields=None) -> list[dict]:
    corpus = corpus or load_corpus(config.input_dir, config.classes)
    holdout = select_holdout(corpus, config)
    out = Path(config.output_dir)
    fields = fields or load_fields(out, list(corpus))
    clips, skeletons = synthesize(corpus, holdout, fields, config)
    n = config.train.samples_per_class
    manifest = []
    syn_dir = out / "synthetic"
    for k, clip in enumerate(clips):
        rel = f"{clip.label}/{clip.source_id}.bvh"
        atomic_write(syn_dir / rel, write_bvh(skeletons[clip.label], clip))
        manifest.append({"file": rel, "class": clip.label, "reference": clip.reference_id,
                         "seed": config.seed, "clip_index": k % n})
    atomic_write(syn_dir / "manifest.csv", _csv_text(
        ["file", "class", "reference", "seed", "clip_index"],
        [[m["file"], m["class"], m["reference"], m["seed"], m["clip_index"]] for m in manifest]))
    return manifest


def load_synthetic(syn_dir, labels) -> tuple[list[Entry], dict]:
    """Synthetic BVH files plus their references from ``manifest.csv`` if present."""
    syn_dir = Path(syn_dir)
    refs = {}
    manifest = syn_dir / "manifest.csv"
    if manifest.exists():
        with open(manifest, newline="") as fh:
            refs = {row["file"]: row["reference"] for row in csv.DictReader(fh)}
    entries = []
    for label in labels:
        for f in sorted((syn_dir / label).glob("*.bvh")):
            skel, clip = read_bvh(f, label=label)
            rel = f"{label}/{f.name}"
            clip.provenance = "synthetic"
            clip.source_id = f"syn:{label}/{f.stem}"
            clip.reference_id = refs.get(rel, "")
            entries.append(Entry(f, skel, clip))
    return entries, refs


def stage_evaluate(config: PipelineConfig, corpus=None) -> dict:
    corpus = corpus or load_corpus(config.input_dir, config.classes)
    holdout = select_holdout(corpus, config)
    out = Path(config.output_dir)
    syn_dir = Path(config.synthetic_dir) if config.synthetic_dir else out / "synthetic"
    synth_entries, _ = load_synthetic(syn_dir, list(corpus))
    if not synth_entries:
        raise FileNotFoundError(f"no synthetic BVH files under {syn_dir}")

    baseline, references, skeletons = split_real(corpus, holdout, config.target_frames)
    synthetic = []
    for e in synth_entries:
        clip = preprocess(e.skeleton, e.clip, config.target_frames)
        skeletons[clip.source_id] = e.skeleton
        synthetic.append(clip)

    reports, vectors, pairs = run_experiment_arms(
        baseline, synthetic, skeletons, references, runs=config.cv_runs,
        train_fraction=config.train_fraction, forest_config=config.forest,
        seed=config.seed, arms=config.arms,
    )
    ev = out / "evaluation"
    summary = {"config": config.to_flat(include_output=False), "arms": {}}
    cv_rows, imp_rows = [], []
    for arm, rep in reports.items():
        doc = rep.to_dict()
        summary["arms"][arm] = doc
        atomic_write(ev / f"report_{arm.replace('+', '_')}.json", json.dumps(doc, indent=1) + "\n")
        for r, run in enumerate(rep.per_run):
            cv_rows.extend((arm, r, m, _num(v)) for m, v in run.items())
        imp_rows.extend((arm, f, _num(v)) for f, v in rep.feature_importance.items())
    atomic_write(ev / "summary.json", json.dumps(summary, indent=1) + "\n")
    atomic_write(ev / "cv_runs.csv", _csv_text(["arm", "run", "metric", "value"], cv_rows))
    atomic_write(ev / "feature_importance.csv", _csv_text(["arm", "feature", "importance"], imp_rows))
    atomic_write(ev / "pairs.csv", _csv_text(
        ["synthetic", "reference", "dtw", "mpjpe"],
        [(s, r, _num(d), _num(m)) for s, r, d, m in pairs]))

    atomic_write(ev / "features.csv", features_csv_text(vectors))
    X = feature_matrix(vectors)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.nan_to_num(np.corrcoef(X, rowvar=False))
    atomic_write(ev / "feature_correlation.csv", _csv_text(
        ["feature", *FEATURE_NAMES],
        [(n, *(_num(v) for v in row)) for n, row in zip(FEATURE_NAMES, corr)]))

    traj_rows = []
    for clip in [*baseline, *synthetic]:
        root = forward_kinematics(skeletons[clip.source_id], clip).positions[:, 0]
        traj_rows.extend((clip.source_id, clip.label, clip.provenance, f, _num(p[0]), _num(p[2]))
                         for f, p in enumerate(root))
    atomic_write(ev / "trajectories.csv", _csv_text(
        ["source_id", "label", "provenance", "frame", "x", "z"], traj_rows))
    return summary


def run_pipeline(config: PipelineConfig) -> dict:
    """train -> generate -> evaluate; the first failing stage is reported by name."""
    try:
        corpus = load_corpus(config.input_dir, config.classes)
    except Exception as e:
        raise StageError("load", e) from e
    atomic_write(Path(config.output_dir) / "config.json",
                 json.dumps(config.to_flat(include_output=False), indent=1) + "\n")
    stages = (
        ("train", lambda: stage_train(config, corpus)),
        ("generate", lambda: stage_generate(config, corpus)),
        ("evaluate", lambda: stage_evaluate(config, corpus)),
    )
    result = None
    for name, fn in stages:
        try:
            result = fn()
        except Exception as e:
            raise StageError(name, e) from e
    return result
