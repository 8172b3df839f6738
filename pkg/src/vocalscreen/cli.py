"""Batch command-line driver.

Every command writes into ``--out``.  Settings come from an optional JSON
``--config`` (sections: preprocess, model, train, mask, forest) with flags
taking precedence; the merged settings are echoed to
``<out>/config.<command>.json``.  Exit codes: 0 ok, 2 invalid input,
3 runtime failure, with a one-line JSON record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .augment import MaskConfig
from .dataset.cache import SegmentRecord, read_cache, write_cache
from .dataset.evaluation import annotate, annotation_svg, export_vectors, metrics, subject_level
from .dataset.manifest import load_manifest
from .dataset.split import SplitPlan, carve_validation, parse_policy, split_subjects
from .dataset.synth import synth_corpus
from .errors import ValidationError, VocalScreenError
from .experiments import (
    ABLATION_COLUMNS,
    SUMMARY_COLUMNS,
    ablate_masks,
    apply_stats,
    make_splits,
    stack,
    summarize_ablation,
    vectors,
)
from .features import FeatureKind, FeatureStats
from .forest import ForestConfig, kfold_importance, save_forest, train_forest
from .io_utils import atomic_write_bytes, atomic_write_json, atomic_write_text
from .nn.model import ModelSpec, build_model, load_model, save_model
from .nn.train import GRID_COLUMNS, GridSpace, TrainConfig, grid_search, rows_to_csv, train
from .pipeline import SegmentBatch, default_jobs, extract_features, segment_manifest
from .preprocess import PreprocessConfig

log = logging.getLogger("vocalscreen")

RANDOMIZED = {"synth", "split", "train", "grid-search", "importance", "ablate-mask"}

# flag dest -> (config section, key)
OVERRIDES = {
    "mu": ("preprocess", "mu"),
    "target_rate": ("preprocess", "target_rate_hz"),
    "mode": ("model", "mode"),
    "layers": ("model", "n_layers"),
    "kernel": ("model", "kernel"),
    "dilation_list": ("model", "dilations"),
    "widths": ("model", "widths"),
    "lr": ("train", "lr"),
    "batch_size": ("train", "batch_size"),
    "epochs": ("train", "max_epochs"),
    "patience": ("train", "patience"),
    "time_budget": ("train", "time_budget_s"),
    "max_f_width": ("mask", "max_f_width"),
    "max_t_width": ("mask", "max_t_width"),
    "masks_per_axis": ("mask", "masks_per_axis"),
    "trees": ("forest", "n_trees"),
    "max_depth": ("forest", "max_depth"),
}


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _int_lists(text: str) -> list[tuple[int, ...]]:
    return [_ints(part) for part in text.split(";") if part.strip()]


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def effective_config(args) -> dict:
    cfg = {"preprocess": {}, "model": {}, "train": {}, "mask": {}, "forest": {}}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
        for section, values in doc.items():
            if section not in cfg or not isinstance(values, dict):
                raise ValidationError(f"unknown config section {section!r}")
            cfg[section].update(values)
    for dest, (section, key) in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[section][key] = list(value) if isinstance(value, tuple) else value
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _build(cls, values: dict, **extra):
    try:
        return cls(**{**values, **extra})
    except TypeError as exc:
        raise ValidationError(f"bad {cls.__name__} settings: {exc}") from exc


def _model_spec(cfg: dict) -> ModelSpec:
    d = {"mode": "pure-1d-f", **cfg["model"]}
    if "dilations" not in d:
        n = d.get("n_layers", 4)
        d["dilations"] = (2, 2, 2, 3) if n == 4 else (2,) * n
    spec = ModelSpec.from_dict(d)
    spec.n_layers = len(spec.dilations) if "n_layers" not in d else spec.n_layers
    return spec


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{what} {path} does not exist")
    return path


def _split(args) -> SplitPlan:
    return SplitPlan.load(_require(args.split, "split file"))


# commands

def cmd_synth(args, cfg, out: Path) -> dict:
    manifest = synth_corpus(args.subjects, args.seed, out, recordings_per_subject=args.recordings,
                            duration_s=args.duration)
    return {"subjects": len(manifest.subjects), "recordings": manifest.n_recordings,
            "manifest": str(out / "manifest.json")}


def _segments_paths(base: Path) -> tuple[Path, Path]:
    return base / "segments.json", base / "segments.f32"


def cmd_preprocess(args, cfg, out: Path) -> dict:
    manifest = load_manifest(_require(args.manifest, "manifest"), check_files=True)
    pcfg = _build(PreprocessConfig, cfg["preprocess"])
    batch = segment_manifest(manifest, pcfg, args.jobs)
    meta, blob = _segments_paths(out)
    atomic_write_bytes(blob, np.ascontiguousarray(batch.samples, dtype="<f4").tobytes())
    atomic_write_json(meta, {
        "preprocess": pcfg.to_dict(),
        "shape": list(batch.samples.shape),
        "records": [asdict(r) for r in batch.records],
    })
    return {"segments": len(batch.records), "path": str(blob)}


def _load_segments(base: Path) -> tuple[SegmentBatch, PreprocessConfig]:
    meta, blob = _segments_paths(base)
    doc = json.loads(_require(meta, "segment index").read_text())
    shape = tuple(doc["shape"])
    raw = _require(blob, "segment data").read_bytes()
    if len(raw) != 4 * int(np.prod(shape)):
        raise ValidationError(f"{blob} holds {len(raw)} bytes, expected {4 * int(np.prod(shape))}")
    samples = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    records = [SegmentRecord(**r) for r in doc["records"]]
    return SegmentBatch(records, samples), PreprocessConfig.from_dict(doc["preprocess"])


def cmd_extract(args, cfg, out: Path) -> dict:
    batch, pcfg = _load_segments(Path(args.segments or out))
    kinds = [FeatureKind.parse(k) for k in args.feature]
    feats = extract_features(batch, kinds, pcfg, args.jobs)
    written = {}
    for kind, mats in feats.items():
        path = write_cache(batch.records, mats, out / f"{kind.name.lower()}.ftds")
        written[kind.name.lower()] = {"path": str(path), "shape": list(mats[0].data.shape) if mats else []}
    return written


def cmd_split(args, cfg, out: Path) -> dict:
    manifest = load_manifest(_require(args.manifest, "manifest"))
    plan = split_subjects(manifest, parse_policy(args.policy, args.test_fraction), args.seed)
    if args.val_fraction > 0:
        plan = carve_validation(plan, manifest, args.val_fraction, args.seed)
    plan.save(out / "split.json")
    return {"train": len(plan.train_subject_ids), "val": len(plan.val_subject_ids),
            "test": len(plan.test_subject_ids)}


def _stats_doc(stats: FeatureStats) -> dict:
    return {"mean": stats.mean.ravel().tolist(), "std": stats.std.ravel().tolist()}


def _stats_from(doc: dict) -> FeatureStats:
    return FeatureStats(np.array(doc["mean"])[:, None], np.array(doc["std"])[:, None])


def _train_cfg(cfg: dict, seed: int) -> TrainConfig:
    return _build(TrainConfig, cfg["train"], seed=seed)


def cmd_train(args, cfg, out: Path) -> dict:
    records, mats = read_cache(_require(args.cache, "feature cache"))
    splits = make_splits(records, mats, _split(args))
    spec = _model_spec(cfg)
    spec.input_shape = tuple(splits.train.X.shape[1:])
    model = build_model(spec, args.seed)
    report = train(model, splits.train, splits.val, splits.test, _train_cfg(cfg, args.seed))
    save_model(model, out / "model")
    atomic_write_json(out / "stats.json", _stats_doc(splits.stats))
    doc = report.to_dict()
    doc.pop("seconds")  # wall-clock time would make reruns differ
    atomic_write_json(out / "fit_report.json", doc)
    return {"test_accuracy": report.test["accuracy"], "test_f1": report.test["f1"],
            "best_epoch": report.best_epoch, "epochs_run": report.epochs_run}


def _test_view(args):
    """Standardized test-subject matrices plus their records."""
    model_dir = Path(args.model)
    model = load_model(_require(model_dir / "model.json", "model") .with_suffix(""))
    stats = _stats_from(json.loads(_require(model_dir / "stats.json", "stats file").read_text()))
    records, mats = read_cache(_require(args.cache, "feature cache"))
    if args.split:
        keep = set(_split(args).test_subject_ids)
        pairs = [(r, m) for r, m in zip(records, mats) if r.subject_id in keep]
        if not pairs:
            raise ValidationError("no cached segments belong to the split's test subjects")
        records, mats = [p[0] for p in pairs], [p[1] for p in pairs]
    X = apply_stats(stack(mats).astype(np.float64), stats)
    return model, records, X


def cmd_evaluate(args, cfg, out: Path) -> dict:
    model, records, X = _test_view(args)
    probs = model.predict_proba(X)
    labels = [r.label for r in records]
    seg = metrics(probs >= 0.5, labels)
    sp, sy, sids = subject_level([r.subject_id for r in records], probs, labels)
    result = {"segment": seg, "subject": metrics(sp, sy),
              "subjects": [{"subject_id": s, "prediction": p, "label": y} for s, p, y in zip(sids, sp, sy)]}
    atomic_write_json(out / "evaluation.json", result)
    rows = [{"subject_id": r.subject_id, "recording_id": r.recording_id, "segment_index": r.segment_index,
             "start_offset_s": r.start_offset_s, "label": r.label, "probability": float(p)}
            for r, p in zip(records, probs)]
    atomic_write_text(out / "predictions.csv", rows_to_csv(rows) if rows else "")
    return {"segment_accuracy": seg["accuracy"], "subject_accuracy": result["subject"]["accuracy"]}


def cmd_grid_search(args, cfg, out: Path) -> dict:
    records, mats = read_cache(_require(args.cache, "feature cache"))
    splits = make_splits(records, mats, _split(args))
    space = GridSpace(modes=args.modes, layers=list(args.grid_layers or []),
                      kernels=list(args.kernels), dilations=args.dilations,
                      widths=tuple(cfg["model"]["widths"]) if cfg["model"].get("widths") else None)
    if not space.dilations and not space.layers:
        space.layers = [2, 4, 6]
    if not space.cells():
        raise ValidationError("grid is empty: no dilation tuple matches the requested layer counts")
    rows = grid_search(space, splits.train, splits.val, splits.test, _train_cfg(cfg, args.seed),
                       repeats=args.repeats, jobs=args.jobs)
    atomic_write_text(out / "grid.csv", rows_to_csv(rows, GRID_COLUMNS))
    return {"cells": len(rows)}


def cmd_importance(args, cfg, out: Path) -> dict:
    records, mats = read_cache(_require(args.cache, "feature cache"))
    V = vectors(mats, args.axis)
    y = np.array([r.label for r in records])
    groups = np.array([r.subject_id for r in records])
    fcfg = _build(ForestConfig, cfg["forest"], seed=args.seed, n_jobs=args.jobs)
    report = kfold_importance(V, y, groups, args.folds, fcfg)
    report.save(out / "importance.csv", out / "importance.json")
    if args.save_forest:
        save_forest(train_forest(V, y, fcfg), out / "forest.json")
    return {"top": [int(i) for i in report.ranking[:10]],
            "fold_accuracy_mean": float(np.nanmean(report.fold_accuracy))}


def cmd_ablate_mask(args, cfg, out: Path) -> dict:
    plan = _split(args)
    mcfg = _build(MaskConfig, cfg["mask"])
    seeds = [args.seed + i for i in range(args.repeats)]
    rows = []
    for cache in args.cache:
        records, mats = read_cache(_require(cache, "feature cache"))
        splits = make_splits(records, mats, plan)
        kind = mats[0].kind.name.lower() if mats else Path(cache).stem
        rows += ablate_masks(splits, kind, _model_spec(cfg), _train_cfg(cfg, args.seed), mcfg, seeds,
                             occlusion=args.occlusion)
    atomic_write_text(out / "ablation_runs.csv", rows_to_csv(rows, ABLATION_COLUMNS))
    summary = summarize_ablation(rows)
    atomic_write_text(out / "ablation.csv", rows_to_csv(summary, SUMMARY_COLUMNS))
    return {"rows": summary}


def cmd_annotate(args, cfg, out: Path) -> dict:
    model, records, X = _test_view(args)
    probs = model.predict_proba(X)
    by_rec: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_rec.setdefault(r.recording_id, []).append(i)
    wanted = args.recording or sorted(by_rec)
    missing = [r for r in wanted if r not in by_rec]
    if missing:
        raise ValidationError(f"no cached segments for recordings {missing}")
    for rid in wanted:
        idx = by_rec[rid]
        doc = annotate(rid, [records[i].start_offset_s for i in idx], probs[idx], args.segment_seconds)
        doc.save(out / "annotations" / f"{rid}.json")
        atomic_write_text(out / "annotations" / f"{rid}.svg", annotation_svg(doc))
    return {"recordings": len(wanted)}


def cmd_export_vectors(args, cfg, out: Path) -> dict:
    records, mats = read_cache(_require(args.cache, "feature cache"))
    path = export_vectors(records, mats, out / f"vectors_{args.axis.upper()}.csv", args.axis)
    return {"path": str(path), "rows": len(records)}


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "extract": cmd_extract, "split": cmd_split,
    "train": cmd_train, "evaluate": cmd_evaluate, "grid-search": cmd_grid_search,
    "importance": cmd_importance, "ablate-mask": cmd_ablate_mask, "annotate": cmd_annotate,
    "export-vectors": cmd_export_vectors,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vocalscreen", description="Speech depression-screening pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--out", required=True, help="output directory")
        c.add_argument("--config", help="JSON config; flags override its values")
        c.add_argument("--seed", type=int, required=name in RANDOMIZED, default=None)
        c.add_argument("--jobs", type=int, default=default_jobs(),
                       help="worker threads (default: $VOCALSCREEN_JOBS or 1)")
        c.add_argument("-v", "--verbose", action="store_true")
        return c

    def model_flags(c):
        c.add_argument("--mode")
        c.add_argument("--layers", type=int)
        c.add_argument("--kernel", type=int)
        c.add_argument("--dilation-list", type=_ints, help="e.g. 2,2,2,3")
        c.add_argument("--widths", type=_ints)
        c.add_argument("--lr", type=float)
        c.add_argument("--batch-size", type=int)
        c.add_argument("--epochs", type=int)
        c.add_argument("--patience", type=int)
        c.add_argument("--time-budget", type=float, help="seconds per training run")

    c = command("synth", "write a synthetic corpus (WAVs + manifest.json)")
    c.add_argument("--subjects", type=int, default=40)
    c.add_argument("--recordings", type=int, default=4)
    c.add_argument("--duration", type=float, default=12.0)

    c = command("preprocess", "resample, trim silence, pre-emphasize and segment every recording")
    c.add_argument("--manifest", required=True)
    c.add_argument("--mu", type=float)
    c.add_argument("--target-rate", type=int)

    c = command("extract", "pooled MFCC / LPC / fusion matrices into feature caches")
    c.add_argument("--segments", help="directory holding preprocess output (default: --out)")
    c.add_argument("--feature", type=_names, default=["fusion"], help="comma list of mfcc,lpc,fusion")

    c = command("split", "subject-disjoint train/validation/test split")
    c.add_argument("--manifest", required=True)
    c.add_argument("--policy", default="stratified", help="stratified | paper-modma")
    c.add_argument("--test-fraction", type=float, default=0.2)
    c.add_argument("--val-fraction", type=float, default=0.2)

    c = command("train", "train one network and report test metrics")
    c.add_argument("--cache", required=True)
    c.add_argument("--split", required=True)
    model_flags(c)

    for name, text in (("evaluate", "score a trained model on cached features"),
                       ("annotate", "map segment predictions back onto recording timelines")):
        c = command(name, text)
        c.add_argument("--model", required=True, help="directory written by train")
        c.add_argument("--cache", required=True)
        c.add_argument("--split", help="restrict to the split's test subjects")
        if name == "annotate":
            c.add_argument("--recording", action="append", help="recording id (repeatable; default all)")
            c.add_argument("--segment-seconds", type=float, default=3.0)

    c = command("grid-search", "train/evaluate every cell of a mode x layers x kernel x dilation grid")
    c.add_argument("--cache", required=True)
    c.add_argument("--split", required=True)
    c.add_argument("--modes", type=_names, default=["pure-1d-f"])
    c.add_argument("--grid-layers", type=_ints, help="layer counts, e.g. 2,4,6")
    c.add_argument("--kernels", type=_ints, default=(3,))
    c.add_argument("--dilations", type=_int_lists, help='tuples separated by ";", e.g. "2,2,2,2;2,2,2,3"')
    c.add_argument("--repeats", type=int, default=1)
    model_flags(c)

    c = command("importance", "k-fold random-forest importance of F or T vectors")
    c.add_argument("--cache", required=True)
    c.add_argument("--axis", default="F", choices=["F", "T", "f", "t"])
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--trees", type=int)
    c.add_argument("--max-depth", type=int)
    c.add_argument("--save-forest", action="store_true", help="also fit on all data and save it")

    c = command("ablate-mask", "unmasked / T / F / T-F masking ablation")
    c.add_argument("--cache", required=True, action="append", help="feature cache (repeatable)")
    c.add_argument("--split", required=True)
    c.add_argument("--repeats", type=int, default=3, help="seeds seed..seed+repeats-1")
    c.add_argument("--occlusion", action="store_true",
                   help="train unmasked and mask the test inputs instead")
    c.add_argument("--max-f-width", type=int)
    c.add_argument("--max-t-width", type=int)
    c.add_argument("--masks-per-axis", type=int)
    model_flags(c)

    c = command("export-vectors", "CSV of per-segment F or T vectors")
    c.add_argument("--cache", required=True)
    c.add_argument("--axis", default="F", choices=["F", "T", "f", "t"])
    return p


def _fail(exc: BaseException, code: int) -> int:
    record = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        if args.jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        cfg = effective_config(args)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_json(out / f"config.{args.command}.json",
                          {"command": args.command, "args": {k: v for k, v in vars(args).items()
                                                             if k not in ("verbose",)}, "config": cfg})
        summary = COMMANDS[args.command](args, cfg, out)
    except VocalScreenError as exc:
        return _fail(exc, exc.exit_code)
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        return _fail(exc, 2)
    except (MemoryError, OSError) as exc:
        return _fail(exc, 3)
    print(json.dumps({"status": "ok", "command": args.command, **summary}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
