"""End-to-end helpers shared by the CLI, the scripts and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import STRATEGY_LABELS, MaskConfig, apply_region, batch_augmenter, draw_region
from .dataset.cache import SegmentRecord
from .dataset.evaluation import THRESHOLD, metrics
from .dataset.manifest import Manifest
from .dataset.split import SplitPlan, carve_validation, split_subjects
from .errors import EmptySplit
from .features import FeatureMatrix, FeatureStats, f_vector, t_vector
from .forest import ForestConfig, predict_forest, train_forest
from .nn.model import ModelSpec, build_model
from .nn.train import FeatureSet, TrainConfig, evaluate, train


def row_stats(X: np.ndarray) -> FeatureStats:
    """Per-row (frequency/order) mean and std over samples and time."""
    X = np.asarray(X, dtype=np.float64)
    return FeatureStats(X.mean(axis=(0, 2))[:, None], X.std(axis=(0, 2))[:, None])


def apply_stats(X: np.ndarray, stats: FeatureStats) -> np.ndarray:
    return ((X - stats.mean) / np.maximum(stats.std, 1e-8)).astype(np.float32)


@dataclass
class Splits:
    train: FeatureSet
    val: FeatureSet
    test: FeatureSet
    stats: FeatureStats
    plan: SplitPlan


def _subset(records, X, ids) -> FeatureSet:
    ids = set(ids)
    idx = [i for i, r in enumerate(records) if r.subject_id in ids]
    if not idx:
        raise EmptySplit("no segments for the requested subjects")
    return FeatureSet(X[idx], [records[i].label for i in idx], [records[i].subject_id for i in idx])


def stack(matrices) -> np.ndarray:
    return np.stack([m.data if isinstance(m, FeatureMatrix) else np.asarray(m) for m in matrices])


def make_splits(records: list[SegmentRecord], matrices, plan: SplitPlan) -> Splits:
    """Standardized train/val/test sets; statistics come from training subjects only."""
    X = stack(matrices).astype(np.float64)
    if not plan.val_subject_ids:
        raise EmptySplit("split plan has no validation subjects; carve one first")
    tr = _subset(records, X, plan.train_subject_ids)
    stats = row_stats(tr.X)
    tr.X = apply_stats(tr.X, stats)
    va = _subset(records, X, plan.val_subject_ids)
    va.X = apply_stats(va.X, stats)
    te = _subset(records, X, plan.test_subject_ids)
    te.X = apply_stats(te.X, stats)
    return Splits(tr, va, te, stats, plan)


def plan_with_validation(manifest: Manifest, policy, seed: int, val_fraction: float = 0.2) -> SplitPlan:
    return carve_validation(split_subjects(manifest, policy, seed), manifest, val_fraction, seed)


def vectors(matrices, axis: str) -> np.ndarray:
    fn = f_vector if axis.upper() == "F" else t_vector
    return np.stack([fn(m) for m in matrices]).astype(np.float64)


def forest_accuracy(records, matrices, plan: SplitPlan, axis: str, cfg: ForestConfig | None = None) -> dict:
    """Train on train+val subjects, score segments of the test subjects."""
    V = vectors(matrices, axis)
    fit_ids = set(plan.train_subject_ids) | set(plan.val_subject_ids)
    test_ids = set(plan.test_subject_ids)
    y = np.array([r.label for r in records])
    fit = np.array([r.subject_id in fit_ids for r in records])
    test = np.array([r.subject_id in test_ids for r in records])
    model = train_forest(V[fit], y[fit], cfg)
    out = metrics(predict_forest(model, V[test]) >= THRESHOLD, y[test])
    out["oob_score"] = model.oob_score
    return out


def train_model(splits: Splits, spec: ModelSpec, cfg: TrainConfig, augment=None):
    spec.input_shape = tuple(splits.train.X.shape[1:])
    model = build_model(spec, cfg.seed)
    report = train(model, splits.train, splits.val, splits.test, cfg, augment)
    return model, report


def occlusion_accuracy(model, data: FeatureSet, strategy: str, cfg: MaskConfig, seed: int) -> dict:
    """Score on test inputs masked with the given strategy (occlusion reading)."""
    rng = np.random.default_rng(seed)
    X = data.X
    if strategy != "none":
        F, T = X.shape[-2:]
        rows = []
        for x in X:
            for axis in ("F", "T"):
                if axis.lower() in strategy:
                    size, w = (F, cfg.max_f_width) if axis == "F" else (T, cfg.max_t_width)
                    for _ in range(cfg.masks_per_axis):
                        x = apply_region(x, draw_region(axis, size, w, rng), cfg.fill_value)
            rows.append(x)
        X = np.stack(rows)
    return evaluate(model, FeatureSet(X, data.y, data.subjects))


ABLATION_COLUMNS = ["feature", "strategy", "seed", "accuracy", "f1", "epochs"]
SUMMARY_COLUMNS = ["feature"] + [f"{STRATEGY_LABELS[s]} {m}" for s in ("none", "t", "f", "tf")
                                 for m in ("Acc", "F1")]


def ablate_masks(splits: Splits, kind_name: str, spec: ModelSpec, cfg: TrainConfig,
                 mask_cfg: MaskConfig, seeds, occlusion: bool = False,
                 strategies=("none", "t", "f", "tf")) -> list[dict]:
    """One model per strategy and seed, all scored on clean test data.

    With ``occlusion`` the models are trained unmasked and the mask is
    applied to the test inputs instead.
    """
    rows = []
    for seed in seeds:
        run_cfg = cfg.with_seed(seed)
        base = None
        for strategy in strategies:
            if occlusion:
                if base is None:
                    base, rep = train_model(splits, ModelSpec.from_dict(spec.to_dict()), run_cfg)
                res = occlusion_accuracy(base, splits.test, strategy, mask_cfg, seed)
                epochs = rep.epochs_run
            else:
                _, rep = train_model(splits, ModelSpec.from_dict(spec.to_dict()), run_cfg,
                                     batch_augmenter(strategy, mask_cfg))
                res, epochs = rep.test, rep.epochs_run
            rows.append({"feature": kind_name, "strategy": strategy, "seed": seed,
                         "accuracy": res["accuracy"], "f1": res["f1"], "epochs": epochs})
    return rows


def summarize_ablation(rows: list[dict]) -> list[dict]:
    """Table-shaped summary: one row per feature kind, seed-averaged Acc/F1 per strategy."""
    out = []
    for kind in dict.fromkeys(r["feature"] for r in rows):
        row = {"feature": kind}
        for s, label in STRATEGY_LABELS.items():
            sel = [r for r in rows if r["feature"] == kind and r["strategy"] == s]
            if sel:
                row[f"{label} Acc"] = float(np.mean([r["accuracy"] for r in sel]))
                row[f"{label} F1"] = float(np.mean([r["f1"] for r in sel]))
        out.append(row)
    return out
