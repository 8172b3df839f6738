"""Random forest of Gini CART trees and fold-wise feature importance."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyData, SingleClass, ValidationError
from .io_utils import atomic_write_json, atomic_write_text


@dataclass
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 12
    min_leaf: int = 2
    mtry: int | None = None  # None -> floor(sqrt(F))
    seed: int = 0
    n_jobs: int = 1

    def resolve_mtry(self, n_features: int) -> int:
        m = int(np.floor(np.sqrt(n_features))) if self.mtry is None else int(self.mtry)
        if not 1 <= m <= n_features:
            raise ValidationError(f"mtry must lie in [1, {n_features}], got {m}")
        return m


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (nodes, 2) class counts of training samples reaching the node
    impurity: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        c = self.counts[self.leaf_index(X)]
        # ties vote for class 1
        return (c[:, 1] >= c[:, 0]).astype(np.int64)


@dataclass
class ForestModel:
    trees: list[Tree]
    n_features: int
    oob_score: float
    config: ForestConfig = field(default_factory=ForestConfig)


def gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.sum(p * p, axis=-1), 0.0)


def _best_split(Xn: np.ndarray, yn: np.ndarray, feats: np.ndarray, min_leaf: int):
    """Best (feature, threshold, weighted child impurity) among ``feats`` or None."""
    n = len(yn)
    cols = Xn[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    ys = yn[order]
    left1 = np.cumsum(ys, axis=0)[:-1]  # class-1 count left of split i (after i+1 samples)
    n_left = np.arange(1, n)[:, None]
    n_right = n - n_left
    left0 = n_left - left1
    right1 = ys.sum(axis=0)[None, :] - left1
    right0 = n_right - right1
    g_left = 1.0 - (left0 ** 2 + left1 ** 2) / n_left ** 2
    g_right = 1.0 - (right0 ** 2 + right1 ** 2) / n_right ** 2
    weighted = (n_left * g_left + n_right * g_right) / n
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    weighted = np.where(valid, weighted, np.inf)
    flat = int(np.argmin(weighted))
    i, j = divmod(flat, len(feats))
    # threshold on the left sample value: rank-based, so invariant to monotone maps
    thr = xs[i, j]
    return int(feats[j]), float(thr), float(weighted[i, j])


def build_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, mtry: int,
               rng: np.random.Generator) -> Tree:
    F = X.shape[1]
    feature, threshold, left, right, counts, impurity = [], [], [], [], [], []

    def new_node(idx):
        c = np.array([np.sum(y[idx] == 0), np.sum(y[idx] == 1)], dtype=np.int64)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(c)
        impurity.append(float(gini(c.astype(float))))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= cfg.max_depth or impurity[node] == 0.0 or len(idx) < 2 * cfg.min_leaf:
            continue
        perm = rng.permutation(F)
        split = None
        # keep drawing feature batches until some candidate admits a split
        for start in range(0, F, mtry):
            split = _best_split(X[idx], y[idx], perm[start:start + mtry], cfg.min_leaf)
            if split is not None:
                break
        if split is None:
            continue
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64).reshape(-1, 2),
                np.array(impurity))


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyData("training data must be a non-empty 2-D array")
    if len(X) < 2:
        raise EmptyData("need at least two samples")
    if len(y) != len(X):
        raise DimensionMismatch(f"{len(X)} rows but {len(y)} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise SingleClass("both classes must be present")
    return X, y


def train_forest(X, y, cfg: ForestConfig | None = None) -> ForestModel:
    """Bagged CART trees; each tree draws from its own seed-derived stream."""
    cfg = cfg or ForestConfig()
    if cfg.n_trees < 1:
        raise ValidationError("n_trees must be >= 1")
    X, y = _check_xy(X, y)
    n, F = X.shape
    mtry = cfg.resolve_mtry(F)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)

    def grow(ss):
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, n, size=n)
        tree = build_tree(X[boot], y[boot], cfg, mtry, rng)
        oob = np.ones(n, dtype=bool)
        oob[boot] = False
        return tree, oob

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            grown = list(pool.map(grow, streams))
    else:
        grown = [grow(ss) for ss in streams]

    votes = np.zeros(n)
    seen = np.zeros(n)
    for tree, oob in grown:
        if oob.any():
            votes[oob] += tree.predict(X[oob])
            seen[oob] += 1
    has = seen > 0
    oob_score = float(np.mean((votes[has] / seen[has] >= 0.5) == y[has])) if has.any() else 0.0
    return ForestModel([t for t, _ in grown], F, oob_score, cfg)


def predict_forest(model: ForestModel, x) -> np.ndarray | float:
    """Fraction of trees voting class 1, per row (scalar for a single vector)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    p = np.mean([t.predict(X) for t in model.trees], axis=0)
    return float(p[0]) if single else p


def tree_mdi(tree: Tree, n_features: int) -> np.ndarray:
    imp = np.zeros(n_features)
    n_root = tree.counts[0].sum()
    for node in np.flatnonzero(tree.feature >= 0):
        l, r = tree.left[node], tree.right[node]
        n = tree.counts[node].sum()
        nl, nr = tree.counts[l].sum(), tree.counts[r].sum()
        decrease = tree.impurity[node] - (nl * tree.impurity[l] + nr * tree.impurity[r]) / n
        imp[tree.feature[node]] += n / n_root * decrease
    return imp


def mdi_importance(model: ForestModel) -> np.ndarray:
    """Mean decrease in Gini impurity, averaged over trees, normalized to sum 1."""
    imp = np.mean([tree_mdi(t, model.n_features) for t in model.trees], axis=0)
    total = imp.sum()
    return imp / total if total > 0 else imp


def zscore(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)


@dataclass
class ImportanceReport:
    raw: np.ndarray  # (k, F) MDI per fold
    z: np.ndarray  # (k, F)
    mean_z: np.ndarray  # (F,)
    ranking: np.ndarray  # feature indices, descending mean z
    fold_accuracy: np.ndarray  # held-out accuracy per fold

    def fold_top(self) -> np.ndarray:
        return np.argmax(self.z, axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        F = self.raw.shape[1]
        w.writerow(["fold", "measure"] + [f"f{i}" for i in range(F)])
        for k in range(self.raw.shape[0]):
            w.writerow([k, "mdi"] + [repr(float(v)) for v in self.raw[k]])
            w.writerow([k, "z"] + [repr(float(v)) for v in self.z[k]])
        w.writerow(["mean", "z"] + [repr(float(v)) for v in self.mean_z])
        return buf.getvalue()

    def ranking_json(self) -> dict:
        return {
            "ranking": [int(i) for i in self.ranking],
            "mean_z": [float(v) for v in self.mean_z],
            "fold_top": [int(i) for i in self.fold_top()],
            "fold_accuracy": [float(a) for a in self.fold_accuracy],
        }

    def save(self, csv_path, json_path) -> None:
        atomic_write_text(csv_path, self.to_csv())
        atomic_write_json(json_path, self.ranking_json())


def subject_folds(groups, y, k: int, seed: int) -> np.ndarray:
    """Fold id per sample; whole subjects go to one fold, labels dealt evenly."""
    groups = np.asarray(groups)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    fold_of = {}
    subjects = sorted(set(groups.tolist()))
    label_of = {g: int(np.round(y[groups == g].mean())) for g in subjects}
    offset = 0
    for label in (0, 1):
        ids = [g for g in subjects if label_of[g] == label]
        ids = [ids[i] for i in rng.permutation(len(ids))]
        for j, g in enumerate(ids):
            fold_of[g] = (j + offset) % k
        offset += len(ids)
    return np.array([fold_of[g] for g in groups.tolist()])


def kfold_importance(X, y, groups=None, k: int = 5, cfg: ForestConfig | None = None) -> ImportanceReport:
    """Per fold: train on the other folds, take MDI, z-score across features."""
    cfg = cfg or ForestConfig()
    X, y = _check_xy(X, y)
    if len(X) < k:
        raise EmptyData(f"need at least {k} samples for {k} folds")
    if groups is None:
        groups = np.arange(len(X))
    folds = subject_folds(groups, y, k, cfg.seed)
    raw, z, acc = [], [], []
    for fold in range(k):
        train = folds != fold
        fold_cfg = ForestConfig(cfg.n_trees, cfg.max_depth, cfg.min_leaf, cfg.mtry, cfg.seed + fold, cfg.n_jobs)
        model = train_forest(X[train], y[train], fold_cfg)
        mdi = mdi_importance(model)
        raw.append(mdi)
        z.append(zscore(mdi))
        test = ~train
        acc.append(float(np.mean((predict_forest(model, X[test]) >= 0.5) == y[test])) if test.any() else float("nan"))
    raw = np.array(raw)
    z = np.array(z)
    mean_z = z.mean(axis=0)
    ranking = np.argsort(-mean_z, kind="stable")
    return ImportanceReport(raw, z, mean_z, ranking, np.array(acc))


def save_forest(model: ForestModel, path) -> Path:
    doc = {
        "n_features": model.n_features,
        "oob_score": model.oob_score,
        "config": asdict(model.config),
        "trees": [{k: getattr(t, k).tolist() for k in
                   ("feature", "threshold", "left", "right", "counts", "impurity")} for t in model.trees],
    }
    return atomic_write_text(path, json.dumps(doc))


def load_forest(path) -> ForestModel:
    doc = json.loads(Path(path).read_text())
    trees = [Tree(np.array(t["feature"], dtype=np.int64), np.array(t["threshold"]),
                  np.array(t["left"], dtype=np.int64), np.array(t["right"], dtype=np.int64),
                  np.array(t["counts"], dtype=np.int64).reshape(-1, 2), np.array(t["impurity"]))
             for t in doc["trees"]]
    return ForestModel(trees, doc["n_features"], doc["oob_score"], ForestConfig(**doc["config"]))
