"""Binary cross-entropy training with Adam and early stopping on validation F1."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..dataset.evaluation import THRESHOLD, metrics, subject_level
from ..errors import DivergedLoss, EmptySplit, NonFiniteTensor, ValidationError
from .model import Mode, Model, ModelSpec, build_model, receptive_field

log = logging.getLogger(__name__)

P_CLAMP = 1e-7


def bce_loss(p, y) -> float:
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1 - P_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def bce_grad(p, y) -> np.ndarray:
    """d(bce_loss)/dp; zero where the clamp is active."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, P_CLAMP, 1 - P_CLAMP)
    g = (pc - y) / (pc * (1 - pc)) / len(p)
    return np.where((p > P_CLAMP) & (p < 1 - P_CLAMP), g, 0.0)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    time_budget_s: float | None = None  # stop after the epoch that crosses it

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValidationError("training hyperparameters must be positive")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ValidationError("time_budget_s must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)


@dataclass
class FeatureSet:
    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y).astype(np.int64)
        self.subjects = np.asarray(self.subjects)
        if not (len(self.X) == len(self.y) == len(self.subjects)):
            raise ValidationError("X, y and subjects must have equal length")

    def __len__(self):
        return len(self.y)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad * p.grad
            p.value -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.value.dtype)


def train_step(model: Model, opt: Adam, xb, yb) -> float:
    model.zero_grad()
    try:
        p = model.forward(xb, train=True)
    except NonFiniteTensor as exc:
        raise DivergedLoss(str(exc)) from exc
    loss = bce_loss(p, yb)
    if not np.isfinite(loss):
        raise DivergedLoss(f"loss became {loss}")
    model.backward(bce_grad(p, yb))
    opt.step()
    return loss


def evaluate(model: Model, data: FeatureSet) -> dict:
    """Segment-level and subject-level metrics on one split."""
    probs = model.predict_proba(data.X)
    seg = metrics(probs >= THRESHOLD, data.y)
    seg["loss"] = bce_loss(probs, data.y)
    sp, sy, _ = subject_level(data.subjects, probs, data.y)
    seg["subject"] = metrics(sp, sy)
    return seg


@dataclass
class FitReport:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    test: dict = field(default_factory=dict)
    val: dict = field(default_factory=dict)
    seconds: float = 0.0
    stopped: str = ""
    spec: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def train(model: Model, train_set: FeatureSet, val_set: FeatureSet, test_set: FeatureSet | None,
          cfg: TrainConfig | None = None, augment=None) -> FitReport:
    """Mini-batch Adam on BCE; the best-validation-F1 weights are restored
    before the test evaluation.  F1 ties go to the lower validation loss,
    since a small validation set saturates F1 early.  ``augment`` (if
    given) transforms each training batch only."""
    cfg = cfg or TrainConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        raise EmptySplit("training and validation sets must be non-empty")
    if test_set is not None and len(test_set) == 0:
        raise EmptySplit("test set is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params(), cfg.lr)
    report = FitReport(spec=model.spec.to_dict())
    best, best_weights, stale = (-1.0, -np.inf), model.get_weights(), 0
    start = time.perf_counter()
    n = len(train_set)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        losses = []
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            xb = train_set.X[idx]
            if augment is not None:
                xb = augment(xb, rng)
            losses.append(train_step(model, opt, xb, train_set.y[idx]) * len(idx))
        report.train_loss.append(float(np.sum(losses) / n))
        try:
            v = evaluate(model, val_set)
        except NonFiniteTensor as exc:
            raise DivergedLoss(f"validation pass after epoch {epoch + 1}: {exc}") from exc
        report.val_accuracy.append(v["accuracy"])
        report.val_f1.append(v["f1"])
        report.val_loss.append(v["loss"])
        report.epochs_run = epoch + 1
        log.info("epoch %d loss %.4f val acc %.3f f1 %.3f", epoch + 1, report.train_loss[-1],
                 v["accuracy"], v["f1"])
        score = (v["f1"], -v["loss"])
        if score > best:
            best, best_weights, stale = score, model.get_weights(), 0
            report.best_epoch = epoch + 1
        else:
            stale += 1
            if stale >= cfg.patience:
                report.stopped = "patience"
                break
        if cfg.time_budget_s is not None and time.perf_counter() - start > cfg.time_budget_s:
            report.stopped = "time budget"
            break
    else:
        report.stopped = "max epochs"
    model.set_weights(best_weights)
    report.val = evaluate(model, val_set)
    if test_set is not None:
        report.test = evaluate(model, test_set)
    report.seconds = time.perf_counter() - start
    return report


def fit_steps(model: Model, X, y, steps: int, lr: float = 1e-3, batch_size: int = 32, seed: int = 0):
    """Plain optimisation for a fixed number of steps; returns per-step losses."""
    rng = np.random.default_rng(seed)
    opt = Adam(model.params(), lr)
    losses = []
    n = len(y)
    for _ in range(steps):
        idx = rng.permutation(n)[:batch_size]
        losses.append(train_step(model, opt, X[idx], np.asarray(y)[idx]))
    return losses


@dataclass
class GridSpace:
    modes: list = field(default_factory=lambda: [Mode.PURE_1D_F])
    layers: list = field(default_factory=lambda: [2, 4, 6])
    kernels: list = field(default_factory=lambda: [3, 5, 7])
    dilations: list | None = None  # explicit tuples; None -> uniform rate 2
    widths: tuple | None = None  # used for cells whose depth matches

    def _spec(self, mode, n_layers, k, dil) -> ModelSpec:
        widths = self.widths if self.widths and len(self.widths) == n_layers else None
        return ModelSpec(Mode.parse(mode), n_layers, k, dil, widths)

    def cells(self) -> list[ModelSpec]:
        out = []
        for mode, k in itertools.product(self.modes, self.kernels):
            if self.dilations:
                options = [tuple(d) for d in self.dilations]
                layer_opts = sorted({len(d) for d in options}) if not self.layers else self.layers
                for n_layers, dil in itertools.product(layer_opts, options):
                    if len(dil) == n_layers:
                        out.append(self._spec(mode, n_layers, k, dil))
            else:
                for n_layers in self.layers:
                    out.append(self._spec(mode, n_layers, k, (2,) * n_layers))
        return out


GRID_COLUMNS = ["mode", "layers", "kernel", "dilations", "receptive_field", "params",
                "acc_mean", "acc_std", "f1_mean", "f1_std", "repeats", "std_over"]


def grid_search(space: GridSpace, train_set: FeatureSet, val_set: FeatureSet, test_set: FeatureSet,
                cfg: TrainConfig, repeats: int = 1, jobs: int = 1, input_shape=None) -> list[dict]:
    """One train/evaluate per cell and repeat (seeds cfg.seed + r).

    The mean/std columns are over repeated seeds.  Results come back in
    cell order whatever ``jobs`` is.
    """
    input_shape = tuple(input_shape or train_set.X.shape[1:])
    specs = space.cells()

    def run(spec: ModelSpec) -> dict:
        spec.input_shape = input_shape
        accs, f1s = [], []
        n_params = 0
        for r in range(repeats):
            seed = cfg.seed + r
            model = build_model(spec, seed)
            n_params = model.n_params()
            rep = train(model, train_set, val_set, test_set,
                        cfg.with_seed(seed))
            accs.append(rep.test["accuracy"])
            f1s.append(rep.test["f1"])
        rf = receptive_field(spec.kernel, spec.dilations) if spec.mode is not Mode.RSENET else 0
        return {
            "mode": spec.mode.value, "layers": spec.n_layers, "kernel": spec.kernel,
            "dilations": ",".join(map(str, spec.dilations)), "receptive_field": rf, "params": n_params,
            "acc_mean": float(np.mean(accs)), "acc_std": float(np.std(accs)),
            "f1_mean": float(np.mean(f1s)), "f1_std": float(np.std(f1s)),
            "repeats": repeats, "std_over": "seeds",
        }

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(run, specs))
    return [run(s) for s in specs]


def rows_to_csv(rows: list[dict], columns=None) -> str:
    columns = columns or (list(rows[0]) if rows else GRID_COLUMNS)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in columns})
    return buf.getvalue()
