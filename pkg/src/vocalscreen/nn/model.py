"""Architecture specs, model assembly and weight files."""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadMagic, InvalidSpec, TruncatedFile, ValidationError
from ..io_utils import atomic_write_bytes, atomic_write_json
from .layers import (
    Conv2d,
    ConvAxis,
    Dense,
    GlobalAvgPool,
    Layer,
    MaxPool2x2,
    ReLU,
    Residual,
    SEBlock,
    Sequential,
    Sigmoid,
)

DEFAULT_WIDTHS = (16, 32, 64, 64, 64, 64)
RSENET_WIDTH = 128
RSENET_BLOCKS = 3
SE_REDUCTION = 4


class Mode(str, enum.Enum):
    PURE_1D_F = "pure-1d-f"
    PURE_1D_T = "pure-1d-t"
    MIX_1DF_2D = "mix-1df-2d"
    MIX_1DT_2D = "mix-1dt-2d"
    PURE_2D = "pure-2d"
    RSENET = "rsenet"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if key in (m.value, m.name.lower().replace("_", "-")):
                return m
        raise InvalidSpec(f"unknown mode {value!r}; choose from {[m.value for m in cls]}")


@dataclass
class ModelSpec:
    mode: Mode = Mode.PURE_1D_F
    n_layers: int = 4
    kernel: int = 3
    dilations: tuple[int, ...] = (2, 2, 2, 3)
    widths: tuple[int, ...] | None = None
    input_shape: tuple[int, ...] = (128, 64)

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        self.dilations = tuple(int(d) for d in self.dilations)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if self.widths is None:
            self.widths = DEFAULT_WIDTHS[: self.n_layers]
        self.widths = tuple(int(w) for w in self.widths)

    def validate(self) -> "ModelSpec":
        if self.mode is Mode.RSENET:
            if len(self.input_shape) != 1:
                raise InvalidSpec(f"RSENet consumes 1D vectors, got input shape {self.input_shape}")
            return self
        if self.n_layers < 1:
            raise InvalidSpec("n_layers must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidSpec(f"kernel must be odd, got {self.kernel}")
        if len(self.dilations) != self.n_layers:
            raise InvalidSpec(f"{len(self.dilations)} dilations for {self.n_layers} layers")
        if any(d < 1 for d in self.dilations):
            raise InvalidSpec("dilations must be >= 1")
        if len(self.widths) != self.n_layers:
            raise InvalidSpec(f"{len(self.widths)} channel widths for {self.n_layers} layers")
        if len(self.input_shape) != 2:
            raise InvalidSpec(f"convolutional modes need (F, T) input, got {self.input_shape}")
        n_pools = {Mode.PURE_2D: self.n_layers // 2,
                   Mode.MIX_1DF_2D: self.n_layers // 2,
                   Mode.MIX_1DT_2D: self.n_layers // 2}.get(self.mode, 0)
        if min(self.input_shape) < 2 ** n_pools:
            raise InvalidSpec(f"input {self.input_shape} too small for {n_pools} poolings")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["dilations"] = list(self.dilations)
        d["widths"] = list(self.widths)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(mode=d["mode"], n_layers=d.get("n_layers", 4), kernel=d.get("kernel", 3),
                   dilations=tuple(d.get("dilations", ())), widths=d.get("widths"),
                   input_shape=tuple(d.get("input_shape", (128, 64))))


def receptive_field(kernel: int, dilations) -> int:
    """Input span seen by one output of stacked same-kernel dilated layers."""
    dilations = list(dilations)
    if kernel % 2 == 0 or not dilations:
        raise ValidationError("kernel must be odd and dilations non-empty")
    return 1 + sum(d * (kernel - 1) for d in dilations)


class Model:
    """A layer stack ending in a single sigmoid unit."""

    def __init__(self, spec: ModelSpec, net: Sequential, dtype):
        self.spec = spec
        self.net = net
        self.dtype = np.dtype(dtype)

    def params(self):
        return self.net.params()

    def n_params(self) -> int:
        return int(sum(p.value.size for p in self.params()))

    def _prepare(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if self.spec.mode is Mode.RSENET:
            return x.reshape(x.shape[0], -1)
        if x.ndim == 3:
            x = x[:, None]
        return x

    def forward(self, x, train: bool = False) -> np.ndarray:
        return self.net.forward(self._prepare(x), train).reshape(-1)

    def backward(self, dprob: np.ndarray):
        return self.net.backward(dprob.reshape(-1, 1).astype(self.dtype))

    def zero_grad(self):
        self.net.zero_grad()

    def predict_proba(self, X, batch_size: int = 64) -> np.ndarray:
        X = np.asarray(X)
        out = [self.forward(X[i:i + batch_size]) for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    def get_weights(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.params()]

    def set_weights(self, weights) -> None:
        for p, w in zip(self.params(), weights):
            if p.value.shape != np.shape(w):
                raise ValidationError(f"{p.name}: shape {np.shape(w)} != {p.value.shape}")
            p.value[...] = w


def _head(c_in, rng, dtype):
    return [GlobalAvgPool(), Dense(c_in, 1, rng, dtype, "head", gain=1.0), Sigmoid()]


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Assemble the network described by ``spec`` with seeded He initialisation.

    Convolutional modes: layer i is a dilated axis convolution or a k x k
    convolution (+ 2x2 max pool on every second layer of the 2D and mixed
    modes), each followed by ReLU, then global average pooling and one
    sigmoid unit.  RSENet maps a 64-vector through a dense stem and
    residual squeeze-excitation blocks.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    if spec.mode is Mode.RSENET:
        n_in = spec.input_shape[0]
        w = RSENET_WIDTH
        layers.append(Dense(n_in, w, rng, dtype, "stem"))
        for b in range(RSENET_BLOCKS):
            inner = Sequential([
                ReLU(),
                Dense(w, w, rng, dtype, f"block{b}.fc1"),
                ReLU(),
                Dense(w, w, rng, dtype, f"block{b}.fc2", gain=1.0),
                SEBlock(w, SE_REDUCTION, rng, dtype, f"block{b}.se"),
            ], check_finite=False)
            layers.append(Residual(inner))
        layers.append(ReLU())
        layers += [Dense(w, 1, rng, dtype, "head", gain=1.0), Sigmoid()]
        return Model(spec, Sequential(layers), dtype)

    c_in = 1
    for i, (c_out, d) in enumerate(zip(spec.widths, spec.dilations)):
        name = f"layer{i}"
        if spec.mode in (Mode.PURE_1D_F, Mode.PURE_1D_T):
            axis = "F" if spec.mode is Mode.PURE_1D_F else "T"
            layers += [ConvAxis(c_in, c_out, spec.kernel, d, axis, rng, dtype, name), ReLU()]
        elif spec.mode is Mode.PURE_2D:
            layers += [Conv2d(c_in, c_out, spec.kernel, rng, dtype, name), ReLU()]
            if i % 2 == 1:
                layers.append(MaxPool2x2())
        else:
            axis = "F" if spec.mode is Mode.MIX_1DF_2D else "T"
            if i % 2 == 0:
                layers += [ConvAxis(c_in, c_out, spec.kernel, d, axis, rng, dtype, name), ReLU()]
            else:
                layers += [Conv2d(c_in, c_out, spec.kernel, rng, dtype, name), ReLU(), MaxPool2x2()]
        c_in = c_out
    layers += _head(c_in, rng, dtype)
    return Model(spec, Sequential(layers), dtype)


def conv_param_count(spec: ModelSpec) -> int:
    """Closed-form parameter count for the pure axis-convolution modes."""
    total, c_in = 0, 1
    for c_out in spec.widths:
        total += spec.kernel * c_in * c_out + c_out
        c_in = c_out
    return total + c_in + 1


WEIGHTS_MAGIC = b"VSW1"


def save_model(model: Model, path) -> tuple[Path, Path]:
    """``<path>.json`` (spec + parameter table) and ``<path>.bin`` (float32 LE blobs)."""
    path = Path(path)
    params = model.params()
    doc = {
        "format": "vocalscreen-weights",
        "version": 1,
        "spec": model.spec.to_dict(),
        "params": [{"name": p.name, "shape": list(p.value.shape)} for p in params],
    }
    blob = WEIGHTS_MAGIC + b"".join(np.ascontiguousarray(p.value, dtype="<f4").tobytes() for p in params)
    json_path = path.with_suffix(".json")
    bin_path = path.with_suffix(".bin")
    atomic_write_bytes(bin_path, blob)
    atomic_write_json(json_path, doc)
    return json_path, bin_path


def load_model(path, dtype=np.float32) -> Model:
    path = Path(path)
    doc = json.loads(path.with_suffix(".json").read_text())
    spec = ModelSpec.from_dict(doc["spec"])
    model = build_model(spec, 0, dtype)
    blob = path.with_suffix(".bin").read_bytes()
    if blob[:4] != WEIGHTS_MAGIC:
        raise BadMagic(f"weights file starts with {blob[:4]!r}, expected {WEIGHTS_MAGIC!r}")
    pos = 4
    params = model.params()
    if len(params) != len(doc["params"]):
        raise ValidationError("parameter table does not match the architecture")
    for p, entry in zip(params, doc["params"]):
        if list(p.value.shape) != entry["shape"]:
            raise ValidationError(f"{entry['name']}: stored shape {entry['shape']} != {list(p.value.shape)}")
        n = p.value.size * 4
        if pos + n > len(blob):
            raise TruncatedFile(f"weights end inside {entry['name']}")
        p.value[...] = np.frombuffer(blob, dtype="<f4", count=p.value.size, offset=pos).reshape(p.value.shape)
        pos += n
    if pos != len(blob):
        raise ValidationError(f"{len(blob) - pos} trailing bytes in weights file")
    return model
