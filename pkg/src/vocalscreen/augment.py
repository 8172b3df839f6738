"""Time/frequency band masking of feature matrices.

Masks are drawn SpecAugment style: a width uniform on {0..max} and a
uniform start, from the caller's seeded generator.  Everything outside
the drawn band is left bit-identical.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .features import FeatureMatrix


@dataclass
class MaskConfig:
    max_f_width: int = 8
    max_t_width: int = 12
    masks_per_axis: int = 1
    fill_value: float = 0.0  # applied after standardization

    def __post_init__(self):
        if self.max_f_width < 0 or self.max_t_width < 0 or self.masks_per_axis < 0:
            raise ValidationError("mask widths and counts must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MaskRegion:
    axis: str  # "F" (rows) or "T" (columns)
    start: int
    width: int


def draw_region(axis: str, size: int, max_width: int, rng) -> MaskRegion:
    width = int(rng.integers(0, min(max_width, size) + 1))
    start = int(rng.integers(0, size - width + 1))
    return MaskRegion(axis, start, width)


def apply_region(x: np.ndarray, region: MaskRegion, fill: float = 0.0) -> np.ndarray:
    """Copy of ``x`` with the band set to ``fill``.  The last two axes are (F, T),
    so batches work too."""
    out = np.array(x, copy=True)
    band = slice(region.start, region.start + region.width)
    if region.axis == "F":
        out[..., band, :] = fill
    elif region.axis == "T":
        out[..., band] = fill
    else:
        raise ValidationError(f"mask axis must be 'F' or 'T', got {region.axis!r}")
    return out


def _unwrap(fm):
    if isinstance(fm, FeatureMatrix):
        return fm.data, lambda d: FeatureMatrix(fm.kind, d)
    arr = np.asarray(fm)
    if arr.ndim < 2:
        raise ValidationError("masking needs an (F, T) matrix")
    return arr, lambda d: d


def _mask(fm, cfg: MaskConfig, rng, axes: str):
    data, wrap = _unwrap(fm)
    F, T = data.shape[-2:]
    for axis in axes:
        size, max_w = (F, cfg.max_f_width) if axis == "F" else (T, cfg.max_t_width)
        for _ in range(cfg.masks_per_axis):
            data = apply_region(data, draw_region(axis, size, max_w, rng), cfg.fill_value)
    return wrap(data)


def mask_time(fm, cfg: MaskConfig | None = None, rng=None):
    return _mask(fm, cfg or MaskConfig(), rng if rng is not None else np.random.default_rng(), "T")


def mask_freq(fm, cfg: MaskConfig | None = None, rng=None):
    return _mask(fm, cfg or MaskConfig(), rng if rng is not None else np.random.default_rng(), "F")


def mask_tf(fm, cfg: MaskConfig | None = None, rng=None):
    """Frequency mask(s) first, then time mask(s)."""
    return _mask(fm, cfg or MaskConfig(), rng if rng is not None else np.random.default_rng(), "FT")


MASKERS = {"none": None, "t": mask_time, "f": mask_freq, "tf": mask_tf}
STRATEGY_LABELS = {"none": "Original", "t": "T Mask", "f": "F Mask", "tf": "T-F Mask"}


def batch_augmenter(strategy: str, cfg: MaskConfig | None = None):
    """Per-sample masking over a (B, F, T) batch, for use as a training hook."""
    if strategy not in MASKERS:
        raise ValidationError(f"unknown mask strategy {strategy!r}; choose from {sorted(MASKERS)}")
    masker = MASKERS[strategy]
    if masker is None:
        return None
    cfg = cfg or MaskConfig()

    def augment(xb, rng):
        return np.stack([masker(x, cfg, rng) for x in xb])

    return augment
