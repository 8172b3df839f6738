"""MFCC and LPC feature matrices, time pooling, fusion and 1D vectors.

Matrices are F x T: rows index frequency (mel cepstral coefficient or LPC
order), columns index time (frames).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateBank,
    NumericalBreakdown,
    OrderTooHigh,
    ShapeMismatch,
    ValidationError,
    WrongShape,
)
from .preprocess import FrameMatrix

LOG_FLOOR = 1e-10
N_COEFFS = 64
FFT_SIZE = 512
POOLED_T = 64
STD_EPS = 1e-8


class FeatureKind(enum.IntEnum):
    MFCC = 0
    LPC = 1
    FUSION = 2

    @classmethod
    def parse(cls, value) -> "FeatureKind":
        if isinstance(value, cls):
            return value
        try:
            if isinstance(value, int):
                return cls(value)
            return cls[str(value).strip().upper()]
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"unknown feature kind {value!r}; choose mfcc, lpc or fusion") from exc


@dataclass
class FeatureMatrix:
    kind: FeatureKind
    data: np.ndarray  # (F, T)

    def __post_init__(self):
        self.kind = FeatureKind.parse(self.kind)
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise WrongShape(f"feature matrix must be 2-D, got shape {self.data.shape}")
        if self.kind is FeatureKind.FUSION and self.data.shape[0] != 2 * N_COEFFS:
            raise WrongShape(f"fusion matrix must have {2 * N_COEFFS} rows, got {self.data.shape[0]}")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("feature matrix contains non-finite entries")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class MelFilterbank:
    n_filters: int
    fft_size: int
    sample_rate_hz: int
    weights: np.ndarray  # (n_filters, fft_size // 2 + 1)
    centers_hz: np.ndarray
    edges_mel: np.ndarray  # n_filters + 2 equidistant mel points


@dataclass
class LpcFrame:
    coeffs: np.ndarray
    order: int
    gain: float | None = None


@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray


def power_spectrum(frames, fft_size: int = FFT_SIZE) -> np.ndarray:
    """|DFT|^2 of each frame, bins 0..fft_size/2 (frames zero-padded)."""
    x = frames.values if isinstance(frames, FrameMatrix) else np.asarray(frames, dtype=np.float64)
    x = np.atleast_2d(x)
    if x.shape[1] > fft_size:
        raise ValidationError(f"frame length {x.shape[1]} exceeds fft size {fft_size}")
    spec = np.fft.rfft(x, n=fft_size, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(sample_rate_hz: int = 16000, fft_size: int = FFT_SIZE,
                         n_filters: int = N_COEFFS) -> MelFilterbank:
    """Triangular filters on an equidistant mel grid from 0 to Nyquist.

    Triangles are evaluated on the continuous frequency axis at each FFT
    bin and each row is rescaled so its largest weight is exactly 1.
    """
    if n_filters < 1:
        raise ValidationError("n_filters must be >= 1")
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise ValidationError(f"fft_size must be a power of two, got {fft_size}")
    mel_points = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2), n_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bin_hz = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size

    center_bins = np.round(hz_points[1:-1] * fft_size / sample_rate_hz).astype(int)
    if np.any(np.diff(center_bins) == 0):
        dup = int(np.flatnonzero(np.diff(center_bins) == 0)[0])
        raise DegenerateBank(f"filters {dup} and {dup + 1} share FFT bin {center_bins[dup]}")

    weights = np.zeros((n_filters, len(bin_hz)))
    for m in range(n_filters):
        lo, c, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_hz - lo) / (c - lo)
        falling = (hi - bin_hz) / (hi - c)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
        peak = weights[m].max()
        if peak <= 0:
            raise DegenerateBank(f"filter {m} covers no FFT bin")
        weights[m] /= peak
    return MelFilterbank(n_filters, fft_size, sample_rate_hz, weights, hz_points[1:-1], mel_points)


@lru_cache(maxsize=16)
def _dct_matrix(N: int) -> np.ndarray:
    n = np.arange(N)
    k = n[:, None]
    mat = np.cos(np.pi * (n[None, :] + 0.5) * k / N)
    scale = np.full(N, np.sqrt(2.0 / N))
    scale[0] = np.sqrt(1.0 / N)
    mat = mat * scale[:, None]
    mat.setflags(write=False)
    return mat


def dct_ii(v, axis: int = -1) -> np.ndarray:
    """Orthonormal DCT-II along ``axis``."""
    v = np.asarray(v, dtype=np.float64)
    v = np.moveaxis(v, axis, -1)
    out = v @ _dct_matrix(v.shape[-1]).T
    return np.moveaxis(out, -1, axis)


def idct_ii(X, axis: int = -1) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    X = np.moveaxis(X, axis, -1)
    out = X @ _dct_matrix(X.shape[-1])
    return np.moveaxis(out, -1, axis)


def mel_energies(frames: FrameMatrix, bank: MelFilterbank) -> np.ndarray:
    """(frames, n_filters) filterbank energies."""
    if frames.sample_rate_hz != bank.sample_rate_hz:
        raise ValidationError(
            f"frames at {frames.sample_rate_hz} Hz but filterbank built for {bank.sample_rate_hz} Hz"
        )
    return power_spectrum(frames, bank.fft_size) @ bank.weights.T


def mfcc(frames: FrameMatrix, bank: MelFilterbank) -> FeatureMatrix:
    log_e = np.log(mel_energies(frames, bank) + LOG_FLOOR)
    return FeatureMatrix(FeatureKind.MFCC, dct_ii(log_e, axis=1).T)


def autocorrelation(frame, p: int) -> np.ndarray:
    x = np.asarray(frame, dtype=np.float64)
    if p >= len(x):
        raise OrderTooHigh(f"order {p} needs a frame longer than {p} samples, got {len(x)}")
    n = len(x)
    return np.array([np.dot(x[:n - k], x[k:]) for k in range(p + 1)])


def regularize(r) -> np.ndarray:
    """The r(0) conditioning applied before every Levinson-Durbin solve."""
    r = np.array(r, dtype=np.float64)
    r[0] = r[0] * (1 + 1e-9) + 1e-12
    return r


def levinson_durbin(r, p: int) -> LpcFrame:
    """Predictor coefficients a_1..a_p with x(n) ~ sum_i a_i x(n - i).

    ``r`` is regularized before the recursion; ``gain`` is the square root
    of the final prediction-error power.
    """
    a, err = _levinson_batch(np.asarray(r, dtype=np.float64)[None, :], p)
    return LpcFrame(a[0], p, float(np.sqrt(max(err[0], 0.0))))


def _levinson_batch(r: np.ndarray, p: int):
    """Levinson-Durbin over the rows of ``r`` (n, >= p+1) at once."""
    if r.shape[1] < p + 1:
        raise ValidationError(f"need {p + 1} autocorrelation lags, got {r.shape[1]}")
    r = np.array(r[:, :p + 1], dtype=np.float64)
    r[:, 0] = r[:, 0] * (1 + 1e-9) + 1e-12
    n = r.shape[0]
    a = np.zeros((n, p))
    err = r[:, 0].copy()
    for m in range(p):
        acc = r[:, m + 1] - np.einsum("ij,ij->i", a[:, :m], r[:, m:0:-1])
        k = acc / err
        bad = np.abs(k) >= 1 + 1e-6
        if bad.any():
            raise NumericalBreakdown(f"reflection coefficient {k[bad][0]:.6g} at order {m + 1}")
        if m:
            a[:, :m] = a[:, :m] - k[:, None] * a[:, m - 1::-1]
        a[:, m] = k
        err = err * (1 - k * k)
    return a, err


def _autocorrelation_batch(x: np.ndarray, p: int) -> np.ndarray:
    n = x.shape[1]
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    spec = np.fft.rfft(x, nfft, axis=1)
    return np.fft.irfft(spec.real ** 2 + spec.imag ** 2, nfft, axis=1)[:, :p + 1]


def lpc_features(frames: FrameMatrix, p: int = N_COEFFS) -> FeatureMatrix:
    x = frames.values
    if x.shape[1] <= p:
        raise OrderTooHigh(f"frame length {x.shape[1]} must exceed order {p}")
    a, _ = _levinson_batch(_autocorrelation_batch(x, p), p)
    return FeatureMatrix(FeatureKind.LPC, a.T)


def pool_time(fm: FeatureMatrix) -> FeatureMatrix:
    """Average pooling along time, window 3 stride 2: 129 -> 64 columns."""
    d = fm.data
    if d.shape[1] != 2 * POOLED_T + 1:
        raise WrongShape(f"pool_time expects {2 * POOLED_T + 1} columns, got {d.shape[1]}")
    pooled = (d[:, 0:-2:2] + d[:, 1:-1:2] + d[:, 2::2]) / 3.0
    return FeatureMatrix(fm.kind, pooled)


def fuse(m: FeatureMatrix, l: FeatureMatrix) -> FeatureMatrix:
    if m.kind is not FeatureKind.MFCC or l.kind is not FeatureKind.LPC:
        raise ShapeMismatch(f"fuse needs (MFCC, LPC), got ({m.kind.name}, {l.kind.name})")
    if m.shape != l.shape:
        raise ShapeMismatch(f"shapes differ: {m.shape} vs {l.shape}")
    return FeatureMatrix(FeatureKind.FUSION, np.vstack([m.data, l.data]))


def f_vector(fm) -> np.ndarray:
    data = fm.data if isinstance(fm, FeatureMatrix) else np.asarray(fm)
    return data.mean(axis=-1)


def t_vector(fm) -> np.ndarray:
    data = fm.data if isinstance(fm, FeatureMatrix) else np.asarray(fm)
    return data.mean(axis=-2)


def fit_stats(train) -> FeatureStats:
    """Per-position mean/std over a stack of matrices (or vectors)."""
    arr = np.stack([m.data if isinstance(m, FeatureMatrix) else np.asarray(m) for m in train])
    arr = arr.astype(np.float64)
    return FeatureStats(arr.mean(axis=0), arr.std(axis=0))


def standardize(fm, stats: FeatureStats):
    if isinstance(fm, FeatureMatrix):
        return FeatureMatrix(fm.kind, standardize(fm.data, stats))
    return (np.asarray(fm) - stats.mean) / np.maximum(stats.std, STD_EPS)


def unstandardize(z, stats: FeatureStats):
    if isinstance(z, FeatureMatrix):
        return FeatureMatrix(z.kind, unstandardize(z.data, stats))
    return np.asarray(z) * np.maximum(stats.std, STD_EPS) + stats.mean


class FeatureExtractor:
    """Shares one filterbank across segments; turns a FrameMatrix into the
    pooled matrix of the requested kind."""

    def __init__(self, sample_rate_hz: int = 16000, fft_size: int = FFT_SIZE,
                 n_coeffs: int = N_COEFFS):
        self.bank = build_mel_filterbank(sample_rate_hz, fft_size, n_coeffs)
        self.n_coeffs = n_coeffs

    def __call__(self, frames: FrameMatrix, kind) -> FeatureMatrix:
        kind = FeatureKind.parse(kind)
        if kind is FeatureKind.MFCC:
            return pool_time(mfcc(frames, self.bank))
        if kind is FeatureKind.LPC:
            return pool_time(lpc_features(frames, self.n_coeffs))
        return fuse(pool_time(mfcc(frames, self.bank)),
                    pool_time(lpc_features(frames, self.n_coeffs)))
