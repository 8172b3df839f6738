"""Recording -> fixed-size windowed frame matrices.

The chain is: load -> resample -> silence removal -> pre-emphasis ->
segmentation -> framing + Hamming window.  Every step is a pure function.
"""

from __future__ import annotations

import json
import wave
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyAudio,
    EmptyVoiced,
    InvalidLength,
    SegmentTooShort,
    UnsupportedFormat,
    ValidationError,
)

PCM16_SCALE = 32768.0
RESAMPLE_TAPS = 64
LEVEL_FLOOR = 1e-10


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    subject_id: str = ""
    recording_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValidationError("AudioClip samples must be one-dimensional")
        if int(self.sample_rate_hz) <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("AudioClip contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def with_samples(self, samples, sample_rate_hz=None) -> "AudioClip":
        return AudioClip(
            samples,
            self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            self.subject_id,
            self.recording_id,
        )


@dataclass
class PreprocessConfig:
    mu: float = 0.97
    target_rate_hz: int = 16000
    silence_frame_ms: int = 25
    min_silence_ms: int = 200
    segment_seconds: float = 3.0
    frame_len: int = 512
    frames_per_segment: int = 129

    def __post_init__(self):
        if not 0 < self.mu <= 1:
            raise ValidationError(f"mu must lie in (0, 1], got {self.mu}")
        if self.target_rate_hz <= 0 or self.silence_frame_ms <= 0 or self.min_silence_ms < 0:
            raise ValidationError("rates and durations must be positive")
        if self.segment_seconds <= 0:
            raise ValidationError("segment_seconds must be positive")
        if self.frame_len < 2 or self.frames_per_segment < 2:
            raise ValidationError("frame_len and frames_per_segment must be >= 2")

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_seconds * self.target_rate_hz))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "PreprocessConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Segment:
    samples: np.ndarray
    start_offset_s: float
    subject_id: str = ""
    recording_id: str = ""
    index: int = 0


@dataclass
class FrameMatrix:
    values: np.ndarray  # (frames, frame_len)
    hop: int
    sample_rate_hz: int = 16000

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def frame_len(self) -> int:
        return self.values.shape[1]


def load_audio(path, subject_id: str = "", recording_id: str = "") -> AudioClip:
    """Read a PCM16 RIFF/WAVE file, downmixing stereo by channel mean."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            n_channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            n_frames = w.getnframes()
            raw = w.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if width != 2 or n_channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: need PCM16 mono/stereo, got width={width} channels={n_channels}")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM16_SCALE
    if data.size == 0:
        raise EmptyAudio(f"{path}: no samples")
    data = data.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(data, rate, subject_id, recording_id or path.stem)


def write_wav(path, samples, sample_rate_hz: int) -> None:
    """Write mono PCM16; samples are clipped to [-1, 32767/32768]."""
    pcm = np.clip(np.round(np.asarray(samples) * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate_hz))
        w.writeframes(pcm.tobytes())


def _lowpass_taps(cutoff: float, n_taps: int = RESAMPLE_TAPS) -> np.ndarray:
    # cutoff in cycles/sample; unit DC gain
    n = np.arange(n_taps) - (n_taps - 1) / 2
    h = 2 * cutoff * np.sinc(2 * cutoff * n) * hamming(n_taps)
    return h / h.sum()


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Anti-alias with a windowed-sinc FIR, then linearly interpolate."""
    if target_hz <= 0:
        raise ValidationError(f"target rate must be positive, got {target_hz}")
    src = clip.sample_rate_hz
    if src == target_hz:
        return clip.with_samples(clip.samples.copy())
    x = clip.samples
    h = _lowpass_taps(min(src, target_hz) / 2 / src)
    pad = RESAMPLE_TAPS // 2
    # edge padding keeps DC exact at the boundaries
    z = np.convolve(np.pad(x, pad, mode="edge"), h, mode="full")
    delay = pad + (RESAMPLE_TAPS - 1) / 2
    n_out = int(np.floor(len(x) * target_hz / src))
    t_src = np.arange(n_out) * (src / target_hz)
    y = np.interp(t_src + delay, np.arange(len(z)), z)
    return clip.with_samples(y, target_hz)


def frame_levels_db(x: np.ndarray, frame: int) -> np.ndarray:
    """Level of each non-overlapping frame in dBFS; the last frame may be short."""
    n = int(np.ceil(len(x) / frame))
    levels = np.empty(n)
    for i in range(n):
        chunk = x[i * frame:(i + 1) * frame]
        levels[i] = 20 * np.log10(np.sqrt(np.mean(chunk ** 2)) + LEVEL_FLOOR)
    return levels


def voiced_intervals(clip: AudioClip, cfg: PreprocessConfig) -> list[tuple[int, int]]:
    """Sample ranges [start, stop) that survive silence removal.

    Frames below the mean frame level (or digitally silent) are silent;
    maximal silent runs of at least ``min_silence_ms`` are dropped.
    """
    x = clip.samples
    if x.size == 0:
        raise EmptyAudio("cannot remove silence from an empty clip")
    frame = max(1, int(round(cfg.silence_frame_ms * clip.sample_rate_hz / 1000)))
    levels = frame_levels_db(x, frame)
    threshold = levels.mean()
    floor_db = 20 * np.log10(LEVEL_FLOOR)
    # the 1e-9 dB margin absorbs rounding on equal-energy frames
    silent = (levels < threshold - 1e-9) | (levels <= floor_db + 1e-9)
    if silent.all():
        raise EmptyVoiced(f"recording {clip.recording_id!r} has no voiced frames")

    min_run = int(np.ceil(cfg.min_silence_ms / cfg.silence_frame_ms))
    drop = np.zeros_like(silent)
    i = 0
    while i < len(silent):
        if silent[i]:
            j = i
            while j < len(silent) and silent[j]:
                j += 1
            if j - i >= max(min_run, 1):
                drop[i:j] = True
            i = j
        else:
            i += 1

    intervals = []
    i = 0
    while i < len(drop):
        if drop[i]:
            i += 1
            continue
        j = i
        while j < len(drop) and not drop[j]:
            j += 1
        intervals.append((i * frame, min(j * frame, len(x))))
        i = j
    return intervals


def remove_silence(clip: AudioClip, cfg: PreprocessConfig) -> AudioClip:
    intervals = voiced_intervals(clip, cfg)
    kept = np.concatenate([clip.samples[a:b] for a, b in intervals])
    return clip.with_samples(kept)


def pre_emphasize(clip: AudioClip, mu: float) -> AudioClip:
    if not 0 < mu <= 1:
        raise ValidationError(f"mu must lie in (0, 1], got {mu}")
    x = clip.samples
    y = x.copy()
    y[1:] = x[1:] - mu * x[:-1]
    return clip.with_samples(y)


def segment(clip: AudioClip, cfg: PreprocessConfig) -> list[Segment]:
    """Non-overlapping fixed-length windows; the short tail is discarded."""
    if clip.sample_rate_hz != cfg.target_rate_hz:
        raise ValidationError(
            f"clip at {clip.sample_rate_hz} Hz, expected {cfg.target_rate_hz} Hz; resample first"
        )
    seg_len = cfg.segment_samples
    n = len(clip.samples) // seg_len
    return [
        Segment(
            samples=clip.samples[i * seg_len:(i + 1) * seg_len].copy(),
            start_offset_s=i * seg_len / clip.sample_rate_hz,
            subject_id=clip.subject_id,
            recording_id=clip.recording_id,
            index=i,
        )
        for i in range(n)
    ]


def hamming(N: int) -> np.ndarray:
    if N < 2:
        raise InvalidLength(f"Hamming window needs N >= 2, got {N}")
    n = np.arange(N)
    return 0.54 - 0.46 * np.cos(2 * np.pi * n / (N - 1))


def frame_and_window(seg: Segment, cfg: PreprocessConfig) -> FrameMatrix:
    x = np.asarray(seg.samples, dtype=np.float64)
    L = len(x)
    if L < cfg.frame_len + cfg.frames_per_segment - 1:
        raise SegmentTooShort(
            f"segment of {L} samples cannot hold {cfg.frames_per_segment} frames of {cfg.frame_len}"
        )
    hop = (L - cfg.frame_len) // (cfg.frames_per_segment - 1)
    idx = np.arange(cfg.frames_per_segment)[:, None] * hop + np.arange(cfg.frame_len)[None, :]
    return FrameMatrix(x[idx] * hamming(cfg.frame_len), hop, cfg.target_rate_hz)


def preprocess_clip(clip: AudioClip, cfg: PreprocessConfig) -> list[Segment]:
    """Resample, strip silence, pre-emphasize and segment one recording."""
    clip = resample(clip, cfg.target_rate_hz)
    clip = remove_silence(clip, cfg)
    clip = pre_emphasize(clip, cfg.mu)
    return segment(clip, cfg)
