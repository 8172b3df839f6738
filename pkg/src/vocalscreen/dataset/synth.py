"""Desk-scale synthetic corpus standing in for the restricted clinical sets.

Each subject gets a harmonic "voice": a fundamental, a spectral tilt, a
slow amplitude envelope and a random formant-like timbre.  Class 1 voices
are lower, darker on average, slower and flatter in intonation; the
timbre is drawn per subject so identity does not determine class.  Every
syllable also moves between vowels from one shared inventory, so frame-to-
frame variation reflects content rather than class.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..preprocess import write_wav
from .manifest import Manifest, Recording, SubjectRecord

MAX_HARMONIC_HZ = 7000.0

# (F1, F2, F3) in Hz for a small vowel inventory shared by both classes
VOWELS_HZ = np.array([
    [730, 1090, 2440],
    [270, 2290, 3010],
    [300, 870, 2240],
    [530, 1840, 2480],
    [570, 840, 2410],
    [660, 1720, 2410],
])
VOWEL_BW_HZ = np.array([90.0, 120.0, 180.0])
VOWEL_GAIN = np.array([6.0, 4.0, 2.0])


@dataclass
class VoiceProfile:
    f0_hz: float
    tilt: float  # harmonic amplitude ~ h ** -tilt
    am_rate_hz: float
    intonation: float  # relative f0 excursion
    formants_hz: np.ndarray
    formant_bw_hz: np.ndarray
    formant_gain: np.ndarray
    jitter_db: np.ndarray  # per-harmonic timbre offsets


def draw_profile(label: int, rng: np.random.Generator) -> VoiceProfile:
    n_h = 80
    if label == 1:
        f0 = 110.0 + rng.uniform(-10, 10)
        tilt = rng.uniform(1.05, 1.45)
        am = rng.uniform(1.6, 2.4)
        inton = rng.uniform(0.01, 0.03)
    else:
        f0 = 170.0 + rng.uniform(-10, 10)
        tilt = rng.uniform(0.85, 1.25)
        am = rng.uniform(3.8, 5.2)
        inton = rng.uniform(0.06, 0.1)
    return VoiceProfile(
        f0_hz=f0,
        tilt=tilt,
        am_rate_hz=am,
        intonation=inton,
        formants_hz=np.sort(rng.uniform([300, 900, 2000], [900, 2000, 3500])),
        formant_bw_hz=rng.uniform(80, 250, size=3),
        formant_gain=rng.uniform(0.5, 2.0, size=3),
        jitter_db=rng.normal(0, 3.0, size=n_h),
    )


def _articulation(harmonics_hz: np.ndarray, n: int, sr: int, rng) -> np.ndarray:
    """(n_harmonics, n) gains that move between random vowels once per syllable."""
    syll = int(rng.uniform(0.15, 0.3) * sr)
    n_syll = n // syll + 2
    vowels = VOWELS_HZ[rng.integers(0, len(VOWELS_HZ), size=n_syll)]
    vowels = vowels * rng.uniform(0.9, 1.1, size=(n_syll, 1))
    diff = harmonics_hz[None, :, None] - vowels[:, None, :]
    env = 0.2 + np.sum(VOWEL_GAIN * np.exp(-0.5 * (diff / VOWEL_BW_HZ) ** 2), axis=2)
    knots = np.arange(n_syll) * syll
    t = np.arange(n)
    return np.stack([np.interp(t, knots, env[:, h]) for h in range(len(harmonics_hz))])


def _voiced_run(profile: VoiceProfile, n: int, sr: int, rng) -> np.ndarray:
    t = np.arange(n) / sr
    # slow intonation contour
    contour = 1 + profile.intonation * np.sin(2 * np.pi * rng.uniform(0.2, 0.5) * t + rng.uniform(0, 2 * np.pi))
    f0 = profile.f0_hz * contour
    phase = 2 * np.pi * np.cumsum(f0) / sr
    n_h = min(len(profile.jitter_db), int(MAX_HARMONIC_HZ // (profile.f0_hz * 1.15)))
    harmonics = profile.f0_hz * np.arange(1, n_h + 1)
    timbre = 1.0 + sum(
        g * np.exp(-0.5 * ((harmonics - c) / bw) ** 2)
        for c, bw, g in zip(profile.formants_hz, profile.formant_bw_hz, profile.formant_gain)
    )
    static = np.arange(1, n_h + 1) ** -profile.tilt * timbre * 10 ** (profile.jitter_db[:n_h] / 20)
    gains = _articulation(harmonics, n, sr, rng)
    out = np.zeros(n)
    for h in range(n_h):
        out += static[h] * gains[h] * np.sin((h + 1) * phase + rng.uniform(0, 2 * np.pi))
    am = 1 - 0.6 * (0.5 + 0.5 * np.cos(2 * np.pi * profile.am_rate_hz * t + rng.uniform(0, 2 * np.pi)))
    out *= am
    # short fades avoid clicks at utterance edges
    fade = min(n // 2, int(0.02 * sr))
    if fade:
        ramp = np.linspace(0, 1, fade)
        out[:fade] *= ramp
        out[-fade:] *= ramp[::-1]
    return out / (np.max(np.abs(out)) + 1e-12)


def synth_recording(profile: VoiceProfile, rng, duration_s: float = 12.0,
                    sample_rate_hz: int = 16000) -> np.ndarray:
    """Utterances of 1.5-3 s separated by 0.3-0.7 s pauses, ~duration_s long."""
    sr = sample_rate_hz
    total = int(duration_s * sr)
    pieces = []
    used = 0
    while used < total:
        n_voiced = min(int(rng.uniform(1.5, 3.0) * sr), total - used)
        pieces.append(_voiced_run(profile, n_voiced, sr, rng) * 0.9)
        used += n_voiced
        if used >= total:
            break
        n_pause = min(int(rng.uniform(0.3, 0.7) * sr), total - used)
        pieces.append(np.zeros(n_pause))
        used += n_pause
    x = np.concatenate(pieces)
    gain = rng.uniform(0.2, 0.6)
    x = gain * x + rng.normal(0, 2e-4, size=x.size)
    return np.clip(x, -1.0, 32767 / 32768)


def synth_corpus(n_subjects: int, seed: int, out_dir, recordings_per_subject: int = 4,
                 duration_s: float = 12.0, sample_rate_hz: int = 16000) -> Manifest:
    """Write a balanced labelled corpus of WAV files plus ``manifest.json``.

    Labels alternate 0/1 by subject index; sexes alternate in pairs so each
    class has both sexes.
    """
    if n_subjects < 8 or n_subjects % 2:
        raise ValidationError(f"n_subjects must be even and >= 8, got {n_subjects}")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    subjects = []
    for i in range(n_subjects):
        label = i % 2
        sex = "M" if (i // 2) % 2 == 0 else "F"
        rng = np.random.default_rng([seed, i])
        profile = draw_profile(label, rng)
        sid = f"S{i:03d}"
        recs = []
        for r in range(recordings_per_subject):
            rid = f"{sid}_R{r + 1:02d}"
            path = wav_dir / f"{rid}.wav"
            write_wav(path, synth_recording(profile, rng, duration_s, sample_rate_hz), sample_rate_hz)
            recs.append(Recording(rid, path))
        subjects.append(SubjectRecord(sid, label, sex, recs, age=int(rng.integers(18, 53))))
    manifest = Manifest(f"synthetic-{n_subjects}-seed{seed}", subjects)
    manifest.save(out_dir / "manifest.json")
    return manifest


def subject_profiles(n_subjects: int, seed: int) -> list[VoiceProfile]:
    """Regenerate the voice profiles ``synth_corpus`` draws (same seeds)."""
    return [draw_profile(i % 2, np.random.default_rng([seed, i])) for i in range(n_subjects)]
