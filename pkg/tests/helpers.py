"""Shared builders for the test suite."""

from pathlib import Path

import numpy as np

from vocalscreen.dataset import Manifest, Recording, SubjectRecord


def modma_manifest(n_recordings: int = 29) -> Manifest:
    """52 subjects: 23 depressed (16 M, 7 F) and 29 healthy (20 M, 9 F)."""
    subjects = []
    groups = [(1, "M", 16), (1, "F", 7), (0, "M", 20), (0, "F", 9)]
    i = 0
    for label, sex, n in groups:
        for _ in range(n):
            sid = f"P{i:02d}"
            recs = [Recording(f"{sid}_{r + 1:02d}", Path(f"{sid}/{r + 1:02d}.wav")) for r in range(n_recordings)]
            subjects.append(SubjectRecord(sid, label, sex, recs))
            i += 1
    return Manifest("modma-shaped", subjects)


def estimate_f0(x: np.ndarray, sr: int, lo_hz: float = 70.0, hi_hz: float = 300.0) -> float:
    """Autocorrelation pitch of the loudest 100 ms window."""
    win = int(0.1 * sr)
    energies = [np.sum(x[i:i + win] ** 2) for i in range(0, len(x) - win, win // 2)]
    start = int(np.argmax(energies)) * (win // 2)
    seg = x[start:start + win] - x[start:start + win].mean()
    ac = np.correlate(seg, seg, mode="full")[win - 1:]
    lags = np.arange(int(sr / hi_hz), int(sr / lo_hz) + 1)
    return sr / lags[np.argmax(ac[lags])]


def random_stable_r(rng, p):
    """Autocorrelation of a random all-pole process with poles inside 0.95."""
    from scipy.signal import lfilter

    n_pairs = p // 2 + 1
    radii = rng.uniform(0.2, 0.95, n_pairs)
    angles = rng.uniform(0, np.pi, n_pairs)
    poles = np.concatenate([radii * np.exp(1j * angles), radii * np.exp(-1j * angles)])
    a = np.real(np.poly(poles))
    x = lfilter([1.0], a, rng.standard_normal(4096))
    n = len(x)
    return np.array([np.dot(x[:n - k], x[k:]) for k in range(p + 1)]) / n


# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report(n: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[n] = (bool(passed), detail)
    print(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)
