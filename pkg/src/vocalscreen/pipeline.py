"""Manifest -> segments -> pooled feature matrices."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset.cache import SegmentRecord
from .dataset.manifest import Manifest
from .errors import EmptyVoiced
from .features import FeatureExtractor, FeatureKind, FeatureMatrix
from .preprocess import PreprocessConfig, frame_and_window, load_audio, preprocess_clip

log = logging.getLogger(__name__)


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("VOCALSCREEN_JOBS", "1")))
    except ValueError:
        return 1


@dataclass
class SegmentBatch:
    records: list[SegmentRecord]
    samples: np.ndarray  # (n, segment_samples)


def _recording_segments(subject, recording, cfg: PreprocessConfig):
    clip = load_audio(recording.path, subject.id, recording.recording_id)
    try:
        segs = preprocess_clip(clip, cfg)
    except EmptyVoiced:
        log.warning("skipping %s: no voiced audio", recording.recording_id)
        return []
    return [
        (SegmentRecord(subject.id, recording.recording_id, s.index, s.start_offset_s, subject.label),
         s.samples)
        for s in segs
    ]


def segment_manifest(manifest: Manifest, cfg: PreprocessConfig, jobs: int = 1) -> SegmentBatch:
    """Preprocess every recording; results keep manifest order regardless of ``jobs``."""
    tasks = [(s, r) for s in manifest.subjects for r in s.recordings]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda t: _recording_segments(t[0], t[1], cfg), tasks))
    else:
        results = [_recording_segments(s, r, cfg) for s, r in tasks]
    records, samples = [], []
    for chunk in results:
        for rec, x in chunk:
            records.append(rec)
            samples.append(x)
    arr = np.stack(samples) if samples else np.zeros((0, cfg.segment_samples))
    return SegmentBatch(records, arr)


def extract_features(batch: SegmentBatch, kinds, cfg: PreprocessConfig,
                     jobs: int = 1) -> dict[FeatureKind, list[FeatureMatrix]]:
    """Pooled matrices for each requested kind, one per segment, in input order.

    MFCC and LPC are computed once per segment and reused for fusion.
    """
    kinds = [FeatureKind.parse(k) for k in kinds]
    extractor = FeatureExtractor(cfg.target_rate_hz)

    def one(x):
        from .features import fuse, lpc_features, mfcc, pool_time
        from .preprocess import Segment

        frames = frame_and_window(Segment(x, 0.0), cfg)
        need_m = FeatureKind.MFCC in kinds or FeatureKind.FUSION in kinds
        need_l = FeatureKind.LPC in kinds or FeatureKind.FUSION in kinds
        m = pool_time(mfcc(frames, extractor.bank)) if need_m else None
        l = pool_time(lpc_features(frames, extractor.n_coeffs)) if need_l else None
        out = {}
        for k in kinds:
            out[k] = m if k is FeatureKind.MFCC else l if k is FeatureKind.LPC else fuse(m, l)
        return out

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            per_seg = list(pool.map(one, list(batch.samples)))
    else:
        per_seg = [one(x) for x in batch.samples]
    return {k: [d[k] for d in per_seg] for k in kinds}
