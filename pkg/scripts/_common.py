"""Corpus and feature preparation shared by the scripts."""

import logging
import time
from pathlib import Path

from vocalscreen.dataset import load_manifest, read_cache, synth_corpus, write_cache
from vocalscreen.features import FeatureKind
from vocalscreen.pipeline import extract_features, segment_manifest
from vocalscreen.preprocess import PreprocessConfig

log = logging.getLogger("scripts")


def add_data_args(p):
    p.add_argument("--workdir", type=Path, default=Path("runs/synthetic"))
    p.add_argument("--subjects", type=int, default=40)
    p.add_argument("--corpus-seed", type=int, default=7)
    p.add_argument("--split-seed", type=int, default=7)
    p.add_argument("--jobs", type=int, default=1)


def prepare(args, kinds=("mfcc", "lpc", "fusion")):
    """Synthesize (once) and extract features (once); returns manifest and {kind: (records, mats)}."""
    work = args.workdir
    manifest_path = work / "manifest.json"
    if manifest_path.exists():
        manifest = load_manifest(manifest_path)
    else:
        log.info("synthesizing %d subjects", args.subjects)
        manifest = synth_corpus(args.subjects, args.corpus_seed, work)
    caches = {k: work / f"{k}.ftds" for k in kinds}
    if not all(p.exists() for p in caches.values()):
        start = time.perf_counter()
        cfg = PreprocessConfig()
        batch = segment_manifest(manifest, cfg, args.jobs)
        feats = extract_features(batch, [FeatureKind.parse(k) for k in kinds], cfg, args.jobs)
        for kind, mats in feats.items():
            write_cache(batch.records, mats, caches[kind.name.lower()])
        log.info("features for %d segments in %.1fs", len(batch.records), time.perf_counter() - start)
    return manifest, {k: read_cache(p) for k, p in caches.items()}
