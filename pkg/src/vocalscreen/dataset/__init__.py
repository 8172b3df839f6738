"""Manifests, splits, synthetic data, feature caches and evaluation helpers."""

from .cache import SegmentRecord, decode_cache, encode_cache, read_cache, write_cache
from .evaluation import (
    AnnotationDoc,
    Span,
    aggregate_subject,
    annotate,
    annotation_svg,
    export_vectors,
    metrics,
    subject_level,
)
from .manifest import Manifest, Recording, SubjectRecord, load_manifest, manifest_from_dict
from .split import PaperModma, SplitPlan, Stratified, carve_validation, parse_policy, split_subjects
from .synth import synth_corpus

__all__ = [
    "AnnotationDoc", "Manifest", "PaperModma", "Recording", "SegmentRecord", "Span",
    "SplitPlan", "Stratified", "SubjectRecord", "aggregate_subject", "annotate",
    "annotation_svg", "carve_validation", "decode_cache", "encode_cache", "export_vectors",
    "load_manifest", "manifest_from_dict", "metrics", "parse_policy", "read_cache",
    "split_subjects", "subject_level", "synth_corpus", "write_cache",
]
