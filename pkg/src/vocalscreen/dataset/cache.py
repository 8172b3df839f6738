"""Binary feature cache.

Layout (little-endian)::

    "FTDS" | u8 version=1 | u8 kind | u16 reserved=0 | u32 F | u32 T | u32 count
    count x ( u32 id_len | id (UTF-8) | u8 label | F*T float32 row-major )

The id string is a compact JSON array ``[subject, recording, index, offset]``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadMagic, InvalidLabel, ShapeMismatch, TruncatedFile, ValidationError, VersionMismatch
from ..features import FeatureKind, FeatureMatrix
from ..io_utils import atomic_write_bytes

MAGIC = b"FTDS"
VERSION = 1
_HEADER = struct.Struct("<4sBBHIII")


@dataclass(frozen=True)
class SegmentRecord:
    subject_id: str
    recording_id: str
    segment_index: int
    start_offset_s: float
    label: int

    def key(self) -> str:
        return json.dumps([self.subject_id, self.recording_id, self.segment_index,
                           self.start_offset_s], separators=(",", ":"))

    @classmethod
    def from_key(cls, key: str, label: int) -> "SegmentRecord":
        sid, rid, idx, off = json.loads(key)
        return cls(sid, rid, int(idx), float(off), label)


def encode_cache(records, matrices) -> bytes:
    records = list(records)
    matrices = list(matrices)
    if len(records) != len(matrices):
        raise ShapeMismatch(f"{len(records)} records but {len(matrices)} matrices")
    if not matrices:
        raise ValidationError("cannot write an empty cache")
    kind = matrices[0].kind
    F, T = matrices[0].shape
    parts = [_HEADER.pack(MAGIC, VERSION, int(kind), 0, F, T, len(records))]
    for rec, m in zip(records, matrices):
        if m.kind is not kind or m.shape != (F, T):
            raise ShapeMismatch(f"matrix {m.kind.name} {m.shape} differs from {kind.name} {(F, T)}")
        if rec.label not in (0, 1):
            raise InvalidLabel(f"record label must be 0/1, got {rec.label}")
        key = rec.key().encode("utf-8")
        parts.append(struct.pack("<I", len(key)))
        parts.append(key)
        parts.append(struct.pack("<B", rec.label))
        parts.append(np.ascontiguousarray(m.data, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_cache(buf: bytes):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {bytes(buf[:4])!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedFile("file ends inside the header")
    _, version, kind, _reserved, F, T, count = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise VersionMismatch(f"cache version {version}, reader supports {VERSION}")
    try:
        kind = FeatureKind(kind)
    except ValueError as exc:
        raise ValidationError(f"unknown feature kind code {kind}") from exc
    payload = F * T * 4
    pos = _HEADER.size
    records, matrices = [], []
    for _ in range(count):
        if pos + 4 > len(buf):
            raise TruncatedFile(f"record {len(records)} header missing")
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + n + 1 + payload > len(buf):
            raise TruncatedFile(f"record {len(records)} needs {n + 1 + payload} bytes, "
                                f"{len(buf) - pos} remain")
        key = bytes(buf[pos:pos + n]).decode("utf-8")
        pos += n
        label = buf[pos]
        pos += 1
        data = np.frombuffer(buf, dtype="<f4", count=F * T, offset=pos).reshape(F, T).copy()
        pos += payload
        records.append(SegmentRecord.from_key(key, int(label)))
        matrices.append(FeatureMatrix(kind, data))
    if pos != len(buf):
        raise ValidationError(f"{len(buf) - pos} trailing bytes after {count} records")
    return records, matrices


def write_cache(records, matrices, path) -> Path:
    return atomic_write_bytes(path, encode_cache(records, matrices))


def read_cache(path):
    """Returns ``(records, matrices)``; matrices hold float32 data."""
    return decode_cache(Path(path).read_bytes())
