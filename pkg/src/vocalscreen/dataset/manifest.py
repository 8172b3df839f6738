from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DuplicateSubject, InvalidLabel, MissingRecording, ValidationError
from ..io_utils import atomic_write_json


@dataclass
class Recording:
    recording_id: str
    path: Path


@dataclass
class SubjectRecord:
    id: str
    label: int
    sex: str
    recordings: list[Recording]
    age: int | None = None

    def __post_init__(self):
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise InvalidLabel(f"subject {self.id!r}: label must be 0 or 1, got {self.label!r}")
        if self.sex not in ("M", "F"):
            raise ValidationError(f"subject {self.id!r}: sex must be 'M' or 'F', got {self.sex!r}")
        if not self.recordings:
            raise MissingRecording(f"subject {self.id!r} has no recordings")


@dataclass
class Manifest:
    dataset_name: str
    subjects: list[SubjectRecord] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for s in self.subjects:
            if s.id in seen:
                raise DuplicateSubject(f"subject id {s.id!r} appears more than once")
            seen.add(s.id)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    def subject(self, subject_id: str) -> SubjectRecord:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise KeyError(subject_id)

    def labels(self) -> dict[str, int]:
        return {s.id: s.label for s in self.subjects}

    @property
    def n_recordings(self) -> int:
        return sum(len(s.recordings) for s in self.subjects)

    def to_dict(self, relative_to=None) -> dict:
        def fmt(p: Path) -> str:
            if relative_to is not None:
                try:
                    return str(Path(p).relative_to(relative_to))
                except ValueError:
                    pass
            return str(p)

        subjects = []
        for s in self.subjects:
            d = {"id": s.id, "label": s.label, "sex": s.sex,
                 "recordings": [{"recording_id": r.recording_id, "path": fmt(r.path)}
                                for r in s.recordings]}
            if s.age is not None:
                d["age"] = s.age
            subjects.append(d)
        return {"dataset_name": self.dataset_name, "subjects": subjects}

    def save(self, path) -> Path:
        path = Path(path)
        return atomic_write_json(path, self.to_dict(relative_to=path.parent.resolve()))


def manifest_from_dict(doc: dict, base_dir=None, check_files: bool = False) -> Manifest:
    if not isinstance(doc, dict) or "subjects" not in doc:
        raise ValidationError("manifest must be an object with a 'subjects' list")
    base = Path(base_dir) if base_dir is not None else None
    subjects = []
    for entry in doc["subjects"]:
        try:
            sid = str(entry["id"])
            label = entry["label"]
            sex = entry.get("sex", "M")
            recs_doc = entry.get("recordings") or []
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed subject entry: {entry!r}") from exc
        recordings = []
        for r in recs_doc:
            if "path" not in r or "recording_id" not in r:
                raise MissingRecording(f"subject {sid!r}: recording entry lacks id or path")
            p = Path(r["path"])
            if base is not None and not p.is_absolute():
                p = base / p
            if check_files and not p.exists():
                raise MissingRecording(f"subject {sid!r}: {p} does not exist")
            recordings.append(Recording(str(r["recording_id"]), p))
        subjects.append(SubjectRecord(sid, label, sex, recordings, entry.get("age")))
    return Manifest(str(doc.get("dataset_name", "")), subjects)


def load_manifest(path, check_files: bool = False) -> Manifest:
    """Parse and validate a manifest JSON file.

    Relative recording paths are resolved against the manifest's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return manifest_from_dict(doc, base_dir=path.parent, check_files=check_files)
