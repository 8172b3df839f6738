"""Subject-disjoint train/test partitions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InfeasibleComposition, ValidationError
from ..io_utils import atomic_write_json
from .manifest import Manifest


@dataclass(frozen=True)
class PaperModma:
    """Fixed test composition: per class, this many male and female subjects."""
    male_per_class: int = 3
    female_per_class: int = 2


@dataclass(frozen=True)
class Stratified:
    test_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValidationError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


@dataclass
class SplitPlan:
    train_subject_ids: list[str]
    test_subject_ids: list[str]
    seed: int
    policy: str = ""
    val_subject_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        overlap = (set(self.train_subject_ids) & set(self.test_subject_ids)) | (
            set(self.val_subject_ids) & (set(self.train_subject_ids) | set(self.test_subject_ids)))
        if overlap:
            raise ValidationError(f"split sets overlap on {sorted(overlap)}")

    def to_dict(self) -> dict:
        return {"train_subject_ids": list(self.train_subject_ids),
                "val_subject_ids": list(self.val_subject_ids),
                "test_subject_ids": list(self.test_subject_ids),
                "seed": self.seed, "policy": self.policy}

    def save(self, path) -> Path:
        return atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "SplitPlan":
        d = json.loads(Path(path).read_text())
        return cls(d["train_subject_ids"], d["test_subject_ids"], d["seed"],
                   d.get("policy", ""), d.get("val_subject_ids", []))


def _largest_remainder(sizes: list[int], total: int) -> list[int]:
    n = sum(sizes)
    exact = [total * s / n for s in sizes]
    quota = [int(np.floor(e)) for e in exact]
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - quota[i]), i))
    for i in order[: total - sum(quota)]:
        quota[i] += 1
    return quota


def _stratified_pick(groups: dict, fraction: float, rng) -> list[str]:
    """Pick ``fraction`` of each label group, spreading picks across sexes."""
    picked = []
    for label in sorted(groups):
        by_sex = groups[label]
        n_label = sum(len(v) for v in by_sex.values())
        if n_label < 2:
            raise InfeasibleComposition(f"label {label} has {n_label} subject(s); need >= 2")
        n_test = min(max(1, int(round(fraction * n_label))), n_label - 1)
        sexes = sorted(by_sex)
        quotas = _largest_remainder([len(by_sex[s]) for s in sexes], n_test)
        for sex, q in zip(sexes, quotas):
            ids = sorted(by_sex[sex])
            picked.extend(rng.choice(ids, size=q, replace=False).tolist())
    return picked


def _groups(manifest: Manifest, ids=None) -> dict:
    groups: dict[int, dict[str, list[str]]] = {}
    allowed = None if ids is None else set(ids)
    for s in manifest.subjects:
        if allowed is not None and s.id not in allowed:
            continue
        groups.setdefault(s.label, {}).setdefault(s.sex, []).append(s.id)
    return groups


def split_subjects(manifest: Manifest, policy=None, seed: int = 0) -> SplitPlan:
    """Deterministic subject-disjoint split for the given seed."""
    policy = Stratified() if policy is None else policy
    rng = np.random.default_rng(seed)
    groups = _groups(manifest)
    if isinstance(policy, PaperModma):
        test = []
        for label in (0, 1):
            for sex, need in (("M", policy.male_per_class), ("F", policy.female_per_class)):
                pool = sorted(groups.get(label, {}).get(sex, []))
                if len(pool) < need:
                    raise InfeasibleComposition(
                        f"need {need} {sex} subjects with label {label}, manifest has {len(pool)}")
                test.extend(rng.choice(pool, size=need, replace=False).tolist())
        name = "paper-modma"
    elif isinstance(policy, Stratified):
        if set(groups) != {0, 1}:
            raise InfeasibleComposition("stratified split needs both labels present")
        test = _stratified_pick(groups, policy.test_fraction, rng)
        name = f"stratified:{policy.test_fraction}"
    else:
        raise ValidationError(f"unknown split policy {policy!r}")
    test_set = set(test)
    train = [i for i in manifest.ids if i not in test_set]
    test = [i for i in manifest.ids if i in test_set]
    return SplitPlan(train, test, seed, name)


def carve_validation(plan: SplitPlan, manifest: Manifest, fraction: float = 0.2,
                     seed: int | None = None) -> SplitPlan:
    """Move a label-stratified ``fraction`` of training subjects into validation."""
    rng = np.random.default_rng(plan.seed if seed is None else seed)
    val = set(_stratified_pick(_groups(manifest, plan.train_subject_ids), fraction, rng))
    train = [i for i in plan.train_subject_ids if i not in val]
    val_ids = [i for i in plan.train_subject_ids if i in val]
    return SplitPlan(train, plan.test_subject_ids, plan.seed, plan.policy, val_ids)


def parse_policy(name: str, test_fraction: float = 0.2):
    key = name.lower().replace("_", "-")
    if key in ("paper-modma", "papermodma", "modma"):
        return PaperModma()
    if key == "stratified":
        return Stratified(test_fraction)
    raise ValidationError(f"unknown split policy {name!r}")
