"""Subject-level train/validation split stratified by AHI severity and gender."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

AHI_GROUPS = ("Normal", "Mild", "Moderate", "Severe")


def ahi_group(ahi):
    """Normal <= 5 < Mild <= 15 < Moderate <= 30 < Severe."""
    if ahi <= 5.0:
        return "Normal"
    if ahi <= 15.0:
        return "Mild"
    if ahi <= 30.0:
        return "Moderate"
    return "Severe"


def _n_train(n, fraction):
    return int(math.floor(fraction * n + 0.5))


@dataclass(frozen=True)
class SplitAssignment:
    assignment: dict
    seed: int
    train_fraction: float
    strata: dict = field(default_factory=dict)

    @property
    def train(self):
        return sorted(k for k, v in self.assignment.items() if v == "train")

    @property
    def validation(self):
        return sorted(k for k, v in self.assignment.items() if v == "validation")

    def report(self):
        """Per stratum: (size, n_train, n_validation)."""
        out = {}
        for key, members in self.strata.items():
            nt = sum(self.assignment[m] == "train" for m in members)
            out[key] = (len(members), nt, len(members) - nt)
        return out

    def to_dict(self):
        return {"seed": self.seed, "train_fraction": self.train_fraction,
                "assignment": dict(sorted(self.assignment.items())),
                "strata": {k: sorted(v) for k, v in sorted(self.strata.items())}}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["assignment"]), int(d["seed"]), float(d["train_fraction"]),
                   {k: list(v) for k, v in d.get("strata", {}).items()})


def stratified_split(subjects, train_fraction=0.75, seed=0) -> SplitAssignment:
    """Seeded per-stratum shuffle; ``round(train_fraction * n)`` go to train.

    Strata with a single subject are pooled into one fallback bucket that is
    split by the same rule.
    """
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    ids = [s.subject_id for s in subjects]
    if len(set(ids)) != len(ids):
        raise ValueError("subject_id values must be unique")
    buckets = {}
    for s in subjects:
        buckets.setdefault(f"{ahi_group(s.ahi)}|{str(s.gender).upper()}", []).append(s.subject_id)
    strata = {}
    fallback = []
    for key in sorted(buckets):
        members = sorted(buckets[key])
        if len(members) < 2:
            fallback += members
        else:
            strata[key] = members
    if fallback:
        strata["fallback"] = sorted(fallback)
    rng = np.random.default_rng(seed)
    assignment = {}
    for key in sorted(strata):
        members = strata[key]
        perm = rng.permutation(len(members))
        k = _n_train(len(members), train_fraction)
        for rank, idx in enumerate(perm):
            assignment[members[idx]] = "train" if rank < k else "validation"
    return SplitAssignment(assignment, seed, train_fraction, strata)
