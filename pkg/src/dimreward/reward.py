"""Within-group normalization and weighted aggregation into a scalar reward.

Each dimension is min-max scaled across the group, then the scaled triples
are combined by a weight point on the 2-simplex.  Min-max keeps rewards in
[0, 1] and is invariant under positive affine rescaling of any raw
dimension, so judge score scales never matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .dimensions import DimensionScores
from .errors import ValidationError

__all__ = [
    "DrmWeights",
    "RewardRecord",
    "DEFAULT_WEIGHTS",
    "normalize_within_group",
    "drm_reward",
]

WEIGHT_SUM_TOLERANCE = 1e-9
SPAN_GUARD = 1e-12


@dataclass(frozen=True, slots=True)
class DrmWeights:
    """Simplex weights over (confidence, relevance, coherence)."""

    w_conf: float
    w_rel: float
    w_coh: float

    def __post_init__(self) -> None:
        for name in ("w_conf", "w_rel", "w_coh"):
            value = getattr(self, name)
            if not math.isfinite(value) or not 0.0 <= value <= 1.0:
                raise ValidationError(f"weight {name} must lie in [0, 1], got {value!r}")
        total = self.w_conf + self.w_rel + self.w_coh
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValidationError(f"weights must sum to 1 (got {total!r}); renormalize explicitly if intended")

    @classmethod
    def parse(cls, text: str) -> "DrmWeights":
        """Parse 'a,b,c' as (w_conf, w_rel, w_coh)."""
        parts = text.split(",")
        if len(parts) != 3:
            raise ValidationError(f"expected three comma-separated weights, got {text!r}")
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ValidationError(f"weights must be numbers: {text!r}") from exc
        return cls(*values)

    @classmethod
    def renormalized(cls, w_conf: float, w_rel: float, w_coh: float) -> "DrmWeights":
        """Scale an arbitrary nonnegative triple onto the simplex.

        Renormalization never happens silently; call this on purpose.
        """
        total = w_conf + w_rel + w_coh
        if not math.isfinite(total) or total <= 0.0:
            raise ValidationError(f"cannot renormalize weights with sum {total!r}")
        return cls(w_conf / total, w_rel / total, w_coh / total)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_conf, self.w_rel, self.w_coh)

    def to_record(self) -> dict[str, float]:
        return {"w_conf": self.w_conf, "w_rel": self.w_rel, "w_coh": self.w_coh}


# Validation-set grid-search optimum; coherence-heavy.
DEFAULT_WEIGHTS = DrmWeights(w_conf=0.1, w_rel=0.2, w_coh=0.7)


@dataclass(frozen=True, slots=True)
class RewardRecord:
    """Per-sample scoring result: raw dims, group-scaled dims, scalar reward."""

    instance_id: str
    index: int
    dims_raw: DimensionScores
    dims_norm: DimensionScores
    drm_reward: float

    def to_record(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "index": self.index,
            "dims_raw": self.dims_raw.to_record(),
            "dims_norm": self.dims_norm.to_record(),
            "drm_reward": self.drm_reward,
        }


def normalize_within_group(values: Sequence[float]) -> list[float]:
    """Min-max scale a group's values to [0, 1]; a (near-)constant group maps
    to 0.5 everywhere so no sample is preferred."""
    if len(values) == 0:
        raise ValidationError("normalize_within_group: empty group")
    for i, value in enumerate(values):
        if not math.isfinite(value):
            raise ValidationError(f"normalize_within_group: values[{i}] is not finite: {value!r}")
    lo, hi = min(values), max(values)
    if hi - lo < SPAN_GUARD:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def drm_reward(
    group_scores: Sequence[DimensionScores],
    weights: DrmWeights,
    instance_id: str = "",
) -> list[RewardRecord]:
    """Aggregate a group's dimension scores into one reward per sample.

    Each dimension is normalized across the group independently, then
    combined as w_conf*conf + w_rel*rel + w_coh*coh.  Rewards land in
    [0, 1]; an all-constant group scores 0.5 everywhere.
    """
    if not group_scores:
        raise ValidationError("drm_reward: empty group")
    conf = normalize_within_group([s.conf for s in group_scores])
    rel = normalize_within_group([s.rel for s in group_scores])
    coh = normalize_within_group([s.coh for s in group_scores])
    records = []
    for i, raw in enumerate(group_scores):
        norm = DimensionScores(conf=conf[i], rel=rel[i], coh=coh[i])
        reward = weights.w_conf * norm.conf + weights.w_rel * norm.rel + weights.w_coh * norm.coh
        records.append(
            RewardRecord(instance_id=instance_id, index=i, dims_raw=raw, dims_norm=norm, drm_reward=reward)
        )
    return records
