"""Group-relative advantage estimation and training-objective terms.

Advantages are z-scores of per-sample rewards within a group (population
standard deviation, zero everywhere when the group is near-constant).  The
verifier path z-scores binary correctness rewards; the dimension path
z-scores each raw dimension separately and takes the weighted sum; the
combined path adds the two.  All advantages here are per sample — the
consuming trainer broadcasts them to every token of that sample.

Also provided: the clipped policy-ratio surrogate, a nonnegative unbiased
per-token KL estimate against a reference policy, and the preference loss
with an optional weighted likelihood term on the chosen output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dimensions import DimensionScores
from .errors import ValidationError
from .reward import DrmWeights

__all__ = [
    "STD_GUARD",
    "AdvantageMode",
    "AdvantageRecord",
    "SurrogateInputs",
    "verifier_reward",
    "group_advantage",
    "drm_advantage",
    "combined_advantage",
    "surrogate_term",
    "kl_estimate",
    "dpo_sft_loss",
]

# Groups whose reward std falls below this are treated as constant (the
# sparse-signal regime where z-scoring would blow up); advantages become 0.
STD_GUARD = 1e-8


class AdvantageMode(enum.Enum):
    RLVR = "rlvr"
    DRM = "drm"
    COMBINED = "combined"

    @classmethod
    def parse(cls, text: str) -> "AdvantageMode":
        try:
            return cls(text.lower())
        except ValueError:
            valid = ", ".join(mode.value for mode in cls)
            raise ValidationError(f"unknown advantage mode {text!r} (expected one of: {valid})") from None


@dataclass(frozen=True, slots=True)
class AdvantageRecord:
    """Per-sample advantage under one supervision mode."""

    instance_id: str
    index: int
    mode: AdvantageMode
    rlvr_adv: float | None
    drm_adv: float | None
    combined_adv: float

    def to_record(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "index": self.index,
            "mode": self.mode.value,
            "rlvr_adv": self.rlvr_adv,
            "drm_adv": self.drm_adv,
            "combined_adv": self.combined_adv,
        }


@dataclass(frozen=True, slots=True)
class SurrogateInputs:
    """One token's inputs to the clipped surrogate objective."""

    ratio: float
    advantage: float
    clip_eps: float
    kl: float = 0.0
    beta: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.ratio) or self.ratio <= 0.0:
            raise ValidationError(f"probability ratio must be positive, got {self.ratio!r}")
        if not 0.0 < self.clip_eps < 1.0:
            raise ValidationError(f"clip_eps must lie in (0, 1), got {self.clip_eps!r}")
        if not math.isfinite(self.advantage):
            raise ValidationError(f"advantage must be finite, got {self.advantage!r}")
        if not math.isfinite(self.kl) or self.kl < 0.0:
            raise ValidationError(f"kl contribution must be >= 0, got {self.kl!r}")
        if not math.isfinite(self.beta) or self.beta < 0.0:
            raise ValidationError(f"beta must be >= 0, got {self.beta!r}")


def verifier_reward(correct: bool) -> float:
    """Binary answer reward: 1.0 when the verifier accepted the answer."""
    if correct is None:
        raise ValidationError("verifier_reward: correctness label is missing")
    return 1.0 if correct else 0.0


def group_advantage(rewards: Sequence[float]) -> list[float]:
    """Z-score rewards within the group: (r - mean) / population std.

    A near-constant group (std below STD_GUARD) gets all-zero advantages
    instead of amplified noise.
    """
    arr = np.asarray(rewards, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("group_advantage: empty group")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("group_advantage: rewards contain non-finite values")
    std = float(arr.std())
    if std < STD_GUARD:
        return [0.0] * arr.size
    return [float(v) for v in (arr - arr.mean()) / std]


def drm_advantage(group_scores: Sequence[DimensionScores], weights: DrmWeights) -> list[float]:
    """Weighted sum of per-dimension z-scores across the group.

    Each raw dimension is z-scored independently (same constant-group
    guard), then combined with the simplex weights.  Raw scores are used
    directly; the min-max scaling of the reward module plays no role here.
    """
    if not group_scores:
        raise ValidationError("drm_advantage: empty group")
    conf = group_advantage([s.conf for s in group_scores])
    rel = group_advantage([s.rel for s in group_scores])
    coh = group_advantage([s.coh for s in group_scores])
    return [
        weights.w_conf * conf[i] + weights.w_rel * rel[i] + weights.w_coh * coh[i]
        for i in range(len(group_scores))
    ]


def combined_advantage(
    mode: AdvantageMode,
    labels: Sequence[bool | None] | None,
    group_scores: Sequence[DimensionScores] | None,
    weights: DrmWeights,
    instance_id: str = "",
) -> list[AdvantageRecord]:
    """Per-sample advantages under the chosen supervision mode.

    rlvr needs correctness labels, drm needs dimension scores, combined
    needs both and equals their elementwise sum.
    """
    rlvr: list[float] | None = None
    drm: list[float] | None = None

    if mode in (AdvantageMode.RLVR, AdvantageMode.COMBINED):
        if labels is None:
            raise ValidationError(f"mode {mode.value} requires correctness labels")
        checked = []
        for i, label in enumerate(labels):
            if label is None:
                raise ValidationError(f"instance {instance_id!r}: sample {i} has no correctness label")
            checked.append(label)
        rlvr = group_advantage([verifier_reward(label) for label in checked])

    if mode in (AdvantageMode.DRM, AdvantageMode.COMBINED):
        if group_scores is None:
            raise ValidationError(f"mode {mode.value} requires dimension scores")
        drm = drm_advantage(group_scores, weights)

    if rlvr is not None and drm is not None and len(rlvr) != len(drm):
        raise ValidationError(
            f"instance {instance_id!r}: {len(rlvr)} labels but {len(drm)} scored samples"
        )
    size = len(rlvr) if rlvr is not None else len(drm)  # type: ignore[arg-type]

    records = []
    for i in range(size):
        if mode is AdvantageMode.RLVR:
            combined = rlvr[i]  # type: ignore[index]
        elif mode is AdvantageMode.DRM:
            combined = drm[i]  # type: ignore[index]
        else:
            combined = rlvr[i] + drm[i]  # type: ignore[index]
        records.append(
            AdvantageRecord(
                instance_id=instance_id,
                index=i,
                mode=mode,
                rlvr_adv=rlvr[i] if rlvr is not None else None,
                drm_adv=drm[i] if drm is not None else None,
                combined_adv=combined,
            )
        )
    return records


def surrogate_term(inputs: SurrogateInputs) -> float:
    """Clipped-ratio surrogate for one token:
    min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv) - beta * kl."""
    clipped = min(max(inputs.ratio, 1.0 - inputs.clip_eps), 1.0 + inputs.clip_eps)
    return min(inputs.ratio * inputs.advantage, clipped * inputs.advantage) - inputs.beta * inputs.kl


def kl_estimate(logp_policy: float, logp_ref: float) -> float:
    """Unbiased nonnegative per-token KL estimate of policy vs reference:
    exp(d) - d - 1 with d = logp_ref - logp_policy."""
    if not math.isfinite(logp_policy) or not math.isfinite(logp_ref):
        raise ValidationError("kl_estimate: log-probabilities must be finite")
    delta = logp_ref - logp_policy
    return math.expm1(delta) - delta


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow for large |x|.
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def dpo_sft_loss(
    logp_pos_policy: float,
    logp_pos_ref: float,
    logp_neg_policy: float,
    logp_neg_ref: float,
    beta: float,
    lambda_sft: float,
) -> float:
    """Preference loss plus weighted negative log-likelihood of the chosen
    output:

        -log sigmoid(beta * margin) + lambda_sft * (-logp_pos_policy),

    where margin = (logp_pos_policy - logp_pos_ref)
                 - (logp_neg_policy - logp_neg_ref).
    """
    values = (logp_pos_policy, logp_pos_ref, logp_neg_policy, logp_neg_ref)
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("dpo_sft_loss: log-probabilities must be finite")
    if not math.isfinite(beta) or beta <= 0.0:
        raise ValidationError(f"beta must be positive, got {beta!r}")
    if not math.isfinite(lambda_sft) or lambda_sft < 0.0:
        raise ValidationError(f"lambda_sft must be >= 0, got {lambda_sft!r}")
    margin = (logp_pos_policy - logp_pos_ref) - (logp_neg_policy - logp_neg_ref)
    return _softplus(-beta * margin) + lambda_sft * (-logp_pos_policy)
