"""Raw per-sample dimension scores: confidence, relevance, coherence.

Confidence comes from the sample's own token log-probabilities, relevance
from the three judge metrics combined within the group, coherence straight
from the outcome judge.  All values here are pre-normalization; group-level
scaling happens in the reward module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import Sample, SampleGroup
from .errors import ValidationError

__all__ = [
    "DimensionScores",
    "confidence_score",
    "relevance_scores",
    "coherence_score",
    "score_group",
]

# Spans below this are treated as constant; matches the group-normalization
# guard in the reward module so the two paths agree on degenerate groups.
_SPAN_GUARD = 1e-12


@dataclass(frozen=True, slots=True)
class DimensionScores:
    """Raw (conf, rel, coh) triple for one sample."""

    conf: float
    rel: float
    coh: float

    def to_record(self) -> dict[str, float]:
        return {"conf": self.conf, "rel": self.rel, "coh": self.coh}


def _check_finite(name: str, values: Sequence[float]) -> None:
    for i, value in enumerate(values):
        if not math.isfinite(value):
            raise ValidationError(f"{name}[{i}] is not finite: {value!r}")


def confidence_score(reasoning_logprobs: Sequence[float], answer_logprobs: Sequence[float]) -> float:
    """Mean token log-probability of the reasoning plus summed log-probability
    of the answer.

    Averaging over reasoning tokens avoids penalizing long exploratory
    reasoning; summing over answer tokens rewards short, decisive answers.
    """
    if len(reasoning_logprobs) == 0:
        raise ValidationError("confidence_score: reasoning log-probabilities are empty")
    if len(answer_logprobs) == 0:
        raise ValidationError("confidence_score: answer log-probabilities are empty")
    _check_finite("reasoning_logprobs", reasoning_logprobs)
    _check_finite("answer_logprobs", answer_logprobs)
    return math.fsum(reasoning_logprobs) / len(reasoning_logprobs) + math.fsum(answer_logprobs)


def _unit_interval(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi - lo < _SPAN_GUARD:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def relevance_scores(group: SampleGroup) -> list[float]:
    """Combine the three judge metrics into one relevance score per sample.

    Each metric (question entailment, context relevance, answer entailment)
    is min-max scaled to [0, 1] within the group, a constant metric mapping
    to 0.5 everywhere so it prefers no sample; the relevance score is the
    unweighted mean of the three scaled metrics.  Singleton groups therefore
    score 0.5.
    """
    for i, sample in enumerate(group.samples):
        if sample.judge is None:
            raise ValidationError(f"instance {group.instance_id!r}: sample {i} has no judge scores")
    metrics = (
        [s.judge.q_entail for s in group.samples],  # type: ignore[union-attr]
        [s.judge.d_relevance for s in group.samples],  # type: ignore[union-attr]
        [s.judge.a_entail for s in group.samples],  # type: ignore[union-attr]
    )
    scaled = [_unit_interval(metric) for metric in metrics]
    return [(scaled[0][i] + scaled[1][i] + scaled[2][i]) / 3.0 for i in range(len(group))]


def coherence_score(sample: Sample) -> float:
    """Pass the external outcome-judge score through unchanged."""
    if sample.judge is None:
        raise ValidationError("coherence_score: sample has no judge scores")
    return sample.judge.coherence


def score_group(group: SampleGroup) -> list[DimensionScores]:
    """Score every sample of a group along all three dimensions."""
    rel = relevance_scores(group)
    scores = []
    for i, sample in enumerate(group.samples):
        try:
            conf = confidence_score(sample.quadruple.reasoning_logprobs, sample.quadruple.answer_logprobs)
        except ValidationError as exc:
            raise ValidationError(f"instance {group.instance_id!r}: sample {i}: {exc}") from exc
        scores.append(DimensionScores(conf=conf, rel=rel[i], coh=coherence_score(sample)))
    return scores
