"""Best-of-group selection accuracy and weight grid search.

For each group, the sample with the highest aggregated reward is selected
and checked against its correctness label; accuracy over instances is the
selection metric.  The grid search sweeps every weight triple on the
simplex at a fixed resolution and reports the accuracy-maximizing point,
preferring coherence-heavy weightings on ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import SampleGroup
from .dimensions import score_group
from .errors import ValidationError
from .reward import DrmWeights, drm_reward, normalize_within_group

__all__ = ["SelectionReport", "select_best", "selection_accuracy", "grid_search", "simplex_grid"]

WeightTriple = tuple[float, float, float]


@dataclass(frozen=True, slots=True)
class SelectionReport:
    """Selection accuracy for one or more weightings over a group set."""

    n_instances: int
    accuracy: float
    per_weighting: dict[WeightTriple, float]
    baseline_random: float

    def to_record(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "accuracy": self.accuracy,
            "baseline_random": self.baseline_random,
            "per_weighting": [
                {"w_conf": w[0], "w_rel": w[1], "w_coh": w[2], "accuracy": acc}
                for w, acc in self.per_weighting.items()
            ],
        }


def select_best(group: SampleGroup, weights: DrmWeights) -> int:
    """Index of the sample with the highest aggregated reward (ties to the
    lowest index)."""
    records = drm_reward(score_group(group), weights, instance_id=group.instance_id)
    return max(range(len(records)), key=lambda i: (records[i].drm_reward, -i))


def _prepared_groups(groups: Iterable[SampleGroup]) -> list[tuple[list[tuple[float, float, float]], list[bool]]]:
    """Normalize dimensions once per group; weights only enter via the dot
    product, so grid sweeps reuse this."""
    prepared = []
    for group in groups:
        labels = []
        for i, sample in enumerate(group.samples):
            if sample.correct is None:
                raise ValidationError(
                    f"instance {group.instance_id!r}: sample {i} has no correctness label"
                )
            labels.append(sample.correct)
        scores = score_group(group)
        conf = normalize_within_group([s.conf for s in scores])
        rel = normalize_within_group([s.rel for s in scores])
        coh = normalize_within_group([s.coh for s in scores])
        prepared.append((list(zip(conf, rel, coh)), labels))
    if not prepared:
        raise ValidationError("selection evaluation needs at least one group")
    return prepared


def _accuracy(prepared: Sequence[tuple[list[tuple[float, float, float]], list[bool]]], w: WeightTriple) -> float:
    hits = 0
    for dims, labels in prepared:
        rewards = [w[0] * d[0] + w[1] * d[1] + w[2] * d[2] for d in dims]
        best = max(range(len(rewards)), key=lambda i: (rewards[i], -i))
        hits += labels[best]
    return hits / len(prepared)


def _baseline(prepared: Sequence[tuple[list[tuple[float, float, float]], list[bool]]]) -> float:
    # Expected accuracy of a uniform draw per group, not a sampled one.
    return sum(sum(labels) / len(labels) for _, labels in prepared) / len(prepared)


def selection_accuracy(groups: Iterable[SampleGroup], weights: DrmWeights) -> SelectionReport:
    """Fraction of groups whose selected sample carries a True label."""
    prepared = _prepared_groups(groups)
    accuracy = _accuracy(prepared, weights.as_tuple())
    return SelectionReport(
        n_instances=len(prepared),
        accuracy=accuracy,
        per_weighting={weights.as_tuple(): accuracy},
        baseline_random=_baseline(prepared),
    )


def simplex_grid(step: float) -> list[WeightTriple]:
    """All nonnegative weight triples summing to 1 at the given resolution."""
    if not math.isfinite(step) or step <= 0.0 or step > 1.0:
        raise ValidationError(f"grid step must lie in (0, 1], got {step!r}")
    divisions = 1.0 / step
    k = round(divisions)
    if abs(divisions - k) > 1e-9:
        raise ValidationError(f"1/step must be an integer, got step {step!r}")
    return [(i / k, j / k, (k - i - j) / k) for i in range(k + 1) for j in range(k + 1 - i)]


def grid_search(
    groups: Iterable[SampleGroup],
    step: float = 0.1,
) -> tuple[DrmWeights, dict[WeightTriple, float]]:
    """Sweep the simplex grid and return the accuracy-maximizing weights.

    Ties go to the higher coherence weight, then the higher relevance
    weight, then the lexicographically largest triple.
    """
    prepared = _prepared_groups(groups)
    table = {w: _accuracy(prepared, w) for w in simplex_grid(step)}
    best = max(table, key=lambda w: (table[w], w[2], w[1], w))
    return DrmWeights(*best), table
