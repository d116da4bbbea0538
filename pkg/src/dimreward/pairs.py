"""Preference-pair construction: candidate pools, selection, DPO emission.

A training-set construction is a SUPERVISION method applied at a SUBSET
rule (written e.g. ``DRM@T+F``): the rule carves the positive and negative
candidate pools out of a group by correctness label, the method picks one
(positive, negative) pair from the pools — reward argmax/argmin for
``drm``, a seeded uniform draw for ``rlvr``.  Given (rule, method, seed,
weights) the resulting dataset is fully determined.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import IO, Any, Iterable, Mapping, Sequence

import numpy as np

from .core import Quadruple, SampleGroup, write_records
from .errors import SchemaError, ValidationError

__all__ = [
    "SubsetRule",
    "SupervisionMethod",
    "PreferencePair",
    "build_subsets",
    "select_pair",
    "select_pairs",
    "emit_dpo_dataset",
    "pair_to_record",
    "prompt_text",
    "completion_text",
    "construction_name",
]


class SubsetRule(enum.Enum):
    """How correctness labels carve the positive/negative candidate pools."""

    ANY = "any"
    T_T = "t+t"
    T_F = "t+f"
    F_F = "f+f"

    @classmethod
    def parse(cls, text: str) -> "SubsetRule":
        try:
            return cls(text.lower())
        except ValueError:
            valid = ", ".join(rule.value for rule in cls)
            raise ValidationError(f"unknown subset rule {text!r} (expected one of: {valid})") from None

    @property
    def display(self) -> str:
        return "any" if self is SubsetRule.ANY else self.value.upper()


@dataclass(frozen=True, slots=True)
class SupervisionMethod:
    """Pair-selection method; ``rlvr`` draws randomly and needs a seed."""

    kind: str
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("drm", "rlvr"):
            raise ValidationError(f"unknown supervision method {self.kind!r} (expected 'drm' or 'rlvr')")
        if self.kind == "rlvr" and self.seed is None:
            raise ValidationError("rlvr supervision requires a seed")
        if self.kind == "drm" and self.seed is not None:
            raise ValidationError("drm supervision is deterministic and takes no seed")

    @classmethod
    def drm(cls) -> "SupervisionMethod":
        return cls(kind="drm")

    @classmethod
    def rlvr(cls, seed: int) -> "SupervisionMethod":
        return cls(kind="rlvr", seed=seed)


@dataclass(frozen=True, slots=True)
class PreferencePair:
    """One (positive, negative) sample pair selected from a group."""

    instance_id: str
    pos_index: int
    neg_index: int
    pos_reward: float | None
    neg_reward: float | None
    rule: SubsetRule
    method: SupervisionMethod

    def __post_init__(self) -> None:
        if self.pos_index == self.neg_index:
            raise ValidationError(f"instance {self.instance_id!r}: pair indices must differ")
        # Under t+f the pools are disjoint label classes, so the best correct
        # sample may legitimately score below the worst incorrect one; the
        # reward ordering is only structural when the pools coincide.
        if (
            self.method.kind == "drm"
            and self.rule is not SubsetRule.T_F
            and self.pos_reward is not None
            and self.neg_reward is not None
            and self.pos_reward < self.neg_reward
        ):
            raise ValidationError(f"instance {self.instance_id!r}: drm pair has pos_reward < neg_reward")


def build_subsets(group: SampleGroup, rule: SubsetRule) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Return (positive pool, negative pool) as sorted index tuples.

    ``any`` uses every sample for both pools and never reads labels; the
    label-based rules require a correctness label on every sample.
    """
    indices = tuple(range(len(group)))
    if rule is SubsetRule.ANY:
        return indices, indices

    labels = []
    for i, sample in enumerate(group.samples):
        if sample.correct is None:
            raise ValidationError(
                f"instance {group.instance_id!r}: rule {rule.display} needs correctness labels, "
                f"sample {i} has none"
            )
        labels.append(sample.correct)
    correct = tuple(i for i in indices if labels[i])
    incorrect = tuple(i for i in indices if not labels[i])
    if rule is SubsetRule.T_T:
        return correct, correct
    if rule is SubsetRule.T_F:
        return correct, incorrect
    return incorrect, incorrect


def _instance_rng(seed: int, instance_id: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, instance_id).

    Keying per instance makes draws independent of processing order, so a
    parallel or resumed run selects identical pairs.
    """
    digest = hashlib.sha256(f"{seed}:{instance_id}".encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype="<u8")
    return np.random.Generator(np.random.Philox(key=key))


def _validate_selection_inputs(
    group: SampleGroup,
    pools: tuple[Sequence[int], Sequence[int]],
    rewards: Sequence[float] | None,
) -> None:
    for name, pool in (("positive", pools[0]), ("negative", pools[1])):
        for i in pool:
            if not 0 <= i < len(group):
                raise ValidationError(f"instance {group.instance_id!r}: {name} pool index {i} out of range")
    if rewards is not None and len(rewards) != len(group):
        raise ValidationError(
            f"instance {group.instance_id!r}: got {len(rewards)} rewards for {len(group)} samples"
        )


def _select_one(
    group: SampleGroup,
    pos_pool: Sequence[int],
    neg_pool: Sequence[int],
    method: SupervisionMethod,
    rewards: Sequence[float] | None,
    rule: SubsetRule,
    rng: np.random.Generator | None,
) -> PreferencePair | None:
    if not pos_pool or not neg_pool:
        return None
    if method.kind == "drm":
        if rewards is None:
            raise ValidationError(f"instance {group.instance_id!r}: drm selection requires rewards")
        pos = max(pos_pool, key=lambda i: (rewards[i], -i))
        candidates = [i for i in neg_pool if i != pos]
        if not candidates:
            return None
        neg = min(candidates, key=lambda i: (rewards[i], i))
    else:
        assert rng is not None
        pos_sorted = sorted(pos_pool)
        pos = pos_sorted[int(rng.integers(len(pos_sorted)))]
        candidates = sorted(i for i in neg_pool if i != pos)
        if not candidates:
            return None
        neg = candidates[int(rng.integers(len(candidates)))]
    return PreferencePair(
        instance_id=group.instance_id,
        pos_index=pos,
        neg_index=neg,
        pos_reward=rewards[pos] if rewards is not None else None,
        neg_reward=rewards[neg] if rewards is not None else None,
        rule=rule,
        method=method,
    )


def select_pair(
    group: SampleGroup,
    pools: tuple[Sequence[int], Sequence[int]],
    method: SupervisionMethod,
    rewards: Sequence[float] | None,
    rule: SubsetRule = SubsetRule.ANY,
) -> PreferencePair | None:
    """Pick one preference pair from the pools, or None if impossible.

    drm: positive = reward argmax over the positive pool, negative = reward
    argmin over the negative pool, ties to the lowest index.  If both land
    on the same sample (the pools may overlap), the negative falls back to
    the lowest-reward distinct index; a pool reduced to that single sample
    yields None.

    rlvr: uniform draws from each pool via the (seed, instance_id)-keyed
    generator, the negative drawn from the pool minus the chosen positive.
    """
    _validate_selection_inputs(group, pools, rewards)
    rng = _instance_rng(method.seed, group.instance_id) if method.kind == "rlvr" else None  # type: ignore[arg-type]
    return _select_one(group, pools[0], pools[1], method, rewards, rule, rng)


def select_pairs(
    group: SampleGroup,
    pools: tuple[Sequence[int], Sequence[int]],
    method: SupervisionMethod,
    rewards: Sequence[float] | None,
    rule: SubsetRule = SubsetRule.ANY,
    count: int = 1,
) -> list[PreferencePair]:
    """Pick up to ``count`` pairs, each sample used in at most one pair.

    The first pair equals select_pair's; chosen indices then leave both
    pools so later pairs fall back to the next-best (or next-drawn)
    candidates.  Selection stops early once a pool empties.  rlvr draws
    continue from the single per-instance generator, so the whole list is
    reproducible.
    """
    if count < 1:
        raise ValidationError(f"pairs per instance must be >= 1, got {count}")
    _validate_selection_inputs(group, pools, rewards)
    rng = _instance_rng(method.seed, group.instance_id) if method.kind == "rlvr" else None  # type: ignore[arg-type]
    pos_pool = list(pools[0])
    neg_pool = list(pools[1])
    out: list[PreferencePair] = []
    for _ in range(count):
        pair = _select_one(group, pos_pool, neg_pool, method, rewards, rule, rng)
        if pair is None:
            break
        out.append(pair)
        used = {pair.pos_index, pair.neg_index}
        pos_pool = [i for i in pos_pool if i not in used]
        neg_pool = [i for i in neg_pool if i not in used]
    return out


def prompt_text(quadruple: Quadruple) -> str:
    """Prompt shown to the trainer: question, then any context documents."""
    if not quadruple.context:
        return quadruple.question
    return quadruple.question + "\n\n" + "\n\n".join(quadruple.context)


def completion_text(quadruple: Quadruple) -> str:
    """Full model output for one sample: reasoning then answer."""
    return quadruple.reasoning + "\n" + quadruple.answer


def construction_name(method: SupervisionMethod, rule: SubsetRule) -> str:
    """Canonical SUPERVISION@SUBSET label, e.g. 'DRM@T+F'."""
    return f"{method.kind.upper()}@{rule.display}"


def pair_to_record(pair: PreferencePair, group: SampleGroup) -> dict[str, Any]:
    """Render one pair as a DPO training record."""
    if not (0 <= pair.pos_index < len(group)) or not (0 <= pair.neg_index < len(group)):
        raise SchemaError(
            f"instance {pair.instance_id!r}: pair indices ({pair.pos_index}, {pair.neg_index}) "
            f"do not resolve in a group of {len(group)}"
        )
    pos = group.samples[pair.pos_index].quadruple
    neg = group.samples[pair.neg_index].quadruple
    return {
        "prompt": prompt_text(pos),
        "chosen": completion_text(pos),
        "rejected": completion_text(neg),
        "instance_id": pair.instance_id,
        "pos_index": pair.pos_index,
        "neg_index": pair.neg_index,
        "pos_reward": pair.pos_reward,
        "neg_reward": pair.neg_reward,
        "rule": pair.rule.value,
        "method": pair.method.kind,
        "seed": pair.method.seed,
    }


def emit_dpo_dataset(
    pairs: Iterable[PreferencePair],
    groups: Iterable[SampleGroup],
    sink: IO[bytes] | IO[str],
) -> int:
    """Write pairs as DPO JSONL, ordered by instance_id then discovery order."""
    by_id: dict[str, SampleGroup] = {}
    for group in groups:
        by_id[group.instance_id] = group
    records = []
    for pair in pairs:
        group = by_id.get(pair.instance_id)
        if group is None:
            raise SchemaError(f"pair references unknown instance {pair.instance_id!r}")
        records.append(pair_to_record(pair, group))
    records.sort(key=lambda r: r["instance_id"])
    return write_records(records, sink)
