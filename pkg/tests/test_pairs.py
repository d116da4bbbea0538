"""Pool construction, pair selection, and DPO dataset emission."""

from __future__ import annotations

import io
import itertools
import json

import numpy as np
import pytest

from dimreward.core import SampleGroup
from dimreward.errors import SchemaError, ValidationError
from dimreward.pairs import (
    PreferencePair,
    SubsetRule,
    SupervisionMethod,
    build_subsets,
    completion_text,
    construction_name,
    emit_dpo_dataset,
    prompt_text,
    select_pair,
)

from helpers import make_group, make_quadruple, make_sample


def group_with_labels(labels, instance_id="g"):
    return make_group(instance_id, [make_sample(correct=c, answer=f"a{i}") for i, c in enumerate(labels)])


def brute_force_drm_pair(pos_pool, neg_pool, rewards):
    """Literal enumeration: maximize (reward_pos, -reward_neg), lowest
    (pos, neg) indices on ties."""
    candidates = [(p, n) for p in pos_pool for n in neg_pool if p != n]
    if not candidates:
        return None
    return max(candidates, key=lambda pn: (rewards[pn[0]], -rewards[pn[1]], -pn[0], -pn[1]))


class TestBuildSubsets:
    def test_t_f_splits_by_label(self):
        assert build_subsets(group_with_labels([True, False, True]), SubsetRule.T_F) == ((0, 2), (1,))

    def test_any_uses_everything(self):
        assert build_subsets(group_with_labels([True, False, True]), SubsetRule.ANY) == (
            (0, 1, 2),
            (0, 1, 2),
        )

    def test_f_f_on_all_correct_is_empty(self):
        assert build_subsets(group_with_labels([True, True, True]), SubsetRule.F_F) == ((), ())

    def test_t_t_keeps_only_correct(self):
        assert build_subsets(group_with_labels([False, True, True]), SubsetRule.T_T) == ((1, 2), (1, 2))

    def test_any_never_reads_labels(self):
        group = group_with_labels([None, None])
        assert build_subsets(group, SubsetRule.ANY) == ((0, 1), (0, 1))

    def test_label_rules_require_labels(self):
        with pytest.raises(ValidationError, match="sample 1"):
            build_subsets(group_with_labels([True, None]), SubsetRule.T_F)

    def test_rule_parsing(self):
        assert SubsetRule.parse("T+F") is SubsetRule.T_F
        with pytest.raises(ValidationError):
            SubsetRule.parse("t-f")


class TestSupervisionMethod:
    def test_seed_required_for_rlvr(self):
        with pytest.raises(ValidationError):
            SupervisionMethod(kind="rlvr")

    def test_drm_takes_no_seed(self):
        with pytest.raises(ValidationError):
            SupervisionMethod(kind="drm", seed=1)

    def test_construction_names(self):
        assert construction_name(SupervisionMethod.drm(), SubsetRule.T_F) == "DRM@T+F"
        assert construction_name(SupervisionMethod.rlvr(0), SubsetRule.ANY) == "RLVR@any"


class TestSelectPairDrm:
    def test_argmax_argmin_over_pools(self):
        group = group_with_labels([True, False, True])
        pair = select_pair(group, ((0, 2), (1,)), SupervisionMethod.drm(), [0.9, 0.1, 0.4])
        assert (pair.pos_index, pair.neg_index) == (0, 1)
        assert (pair.pos_reward, pair.neg_reward) == (0.9, 0.1)

    def test_collision_falls_back_to_distinct_lowest(self):
        group = group_with_labels([True, True])
        pair = select_pair(group, ((0, 1), (0, 1)), SupervisionMethod.drm(), [0.7, 0.7])
        assert (pair.pos_index, pair.neg_index) == (0, 1)

    def test_empty_neg_pool_yields_none(self):
        group = group_with_labels([True, True])
        assert select_pair(group, ((0, 1), ()), SupervisionMethod.drm(), [0.1, 0.2]) is None

    def test_single_sample_pool_yields_none(self):
        group = group_with_labels([True])
        assert select_pair(group, ((0,), (0,)), SupervisionMethod.drm(), [0.5]) is None

    def test_requires_rewards(self):
        group = group_with_labels([True, False])
        with pytest.raises(ValidationError):
            select_pair(group, ((0,), (1,)), SupervisionMethod.drm(), None)

    def test_reward_alignment_checked(self):
        group = group_with_labels([True, False])
        with pytest.raises(ValidationError):
            select_pair(group, ((0,), (1,)), SupervisionMethod.drm(), [0.5])

    def test_matches_brute_force_over_small_groups(self):
        rng = np.random.default_rng(41)
        method = SupervisionMethod.drm()
        for g in range(1, 6):
            for labels in itertools.product([True, False], repeat=g):
                group = group_with_labels(list(labels))
                for _ in range(4):
                    rewards = rng.uniform(size=g).tolist()
                    for rule in SubsetRule:
                        pools = build_subsets(group, rule)
                        pair = select_pair(group, pools, method, rewards, rule=rule)
                        expected = brute_force_drm_pair(pools[0], pools[1], rewards)
                        got = None if pair is None else (pair.pos_index, pair.neg_index)
                        assert got == expected


class TestSelectPairRlvr:
    def test_deterministic_under_fixed_seed(self):
        group = group_with_labels([True, False, True, False, True])
        pools = build_subsets(group, SubsetRule.ANY)
        first = select_pair(group, pools, SupervisionMethod.rlvr(99), None)
        second = select_pair(group, pools, SupervisionMethod.rlvr(99), None)
        assert (first.pos_index, first.neg_index) == (second.pos_index, second.neg_index)

    def test_seed_changes_draws(self):
        group = group_with_labels([True] * 12)
        pools = build_subsets(group, SubsetRule.ANY)
        draws = {
            (p.pos_index, p.neg_index)
            for p in (
                select_pair(group, pools, SupervisionMethod.rlvr(seed), None) for seed in range(8)
            )
        }
        assert len(draws) > 1

    def test_keyed_by_instance_id_not_processing_order(self):
        pools = ((0, 1, 2), (0, 1, 2))
        picks = {}
        for ordering in (("a", "b"), ("b", "a")):
            for instance_id in ordering:
                group = group_with_labels([True, True, True], instance_id=instance_id)
                pair = select_pair(group, pools, SupervisionMethod.rlvr(5), None)
                picks.setdefault(instance_id, set()).add((pair.pos_index, pair.neg_index))
        assert all(len(v) == 1 for v in picks.values())

    def test_draws_respect_pools(self):
        group = group_with_labels([True, False, False, True])
        pools = build_subsets(group, SubsetRule.T_F)
        for seed in range(50):
            pair = select_pair(group, pools, SupervisionMethod.rlvr(seed), None)
            assert pair.pos_index in (0, 3)
            assert pair.neg_index in (1, 2)
            assert pair.pos_reward is None and pair.neg_reward is None

    def test_never_selects_identical_indices(self):
        group = group_with_labels([True, True, True])
        pools = build_subsets(group, SubsetRule.T_T)
        for seed in range(100):
            pair = select_pair(group, pools, SupervisionMethod.rlvr(seed), None)
            assert pair.pos_index != pair.neg_index

    def test_singleton_overlapping_pool_yields_none(self):
        group = group_with_labels([True])
        assert select_pair(group, ((0,), (0,)), SupervisionMethod.rlvr(1), None) is None


class TestPreferencePairInvariants:
    def test_identical_indices_rejected(self):
        with pytest.raises(ValidationError):
            PreferencePair("g", 1, 1, 0.5, 0.1, SubsetRule.ANY, SupervisionMethod.drm())

    def test_drm_reward_ordering_enforced(self):
        with pytest.raises(ValidationError):
            PreferencePair("g", 0, 1, 0.1, 0.9, SubsetRule.ANY, SupervisionMethod.drm())

    def test_t_f_pairs_split_labels(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            g = int(rng.integers(2, 7))
            labels = [bool(v) for v in rng.integers(0, 2, size=g)]
            group = group_with_labels(labels)
            pools = build_subsets(group, SubsetRule.T_F)
            pair = select_pair(group, pools, SupervisionMethod.drm(), rng.uniform(size=g).tolist(),
                               rule=SubsetRule.T_F)
            if pair is not None:
                assert labels[pair.pos_index] is True
                assert labels[pair.neg_index] is False


class TestEmitDpoDataset:
    def _pair_and_group(self):
        samples = [
            make_sample(
                judge=None,
                correct=True,
                question="why?",
                context=("doc one", "doc two"),
                reasoning=f"reasoning {i}",
                answer=f"answer {i}",
            )
            for i in range(2)
        ]
        group = make_group("inst", samples)
        pair = PreferencePair("inst", 0, 1, 0.9, 0.2, SubsetRule.ANY, SupervisionMethod.drm())
        return pair, group

    def test_single_pair_renders_texts(self):
        pair, group = self._pair_and_group()
        sink = io.BytesIO()
        assert emit_dpo_dataset([pair], [group], sink) == 1
        (line,) = sink.getvalue().decode().splitlines()
        record = json.loads(line)
        assert record["prompt"] == "why?\n\ndoc one\n\ndoc two"
        assert record["chosen"] == "reasoning 0\nanswer 0"
        assert record["rejected"] == "reasoning 1\nanswer 1"
        assert record["rule"] == "any" and record["method"] == "drm"

    def test_prompt_without_context_is_question_only(self):
        assert prompt_text(make_quadruple(question="q", context=())) == "q"
        assert completion_text(make_quadruple(reasoning="r", answer="a")) == "r\na"

    def test_no_pairs_no_lines(self):
        sink = io.BytesIO()
        assert emit_dpo_dataset([], [], sink) == 0
        assert sink.getvalue() == b""

    def test_byte_identical_on_repeat(self):
        pair, group = self._pair_and_group()
        first, second = io.BytesIO(), io.BytesIO()
        emit_dpo_dataset([pair], [group], first)
        emit_dpo_dataset([pair], [group], second)
        assert first.getvalue() == second.getvalue()

    def test_sorted_by_instance_id(self):
        groups = [group_with_labels([True, False], instance_id=i) for i in ("z", "a")]
        pairs = [
            PreferencePair(i, 0, 1, None, None, SubsetRule.ANY, SupervisionMethod.rlvr(0))
            for i in ("z", "a")
        ]
        sink = io.BytesIO()
        emit_dpo_dataset(pairs, groups, sink)
        ids = [json.loads(line)["instance_id"] for line in sink.getvalue().decode().splitlines()]
        assert ids == ["a", "z"]

    def test_unknown_instance_is_integrity_error(self):
        pair, group = self._pair_and_group()
        with pytest.raises(SchemaError):
            emit_dpo_dataset([pair], [], io.BytesIO())

    def test_dangling_index_is_integrity_error(self):
        _, group = self._pair_and_group()
        bad = PreferencePair("inst", 0, 5, None, None, SubsetRule.ANY, SupervisionMethod.rlvr(0))
        with pytest.raises(SchemaError):
            emit_dpo_dataset([bad], [group], io.BytesIO())


def test_drm_any_pipeline_never_touches_labels():
    # Groups with no labels at all: ANY + drm must still produce pairs.
    group = SampleGroup(
        "g",
        tuple(make_sample(judge=None, correct=None, answer=str(i)) for i in range(3)),
    )
    pools = build_subsets(group, SubsetRule.ANY)
    pair = select_pair(group, pools, SupervisionMethod.drm(), [0.2, 0.9, 0.5])
    assert (pair.pos_index, pair.neg_index) == (1, 0)
