"""Record schema parsing, grouping, and canonical JSONL round trips."""

from __future__ import annotations

import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimreward.core import (
    Quadruple,
    SampleGroup,
    dumps_canonical,
    read_groups,
    sample_from_record,
    sample_to_record,
    write_records,
)
from dimreward.errors import GroupingError, RecordError, ValidationError

from helpers import make_sample

VALID_LINE = json.dumps(
    {
        "instance_id": "a",
        "question": "q",
        "context": [],
        "reasoning": "r",
        "answer": "ans",
        "reasoning_logprobs": [-1.0],
        "answer_logprobs": [-0.5],
        "judge": None,
        "correct": None,
    }
)


def _line(instance_id: str, **overrides) -> str:
    record = json.loads(VALID_LINE)
    record["instance_id"] = instance_id
    record.update(overrides)
    return json.dumps(record)


def test_groups_by_contiguous_instance_id():
    stream = io.StringIO("\n".join([_line("a"), _line("a"), _line("a"), _line("b"), _line("b")]) + "\n")
    groups = list(read_groups(stream))
    assert [g.instance_id for g in groups] == ["a", "b"]
    assert [len(g) for g in groups] == [3, 2]


def test_empty_stream_yields_nothing():
    assert list(read_groups(io.StringIO(""))) == []


def test_non_contiguous_instance_id_is_grouping_error():
    stream = io.StringIO("\n".join([_line("a"), _line("b"), _line("a")]) + "\n")
    with pytest.raises(GroupingError, match="'a'") as excinfo:
        list(read_groups(stream))
    assert "line 3" in str(excinfo.value)


def test_malformed_json_reports_line_number():
    stream = io.StringIO(_line("a") + "\n{not json\n")
    with pytest.raises(RecordError, match="line 2"):
        list(read_groups(stream))


@pytest.mark.parametrize(
    "overrides",
    [
        {"question": 5},
        {"context": "not a list"},
        {"context": [1]},
        {"reasoning_logprobs": [-1.0, "x"]},
        {"reasoning_logprobs": [0.5]},
        {"answer_logprobs": [1.0]},
        {"judge": {"q_entail": 1.0}},
        {"judge": "text"},
        {"correct": "yes"},
    ],
)
def test_bad_fields_are_record_errors(overrides):
    stream = io.StringIO(_line("a", **overrides) + "\n")
    with pytest.raises(RecordError, match="line 1"):
        list(read_groups(stream))


def test_missing_required_field_is_record_error():
    record = json.loads(VALID_LINE)
    del record["reasoning"]
    with pytest.raises(RecordError, match="'reasoning'"):
        sample_from_record(record)


def test_byte_stream_accepted():
    data = (_line("a") + "\n").encode("utf-8")
    groups = list(read_groups(io.BytesIO(data)))
    assert len(groups) == 1


def test_positive_logprob_rejected_at_type_level():
    with pytest.raises(ValidationError, match="positive log-probability"):
        Quadruple("q", (), "r", "a", (0.1,), (-1.0,))


def test_empty_group_rejected():
    with pytest.raises(ValidationError):
        SampleGroup("empty", ())


def test_write_records_counts_and_lines():
    sink = io.BytesIO()
    assert write_records([{"b": 1, "a": 2}, {"x": None}], sink) == 2
    assert sink.getvalue() == b'{"a":2,"b":1}\n{"x":null}\n'


def test_write_records_empty():
    sink = io.BytesIO()
    assert write_records([], sink) == 0
    assert sink.getvalue() == b""


def test_write_records_deterministic():
    records = [{"k": "v", "n": [1.5, -0.0]}, {"z": "é"}]
    first, second = io.BytesIO(), io.BytesIO()
    write_records(records, first)
    write_records(records, second)
    assert first.getvalue() == second.getvalue()


def test_write_records_text_sink():
    sink = io.StringIO()
    write_records([{"a": 1}], sink)
    assert sink.getvalue() == '{"a":1}\n'


def test_canonical_rejects_nan():
    with pytest.raises(ValueError):
        dumps_canonical({"x": float("nan")})


_text = st.text(max_size=12)
_logprobs = st.lists(st.floats(min_value=-40.0, max_value=0.0, allow_nan=False), max_size=6)
_judge_value = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
_judge = st.one_of(st.none(), st.tuples(_judge_value, _judge_value, _judge_value, _judge_value))
_sample = st.builds(
    lambda q, ctx, r, a, rlp, alp, judge, correct: make_sample(
        judge=judge,
        correct=correct,
        question=q,
        context=tuple(ctx),
        reasoning=r,
        answer=a,
        reasoning_logprobs=tuple(rlp),
        answer_logprobs=tuple(alp),
    ),
    q=_text,
    ctx=st.lists(_text, max_size=3),
    r=_text,
    a=_text,
    rlp=_logprobs,
    alp=_logprobs,
    judge=_judge,
    correct=st.one_of(st.none(), st.booleans()),
)
_groups = st.lists(st.lists(_sample, min_size=1, max_size=4), min_size=0, max_size=4)


@settings(max_examples=60, deadline=None)
@given(_groups)
def test_round_trip_preserves_groups(sample_lists):
    groups = [SampleGroup(f"id-{i}", tuple(samples)) for i, samples in enumerate(sample_lists)]
    sink = io.BytesIO()
    records = [sample_to_record(g.instance_id, s) for g in groups for s in g.samples]
    write_records(records, sink)
    sink.seek(0)
    restored = list(read_groups(sink))
    assert restored == groups


def test_round_trip_ignores_extra_keys():
    sample = make_sample(judge=(1.0, 2.0, 3.0, 4.0), correct=True)
    record = sample_to_record("a", sample, extra={"drm_reward": 0.25, "index": 0})
    sink = io.BytesIO()
    write_records([record], sink)
    sink.seek(0)
    (group,) = read_groups(sink)
    assert group.samples[0] == sample
