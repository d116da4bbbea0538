"""Domain records and streaming JSONL input/output.

One sample per line, lines for one instance contiguous:

    {"instance_id": str, "question": str, "context": [str], "reasoning": str,
     "answer": str, "reasoning_logprobs": [num], "answer_logprobs": [num],
     "judge": {"q_entail": num, "d_relevance": num, "a_entail": num,
               "coherence": num} | null,
     "correct": bool | null}

Log-probabilities are natural logs, finite and <= 0.  Unknown keys are
ignored on read so that score-enriched files remain valid inputs.  Writing
is canonical (sorted keys, compact separators, UTF-8, "\n" line ends) so
identical records always produce identical bytes.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, replace
from typing import IO, Any, Iterable, Iterator, Mapping

from .errors import GroupingError, InputOutputError, RecordError, ValidationError

__all__ = [
    "Quadruple",
    "JudgeScores",
    "Sample",
    "SampleGroup",
    "read_groups",
    "write_records",
    "dumps_canonical",
]


def _check_logprobs(name: str, values: tuple[float, ...]) -> None:
    for i, value in enumerate(values):
        if not math.isfinite(value):
            raise ValidationError(f"{name}[{i}] is not finite: {value!r}")
        if value > 0.0:
            raise ValidationError(f"{name}[{i}] is a positive log-probability: {value!r}")


@dataclass(frozen=True, slots=True)
class Quadruple:
    """One model sample split into question, context, reasoning, and answer.

    Token log-probabilities arrive precomputed (natural log, one per token);
    the reasoning/answer boundary is drawn upstream.
    """

    question: str
    context: tuple[str, ...]
    reasoning: str
    answer: str
    reasoning_logprobs: tuple[float, ...]
    answer_logprobs: tuple[float, ...]

    def __post_init__(self) -> None:
        _check_logprobs("reasoning_logprobs", self.reasoning_logprobs)
        _check_logprobs("answer_logprobs", self.answer_logprobs)


@dataclass(frozen=True, slots=True)
class JudgeScores:
    """Raw external-judge measurements for one sample.

    Scales are judge-specific and deliberately unconstrained; within-group
    normalization downstream absorbs them.
    """

    q_entail: float
    d_relevance: float
    a_entail: float
    coherence: float

    def __post_init__(self) -> None:
        for name in ("q_entail", "d_relevance", "a_entail", "coherence"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"judge score {name} is not finite: {value!r}")

    def to_record(self) -> dict[str, float]:
        return {
            "q_entail": self.q_entail,
            "d_relevance": self.d_relevance,
            "a_entail": self.a_entail,
            "coherence": self.coherence,
        }


@dataclass(frozen=True, slots=True)
class Sample:
    """A quadruple plus optional judge scores and correctness label."""

    quadruple: Quadruple
    judge: JudgeScores | None = None
    correct: bool | None = None

    def with_judge(self, judge: JudgeScores) -> "Sample":
        return replace(self, judge=judge)


@dataclass(frozen=True, slots=True)
class SampleGroup:
    """All samples generated from one instance, in stable index order.

    The group is the unit over which normalization, pairing, and advantage
    estimation operate; sample indices are the tie-break key everywhere.
    """

    instance_id: str
    samples: tuple[Sample, ...]

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValidationError(f"instance {self.instance_id!r}: group must hold at least one sample")

    def __len__(self) -> int:
        return len(self.samples)


def _require(record: Mapping[str, Any], key: str, kind: type, kind_name: str) -> Any:
    if key not in record:
        raise RecordError(f"missing required field {key!r}")
    value = record[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise RecordError(f"field {key!r} must be a {kind_name}")
    return value


def _float_list(record: Mapping[str, Any], key: str) -> tuple[float, ...]:
    raw = _require(record, key, list, "array of numbers")
    out = []
    for i, value in enumerate(raw):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise RecordError(f"field {key!r}[{i}] must be a number")
        out.append(float(value))
    return tuple(out)


def sample_from_record(record: Mapping[str, Any]) -> Sample:
    """Build a Sample from one decoded JSON record (instance_id excluded)."""
    context_raw = _require(record, "context", list, "array of strings")
    for i, doc in enumerate(context_raw):
        if not isinstance(doc, str):
            raise RecordError(f"field 'context'[{i}] must be a string")
    try:
        quadruple = Quadruple(
            question=_require(record, "question", str, "string"),
            context=tuple(context_raw),
            reasoning=_require(record, "reasoning", str, "string"),
            answer=_require(record, "answer", str, "string"),
            reasoning_logprobs=_float_list(record, "reasoning_logprobs"),
            answer_logprobs=_float_list(record, "answer_logprobs"),
        )
    except ValidationError as exc:
        raise RecordError(str(exc)) from exc

    judge_raw = record.get("judge")
    if judge_raw is None:
        judge = None
    elif isinstance(judge_raw, Mapping):
        try:
            judge = JudgeScores(
                q_entail=_judge_field(judge_raw, "q_entail"),
                d_relevance=_judge_field(judge_raw, "d_relevance"),
                a_entail=_judge_field(judge_raw, "a_entail"),
                coherence=_judge_field(judge_raw, "coherence"),
            )
        except ValidationError as exc:
            raise RecordError(str(exc)) from exc
    else:
        raise RecordError("field 'judge' must be an object or null")

    correct_raw = record.get("correct")
    if correct_raw is not None and not isinstance(correct_raw, bool):
        raise RecordError("field 'correct' must be a boolean or null")

    return Sample(quadruple=quadruple, judge=judge, correct=correct_raw)


def _judge_field(judge: Mapping[str, Any], key: str) -> float:
    if key not in judge:
        raise RecordError(f"judge object missing field {key!r}")
    value = judge[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RecordError(f"judge field {key!r} must be a number")
    return float(value)


def sample_to_record(instance_id: str, sample: Sample, extra: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Flatten a sample back into its wire record, optionally merging extras."""
    q = sample.quadruple
    record: dict[str, Any] = {
        "instance_id": instance_id,
        "question": q.question,
        "context": list(q.context),
        "reasoning": q.reasoning,
        "answer": q.answer,
        "reasoning_logprobs": list(q.reasoning_logprobs),
        "answer_logprobs": list(q.answer_logprobs),
        "judge": sample.judge.to_record() if sample.judge is not None else None,
        "correct": sample.correct,
    }
    if extra:
        record.update(extra)
    return record


def _iter_lines(stream: IO[bytes] | IO[str] | Iterable[str] | Iterable[bytes]) -> Iterator[str]:
    for line in stream:
        if isinstance(line, bytes):
            yield line.decode("utf-8")
        else:
            yield line


def read_groups(stream: IO[bytes] | IO[str] | Iterable[str]) -> Iterator[SampleGroup]:
    """Stream newline-delimited sample records, grouped by instance_id.

    Lines for one instance must be contiguous; seeing an id again after the
    stream moved on is a GroupingError.  Malformed lines raise RecordError
    carrying the 1-based line number.
    """
    current_id: str | None = None
    current: list[Sample] = []
    seen: set[str] = set()

    for line_number, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"invalid JSON ({exc.msg})", line_number) from exc
        if not isinstance(record, dict):
            raise RecordError("record must be a JSON object", line_number)
        if "instance_id" not in record or not isinstance(record["instance_id"], str):
            raise RecordError("field 'instance_id' must be a string", line_number)
        instance_id = record["instance_id"]

        if instance_id != current_id:
            if instance_id in seen:
                raise GroupingError(
                    f"line {line_number}: instance {instance_id!r} reappears after other instances; "
                    "lines for one instance must be contiguous",
                    instance_id,
                )
            if current_id is not None:
                yield SampleGroup(current_id, tuple(current))
            seen.add(instance_id)
            current_id = instance_id
            current = []

        try:
            current.append(sample_from_record(record))
        except RecordError as exc:
            raise RecordError(str(exc), line_number) from exc

    if current_id is not None:
        yield SampleGroup(current_id, tuple(current))


def dumps_canonical(record: Mapping[str, Any]) -> str:
    """Serialize one record to its canonical single-line JSON form."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def write_records(records: Iterable[Mapping[str, Any]], sink: IO[bytes] | IO[str]) -> int:
    """Write records one canonical JSON line each; return the line count."""
    binary = not isinstance(sink, io.TextIOBase)
    count = 0
    for index, record in enumerate(records):
        line = dumps_canonical(record) + "\n"
        try:
            sink.write(line.encode("utf-8") if binary else line)  # type: ignore[arg-type]
        except OSError as exc:
            raise InputOutputError(f"writing record {index}: {exc}") from exc
        count += 1
    return count
