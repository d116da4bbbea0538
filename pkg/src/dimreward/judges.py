"""Attach judge scores to samples, from HTTP scoring services or a file.

Wire protocol (both judges): POST {base_url}/score with
``{"items": [{"question", "context", "reasoning", "answer"}, ...]}``.
The relevance judge answers ``{"scores": [{"q_entail", "d_relevance",
"a_entail"}, ...]}``, the coherence judge ``{"scores": [{"coherence"},
...]}``, one entry per item in order.

Offline alternative: a JSONL file of
``{"instance_id": str, "index": int, "judge": {...}}`` rows keyed by
(instance_id, sample index).

Judges are GPU services prone to transient overload, so failed batches are
retried with exponential backoff and full jitter.  Requests run concurrently
up to ``max_in_flight`` but results are reassembled in input order, keeping
everything downstream deterministic.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Sequence

import requests

from .core import JudgeScores, Sample, SampleGroup, _iter_lines
from .errors import DuplicateScoreError, JudgeError, RecordError, ScoreJoinError, SchemaError, ValidationError

__all__ = ["JudgeEndpointConfig", "fetch_judge_scores", "load_offline_scores"]

_RELEVANCE_FIELDS = ("q_entail", "d_relevance", "a_entail")
_COHERENCE_FIELDS = ("coherence",)


@dataclass(frozen=True, slots=True)
class JudgeEndpointConfig:
    """Connection policy for one scoring service."""

    base_url: str
    timeout: float = 30.0
    max_in_flight: int = 4
    max_retries: int = 3
    batch_size: int = 16
    backoff_base: float = 0.25

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValidationError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_retries < 0:
            raise ValidationError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.timeout <= 0:
            raise ValidationError(f"timeout must be positive, got {self.timeout}")


def _item_payload(sample: Sample, *, coherence_with_answer: bool) -> dict[str, Any]:
    q = sample.quadruple
    reasoning = q.reasoning
    if coherence_with_answer:
        # Lets the coherence judge see the answer the reasoning must support.
        reasoning = f"{reasoning}\n{q.answer}"
    return {
        "question": q.question,
        "context": list(q.context),
        "reasoning": reasoning,
        "answer": q.answer,
    }


def _post_batch(
    config: JudgeEndpointConfig,
    items: Sequence[Mapping[str, Any]],
    fields: Sequence[str],
    batch_key: tuple[str, int],
) -> list[dict[str, float]]:
    """POST one batch, retrying transient failures; return per-item scores."""
    url = config.base_url.rstrip("/") + "/score"
    attempts = config.max_retries + 1
    last_failure = "no attempt made"
    for attempt in range(attempts):
        if attempt > 0:
            time.sleep(random.uniform(0.0, config.backoff_base * (2 ** (attempt - 1))))
        try:
            response = requests.post(url, json={"items": list(items)}, timeout=config.timeout)
        except requests.RequestException as exc:
            last_failure = str(exc)
            continue
        if response.status_code != 200:
            last_failure = f"HTTP {response.status_code}"
            continue
        try:
            body = response.json()
        except (ValueError, json.JSONDecodeError) as exc:
            raise SchemaError(f"judge at {url} returned a non-JSON body: {exc}") from exc
        return _parse_scores(body, fields, len(items), url)
    instance_id, index = batch_key
    raise JudgeError(
        f"judge at {url} failed after {attempts} attempts "
        f"(first affected sample: instance {instance_id!r} index {index}): {last_failure}",
        instance_id=instance_id,
        index=index,
    )


def _parse_scores(body: Any, fields: Sequence[str], expected: int, url: str) -> list[dict[str, float]]:
    if not isinstance(body, Mapping) or not isinstance(body.get("scores"), list):
        raise SchemaError(f"judge at {url} response missing 'scores' array")
    scores = body["scores"]
    if len(scores) != expected:
        raise SchemaError(f"judge at {url} returned {len(scores)} scores for {expected} items")
    parsed = []
    for i, entry in enumerate(scores):
        if not isinstance(entry, Mapping):
            raise SchemaError(f"judge at {url} score entry {i} is not an object")
        row = {}
        for field in fields:
            value = entry.get(field)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(f"judge at {url} score entry {i} missing numeric field {field!r}")
            row[field] = float(value)
        parsed.append(row)
    return parsed


def _score_targets(
    config: JudgeEndpointConfig,
    targets: Sequence[tuple[str, int, Sample]],
    fields: Sequence[str],
    *,
    coherence_with_answer: bool = False,
) -> list[dict[str, float]]:
    """Score all targets against one endpoint, preserving target order."""
    batches = []
    for start in range(0, len(targets), config.batch_size):
        chunk = targets[start : start + config.batch_size]
        items = [_item_payload(s, coherence_with_answer=coherence_with_answer) for _, _, s in chunk]
        batches.append((items, (chunk[0][0], chunk[0][1])))
    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        futures = [pool.submit(_post_batch, config, items, fields, key) for items, key in batches]
        results: list[dict[str, float]] = []
        for future in futures:
            results.extend(future.result())
    return results


def fetch_judge_scores(
    groups: Iterable[SampleGroup],
    relevance_cfg: JudgeEndpointConfig,
    coherence_cfg: JudgeEndpointConfig,
    *,
    coherence_with_answer: bool = False,
) -> list[SampleGroup]:
    """Fill in judge scores for every sample that lacks them.

    Samples already carrying scores are left untouched and cause no
    requests; group and sample order are preserved exactly.  Set
    ``coherence_with_answer`` to append the answer text to the reasoning
    sent to the coherence judge (off by default).
    """
    group_list = list(groups)
    targets: list[tuple[int, int]] = []
    flat: list[tuple[str, int, Sample]] = []
    for g_idx, group in enumerate(group_list):
        for s_idx, sample in enumerate(group.samples):
            if sample.judge is None:
                targets.append((g_idx, s_idx))
                flat.append((group.instance_id, s_idx, sample))
    if not targets:
        return group_list

    relevance = _score_targets(relevance_cfg, flat, _RELEVANCE_FIELDS)
    coherence = _score_targets(coherence_cfg, flat, _COHERENCE_FIELDS, coherence_with_answer=coherence_with_answer)

    fetched: dict[tuple[int, int], JudgeScores] = {}
    for (g_idx, s_idx), rel_row, coh_row in zip(targets, relevance, coherence):
        fetched[(g_idx, s_idx)] = JudgeScores(
            q_entail=rel_row["q_entail"],
            d_relevance=rel_row["d_relevance"],
            a_entail=rel_row["a_entail"],
            coherence=coh_row["coherence"],
        )
    return _apply_scores(group_list, fetched)


def _apply_scores(group_list: list[SampleGroup], scores: dict[tuple[int, int], JudgeScores]) -> list[SampleGroup]:
    out = []
    for g_idx, group in enumerate(group_list):
        samples = tuple(
            sample.with_judge(scores[(g_idx, s_idx)]) if (g_idx, s_idx) in scores else sample
            for s_idx, sample in enumerate(group.samples)
        )
        out.append(SampleGroup(group.instance_id, samples))
    return out


def load_offline_scores(
    groups: Iterable[SampleGroup],
    score_file: str | Path | IO[bytes] | IO[str],
) -> list[SampleGroup]:
    """Join a JSONL score file onto samples missing judge scores.

    Every unscored sample must be covered by exactly one (instance_id,
    index) row; rows for already-scored samples or unknown keys are ignored,
    duplicate keys are always an error.
    """
    if isinstance(score_file, (str, Path)):
        with open(score_file, "rb") as handle:
            table = _read_score_table(handle)
    else:
        table = _read_score_table(score_file)

    group_list = list(groups)
    scores: dict[tuple[int, int], JudgeScores] = {}
    for g_idx, group in enumerate(group_list):
        for s_idx, sample in enumerate(group.samples):
            if sample.judge is not None:
                continue
            key = (group.instance_id, s_idx)
            if key not in table:
                raise ScoreJoinError(
                    f"score file has no entry for instance {group.instance_id!r} index {s_idx}",
                    instance_id=group.instance_id,
                    index=s_idx,
                )
            scores[(g_idx, s_idx)] = table[key]
    return _apply_scores(group_list, scores)


def _read_score_table(stream: IO[bytes] | IO[str]) -> dict[tuple[str, int], JudgeScores]:
    table: dict[tuple[str, int], JudgeScores] = {}
    for line_number, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"invalid JSON ({exc.msg})", line_number) from exc
        if not isinstance(record, dict):
            raise RecordError("score record must be a JSON object", line_number)
        instance_id = record.get("instance_id")
        index = record.get("index")
        judge = record.get("judge")
        if not isinstance(instance_id, str):
            raise RecordError("score record field 'instance_id' must be a string", line_number)
        if isinstance(index, bool) or not isinstance(index, int) or index < 0:
            raise RecordError("score record field 'index' must be a nonnegative integer", line_number)
        if not isinstance(judge, Mapping):
            raise RecordError("score record field 'judge' must be an object", line_number)
        key = (instance_id, index)
        if key in table:
            raise DuplicateScoreError(
                f"line {line_number}: duplicate score entry for instance {instance_id!r} index {index}",
                instance_id=instance_id,
                index=index,
            )
        try:
            table[key] = JudgeScores(
                q_entail=float(judge["q_entail"]),
                d_relevance=float(judge["d_relevance"]),
                a_entail=float(judge["a_entail"]),
                coherence=float(judge["coherence"]),
            )
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise RecordError(f"score record 'judge' object is malformed: {exc}", line_number) from exc
    return table
