"""Shared test factories and a threaded HTTP stub for judge endpoints."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Sequence

from dimreward.core import JudgeScores, Quadruple, Sample, SampleGroup


def make_quadruple(
    question: str = "what is 2+2?",
    context: Sequence[str] = (),
    reasoning: str = "adding two and two",
    answer: str = "4",
    reasoning_logprobs: Sequence[float] = (-1.0, -0.5),
    answer_logprobs: Sequence[float] = (-0.2,),
) -> Quadruple:
    return Quadruple(
        question=question,
        context=tuple(context),
        reasoning=reasoning,
        answer=answer,
        reasoning_logprobs=tuple(reasoning_logprobs),
        answer_logprobs=tuple(answer_logprobs),
    )


def make_sample(
    judge: tuple[float, float, float, float] | None = None,
    correct: bool | None = None,
    **quad_kwargs,
) -> Sample:
    scores = JudgeScores(*judge) if judge is not None else None
    return Sample(quadruple=make_quadruple(**quad_kwargs), judge=scores, correct=correct)


def make_group(instance_id: str, samples: Sequence[Sample]) -> SampleGroup:
    return SampleGroup(instance_id=instance_id, samples=tuple(samples))


def scored_group(
    instance_id: str,
    judges: Sequence[tuple[float, float, float, float]],
    corrects: Sequence[bool | None] | None = None,
    confidences: Sequence[tuple[Sequence[float], Sequence[float]]] | None = None,
) -> SampleGroup:
    """Group of len(judges) samples with the given judge tuples."""
    samples = []
    for i, judge in enumerate(judges):
        kwargs = {}
        if confidences is not None:
            kwargs["reasoning_logprobs"], kwargs["answer_logprobs"] = confidences[i]
        samples.append(
            make_sample(
                judge=judge,
                correct=corrects[i] if corrects is not None else None,
                reasoning=f"reasoning {instance_id}/{i}",
                answer=f"answer {i}",
                **kwargs,
            )
        )
    return make_group(instance_id, samples)


def coherence_oracle_groups(
    n_groups: int,
    group_size: int = 5,
    n_correct: int = 2,
    seed: int = 0,
) -> list[SampleGroup]:
    """Synthetic groups where coherence perfectly separates correct samples.

    Every group plants exactly ``n_correct`` correct samples whose coherence
    scores strictly dominate the incorrect ones; confidence and relevance
    are pure noise.  A coherence-only weighting therefore selects a correct
    sample in every group, and the uniform-draw baseline equals
    ``n_correct / group_size`` exactly.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    groups = []
    for k in range(n_groups):
        flags = [i < n_correct for i in range(group_size)]
        order = rng.permutation(group_size)
        corrects = [flags[int(i)] for i in order]
        samples = []
        for i, correct in enumerate(corrects):
            coherence = float(rng.uniform(2.0, 3.0)) if correct else float(rng.uniform(0.0, 1.0))
            judge = (float(rng.normal()), float(rng.normal()), float(rng.normal()), coherence)
            samples.append(
                make_sample(
                    judge=judge,
                    correct=correct,
                    reasoning=f"reasoning {k}/{i}",
                    answer=f"answer {i}",
                    reasoning_logprobs=tuple(-rng.uniform(0.1, 4.0, size=3)),
                    answer_logprobs=tuple(-rng.uniform(0.1, 4.0, size=2)),
                )
            )
        groups.append(make_group(f"inst-{k:04d}", samples))
    return groups


class JudgeStub:
    """Local scoring service stub speaking the judge wire protocol.

    ``score_fn(item, position)`` produces the score object for one request
    item; ``fail_times`` makes the first N requests answer HTTP 500 so retry
    behavior can be exercised.  Every successfully served payload is
    recorded in arrival order.
    """

    def __init__(
        self,
        kind: str,
        score_fn: Callable[[dict, int], dict] | None = None,
        fail_times: int = 0,
        body_fn: Callable[[list[dict]], dict] | None = None,
    ):
        assert kind in ("relevance", "coherence")
        self.kind = kind
        self.score_fn = score_fn or self._default_score_fn
        self.body_fn = body_fn
        self.fail_remaining = fail_times
        self.requests: list[list[dict]] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:
                if self.path != "/score":
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length))
                items = payload["items"]
                with stub._lock:
                    if stub.fail_remaining > 0:
                        stub.fail_remaining -= 1
                        self.send_error(500, "synthetic overload")
                        return
                    stub.requests.append(items)
                if stub.body_fn is not None:
                    response = stub.body_fn(items)
                else:
                    response = {"scores": [stub.score_fn(item, i) for i, item in enumerate(items)]}
                body = json.dumps(response).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args) -> None:
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.02), daemon=True
        )

    def _default_score_fn(self, item: dict, position: int) -> dict:
        # Deterministic content-derived scores so misrouted responses show up.
        basis = float(len(item["reasoning"]))
        if self.kind == "relevance":
            return {"q_entail": basis, "d_relevance": basis / 2.0, "a_entail": basis / 4.0}
        return {"coherence": basis * 3.0}

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    @property
    def items_served(self) -> list[dict]:
        return [item for batch in self.requests for item in batch]

    def __enter__(self) -> "JudgeStub":
        self._thread.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self._server.shutdown()
        self._server.server_close()
