"""Command-line pipeline: score, build-pairs, advantages, grid-search,
eval-select.

Options resolve as flags > config file (TOML) > defaults.  Every command is
deterministic given input bytes, config, and seed; outputs are canonically
ordered and serialized.  Exit codes: 0 ok, 2 I/O, 3 schema, 4 judge,
5 validation.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Iterator, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

from .core import SampleGroup, read_groups, sample_to_record, write_records
from .dimensions import score_group
from .errors import JudgeError, ToolkitError, ValidationError
from .evaluation import grid_search, selection_accuracy
from .judges import JudgeEndpointConfig, fetch_judge_scores, load_offline_scores
from .pairs import (
    SubsetRule,
    SupervisionMethod,
    build_subsets,
    construction_name,
    emit_dpo_dataset,
    select_pairs,
)
from .reward import DEFAULT_WEIGHTS, DrmWeights, drm_reward
from .rl import AdvantageMode, combined_advantage

__all__ = ["main", "build_parser", "RunConfig"]


@dataclass(slots=True)
class RunConfig:
    """Resolved settings for one command invocation."""

    input_path: str
    output_path: str | None
    weights: DrmWeights
    workers: int
    seed: int
    rule: SubsetRule
    method_kind: str
    mode: AdvantageMode
    step: float
    relevance: JudgeEndpointConfig | None
    coherence: JudgeEndpointConfig | None
    offline_scores: str | None
    coherence_with_answer: bool
    manifest_path: str | None
    csv_path: str | None
    pairs_per_instance: int


def _load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    with open(path, "rb") as handle:
        return tomllib.load(handle)


def _endpoint_from_table(table: dict[str, Any] | None) -> JudgeEndpointConfig | None:
    if not table:
        return None
    if "base_url" not in table:
        raise ValidationError("judge endpoint config needs a base_url")
    return JudgeEndpointConfig(
        base_url=str(table["base_url"]),
        timeout=float(table.get("timeout", 30.0)),
        max_in_flight=int(table.get("max_in_flight", 4)),
        max_retries=int(table.get("max_retries", 3)),
        batch_size=int(table.get("batch_size", 16)),
        backoff_base=float(table.get("backoff_base", 0.25)),
    )


def _parse_weights_value(value: Any) -> DrmWeights:
    if isinstance(value, str):
        return DrmWeights.parse(value)
    if isinstance(value, (list, tuple)) and len(value) == 3:
        return DrmWeights(*(float(v) for v in value))
    raise ValidationError(f"cannot interpret weights value {value!r}")


def _resolve(args: argparse.Namespace) -> RunConfig:
    file_cfg = _load_config_file(getattr(args, "config", None))

    def pick(flag_name: str, file_key: str, default: Any) -> Any:
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        if file_key in file_cfg:
            return file_cfg[file_key]
        return default

    weights_raw = pick("weights", "weights", None)
    weights = _parse_weights_value(weights_raw) if weights_raw is not None else DEFAULT_WEIGHTS

    judge_cfg = file_cfg.get("judge", {})
    relevance = _endpoint_from_table(judge_cfg.get("relevance"))
    coherence = _endpoint_from_table(judge_cfg.get("coherence"))
    relevance_url = getattr(args, "relevance_url", None)
    coherence_url = getattr(args, "coherence_url", None)
    if relevance_url:
        base = relevance or JudgeEndpointConfig(base_url=relevance_url)
        relevance = JudgeEndpointConfig(
            base_url=relevance_url,
            timeout=base.timeout,
            max_in_flight=base.max_in_flight,
            max_retries=base.max_retries,
            batch_size=base.batch_size,
            backoff_base=base.backoff_base,
        )
    if coherence_url:
        base = coherence or JudgeEndpointConfig(base_url=coherence_url)
        coherence = JudgeEndpointConfig(
            base_url=coherence_url,
            timeout=base.timeout,
            max_in_flight=base.max_in_flight,
            max_retries=base.max_retries,
            batch_size=base.batch_size,
            backoff_base=base.backoff_base,
        )

    workers = int(pick("workers", "workers", 1))
    if workers < 1:
        raise ValidationError(f"--workers must be >= 1, got {workers}")
    step = float(pick("step", "step", 0.1))

    return RunConfig(
        input_path=args.input,
        output_path=getattr(args, "output", None),
        weights=weights,
        workers=workers,
        seed=int(pick("seed", "seed", 0)),
        rule=SubsetRule.parse(str(pick("rule", "rule", "any"))),
        method_kind=str(pick("method", "method", "drm")).lower(),
        mode=AdvantageMode.parse(str(pick("mode", "mode", "combined"))),
        step=step,
        relevance=relevance,
        coherence=coherence,
        offline_scores=pick("offline_scores", "offline_scores", None),
        coherence_with_answer=bool(pick("coherence_with_answer", "coherence_with_answer", False)),
        manifest_path=getattr(args, "manifest", None),
        csv_path=getattr(args, "csv", None),
        pairs_per_instance=int(pick("pairs_per_instance", "pairs_per_instance", 1)),
    )


def _read_input(path: str) -> list[SampleGroup]:
    if path == "-":
        return list(read_groups(sys.stdin))
    with open(path, "r", encoding="utf-8") as handle:
        return list(read_groups(handle))


@contextlib.contextmanager
def _open_output(path: str | None) -> Iterator[IO[bytes]]:
    if path is None or path == "-":
        yield sys.stdout.buffer
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as handle:
            yield handle


def _write_json_doc(obj: Any, path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, ensure_ascii=False, allow_nan=False, indent=2) + "\n"
    with _open_output(path) as sink:
        sink.write(text.encode("utf-8"))


def _ensure_scored(groups: list[SampleGroup], cfg: RunConfig) -> list[SampleGroup]:
    """Fill missing judge scores from the configured source, if any."""
    missing = any(s.judge is None for g in groups for s in g.samples)
    if not missing:
        return groups
    endpoints = cfg.relevance is not None and cfg.coherence is not None
    if endpoints and cfg.offline_scores:
        raise ValidationError("configure either judge endpoints or an offline score file, not both")
    if cfg.offline_scores:
        return load_offline_scores(groups, cfg.offline_scores)
    if endpoints:
        return fetch_judge_scores(
            groups, cfg.relevance, cfg.coherence, coherence_with_answer=cfg.coherence_with_answer
        )
    if cfg.relevance is not None or cfg.coherence is not None:
        raise ValidationError("both judge endpoints (relevance and coherence) must be configured")
    raise JudgeError("samples are missing judge scores and no judge source is configured")


def _map_groups(groups: list[SampleGroup], fn, workers: int) -> list:
    if workers == 1:
        return [fn(g) for g in groups]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, groups))


def cmd_score(cfg: RunConfig) -> int:
    groups = _ensure_scored(_read_input(cfg.input_path), cfg)

    def score_one(group: SampleGroup) -> list[dict]:
        records = drm_reward(score_group(group), cfg.weights, instance_id=group.instance_id)
        return [
            sample_to_record(
                group.instance_id,
                group.samples[r.index],
                extra={
                    "index": r.index,
                    "dims_raw": r.dims_raw.to_record(),
                    "dims_norm": r.dims_norm.to_record(),
                    "drm_reward": r.drm_reward,
                },
            )
            for r in records
        ]

    per_group = _map_groups(groups, score_one, cfg.workers)
    records = [record for chunk in per_group for record in chunk]
    records.sort(key=lambda r: (r["instance_id"], r["index"]))
    with _open_output(cfg.output_path) as sink:
        count = write_records(records, sink)
    print(f"groups={len(groups)} samples={count} failures=0", file=sys.stderr)
    return 0


def cmd_build_pairs(cfg: RunConfig) -> int:
    groups = _read_input(cfg.input_path)
    method = SupervisionMethod.drm() if cfg.method_kind == "drm" else SupervisionMethod.rlvr(cfg.seed)

    pairs = []
    groups_with_pairs = 0
    for group in groups:
        scored = all(s.judge is not None for s in group.samples)
        if method.kind == "drm" and not scored:
            raise ValidationError(
                f"instance {group.instance_id!r}: drm pair selection needs judge scores on every sample"
            )
        rewards = None
        if scored:
            rewards = [r.drm_reward for r in drm_reward(score_group(group), cfg.weights, group.instance_id)]
        pools = build_subsets(group, cfg.rule)
        selected = select_pairs(group, pools, method, rewards, rule=cfg.rule, count=cfg.pairs_per_instance)
        groups_with_pairs += bool(selected)
        pairs.extend(selected)

    with _open_output(cfg.output_path) as sink:
        count = emit_dpo_dataset(pairs, groups, sink)

    manifest = {
        "construction": construction_name(method, cfg.rule),
        "groups": len(groups),
        "pairs": count,
        "pairs_per_instance": cfg.pairs_per_instance,
        "skipped": len(groups) - groups_with_pairs,
        "seed": method.seed,
        "weights": cfg.weights.to_record(),
    }
    manifest_path = cfg.manifest_path
    if manifest_path is None and cfg.output_path not in (None, "-"):
        manifest_path = str(Path(cfg.output_path).with_suffix(".manifest.json"))
    if manifest_path is not None:
        _write_json_doc(manifest, manifest_path)
    if count == 0:
        print(f"warning: {manifest['construction']} produced no pairs", file=sys.stderr)
    print(f"groups={len(groups)} pairs={count} skipped={manifest['skipped']}", file=sys.stderr)
    return 0


def cmd_advantages(cfg: RunConfig) -> int:
    groups = _read_input(cfg.input_path)
    needs_scores = cfg.mode in (AdvantageMode.DRM, AdvantageMode.COMBINED)

    def advantages_one(group: SampleGroup) -> list[dict]:
        labels = [s.correct for s in group.samples]
        scores = score_group(group) if needs_scores else None
        records = combined_advantage(cfg.mode, labels, scores, cfg.weights, instance_id=group.instance_id)
        return [r.to_record() for r in records]

    per_group = _map_groups(groups, advantages_one, cfg.workers)
    records = [record for chunk in per_group for record in chunk]
    records.sort(key=lambda r: (r["instance_id"], r["index"]))
    with _open_output(cfg.output_path) as sink:
        count = write_records(records, sink)
    print(f"groups={len(groups)} samples={count} mode={cfg.mode.value}", file=sys.stderr)
    return 0


def _grid_csv(table: dict[tuple[float, float, float], float]) -> str:
    lines = ["w_conf,w_rel,w_coh,accuracy"]
    lines += [f"{w[0]!r},{w[1]!r},{w[2]!r},{acc!r}" for w, acc in table.items()]
    return "\n".join(lines) + "\n"


def cmd_grid_search(cfg: RunConfig) -> int:
    groups = _read_input(cfg.input_path)
    best, table = grid_search(groups, cfg.step)
    baseline = selection_accuracy(groups, best).baseline_random
    report = {
        "step": cfg.step,
        "n_instances": len(groups),
        "baseline_random": baseline,
        "best_weights": best.to_record(),
        "best_accuracy": table[best.as_tuple()],
        "table": [
            {"w_conf": w[0], "w_rel": w[1], "w_coh": w[2], "accuracy": acc} for w, acc in table.items()
        ],
    }
    _write_json_doc(report, cfg.output_path)
    if cfg.csv_path is not None:
        with open(cfg.csv_path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(_grid_csv(table))
    print(
        f"grid points={len(table)} best=({best.w_conf!r},{best.w_rel!r},{best.w_coh!r}) "
        f"accuracy={report['best_accuracy']!r}",
        file=sys.stderr,
    )
    return 0


def cmd_eval_select(cfg: RunConfig) -> int:
    groups = _read_input(cfg.input_path)
    report = selection_accuracy(groups, cfg.weights)
    _write_json_doc(report.to_record(), cfg.output_path)
    print(f"instances={report.n_instances} accuracy={report.accuracy!r}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dimreward",
        description="Dimension-level reasoning rewards: scoring, preference pairs, and advantages.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--input", required=True, help="input sample JSONL ('-' for stdin)")
        p.add_argument("--output", default=None, help="output path (default: stdout)")
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("--workers", type=int, default=None, help="parallel workers over groups")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized selection")
        p.add_argument("--weights", default=None, help="w_conf,w_rel,w_coh (must sum to 1)")

    p_score = sub.add_parser("score", help="attach judge scores and compute rewards")
    common(p_score)
    p_score.add_argument("--offline-scores", dest="offline_scores", default=None, help="JSONL judge-score file")
    p_score.add_argument("--relevance-url", dest="relevance_url", default=None, help="relevance judge base URL")
    p_score.add_argument("--coherence-url", dest="coherence_url", default=None, help="coherence judge base URL")

    p_pairs = sub.add_parser("build-pairs", help="construct a DPO preference dataset")
    common(p_pairs)
    p_pairs.add_argument("--rule", default=None, choices=[r.value for r in SubsetRule], help="subset rule")
    p_pairs.add_argument("--method", default=None, choices=["drm", "rlvr"], help="supervision method")
    p_pairs.add_argument("--manifest", default=None, help="manifest path (default: <output>.manifest.json)")
    p_pairs.add_argument(
        "--pairs-per-instance",
        dest="pairs_per_instance",
        type=int,
        default=None,
        help="pairs to extract per group (samples are not reused)",
    )

    p_adv = sub.add_parser("advantages", help="compute group-relative advantages")
    common(p_adv)
    p_adv.add_argument("--mode", default=None, choices=[m.value for m in AdvantageMode], help="advantage mode")

    p_grid = sub.add_parser("grid-search", help="sweep simplex weights for selection accuracy")
    common(p_grid)
    p_grid.add_argument("--step", type=float, default=None, help="simplex resolution (1/step integral)")
    p_grid.add_argument("--csv", default=None, help="also write the accuracy table as CSV")

    p_eval = sub.add_parser("eval-select", help="best-of-group selection accuracy report")
    common(p_eval)

    return parser


_COMMANDS = {
    "score": cmd_score,
    "build-pairs": cmd_build_pairs,
    "advantages": cmd_advantages,
    "grid-search": cmd_grid_search,
    "eval-select": cmd_eval_select,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
