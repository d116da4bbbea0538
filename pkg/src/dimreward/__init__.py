"""Dimension-level reasoning rewards.

Scores sampled reasoning along confidence, relevance, and coherence,
aggregates the dimensions into a per-sample reward, builds preference
datasets from scored groups, and computes group-relative advantages for
policy-gradient trainers.
"""

from .core import JudgeScores, Quadruple, Sample, SampleGroup, read_groups, write_records
from .dimensions import DimensionScores, confidence_score, relevance_scores, score_group
from .errors import (
    GroupingError,
    InputOutputError,
    JudgeError,
    RecordError,
    SchemaError,
    ToolkitError,
    ValidationError,
)
from .evaluation import SelectionReport, grid_search, select_best, selection_accuracy
from .judges import JudgeEndpointConfig, fetch_judge_scores, load_offline_scores
from .pairs import (
    PreferencePair,
    SubsetRule,
    SupervisionMethod,
    build_subsets,
    emit_dpo_dataset,
    select_pair,
    select_pairs,
)
from .reward import DEFAULT_WEIGHTS, DrmWeights, RewardRecord, drm_reward, normalize_within_group
from .rl import (
    AdvantageMode,
    AdvantageRecord,
    SurrogateInputs,
    combined_advantage,
    dpo_sft_loss,
    drm_advantage,
    group_advantage,
    kl_estimate,
    surrogate_term,
    verifier_reward,
)

__version__ = "0.1.0"

__all__ = [
    "AdvantageMode",
    "AdvantageRecord",
    "DEFAULT_WEIGHTS",
    "DimensionScores",
    "DrmWeights",
    "GroupingError",
    "InputOutputError",
    "JudgeEndpointConfig",
    "JudgeError",
    "JudgeScores",
    "PreferencePair",
    "Quadruple",
    "RecordError",
    "RewardRecord",
    "Sample",
    "SampleGroup",
    "SchemaError",
    "SelectionReport",
    "SubsetRule",
    "SupervisionMethod",
    "SurrogateInputs",
    "ToolkitError",
    "ValidationError",
    "build_subsets",
    "combined_advantage",
    "confidence_score",
    "dpo_sft_loss",
    "drm_advantage",
    "drm_reward",
    "emit_dpo_dataset",
    "fetch_judge_scores",
    "grid_search",
    "group_advantage",
    "kl_estimate",
    "load_offline_scores",
    "normalize_within_group",
    "read_groups",
    "relevance_scores",
    "score_group",
    "select_best",
    "select_pair",
    "select_pairs",
    "selection_accuracy",
    "surrogate_term",
    "verifier_reward",
    "write_records",
]
