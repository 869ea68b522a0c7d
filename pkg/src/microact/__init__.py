"""Agent runtime and evaluation harness for QA under knowledge conflicts.

The package drives a budgeted think-act-observe loop in which a model's
recalled knowledge is checked against retrieved evidence, conflicts are
split into finer comparisons when they are too complex to settle at once,
and the outcome is scored alongside standard single-shot prompting
strategies.
"""

from .complexity import (
    ComplexityScore,
    ScoreBasis,
    TransitionModel,
    perplexity_from_logprobs,
    score,
    should_decompose,
    simulate_transition_step,
    stopping_turn,
    verify_monotone,
)
from .domain import (
    ABSTAIN,
    ActionDirective,
    ActionKind,
    DatasetRecord,
    EvidenceFragment,
    KnowledgeSource,
    KnowledgeUnit,
    TraceStep,
    Trajectory,
    UsageRecord,
    derive_child_unit,
    option_label,
    validate_record,
)
from .engine import EngineConfig, finalize_answer, is_solved, run_trajectory
from .baselines import BaselineMethod, Phase, build_prompt, run_baseline
from .eval import (
    CostSummary,
    DecompStats,
    EvalReport,
    accuracy,
    cost_summary,
    decomposition_stats,
    extract_choice,
    over_rationalization_flag,
)
from .provider import (
    CompletionParams,
    CompletionResult,
    HttpProvider,
    ScriptedProvider,
    scripted_load,
)
from .data import bucket_by_length, load_dataset, sample_stratified

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "ActionDirective",
    "ActionKind",
    "BaselineMethod",
    "ComplexityScore",
    "CompletionParams",
    "CompletionResult",
    "CostSummary",
    "DatasetRecord",
    "DecompStats",
    "EngineConfig",
    "EvalReport",
    "EvidenceFragment",
    "HttpProvider",
    "KnowledgeSource",
    "KnowledgeUnit",
    "Phase",
    "ScoreBasis",
    "ScriptedProvider",
    "TraceStep",
    "Trajectory",
    "TransitionModel",
    "UsageRecord",
    "accuracy",
    "bucket_by_length",
    "build_prompt",
    "cost_summary",
    "decomposition_stats",
    "derive_child_unit",
    "extract_choice",
    "finalize_answer",
    "is_solved",
    "load_dataset",
    "option_label",
    "over_rationalization_flag",
    "perplexity_from_logprobs",
    "run_baseline",
    "run_trajectory",
    "sample_stratified",
    "score",
    "scripted_load",
    "should_decompose",
    "simulate_transition_step",
    "stopping_turn",
    "validate_record",
    "verify_monotone",
]
