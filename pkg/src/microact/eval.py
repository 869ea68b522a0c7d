"""Scoring and analytics over finished trajectories.

Joins trajectories back to their records, extracts committed choices,
computes accuracy per conflict stratum, measures how often and how deeply
runs decomposed, audits conflict handling with a judge model, and totals
token spend into money.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Union

from . import actions
from .complexity import ComplexityScore
from .domain import (
    ABSTAIN,
    ActionKind,
    DatasetRecord,
    KnowledgeSource,
    Trajectory,
    UsageRecord,
    label_to_index,
    option_label,
)
from .errors import JoinError, PriceMissingError, ProviderError
from .provider import CompletionParams, Provider

logger = logging.getLogger(__name__)

MAX_OPTIONS = 26


# ---------------------------------------------------------------------------
# Choice extraction.
#
# Three cues, tried in priority order; within one cue, two distinct in-range
# letters mean the reply is ambiguous and the extractor abstains.  A reply
# matching no cue also abstains.  Abstentions are counted incorrect by the
# accuracy metric, never dropped.

_ANSWER_COLON = re.compile(r"(?i)\banswer\s*:\s*\(?([A-Za-z])\)?(?![A-Za-z0-9])")
_ANSWER_IS = re.compile(
    r"(?i)\bthe\s+(?:final\s+)?answer\s+is\s*:?\s*\(?([A-Za-z])\)?(?![A-Za-z0-9])"
)
_LONE_LETTER_LINE = re.compile(r"^\(?([A-Za-z])\)?[.!]?$")


def _in_range(letter: str, n_options: int) -> Optional[str]:
    label = letter.upper()
    index = label_to_index(label)
    if index is not None and index < n_options:
        return label
    return None


def extract_choice(text: str, n_options: int) -> str:
    """Pull the committed option letter out of a model reply."""
    if not 2 <= n_options <= MAX_OPTIONS:
        raise ValueError(f"n_options must be within 2..{MAX_OPTIONS}, got {n_options}")

    cue_matches: list[list[str]] = [
        _ANSWER_COLON.findall(text),
        _ANSWER_IS.findall(text),
        [
            m.group(1)
            for m in (
                _LONE_LETTER_LINE.match(line.strip()) for line in text.splitlines()
            )
            if m
        ],
    ]
    for letters in cue_matches:
        candidates = {
            label for label in (_in_range(l, n_options) for l in letters) if label
        }
        if len(candidates) == 1:
            return candidates.pop()
        if len(candidates) > 1:
            return ABSTAIN
    return ABSTAIN


# ---------------------------------------------------------------------------
# Accuracy.

@dataclass(frozen=True)
class StratumStats:
    n: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0


@dataclass(frozen=True)
class AccuracyResult:
    n: int
    correct: int
    by_conflict: Mapping[str, StratumStats]

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0


def _record_map(records: Sequence[DatasetRecord]) -> dict[str, DatasetRecord]:
    return {record.id: record for record in records}


def _join(
    trajectories: Sequence[Trajectory], records: Sequence[DatasetRecord]
) -> list[tuple[Trajectory, DatasetRecord]]:
    by_id = _record_map(records)
    joined = []
    for trajectory in trajectories:
        record = by_id.get(trajectory.record_id)
        if record is None:
            raise JoinError(f"no record with id {trajectory.record_id!r}")
        joined.append((trajectory, record))
    return joined


def accuracy(
    trajectories: Sequence[Trajectory], records: Sequence[DatasetRecord]
) -> AccuracyResult:
    joined = _join(trajectories, records)
    total_correct = 0
    per_type: dict[str, list[int]] = {}
    for trajectory, record in joined:
        gold = option_label(record.gold_index)
        hit = int(trajectory.final_answer == gold)
        total_correct += hit
        per_type.setdefault(record.conflict_type, []).append(hit)
    by_conflict = {
        conflict: StratumStats(n=len(hits), correct=sum(hits))
        for conflict, hits in sorted(per_type.items())
    }
    return AccuracyResult(
        n=len(joined), correct=total_correct, by_conflict=by_conflict
    )


# ---------------------------------------------------------------------------
# Decomposition behaviour.

@dataclass(frozen=True)
class DecompStats:
    rate_by_bucket: Mapping[str, float]
    avg_steps_by_conflict: Mapping[str, float]
    avg_turns: float


def decomposition_stats(
    trajectories: Sequence[Trajectory],
    records: Sequence[DatasetRecord],
    scorer: Optional[Callable[[str], ComplexityScore]] = None,
) -> DecompStats:
    """How often runs split, by evidence-length bucket and conflict type."""
    from .data import BUCKET_LABELS, bucket_by_length

    joined = _join(trajectories, records)
    buckets = bucket_by_length([record for _, record in joined], scorer)
    split_flags: dict[str, list[int]] = {label: [] for label in BUCKET_LABELS}
    record_bucket = {
        record_id: label for label, ids in buckets.items() for record_id in ids
    }
    split_counts: dict[str, list[int]] = {}
    for trajectory, record in joined:
        n_splits = trajectory.count_actions(ActionKind.DECOMPOSE)
        split_flags[record_bucket[record.id]].append(int(n_splits > 0))
        split_counts.setdefault(record.conflict_type, []).append(n_splits)
    rate_by_bucket = {
        label: (sum(flags) / len(flags) if flags else 0.0)
        for label, flags in split_flags.items()
    }
    avg_steps_by_conflict = {
        conflict: sum(counts) / len(counts)
        for conflict, counts in sorted(split_counts.items())
    }
    avg_turns = (
        sum(len(t.steps) for t, _ in joined) / len(joined) if joined else 0.0
    )
    return DecompStats(
        rate_by_bucket=rate_by_bucket,
        avg_steps_by_conflict=avg_steps_by_conflict,
        avg_turns=avg_turns,
    )


# ---------------------------------------------------------------------------
# Over-rationalization audit.

def _parametric_text(trajectory: Trajectory) -> str:
    for unit in trajectory.units.values():
        if unit.source is KnowledgeSource.PARAMETRIC and unit.depth == 0:
            return unit.text
    return "(none)"


def over_rationalization_flag(
    trajectory: Trajectory,
    record: DatasetRecord,
    judge: Provider,
    params: Optional[CompletionParams] = None,
) -> bool:
    """Ask a judge model whether the trace explained a contradiction away.

    Unparseable or failed judgments leave the trajectory unflagged; the
    audit must not invent positives.
    """
    if not trajectory.steps:
        raise ValueError("cannot audit an empty trajectory")
    prompt = actions.render_template(
        actions.load_template("judge"),
        {
            "knowledge_a": _parametric_text(trajectory),
            "knowledge_b": record.evidence_text() or "(none)",
            "history": actions.render_history(trajectory.steps, trajectory.units),
        },
    )
    try:
        result = judge.complete(prompt, params)
    except ProviderError as exc:
        logger.warning("judge call failed for %s: %s", trajectory.record_id, exc)
        return False
    lines = [line.strip() for line in result.text.splitlines() if line.strip()]
    verdict = lines[-1].strip(".!").upper() if lines else ""
    if verdict == "YES":
        return True
    if verdict == "NO":
        return False
    logger.warning(
        "unparseable judge verdict for %s: %r", trajectory.record_id, verdict
    )
    return False


def over_rationalization_ratio(
    trajectories: Sequence[Trajectory],
    records: Sequence[DatasetRecord],
    judge: Provider,
    params: Optional[CompletionParams] = None,
) -> float:
    joined = _join(trajectories, records)
    if not joined:
        return 0.0
    flags = [
        over_rationalization_flag(trajectory, record, judge, params)
        for trajectory, record in joined
    ]
    return sum(flags) / len(flags)


# ---------------------------------------------------------------------------
# Cost.

@dataclass(frozen=True)
class CostSummary:
    total_input_tokens: int
    total_output_tokens: int
    total_cost: float
    avg_wall_time_ms: float
    estimated_fraction: float


def load_prices(path: Union[str, Path]) -> dict[str, dict[str, float]]:
    import json

    with Path(path).open(encoding="utf-8") as handle:
        return json.load(handle)


def cost_summary(
    usages: Sequence[UsageRecord],
    prices: Mapping[str, Mapping[str, float]],
    model_name: str,
) -> CostSummary:
    """Total exact token counts and price them for one model."""
    if model_name not in prices:
        raise PriceMissingError(f"no price entry for model {model_name!r}")
    entry = prices[model_name]
    try:
        input_price = float(entry["input_per_token"])
        output_price = float(entry["output_per_token"])
    except KeyError as exc:
        raise PriceMissingError(
            f"price entry for {model_name!r} lacks key {exc.args[0]!r}"
        ) from None
    total_in = sum(u.input_tokens for u in usages)
    total_out = sum(u.output_tokens for u in usages)
    n = len(usages)
    return CostSummary(
        total_input_tokens=total_in,
        total_output_tokens=total_out,
        total_cost=total_in * input_price + total_out * output_price,
        avg_wall_time_ms=(
            math.fsum(u.wall_time_ms for u in usages) / n if n else 0.0
        ),
        estimated_fraction=(sum(u.estimated for u in usages) / n if n else 0.0),
    )


# ---------------------------------------------------------------------------
# The assembled report.

@dataclass(frozen=True)
class EvalReport:
    method: str
    model_name: str
    n: int
    accuracy: AccuracyResult
    decomposition: DecompStats
    cost: CostSummary


def build_report(
    trajectories: Sequence[Trajectory],
    records: Sequence[DatasetRecord],
    *,
    method: str,
    model_name: str,
    prices: Mapping[str, Mapping[str, float]],
    scorer: Optional[Callable[[str], ComplexityScore]] = None,
) -> EvalReport:
    acc = accuracy(trajectories, records)
    decomp = decomposition_stats(trajectories, records, scorer)
    per_query_usage = [t.usage_total() for t in trajectories]
    cost = cost_summary(per_query_usage, prices, model_name)
    return EvalReport(
        method=method,
        model_name=model_name,
        n=len(trajectories),
        accuracy=acc,
        decomposition=decomp,
        cost=cost,
    )


def report_to_dict(report: EvalReport) -> dict[str, Any]:
    return {
        "method": report.method,
        "model_name": report.model_name,
        "n": report.n,
        "accuracy": {
            "n": report.accuracy.n,
            "correct": report.accuracy.correct,
            "accuracy": report.accuracy.accuracy,
            "by_conflict": {
                conflict: {
                    "n": stats.n,
                    "correct": stats.correct,
                    "accuracy": stats.accuracy,
                }
                for conflict, stats in report.accuracy.by_conflict.items()
            },
        },
        "decomposition": {
            "rate_by_bucket": dict(report.decomposition.rate_by_bucket),
            "avg_steps_by_conflict": dict(report.decomposition.avg_steps_by_conflict),
            "avg_turns": report.decomposition.avg_turns,
        },
        "cost": {
            "total_input_tokens": report.cost.total_input_tokens,
            "total_output_tokens": report.cost.total_output_tokens,
            "total_cost": report.cost.total_cost,
            "avg_wall_time_ms": report.cost.avg_wall_time_ms,
            "estimated_fraction": report.cost.estimated_fraction,
        },
    }


_COST_HEADERS = (
    "Method",
    "Avg. # Turns",
    "Avg. Input Tokens",
    "Avg. Output Tokens",
    "Avg. Cost (USD)",
    "Avg. Inference Time (s)",
)


def _format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(headers[col]), *(len(row[col]) for row in rows)) if rows else len(headers[col])
        for col in range(len(headers))
    ]
    def fmt(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def render_report_table(report: EvalReport) -> str:
    """Console rendering: an accuracy block and a cost block."""
    acc_headers = ["Method", "N", "Accuracy"] + [
        conflict.capitalize() for conflict in report.accuracy.by_conflict
    ]
    acc_row = [
        report.method,
        str(report.accuracy.n),
        f"{report.accuracy.accuracy:.3f}",
    ] + [
        f"{stats.accuracy:.3f}" for stats in report.accuracy.by_conflict.values()
    ]

    n = max(report.n, 1)
    cost_row = [
        report.method,
        f"{report.decomposition.avg_turns:.1f}",
        f"{report.cost.total_input_tokens / n:.1f}",
        f"{report.cost.total_output_tokens / n:.1f}",
        f"{report.cost.total_cost / n:.4f}",
        f"{report.cost.avg_wall_time_ms / 1000:.1f}",
    ]
    return (
        f"Accuracy ({report.model_name})\n"
        + _format_table(acc_headers, [acc_row])
        + f"\n\nCost ({report.model_name})\n"
        + _format_table(list(_COST_HEADERS), [cost_row])
    )
