"""Core data model: QA records, knowledge units, trajectories, and usage.

Everything here is an immutable value type.  Mutation happens by building
new values (``dataclasses.replace``), never in place, so trajectories can
be shared across threads and serialized without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

from .errors import DegenerateUnitError, LabelRangeError

ABSTAIN = "ABSTAIN"

# Closed set of conflict labels a record may carry.  Kept as plain strings
# (not an enum) because records arrive from files and validation must be
# able to hold an out-of-set value long enough to report it.
CONFLICT_TYPES = ("misinformation", "temporal", "semantic", "none")

MAX_OPTIONS = 26
MIN_OPTIONS = 2


class KnowledgeSource(str, Enum):
    PARAMETRIC = "parametric"
    RETRIEVED = "retrieved"


class ActionKind(str, Enum):
    ELICIT = "ELICIT"
    REASON = "REASON"
    ASSERT = "ASSERT"
    DECOMPOSE = "DECOMPOSE"
    FINISH = "FINISH"


def option_label(index: int) -> str:
    """Map option position 0..25 to its letter 'A'..'Z'."""
    if not 0 <= index < MAX_OPTIONS:
        raise LabelRangeError(f"option index {index} outside 0..{MAX_OPTIONS - 1}")
    return chr(ord("A") + index)


def label_to_index(label: str) -> Optional[int]:
    """Inverse of option_label; None for anything that is not one letter A-Z."""
    if len(label) == 1 and "A" <= label <= "Z":
        return ord(label) - ord("A")
    return None


@dataclass(frozen=True)
class EvidenceFragment:
    text: str
    fragment_id: str


@dataclass(frozen=True)
class DatasetRecord:
    """One multiple-choice question with its retrieved evidence."""

    id: str
    question: str
    options: tuple[str, ...]
    gold_index: int
    evidence: tuple[EvidenceFragment, ...]
    conflict_type: str
    source_dataset: str
    domain_tag: Optional[str] = None

    def evidence_text(self) -> str:
        return "\n\n".join(fragment.text for fragment in self.evidence)


def validate_record(record: DatasetRecord) -> list[str]:
    """Collect schema violations; an empty list means the record is sound.

    Each entry names the field and the broken rule so callers can surface
    them verbatim.
    """
    violations: list[str] = []
    if not record.id:
        violations.append("id: must be non-empty")
    n = len(record.options)
    if n < MIN_OPTIONS:
        violations.append(f"options: need at least {MIN_OPTIONS}, got {n}")
    elif n > MAX_OPTIONS:
        violations.append(f"options: at most {MAX_OPTIONS} allowed, got {n}")
    if len(set(record.options)) != n:
        violations.append("options: entries must be pairwise distinct")
    if not 0 <= record.gold_index < n:
        violations.append(f"gold_index: {record.gold_index} outside 0..{n - 1}")
    if record.conflict_type not in CONFLICT_TYPES:
        violations.append(f"conflict_type: unknown value {record.conflict_type!r}")
    for i, fragment in enumerate(record.evidence):
        if not fragment.text.strip():
            violations.append(f"evidence[{i}].text: must be non-empty")
    return violations


@dataclass(frozen=True)
class KnowledgeUnit:
    """A piece of knowledge under comparison, with its split lineage.

    Root units sit at depth 0 with no parent; every derived unit points at
    the unit it was split from and sits exactly one level deeper.
    """

    text: str
    source: KnowledgeSource
    depth: int
    unit_id: str
    parent_id: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.depth == 0) != (self.parent_id is None):
            raise ValueError(
                f"unit {self.unit_id}: depth {self.depth} inconsistent with "
                f"parent_id {self.parent_id!r}"
            )
        if self.depth < 0:
            raise ValueError(f"unit {self.unit_id}: negative depth")


def derive_child_unit(parent: KnowledgeUnit, text: str, unit_id: str) -> KnowledgeUnit:
    """Create a unit one level below ``parent`` carrying ``text``."""
    if not text.strip():
        raise DegenerateUnitError(
            f"child of {parent.unit_id} would carry empty text"
        )
    return KnowledgeUnit(
        text=text,
        source=parent.source,
        depth=parent.depth + 1,
        unit_id=unit_id,
        parent_id=parent.unit_id,
    )


def forest_violations(units: Mapping[str, KnowledgeUnit]) -> list[str]:
    """Check that the unit map forms a forest rooted at depth-0 units."""
    problems: list[str] = []
    for unit_id, unit in units.items():
        if unit.unit_id != unit_id:
            problems.append(f"{unit_id}: keyed under a different id")
        if unit.parent_id is None:
            continue
        parent = units.get(unit.parent_id)
        if parent is None:
            problems.append(f"{unit_id}: parent {unit.parent_id!r} missing")
        elif unit.depth != parent.depth + 1:
            problems.append(
                f"{unit_id}: depth {unit.depth} but parent depth {parent.depth}"
            )
    return problems


@dataclass(frozen=True)
class ActionDirective:
    """One parsed action: what to do, over which arguments, and whether the
    engine forced it rather than the model choosing it."""

    kind: ActionKind
    arguments: tuple[str, ...] = ()
    forced: bool = False

    def __post_init__(self) -> None:
        if self.kind is ActionKind.FINISH:
            if len(self.arguments) != 1:
                raise ValueError("FINISH takes exactly one argument")
            label = self.arguments[0]
            if label != ABSTAIN and label_to_index(label) is None:
                raise ValueError(f"FINISH argument {label!r} is not an option letter")
        elif self.kind is ActionKind.ASSERT:
            if len(self.arguments) != 2:
                raise ValueError("ASSERT takes exactly two arguments")

    def render(self) -> str:
        return f"Action: {self.kind.value}[{' || '.join(self.arguments)}]"


@dataclass(frozen=True)
class UsageRecord:
    """Token and latency accounting for one or more provider calls."""

    input_tokens: int = 0
    output_tokens: int = 0
    wall_time_ms: int = 0
    provider_calls: int = 0
    estimated: bool = False

    def __post_init__(self) -> None:
        for name in ("input_tokens", "output_tokens", "wall_time_ms", "provider_calls"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def merge(self, other: "UsageRecord") -> "UsageRecord":
        """Combine two accounts; counters add, the estimate flag is sticky."""
        return UsageRecord(
            input_tokens=self.input_tokens + other.input_tokens,
            output_tokens=self.output_tokens + other.output_tokens,
            wall_time_ms=self.wall_time_ms + other.wall_time_ms,
            provider_calls=self.provider_calls + other.provider_calls,
            estimated=self.estimated or other.estimated,
        )

    @classmethod
    def zero(cls) -> "UsageRecord":
        return cls()


@dataclass(frozen=True)
class TraceStep:
    turn: int
    thought: str
    action: ActionDirective
    observation: str
    usage: UsageRecord

    def __post_init__(self) -> None:
        if self.turn < 1:
            raise ValueError("turns are numbered from 1")


@dataclass(frozen=True)
class Trajectory:
    """The full interaction record for one question."""

    record_id: str
    steps: tuple[TraceStep, ...]
    units: Mapping[str, KnowledgeUnit]
    method: str
    solved: bool
    final_answer: Optional[str] = None
    failed: bool = False

    def usage_total(self) -> UsageRecord:
        total = UsageRecord.zero()
        for step in self.steps:
            total = total.merge(step.usage)
        return total

    def count_actions(self, kind: ActionKind) -> int:
        return sum(1 for step in self.steps if step.action.kind is kind)


# ---------------------------------------------------------------------------
# Dict conversion.  File formats live in data.py and engine.py; these helpers
# define the one canonical dict shape both sides share.

def usage_to_dict(usage: UsageRecord) -> dict[str, Any]:
    return {
        "input_tokens": usage.input_tokens,
        "output_tokens": usage.output_tokens,
        "wall_time_ms": usage.wall_time_ms,
        "provider_calls": usage.provider_calls,
        "estimated": usage.estimated,
    }


def usage_from_dict(raw: Mapping[str, Any]) -> UsageRecord:
    return UsageRecord(
        input_tokens=int(raw["input_tokens"]),
        output_tokens=int(raw["output_tokens"]),
        wall_time_ms=int(raw["wall_time_ms"]),
        provider_calls=int(raw["provider_calls"]),
        estimated=bool(raw.get("estimated", False)),
    )


def directive_to_dict(directive: ActionDirective) -> dict[str, Any]:
    return {
        "kind": directive.kind.value,
        "arguments": list(directive.arguments),
        "forced": directive.forced,
    }


def directive_from_dict(raw: Mapping[str, Any]) -> ActionDirective:
    return ActionDirective(
        kind=ActionKind(raw["kind"]),
        arguments=tuple(raw["arguments"]),
        forced=bool(raw.get("forced", False)),
    )


def step_to_dict(step: TraceStep) -> dict[str, Any]:
    return {
        "turn": step.turn,
        "thought": step.thought,
        "action": directive_to_dict(step.action),
        "observation": step.observation,
        "usage": usage_to_dict(step.usage),
    }


def step_from_dict(raw: Mapping[str, Any]) -> TraceStep:
    return TraceStep(
        turn=int(raw["turn"]),
        thought=raw["thought"],
        action=directive_from_dict(raw["action"]),
        observation=raw["observation"],
        usage=usage_from_dict(raw["usage"]),
    )


def unit_to_dict(unit: KnowledgeUnit) -> dict[str, Any]:
    return {
        "text": unit.text,
        "source": unit.source.value,
        "depth": unit.depth,
        "unit_id": unit.unit_id,
        "parent_id": unit.parent_id,
    }


def unit_from_dict(raw: Mapping[str, Any]) -> KnowledgeUnit:
    return KnowledgeUnit(
        text=raw["text"],
        source=KnowledgeSource(raw["source"]),
        depth=int(raw["depth"]),
        unit_id=raw["unit_id"],
        parent_id=raw.get("parent_id"),
    )


def trajectory_to_dict(trajectory: Trajectory) -> dict[str, Any]:
    return {
        "record_id": trajectory.record_id,
        "steps": [step_to_dict(s) for s in trajectory.steps],
        "units": {uid: unit_to_dict(u) for uid, u in trajectory.units.items()},
        "method": trajectory.method,
        "solved": trajectory.solved,
        "final_answer": trajectory.final_answer,
        "failed": trajectory.failed,
    }


def trajectory_from_dict(raw: Mapping[str, Any]) -> Trajectory:
    return Trajectory(
        record_id=raw["record_id"],
        steps=tuple(step_from_dict(s) for s in raw["steps"]),
        units={uid: unit_from_dict(u) for uid, u in raw["units"].items()},
        method=raw["method"],
        solved=bool(raw["solved"]),
        final_answer=raw.get("final_answer"),
        failed=bool(raw.get("failed", False)),
    )


def record_to_dict(record: DatasetRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "id": record.id,
        "question": record.question,
        "options": list(record.options),
        "gold_index": record.gold_index,
        "evidence": [
            {"text": f.text, "fragment_id": f.fragment_id} for f in record.evidence
        ],
        "conflict_type": record.conflict_type,
        "source_dataset": record.source_dataset,
    }
    if record.domain_tag is not None:
        out["domain_tag"] = record.domain_tag
    return out


def record_from_dict(raw: Mapping[str, Any]) -> DatasetRecord:
    return DatasetRecord(
        id=raw["id"],
        question=raw["question"],
        options=tuple(raw["options"]),
        gold_index=int(raw["gold_index"]),
        evidence=tuple(
            EvidenceFragment(text=f["text"], fragment_id=f["fragment_id"])
            for f in raw["evidence"]
        ),
        conflict_type=raw["conflict_type"],
        source_dataset=raw["source_dataset"],
        domain_tag=raw.get("domain_tag"),
    )
