"""Knowledge operations and the directive grammar.

Each operation renders a versioned prompt template, sends it through a
completion backend, and parses the reply into a typed value.  Every
operation returns the parsed value together with the usage it incurred, so
the engine can account for cost without reaching into backends.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Mapping, Optional, Sequence

from .domain import (
    ActionDirective,
    ActionKind,
    KnowledgeSource,
    KnowledgeUnit,
    TraceStep,
    UsageRecord,
    derive_child_unit,
)
from .errors import (
    DecomposeTooCoarseError,
    DepthExceededError,
    DirectiveParseError,
    EmptyPathError,
    VerdictParseError,
)
from .provider import CompletionParams, Provider


def load_template(name: str) -> str:
    """Read a prompt template shipped with the package."""
    return (
        resources.files("microact.templates").joinpath(f"{name}.txt").read_text("utf-8")
    )


def _with_usage(exc: Exception, usage: UsageRecord) -> Exception:
    """Tag a post-call parse error with the usage the call already spent, so
    the engine can keep the books exact even for replies it throws away."""
    exc.usage = usage  # type: ignore[attr-defined]
    return exc


def render_template(template: str, values: Mapping[str, str]) -> str:
    """Fill ``{key}`` placeholders by literal substitution.

    Deliberately not str.format: template bodies and substituted values may
    contain braces of their own, and those must pass through untouched.
    """
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


@dataclass(frozen=True)
class ConflictVerdict:
    """Outcome of checking two knowledge units against each other."""

    delta: int  # 1 = conflict, 0 = consistent
    rationale: str

    def __post_init__(self) -> None:
        if self.delta not in (0, 1):
            raise ValueError(f"delta must be 0 or 1, got {self.delta}")


@dataclass(frozen=True)
class ReasoningPath:
    steps: tuple[str, ...]
    over_unit: str

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a reasoning path needs at least one step")


def elicit(
    question: str,
    provider: Provider,
    *,
    unit_id: str,
    params: Optional[CompletionParams] = None,
) -> tuple[KnowledgeUnit, UsageRecord]:
    """Pull the model's own knowledge about the question into a root unit."""
    if not question.strip():
        raise ValueError("cannot elicit knowledge for an empty question")
    prompt = render_template(load_template("elicit"), {"question": question})
    result = provider.complete(prompt, params)
    text = result.text.strip() or "(no recalled knowledge)"
    unit = KnowledgeUnit(
        text=text,
        source=KnowledgeSource.PARAMETRIC,
        depth=0,
        unit_id=unit_id,
    )
    return unit, result.usage


_STEP_LINE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")


def reason(
    unit: KnowledgeUnit,
    question: str,
    provider: Provider,
    *,
    params: Optional[CompletionParams] = None,
) -> tuple[ReasoningPath, UsageRecord]:
    """Ask for a numbered reasoning path over one unit."""
    prompt = render_template(
        load_template("reason"), {"question": question, "knowledge_a": unit.text}
    )
    result = provider.complete(prompt, params)
    steps = []
    for line in result.text.splitlines():
        match = _STEP_LINE.match(line)
        if match:
            steps.append(match.group(1))
    if not steps:
        raise _with_usage(
            EmptyPathError(
                f"no numbered steps found in reasoning reply over {unit.unit_id}"
            ),
            result.usage,
        )
    return ReasoningPath(steps=tuple(steps), over_unit=unit.unit_id), result.usage


def assert_conflict(
    left: KnowledgeUnit,
    right: KnowledgeUnit,
    question: str,
    provider: Provider,
    *,
    params: Optional[CompletionParams] = None,
) -> tuple[ConflictVerdict, UsageRecord]:
    """Check two units against each other; the reply's final line decides."""
    if left.unit_id == right.unit_id:
        raise ValueError(f"cannot check unit {left.unit_id} against itself")
    prompt = render_template(
        load_template("assert"),
        {
            "question": question,
            "knowledge_a": left.text,
            "knowledge_b": right.text,
        },
    )
    result = provider.complete(prompt, params)
    lines = [line.strip() for line in result.text.splitlines() if line.strip()]
    if not lines:
        raise _with_usage(VerdictParseError("empty consistency reply"), result.usage)
    final = lines[-1]
    if final == "CONFLICT":
        delta = 1
    elif final == "CONSISTENT":
        delta = 0
    else:
        raise _with_usage(
            VerdictParseError(
                f"final line {final!r} is neither CONSISTENT nor CONFLICT"
            ),
            result.usage,
        )
    rationale = "\n".join(lines[:-1]).strip()
    return ConflictVerdict(delta=delta, rationale=rationale), result.usage


_PAIR_LINE = re.compile(r"^\s*PAIR:\s*(.+?)\s*\|\|\s*(.+?)\s*$")


def decompose(
    left: KnowledgeUnit,
    right: KnowledgeUnit,
    question: str,
    provider: Provider,
    *,
    max_depth: int,
    make_unit_id: Callable[[], str],
    params: Optional[CompletionParams] = None,
) -> tuple[list[tuple[KnowledgeUnit, KnowledgeUnit]], UsageRecord]:
    """Split a conflicting pair into at least two finer unit pairs.

    The depth guard runs before any backend call: a pair already at the
    depth limit must not cost a completion.
    """
    next_depth = max(left.depth, right.depth) + 1
    if next_depth > max_depth:
        raise DepthExceededError(
            f"split of ({left.unit_id}, {right.unit_id}) would reach depth "
            f"{next_depth}, limit is {max_depth}"
        )
    prompt = render_template(
        load_template("decompose"),
        {
            "question": question,
            "knowledge_a": left.text,
            "knowledge_b": right.text,
        },
    )
    result = provider.complete(prompt, params)
    pairs: list[tuple[KnowledgeUnit, KnowledgeUnit]] = []
    for line in result.text.splitlines():
        match = _PAIR_LINE.match(line)
        if not match:
            continue
        left_child = derive_child_unit(left, match.group(1), make_unit_id())
        right_child = derive_child_unit(right, match.group(2), make_unit_id())
        pairs.append((left_child, right_child))
    if len(pairs) < 2:
        raise _with_usage(
            DecomposeTooCoarseError(
                f"split produced {len(pairs)} pair(s); at least 2 required"
            ),
            result.usage,
        )
    return pairs, result.usage


# ---------------------------------------------------------------------------
# Directive grammar: "Action: KIND[arg1 || arg2]".  Kind is case-insensitive;
# arguments are trimmed literals.

_ACTION_LINE = re.compile(r"(?im)^\s*action\s*:\s*(.+?)\s*$")
_DIRECTIVE = re.compile(r"^([A-Za-z_]+)\s*\[(.*)\]\s*$", re.S)


def parse_action_directive(raw: str, forced: bool = False) -> ActionDirective:
    """Parse the last ``Action:`` line of a model reply into a directive."""
    matches = _ACTION_LINE.findall(raw)
    if not matches:
        raise DirectiveParseError("no 'Action:' line found")
    body = matches[-1]
    directive = _DIRECTIVE.match(body)
    if not directive:
        raise DirectiveParseError(f"malformed directive {body!r}")
    kind_text = directive.group(1).upper()
    try:
        kind = ActionKind(kind_text)
    except ValueError:
        raise DirectiveParseError(f"unknown action kind {kind_text!r}") from None
    arg_text = directive.group(2).strip()
    arguments = (
        tuple(part.strip() for part in arg_text.split("||")) if arg_text else ()
    )
    if kind is ActionKind.FINISH and len(arguments) == 1:
        arguments = (arguments[0].upper(),)
    try:
        return ActionDirective(kind=kind, arguments=arguments, forced=forced)
    except ValueError as exc:
        raise DirectiveParseError(str(exc)) from None


def split_thought_action(raw: str) -> tuple[str, ActionDirective]:
    """Separate a loop reply into its thought text and parsed directive."""
    directive = parse_action_directive(raw)
    action_spans = list(_ACTION_LINE.finditer(raw))
    before = raw[: action_spans[-1].start()]
    thought_lines = re.findall(r"(?im)^\s*thought\s*:\s*(.*\S)\s*$", before)
    if thought_lines:
        thought = thought_lines[-1]
    else:
        thought = before.strip()
    return thought, directive


def render_options(options: Sequence[str]) -> str:
    """Lettered option block shared by loop and baseline prompts."""
    from .domain import option_label

    return "\n".join(
        f"{option_label(i)}. {text}" for i, text in enumerate(options)
    )


def render_history(
    steps: Sequence[TraceStep],
    units: Mapping[str, KnowledgeUnit],
    note: str = "",
) -> str:
    """Serialize accumulated units and turns for inclusion in a prompt."""
    lines = ["Knowledge units:"]
    if units:
        for unit in units.values():
            lines.append(
                f"[{unit.unit_id}] ({unit.source.value}, depth {unit.depth}) {unit.text}"
            )
    else:
        lines.append("(none yet)")
    lines.append("")
    lines.append("Transcript:")
    if steps:
        for step in steps:
            lines.append(f"Turn {step.turn}:")
            lines.append(f"Thought: {step.thought}")
            lines.append(step.action.render())
            lines.append(f"Observation: {step.observation}")
            lines.append("")
    else:
        lines.append("(no turns yet)")
        lines.append("")
    if note:
        lines.append(f"Note: {note}")
    return "\n".join(lines).rstrip("\n")
