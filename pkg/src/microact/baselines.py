"""Single- and two-call prompting strategies used for comparison runs.

Every strategy produces the same Trajectory shape the engine does, so the
whole analytics stack downstream is indifferent to how an answer was
reached.  Call budgets are fixed per strategy: one completion for the
direct strategies, two for the staged ones, and a capped handful for the
iterative one.
"""

from __future__ import annotations

import re
from enum import Enum
from typing import Optional

from .actions import load_template, render_options, render_template
from .domain import (
    ABSTAIN,
    ActionDirective,
    ActionKind,
    DatasetRecord,
    TraceStep,
    Trajectory,
    UsageRecord,
)
from .errors import MissingPhaseError, ProviderError
from .eval import extract_choice
from .provider import CompletionParams, Provider

SELF_ASK_ROUND_CAP = 5


class BaselineMethod(str, Enum):
    END_TO_END = "end_to_end"
    FEW_SHOT = "few_shot"
    COT = "cot"
    SELF_ASK = "self_ask"
    COMPARATIVE = "comparative"
    GKP = "gkp"


class Phase(str, Enum):
    GENERATION = "generation"
    ANSWERING = "answering"
    CLOSED_BOOK = "closed_book"
    RECONCILE = "reconcile"


_PHASES = {
    BaselineMethod.GKP: (Phase.GENERATION, Phase.ANSWERING),
    BaselineMethod.COMPARATIVE: (Phase.CLOSED_BOOK, Phase.RECONCILE),
}

# Placeholder carrying the first call's output into the second call.
_CARRY_KEYS = {
    Phase.ANSWERING: "knowledge",
    Phase.RECONCILE: "closed_book_answer",
}

_FINAL_MARKER = re.compile(r"(?i)\bfinal answer is\b")


def build_prompt(
    method: BaselineMethod,
    record: DatasetRecord,
    phase: Optional[Phase] = None,
    carry: str = "",
) -> str:
    """Render the exact prompt for a strategy (and phase, where staged).

    ``carry`` is the verbatim first-phase output a second-phase prompt
    embeds; it is ignored by single-call strategies.
    """
    values = {
        "question": record.question,
        "options": render_options(record.options),
        "evidence": record.evidence_text(),
    }
    if method in _PHASES:
        valid = _PHASES[method]
        if phase is None:
            raise MissingPhaseError(
                f"{method.value} needs a phase: {' or '.join(p.value for p in valid)}"
            )
        if phase not in valid:
            raise MissingPhaseError(
                f"phase {phase.value!r} is not a {method.value} phase"
            )
        template = load_template(f"baseline_{method.value}_{phase.value}")
        if phase in _CARRY_KEYS:
            values[_CARRY_KEYS[phase]] = carry
        return render_template(template, values)
    if method is BaselineMethod.FEW_SHOT:
        values["exemplars"] = load_template("few_shot_exemplars").strip()
    return render_template(load_template(f"baseline_{method.value}"), values)


def _step(turn: int, directive: ActionDirective, reply: str, usage: UsageRecord) -> TraceStep:
    return TraceStep(
        turn=turn, thought="", action=directive, observation=reply, usage=usage
    )


def _intermediate(tag: str) -> ActionDirective:
    return ActionDirective(kind=ActionKind.REASON, arguments=(tag,))


def _final_directive(label: str) -> ActionDirective:
    if label == ABSTAIN:
        return _intermediate("no_extractable_answer")
    return ActionDirective(kind=ActionKind.FINISH, arguments=(label,))


def _failed(record: DatasetRecord, method: BaselineMethod, steps: list[TraceStep]) -> Trajectory:
    return Trajectory(
        record_id=record.id,
        steps=tuple(steps),
        units={},
        method=method.value,
        solved=False,
        final_answer=ABSTAIN,
        failed=True,
    )


def run_baseline(
    method: BaselineMethod,
    record: DatasetRecord,
    provider: Provider,
    params: Optional[CompletionParams] = None,
    round_cap: int = SELF_ASK_ROUND_CAP,
) -> Trajectory:
    """Run one record through a strategy and wrap the calls as a trajectory."""
    if method is BaselineMethod.SELF_ASK:
        return _run_self_ask(record, provider, params, round_cap)
    if method in _PHASES:
        return _run_two_phase(method, record, provider, params)
    return _run_single(method, record, provider, params)


def _finish(
    record: DatasetRecord,
    method: BaselineMethod,
    steps: list[TraceStep],
    label: str,
) -> Trajectory:
    return Trajectory(
        record_id=record.id,
        steps=tuple(steps),
        units={},
        method=method.value,
        solved=label != ABSTAIN,
        final_answer=label,
        failed=False,
    )


def _run_single(
    method: BaselineMethod,
    record: DatasetRecord,
    provider: Provider,
    params: Optional[CompletionParams],
) -> Trajectory:
    prompt = build_prompt(method, record)
    try:
        result = provider.complete(prompt, params)
    except ProviderError:
        return _failed(record, method, [])
    label = extract_choice(result.text, len(record.options))
    step = _step(1, _final_directive(label), result.text, result.usage)
    return _finish(record, method, [step], label)


def _run_two_phase(
    method: BaselineMethod,
    record: DatasetRecord,
    provider: Provider,
    params: Optional[CompletionParams],
) -> Trajectory:
    first_phase, second_phase = _PHASES[method]
    steps: list[TraceStep] = []
    try:
        first = provider.complete(build_prompt(method, record, first_phase), params)
    except ProviderError:
        return _failed(record, method, steps)
    steps.append(_step(1, _intermediate(first_phase.value), first.text, first.usage))
    try:
        second = provider.complete(
            build_prompt(method, record, second_phase, carry=first.text), params
        )
    except ProviderError:
        return _failed(record, method, steps)
    label = extract_choice(second.text, len(record.options))
    steps.append(_step(2, _final_directive(label), second.text, second.usage))
    return _finish(record, method, steps, label)


def _run_self_ask(
    record: DatasetRecord,
    provider: Provider,
    params: Optional[CompletionParams],
    round_cap: int,
) -> Trajectory:
    if round_cap < 1:
        raise ValueError("round_cap must be at least 1")
    method = BaselineMethod.SELF_ASK
    prompt = build_prompt(method, record)
    transcript = prompt
    steps: list[TraceStep] = []
    for round_no in range(1, round_cap + 1):
        try:
            result = provider.complete(transcript, params)
        except ProviderError:
            return _failed(record, method, steps)
        is_last = round_no == round_cap or bool(_FINAL_MARKER.search(result.text))
        if is_last:
            label = extract_choice(result.text, len(record.options))
            steps.append(_step(round_no, _final_directive(label), result.text, result.usage))
            return _finish(record, method, steps, label)
        steps.append(
            _step(round_no, _intermediate("follow_up"), result.text, result.usage)
        )
        transcript = (
            transcript
            + "\n"
            + result.text
            + "\n\nContinue. Answer your open follow-up question, then either "
            'ask another follow-up or close with "So the final answer is: X".'
        )
    raise AssertionError("unreachable")  # pragma: no cover
