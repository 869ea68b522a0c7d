"""The trajectory engine: a budgeted think-act-observe loop.

Each run opens by recalling the model's own knowledge and registering the
retrieved evidence as knowledge units, then loops: the model proposes a
thought and one action, the engine executes the action and appends the
observation.  When a conflict check comes back positive on a pair whose
complexity exceeds the configured threshold, the engine forces the next
action to be a split of that pair, provided the depth limit allows it and
an earlier split of the same branch has not already failed to simplify.
The loop ends when the model commits an answer or the turn budget runs out;
in the latter case one fallback call extracts a final answer from the
accumulated history.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union
from concurrent.futures import ThreadPoolExecutor

from . import actions
from .complexity import ComplexityScore, ScoreBasis, should_decompose, verify_monotone
from .domain import (
    ABSTAIN,
    ActionDirective,
    ActionKind,
    DatasetRecord,
    KnowledgeSource,
    KnowledgeUnit,
    TraceStep,
    Trajectory,
    UsageRecord,
    label_to_index,
    trajectory_from_dict,
    trajectory_to_dict,
)
from .errors import (
    BasisMismatchError,
    DecomposeTooCoarseError,
    DepthExceededError,
    DirectiveParseError,
    EmptyPathError,
    ProviderError,
    VerdictParseError,
)
from .eval import extract_choice
from .provider import CompletionParams, Provider

OPENING_THOUGHT = (
    "I should first recall what I already know about this question and "
    "line it up against the retrieved evidence."
)
FORCED_SPLIT_THOUGHT = (
    "The conflicting pair is too complex to settle at once, so it must be "
    "split into finer comparisons."
)


@dataclass(frozen=True)
class EngineConfig:
    turn_budget: int = 10
    max_depth: int = 4
    threshold: ComplexityScore = field(
        default_factory=lambda: ComplexityScore(100.0, ScoreBasis.TOKEN_LENGTH)
    )
    force_split_enabled: bool = True
    method: str = "micro_act"

    def __post_init__(self) -> None:
        if self.turn_budget < 1:
            raise ValueError("turn_budget must be at least 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")


Scorer = Callable[[str], ComplexityScore]


def default_scorer(text: str) -> ComplexityScore:
    return ComplexityScore(float(len(text.split())), ScoreBasis.TOKEN_LENGTH)


def pair_text(left: KnowledgeUnit, right: KnowledgeUnit) -> str:
    """The text whose complexity decides whether a pair must be split."""
    return left.text + "\n" + right.text


render_history = actions.render_history


def is_solved(trajectory: Trajectory, n_options: Optional[int] = None) -> bool:
    """True when the last step commits a valid option letter."""
    if not trajectory.steps:
        return False
    last = trajectory.steps[-1]
    if last.action.kind is not ActionKind.FINISH:
        return False
    index = label_to_index(last.action.arguments[0])
    if index is None:
        return False
    return n_options is None or index < n_options


def finalize_answer(
    record: DatasetRecord,
    steps: Sequence[TraceStep],
    units: Mapping[str, KnowledgeUnit],
    provider: Provider,
    params: Optional[CompletionParams] = None,
) -> tuple[str, UsageRecord]:
    """One fallback call that commits an answer from the history.

    A dead backend yields ABSTAIN at zero cost rather than an exception;
    budget exhaustion must never crash a run.
    """
    prompt = actions.render_template(
        actions.load_template("final_answer"),
        {
            "question": record.question,
            "options": actions.render_options(record.options),
            "history": render_history(steps, units),
        },
    )
    try:
        result = provider.complete(prompt, params)
    except ProviderError:
        return ABSTAIN, UsageRecord.zero()
    label = extract_choice(result.text, len(record.options))
    return label, result.usage


class _Run:
    """Mutable state for one trajectory; exists only inside run_trajectory."""

    def __init__(
        self,
        record: DatasetRecord,
        config: EngineConfig,
        provider: Provider,
        scorer: Scorer,
        params: Optional[CompletionParams],
    ) -> None:
        self.record = record
        self.config = config
        self.provider = provider
        self.scorer = scorer
        self.params = params
        self._ids = itertools.count(1)
        self.units: dict[str, KnowledgeUnit] = {}
        self.steps: list[TraceStep] = []
        self.suppressed: set[str] = set()
        self.pending_force: Optional[tuple[str, str]] = None
        self.note = ""
        self.failed = False
        self.solved = False
        self.final_label: Optional[str] = None

    def next_id(self) -> str:
        return f"u{next(self._ids)}"

    def add_unit(self, unit: KnowledgeUnit) -> None:
        self.units[unit.unit_id] = unit

    def record_step(
        self,
        turn: int,
        thought: str,
        directive: ActionDirective,
        observation: str,
        usage: UsageRecord,
    ) -> None:
        self.steps.append(
            TraceStep(
                turn=turn,
                thought=thought,
                action=directive,
                observation=observation,
                usage=usage,
            )
        )

    # -- opening moves ------------------------------------------------------

    def open(self) -> bool:
        """Recall parametric knowledge and register the evidence.

        Returns False when the very first call already fails; the caller
        then produces an empty failed trajectory.
        """
        try:
            unit, usage = actions.elicit(
                self.record.question,
                self.provider,
                unit_id=self.next_id(),
                params=self.params,
            )
        except ProviderError:
            self.failed = True
            return False
        self.add_unit(unit)
        observation = [f"Recalled knowledge stored as [{unit.unit_id}]: {unit.text}"]
        evidence_ids = []
        for fragment in self.record.evidence:
            ev_unit = KnowledgeUnit(
                text=fragment.text,
                source=KnowledgeSource.RETRIEVED,
                depth=0,
                unit_id=self.next_id(),
            )
            self.add_unit(ev_unit)
            evidence_ids.append(ev_unit.unit_id)
        if evidence_ids:
            observation.append(
                "Retrieved evidence stored as "
                + ", ".join(f"[{uid}]" for uid in evidence_ids)
                + "."
            )
        self.record_step(
            turn=1,
            thought=OPENING_THOUGHT,
            directive=ActionDirective(kind=ActionKind.ELICIT),
            observation="\n".join(observation),
            usage=usage,
        )
        return True

    # -- the loop body ------------------------------------------------------

    def ask_for_directive(self) -> Optional[tuple[str, ActionDirective, UsageRecord]]:
        prompt = actions.render_template(
            actions.load_template("thought_action"),
            {
                "question": self.record.question,
                "options": actions.render_options(self.record.options),
                "history": render_history(self.steps, self.units, self.note),
            },
        )
        self.note = ""
        result = self.provider.complete(prompt, self.params)
        try:
            thought, directive = actions.split_thought_action(result.text)
        except DirectiveParseError as exc:
            self.note = (
                f"your previous reply could not be parsed ({exc}); reply with "
                "exactly one Thought line and one Action line"
            )
            self.absorb_usage(result.usage)
            return None
        return thought, directive, result.usage

    def absorb_usage(self, usage: UsageRecord) -> None:
        """Merge the cost of a call that produced no step into the last step,
        so totals stay exact even for wasted completions."""
        if not self.steps:
            return
        last = self.steps[-1]
        self.steps[-1] = replace(last, usage=last.usage.merge(usage))

    def abort(self, turn: int, thought: str, directive: ActionDirective,
              base_usage: UsageRecord) -> None:
        """Record the step whose action call killed the backend, then stop."""
        self.record_step(
            turn, thought, directive,
            "ERROR: completion backend failed; run aborted.", base_usage,
        )
        self.failed = True

    def resolve(self, unit_id: str) -> Optional[KnowledgeUnit]:
        return self.units.get(unit_id)

    def unknown_unit_observation(self, unit_id: str) -> str:
        known = ", ".join(self.units)
        return f"ERROR: unknown unit id '{unit_id}'. Known units: {known}."

    def execute(
        self, turn: int, thought: str, directive: ActionDirective, base_usage: UsageRecord
    ) -> None:
        """Run one directive and record the resulting step."""
        kind = directive.kind
        if kind is ActionKind.FINISH:
            label = directive.arguments[0]
            index = label_to_index(label)
            if index is not None and index < len(self.record.options):
                self.solved = True
                self.final_label = label
                observation = f"Committed final answer: {label}"
            else:
                observation = (
                    f"Committed final answer: {label} (not a listed option; "
                    "choose one of the lettered options)"
                )
            self.record_step(turn, thought, directive, observation, base_usage)
            return

        if kind is ActionKind.ELICIT:
            try:
                unit, usage = actions.elicit(
                    self.record.question,
                    self.provider,
                    unit_id=self.next_id(),
                    params=self.params,
                )
            except ProviderError:
                self.abort(turn, thought, directive, base_usage)
                return
            self.add_unit(unit)
            observation = f"Recalled knowledge stored as [{unit.unit_id}]: {unit.text}"
            self.record_step(turn, thought, directive, observation, base_usage.merge(usage))
            return

        if kind is ActionKind.REASON:
            if len(directive.arguments) != 1:
                self.record_step(
                    turn, thought, directive,
                    "ERROR: REASON takes exactly one unit id.", base_usage,
                )
                return
            unit = self.resolve(directive.arguments[0])
            if unit is None:
                self.record_step(
                    turn, thought, directive,
                    self.unknown_unit_observation(directive.arguments[0]), base_usage,
                )
                return
            try:
                path, usage = actions.reason(
                    unit, self.record.question, self.provider, params=self.params
                )
            except EmptyPathError as exc:
                self.record_step(
                    turn, thought, directive,
                    f"ERROR: {exc}", base_usage.merge(_usage_of(exc)),
                )
                return
            except ProviderError:
                self.abort(turn, thought, directive, base_usage)
                return
            numbered = "\n".join(
                f"{i}. {step}" for i, step in enumerate(path.steps, start=1)
            )
            if unit.depth + 1 <= self.config.max_depth:
                derived = actions.derive_child_unit(
                    unit, "\n".join(path.steps), self.next_id()
                )
                self.add_unit(derived)
                observation = (
                    f"Reasoning over [{unit.unit_id}] stored as [{derived.unit_id}]:\n"
                    + numbered
                )
            else:
                observation = f"Reasoning over [{unit.unit_id}]:\n{numbered}"
            self.record_step(turn, thought, directive, observation, base_usage.merge(usage))
            return

        if kind is ActionKind.ASSERT:
            left = self.resolve(directive.arguments[0])
            right = self.resolve(directive.arguments[1])
            if left is None or right is None:
                missing = directive.arguments[0] if left is None else directive.arguments[1]
                self.record_step(
                    turn, thought, directive,
                    self.unknown_unit_observation(missing), base_usage,
                )
                return
            if left.unit_id == right.unit_id:
                self.record_step(
                    turn, thought, directive,
                    "ERROR: cannot check a unit against itself.", base_usage,
                )
                return
            try:
                verdict, usage = actions.assert_conflict(
                    left, right, self.record.question, self.provider, params=self.params
                )
            except VerdictParseError as exc:
                self.record_step(
                    turn, thought, directive,
                    f"ERROR: {exc}", base_usage.merge(_usage_of(exc)),
                )
                return
            except ProviderError:
                self.abort(turn, thought, directive, base_usage)
                return
            word = "CONFLICT" if verdict.delta else "CONSISTENT"
            observation = f"Verdict: {word}."
            if verdict.rationale:
                observation += f" {verdict.rationale}"
            self.record_step(turn, thought, directive, observation, base_usage.merge(usage))
            if verdict.delta == 1:
                self.consider_forcing(left, right)
            return

        if kind is ActionKind.DECOMPOSE:
            if len(directive.arguments) != 2:
                self.record_step(
                    turn, thought, directive,
                    "ERROR: DECOMPOSE takes exactly two unit ids.", base_usage,
                )
                return
            left = self.resolve(directive.arguments[0])
            right = self.resolve(directive.arguments[1])
            if left is None or right is None:
                missing = directive.arguments[0] if left is None else directive.arguments[1]
                self.record_step(
                    turn, thought, directive,
                    self.unknown_unit_observation(missing), base_usage,
                )
                return
            if left.unit_id in self.suppressed or right.unit_id in self.suppressed:
                self.record_step(
                    turn, thought, directive,
                    "No finer split is allowed on this pair; an earlier split "
                    "failed to reduce its complexity.",
                    base_usage,
                )
                return
            try:
                pairs, usage = actions.decompose(
                    left,
                    right,
                    self.record.question,
                    self.provider,
                    max_depth=self.config.max_depth,
                    make_unit_id=self.next_id,
                    params=self.params,
                )
            except DepthExceededError:
                self.record_step(
                    turn, thought, directive,
                    "Depth limit reached; this pair cannot be split further.",
                    base_usage,
                )
                return
            except DecomposeTooCoarseError as exc:
                self.record_step(
                    turn, thought, directive,
                    f"ERROR: {exc}", base_usage.merge(_usage_of(exc)),
                )
                return
            except ProviderError:
                self.abort(turn, thought, directive, base_usage)
                return
            pair_lines = []
            for child_left, child_right in pairs:
                self.add_unit(child_left)
                self.add_unit(child_right)
                pair_lines.append(
                    f"[{child_left.unit_id}] {child_left.text} || "
                    f"[{child_right.unit_id}] {child_right.text}"
                )
            observation = (
                f"Split into {len(pairs)} finer pairs:\n" + "\n".join(pair_lines)
            )
            observation += self.check_monotone(left, right, pairs)
            self.record_step(turn, thought, directive, observation, base_usage.merge(usage))
            return

        raise AssertionError(f"unhandled action kind {kind}")  # pragma: no cover

    def consider_forcing(self, left: KnowledgeUnit, right: KnowledgeUnit) -> None:
        """Arm a forced split of a conflicting pair when the gate passes."""
        if not self.config.force_split_enabled:
            return
        if max(left.depth, right.depth) + 1 > self.config.max_depth:
            return
        if left.unit_id in self.suppressed or right.unit_id in self.suppressed:
            return
        try:
            complexity = self.scorer(pair_text(left, right))
            if should_decompose(complexity, self.config.threshold):
                self.pending_force = (left.unit_id, right.unit_id)
        except BasisMismatchError:
            # Scorer fell back to a different basis than the threshold; the
            # comparison is meaningless, so do not force.
            return

    def check_monotone(
        self,
        left: KnowledgeUnit,
        right: KnowledgeUnit,
        pairs: Sequence[tuple[KnowledgeUnit, KnowledgeUnit]],
    ) -> str:
        """Suppress branches that did not get simpler; returns an
        observation suffix naming them."""
        try:
            parent_score = self.scorer(pair_text(left, right))
            child_scores = [self.scorer(pair_text(l, r)) for l, r in pairs]
            verdict = verify_monotone(parent_score, child_scores)
        except BasisMismatchError:
            return ""
        if verdict.ok:
            return ""
        flagged = []
        for (child_left, child_right), child_score in zip(pairs, child_scores):
            if not child_score.value < parent_score.value:
                self.suppressed.add(child_left.unit_id)
                self.suppressed.add(child_right.unit_id)
                flagged.append(f"([{child_left.unit_id}] || [{child_right.unit_id}])")
        return (
            "\nNote: "
            + ", ".join(flagged)
            + " did not get simpler than the parent pair; no further splits on "
            + ("it." if len(flagged) == 1 else "them.")
        )

    def forced_directive(self) -> ActionDirective:
        assert self.pending_force is not None
        left_id, right_id = self.pending_force
        self.pending_force = None
        return ActionDirective(
            kind=ActionKind.DECOMPOSE, arguments=(left_id, right_id), forced=True
        )


def _usage_of(exc: Exception) -> UsageRecord:
    """Usage attached to an error raised after a completion was spent."""
    usage = getattr(exc, "usage", None)
    return usage if isinstance(usage, UsageRecord) else UsageRecord.zero()


def run_trajectory(
    record: DatasetRecord,
    config: EngineConfig,
    provider: Provider,
    scorer: Optional[Scorer] = None,
    params: Optional[CompletionParams] = None,
) -> Trajectory:
    """Drive one record through the full loop and return its trajectory."""
    run = _Run(record, config, provider, scorer or default_scorer, params)

    if not run.open():
        return Trajectory(
            record_id=record.id,
            steps=(),
            units={},
            method=config.method,
            solved=False,
            final_answer=ABSTAIN,
            failed=True,
        )

    turn = 1
    while turn < config.turn_budget and not run.solved and not run.failed:
        turn += 1
        if run.pending_force is not None:
            directive = run.forced_directive()
            run.execute(turn, FORCED_SPLIT_THOUGHT, directive, UsageRecord.zero())
            continue
        try:
            asked = run.ask_for_directive()
        except ProviderError:
            run.failed = True
            break
        if asked is None:
            continue
        thought, directive, usage = asked
        run.execute(turn, thought, directive, usage)

    if run.solved and run.final_label is not None:
        final_answer = run.final_label
    elif run.steps:
        final_answer, fallback_usage = finalize_answer(
            record, run.steps, run.units, provider, params
        )
        if fallback_usage != UsageRecord.zero():
            last = run.steps[-1]
            run.steps[-1] = replace(last, usage=last.usage.merge(fallback_usage))
    else:
        final_answer = ABSTAIN

    return Trajectory(
        record_id=record.id,
        steps=tuple(run.steps),
        units=dict(run.units),
        method=config.method,
        solved=run.solved,
        final_answer=final_answer,
        failed=run.failed,
    )


def run_many(
    records: Sequence[DatasetRecord],
    config: EngineConfig,
    provider: Provider,
    scorer: Optional[Scorer] = None,
    params: Optional[CompletionParams] = None,
    width: int = 8,
) -> list[Trajectory]:
    """Run a batch, preserving record order.  ``width`` caps concurrency;
    scripted backends need width 1 to keep replies aligned with calls."""
    if width < 1:
        raise ValueError("width must be at least 1")
    if width == 1 or len(records) <= 1:
        return [run_trajectory(r, config, provider, scorer, params) for r in records]
    with ThreadPoolExecutor(max_workers=width) as pool:
        return list(
            pool.map(lambda r: run_trajectory(r, config, provider, scorer, params), records)
        )


# ---------------------------------------------------------------------------
# Trajectory files: one JSON object per line, stable key order, no padding.

def dumps_trajectory(trajectory: Trajectory) -> str:
    return json.dumps(
        trajectory_to_dict(trajectory),
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )


def write_trajectories(
    path: Union[str, Path], trajectories: Sequence[Trajectory]
) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for trajectory in trajectories:
            handle.write(dumps_trajectory(trajectory) + "\n")


def read_trajectories(path: Union[str, Path]) -> list[Trajectory]:
    out = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(trajectory_from_dict(json.loads(line)))
    return out
