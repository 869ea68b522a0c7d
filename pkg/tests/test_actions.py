"""Knowledge operations: prompt rendering, reply parsing, the directive grammar."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from microact.actions import (
    assert_conflict,
    decompose,
    elicit,
    load_template,
    parse_action_directive,
    reason,
    render_options,
    render_template,
    split_thought_action,
)
from microact.domain import ActionDirective, ActionKind, KnowledgeSource, KnowledgeUnit
from microact.errors import (
    DecomposeTooCoarseError,
    DepthExceededError,
    DirectiveParseError,
    EmptyPathError,
    VerdictParseError,
)
from microact.provider import scripted_load


def unit(text="the capital is Oslo", uid="u1", source=KnowledgeSource.PARAMETRIC):
    return KnowledgeUnit(text=text, source=source, depth=0, unit_id=uid)


class TestTemplates:
    def test_substitution_is_literal(self):
        rendered = render_template("Q: {question} end", {"question": "has {braces}"})
        assert rendered == "Q: has {braces} end"

    def test_unknown_placeholders_pass_through(self):
        assert render_template("{a} {b}", {"a": "x"}) == "x {b}"

    def test_all_templates_load(self):
        for name in (
            "elicit",
            "reason",
            "assert",
            "decompose",
            "thought_action",
            "final_answer",
            "judge",
            "baseline_end_to_end",
            "baseline_few_shot",
            "baseline_cot",
            "baseline_self_ask",
            "baseline_comparative_closed_book",
            "baseline_comparative_reconcile",
            "baseline_gkp_generation",
            "baseline_gkp_answering",
            "few_shot_exemplars",
        ):
            assert load_template(name)

    def test_render_options(self):
        assert render_options(["x", "y"]) == "A. x\nB. y"


class TestElicit:
    def test_returns_parametric_root_unit(self):
        provider = scripted_load(["Oslo is the capital of Norway."])
        result, usage = elicit("What is the capital?", provider, unit_id="u1")
        assert result.text == "Oslo is the capital of Norway."
        assert result.source is KnowledgeSource.PARAMETRIC
        assert result.depth == 0
        assert usage.provider_calls == 1

    def test_question_embedded_in_prompt(self):
        provider = scripted_load(["k"])
        elicit("What is the capital?", provider, unit_id="u1")
        assert "What is the capital?" in provider.prompts[0]

    def test_empty_question_rejected_before_any_call(self):
        provider = scripted_load(["k"])
        with pytest.raises(ValueError):
            elicit("   ", provider, unit_id="u1")
        assert provider.call_count == 0


class TestReason:
    def test_parses_numbered_steps(self):
        provider = scripted_load(["1. Oslo is in Norway\n2. So the answer is Norway"])
        path, _ = reason(unit(), "q", provider)
        assert path.steps == ("Oslo is in Norway", "So the answer is Norway")
        assert path.over_unit == "u1"

    def test_parenthesis_numbering_accepted(self):
        provider = scripted_load(["1) first\n2) second"])
        path, _ = reason(unit(), "q", provider)
        assert len(path.steps) == 2

    def test_unnumbered_reply_raises_with_usage(self):
        provider = scripted_load(["no structure here at all"])
        with pytest.raises(EmptyPathError) as excinfo:
            reason(unit(), "q", provider)
        assert excinfo.value.usage.provider_calls == 1


class TestAssertConflict:
    def test_conflict_verdict(self):
        provider = scripted_load(["The sources disagree on the year.\nCONFLICT"])
        verdict, _ = assert_conflict(unit(), unit(uid="u2"), "q", provider)
        assert verdict.delta == 1
        assert verdict.rationale == "The sources disagree on the year."

    def test_consistent_verdict(self):
        provider = scripted_load(["Both say Oslo.\nCONSISTENT"])
        verdict, _ = assert_conflict(unit(), unit(uid="u2"), "q", provider)
        assert verdict.delta == 0

    def test_verdict_must_be_final_line(self):
        provider = scripted_load(["CONFLICT is likely but I am not fully sure."])
        with pytest.raises(VerdictParseError) as excinfo:
            assert_conflict(unit(), unit(uid="u2"), "q", provider)
        assert excinfo.value.usage.provider_calls == 1

    def test_same_unit_rejected_before_any_call(self):
        provider = scripted_load(["x"])
        with pytest.raises(ValueError):
            assert_conflict(unit(), unit(), "q", provider)
        assert provider.call_count == 0

    def test_both_texts_in_prompt(self):
        provider = scripted_load(["CONSISTENT"])
        assert_conflict(
            unit("claim one"), unit("claim two", uid="u2"), "q", provider
        )
        prompt = provider.prompts[0]
        assert "claim one" in prompt and "claim two" in prompt


class TestDecompose:
    def _ids(self):
        counter = iter(range(10, 100))
        return lambda: f"u{next(counter)}"

    def test_splits_into_child_pairs(self):
        provider = scripted_load(
            ["PAIR: born in 1990 || born in 1985\nPAIR: born in Oslo || born in Bergen"]
        )
        pairs, _ = decompose(
            unit("born in 1990 in Oslo"),
            unit("born in 1985 in Bergen", uid="u2", source=KnowledgeSource.RETRIEVED),
            "q",
            provider,
            max_depth=4,
            make_unit_id=self._ids(),
        )
        assert len(pairs) == 2
        left, right = pairs[0]
        assert left.parent_id == "u1" and left.depth == 1
        assert right.parent_id == "u2" and right.depth == 1
        assert left.source is KnowledgeSource.PARAMETRIC
        assert right.source is KnowledgeSource.RETRIEVED

    def test_single_pair_too_coarse(self):
        provider = scripted_load(["PAIR: a || b"])
        with pytest.raises(DecomposeTooCoarseError) as excinfo:
            decompose(
                unit(), unit(uid="u2"), "q", provider,
                max_depth=4, make_unit_id=self._ids(),
            )
        assert excinfo.value.usage.provider_calls == 1

    def test_depth_guard_precedes_the_call(self):
        deep = KnowledgeUnit(
            text="x", source=KnowledgeSource.PARAMETRIC,
            depth=4, unit_id="u9", parent_id="u8",
        )
        provider = scripted_load(["PAIR: a || b\nPAIR: c || d"])
        with pytest.raises(DepthExceededError):
            decompose(
                deep, unit(uid="u2"), "q", provider,
                max_depth=4, make_unit_id=self._ids(),
            )
        assert provider.call_count == 0

    def test_non_pair_lines_ignored(self):
        provider = scripted_load(
            ["Here is my split:\nPAIR: a || b\nsome chatter\nPAIR: c || d\n"]
        )
        pairs, _ = decompose(
            unit(), unit(uid="u2"), "q", provider,
            max_depth=4, make_unit_id=self._ids(),
        )
        assert [(l.text, r.text) for l, r in pairs] == [("a", "b"), ("c", "d")]


class TestDirectiveGrammar:
    def test_basic_parse(self):
        directive = parse_action_directive("Action: ASSERT[u1 || u2]")
        assert directive.kind is ActionKind.ASSERT
        assert directive.arguments == ("u1", "u2")
        assert not directive.forced

    def test_kind_is_case_insensitive(self):
        assert parse_action_directive("Action: finish[b]").kind is ActionKind.FINISH
        assert parse_action_directive("action: Elicit[]").kind is ActionKind.ELICIT

    def test_finish_label_normalized_to_upper(self):
        assert parse_action_directive("Action: FINISH[c]").arguments == ("C",)

    def test_last_action_line_wins(self):
        raw = "Action: ELICIT[]\nsome text\nAction: FINISH[A]"
        assert parse_action_directive(raw).kind is ActionKind.FINISH

    def test_unknown_kind(self):
        with pytest.raises(DirectiveParseError):
            parse_action_directive("Action: PONDER[u1]")

    def test_missing_action_line(self):
        with pytest.raises(DirectiveParseError):
            parse_action_directive("I think the answer is B")

    def test_malformed_brackets(self):
        with pytest.raises(DirectiveParseError):
            parse_action_directive("Action: ASSERT u1 u2")

    def test_finish_multi_letter_rejected(self):
        with pytest.raises(DirectiveParseError):
            parse_action_directive("Action: FINISH[AB]")

    def test_assert_wrong_arity_rejected(self):
        with pytest.raises(DirectiveParseError):
            parse_action_directive("Action: ASSERT[u1]")

    def test_split_thought_action(self):
        raw = "Thought: compare the two sources\nAction: ASSERT[u1 || u2]"
        thought, directive = split_thought_action(raw)
        assert thought == "compare the two sources"
        assert directive.kind is ActionKind.ASSERT

    def test_split_without_thought_marker(self):
        raw = "let me just answer\nAction: FINISH[B]"
        thought, directive = split_thought_action(raw)
        assert thought == "let me just answer"
        assert directive.arguments == ("B",)

    @given(
        kind=st.sampled_from(list(ActionKind)),
        args=st.lists(
            st.text(
                alphabet=st.characters(whitelist_categories=("Ll", "Nd")),
                min_size=1,
                max_size=8,
            ),
            min_size=0,
            max_size=3,
        ),
        forced=st.booleans(),
    )
    def test_render_parse_round_trip(self, kind, args, forced):
        if kind is ActionKind.FINISH:
            args = ["B"]
        elif kind is ActionKind.ASSERT:
            args = (args + ["u1", "u2"])[:2]
        directive = ActionDirective(kind=kind, arguments=tuple(args), forced=forced)
        reparsed = parse_action_directive(directive.render(), forced=forced)
        assert reparsed == directive
