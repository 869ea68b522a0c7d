"""Complexity scoring, perplexity math, monotonicity, transitions."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, strategies as st

from microact.complexity import (
    Bounds,
    ComplexityScore,
    ScoreBasis,
    ScorerConfig,
    TransitionModel,
    make_scorer,
    perplexity_from_logprobs,
    score,
    should_decompose,
    simulate_transition,
    simulate_transition_step,
    stopping_turn,
    text_key,
    token_length,
    verify_monotone,
)
from microact.errors import (
    BasisMismatchError,
    EmptySequenceError,
    InvalidKernelError,
    InvalidLogProbError,
    NotReachedError,
    ScorerUnavailableError,
)


def geometric_mean_oracle(probs: list[float]) -> float:
    """Independent route: reciprocal of the geometric mean of probabilities."""
    product = math.prod(probs)
    return product ** (-1.0 / len(probs))


class TestPerplexity:
    def test_uniform_over_16(self):
        logprobs = [math.log(1 / 16)] * 8
        assert perplexity_from_logprobs(logprobs) == pytest.approx(16.0, abs=1e-12)

    def test_known_three_token_sequence(self):
        logprobs = [math.log(0.5), math.log(0.25), math.log(0.125)]
        assert perplexity_from_logprobs(logprobs) == pytest.approx(4.0, abs=1e-12)

    def test_certain_sequence_scores_one(self):
        assert perplexity_from_logprobs([0.0, 0.0, 0.0]) == 1.0

    def test_empty_sequence(self):
        with pytest.raises(EmptySequenceError):
            perplexity_from_logprobs([])

    def test_positive_logprob_rejected(self):
        with pytest.raises(InvalidLogProbError):
            perplexity_from_logprobs([math.log(0.5), 0.1])

    def test_matches_geometric_mean_oracle(self):
        rng = random.Random(40)
        for _ in range(50):
            probs = [rng.uniform(0.05, 1.0) for _ in range(rng.randint(1, 64))]
            ours = perplexity_from_logprobs([math.log(p) for p in probs])
            oracle = geometric_mean_oracle(probs)
            assert ours == pytest.approx(oracle, rel=1e-9)

    @given(st.lists(st.floats(min_value=-20.0, max_value=0.0), min_size=1, max_size=64))
    def test_never_below_one(self, logprobs):
        assert perplexity_from_logprobs(logprobs) >= 1.0


class TestScoring:
    def test_token_length_basis(self):
        result = score("five words are right here", ScorerConfig())
        assert result == ComplexityScore(5.0, ScoreBasis.TOKEN_LENGTH)

    def test_perplexity_basis_from_cache(self):
        text = "cached text"
        config = ScorerConfig(
            basis=ScoreBasis.PERPLEXITY, ppl_cache={text_key(text): 42.5}
        )
        assert score(text, config).value == 42.5

    def test_perplexity_basis_from_lookup(self):
        config = ScorerConfig(
            basis=ScoreBasis.PERPLEXITY, ppl_lookup=lambda text: 7.0, ppl_cache={}
        )
        assert score("fresh", config).value == 7.0
        assert config.ppl_cache[text_key("fresh")] == 7.0

    def test_perplexity_unconfigured(self):
        with pytest.raises(ScorerUnavailableError):
            score("x", ScorerConfig(basis=ScoreBasis.PERPLEXITY))

    def test_composite_blends_both(self):
        config = ScorerConfig(
            basis=ScoreBasis.COMPOSITE,
            ppl_lookup=lambda text: 100.5,
            length_bounds=Bounds(0.0, 8.0),
            ppl_bounds=Bounds(1.0, 200.0),
        )
        result = score("one two three four", config)
        assert result.basis is ScoreBasis.COMPOSITE
        assert result.value == pytest.approx(0.5 * 0.5 + 0.5 * (99.5 / 199.0))

    def test_fallback_scorer_degrades_to_length(self):
        scorer = make_scorer(ScorerConfig(basis=ScoreBasis.PERPLEXITY))
        result = scorer("three word text")
        assert result == ComplexityScore(3.0, ScoreBasis.TOKEN_LENGTH)

    def test_strict_scorer_raises(self):
        scorer = make_scorer(
            ScorerConfig(basis=ScoreBasis.PERPLEXITY), fallback_to_length=False
        )
        with pytest.raises(ScorerUnavailableError):
            scorer("x")

    def test_negative_score_rejected(self):
        with pytest.raises(ValueError):
            ComplexityScore(-1.0, ScoreBasis.TOKEN_LENGTH)


class TestShouldDecompose:
    def test_strictly_above_threshold(self):
        tau = ComplexityScore(100.0, ScoreBasis.TOKEN_LENGTH)
        assert should_decompose(ComplexityScore(100.1, ScoreBasis.TOKEN_LENGTH), tau)

    def test_exactly_at_threshold_does_not_split(self):
        tau = ComplexityScore(100.0, ScoreBasis.TOKEN_LENGTH)
        assert not should_decompose(ComplexityScore(100.0, ScoreBasis.TOKEN_LENGTH), tau)

    def test_basis_mismatch(self):
        tau = ComplexityScore(5.0, ScoreBasis.PERPLEXITY)
        with pytest.raises(BasisMismatchError):
            should_decompose(ComplexityScore(10.0, ScoreBasis.TOKEN_LENGTH), tau)


class TestVerifyMonotone:
    def test_all_strictly_smaller(self):
        parent = ComplexityScore(10.0, ScoreBasis.TOKEN_LENGTH)
        children = [
            ComplexityScore(4.0, ScoreBasis.TOKEN_LENGTH),
            ComplexityScore(9.9, ScoreBasis.TOKEN_LENGTH),
        ]
        assert verify_monotone(parent, children) == (True, None)

    def test_equal_child_is_a_violation(self):
        parent = ComplexityScore(10.0, ScoreBasis.TOKEN_LENGTH)
        children = [
            ComplexityScore(3.0, ScoreBasis.TOKEN_LENGTH),
            ComplexityScore(10.0, ScoreBasis.TOKEN_LENGTH),
        ]
        verdict = verify_monotone(parent, children)
        assert not verdict.ok
        assert verdict.violation_index == 1

    def test_empty_children_rejected(self):
        with pytest.raises(ValueError):
            verify_monotone(ComplexityScore(1.0, ScoreBasis.TOKEN_LENGTH), [])

    def test_basis_mismatch(self):
        with pytest.raises(BasisMismatchError):
            verify_monotone(
                ComplexityScore(10.0, ScoreBasis.TOKEN_LENGTH),
                [ComplexityScore(1.0, ScoreBasis.PERPLEXITY)],
            )


class TestStoppingTurn:
    def test_reference_schedule(self):
        assert stopping_turn([10.0, 7.0, 4.0, 2.0], 5.0) == 2

    def test_immediate_stop(self):
        assert stopping_turn([3.0, 1.0], 5.0) == 0

    def test_never_reached(self):
        with pytest.raises(NotReachedError):
            stopping_turn([10.0, 9.0, 8.0], 5.0)

    def test_non_decreasing_schedule_rejected(self):
        with pytest.raises(ValueError):
            stopping_turn([10.0, 10.0, 4.0], 5.0)

    @given(
        st.lists(st.floats(min_value=0.01, max_value=1000.0), min_size=1, max_size=20)
        .map(lambda xs: sorted(set(xs), reverse=True))
        .filter(lambda xs: len(xs) >= 1),
        st.floats(min_value=0.0, max_value=1001.0),
    )
    def test_matches_linear_scan(self, schedule, threshold):
        crossings = [t for t, v in enumerate(schedule) if v <= threshold]
        if crossings:
            assert stopping_turn(schedule, threshold) == crossings[0]
        else:
            with pytest.raises(NotReachedError):
                stopping_turn(schedule, threshold)


def random_system(rng: random.Random, n_states: int = 5, n_labels: int = 3):
    states = tuple(f"s{i}" for i in range(n_states))
    labels = tuple(f"c{i}" for i in range(n_labels))

    def random_row(keys):
        weights = [rng.uniform(0.05, 1.0) for _ in keys]
        total = sum(weights)
        return {key: w / total for key, w in zip(keys, weights)}

    model = TransitionModel(
        states=states,
        labels=labels,
        verify_kernel={s: random_row(labels) for s in states},
        model_kernel={c: random_row(states) for c in labels},
    )
    initial = random_row(states)
    return model, initial


def triple_sum_oracle(model: TransitionModel, current: dict) -> dict:
    """Independent route: the raw triple sum, no linear algebra."""
    out = {}
    for next_state in model.states:
        total = 0.0
        for label in model.labels:
            for state in model.states:
                total += (
                    model.model_kernel[label][next_state]
                    * model.verify_kernel[state][label]
                    * current[state]
                )
        out[next_state] = total
    return out


class TestTransitions:
    def test_matches_triple_sum_oracle(self):
        rng = random.Random(99)
        for _ in range(10):
            model, initial = random_system(rng)
            ours = simulate_transition_step(model, initial)
            oracle = triple_sum_oracle(model, initial)
            for state in model.states:
                assert ours[state] == pytest.approx(oracle[state], abs=1e-12)

    def test_identity_kernels_are_a_fixpoint(self):
        states = ("a", "b", "c")
        eye = {
            row: {col: 1.0 if row == col else 0.0 for col in states} for row in states
        }
        model = TransitionModel(
            states=states, labels=states, verify_kernel=eye, model_kernel=eye
        )
        initial = {"a": 0.2, "b": 0.3, "c": 0.5}
        assert simulate_transition_step(model, initial) == initial

    def test_mass_conserved_over_many_steps(self):
        model, initial = random_system(random.Random(7))
        history = simulate_transition(model, initial, 50)
        for distribution in history:
            assert abs(math.fsum(distribution.values()) - 1.0) < 1e-10

    def test_posterior_factorization_is_the_same_step(self):
        # identity check: marginalize labels first, then regenerate.
        # label_mass(c) = sum_K verify(c|K) p(K); reversing verify through
        # the posterior p(K|c) regroups the same joint, so stepping via
        # label_mass must equal the forward triple sum.
        rng = random.Random(41)
        for _ in range(10):
            model, initial = random_system(rng, n_states=3, n_labels=2)
            label_mass = {
                label: math.fsum(
                    model.verify_kernel[state][label] * initial[state]
                    for state in model.states
                )
                for label in model.labels
            }
            posterior = {
                label: {
                    state: model.verify_kernel[state][label]
                    * initial[state]
                    / label_mass[label]
                    for state in model.states
                }
                for label in model.labels
            }
            for label in model.labels:
                assert math.fsum(posterior[label].values()) == pytest.approx(
                    1.0, abs=1e-12
                )
            via_posterior = {
                next_state: math.fsum(
                    model.model_kernel[label][next_state]
                    * label_mass[label]
                    * math.fsum(posterior[label].values())
                    for label in model.labels
                )
                for next_state in model.states
            }
            forward = simulate_transition_step(model, initial)
            for state in model.states:
                assert via_posterior[state] == pytest.approx(
                    forward[state], abs=1e-12
                )

    def test_bad_row_sum_rejected(self):
        states, labels = ("s0", "s1"), ("c0",)
        model = TransitionModel(
            states=states,
            labels=labels,
            verify_kernel={"s0": {"c0": 1.0}, "s1": {"c0": 0.5}},
            model_kernel={"c0": {"s0": 0.5, "s1": 0.5}},
        )
        with pytest.raises(InvalidKernelError):
            simulate_transition_step(model, {"s0": 0.5, "s1": 0.5})

    def test_negative_entry_rejected(self):
        states, labels = ("s0", "s1"), ("c0",)
        model = TransitionModel(
            states=states,
            labels=labels,
            verify_kernel={"s0": {"c0": 1.0}, "s1": {"c0": 1.0}},
            model_kernel={"c0": {"s0": 1.5, "s1": -0.5}},
        )
        with pytest.raises(InvalidKernelError):
            simulate_transition_step(model, {"s0": 1.0, "s1": 0.0})

    def test_unnormalized_input_rejected(self):
        model, _ = random_system(random.Random(1))
        bad = {state: 0.3 for state in model.states}
        with pytest.raises(InvalidKernelError):
            simulate_transition_step(model, bad)

    def test_missing_state_key_rejected(self):
        model, initial = random_system(random.Random(2))
        initial.pop(model.states[0])
        with pytest.raises(InvalidKernelError):
            simulate_transition_step(model, initial)


def test_token_length_counts_whitespace_words():
    assert token_length("") == 0
    assert token_length("a b  c\nd") == 4
