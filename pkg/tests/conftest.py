"""Shared test fixtures and builders."""

from __future__ import annotations

import pytest

from microact.domain import DatasetRecord, EvidenceFragment


def make_record(
    record_id: str = "r1",
    question: str = "Which country does the ambassador represent?",
    n_options: int = 4,
    evidence_words: int = 30,
    conflict_type: str = "misinformation",
    n_fragments: int = 1,
) -> DatasetRecord:
    words_per = max(1, evidence_words // n_fragments)
    fragments = tuple(
        EvidenceFragment(
            text=" ".join(f"ev{i}w{j}" for j in range(words_per)),
            fragment_id=f"{record_id}-e{i}",
        )
        for i in range(n_fragments)
    )
    return DatasetRecord(
        id=record_id,
        question=question,
        options=tuple(f"option {i}" for i in range(n_options)),
        gold_index=1,
        evidence=fragments,
        conflict_type=conflict_type,
        source_dataset="synthetic",
    )


def thought_action(action: str, thought: str = "next move") -> str:
    return f"Thought: {thought}\nAction: {action}"


@pytest.fixture
def record() -> DatasetRecord:
    return make_record()
