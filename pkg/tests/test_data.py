"""Dataset IO, stratified sampling, length bucketing, format adapters."""

from __future__ import annotations

import json

import pytest

from microact.complexity import ComplexityScore, ScoreBasis
from microact.data import (
    BUCKET_LABELS,
    adapt_file,
    bucket_by_length,
    bucket_for,
    convert_conflictbank,
    convert_kre,
    load_dataset,
    sample_stratified,
    save_dataset,
)
from microact.errors import (
    DatasetIOError,
    InsufficientDataError,
    SchemaError,
)

from conftest import make_record


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")


def record_row(**overrides):
    row = {
        "id": "q1",
        "question": "Which city hosts the court?",
        "options": ["Oslo", "Bergen"],
        "gold_index": 0,
        "evidence": [{"text": "The court sits in Oslo.", "fragment_id": "q1-e0"}],
        "conflict_type": "none",
        "source_dataset": "unit",
    }
    row.update(overrides)
    return row


class TestLoadDataset:
    def test_round_trip(self, tmp_path):
        records = [make_record(record_id=f"r{i}") for i in range(4)]
        path = tmp_path / "d.jsonl"
        save_dataset(records, path)
        loaded, manifest = load_dataset(path)
        assert loaded == records
        assert manifest.record_count == 4
        assert manifest.conflict_type_counts == {"misinformation": 4}

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps(record_row()) + "\n\n   \n")
        records, _ = load_dataset(path)
        assert len(records) == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetIOError):
            load_dataset(tmp_path / "absent.jsonl")

    def test_bad_json_names_the_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps(record_row()) + "\n{not json\n")
        with pytest.raises(SchemaError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 2
        assert excinfo.value.field == "json"

    def test_missing_field_names_field_and_line(self, tmp_path):
        row = record_row()
        del row["gold_index"]
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [row])
        with pytest.raises(SchemaError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 1
        assert excinfo.value.field == "gold_index"

    def test_non_object_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("[1, 2, 3]\n")
        with pytest.raises(SchemaError):
            load_dataset(path)

    def test_semantic_violation_surfaces(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [record_row(gold_index=7)])
        with pytest.raises(SchemaError) as excinfo:
            load_dataset(path)
        assert excinfo.value.field == "gold_index"

    def test_unknown_conflict_type_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [record_row(conflict_type="spicy")])
        with pytest.raises(SchemaError):
            load_dataset(path)


class TestSampling:
    def pool(self):
        records = []
        for conflict in ("misinformation", "temporal", "semantic"):
            for i in range(6):
                records.append(
                    make_record(record_id=f"{conflict[:4]}-{i}", conflict_type=conflict)
                )
        return records

    def test_exact_count_per_type(self):
        sample = sample_stratified(self.pool(), n_per_type=3, seed=1)
        assert len(sample) == 9
        for conflict in ("misinformation", "temporal", "semantic"):
            assert sum(r.conflict_type == conflict for r in sample) == 3

    def test_seed_determinism(self):
        one = sample_stratified(self.pool(), n_per_type=2, seed=42)
        two = sample_stratified(self.pool(), n_per_type=2, seed=42)
        assert one == two

    def test_different_seeds_differ_somewhere(self):
        draws = {
            tuple(r.id for r in sample_stratified(self.pool(), n_per_type=2, seed=s))
            for s in range(20)
        }
        assert len(draws) > 1

    def test_input_order_does_not_matter(self):
        pool = self.pool()
        shuffled = list(reversed(pool))
        assert sample_stratified(pool, 2, seed=7) == sample_stratified(
            shuffled, 2, seed=7
        )

    def test_output_sorted_by_id(self):
        sample = sample_stratified(self.pool(), n_per_type=2, seed=3)
        assert [r.id for r in sample] == sorted(r.id for r in sample)

    def test_insufficient_pool(self):
        records = [make_record(record_id="only", conflict_type="temporal")]
        with pytest.raises(InsufficientDataError) as excinfo:
            sample_stratified(records, n_per_type=2, seed=0)
        assert excinfo.value.conflict_type == "temporal"
        assert excinfo.value.have == 1
        assert excinfo.value.want == 2

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            sample_stratified(self.pool(), n_per_type=0, seed=0)


class TestBuckets:
    @pytest.mark.parametrize(
        "length, label",
        [
            (0, "0-100"),
            (99, "0-100"),
            (100, "100-200"),
            (199, "100-200"),
            (200, "200-300"),
            (300, "300-400"),
            (399, "300-400"),
            (400, "400+"),
            (10_000, "400+"),
        ],
    )
    def test_boundaries(self, length, label):
        assert bucket_for(length) == label

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            bucket_for(-1)

    def test_bucket_by_length_covers_all_labels(self):
        records = [
            make_record(record_id=f"r{i}", evidence_words=words)
            for i, words in enumerate([50, 150, 250, 350, 450])
        ]
        buckets = bucket_by_length(records)
        assert tuple(buckets) == BUCKET_LABELS
        for i, members in enumerate(buckets.values()):
            assert members == [f"r{i}"]

    def test_empty_buckets_present(self):
        buckets = bucket_by_length([make_record(evidence_words=10)])
        assert buckets["400+"] == []

    def test_custom_scorer(self):
        record = make_record(evidence_words=5)
        scorer = lambda text: ComplexityScore(450.0, ScoreBasis.TOKEN_LENGTH)
        buckets = bucket_by_length([record], scorer=scorer)
        assert buckets["400+"] == [record.id]


class TestAdapters:
    def test_conflictbank_mapping(self):
        raw = {
            "id": "cb-1",
            "question": "Who wrote it?",
            "choices": ["Ann", "Ben", "Cy"],
            "answer_index": 2,
            "conflict_evidence": ["First passage.", "Second passage."],
            "conflict_type": "misinformation",
        }
        record = convert_conflictbank(raw)
        assert record.id == "cb-1"
        assert record.gold_index == 2
        assert [f.fragment_id for f in record.evidence] == ["cb-1-e0", "cb-1-e1"]
        assert record.source_dataset == "conflictbank"
        assert record.evidence_text() == "First passage.\n\nSecond passage."

    def test_conflictbank_single_string_evidence(self):
        raw = {
            "id": "cb-2",
            "question": "Q?",
            "options": ["a", "b"],
            "gold_index": 0,
            "evidence": "One blob of text.",
            "conflict_type": "semantic",
        }
        record = convert_conflictbank(raw)
        assert len(record.evidence) == 1
        assert record.evidence[0].text == "One blob of text."

    def test_conflictbank_missing_evidence(self):
        with pytest.raises(KeyError):
            convert_conflictbank(
                {"id": "x", "question": "q", "choices": ["a", "b"], "gold_index": 0}
            )

    def test_kre_mapping(self):
        raw = {
            "id": "k-9",
            "query": "When was it built?",
            "options": ["1900", "1950"],
            "answer": "1950",
            "context": [{"text": "Built in 1950."}],
            "conflict_type": "temporal",
        }
        raw["context"] = ["Built in 1950."]
        record = convert_kre(raw)
        assert record.id == "k-9"
        assert record.gold_index == 1
        assert record.conflict_type == "temporal"
        assert record.source_dataset == "kre"

    def test_kre_defaults_conflict_type(self):
        record = convert_kre(
            {
                "id": "k-1",
                "question": "Q?",
                "options": ["a", "b"],
                "gold_index": 0,
                "evidence": "text",
            }
        )
        assert record.conflict_type == "none"

    def test_kre_answer_not_among_options(self):
        with pytest.raises(ValueError):
            convert_kre(
                {
                    "id": "k-2",
                    "query": "Q?",
                    "options": ["a", "b"],
                    "answer": "zzz",
                    "context": "text",
                }
            )

    def test_adapt_file(self, tmp_path):
        src = tmp_path / "raw.jsonl"
        write_jsonl(
            src,
            [
                {
                    "id": "cb-1",
                    "question": "Q?",
                    "choices": ["x", "y"],
                    "answer_index": 0,
                    "evidence": "Blob.",
                    "conflict_type": "none",
                }
            ],
        )
        dst = tmp_path / "clean.jsonl"
        count = adapt_file(src, convert_conflictbank, dst)
        assert count == 1
        records, _ = load_dataset(dst)
        assert records[0].id == "cb-1"

    def test_adapt_file_reports_bad_rows(self, tmp_path):
        src = tmp_path / "raw.jsonl"
        src.write_text('{"id": "cb-1"}\n')
        with pytest.raises(SchemaError) as excinfo:
            adapt_file(src, convert_conflictbank, tmp_path / "out.jsonl")
        assert excinfo.value.line == 1
