"""Dataset ingestion, stratified sampling, and length bucketing.

The native format is one JSON object per line.  Records from upstream
benchmark exports are mapped in through small adapter functions rather than
by hand-editing files.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Union

from .complexity import ComplexityScore
from .domain import (
    DatasetRecord,
    EvidenceFragment,
    record_from_dict,
    record_to_dict,
    validate_record,
)
from .errors import DatasetIOError, InsufficientDataError, SchemaError

_REQUIRED_FIELDS = (
    "id",
    "question",
    "options",
    "gold_index",
    "evidence",
    "conflict_type",
    "source_dataset",
)


@dataclass(frozen=True)
class DatasetManifest:
    path: str
    record_count: int
    conflict_type_counts: Mapping[str, int]


def load_dataset(
    path: Union[str, Path],
) -> tuple[list[DatasetRecord], DatasetManifest]:
    """Read and validate a line-delimited dataset file.

    The first schema violation aborts the load; callers get the 1-based
    line number and the field at fault.
    """
    p = Path(path)
    try:
        raw_lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset {p}: {exc}") from exc

    records: list[DatasetRecord] = []
    counts: dict[str, int] = {}
    for line_no, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(line_no, "json", str(exc)) from None
        if not isinstance(raw, dict):
            raise SchemaError(line_no, "json", "line is not an object")
        for field_name in _REQUIRED_FIELDS:
            if field_name not in raw:
                raise SchemaError(line_no, field_name, "missing")
        try:
            record = record_from_dict(raw)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(line_no, "record", str(exc)) from None
        violations = validate_record(record)
        if violations:
            field_name = violations[0].split(":", 1)[0]
            raise SchemaError(line_no, field_name, "; ".join(violations))
        records.append(record)
        counts[record.conflict_type] = counts.get(record.conflict_type, 0) + 1

    manifest = DatasetManifest(
        path=str(p), record_count=len(records), conflict_type_counts=counts
    )
    return records, manifest


def save_dataset(records: Sequence[DatasetRecord], path: Union[str, Path]) -> None:
    try:
        with Path(path).open("w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record_to_dict(record), sort_keys=True) + "\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset {path}: {exc}") from exc


def sample_stratified(
    records: Sequence[DatasetRecord], n_per_type: int, seed: int
) -> list[DatasetRecord]:
    """Draw n records per present conflict type, reproducibly.

    The draw depends only on (record ids, n_per_type, seed); input order
    does not matter.  Output is sorted by id.
    """
    if n_per_type < 1:
        raise ValueError("n_per_type must be at least 1")
    pools: dict[str, list[DatasetRecord]] = {}
    for record in records:
        pools.setdefault(record.conflict_type, []).append(record)
    rng = random.Random(seed)
    chosen: list[DatasetRecord] = []
    for conflict_type in sorted(pools):
        pool = sorted(pools[conflict_type], key=lambda r: r.id)
        if len(pool) < n_per_type:
            raise InsufficientDataError(conflict_type, len(pool), n_per_type)
        chosen.extend(rng.sample(pool, n_per_type))
    return sorted(chosen, key=lambda r: r.id)


# ---------------------------------------------------------------------------
# Length bucketing.  Half-open token-count intervals; the last is unbounded.

BUCKET_LABELS = ("0-100", "100-200", "200-300", "300-400", "400+")
_BUCKET_EDGES = (0.0, 100.0, 200.0, 300.0, 400.0)


def bucket_for(value: float) -> str:
    if value < 0:
        raise ValueError("bucket values must be non-negative")
    for label, lo, hi in zip(
        BUCKET_LABELS[:-1], _BUCKET_EDGES[:-1], _BUCKET_EDGES[1:]
    ):
        if lo <= value < hi:
            return label
    return BUCKET_LABELS[-1]


def _evidence_length(record: DatasetRecord) -> float:
    return float(len(record.evidence_text().split()))


def bucket_by_length(
    records: Sequence[DatasetRecord],
    scorer: Optional[Callable[[str], ComplexityScore]] = None,
) -> dict[str, list[str]]:
    """Group record ids by the complexity of their combined evidence.

    Every bucket label is present in the result, empty or not.  Without a
    scorer the whitespace token count of the evidence is used.
    """
    buckets: dict[str, list[str]] = {label: [] for label in BUCKET_LABELS}
    for record in records:
        if scorer is None:
            value = _evidence_length(record)
        else:
            value = scorer(record.evidence_text()).value
        buckets[bucket_for(value)].append(record.id)
    return buckets


# ---------------------------------------------------------------------------
# Adapters for upstream benchmark exports.  Each maps one raw object to the
# native record shape; unknown layouts fail loudly rather than guessing.

def convert_conflictbank(raw: Mapping[str, Any]) -> DatasetRecord:
    """Map a ConflictBank-style export row.

    Expected keys: ``id``, ``question``, ``choices`` (or ``options``),
    ``gold_index`` (or ``answer_index``), ``conflict_evidence`` (or
    ``evidence``; string or list of strings), ``conflict_type``.
    """
    options = raw.get("choices", raw.get("options"))
    if options is None:
        raise KeyError("choices")
    gold = raw.get("gold_index", raw.get("answer_index"))
    if gold is None:
        raise KeyError("gold_index")
    evidence_raw = raw.get("conflict_evidence", raw.get("evidence"))
    if evidence_raw is None:
        raise KeyError("conflict_evidence")
    if isinstance(evidence_raw, str):
        evidence_raw = [evidence_raw]
    evidence = tuple(
        EvidenceFragment(text=text, fragment_id=f"{raw['id']}-e{i}")
        for i, text in enumerate(evidence_raw)
    )
    return DatasetRecord(
        id=str(raw["id"]),
        question=raw["question"],
        options=tuple(options),
        gold_index=int(gold),
        evidence=evidence,
        conflict_type=raw["conflict_type"],
        source_dataset="conflictbank",
        domain_tag=raw.get("domain"),
    )


def convert_kre(raw: Mapping[str, Any]) -> DatasetRecord:
    """Map a knowledge-robustness-evaluation export row.

    Expected keys: ``id``, ``query`` (or ``question``), ``options``,
    ``answer`` (gold option text) or ``gold_index``, ``context`` (or
    ``evidence``), optional ``conflict_type`` defaulting to ``none``.
    """
    question = raw.get("query", raw.get("question"))
    if question is None:
        raise KeyError("query")
    options = tuple(raw["options"])
    if "gold_index" in raw:
        gold = int(raw["gold_index"])
    else:
        try:
            gold = options.index(raw["answer"])
        except ValueError:
            raise ValueError(
                f"answer {raw.get('answer')!r} not among options"
            ) from None
    context = raw.get("context", raw.get("evidence"))
    if context is None:
        raise KeyError("context")
    if isinstance(context, str):
        context = [context]
    evidence = tuple(
        EvidenceFragment(text=text, fragment_id=f"{raw['id']}-e{i}")
        for i, text in enumerate(context)
    )
    return DatasetRecord(
        id=str(raw["id"]),
        question=question,
        options=options,
        gold_index=gold,
        evidence=evidence,
        conflict_type=raw.get("conflict_type", "none"),
        source_dataset="kre",
        domain_tag=raw.get("domain"),
    )


def adapt_file(
    in_path: Union[str, Path],
    adapter: Callable[[Mapping[str, Any]], DatasetRecord],
    out_path: Union[str, Path],
) -> int:
    """Convert a line-delimited upstream export into the native format."""
    try:
        lines = Path(in_path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read {in_path}: {exc}") from exc
    records = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(adapter(json.loads(line)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(line_no, "adapter", str(exc)) from None
    save_dataset(records, out_path)
    return len(records)
