"""Build the pinned scoring model from the committed corpus.

Produces a word-level trigram language model with additive smoothing,
serialized as one JSON file.  Every consumer (the service and the
reference script) reads tokenization and smoothing parameters from that
file, so the artifact fully describes its own scoring rule:

    P(w | a, b) = (count(a, b, w) + alpha) / (total(a, b) + alpha * |V|)

Contexts are padded with a begin marker that is never predicted; tokens
outside the vocabulary are mapped to the unknown marker, which is in the
vocabulary and therefore receives smoothed mass.  No end-of-sequence
event is modelled: the service scores running text, not sentence
boundaries.

Usage: python train_model.py [corpus.txt] [output.json]
"""

from __future__ import annotations

import json
import re
import sys
from collections import Counter, defaultdict
from pathlib import Path

MODEL_ID = "tiny-trigram-en-v1"
TOKEN_PATTERN = r"[a-z0-9']+"
BOS = "<s>"
UNK = "<unk>"
ALPHA = 0.1
CONTEXT_WINDOW = 512


def tokenize(text: str) -> list[str]:
    return re.findall(TOKEN_PATTERN, text.lower())


def main() -> None:
    here = Path(__file__).resolve().parent
    corpus_path = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "corpus.txt"
    out_path = (
        Path(sys.argv[2])
        if len(sys.argv) > 2
        else here.parent / "src" / "ppl_service" / "assets" / f"{MODEL_ID}.json"
    )

    trigrams: dict[str, Counter] = defaultdict(Counter)
    vocab: set[str] = {UNK}
    lines = 0
    for line in corpus_path.read_text(encoding="utf-8").splitlines():
        tokens = tokenize(line)
        if not tokens:
            continue
        lines += 1
        vocab.update(tokens)
        history = [BOS, BOS]
        for token in tokens:
            trigrams[" ".join(history)][token] += 1
            history = [history[1], token]

    out_path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "model_id": MODEL_ID,
        "token_pattern": TOKEN_PATTERN,
        "bos": BOS,
        "unk": UNK,
        "alpha": ALPHA,
        "context_window": CONTEXT_WINDOW,
        "vocab": sorted(vocab),
        "trigrams": {
            context: dict(sorted(counts.items()))
            for context, counts in sorted(trigrams.items())
        },
        "context_totals": {
            context: sum(counts.values())
            for context, counts in sorted(trigrams.items())
        },
    }
    out_path.write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"wrote {out_path}: {lines} lines, {len(vocab)} vocabulary entries, "
        f"{len(trigrams)} contexts"
    )


if __name__ == "__main__":
    main()
