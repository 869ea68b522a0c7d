"""Reference perplexity computation, kept independent of the service code.

Walks the scoring recipe step by step against the committed model file:

    1. tokenize the raw text,
    2. look up each token's conditional probability under the trigram
       tables (unknown tokens mapped to the unknown marker),
    3. take the natural log of each probability,
    4. average the logs over the token count,
    5. exponentiate the negated average.

Running this script (re)generates ``tests/fixtures.json``: ten pinned
sentences with their expected perplexities, plus one single-token input
whose perplexity must equal the reciprocal of its probability exactly.
The service's test suite replays those fixtures; this script must never
import the service package.

Usage: python reference_ppl.py [model.json] [fixtures.json]
"""

from __future__ import annotations

import json
import math
import re
import sys
from pathlib import Path

FIXTURE_SENTENCES = [
    "the river runs through the old town",
    "the bakery sells bread every market morning",
    "the stone bridge has stood for two hundred years",
    "sailors tell stories about the winter storms",
    "the curator answers the same questions patiently",
    "the clockmaker oils the gears every spring",
    "a zeppelin photographed the glacier yesterday",
    "quantum chromodynamics perplexes undergraduate hamsters",
    "The Tower Clock chimes, the gutters drip, and the owl calls!",
    "planning ahead keeps the granary full and the town calm through lean years",
]


def load_model(path: Path) -> dict:
    with path.open(encoding="utf-8") as handle:
        return json.load(handle)


def conditional_probability(model: dict, history: list[str], token: str) -> float:
    vocab_size = len(model["vocab"])
    alpha = model["alpha"]
    context = " ".join(history)
    count = model["trigrams"].get(context, {}).get(token, 0)
    total = model["context_totals"].get(context, 0)
    return (count + alpha) / (total + alpha * vocab_size)


def reference_perplexity(model: dict, text: str) -> tuple[float, int]:
    # step 1: tokenization
    surface = re.findall(model["token_pattern"], text.lower())
    if not surface:
        raise ValueError("no tokens")
    known = set(model["vocab"])
    tokens = [t if t in known else model["unk"] for t in surface]
    # steps 2 and 3: per-token conditional probabilities and their logs
    log_probs = []
    history = [model["bos"], model["bos"]]
    for token in tokens:
        probability = conditional_probability(model, history, token)
        log_probs.append(math.log(probability))
        history = [history[1], token]
    # step 4: averaged log probability
    mean_log = math.fsum(log_probs) / len(log_probs)
    # step 5: exponentiation
    return math.exp(-mean_log), len(tokens)


def pick_single_token(model: dict) -> dict:
    """Find a vocabulary token whose opening probability survives the
    exp/log round trip, so 1/p holds to the last bit, not just on paper."""
    history = [model["bos"], model["bos"]]
    for token in model["vocab"]:
        if token == model["unk"]:
            continue
        p = conditional_probability(model, history, token)
        if math.exp(-math.log(p)) == 1.0 / p:
            return {"text": token, "probability": p, "perplexity": 1.0 / p}
    raise SystemExit("no token satisfies the exact reciprocal identity")


def main() -> None:
    here = Path(__file__).resolve().parent
    model_path = (
        Path(sys.argv[1])
        if len(sys.argv) > 1
        else here.parent / "src" / "ppl_service" / "assets" / "tiny-trigram-en-v1.json"
    )
    out_path = (
        Path(sys.argv[2]) if len(sys.argv) > 2 else here.parent / "tests" / "fixtures.json"
    )
    model = load_model(model_path)

    sentences = []
    for text in FIXTURE_SENTENCES:
        perplexity, token_count = reference_perplexity(model, text)
        assert perplexity >= 1.0, (text, perplexity)
        sentences.append(
            {"text": text, "perplexity": perplexity, "token_count": token_count}
        )

    single = pick_single_token(model)
    check, n = reference_perplexity(model, single["text"])
    assert n == 1 and check == single["perplexity"], "single-token identity broken"

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(
            {
                "model_id": model["model_id"],
                "sentences": sentences,
                "single_token": single,
            },
            indent=1,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {out_path}: {len(sentences)} sentences, single token {single['text']!r}")


if __name__ == "__main__":
    main()
