"""Context-complexity scoring and the dynamics built on top of it.

Three score bases are supported: whitespace token length, language-model
perplexity (served out-of-process and cached), and an equal-weight composite
of the two after min-max normalization.  The same module carries the
discrete transition simulator used to study how unit distributions evolve
under repeated verify-and-split rounds, plus the stopping-turn rule for a
strictly decreasing complexity schedule.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import requests

from .errors import (
    BasisMismatchError,
    EmptySequenceError,
    InvalidKernelError,
    InvalidLogProbError,
    NotReachedError,
    ScorerUnavailableError,
)

_ROW_SUM_TOLERANCE = 1e-12


class ScoreBasis(str, Enum):
    TOKEN_LENGTH = "token_length"
    PERPLEXITY = "perplexity"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class ComplexityScore:
    value: float
    basis: ScoreBasis

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"complexity value must be finite and >= 0, got {self.value}")


def perplexity_from_logprobs(logprobs: Sequence[float]) -> float:
    """Exponentiated negative mean of natural log probabilities.

    A sequence the model finds certain (all log probs 0) scores 1.0, the
    floor; flat uncertainty over k choices scores k.
    """
    if len(logprobs) == 0:
        raise EmptySequenceError("cannot take perplexity of an empty sequence")
    for i, lp in enumerate(logprobs):
        if lp > 0:
            raise InvalidLogProbError(f"logprobs[{i}] = {lp} is positive")
    return math.exp(-math.fsum(logprobs) / len(logprobs))


def token_length(text: str) -> int:
    return len(text.split())


def text_key(text: str) -> str:
    """Stable cache key for a text: hex sha256 of its UTF-8 bytes."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Perplexity lookup: disk cache first, then the HTTP scoring service.

class PerplexityClient:
    """Thin client for the perplexity scoring service."""

    def __init__(self, base_url: str, timeout_s: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._session = requests.Session()

    def __call__(self, text: str) -> float:
        try:
            response = self._session.post(
                f"{self.base_url}/perplexity",
                json={"text": text},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ScorerUnavailableError(f"perplexity service unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ScorerUnavailableError(
                f"perplexity service returned status {response.status_code}"
            )
        try:
            return float(response.json()["perplexity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerUnavailableError(f"malformed perplexity payload: {exc}") from exc


def load_perplexity_cache(path: Union[str, Path]) -> dict[str, float]:
    """Read a cache file of one JSON object per line into a key->value map.

    Missing file means an empty cache; that is not an error.
    """
    cache: dict[str, float] = {}
    p = Path(path)
    if not p.exists():
        return cache
    with p.open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            cache[row["text_sha256"]] = float(row["perplexity"])
    return cache


def append_perplexity_cache(
    path: Union[str, Path], text: str, perplexity: float
) -> None:
    row = {
        "text_sha256": text_key(text),
        "perplexity": perplexity,
        "token_count": token_length(text),
    }
    with Path(path).open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(row, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Bounds:
    """Inclusive value range used for min-max normalization."""

    lo: float
    hi: float

    def normalize(self, value: float) -> float:
        if self.hi <= self.lo:
            return 0.0
        return min(1.0, max(0.0, (value - self.lo) / (self.hi - self.lo)))


@dataclass
class ScorerConfig:
    """Everything needed to score a text on the configured basis.

    ``ppl_lookup`` is any callable text -> perplexity; the cache dict, when
    given, is consulted first and updated in memory on service hits.
    """

    basis: ScoreBasis = ScoreBasis.TOKEN_LENGTH
    ppl_lookup: Optional[Callable[[str], float]] = None
    ppl_cache: Optional[dict[str, float]] = None
    cache_path: Optional[Path] = None
    length_bounds: Bounds = field(default_factory=lambda: Bounds(0.0, 400.0))
    ppl_bounds: Bounds = field(default_factory=lambda: Bounds(1.0, 200.0))
    length_weight: float = 0.5
    ppl_weight: float = 0.5


def _perplexity_of(text: str, config: ScorerConfig) -> float:
    key = text_key(text)
    if config.ppl_cache is not None and key in config.ppl_cache:
        return config.ppl_cache[key]
    if config.ppl_lookup is None:
        raise ScorerUnavailableError(
            "perplexity basis requested but no cache entry and no service configured"
        )
    value = config.ppl_lookup(text)
    if config.ppl_cache is not None:
        config.ppl_cache[key] = value
    if config.cache_path is not None:
        append_perplexity_cache(config.cache_path, text, value)
    return value


def score(text: str, config: ScorerConfig) -> ComplexityScore:
    """Score ``text`` on the basis named by the config."""
    if config.basis is ScoreBasis.TOKEN_LENGTH:
        return ComplexityScore(float(token_length(text)), ScoreBasis.TOKEN_LENGTH)
    if config.basis is ScoreBasis.PERPLEXITY:
        return ComplexityScore(_perplexity_of(text, config), ScoreBasis.PERPLEXITY)
    blended = config.length_weight * config.length_bounds.normalize(
        float(token_length(text))
    ) + config.ppl_weight * config.ppl_bounds.normalize(_perplexity_of(text, config))
    return ComplexityScore(blended, ScoreBasis.COMPOSITE)


def make_scorer(
    config: ScorerConfig, fallback_to_length: bool = True
) -> Callable[[str], ComplexityScore]:
    """Bind a config into a plain text -> score callable.

    With ``fallback_to_length`` the callable degrades to the token-length
    basis when the configured basis cannot be computed, instead of raising;
    runs should not die because a scoring sidecar is down.
    """

    def scorer(text: str) -> ComplexityScore:
        try:
            return score(text, config)
        except ScorerUnavailableError:
            if not fallback_to_length:
                raise
            return ComplexityScore(float(token_length(text)), ScoreBasis.TOKEN_LENGTH)

    return scorer


def should_decompose(current: ComplexityScore, threshold: ComplexityScore) -> bool:
    """Split only when complexity strictly exceeds the threshold."""
    if current.basis is not threshold.basis:
        raise BasisMismatchError(
            f"cannot compare {current.basis.value} against {threshold.basis.value}"
        )
    return current.value > threshold.value


class MonotoneVerdict(NamedTuple):
    ok: bool
    violation_index: Optional[int]


def verify_monotone(
    parent: ComplexityScore, children: Sequence[ComplexityScore]
) -> MonotoneVerdict:
    """Every child must be strictly simpler than its parent.

    Returns the index of the first child that is not, rather than raising;
    the engine treats violations as a reason to stop splitting, not to die.
    """
    if not children:
        raise ValueError("monotonicity needs at least one child score")
    for child in children:
        if child.basis is not parent.basis:
            raise BasisMismatchError(
                f"child basis {child.basis.value} differs from parent "
                f"{parent.basis.value}"
            )
    for i, child in enumerate(children):
        if not child.value < parent.value:
            return MonotoneVerdict(False, i)
    return MonotoneVerdict(True, None)


def stopping_turn(schedule: Sequence[float], threshold: float) -> int:
    """First 0-based position where a strictly decreasing schedule reaches
    the threshold (value <= threshold)."""
    if len(schedule) == 0:
        raise ValueError("empty complexity schedule")
    for earlier, later in zip(schedule, schedule[1:]):
        if not later < earlier:
            raise ValueError("schedule must be strictly decreasing")
    for t, value in enumerate(schedule):
        if value <= threshold:
            return t
    raise NotReachedError(
        f"schedule never reaches threshold {threshold} (last value {schedule[-1]})"
    )


# ---------------------------------------------------------------------------
# Discrete transition dynamics over knowledge states.
#
# One round rewrites a distribution over states in two strokes: a verify
# kernel maps each state to a distribution over verdict labels, and a model
# kernel maps each label to a distribution over next states.  Marginalizing
# the label out gives the next state distribution:
#
#     next(s') = sum over labels c, states s of
#                model_kernel[c][s'] * verify_kernel[s][c] * current[s]

@dataclass(frozen=True)
class TransitionModel:
    states: tuple[str, ...]
    labels: tuple[str, ...]
    verify_kernel: Mapping[str, Mapping[str, float]]   # state -> label -> prob
    model_kernel: Mapping[str, Mapping[str, float]]    # label -> state -> prob

    def validate(self) -> None:
        if not self.states or not self.labels:
            raise InvalidKernelError("states and labels must be non-empty")
        if len(set(self.states)) != len(self.states):
            raise InvalidKernelError("duplicate state names")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidKernelError("duplicate label names")
        self._check_rows(self.verify_kernel, self.states, self.labels, "verify_kernel")
        self._check_rows(self.model_kernel, self.labels, self.states, "model_kernel")

    @staticmethod
    def _check_rows(
        kernel: Mapping[str, Mapping[str, float]],
        row_keys: Sequence[str],
        col_keys: Sequence[str],
        name: str,
    ) -> None:
        for row_key in row_keys:
            if row_key not in kernel:
                raise InvalidKernelError(f"{name}: missing row {row_key!r}")
            row = kernel[row_key]
            if set(row) != set(col_keys):
                raise InvalidKernelError(
                    f"{name}[{row_key!r}]: columns do not match expected keys"
                )
            total = math.fsum(row.values())
            if any(v < 0 for v in row.values()):
                raise InvalidKernelError(f"{name}[{row_key!r}]: negative entry")
            if abs(total - 1.0) > _ROW_SUM_TOLERANCE:
                raise InvalidKernelError(
                    f"{name}[{row_key!r}]: row sums to {total!r}, not 1"
                )

    def verify_matrix(self) -> np.ndarray:
        """Rows indexed by state, columns by label."""
        return np.array(
            [[self.verify_kernel[s][c] for c in self.labels] for s in self.states]
        )

    def model_matrix(self) -> np.ndarray:
        """Rows indexed by label, columns by state."""
        return np.array(
            [[self.model_kernel[c][s] for s in self.states] for c in self.labels]
        )


def simulate_transition_step(
    model: TransitionModel, current: Mapping[str, float]
) -> dict[str, float]:
    """Advance a state distribution by one verify-and-rewrite round."""
    model.validate()
    if set(current) != set(model.states):
        raise InvalidKernelError("distribution keys do not match model states")
    mass = math.fsum(current.values())
    if any(v < 0 for v in current.values()) or abs(mass - 1.0) > _ROW_SUM_TOLERANCE:
        raise InvalidKernelError(f"input distribution sums to {mass!r}, not 1")
    p = np.array([current[s] for s in model.states])
    label_mass = model.verify_matrix().T @ p
    next_p = model.model_matrix().T @ label_mass
    return {state: float(next_p[i]) for i, state in enumerate(model.states)}


def simulate_transition(
    model: TransitionModel, initial: Mapping[str, float], steps: int
) -> list[dict[str, float]]:
    """Iterate the one-round update; element 0 is the initial distribution."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    history = [dict(initial)]
    current: Mapping[str, float] = initial
    for _ in range(steps):
        current = simulate_transition_step(model, current)
        history.append(dict(current))
    return history


def load_transition_model(
    path: Union[str, Path],
) -> tuple[TransitionModel, dict[str, float], Optional[list[float]]]:
    """Read a transition system from a JSON file.

    The file carries states, labels, both kernels, an initial distribution,
    and optionally a complexity schedule for stopping-turn queries.
    """
    with Path(path).open(encoding="utf-8") as handle:
        raw = json.load(handle)
    model = TransitionModel(
        states=tuple(raw["states"]),
        labels=tuple(raw["labels"]),
        verify_kernel={k: dict(v) for k, v in raw["verify_kernel"].items()},
        model_kernel={k: dict(v) for k, v in raw["model_kernel"].items()},
    )
    model.validate()
    initial = {k: float(v) for k, v in raw["initial"].items()}
    schedule = raw.get("complexity_schedule")
    if schedule is not None:
        schedule = [float(v) for v in schedule]
    return model, initial, schedule
