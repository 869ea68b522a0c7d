"""Perplexity scoring microservice backed by a bundled trigram model."""

from .lm import (
    DEFAULT_MODEL_ID,
    ContextExceededError,
    EmptyTextError,
    LanguageModel,
    load_default,
)
from .service import create_app

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MODEL_ID",
    "ContextExceededError",
    "EmptyTextError",
    "LanguageModel",
    "create_app",
    "load_default",
    "__version__",
]
