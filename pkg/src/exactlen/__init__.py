"""Exact-length text generation with countdown markers, and tools to measure it."""

from .markers import ErrorClass, ParsedOutput, ValidationReport, check, parse, strip_markers, synthesize, validate
from .prompting import CapelConfig, PromptStrategy, RenderedPrompt, Strategy, render
from .tokenizer import LengthTarget, TokenUnit, measure_length, tokenize_english

__version__ = "0.1.0"

__all__ = [
    "CapelConfig",
    "ErrorClass",
    "LengthTarget",
    "ParsedOutput",
    "PromptStrategy",
    "RenderedPrompt",
    "Strategy",
    "TokenUnit",
    "ValidationReport",
    "check",
    "measure_length",
    "parse",
    "render",
    "strip_markers",
    "synthesize",
    "tokenize_english",
    "validate",
]
