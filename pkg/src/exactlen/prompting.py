"""Prompt synthesis for the four length-control strategies.

Every strategy appends a suffix to the task text. The countdown suffix and its
variants are stored as plain-text templates under ``templates/`` with the
named placeholders ``{target_length}``, ``{unit}`` and ``{sentinel}``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import InvalidArgumentsError, InvalidTargetError
from .tokenizer import LengthTarget, TokenUnit

__all__ = [
    "Strategy",
    "Language",
    "PromptStrategy",
    "CapelConfig",
    "RenderedPrompt",
    "DRAFT_SENTINEL",
    "render_baseline",
    "render_capel",
    "render_draft_then_capel",
    "render",
    "extract_revision",
    "load_template",
]

DRAFT_SENTINEL = "=== FINAL COUNTDOWN ANSWER ==="

_PLACEHOLDER = re.compile(r"\{[a-z_]+\}")


class Strategy(str, enum.Enum):
    BASELINE = "baseline"
    CAPEL = "capel"
    DRAFT_THEN_CAPEL = "draft-capel"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        key = value.lower().replace("_", "-")
        aliases = {"draft-then-capel": cls.DRAFT_THEN_CAPEL, "draft": cls.DRAFT_THEN_CAPEL}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InvalidArgumentsError(f"unknown strategy {value!r}") from None


class Language(str, enum.Enum):
    ENGLISH = "en"
    CHINESE = "zh"

    @classmethod
    def for_unit(cls, unit: TokenUnit) -> "Language":
        return cls.CHINESE if unit is TokenUnit.CJK_CHARACTER else cls.ENGLISH


@dataclass(frozen=True)
class PromptStrategy:
    variant: Strategy = Strategy.CAPEL
    code_aware: bool = False
    language: Language = Language.ENGLISH

    def __post_init__(self):
        object.__setattr__(self, "variant", Strategy.parse(self.variant))
        object.__setattr__(self, "language", Language(self.language))
        if self.code_aware and self.variant is Strategy.BASELINE:
            raise InvalidArgumentsError("the code-aware rule only applies to countdown strategies")

    @property
    def uses_markers(self) -> bool:
        return self.variant is not Strategy.BASELINE

    @property
    def name(self) -> str:
        return self.variant.value + ("+code" if self.code_aware else "")


@dataclass(frozen=True)
class CapelConfig:
    target: LengthTarget
    decrement: int = 1
    marker_open: str = "<"
    marker_close: str = ">"

    def __post_init__(self):
        if self.decrement != 1:
            raise InvalidArgumentsError("the countdown decrement is fixed at 1")
        if not self.marker_open or not self.marker_close:
            raise InvalidArgumentsError("marker delimiters must be non-empty")
        if self.marker_open == self.marker_close:
            raise InvalidArgumentsError("marker delimiters must differ")


@dataclass(frozen=True)
class RenderedPrompt:
    task_text: str
    suffix_text: str
    strategy: PromptStrategy
    target: LengthTarget
    system_text: str | None = None

    @property
    def full_text(self) -> str:
        return self.task_text + self.suffix_text


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


def _fill(template: str, **values) -> str:
    text = template.format_map(values)
    leftover = _PLACEHOLDER.search(text)
    if leftover:
        raise InvalidArgumentsError(f"unexpanded placeholder {leftover.group()} in template")
    return text


def _unit_word(target: LengthTarget) -> str:
    word = "character" if target.unit is TokenUnit.CJK_CHARACTER else "word"
    return word if target.value == 1 else word + "s"


def _check_target(target: LengthTarget) -> None:
    # LengthTarget validates on construction; this guards duck-typed targets.
    if not isinstance(target.value, int) or target.value < 1:
        raise InvalidTargetError(f"target must be >= 1, got {target.value!r}")


def _swap_markers(text: str, cfg: CapelConfig) -> str:
    if (cfg.marker_open, cfg.marker_close) == ("<", ">"):
        return text
    return re.sub(r"<(\d+|k|\{target_length\})>", lambda m: cfg.marker_open + m.group(1) + cfg.marker_close, text)


def render_baseline(task: str, target: LengthTarget, language: Language | str | None = None) -> RenderedPrompt:
    _check_target(target)
    language = Language(language) if language is not None else Language.for_unit(target.unit)
    suffix = _fill(load_template(f"baseline_{language.value}"),
                   target_length=target.value, unit=_unit_word(target))
    return RenderedPrompt(task, suffix, PromptStrategy(Strategy.BASELINE, False, language), target)


def _capel_block(cfg: CapelConfig, code_aware: bool, language: Language) -> str:
    block = _fill(load_template(f"capel_{language.value}"), target_length=cfg.target.value)
    if code_aware:
        block += load_template(f"code_rule_{language.value}")
    return _swap_markers(block, cfg)


def render_capel(
    task: str,
    cfg: CapelConfig,
    code_aware: bool = False,
    language: Language | str | None = None,
) -> RenderedPrompt:
    _check_target(cfg.target)
    language = Language(language) if language is not None else Language.for_unit(cfg.target.unit)
    suffix = _capel_block(cfg, code_aware, language)
    return RenderedPrompt(task, suffix, PromptStrategy(Strategy.CAPEL, code_aware, language), cfg.target)


def render_draft_then_capel(
    task: str,
    cfg: CapelConfig,
    code_aware: bool = False,
    language: Language | str | None = None,
) -> RenderedPrompt:
    _check_target(cfg.target)
    language = Language(language) if language is not None else Language.for_unit(cfg.target.unit)
    intro = _fill(load_template(f"draft_{language.value}"), sentinel=DRAFT_SENTINEL)
    suffix = intro + _capel_block(cfg, code_aware, language)
    return RenderedPrompt(task, suffix, PromptStrategy(Strategy.DRAFT_THEN_CAPEL, code_aware, language), cfg.target)


def render(task: str, target: LengthTarget, strategy: PromptStrategy | Strategy | str = Strategy.CAPEL,
           **capel_kwargs) -> RenderedPrompt:
    """Dispatch on *strategy*; ``capel_kwargs`` go to :class:`CapelConfig`."""
    if not isinstance(strategy, PromptStrategy):
        strategy = PromptStrategy(Strategy.parse(strategy), language=Language.for_unit(target.unit))
    if strategy.variant is Strategy.BASELINE:
        return render_baseline(task, target, strategy.language)
    cfg = CapelConfig(target, **capel_kwargs)
    if strategy.variant is Strategy.CAPEL:
        return render_capel(task, cfg, strategy.code_aware, strategy.language)
    return render_draft_then_capel(task, cfg, strategy.code_aware, strategy.language)


def extract_revision(raw: str) -> str:
    """Return the part of a draft-then-revise reply that gets scored.

    That is everything after the last sentinel line, or the whole reply when
    the model never wrote the sentinel.
    """
    head, sep, tail = raw.rpartition(DRAFT_SENTINEL)
    if not sep:
        return raw
    return tail.lstrip("\r\n")
