"""Length units and counters.

An English token is a maximal whitespace-delimited run that contains at least
one letter or digit; attached punctuation belongs to the run. A Chinese token
is one CJK character, with CJK punctuation counted or not depending on the
configured policy. Code lines are only counted by the marker parser.
"""

from __future__ import annotations

import enum
import re
import unicodedata
from dataclasses import dataclass

from .errors import InvalidTargetError, UnsupportedUnitError

__all__ = [
    "TokenUnit",
    "TokenSpan",
    "LengthTarget",
    "CjkPolicy",
    "tokenize_english",
    "count_cjk_characters",
    "is_cjk_ideograph",
    "is_cjk_punctuation",
    "measure_length",
    "normalize",
]


class TokenUnit(str, enum.Enum):
    ENGLISH_WORD = "words"
    CJK_CHARACTER = "characters"
    CODE_LINE = "lines"

    @classmethod
    def parse(cls, value: "str | TokenUnit") -> "TokenUnit":
        if isinstance(value, TokenUnit):
            return value
        aliases = {
            "en": cls.ENGLISH_WORD, "word": cls.ENGLISH_WORD, "words": cls.ENGLISH_WORD,
            "zh": cls.CJK_CHARACTER, "char": cls.CJK_CHARACTER, "chars": cls.CJK_CHARACTER,
            "character": cls.CJK_CHARACTER, "characters": cls.CJK_CHARACTER,
            "line": cls.CODE_LINE, "lines": cls.CODE_LINE, "code": cls.CODE_LINE,
        }
        try:
            return aliases[value.lower()]
        except KeyError:
            raise UnsupportedUnitError(f"unknown length unit {value!r}") from None


class CjkPolicy(str, enum.Enum):
    INCLUDE_PUNCTUATION = "include-punctuation"
    EXCLUDE_PUNCTUATION = "exclude-punctuation"


@dataclass(frozen=True)
class TokenSpan:
    surface: str
    start: int  # UTF-8 byte offset into the (normalized) source text
    unit: TokenUnit

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")


@dataclass(frozen=True)
class LengthTarget:
    value: int
    unit: TokenUnit = TokenUnit.ENGLISH_WORD

    def __post_init__(self):
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise InvalidTargetError(f"target must be an integer, got {self.value!r}")
        if self.value < 1:
            raise InvalidTargetError(f"target must be >= 1, got {self.value}")
        object.__setattr__(self, "unit", TokenUnit.parse(self.unit))

    @property
    def is_chinese(self) -> bool:
        return self.unit is TokenUnit.CJK_CHARACTER


_WORD_RUN = re.compile(r"\S+")
_MARKER = re.compile(r"<\d+>")

# Code-point blocks holding Han ideographs.
_IDEOGRAPH_RANGES = (
    (0x3400, 0x4DBF),    # Extension A
    (0x4E00, 0x9FFF),    # Unified Ideographs
    (0xF900, 0xFAFF),    # Compatibility Ideographs
    (0x20000, 0x2A6DF),  # Extension B
    (0x2A700, 0x2EBEF),  # Extensions C-F
    (0x2F800, 0x2FA1F),  # Compatibility Supplement
    (0x30000, 0x3134F),  # Extension G
)
# Blocks whose punctuation counts as CJK punctuation.
_CJK_PUNCT_RANGES = (
    (0x3001, 0x303F),  # CJK Symbols and Punctuation (0x3000 is ideographic space)
    (0xFE10, 0xFE1F),  # Vertical Forms
    (0xFE30, 0xFE4F),  # CJK Compatibility Forms
    (0xFF01, 0xFF65),  # Fullwidth ASCII variants and halfwidth CJK punctuation
)
# General-punctuation marks routinely used as Chinese punctuation.
_CHINESE_GENERAL_PUNCT = frozenset("—―‘’“”…·")


def _in_ranges(cp: int, ranges) -> bool:
    return any(lo <= cp <= hi for lo, hi in ranges)


def is_cjk_ideograph(ch: str) -> bool:
    return _in_ranges(ord(ch), _IDEOGRAPH_RANGES)


def is_cjk_punctuation(ch: str) -> bool:
    if ch in _CHINESE_GENERAL_PUNCT:
        return True
    if not _in_ranges(ord(ch), _CJK_PUNCT_RANGES):
        return False
    cat = unicodedata.category(ch)
    # Fullwidth letters and digits live in the same block; only marks count.
    return cat[0] in "PS"


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def _byte_offsets(text: str):
    """Return a function mapping character index to UTF-8 byte offset."""
    if text.isascii():
        return lambda i: i
    prefix = [0]
    total = 0
    for ch in text:
        total += len(ch.encode("utf-8"))
        prefix.append(total)
    return prefix.__getitem__


# [^\W_] is exactly str.isalnum() for str patterns.
_ALNUM = re.compile(r"[^\W_]")


def _has_alnum(run: str) -> bool:
    return _ALNUM.search(run) is not None


def tokenize_english(text: str) -> list[TokenSpan]:
    """Split *text* into English word tokens.

    Pure-punctuation runs such as a lone dash are dropped, so
    ``"state-of-the-art results, 2024."`` yields three tokens.
    """
    text = normalize(text)
    to_byte = _byte_offsets(text)
    return [
        TokenSpan(m.group(), to_byte(m.start()), TokenUnit.ENGLISH_WORD)
        for m in _WORD_RUN.finditer(text)
        if _has_alnum(m.group())
    ]


_SPACE = re.compile(r"\s")


def count_english_words(text: str) -> int:
    if not text.isascii():
        text = normalize(text)
    elif not _SPACE.search(text):
        # Single run, the common case for one countdown token.
        return 1 if _ALNUM.search(text) else 0
    return sum(1 for run in _WORD_RUN.findall(text) if _ALNUM.search(run))


def count_cjk_characters(text: str, policy: CjkPolicy | str = CjkPolicy.INCLUDE_PUNCTUATION) -> int:
    policy = CjkPolicy(policy)
    text = _MARKER.sub("", normalize(text))
    count = 0
    for ch in text:
        if is_cjk_ideograph(ch):
            count += 1
        elif policy is CjkPolicy.INCLUDE_PUNCTUATION and is_cjk_punctuation(ch):
            count += 1
    return count


def measure_length(
    text: str,
    unit: TokenUnit | str,
    *,
    cjk_policy: CjkPolicy | str = CjkPolicy.INCLUDE_PUNCTUATION,
) -> int:
    unit = TokenUnit.parse(unit)
    if unit is TokenUnit.ENGLISH_WORD:
        return count_english_words(text)
    if unit is TokenUnit.CJK_CHARACTER:
        return count_cjk_characters(text, cjk_policy)
    raise UnsupportedUnitError("code-line lengths come from the marker parser, not measure_length")
