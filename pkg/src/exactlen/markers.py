"""Countdown-marker grammar: parse, validate, strip and synthesize.

A well-formed reply for target N is ``<N>tok<N-1>tok ... <1>tok<0>`` with
nothing but whitespace after ``<0>``. Parsing never fails; every structural
problem is reported by :func:`validate` as a classified error.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

from .errors import InvalidArgumentsError
from .tokenizer import (
    CjkPolicy,
    LengthTarget,
    TokenSpan,
    TokenUnit,
    _byte_offsets,
    count_cjk_characters,
    count_english_words,
    normalize,
)

__all__ = [
    "ErrorClass",
    "MarkerPair",
    "ParsedOutput",
    "Issue",
    "ValidationReport",
    "parse",
    "validate",
    "check",
    "strip_markers",
    "synthesize",
    "find_fused_markers",
    "repeated_filler",
    "MARKERS_ONLY_TAIL_RUN",
]

MARKERS_ONLY_TAIL_RUN = 3


class ErrorClass(str, enum.Enum):
    EARLY_STOP = "EarlyStop"
    MISSING_TERMINAL = "MissingTerminal"
    DUPLICATE_MARKER = "DuplicateMarker"
    SKIPPED_MARKER = "SkippedMarker"
    BACK_TO_BACK_MARKERS = "BackToBackMarkers"
    MARKERS_ONLY_TAIL = "MarkersOnlyTail"
    TRAILING_CONTENT = "TrailingContent"
    WRONG_START_VALUE = "WrongStartValue"
    OFF_BY_ONE_FUSION = "OffByOneFusion"


# Most specific first; decides ValidationReport.primary.
_PRIORITY = (
    ErrorClass.OFF_BY_ONE_FUSION,
    ErrorClass.WRONG_START_VALUE,
    ErrorClass.DUPLICATE_MARKER,
    ErrorClass.SKIPPED_MARKER,
    ErrorClass.EARLY_STOP,
    ErrorClass.MARKERS_ONLY_TAIL,
    ErrorClass.BACK_TO_BACK_MARKERS,
    ErrorClass.MISSING_TERMINAL,
    ErrorClass.TRAILING_CONTENT,
)


@dataclass(frozen=True)
class MarkerPair:
    k: int
    token: TokenSpan | None
    position: int  # byte offset of the marker
    raw_text: str = ""  # untrimmed text up to the next marker

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("marker values are non-negative")
        if self.k == 0 and self.token is not None:
            raise ValueError("<0> never carries a token")


@dataclass
class ParsedOutput:
    pairs: list[MarkerPair]
    has_terminal_zero: bool
    trailing_text: str
    source_target: LengthTarget
    leading_text: str = ""
    code_mode: bool = False
    cjk_policy: CjkPolicy = CjkPolicy.INCLUDE_PUNCTUATION
    marker_open: str = "<"
    marker_close: str = ">"
    byte_length: int = 0

    @property
    def unit(self) -> TokenUnit:
        return TokenUnit.CODE_LINE if self.code_mode else self.source_target.unit

    @property
    def token_count(self) -> int:
        return sum(1 for p in self.pairs if p.k >= 1 and p.token is not None)


@dataclass(frozen=True)
class Issue:
    error_class: ErrorClass | str
    position: int
    detail: str = ""

    def to_dict(self) -> dict:
        cls = self.error_class.value if isinstance(self.error_class, ErrorClass) else self.error_class
        return {"class": cls, "position": self.position, "detail": self.detail}


@dataclass
class ValidationReport:
    errors: list[Issue]
    achieved_length: int
    warnings: list[Issue] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.errors

    @property
    def classes(self) -> set[ErrorClass]:
        return {e.error_class for e in self.errors}

    @property
    def primary(self) -> ErrorClass | None:
        for cls in _PRIORITY:
            if cls in self.classes:
                return cls
        return None

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "achieved_length": self.achieved_length,
            "primary": self.primary.value if self.primary else None,
            "errors": [e.to_dict() for e in self.errors],
            "warnings": [w.to_dict() for w in self.warnings],
        }


_SPACE = re.compile(r"\s")


@lru_cache(maxsize=16)
def _patterns(marker_open: str, marker_close: str):
    o, c = re.escape(marker_open), re.escape(marker_close)
    marker = re.compile(f"{o}(\\d+){c}")
    # A marker that lost one delimiter and got glued to neighbouring text.
    lost_open = re.compile(f"(?<![\\d{o}])(\\d+){c}")
    lost_close = re.compile(f"{o}(\\d+)(?![\\d{c}])")
    return marker, lost_open, lost_close


def find_fused_markers(text: str, marker_open: str = "<", marker_close: str = ">") -> list[tuple[int, int]]:
    """Return ``(value, char_index)`` for every half-marker remnant in *text*."""
    _, lost_open, lost_close = _patterns(marker_open, marker_close)
    hits = [(int(m.group(1)), m.start()) for m in lost_open.finditer(text)]
    hits += [(int(m.group(1)), m.start()) for m in lost_close.finditer(text)]
    return sorted(hits, key=lambda h: h[1])


def _remove_remnants(text: str, marker_open: str, marker_close: str) -> str:
    if marker_open not in text and marker_close not in text:
        return text
    _, lost_open, lost_close = _patterns(marker_open, marker_close)
    text = lost_close.sub("", lost_open.sub("", text))
    return text.replace(marker_open, "")


def parse(
    raw: str,
    target: LengthTarget,
    code_mode: bool = False,
    *,
    cjk_policy: CjkPolicy | str = CjkPolicy.INCLUDE_PUNCTUATION,
    marker_open: str = "<",
    marker_close: str = ">",
) -> ParsedOutput:
    """Split *raw* into ``(marker, token)`` pairs.

    In code mode the text between markers is kept verbatim so a token can be a
    whole code line including its trailing newline; otherwise it is trimmed.
    """
    raw = normalize(raw)
    to_byte = _byte_offsets(raw)
    marker_re, _, _ = _patterns(marker_open, marker_close)
    matches = list(marker_re.finditer(raw))
    unit = TokenUnit.CODE_LINE if code_mode else target.unit

    leading = raw[: matches[0].start()] if matches else raw
    ends = [m.start() for m in matches[1:]] + [len(raw)]
    pairs: list[MarkerPair] = []
    for m, seg_end in zip(matches, ends):
        k = int(m.group(1))
        seg_start = m.end()
        seg = raw[seg_start:seg_end]
        token = None
        if k >= 1:
            trimmed = seg.strip()
            if trimmed:
                if code_mode:
                    token = TokenSpan(seg, to_byte(seg_start), unit)
                else:
                    token = TokenSpan(trimmed, to_byte(seg_start + seg.find(trimmed[0])), unit)
        pairs.append(MarkerPair(k, token, to_byte(m.start()), seg))

    has_zero = any(p.k == 0 for p in pairs)
    trailing = pairs[-1].raw_text if pairs and pairs[-1].k == 0 else ""
    return ParsedOutput(
        pairs=pairs,
        has_terminal_zero=has_zero,
        trailing_text=trailing,
        source_target=target,
        leading_text=leading if matches else raw,
        code_mode=code_mode,
        cjk_policy=CjkPolicy(cjk_policy),
        marker_open=marker_open,
        marker_close=marker_close,
        byte_length=to_byte(len(raw)),
    )


def _units_in(parsed: ParsedOutput, surface: str) -> int:
    """How many countable units a token surface holds."""
    if parsed.code_mode:
        return 1 if surface.strip() else 0
    cleaned = _remove_remnants(surface, parsed.marker_open, parsed.marker_close)
    if parsed.source_target.unit is TokenUnit.CJK_CHARACTER:
        return count_cjk_characters(cleaned, parsed.cjk_policy)
    return count_english_words(cleaned)


def _fused_value_in(text: str, value: int, parsed: ParsedOutput) -> bool:
    _, lost_open, lost_close = _patterns(parsed.marker_open, parsed.marker_close)
    digits = str(value)
    # The lost-open digit run may be glued to a word ending in digits ("in20241>").
    if any(m.group(1).endswith(digits) for m in lost_open.finditer(text)):
        return True
    return any(m.group(1) == digits for m in lost_close.finditer(text))


def validate(parsed: ParsedOutput) -> ValidationReport:
    target = parsed.source_target.value
    pairs = parsed.pairs
    errors: list[Issue] = []
    warnings: list[Issue] = []
    end = parsed.byte_length

    def err(cls: ErrorClass, pos: int, detail: str) -> None:
        errors.append(Issue(cls, pos, detail))

    chain: list[MarkerPair] = []
    explained: set[int] = set()  # marker values accounted for by a fusion or skip

    if pairs:
        first = pairs[0]
        if first.k != target:
            if first.k == target - 1 and _fused_value_in(parsed.leading_text, target, parsed):
                err(ErrorClass.OFF_BY_ONE_FUSION, 0, f"marker <{target}> fused into leading text")
                explained.add(target)
            else:
                err(ErrorClass.WRONG_START_VALUE, first.position, f"first marker is <{first.k}>, expected <{target}>")
        elif parsed.leading_text.strip():
            warnings.append(Issue("LeadingText", 0, "text before the first marker"))
        chain.append(first)
        seen = {first.k}
        prev_pair = first
        for q in pairs[1:]:
            prev = chain[-1].k
            v = q.k
            if v == prev - 1:
                chain.append(q)
            elif v in seen:
                err(ErrorClass.DUPLICATE_MARKER, q.position, f"marker <{v}> repeated")
            elif v > prev:
                err(ErrorClass.SKIPPED_MARKER, q.position, f"marker <{v}> after <{prev}> breaks the countdown")
            else:
                if _fused_value_in(prev_pair.raw_text, prev - 1, parsed):
                    err(ErrorClass.OFF_BY_ONE_FUSION, prev_pair.position,
                        f"marker <{prev - 1}> fused into the token of <{prev}>")
                    explained.add(prev - 1)
                    if v < prev - 2:
                        err(ErrorClass.SKIPPED_MARKER, q.position, f"markers <{prev - 2}>..<{v + 1}> missing")
                elif v == 0:
                    err(ErrorClass.EARLY_STOP, q.position, f"<0> after <{prev}>; countdown never reached <1>")
                else:
                    err(ErrorClass.SKIPPED_MARKER, q.position, f"jump from <{prev}> to <{v}>")
                explained.update(range(v + 1, prev))
                chain.append(q)
            seen.add(v)
            prev_pair = q

        last = chain[-1].k
        if last > 1 and not parsed.has_terminal_zero and _fused_value_in(pairs[-1].raw_text, last - 1, parsed):
            err(ErrorClass.OFF_BY_ONE_FUSION, pairs[-1].position, f"marker <{last - 1}> fused into the final token")
            explained.add(last - 1)

    reached_one = any(p.k == 1 for p in chain)
    if not reached_one and 1 not in explained and ErrorClass.EARLY_STOP not in {e.error_class for e in errors}:
        err(ErrorClass.EARLY_STOP, end, "countdown never reached <1>")
    if not parsed.has_terminal_zero:
        err(ErrorClass.MISSING_TERMINAL, end, "no <0> terminal marker")

    # Empty tokens, in source order; a <0> ends a run.
    run: list[MarkerPair] = []

    def close_run() -> None:
        if len(run) >= MARKERS_ONLY_TAIL_RUN:
            err(ErrorClass.MARKERS_ONLY_TAIL, run[0].position, f"{len(run)} consecutive bare markers")
        run.clear()

    units_of = {id(p): _units_in(parsed, p.token.surface) if p.token else 0 for p in pairs if p.k >= 1}
    for p in pairs:
        if p.k == 0:
            close_run()
            continue
        units = units_of[id(p)]
        if units == 0:
            err(ErrorClass.BACK_TO_BACK_MARKERS, p.position, f"marker <{p.k}> has no token")
            run.append(p)
            continue
        close_run()
        if units > 1 and not parsed.code_mode:
            kind = "MultiCharacterToken" if parsed.source_target.is_chinese else "MultiWordToken"
            warnings.append(Issue(kind, p.token.start, f"token after <{p.k}> holds {units} units"))
        if not parsed.code_mode and p.raw_text[:1].isspace():
            warnings.append(Issue("SpaceAfterMarker", p.position, f"whitespace between <{p.k}> and its token"))
    close_run()

    for p in pairs:
        if p.k == 0 and p.raw_text.strip():
            err(ErrorClass.TRAILING_CONTENT, p.position, "text after <0>")

    achieved = sum(1 for p in chain if p.k >= 1 and units_of[id(p)] > 0)

    surfaces = [p.token.surface for p in pairs if p.k >= 1 and p.token is not None]
    for gram, count in repeated_filler(surfaces):
        warnings.append(Issue("RepeatedFiller", 0, f"{' '.join(gram)!r} repeated {count} times (advisory)"))

    errors.sort(key=lambda e: e.position)
    return ValidationReport(errors, achieved, warnings)


def check(raw: str, target: LengthTarget, code_mode: bool = False, **kwargs) -> tuple[ParsedOutput, ValidationReport]:
    parsed = parse(raw, target, code_mode, **kwargs)
    return parsed, validate(parsed)


def strip_markers(parsed: ParsedOutput, *, keep_untagged: bool = False) -> str:
    """Drop every marker and return the answer text.

    Tokens are joined with single spaces (English), nothing (Chinese), or
    verbatim in code mode. ``keep_untagged`` also keeps text outside the
    countdown (before the first marker, after ``<0>``), which is what length
    measurement over a whole reply needs.
    """
    pieces: list[str] = []
    if keep_untagged and parsed.leading_text.strip():
        pieces.append(parsed.leading_text)
    for p in parsed.pairs:
        if p.k >= 1 and p.token is not None:
            pieces.append(p.token.surface)
        elif keep_untagged and p.raw_text.strip():
            pieces.append(p.raw_text)

    if parsed.code_mode:
        out = []
        for piece in pieces:
            if out and not out[-1][-1:].isspace():
                out.append(" ")
            out.append(piece)
        return "".join(out)

    cleaned = [_remove_remnants(x, parsed.marker_open, parsed.marker_close).strip() for x in pieces]
    sep = "" if parsed.source_target.is_chinese else " "
    return sep.join(x for x in cleaned if x)


def synthesize(
    tokens: list[str],
    target: LengthTarget,
    *,
    code_mode: bool = False,
    marker_open: str = "<",
    marker_close: str = ">",
) -> str:
    """Build the canonical countdown string for *tokens*."""
    n = target.value
    if len(tokens) != n:
        raise InvalidArgumentsError(f"{len(tokens)} tokens for a target of {n}")
    marker_re, _, _ = _patterns(marker_open, marker_close)
    counter = count_cjk_characters if target.is_chinese else count_english_words
    parts = []
    for i, tok in enumerate(tokens):
        if not tok or not tok.strip():
            raise InvalidArgumentsError(f"token {i} is empty")
        if not code_mode and _SPACE.search(tok):
            raise InvalidArgumentsError(f"token {i} ({tok!r}) contains whitespace")
        if marker_open in tok and marker_re.search(tok):
            raise InvalidArgumentsError(f"token {i} ({tok!r}) contains a marker")
        if not code_mode and counter(tok) < 1:
            raise InvalidArgumentsError(f"token {i} ({tok!r}) holds no countable {target.unit.value[:-1]}")
        parts.append(f"{marker_open}{n - i}{marker_close}{tok}")
    parts.append(f"{marker_open}0{marker_close}")
    return "".join(parts)


def repeated_filler(tokens: list[str], n: int = 3, min_repeats: int = 4) -> list[tuple[tuple[str, ...], int]]:
    """Flag n-grams repeated often enough to look like padding.

    A heuristic only; repetition is not always filler.
    """
    if len(tokens) < n * min_repeats:
        return []
    words = [t.lower().strip(".,;:!?\"'") for t in tokens]
    grams = Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))
    return [(g, c) for g, c in grams.most_common() if c >= min_repeats]
