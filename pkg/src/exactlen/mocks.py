"""Scripted backends used as test oracles and offline stand-ins for models."""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .gateway import ScriptedMock
from .markers import ErrorClass, synthesize
from .prompting import DRAFT_SENTINEL, RenderedPrompt, Strategy
from .tokenizer import LengthTarget, TokenUnit, measure_length

__all__ = [
    "mock_perfect_capel",
    "mock_faulty",
    "mock_echo",
    "mock_constant",
    "mock_count_oracle",
    "load_script",
    "FAULTS",
    "DEFAULT_FAULT_MIX",
]

_WORDS = (
    "the river carried quiet light across old stone while children laughed near "
    "a small market where bakers sold warm bread and fresh apples under bright "
    "morning skies people walked slowly talking about weather music books travel "
    "gardens friendship history science tomorrow evening stories windows mountains"
).split()
_HANZI = "天地人日月山水风云花草树木春夏秋冬东南西北大小多少中国学生老师朋友家里今明好美"

# Typical share of countdown failures: fusion, early stop, bare-marker tails.
DEFAULT_FAULT_MIX = {"off_by_one": 87, "early_stop": 9, "markers_only_tail": 4}


def _rng(seed: int, index: int) -> random.Random:
    return random.Random(seed * 1_000_003 + index)


class _PromptKeys:
    """Stable per-prompt draw numbers, independent of call order.

    The k-th time a given prompt text is seen it gets ``hash(text) + k``, so a
    run scheduled across worker threads still pairs each task with the same
    reply every time.
    """

    def __init__(self):
        self._seen: dict[str, int] = {}
        self._lock = threading.Lock()

    def __call__(self, prompt) -> int:
        text = prompt if isinstance(prompt, str) else prompt.full_text
        digest = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:6], "big")
        with self._lock:
            k = self._seen.get(text, 0)
            self._seen[text] = k + 1
        return digest + k


def _target_of(prompt, fixed: LengthTarget | None) -> LengthTarget:
    if fixed is not None:
        return fixed
    if isinstance(prompt, RenderedPrompt):
        return prompt.target
    raise ConfigError("this mock needs a RenderedPrompt or a fixed target")


def _tokens(target: LengthTarget, rng: random.Random) -> list[str]:
    pool = _HANZI if target.is_chinese else _WORDS
    toks = [rng.choice(pool) for _ in range(target.value)]
    if not target.is_chinese and toks:
        toks[0] = toks[0].capitalize()
        toks[-1] += "."
    return toks


def _plain(tokens: list[str], target: LengthTarget) -> str:
    return ("" if target.is_chinese else " ").join(tokens)


def _with_draft(prompt, body: str, target: LengthTarget, rng: random.Random) -> str:
    if isinstance(prompt, RenderedPrompt) and prompt.strategy.variant is Strategy.DRAFT_THEN_CAPEL:
        draft = _plain(_tokens(LengthTarget(max(3, target.value // 2), target.unit), rng), target)
        return f"{draft}\n{DRAFT_SENTINEL}\n{body}"
    return body


def mock_perfect_capel(target: LengthTarget | None = None, *, seed: int = 0, id: str = "mock-perfect",
                       **kwargs) -> ScriptedMock:
    """Backend whose every reply hits the target exactly.

    Countdown prompts get a well-formed countdown, baseline prompts get plain
    text of the right length. Without a fixed *target* the prompt's own target
    is used.
    """

    keys = _PromptKeys()

    def reply(prompt, index: int) -> str:
        tgt = _target_of(prompt, target)
        rng = _rng(seed, keys(prompt))
        toks = _tokens(tgt, rng)
        if isinstance(prompt, RenderedPrompt) and not prompt.strategy.uses_markers:
            return _plain(toks, tgt)
        return _with_draft(prompt, synthesize(toks, tgt), tgt, rng)

    return ScriptedMock(id, reply, **kwargs)


def _countdown(tokens: list[str], n: int, *, zero: bool = True) -> list[str]:
    parts = [f"<{n - i}>{tok}" for i, tok in enumerate(tokens)]
    if zero:
        parts.append("<0>")
    return parts


def _fault_off_by_one(toks, n, rng):
    # A marker loses its "<" and fuses with the token before it. English words
    # merge into one whitespace-free run; a Chinese character cannot merge, so
    # the fused marker's character is dropped instead.
    if n == 1:
        return "1><0>"
    m = rng.randint(1, n - 1)
    parts = _countdown(toks, n)
    idx = n - m
    fused = parts[idx][1:]
    if any("一" <= ch <= "鿿" for ch in fused):
        fused = f"{m}>"
    parts[idx] = fused
    return "".join(parts)


def _fault_early_stop(toks, n, rng):
    if n == 1:
        return ""
    emitted = rng.randint(1, n - 1)
    return "".join(_countdown(toks[:emitted], n)[:emitted]) + "<0>"


def _fault_markers_only_tail(toks, n, rng):
    bare = min(n, max(3, rng.randint(3, max(3, n // 4))))
    kept = toks[: n - bare]
    return "".join(_countdown(kept, n, zero=False)) + "".join(f"<{k}>" for k in range(bare, -1, -1))


def _fault_skipped_marker(toks, n, rng):
    if n < 3:
        return _fault_early_stop(toks, n, rng)
    parts = _countdown(toks, n)
    del parts[rng.randint(1, n - 2)]
    return "".join(parts)


def _fault_duplicate_marker(toks, n, rng):
    parts = _countdown(toks, n)
    i = rng.randrange(len(parts))
    parts.insert(i + 1, parts[i])
    return "".join(parts)


def _fault_missing_terminal(toks, n, rng):
    return "".join(_countdown(toks, n, zero=False))


def _fault_trailing_content(toks, n, rng):
    return "".join(_countdown(toks, n)) + " Hope this helps."


FAULTS = {
    "off_by_one": _fault_off_by_one,
    "early_stop": _fault_early_stop,
    "markers_only_tail": _fault_markers_only_tail,
    "skipped_marker": _fault_skipped_marker,
    "duplicate_marker": _fault_duplicate_marker,
    "missing_terminal": _fault_missing_terminal,
    "trailing_content": _fault_trailing_content,
}
_FAULT_ALIASES = {
    ErrorClass.OFF_BY_ONE_FUSION: "off_by_one",
    ErrorClass.EARLY_STOP: "early_stop",
    ErrorClass.MARKERS_ONLY_TAIL: "markers_only_tail",
    ErrorClass.SKIPPED_MARKER: "skipped_marker",
    ErrorClass.DUPLICATE_MARKER: "duplicate_marker",
    ErrorClass.MISSING_TERMINAL: "missing_terminal",
    ErrorClass.TRAILING_CONTENT: "trailing_content",
}


def _fault_name(name) -> str:
    if isinstance(name, ErrorClass):
        return _FAULT_ALIASES[name]
    key = str(name).lower().replace("-", "_")
    for cls, alias in _FAULT_ALIASES.items():
        if key == cls.value.lower():
            return alias
    if key not in FAULTS:
        raise ConfigError(f"unknown fault pattern {name!r}; choose from {sorted(FAULTS)}")
    return key


def _schedule(pattern, seed: int) -> list[str]:
    if isinstance(pattern, Mapping):
        slots = []
        for name, weight in pattern.items():
            slots += [_fault_name(name)] * int(weight)
        if not slots:
            raise ConfigError("fault mix has zero total weight")
        random.Random(seed).shuffle(slots)
        return slots
    return [_fault_name(pattern)]


def mock_faulty(pattern="off_by_one", target: LengthTarget | None = None, *, seed: int = 0,
                id: str = "mock-faulty", **kwargs) -> ScriptedMock:
    """Backend whose countdown replies carry a chosen defect.

    *pattern* is one fault name or a ``{name: weight}`` mix. With integer
    weights the mix is exact over every ``sum(weights)`` repeats of one
    prompt, e.g. ``{"off_by_one": 87, "early_stop": 9, "markers_only_tail": 4}``
    gives exactly that histogram over 100 calls with the same prompt, and
    close to it over many distinct prompts.
    """
    slots = _schedule(pattern, seed)

    keys = _PromptKeys()

    def reply(prompt, index: int) -> str:
        tgt = _target_of(prompt, target)
        key = keys(prompt)
        rng = _rng(seed, key)
        toks = _tokens(tgt, rng)
        body = FAULTS[slots[key % len(slots)]](toks, tgt.value, rng)
        return _with_draft(prompt, body, tgt, rng)

    mock = ScriptedMock(id, reply, **kwargs)
    mock.fault_schedule = slots
    return mock


def mock_echo(*, id: str = "mock-echo", **kwargs) -> ScriptedMock:
    return ScriptedMock(id, lambda prompt, i: prompt if isinstance(prompt, str) else prompt.full_text, **kwargs)


def mock_constant(reply: str, *, id: str = "mock-constant", **kwargs) -> ScriptedMock:
    return ScriptedMock(id, [reply], **kwargs)


def mock_count_oracle(*, id: str = "mock-count-oracle", **kwargs) -> ScriptedMock:
    """Answers the counting query with the true token count of the sentence."""
    from .harness.diagnostic import COUNT_QUERY

    def reply(prompt, index: int) -> str:
        text = prompt if isinstance(prompt, str) else prompt.full_text
        sentence = text.rsplit(COUNT_QUERY, 1)[0]
        unit = prompt.target.unit if isinstance(prompt, RenderedPrompt) else TokenUnit.ENGLISH_WORD
        return f"There are {measure_length(sentence, unit)} tokens."

    return ScriptedMock(id, reply, **kwargs)


_DIRECTIVE = re.compile(r"^@(\S+)\s*(.*)$")


def _parse_mix(arg: str):
    arg = arg.strip() or "off_by_one"
    if "=" not in arg:
        return arg
    mix = {}
    for item in arg.split(","):
        name, _, weight = item.partition("=")
        mix[name.strip()] = int(weight)
    return mix


def build_directive(name: str, arg: str = "", *, id: str | None = None, seed: int = 0, **kwargs) -> ScriptedMock:
    kw = dict(kwargs)
    if id:
        kw["id"] = id
    if name == "perfect":
        return mock_perfect_capel(seed=seed, **kw)
    if name == "faulty":
        return mock_faulty(_parse_mix(arg), seed=seed, **kw)
    if name == "echo":
        return mock_echo(**kw)
    if name == "count-oracle":
        return mock_count_oracle(**kw)
    if name == "constant":
        return mock_constant(arg, **kw)
    raise ConfigError(f"unknown mock directive @{name}")


def load_script(source: str | Path, *, id: str | None = None, seed: int = 0, **kwargs) -> ScriptedMock:
    """Build a mock from a script file or an inline ``@directive``.

    Script files hold one reply per line; a line starting with ``"`` is read
    as a JSON string so replies can carry newlines. ``#`` starts a comment.
    A single ``@perfect``, ``@faulty off_by_one=87,early_stop=9``, ``@echo``,
    ``@count-oracle`` or ``@constant TEXT`` line selects a generator instead.
    """
    text = str(source)
    if text.startswith("@"):
        lines = [text]
        name = id or "mock"
    else:
        path = Path(source)
        lines = path.read_text(encoding="utf-8").splitlines()
        name = id or path.stem
    replies = []
    for line in lines:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _DIRECTIVE.match(line.strip())
        if m:
            return build_directive(m.group(1), m.group(2), id=name, seed=seed, **kwargs)
        replies.append(json.loads(line) if line.startswith('"') else line)
    if not replies:
        raise ConfigError(f"mock script {source} has no replies")
    return ScriptedMock(name, replies, **kwargs)
