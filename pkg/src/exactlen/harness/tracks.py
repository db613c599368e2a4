"""Experiment tracks and their dataset loaders.

File-backed tracks read JSON Lines, one object per line. Schemas:

* ``xsum``: ``{"id", "document", "summary"}``
* ``mtbench-li``: ``{"id", "category", "prompt", "target"}``
* ``lifebench``: ``{"id", "instruction", "language"?, "category"?}``
* ``counting``: ``{"id"?, "sentence", "language"?, "length"?}``, or a plain
  text file with one sentence per line.

The random-text track needs no file.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import LoadError
from ..gateway import CATEGORY_TEMPERATURES
from ..tokenizer import LengthTarget, TokenUnit, measure_length

__all__ = [
    "Track",
    "TaskInstance",
    "load_track",
    "LIFEBENCH_BUDGETS",
    "XSUM_FIXED_BUDGETS",
    "COUNTING_LENGTHS",
]

LIFEBENCH_BUDGETS = (16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192)
XSUM_FIXED_BUDGETS = (50, 120)
COUNTING_LENGTHS = tuple(range(1, 11))

_RANDOM_TEXT_TASK = {
    "en": "Write a coherent passage of prose on any topic you like.",
    "zh": "请写一段连贯的文字，主题不限。",
}


class Track(str, enum.Enum):
    RANDOM_TEXT = "random-text"
    XSUM = "xsum"
    MT_BENCH_LI = "mtbench-li"
    LIFEBENCH_EQUAL_TO = "lifebench"
    COUNTING_DIAGNOSTIC = "counting"

    @classmethod
    def parse(cls, value: "str | Track") -> "Track":
        if isinstance(value, Track):
            return value
        key = value.lower().replace("_", "-")
        aliases = {"random": cls.RANDOM_TEXT, "mtbench": cls.MT_BENCH_LI, "mt-bench-li": cls.MT_BENCH_LI,
                   "lifebench-equal-to": cls.LIFEBENCH_EQUAL_TO, "diagnostic": cls.COUNTING_DIAGNOSTIC}
        return aliases.get(key) or cls(key)


@dataclass(frozen=True)
class TaskInstance:
    id: str
    track: Track
    task_text: str
    target: LengthTarget
    category: str | None = None
    reference: str | None = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def language(self) -> str:
        return "zh" if self.target.is_chinese else "en"


def _unit(language: str) -> TokenUnit:
    if language not in ("en", "zh"):
        raise ValueError(f"language must be 'en' or 'zh', got {language!r}")
    return TokenUnit.CJK_CHARACTER if language == "zh" else TokenUnit.ENGLISH_WORD


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    if not path.exists():
        raise LoadError("file not found", path=path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"invalid JSON ({exc.msg})", path=path, line=lineno) from None
            if not isinstance(obj, dict):
                raise LoadError("expected a JSON object", path=path, line=lineno)
            rows.append((lineno, obj))
    if not rows:
        raise LoadError("no records", path=path)
    return rows


def _field(obj: dict, name: str, path: Path, lineno: int, kind=str, *aliases):
    for key in (name, *aliases):
        if key in obj:
            value = obj[key]
            break
    else:
        raise LoadError("missing field", path=path, line=lineno, field=name)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise LoadError(f"expected a positive integer, got {value!r}", path=path, line=lineno, field=name)
    elif not isinstance(value, kind) or (kind is str and not value.strip()):
        raise LoadError(f"expected non-empty {kind.__name__}", path=path, line=lineno, field=name)
    return value


def _language(obj: dict, default: str, path: Path, lineno: int) -> str:
    lang = obj.get("language", default)
    if lang not in ("en", "zh"):
        raise LoadError(f"language must be 'en' or 'zh', got {lang!r}", path=path, line=lineno, field="language")
    return lang


def _random_text(language: str, min_target: int, max_target: int) -> list[TaskInstance]:
    unit = _unit(language)
    task = _RANDOM_TEXT_TASK[language]
    return [
        TaskInstance(f"rt-{language}-{n:04d}", Track.RANDOM_TEXT, task, LengthTarget(n, unit))
        for n in range(min_target, max_target + 1)
    ]


def _xsum(path: Path, include_five: bool) -> list[TaskInstance]:
    budgets = ((5,) if include_five else ()) + XSUM_FIXED_BUDGETS
    out = []
    for lineno, obj in _read_jsonl(path):
        doc_id = obj.get("id", obj.get("doc_id", lineno))
        document = _field(obj, "document", path, lineno)
        summary = _field(obj, "summary", path, lineno)
        ref_len = measure_length(summary, TokenUnit.ENGLISH_WORD)
        if ref_len < 1:
            raise LoadError("reference summary has no words", path=path, line=lineno, field="summary")
        task = f"Summarize the following article.\n\n{document}"
        seen = set()
        for label, n in (("ref", ref_len), *((str(b), b) for b in budgets)):
            if n in seen:
                continue
            seen.add(n)
            out.append(TaskInstance(f"xsum-{doc_id}-{label}", Track.XSUM, task,
                                    LengthTarget(n, TokenUnit.ENGLISH_WORD), reference=summary,
                                    meta={"budget": label}))
    return out


def _mtbench(path: Path) -> list[TaskInstance]:
    out = []
    for lineno, obj in _read_jsonl(path):
        category = _field(obj, "category", path, lineno)
        if category not in CATEGORY_TEMPERATURES:
            raise LoadError(f"unknown category {category!r}", path=path, line=lineno, field="category")
        if "prompt" not in obj and isinstance(obj.get("turns"), list) and obj["turns"]:
            prompt = obj["turns"][0]
        else:
            prompt = _field(obj, "prompt", path, lineno)
        target = _field(obj, "target", path, lineno, int, "target_length")
        qid = obj.get("id", obj.get("question_id", lineno))
        out.append(TaskInstance(f"mtb-{qid}", Track.MT_BENCH_LI, prompt,
                                LengthTarget(target, TokenUnit.ENGLISH_WORD), category=category))
    return out


def _lifebench(path: Path, language: str) -> list[TaskInstance]:
    out = []
    for lineno, obj in _read_jsonl(path):
        instruction = _field(obj, "instruction", path, lineno)
        lang = _language(obj, language, path, lineno)
        base = obj.get("id", lineno)
        for n in LIFEBENCH_BUDGETS:
            out.append(TaskInstance(f"life-{lang}-{base}-{n}", Track.LIFEBENCH_EQUAL_TO, instruction,
                                    LengthTarget(n, _unit(lang)), category=obj.get("category")))
    return out


def _counting(path: Path, language: str) -> list[TaskInstance]:
    if path.suffix in (".txt", ".text"):
        if not path.exists():
            raise LoadError("file not found", path=path)
        lines = path.read_text(encoding="utf-8").splitlines()
        rows = [(i, {"sentence": s}) for i, s in enumerate(lines, 1) if s.strip()]
        if not rows:
            raise LoadError("no records", path=path)
    else:
        rows = _read_jsonl(path)
    out = []
    for lineno, obj in rows:
        sentence = _field(obj, "sentence", path, lineno)
        lang = _language(obj, language, path, lineno)
        true_len = measure_length(sentence, _unit(lang))
        if "length" in obj and obj["length"] != true_len:
            raise LoadError(f"declared length {obj['length']} but the sentence has {true_len} tokens",
                            path=path, line=lineno, field="length")
        if true_len not in COUNTING_LENGTHS:
            raise LoadError(f"sentence length {true_len} outside 1..10", path=path, line=lineno, field="sentence")
        sid = obj.get("id", f"{lang}-{lineno}")
        out.append(TaskInstance(f"count-{sid}", Track.COUNTING_DIAGNOSTIC, sentence,
                                LengthTarget(true_len, _unit(lang))))
    return out


def load_track(
    track: Track | str,
    source: str | Path | None = None,
    *,
    language: str = "en",
    min_target: int = 1,
    max_target: int = 1000,
    include_five_word_budget: bool = False,
) -> list[TaskInstance]:
    track = Track.parse(track)
    if track is Track.RANDOM_TEXT:
        return _random_text(language, min_target, max_target)
    if source is None:
        raise LoadError(f"track {track.value} needs a source file")
    path = Path(source)
    if track is Track.XSUM:
        return _xsum(path, include_five_word_budget)
    if track is Track.MT_BENCH_LI:
        return _mtbench(path)
    if track is Track.LIFEBENCH_EQUAL_TO:
        return _lifebench(path, language)
    return _counting(path, language)
