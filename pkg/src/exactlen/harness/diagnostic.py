"""Token-counting diagnostic: can a model count the tokens of a short sentence?"""

from __future__ import annotations

import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

from ..errors import ExactLenError
from ..gateway import DecodingParams, ModelBackend
from ..prompting import Language, PromptStrategy, RenderedPrompt, Strategy
from .records import RecordStore, RunRecord, prompt_hash
from .report import write_rows
from .tracks import COUNTING_LENGTHS, TaskInstance

__all__ = ["COUNT_QUERY", "count_prompt", "parse_count", "DiagnosticResult", "run_counting_diagnostic"]

COUNT_QUERY = "How many tokens are in the sentence above?"

_EN_NUMBERS = {w: i for i, w in enumerate(
    "zero one two three four five six seven eight nine ten eleven twelve thirteen fourteen "
    "fifteen sixteen seventeen eighteen nineteen twenty".split())}
_ZH_DIGITS = {"零": 0, "一": 1, "二": 2, "两": 2, "三": 3, "四": 4, "五": 5, "六": 6, "七": 7, "八": 8, "九": 9}
_COUNT = re.compile(
    r"(?P<digits>\d+)"
    r"|(?P<word>\b(?:" + "|".join(sorted(_EN_NUMBERS, key=len, reverse=True)) + r")\b)"
    r"|(?P<zh>[零一二两三四五六七八九十]+)",
    re.IGNORECASE,
)


def _zh_to_int(s: str) -> int | None:
    if "十" not in s:
        return _ZH_DIGITS[s] if len(s) == 1 else None
    tens, _, ones = s.partition("十")
    if len(tens) > 1 or len(ones) > 1:
        return None
    t = _ZH_DIGITS.get(tens, 1) if tens else 1
    return t * 10 + (_ZH_DIGITS.get(ones, 0) if ones else 0)


def parse_count(reply: str) -> int | None:
    """First integer in *reply*: digits, an English number word, or a Chinese numeral."""
    for m in _COUNT.finditer(reply):
        if m.group("digits"):
            return int(m.group("digits"))
        if m.group("word"):
            return _EN_NUMBERS[m.group("word").lower()]
        value = _zh_to_int(m.group("zh"))
        if value is not None:
            return value
    return None


def count_prompt(instance: TaskInstance) -> RenderedPrompt:
    # Just the sentence and the question: no examples, no system message.
    return RenderedPrompt(
        task_text=instance.task_text,
        suffix_text="\n" + COUNT_QUERY,
        strategy=PromptStrategy(Strategy.BASELINE, False, Language.for_unit(instance.target.unit)),
        target=instance.target,
        system_text=None,
    )


@dataclass
class DiagnosticResult:
    records: list[RunRecord]
    # (backend_id, language, L) -> [correct, total, unparsed]
    cells: dict = field(default_factory=dict)

    def accuracy(self, backend_id: str, language: str, length: int) -> float | None:
        correct, total, _ = self.cells.get((backend_id, language, length), (0, 0, 0))
        return correct / total if total else None

    def languages(self) -> list[str]:
        return sorted({k[1] for k in self.cells})

    def heatmap(self, language: str, backends: Sequence[str] | None = None) -> list[dict]:
        """One row per model, one ``L=k`` column per length 1..10."""
        backends = backends or sorted({k[0] for k in self.cells if k[1] == language})
        rows = []
        for b in backends:
            row = {"model": b}
            for length in COUNTING_LENGTHS:
                acc = self.accuracy(b, language, length)
                row[f"L={length}"] = "" if acc is None else round(100 * acc, 2)
            rows.append(row)
        return rows

    def write(self, out_dir: str | Path) -> list[Path]:
        paths = []
        for lang in self.languages():
            rows = self.heatmap(lang)
            paths.append(write_rows(Path(out_dir) / "plots" / f"counting_heatmap_{lang}.csv", rows,
                                    ["model", *(f"L={n}" for n in COUNTING_LENGTHS)]))
        return paths


def _ask(backend: ModelBackend, inst: TaskInstance, params: DecodingParams | None) -> RunRecord:
    prompt = count_prompt(inst)
    reply, error = "", None
    try:
        reply = backend.complete(prompt, params).text
    except ExactLenError as exc:
        error = f"{type(exc).__name__}: {exc}"
    count = parse_count(reply)
    return RunRecord(
        record_id=f"counting:{inst.id}:{backend.id}",
        track="counting",
        task_id=inst.id,
        backend_id=backend.id,
        strategy="count-query",
        language=inst.language,
        target=inst.target.value,
        achieved=count if count is not None else 0,
        raw_output=reply,
        stripped_text=reply,
        prompt_sha256=prompt_hash(prompt.full_text),
        params=params.to_dict() if params else {},
        error=error,
        extra={"parsed_count": count, "parse_failed": count is None},
    )


def run_counting_diagnostic(
    backends: Sequence[ModelBackend],
    instances: Sequence[TaskInstance],
    params: DecodingParams | None = None,
    *,
    store: RecordStore | str | Path | None = None,
    workers: int = 4,
    out_dir: str | Path | None = None,
) -> DiagnosticResult:
    """Ask every backend to count every sentence; unparseable replies count as wrong."""
    if store is not None and not isinstance(store, RecordStore):
        store = RecordStore(store)
    done = {r.record_id: r for r in store.load()} if store else {}
    jobs = list(product(instances, backends))
    records = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        pending = [(i, b) for i, b in jobs if f"counting:{i.id}:{b.id}" not in done]
        fresh = {}
        for rec in pool.map(lambda job: _ask(job[1], job[0], params), pending):
            if store:
                store.append(rec)
            fresh[rec.record_id] = rec
    for inst, be in jobs:
        rid = f"counting:{inst.id}:{be.id}"
        records.append(fresh.get(rid) or done[rid])

    cells: dict = defaultdict(lambda: [0, 0, 0])
    for r in records:
        cell = cells[(r.backend_id, r.language, r.target)]
        cell[1] += 1
        if r.extra.get("parse_failed"):
            cell[2] += 1
        elif r.extra.get("parsed_count") == r.target:
            cell[0] += 1
    # Every model gets a full row of lengths in every language it was asked about.
    for b in backends:
        for lang in {r.language for r in records}:
            for n in COUNTING_LENGTHS:
                cells[(b.id, lang, n)]
    result = DiagnosticResult(records, {k: tuple(v) for k, v in cells.items()})
    if out_dir is not None:
        result.write(out_dir)
    return result
