"""Run records and their append-only JSON Lines store."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import StorageError
from ..markers import ValidationReport, check, strip_markers
from ..prompting import Language, PromptStrategy, Strategy, extract_revision
from ..tokenizer import CjkPolicy, LengthTarget, TokenUnit, measure_length

__all__ = ["SCHEMA_VERSION", "RunRecord", "RecordStore", "evaluate_reply", "recompute", "prompt_hash"]

SCHEMA_VERSION = 1

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    record_id: str
    track: str
    task_id: str
    backend_id: str
    strategy: str
    language: str
    target: int
    achieved: int
    raw_output: str
    stripped_text: str
    prompt_sha256: str
    valid: bool | None = None
    validation: dict | None = None
    params: dict = field(default_factory=dict)
    latency_s: float = 0.0
    attempts: int = 0
    truncated: bool = False
    finish_reason: str | None = None
    seed: int | None = None
    category: str | None = None
    reference: str | None = None
    error: str | None = None
    judge_score: float | None = None
    cjk_policy: str = CjkPolicy.INCLUDE_PUNCTUATION.value
    extra: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def unit(self) -> TokenUnit:
        return TokenUnit.CJK_CHARACTER if self.language == "zh" else TokenUnit.ENGLISH_WORD

    @property
    def prompt_strategy(self) -> PromptStrategy:
        variant, _, flag = self.strategy.partition("+")
        return PromptStrategy(Strategy.parse(variant), flag == "code", Language(self.language))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        version = data.get("schema_version", SCHEMA_VERSION)
        if version > SCHEMA_VERSION:
            raise StorageError(f"record schema {version} is newer than supported {SCHEMA_VERSION}")
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def evaluate_reply(
    raw: str,
    target: LengthTarget,
    strategy: PromptStrategy,
    cjk_policy: CjkPolicy | str = CjkPolicy.INCLUDE_PUNCTUATION,
) -> tuple[str, int, ValidationReport | None]:
    """Measure a reply: ``(stripped_text, achieved_length, report)``.

    Baseline replies are measured as-is. Countdown replies are validated and
    then measured with every marker removed; in code-aware mode each countdown
    token counts as one unit.
    """
    if not strategy.uses_markers:
        return raw, measure_length(raw, target.unit, cjk_policy=cjk_policy), None
    scored = extract_revision(raw) if strategy.variant is Strategy.DRAFT_THEN_CAPEL else raw
    parsed, report = check(scored, target, strategy.code_aware, cjk_policy=cjk_policy)
    stripped = strip_markers(parsed, keep_untagged=True)
    if strategy.code_aware:
        return stripped, report.achieved_length, report
    return stripped, measure_length(stripped, target.unit, cjk_policy=cjk_policy), report


def recompute(record: RunRecord) -> tuple[int, bool | None]:
    """Re-derive ``(achieved, valid)`` from the stored raw output."""
    target = LengthTarget(record.target, record.unit)
    _, achieved, report = evaluate_reply(record.raw_output, target, record.prompt_strategy, record.cjk_policy)
    return achieved, (report.valid if report else None)


class RecordStore:
    """Append-only JSON Lines file; every append is flushed and fsynced."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create {self.path.parent}: {exc}") from exc

    def append(self, record: RunRecord) -> None:
        line = json.dumps(record.to_dict(), ensure_ascii=False)
        with self._lock:
            try:
                with self.path.open("a+b") as fh:
                    fh.seek(0, os.SEEK_END)
                    if fh.tell():
                        fh.seek(-1, os.SEEK_END)
                        if fh.read(1) != b"\n":
                            # A crash left a torn line; start a fresh one.
                            fh.write(b"\n")
                    fh.write(line.encode("utf-8") + b"\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageError(f"cannot append to {self.path}: {exc}") from exc

    def load(self) -> list[RunRecord]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError:
                    log.warning("%s:%d: skipping torn record", self.path, lineno)
                    continue
                out.append(RunRecord.from_dict(data))
        return out

    def ids(self) -> set[str]:
        return {r.record_id for r in self.load()}
