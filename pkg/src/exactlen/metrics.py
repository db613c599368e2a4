"""Length-compliance metrics, ROUGE, and single-answer judging."""

from __future__ import annotations

import bisect
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Sequence

from .errors import EmptyInputError, JudgeParseError, UndefinedScoreError
from .tokenizer import tokenize_english

__all__ = [
    "LengthRecord",
    "ComplianceSummary",
    "Prf",
    "RougeScores",
    "exact_match",
    "mae",
    "mald",
    "lifebench_ld",
    "lifebench_ls",
    "lifebench_scores",
    "summarize_compliance",
    "rouge",
    "judge_single_answer",
    "parse_judge_rating",
    "DEFAULT_LS_KNOTS",
]


@dataclass(frozen=True)
class LengthRecord:
    target: int
    achieved: int
    group_keys: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.target < 1:
            raise ValueError(f"target must be >= 1, got {self.target}")
        if self.achieved < 0:
            raise ValueError(f"achieved length must be >= 0, got {self.achieved}")

    @property
    def abs_error(self) -> int:
        return abs(self.achieved - self.target)

    @property
    def relative_error(self) -> float:
        return (self.achieved - self.target) / self.target


def _records(records: Iterable) -> list[LengthRecord]:
    out = [r if isinstance(r, LengthRecord) else LengthRecord(*r) for r in records]
    if not out:
        raise EmptyInputError("no records to aggregate")
    return out


def exact_match(records) -> float:
    recs = _records(records)
    return sum(r.achieved == r.target for r in recs) / len(recs)


def mae(records) -> float:
    recs = _records(records)
    return math.fsum(r.abs_error for r in recs) / len(recs)


def mald(records) -> float:
    recs = _records(records)
    return math.fsum(r.abs_error / r.target for r in recs) / len(recs)


# (relative deviation, score) knots; linear between, clamped outside.
DEFAULT_LS_KNOTS: tuple[tuple[float, float], ...] = ((0.0, 100.0), (1.0, 0.0))


def _piecewise(knots: Sequence[tuple[float, float]], x: float) -> float:
    xs = [k[0] for k in knots]
    if x <= xs[0]:
        return knots[0][1]
    if x >= xs[-1]:
        return knots[-1][1]
    i = bisect.bisect_right(xs, x)
    (x0, y0), (x1, y1) = knots[i - 1], knots[i]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def lifebench_ld(records, *, signed: bool = False) -> float:
    """Length deviation in percent: 100 x mean relative deviation."""
    recs = _records(records)
    devs = (r.relative_error if signed else abs(r.relative_error) for r in recs)
    return 100.0 * math.fsum(devs) / len(recs)


def lifebench_ls(records, *, knots: Sequence[tuple[float, float]] = DEFAULT_LS_KNOTS) -> float:
    recs = _records(records)
    return math.fsum(_piecewise(knots, abs(r.relative_error)) for r in recs) / len(recs)


def lifebench_scores(
    records,
    *,
    signed: bool = False,
    knots: Sequence[tuple[float, float]] = DEFAULT_LS_KNOTS,
    ld_fn: Callable[[list[LengthRecord]], float] | None = None,
    ls_fn: Callable[[list[LengthRecord]], float] | None = None,
) -> tuple[float, float]:
    """Return ``(LD, LS)``.

    The official benchmark definitions can be dropped in through ``ld_fn`` and
    ``ls_fn``; the defaults are the absolute relative deviation in percent and
    a linear 100-to-0 score over 0-100% deviation.
    """
    recs = _records(records)
    ld = ld_fn(recs) if ld_fn else lifebench_ld(recs, signed=signed)
    ls = ls_fn(recs) if ls_fn else lifebench_ls(recs, knots=knots)
    return ld, ls


@dataclass(frozen=True)
class ComplianceSummary:
    n: int
    em: float
    mae: float
    mald: float
    ld: float
    ls: float

    def as_row(self) -> dict:
        return {"n": self.n, "em": self.em, "mae": self.mae, "mald": self.mald, "ld": self.ld, "ls": self.ls}


def summarize_compliance(records, **lifebench_kwargs) -> ComplianceSummary:
    recs = _records(records)
    ld, ls = lifebench_scores(recs, **lifebench_kwargs)
    return ComplianceSummary(len(recs), exact_match(recs), mae(recs), mald(recs), ld, ls)


# --- ROUGE ---------------------------------------------------------------

@dataclass(frozen=True)
class Prf:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RougeScores:
    rouge1: Prf
    rouge2: Prf
    rougeL: Prf

    def as_row(self) -> dict:
        return {"rouge1": self.rouge1.f1, "rouge2": self.rouge2.f1, "rougeL": self.rougeL.f1}


_NON_WORD = re.compile(r"[^\w]+")


def _rouge_tokens(text: str) -> list[str]:
    out = []
    for span in tokenize_english(text):
        tok = _NON_WORD.sub("", span.surface.lower())
        if tok:
            out.append(tok)
    return out


def _prf(overlap: int, cand_total: int, ref_total: int) -> Prf:
    p = overlap / cand_total if cand_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return Prf(p, r, f)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge(candidate: str, reference: str) -> RougeScores:
    ref = _rouge_tokens(reference)
    if not ref:
        raise UndefinedScoreError("ROUGE is undefined for an empty reference")
    cand = _rouge_tokens(candidate)
    scores = []
    for n in (1, 2):
        c, r = _ngrams(cand, n), _ngrams(ref, n)
        scores.append(_prf(sum((c & r).values()), sum(c.values()), sum(r.values())))
    lcs = _lcs_length(cand, ref)
    return RougeScores(scores[0], scores[1], _prf(lcs, len(cand), len(ref)))


# --- LLM-as-judge --------------------------------------------------------

JUDGE_SYSTEM = "You are a helpful assistant."
_RATING = re.compile(r"\[\[(\d+(?:\.\d+)?)\]\]")
_RATING_LOOSE = re.compile(r"\[(\d+(?:\.\d+)?)\]")


@lru_cache(maxsize=None)
def _judge_template() -> str:
    return resources.files(__package__).joinpath("data", "judge_single.txt").read_text(encoding="utf-8")


def parse_judge_rating(reply: str) -> float:
    m = _RATING.search(reply) or _RATING_LOOSE.search(reply)
    if not m:
        raise JudgeParseError(f"no [[rating]] in judge reply: {reply[:80]!r}")
    score = float(m.group(1))
    if not 1 <= score <= 10:
        raise JudgeParseError(f"rating {score} outside 1-10")
    return score


def judge_single_answer(question: str, answer: str, backend, params=None) -> float:
    """Grade *answer* on a 1-10 scale with a judge model behind *backend*."""
    from .gateway import DecodingParams, complete
    from .prompting import PromptStrategy, RenderedPrompt, Strategy
    from .tokenizer import LengthTarget

    prompt = RenderedPrompt(
        task_text=_judge_template().format(question=question, answer=answer),
        suffix_text="",
        strategy=PromptStrategy(Strategy.BASELINE),
        target=LengthTarget(1),
        system_text=JUDGE_SYSTEM,
    )
    params = params or DecodingParams(temperature=0.0, max_completion_tokens=2048)
    reply = complete(backend, prompt, params)
    return parse_judge_rating(reply.text)
