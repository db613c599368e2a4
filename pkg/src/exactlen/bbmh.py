"""Black-box Metropolis-Hastings resampling toward an exact length.

Each step draws one candidate reply. Candidates longer than the target are
discarded before the acceptance test; the rest compete with the current state
under ``w(y) = exp(-|len(y) - target| / tau)``. The loop stops at the first
exact-length candidate or after ``max_steps`` draws.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Callable

from .errors import InvalidArgumentsError
from .gateway import DecodingParams, ModelBackend
from .metrics import LengthRecord, exact_match, mald
from .prompting import Language, PromptStrategy, RenderedPrompt, Strategy, render_baseline
from .tokenizer import CjkPolicy, LengthTarget, measure_length

__all__ = [
    "MhVariant",
    "Attempt",
    "MhOutcome",
    "MAX_STEPS",
    "length_weight",
    "build_revision_prompt",
    "run_bbmh",
    "bbmh_table",
]

MAX_STEPS = 15


class MhVariant(str, enum.Enum):
    ITERATIVE_ACCEPTANCE = "iterative_acceptance"
    ITERATIVE_MEMORY = "iterative_memory"
    ITERATIVE_ACCEPTANCE_MEMORY = "iterative_acceptance_memory"

    @classmethod
    def parse(cls, value: "str | MhVariant") -> "MhVariant":
        if isinstance(value, MhVariant):
            return value
        short = {"acc": cls.ITERATIVE_ACCEPTANCE, "mem": cls.ITERATIVE_MEMORY,
                 "accmem": cls.ITERATIVE_ACCEPTANCE_MEMORY, "acc+mem": cls.ITERATIVE_ACCEPTANCE_MEMORY}
        key = value.lower().replace("-", "_")
        return short.get(key) or cls(key)

    @property
    def uses_acceptance(self) -> bool:
        return self is not MhVariant.ITERATIVE_MEMORY

    @property
    def uses_memory(self) -> bool:
        return self is not MhVariant.ITERATIVE_ACCEPTANCE

    @property
    def label(self) -> str:
        return {"iterative_acceptance": "Acc", "iterative_memory": "Mem",
                "iterative_acceptance_memory": "AccMem"}[self.value]


@dataclass
class Attempt:
    reply: str
    achieved: int
    error: int
    in_bound: bool
    accepted: bool = False


@dataclass
class MhOutcome:
    final_reply: str
    achieved: int
    iterations_used: int
    exact: bool
    target: LengthTarget
    variant: MhVariant
    seed: int
    acceptance_tests: int = 0
    history: list[Attempt] = field(default_factory=list)
    best_error_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "final_reply": self.final_reply,
            "achieved": self.achieved,
            "target": self.target.value,
            "iterations_used": self.iterations_used,
            "exact": self.exact,
            "variant": self.variant.value,
            "seed": self.seed,
            "acceptance_tests": self.acceptance_tests,
        }


def length_weight(error: int, tau: float = 1.0) -> float:
    return math.exp(-error / tau)


_MEMORY_TEXT = {
    Language.ENGLISH: ("\n\nYour previous attempts and their measured lengths:",
                       "Attempt {i} ({n} {unit}){status}:\n{reply}",
                       "\n\nRevise your answer so that it contains exactly {target} {unit}. "
                       "Reply with the revised answer only."),
    Language.CHINESE: ("\n\n你之前的回答及其实测字数：",
                       "第 {i} 次回答（{n} 个字）{status}：\n{reply}",
                       "\n\n请修改你的回答，使其恰好为 {target} 个字。只输出修改后的回答。"),
}


def build_revision_prompt(task: str, history: list[Attempt], target: LengthTarget,
                          variant: MhVariant | str) -> RenderedPrompt:
    """Prompt for the next draw.

    Acceptance-only sampling redraws from the plain length instruction; the
    memory variants replay every earlier reply with its measured length.
    """
    variant = MhVariant.parse(variant)
    language = Language.for_unit(target.unit)
    if not variant.uses_memory:
        return render_baseline(task, target, language)
    if not history:
        raise InvalidArgumentsError("memory variants need at least one earlier attempt")
    header, item, instruction = _MEMORY_TEXT[language]
    unit = "characters" if target.is_chinese else "words"
    blocks = []
    for i, a in enumerate(history, 1):
        status = ""
        if variant.uses_acceptance:
            status = " [accepted]" if a.accepted else " [rejected]"
        blocks.append(item.format(i=i, n=a.achieved, unit=unit, status=status, reply=a.reply))
    suffix = header + "\n\n" + "\n\n".join(blocks) + instruction.format(target=target.value, unit=unit)
    return RenderedPrompt(task, suffix, PromptStrategy(Strategy.BASELINE, False, language), target)


def run_bbmh(
    backend: ModelBackend,
    task: str,
    target: LengthTarget,
    variant: MhVariant | str = MhVariant.ITERATIVE_ACCEPTANCE,
    *,
    max_steps: int = MAX_STEPS,
    tau: float = 1.0,
    seed: int = 0,
    params: DecodingParams | None = None,
    weight_fn: Callable[[int], float] | None = None,
    cjk_policy: CjkPolicy | str = CjkPolicy.INCLUDE_PUNCTUATION,
) -> MhOutcome:
    variant = MhVariant.parse(variant)
    if not 1 <= max_steps <= MAX_STEPS:
        raise InvalidArgumentsError(f"max_steps must be within 1..{MAX_STEPS}")
    weight = weight_fn or (lambda err: length_weight(err, tau))
    rng = random.Random(seed)

    history: list[Attempt] = []
    trace: list[float] = []
    best: Attempt | None = None
    current: Attempt | None = None
    tests = 0

    for step in range(1, max_steps + 1):
        if step == 1 or not variant.uses_memory:
            prompt = render_baseline(task, target)
        else:
            prompt = build_revision_prompt(task, history, target, variant)
        reply = backend.complete(prompt, params).text
        n = measure_length(reply, target.unit, cjk_policy=cjk_policy)
        attempt = Attempt(reply, n, abs(n - target.value), in_bound=n <= target.value)
        history.append(attempt)

        if attempt.in_bound:
            if best is None or attempt.error < best.error:
                best = attempt
            if current is None or not variant.uses_acceptance:
                attempt.accepted = True
            else:
                tests += 1
                w_new, w_cur = weight(attempt.error), weight(current.error)
                # Equal weights keep the current state.
                attempt.accepted = w_new != w_cur and rng.random() < min(1.0, w_new / w_cur)
            if attempt.accepted:
                current = attempt
        trace.append(best.error if best else math.inf)

        if attempt.in_bound and attempt.error == 0:
            return MhOutcome(reply, n, step, True, target, variant, seed, tests, history, trace)

    final = best or history[0]
    return MhOutcome(final.reply, final.achieved, max_steps, False, target, variant, seed, tests, history, trace)


def bbmh_table(outcomes: dict[tuple[str, str], list[MhOutcome]],
               scores: dict[tuple[str, str], float] | None = None, *, with_n: bool = False) -> list[dict]:
    """Rows of Model / Method / MALD / EM (%) / Avg Iter / Score.

    *outcomes* maps ``(model, variant)`` to that cell's outcomes; ``with_n``
    appends the number of tasks per row.
    """
    rows = []
    for (model, variant), outs in outcomes.items():
        if not outs:
            continue
        recs = [LengthRecord(o.target.value, o.achieved) for o in outs]
        score = (scores or {}).get((model, variant))
        row = {
            "Model": model,
            "Method": MhVariant.parse(variant).label,
            "MALD": f"{mald(recs):.3f}",
            "EM (%)": f"{100 * exact_match(recs):.1f}",
            "Avg Iter": f"{sum(o.iterations_used for o in outs) / len(outs):.2f}",
            "Score": "" if score is None else f"{score:.2f}",
        }
        if with_n:
            row["n"] = len(outs)
        rows.append(row)
    return rows
