"""Fan (instance x backend x strategy) jobs out to backends and record results."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Callable, Iterable, Sequence

from ..errors import ExactLenError, StorageError
from ..gateway import CATEGORY_TEMPERATURES, DecodingParams, GatewayError, ModelBackend
from ..prompting import Language, PromptStrategy, Strategy, render
from ..tokenizer import CjkPolicy
from .records import RecordStore, RunRecord, evaluate_reply, prompt_hash
from .tracks import TaskInstance, Track

log = logging.getLogger(__name__)

__all__ = ["Job", "run_track", "resolve_strategy", "CODE_CATEGORIES"]

# MT-Bench categories whose answers are expected to contain code.
CODE_CATEGORIES = frozenset({"coding"})


@dataclass(frozen=True)
class Job:
    instance: TaskInstance
    backend: ModelBackend
    strategy: PromptStrategy
    params: DecodingParams

    @property
    def record_id(self) -> str:
        return f"{self.instance.track.value}:{self.instance.id}:{self.backend.id}:{self.strategy.name}"


def resolve_strategy(spec: PromptStrategy | Strategy | str, instance: TaskInstance,
                     code_categories: Iterable[str] = CODE_CATEGORIES) -> PromptStrategy:
    if isinstance(spec, PromptStrategy):
        variant, code_aware = spec.variant, spec.code_aware
    else:
        variant, code_aware = Strategy.parse(spec), False
    if variant is not Strategy.BASELINE and instance.category in set(code_categories):
        code_aware = True
    return PromptStrategy(variant, code_aware, Language.for_unit(instance.target.unit))


def _params_for(instance: TaskInstance, backend: ModelBackend, params: DecodingParams,
                temperatures: dict[str, float] | None, clamp: bool) -> DecodingParams:
    changes = {}
    if instance.track is Track.MT_BENCH_LI and temperatures and instance.category in temperatures:
        changes["temperature"] = temperatures[instance.category]
    if clamp and params.max_completion_tokens > backend.caps.max_completion_tokens:
        changes["max_completion_tokens"] = backend.caps.max_completion_tokens
    return params.replace(**changes) if changes else params


def _execute(job: Job, cjk_policy: CjkPolicy) -> RunRecord:
    inst = job.instance
    prompt = render(inst.task_text, inst.target, job.strategy)
    raw, error, usage = "", None, {}
    try:
        completion = job.backend.complete(prompt, job.params)
        raw, usage = completion.text, completion.usage()
    except (GatewayError, ExactLenError) as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.warning("%s failed: %s", job.record_id, error)

    stripped, achieved, report = evaluate_reply(raw, inst.target, job.strategy, cjk_policy)
    return RunRecord(
        record_id=job.record_id,
        track=inst.track.value,
        task_id=inst.id,
        backend_id=job.backend.id,
        strategy=job.strategy.name,
        language=inst.language,
        target=inst.target.value,
        achieved=achieved,
        raw_output=raw,
        stripped_text=stripped,
        prompt_sha256=prompt_hash(prompt.full_text),
        valid=report.valid if report else None,
        validation=report.to_dict() if report else None,
        params=job.params.to_dict(),
        latency_s=usage.get("latency_s", 0.0),
        attempts=usage.get("attempts", 0),
        truncated=usage.get("truncated", False),
        finish_reason=usage.get("finish_reason"),
        seed=job.params.seed,
        category=inst.category,
        reference=inst.reference,
        error=error,
        cjk_policy=cjk_policy.value,
        extra=dict(inst.meta),
    )


def run_track(
    instances: Sequence[TaskInstance],
    backends: Sequence[ModelBackend],
    strategies: Sequence[PromptStrategy | Strategy | str],
    params: DecodingParams | None = None,
    *,
    store: RecordStore | str | Path | None = None,
    workers: int = 4,
    cjk_policy: CjkPolicy | str = CjkPolicy.INCLUDE_PUNCTUATION,
    temperatures: dict[str, float] | None = CATEGORY_TEMPERATURES,
    code_categories: Iterable[str] = CODE_CATEGORIES,
    clamp_to_caps: bool = True,
    progress: Callable[[RunRecord], None] | None = None,
) -> list[RunRecord]:
    """Run every job and return the records in job order.

    Records already present in *store* (matched by record id) are reused, so an
    interrupted run resumes where it stopped. Backend failures become records
    with ``error`` set; a storage failure aborts the run.
    """
    params = params or DecodingParams()
    cjk_policy = CjkPolicy(cjk_policy)
    if store is not None and not isinstance(store, RecordStore):
        store = RecordStore(store)
    existing = {r.record_id: r for r in store.load()} if store else {}

    jobs = [
        Job(inst, be, resolve_strategy(strat, inst, code_categories),
            _params_for(inst, be, params, temperatures, clamp_to_caps))
        for inst, be, strat in product(instances, backends, strategies)
    ]
    pending = [j for j in jobs if j.record_id not in existing]
    if existing:
        log.info("resuming: %d of %d jobs already recorded", len(jobs) - len(pending), len(jobs))

    fresh: dict[str, RunRecord] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        # map() yields in submission order, so the store is written in job order.
        for record in pool.map(lambda j: _execute(j, cjk_policy), pending):
            if store:
                try:
                    store.append(record)
                except StorageError:
                    pool.shutdown(wait=False, cancel_futures=True)
                    raise
            fresh[record.record_id] = record
            if progress:
                progress(record)
    return [fresh.get(j.record_id) or existing[j.record_id] for j in jobs]
