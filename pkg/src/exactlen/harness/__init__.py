"""Batch evaluation: tracks, runs, records, summaries, and the counting diagnostic."""

from .diagnostic import COUNT_QUERY, DiagnosticResult, parse_count, run_counting_diagnostic
from .records import RecordStore, RunRecord, evaluate_reply, recompute
from .report import ReportTable, pivot, smoothed_curve, summarize
from .runner import run_track
from .tracks import LIFEBENCH_BUDGETS, TaskInstance, Track, load_track

__all__ = [
    "COUNT_QUERY",
    "DiagnosticResult",
    "LIFEBENCH_BUDGETS",
    "RecordStore",
    "ReportTable",
    "RunRecord",
    "TaskInstance",
    "Track",
    "evaluate_reply",
    "load_track",
    "parse_count",
    "pivot",
    "recompute",
    "run_counting_diagnostic",
    "run_track",
    "smoothed_curve",
    "summarize",
]
