"""Grouped compliance tables and plot-ready data files."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import EmptyInputError, UndefinedScoreError
from ..metrics import LengthRecord, exact_match, lifebench_scores, mae, mald, rouge
from .records import RunRecord

__all__ = ["ReportTable", "summarize", "smoothed_curve", "pivot", "write_rows"]

DEFAULT_GROUP_BY = ("backend_id", "strategy")


@dataclass
class ReportTable:
    group_by: tuple[str, ...]
    rows: list[dict]
    curve: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            cols += [c for c in row if c not in cols]
        return cols

    @property
    def total(self) -> int:
        return sum(r["n"] for r in self.rows)

    def write(self, out_dir: str | Path, stem: str = "summary") -> dict[str, Path]:
        out = Path(out_dir)
        paths = {
            "csv": out / "tables" / f"{stem}.csv",
            "json": out / "tables" / f"{stem}.json",
            "md": out / "tables" / f"{stem}.md",
            "curve": out / "plots" / "mald_curve.csv",
        }
        write_rows(paths["csv"], self.rows, self.columns)
        paths["json"].write_text(json.dumps({"group_by": list(self.group_by), "rows": self.rows},
                                            indent=2, ensure_ascii=False), encoding="utf-8")
        paths["md"].write_text(to_markdown(self.rows, self.columns), encoding="utf-8")
        if self.curve:
            write_rows(paths["curve"], self.curve)
        else:
            del paths["curve"]
        return paths


def write_rows(path: str | Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    return path


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}" if abs(value) < 1e4 else f"{value:.1f}"
    return "" if value is None else str(value)


def to_markdown(rows: Sequence[dict], columns: Sequence[str]) -> str:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(row.get(c)) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def _key(record: RunRecord, group_by: Sequence[str]) -> tuple:
    return tuple(getattr(record, g, None) if hasattr(record, g) else record.extra.get(g) for g in group_by)


def smoothed_curve(records: Iterable[RunRecord], group_by: Sequence[str], window: int = 25) -> list[dict]:
    """Per-group MALD at each distinct target, plus a centered moving average.

    The window shrinks at the ends of the target range.
    """
    buckets: dict[tuple, dict[int, list[RunRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        buckets[_key(r, group_by)][r.target].append(r)
    half = window // 2
    rows = []
    for key in sorted(buckets, key=lambda k: tuple(str(x) for x in k)):
        by_target = buckets[key]
        targets = sorted(by_target)
        values = [mald([LengthRecord(r.target, r.achieved) for r in by_target[t]]) for t in targets]
        for i, t in enumerate(targets):
            lo, hi = max(0, i - half), min(len(values), i + half + 1)
            rows.append({**dict(zip(group_by, key)), "target": t, "n": len(by_target[t]),
                         "mald": values[i], "mald_smoothed": math.fsum(values[lo:hi]) / (hi - lo)})
    return rows


def summarize(
    records: Sequence[RunRecord],
    group_by: Sequence[str] = DEFAULT_GROUP_BY,
    *,
    out_dir: str | Path | None = None,
    window: int = 25,
    lifebench: bool | None = None,
    lifebench_kwargs: dict | None = None,
    with_rouge: bool | None = None,
) -> ReportTable:
    """Aggregate records into one row per group.

    LD/LS columns are added for LIFEBench records, mean ROUGE for records that
    carry a reference summary, and the mean judge score when any record has
    been judged. Failed calls stay in the table as zero-length outputs and are
    counted in the ``errors`` column.
    """
    if not records:
        raise EmptyInputError("no records to summarize")
    group_by = tuple(group_by)
    if lifebench is None:
        lifebench = any(r.track == "lifebench" for r in records)
    if with_rouge is None:
        with_rouge = any(r.reference for r in records)

    groups: dict[tuple, list[RunRecord]] = defaultdict(list)
    for r in records:
        groups[_key(r, group_by)].append(r)

    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        recs = groups[key]
        lens = [LengthRecord(r.target, r.achieved) for r in recs]
        row = {**dict(zip(group_by, key)), "n": len(recs), "errors": sum(r.error is not None for r in recs),
               "em": exact_match(lens), "mae": mae(lens), "mald": mald(lens)}
        checked = [r.valid for r in recs if r.valid is not None]
        if checked:
            row["grammar_valid"] = sum(checked) / len(checked)
        if lifebench:
            row["ld"], row["ls"] = lifebench_scores(lens, **(lifebench_kwargs or {}))
        if with_rouge:
            scores = []
            for r in recs:
                if not r.reference:
                    continue
                try:
                    scores.append(rouge(r.stripped_text, r.reference))
                except UndefinedScoreError:
                    continue
            if scores:
                row["rouge1"] = math.fsum(s.rouge1.f1 for s in scores) / len(scores)
                row["rouge2"] = math.fsum(s.rouge2.f1 for s in scores) / len(scores)
                row["rougeL"] = math.fsum(s.rougeL.f1 for s in scores) / len(scores)
        judged = [r.judge_score for r in recs if r.judge_score is not None]
        if judged:
            row["judge_score"] = math.fsum(judged) / len(judged)
            row["judged"] = len(judged)
        rows.append(row)

    table = ReportTable(group_by, rows, smoothed_curve(records, group_by, window))
    if out_dir is not None:
        table.write(out_dir)
    return table


_PRETTY = {"em": "EM(%)", "mae": "MAE", "mald": "MALD", "ld": "LD", "ls": "LS",
           "rougeL": "ROUGE-L", "rouge1": "ROUGE-1", "rouge2": "ROUGE-2", "judge_score": "Single Score"}


def pivot(table: ReportTable, index: str = "backend_id", columns: str = "strategy",
          metrics: Sequence[str] = ("mald", "em")) -> list[dict]:
    """Reshape summary rows into the model-by-strategy layout of the result tables.

    EM is rendered in percent; every metric gets one column per strategy.
    """
    col_values = []
    for row in table.rows:
        if row.get(columns) not in col_values:
            col_values.append(row.get(columns))
    out: dict = {}
    for row in table.rows:
        entry = out.setdefault(row.get(index), {"Model": row.get(index)})
        for m in metrics:
            if m not in row:
                continue
            value = row[m] * 100 if m == "em" else row[m]
            entry[f"{_PRETTY.get(m, m)} {row.get(columns)}"] = round(value, 1 if m in ("em", "ld", "ls") else 3)
    ordered = []
    for entry in out.values():
        keyed = {"Model": entry["Model"]}
        for m in metrics:
            for c in col_values:
                name = f"{_PRETTY.get(m, m)} {c}"
                if name in entry:
                    keyed[name] = entry[name]
        ordered.append(keyed)
    return ordered
