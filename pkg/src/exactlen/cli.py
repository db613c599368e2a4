"""Command-line entry point: ``exactlen <subcommand> ...``.

Exit codes: 0 success, 1 domain failure (invalid output, unparseable judge
reply, failed run), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, ExactLenError, InvalidTargetError, LoadError, StorageError, UnsupportedUnitError
from .markers import check
from .prompting import DRAFT_SENTINEL, Language, PromptStrategy, Strategy, render

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("exactlen")


class UsageError(Exception):
    """Bad flags or unreadable inputs; maps to exit code 2."""


# --- helpers ---------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _emit(args, rows, *, table: bool = True) -> None:
    rows = rows if isinstance(rows, list) else [rows]
    if args.format == "json-lines":
        for row in rows:
            print(json.dumps(row, ensure_ascii=False, default=str))
        return
    if table and rows and all(isinstance(r, dict) for r in rows):
        from .harness.report import to_markdown

        cols: list[str] = []
        for r in rows:
            cols += [c for c in r if c not in cols]
        sys.stdout.write(to_markdown(rows, cols))
    else:
        for row in rows:
            print(json.dumps(row, ensure_ascii=False, indent=2, default=str))


def _read_text(path: str | None, *, label: str) -> str:
    if path is None or path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {label} {path}: {exc.strerror or exc}") from None


def _target(value: int, lang: str):
    from .tokenizer import LengthTarget, TokenUnit

    return LengthTarget(value, TokenUnit.parse(lang))


def _config(args):
    from .config import RunConfig, load_config

    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def _backends(args, cfg) -> list:
    from .mocks import load_script

    out = [cfg.backend(b) for b in (args.backend or [])]
    for i, spec in enumerate(args.mock or []):
        out.append(load_script(spec, id=f"mock{i}" if len(args.mock) > 1 else "mock", seed=args.seed))
    if not out:
        if len(cfg.backends) == 1:
            return [cfg.backend(next(iter(cfg.backends)))]
        raise UsageError("choose at least one --backend (from --config) or --mock")
    return out


def _params(args, cfg):
    changes = {}
    for name in ("temperature", "top_p", "max_completion_tokens"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    try:
        return cfg.params.replace(**changes) if changes else cfg.params
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_backend_flags(p) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--backend", action="append", help="backend id from the config (repeatable)")
    p.add_argument("--mock", action="append",
                   help="scripted backend: a script file or a directive such as @perfect (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-p", type=float)
    p.add_argument("--max-completion-tokens", type=_positive_int)
    p.add_argument("--workers", type=_positive_int)


# --- subcommands -----------------------------------------------------------


def cmd_prompt(args) -> int:
    if args.task is not None:
        task = args.task
    else:
        task = _read_text(args.task_file, label="task file") if args.task_file else ""
    target = _target(args.target, args.lang)
    variant = Strategy.parse(args.strategy)
    if args.code_aware and variant is Strategy.BASELINE:
        raise UsageError("--code-aware needs a countdown strategy")
    strategy = PromptStrategy(variant, args.code_aware, Language(args.lang))
    prompt = render(task, target, strategy)
    text = prompt.suffix_text if args.suffix_only else prompt.full_text
    if args.format == "json-lines":
        _emit(args, {"strategy": strategy.name, "target": args.target, "language": args.lang,
                     "text": text, "sentinel": DRAFT_SENTINEL if variant is Strategy.DRAFT_THEN_CAPEL else None})
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .tokenizer import CjkPolicy

    raw = _read_text(args.input, label="input")
    if args.strip_newline and raw.endswith("\n"):
        raw = raw[:-1]
    _, report = check(raw, _target(args.target, args.lang), args.code_mode, cjk_policy=CjkPolicy(args.cjk_policy))
    result = {"target": args.target, **report.to_dict()}
    if args.format == "json-lines":
        _emit(args, result)
    else:
        status = "valid" if report.valid else f"INVALID ({report.primary.value})"
        print(f"{status}: achieved {report.achieved_length} of {args.target}")
        for issue in report.errors:
            print(f"  error   {issue.error_class.value} @{issue.position}: {issue.detail}")
        for issue in report.warnings:
            print(f"  warning {issue.error_class} @{issue.position}: {issue.detail}")
    return EXIT_OK if report.valid else EXIT_DOMAIN


def _load_records(paths):
    from .harness.records import RecordStore

    records = []
    for p in paths:
        if not Path(p).exists():
            raise UsageError(f"records file not found: {p}")
        records += RecordStore(p).load()
    return records


def cmd_score(args) -> int:
    from .harness.report import pivot, summarize

    records = _load_records(args.records)
    if args.track:
        records = [r for r in records if r.track == args.track]
    table = summarize(records, args.group_by or ("backend_id", "strategy"), out_dir=args.out,
                      window=args.window, lifebench=args.lifebench or None)
    rows = pivot(table) if args.pivot else table.rows
    _emit(args, rows)
    return EXIT_OK


def cmd_run(args) -> int:
    from .harness.records import RecordStore
    from .harness.report import summarize
    from .harness.runner import run_track
    from .harness.tracks import load_track

    cfg = _config(args)
    backends = _backends(args, cfg)
    instances = load_track(args.track, args.source, language=args.lang, min_target=args.min_target,
                           max_target=args.max_target, include_five_word_budget=args.five_word_budget)
    if args.limit:
        instances = instances[: args.limit]
    store = RecordStore(args.records) if args.records else None

    def progress(rec):
        log.info("%s achieved=%d target=%d%s", rec.record_id, rec.achieved, rec.target,
                 f" error={rec.error}" if rec.error else "")

    records = run_track(instances, backends, args.strategy or ["baseline", "capel"], _params(args, cfg),
                        store=store, workers=args.workers or cfg.workers, cjk_policy=cfg.cjk_policy,
                        progress=progress)
    table = summarize(records, out_dir=args.out)
    _emit(args, table.rows)
    failed = sum(r.error is not None for r in records)
    if failed == len(records):
        print(f"all {failed} calls failed", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_diagnose(args) -> int:
    from .harness.diagnostic import run_counting_diagnostic
    from .harness.tracks import load_track

    cfg = _config(args)
    backends = _backends(args, cfg)
    instances = []
    for src in args.source:
        instances += load_track("counting", src, language=args.lang)
    result = run_counting_diagnostic(backends, instances, _params(args, cfg), store=args.records,
                                     workers=args.workers or cfg.workers, out_dir=args.out)
    rows = []
    for lang in result.languages():
        rows += [{"language": lang, **row} for row in result.heatmap(lang, [b.id for b in backends])]
    _emit(args, rows)
    return EXIT_OK


def cmd_bbmh(args) -> int:
    from .bbmh import MhVariant, bbmh_table, run_bbmh
    from .harness.tracks import load_track

    cfg = _config(args)
    backends = _backends(args, cfg)
    params = _params(args, cfg)
    if args.source:
        tasks = [(i.task_text, i.target) for i in load_track(args.track, args.source, language=args.lang)]
        if args.limit:
            tasks = tasks[: args.limit]
    else:
        if args.target is None:
            raise UsageError("bbmh needs --target with --task/--task-file, or --source")
        text = args.task if args.task is not None else _read_text(args.task_file, label="task file")
        tasks = [(text, _target(args.target, args.lang))]

    outcomes = {}
    for backend in backends:
        for variant in args.variant or [v.value for v in MhVariant]:
            key = (backend.id, MhVariant.parse(variant).value)
            outcomes[key] = [run_bbmh(backend, text, tgt, variant, max_steps=args.max_steps, tau=args.tau,
                                      seed=args.seed + i, params=params)
                             for i, (text, tgt) in enumerate(tasks)]
    if args.details:
        _emit(args, [{"model": k[0], **o.to_dict()} for k, outs in outcomes.items() for o in outs], table=False)
    rows = bbmh_table(outcomes)
    if args.out:
        from .harness.report import to_markdown, write_rows

        out = Path(args.out) / "tables"
        write_rows(out / "bbmh.csv", rows)
        (out / "bbmh.md").write_text(to_markdown(rows, list(rows[0])) if rows else "", encoding="utf-8")
    _emit(args, rows)
    return EXIT_OK


def cmd_judge(args) -> int:
    from .harness.records import RecordStore
    from .harness.tracks import load_track
    from .metrics import judge_single_answer

    cfg = _config(args)
    if args.judge_backend:
        judge = cfg.backend(args.judge_backend)
    elif args.mock:
        from .mocks import load_script

        judge = load_script(args.mock[0], id="judge")
    elif cfg.judge:
        judge = cfg.backend(cfg.judge)
    else:
        raise UsageError("choose a judge with --judge-backend, --mock, or `judge:` in the config")
    questions = {i.id: i.task_text for i in load_track("mtbench-li", args.source)}
    records = _load_records([args.records])
    out = RecordStore(args.out_records)
    failures = 0
    rows = []
    for rec in records:
        if rec.task_id not in questions or rec.error:
            out.append(rec)
            continue
        try:
            rec.judge_score = judge_single_answer(questions[rec.task_id], rec.stripped_text, judge)
        except ExactLenError as exc:
            failures += 1
            rec.extra["judge_error"] = str(exc)
        out.append(rec)
        rows.append({"record_id": rec.record_id, "judge_score": rec.judge_score})
    _emit(args, rows)
    return EXIT_DOMAIN if failures else EXIT_OK


def cmd_chart(args) -> int:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise UsageError("the chart command needs matplotlib (pip install 'artifact[plot]')") from None
    from .harness.report import smoothed_curve

    records = _load_records(args.records)
    group_by = tuple(args.group_by or ("backend_id", "strategy"))
    curve = smoothed_curve(records, group_by, args.window)
    fig, ax = plt.subplots(figsize=(7, 4))
    series: dict = {}
    for row in curve:
        series.setdefault(" / ".join(str(row[g]) for g in group_by), []).append((row["target"], row["mald_smoothed"]))
    for label, pts in sorted(series.items()):
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label)
    ax.set_xlabel("target length")
    ax.set_ylabel("MALD (smoothed)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(args.output, dpi=150)
    _emit(args, {"chart": str(args.output), "series": len(series)}, table=False)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json-lines"), default="text",
                        help="human-readable output or one JSON object per line")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="exactlen", description="Exact-length prompting toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("prompt", parents=[common], help="render a prompt for a target length")
    p.add_argument("--strategy", default="capel", choices=[s.value for s in Strategy])
    p.add_argument("--target", type=_positive_int, required=True)
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--code-aware", action="store_true")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--task", help="task text")
    g.add_argument("--task-file", help="file holding the task text ('-' for stdin)")
    p.add_argument("--suffix-only", action="store_true", help="print only the length-control suffix")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("validate", parents=[common], help="check a countdown reply")
    p.add_argument("input", nargs="?", default="-", help="reply file, or '-' for stdin")
    p.add_argument("--target", type=_positive_int, required=True)
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--code-mode", action="store_true")
    p.add_argument("--cjk-policy", choices=("include-punctuation", "exclude-punctuation"),
                   default="include-punctuation")
    p.add_argument("--keep-newline", dest="strip_newline", action="store_false",
                   help="keep a final newline instead of treating it as file framing")
    p.set_defaults(func=cmd_validate)

    for name, helptext in (("score", "summarize stored run records"), ("summarize", "alias of score")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("records", nargs="+", help="JSON Lines record files")
        p.add_argument("--group-by", action="append", help="record field to group by (repeatable)")
        p.add_argument("--track", help="only records from this track")
        p.add_argument("--out", help="directory for tables/ and plots/")
        p.add_argument("--window", type=_positive_int, default=25)
        p.add_argument("--lifebench", action="store_true", help="force LD/LS columns")
        p.add_argument("--pivot", action="store_true", help="model-by-strategy layout")
        p.set_defaults(func=cmd_score)

    p = sub.add_parser("run", parents=[common], help="run a track against backends")
    p.add_argument("--track", required=True)
    p.add_argument("--source", help="dataset file for file-backed tracks")
    p.add_argument("--strategy", action="append", help="baseline, capel, draft-capel (repeatable)")
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--min-target", type=_positive_int, default=1)
    p.add_argument("--max-target", type=_positive_int, default=1000)
    p.add_argument("--five-word-budget", action="store_true")
    p.add_argument("--limit", type=_positive_int)
    p.add_argument("--records", help="append-only JSON Lines store; rerunning resumes")
    p.add_argument("--out", help="directory for tables/ and plots/")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diagnose", parents=[common], help="token-counting diagnostic")
    p.add_argument("--source", action="append", required=True, help="sentence file (repeatable)")
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--records")
    p.add_argument("--out")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bbmh", parents=[common], help="black-box Metropolis-Hastings baseline")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--task")
    g.add_argument("--task-file")
    g.add_argument("--source", help="dataset file; every instance becomes a task")
    p.add_argument("--track", default="mtbench-li")
    p.add_argument("--target", type=_positive_int)
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--variant", action="append", choices=("acc", "mem", "accmem", "iterative_acceptance",
                                                          "iterative_memory", "iterative_acceptance_memory"))
    p.add_argument("--max-steps", type=_positive_int, default=15)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--limit", type=_positive_int)
    p.add_argument("--details", action="store_true", help="also print every outcome")
    p.add_argument("--out")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_bbmh)

    p = sub.add_parser("judge", parents=[common], help="single-answer grading of stored records")
    p.add_argument("--records", required=True)
    p.add_argument("--source", required=True, help="MT-Bench-LI question file")
    p.add_argument("--out-records", required=True)
    p.add_argument("--config")
    p.add_argument("--judge-backend")
    p.add_argument("--mock", action="append")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("chart", parents=[common], help="plot the smoothed MALD curve")
    p.add_argument("records", nargs="+")
    p.add_argument("--output", default="plots/mald_curve.png")
    p.add_argument("--group-by", action="append")
    p.add_argument("--window", type=_positive_int, default=25)
    p.set_defaults(func=cmd_chart)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError, LoadError, InvalidTargetError, UnsupportedUnitError, StorageError) as exc:
        print(f"exactlen {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExactLenError as exc:
        print(f"exactlen {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
