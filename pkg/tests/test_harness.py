import json

import pytest

from exactlen.errors import EmptyInputError, LoadError, StorageError
from exactlen.gateway import CATEGORY_TEMPERATURES, BackendCaps, DecodingParams, ScriptedMock
from exactlen.harness import (
    LIFEBENCH_BUDGETS,
    RecordStore,
    load_track,
    parse_count,
    pivot,
    recompute,
    run_counting_diagnostic,
    run_track,
    summarize,
)
from exactlen.harness.records import evaluate_reply
from exactlen.mocks import mock_constant, mock_count_oracle, mock_faulty, mock_perfect_capel
from exactlen.prompting import DRAFT_SENTINEL, Language, PromptStrategy, Strategy
from exactlen.tokenizer import LengthTarget

from oracles import brute_em, brute_mae, brute_mald


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return path


# --- tracks ----------------------------------------------------------------

def test_random_text_track():
    en = load_track("random-text")
    assert len(en) == 1000 and [i.target.value for i in en] == list(range(1, 1001))
    zh = load_track("random-text", language="zh", max_target=5)
    assert all(i.language == "zh" for i in zh)


def test_lifebench_budgets(samples):
    assert LIFEBENCH_BUDGETS[0] == 16 and len(LIFEBENCH_BUDGETS) == 10
    insts = load_track("lifebench", samples / "lifebench.jsonl")
    assert len(insts) == 30
    assert {i.language for i in insts} == {"en", "zh"}


def test_xsum_budgets(samples):
    insts = load_track("xsum", samples / "xsum.jsonl", include_five_word_budget=True)
    first = [i for i in insts if i.id.startswith("xsum-x1-")]
    assert [i.meta["budget"] for i in first] == ["ref", "5", "50", "120"]
    assert first[0].target.value == 13 and first[0].reference


def test_mtbench_sample(samples):
    insts = load_track("mtbench-li", samples / "mtbench_li.jsonl")
    assert {i.category for i in insts} == set(CATEGORY_TEMPERATURES)


@pytest.mark.parametrize("rows,field", [
    ([{"id": 1, "category": "poetry", "prompt": "p", "target": 5}], "category"),
    ([{"id": 1, "category": "math", "prompt": "p", "target": 0}], "target"),
    ([{"id": 1, "category": "math", "target": 5}], "prompt"),
])
def test_mtbench_errors_name_the_field(tmp_path, rows, field):
    with pytest.raises(LoadError) as err:
        load_track("mtbench-li", write_jsonl(tmp_path / "m.jsonl", rows))
    assert err.value.field == field and err.value.line == 1


def test_load_errors(tmp_path):
    with pytest.raises(LoadError):
        load_track("xsum", tmp_path / "missing.jsonl")
    (tmp_path / "empty.jsonl").write_text("\n")
    with pytest.raises(LoadError):
        load_track("xsum", tmp_path / "empty.jsonl")
    (tmp_path / "bad.jsonl").write_text('{"document": "x", "summary": "y"}\nnot json\n')
    with pytest.raises(LoadError) as err:
        load_track("xsum", tmp_path / "bad.jsonl")
    assert err.value.line == 2
    with pytest.raises(LoadError):
        load_track("counting", write_jsonl(tmp_path / "c.jsonl", [{"sentence": "one two", "length": 3}]))


def test_counting_text_file(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("Hello there.\nOne two three.\n")
    assert [i.target.value for i in load_track("counting", f)] == [2, 3]


# --- evaluation and records -------------------------------------------------

def test_evaluate_reply_modes():
    t = LengthTarget(3)
    capel = PromptStrategy(Strategy.CAPEL)
    text, n, report = evaluate_reply("<3>a1<2>b2<1>c3<0>", t, capel)
    assert (text, n, report.valid) == ("a1 b2 c3", 3, True)
    # Text outside the countdown still counts toward measured length.
    assert evaluate_reply("Sure: <3>a1<2>b2<1>c3<0>", t, capel)[1] == 4
    assert evaluate_reply("one two", t, PromptStrategy(Strategy.BASELINE))[1:] == (2, None)
    draft = f"a long draft here\n{DRAFT_SENTINEL}\n<3>a1<2>b2<1>c3<0>"
    assert evaluate_reply(draft, t, PromptStrategy(Strategy.DRAFT_THEN_CAPEL))[1] == 3
    code = PromptStrategy(Strategy.CAPEL, code_aware=True)
    assert evaluate_reply("<2>x = 1\n<1>print(x)\n<0>", LengthTarget(2), code)[1] == 2


def test_store_resume_and_self_verification(tmp_path):
    store = RecordStore(tmp_path / "runs" / "r.jsonl")
    insts = load_track("random-text", max_target=12)
    backend = mock_faulty({"off_by_one": 1, "early_stop": 1}, seed=2)
    first = run_track(insts, [backend], ["capel", "baseline"], store=store)
    assert len(store.load()) == 24
    calls = backend.calls
    again = run_track(insts, [backend], ["capel", "baseline"], store=store)
    assert backend.calls == calls
    assert [r.to_dict() for r in again] == [r.to_dict() for r in first]
    for rec in store.load():
        assert recompute(rec) == (rec.achieved, rec.valid)


def test_torn_final_line_is_skipped_and_repaired(tmp_path):
    path = tmp_path / "r.jsonl"
    store = RecordStore(path)
    run_track(load_track("random-text", max_target=3), [mock_perfect_capel()], ["capel"], store=store)
    with path.open("a") as fh:
        fh.write('{"record_id": "torn')
    assert len(store.load()) == 3
    records = run_track(load_track("random-text", max_target=4), [mock_perfect_capel()], ["capel"], store=store)
    assert len(records) == 4 and len(store.load()) == 4


def test_newer_schema_rejected(tmp_path):
    store = RecordStore(tmp_path / "r.jsonl")
    run_track(load_track("random-text", max_target=1), [mock_perfect_capel()], ["capel"], store=store)
    data = json.loads(store.path.read_text())
    data["schema_version"] = 99
    store.path.write_text(json.dumps(data) + "\n")
    with pytest.raises(StorageError):
        store.load()


def test_unwritable_store_aborts(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(StorageError):
        RecordStore(blocker / "sub" / "r.jsonl")


def test_storage_failure_mid_run_aborts(tmp_path, monkeypatch):
    store = RecordStore(tmp_path / "r.jsonl")

    def fail(record):
        raise StorageError("disk full")

    monkeypatch.setattr(store, "append", fail)
    with pytest.raises(StorageError):
        run_track(load_track("random-text", max_target=20), [mock_perfect_capel()], ["capel"], store=store)


def test_backend_failures_become_records():
    flaky = ScriptedMock("flaky", ["<1>Hi<0>"], caps=BackendCaps(max_completion_tokens=10, max_temperature=0.5))
    records = run_track(load_track("random-text", max_target=2), [flaky], ["capel"], clamp_to_caps=False)
    assert all(r.error and "OverCapError" in r.error and r.achieved == 0 for r in records)
    table = summarize(records)
    assert table.rows[0]["errors"] == 2 and table.rows[0]["em"] == 0.0


def test_max_tokens_clamped_to_caps():
    backend = mock_perfect_capel(caps=BackendCaps(max_completion_tokens=4096))
    rec = run_track(load_track("random-text", max_target=1), [backend], ["capel"],
                    DecodingParams(max_completion_tokens=16384))[0]
    assert rec.params["max_completion_tokens"] == 4096 and rec.error is None


def test_mtbench_temperatures_and_code_mode(samples):
    insts = load_track("mtbench-li", samples / "mtbench_li.jsonl")
    records = run_track(insts, [mock_perfect_capel()], ["capel", "baseline"], DecodingParams(temperature=1.0))
    for r in records:
        assert r.params["temperature"] == CATEGORY_TEMPERATURES[r.category]
        assert r.strategy == ("capel+code" if r.category == "coding" and r.strategy != "baseline" else r.strategy)


def test_runs_are_deterministic():
    insts = load_track("random-text", max_target=40)
    a = summarize(run_track(insts, [mock_faulty({"off_by_one": 3, "early_stop": 1}, seed=9)], ["capel"]))
    b = summarize(run_track(insts, [mock_faulty({"off_by_one": 3, "early_stop": 1}, seed=9)], ["capel"]))
    assert a.rows == b.rows


# --- report ----------------------------------------------------------------

def test_summary_matches_oracle_and_totals(tmp_path):
    insts = load_track("random-text", max_target=30)
    backends = [mock_perfect_capel(), mock_faulty({"off_by_one": 2, "early_stop": 1, "markers_only_tail": 1})]
    records = run_track(insts, backends, ["capel", "baseline"])
    table = summarize(records, out_dir=tmp_path)
    assert table.total == len(records) == 120
    for row in table.rows:
        pairs = [(r.target, r.achieved) for r in records
                 if (r.backend_id, r.strategy) == (row["backend_id"], row["strategy"])]
        assert row["em"] == pytest.approx(float(brute_em(pairs)), abs=1e-12)
        assert row["mae"] == pytest.approx(float(brute_mae(pairs)), abs=1e-12)
        assert row["mald"] == pytest.approx(float(brute_mald(pairs)), abs=1e-12)
    for name in ("tables/summary.csv", "tables/summary.json", "tables/summary.md", "plots/mald_curve.csv"):
        assert (tmp_path / name).exists()
    assert {r["target"] for r in table.curve} == set(range(1, 31))


def test_summary_group_by_language_and_pivot():
    recs = run_track(load_track("random-text", max_target=5) + load_track("random-text", language="zh", max_target=5),
                     [mock_perfect_capel()], ["capel", "baseline"])
    table = summarize(recs, ("language",))
    assert [r["language"] for r in table.rows] == ["en", "zh"]
    rows = pivot(summarize(recs))
    assert rows[0] == {"Model": "mock-perfect", "MALD baseline": 0.0, "MALD capel": 0.0,
                       "EM(%) baseline": 100.0, "EM(%) capel": 100.0}


def test_summary_extras(samples):
    xsum = run_track(load_track("xsum", samples / "xsum.jsonl"), [mock_perfect_capel()], ["capel"])
    row = summarize(xsum).rows[0]
    assert 0 <= row["rouge1"] <= 1 and "rougeL" in row
    life = run_track(load_track("lifebench", samples / "lifebench.jsonl")[:3], [mock_perfect_capel()], ["baseline"])
    row = summarize(life).rows[0]
    assert row["ld"] == 0.0 and row["ls"] == 100.0


def test_summary_rejects_empty():
    with pytest.raises(EmptyInputError):
        summarize([])


# --- counting diagnostic ------------------------------------------------------

@pytest.mark.parametrize("reply,count", [
    ("There are 7 words.", 7),
    ("Seven tokens.", 7),
    ("共有十个字。", 10),
    ("这句话有三个字", 3),
    ("I think 4, maybe 5", 4),
    ("I cannot tell", None),
])
def test_parse_count(reply, count):
    assert parse_count(reply) == count


def test_counting_matrix(samples, tmp_path):
    insts = load_track("counting", samples / "counting_en.jsonl") + \
        load_track("counting", samples / "counting_zh.jsonl", language="zh")
    oracle, ones = mock_count_oracle(), mock_constant("1", id="ones")
    result = run_counting_diagnostic([oracle, ones], insts, out_dir=tmp_path, store=tmp_path / "c.jsonl")
    for lang in ("en", "zh"):
        for n in range(1, 11):
            assert result.accuracy(oracle.id, lang, n) == 1.0
            assert result.accuracy("ones", lang, n) == (1.0 if n == 1 else 0.0)
        rows = (tmp_path / "plots" / f"counting_heatmap_{lang}.csv").read_text().strip().splitlines()
        assert len(rows) == 3 and all(len(r.split(",")) == 11 for r in rows)
    calls = oracle.calls
    run_counting_diagnostic([oracle, ones], insts, store=tmp_path / "c.jsonl")
    assert oracle.calls == calls


def test_counting_prompt_is_bare(samples):
    from exactlen.harness.diagnostic import COUNT_QUERY, count_prompt

    inst = load_track("counting", samples / "counting_en.jsonl")[2]
    p = count_prompt(inst)
    assert p.full_text == inst.task_text + "\n" + COUNT_QUERY and p.system_text is None
