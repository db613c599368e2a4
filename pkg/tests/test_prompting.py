import re

import pytest
from hypothesis import given, settings, strategies as st

from exactlen.errors import InvalidArgumentsError, InvalidTargetError
from exactlen.prompting import (
    DRAFT_SENTINEL,
    CapelConfig,
    Language,
    PromptStrategy,
    Strategy,
    extract_revision,
    render,
    render_baseline,
    render_capel,
    render_draft_then_capel,
)
from exactlen.tokenizer import LengthTarget, TokenUnit

EXAMPLE = "<5>Hello,<4>world!<3>How's<2>everything?<1>Great.<0>"
CODE_RULE = "a complete code line counts as one token"


def words(n):
    return LengthTarget(n, TokenUnit.ENGLISH_WORD)


def test_baseline_wording():
    p = render_baseline("Describe rain.", words(50))
    assert "exactly 50 words" in p.suffix_text
    assert p.full_text.startswith("Describe rain.")
    assert "<" not in p.suffix_text


def test_baseline_chinese_and_singular():
    zh = render_baseline("写一段话", LengthTarget(10, TokenUnit.CJK_CHARACTER))
    assert "10" in zh.suffix_text and "字" in zh.suffix_text
    assert "exactly 1 word." in render_baseline("Say hi.", words(1)).suffix_text


def test_capel_contains_fixed_example_for_any_target():
    for n in (1, 5, 37, 1000):
        assert EXAMPLE in render_capel("task", CapelConfig(words(n))).suffix_text


def test_capel_rule_blocks_present():
    s = render_capel("task", CapelConfig(words(12))).suffix_text
    for heading in ("Required output format", "Word-count and ordering rules",
                    "Correct example (N = 5)", "Typical errors to avoid"):
        assert heading in s
    assert "from 12 down to 1" in s
    assert "exactly 12 markers" in s


def test_code_rule_only_when_asked():
    cfg = CapelConfig(words(100))
    assert CODE_RULE in render_capel("t", cfg, code_aware=True).suffix_text
    assert CODE_RULE not in render_capel("t", cfg).suffix_text


def test_invalid_target():
    with pytest.raises((InvalidTargetError, ValueError)):
        render_capel("t", CapelConfig(words(0)))


def test_decrement_must_be_one():
    with pytest.raises(InvalidArgumentsError):
        CapelConfig(words(5), decrement=2)


def test_custom_delimiters():
    s = render_capel("t", CapelConfig(words(5), marker_open="[[", marker_close="]]")).suffix_text
    assert "[[5]]Hello,[[4]]world!" in s
    assert "<5>" not in s


def test_draft_then_capel():
    p = render_draft_then_capel("task", CapelConfig(words(20)))
    assert p.suffix_text.count(DRAFT_SENTINEL) == 1
    assert "draft" in p.suffix_text
    assert "exactly 20 markers" in p.suffix_text
    assert EXAMPLE in p.suffix_text
    assert p.strategy.variant is Strategy.DRAFT_THEN_CAPEL


def test_chinese_capel():
    s = render_capel("t", CapelConfig(LengthTarget(8, TokenUnit.CJK_CHARACTER))).suffix_text
    assert "8" in s and "<0>" in s


def test_render_dispatch_and_determinism():
    for strat in ("baseline", "capel", "draft-capel"):
        a = render("task", words(7), strat)
        assert a.full_text == render("task", words(7), strat).full_text
    assert render("t", words(7), PromptStrategy(Strategy.CAPEL, True, Language.ENGLISH)).strategy.name == "capel+code"


def test_code_aware_baseline_rejected():
    with pytest.raises(InvalidArgumentsError):
        PromptStrategy(Strategy.BASELINE, code_aware=True)


def test_extract_revision():
    assert extract_revision(f"draft words\n{DRAFT_SENTINEL}\n<1>Hi<0>") == "<1>Hi<0>"
    assert extract_revision("<1>Hi<0>") == "<1>Hi<0>"


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10_000), st.sampled_from(list(Strategy)), st.booleans(), st.sampled_from(["en", "zh"]))
def test_no_placeholders_and_target_mentioned(n, variant, code, lang):
    unit = TokenUnit.parse(lang)
    code = code and variant is not Strategy.BASELINE
    p = render("Some task.", LengthTarget(n, unit), PromptStrategy(variant, code, Language(lang)))
    assert not re.search(r"\{[a-z_]+\}", p.suffix_text)
    if variant is not Strategy.BASELINE:
        assert len(re.findall(rf"(?<!\d){n}(?!\d)", p.suffix_text)) >= 2
