import pytest
from hypothesis import given, strategies as st

from exactlen.errors import UnsupportedUnitError
from exactlen.tokenizer import (
    CjkPolicy,
    LengthTarget,
    TokenUnit,
    count_cjk_characters,
    count_english_words,
    measure_length,
    tokenize_english,
)

from oracles import split_count

WORD = st.text(alphabet="abcdefghijklmnopqrstuvwxyzABC0123456789,.'!?-", min_size=1, max_size=8).filter(
    lambda w: any(c.isalnum() for c in w))


def test_five_token_example():
    spans = tokenize_english("Hello, world! How's everything? Great.")
    assert [s.surface for s in spans] == ["Hello,", "world!", "How's", "everything?", "Great."]


def test_hyphenated_words_and_numbers():
    text = "state-of-the-art results, 2024."
    assert len(tokenize_english(text)) == split_count(text) == 3


@pytest.mark.parametrize("text", ["", "   ", "\n\t"])
def test_blank_input_has_no_tokens(text):
    assert tokenize_english(text) == []
    assert count_cjk_characters(text) == 0


def test_spans_carry_utf8_byte_offsets():
    spans = tokenize_english("héllo wörld")
    assert [s.start for s in spans] == [0, 7]


def test_lone_punctuation_is_not_a_word():
    assert count_english_words("Wait - what ?") == 2


def test_cjk_counts_ideographs():
    assert count_cjk_characters("今天天气") == 4


def test_cjk_punctuation_policy():
    text = "今天，天气"
    assert count_cjk_characters(text, CjkPolicy.INCLUDE_PUNCTUATION) == 5
    assert count_cjk_characters(text, CjkPolicy.EXCLUDE_PUNCTUATION) == 4


def test_cjk_ignores_markers_and_latin():
    assert count_cjk_characters("<3>今<2>天<1>好<0>") == 3
    assert count_cjk_characters("abc 123") == 0


def test_measure_length_dispatch():
    assert measure_length("Hello, world!", TokenUnit.ENGLISH_WORD) == 2
    assert measure_length("", TokenUnit.CJK_CHARACTER) == 0
    stripped = "Hello, world! How's everything? Great."
    assert measure_length(stripped, TokenUnit.ENGLISH_WORD) == 5


def test_code_lines_are_not_measured_here():
    with pytest.raises(UnsupportedUnitError):
        measure_length("a\nb", TokenUnit.CODE_LINE)


def test_length_target_rejects_zero():
    with pytest.raises(ValueError):
        LengthTarget(0)


def test_unit_aliases():
    assert TokenUnit.parse("zh") is TokenUnit.CJK_CHARACTER
    assert TokenUnit.parse("words") is TokenUnit.ENGLISH_WORD
    with pytest.raises(UnsupportedUnitError):
        TokenUnit.parse("syllables")


@given(st.lists(WORD, max_size=40))
def test_rejoining_tokens_is_idempotent(words):
    text = " ".join(words)
    once = [s.surface for s in tokenize_english(text)]
    again = [s.surface for s in tokenize_english(" ".join(once))]
    assert once == again


@given(st.lists(WORD, max_size=40), WORD)
def test_appending_a_word_adds_one(words, extra):
    text = " ".join(words)
    assert count_english_words(text + " " + extra) == count_english_words(text) + 1


@given(st.text(max_size=200))
def test_measure_matches_tokenizer_and_is_non_negative(text):
    n = measure_length(text, TokenUnit.ENGLISH_WORD)
    assert n == len(tokenize_english(text)) >= 0
    assert measure_length(text, TokenUnit.CJK_CHARACTER) >= 0


@given(st.lists(WORD, max_size=30))
def test_agrees_with_whitespace_oracle(words):
    text = "  ".join(words)
    assert count_english_words(text) == split_count(text)
