import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from exactlen.errors import EmptyInputError, JudgeParseError, UndefinedScoreError
from exactlen.gateway import ScriptedMock
from exactlen.metrics import (
    LengthRecord,
    exact_match,
    judge_single_answer,
    lifebench_ld,
    lifebench_ls,
    lifebench_scores,
    mae,
    mald,
    parse_judge_rating,
    rouge,
    summarize_compliance,
)

from oracles import brute_em, brute_mae, brute_mald, lcs_len

PAIRS = st.lists(st.tuples(st.integers(1, 2000), st.integers(0, 4000)), min_size=1, max_size=50)


def test_exact_match():
    assert exact_match([(5, 5), (5, 4)]) == 0.5


def test_mae_values():
    assert mae([(10, 12)]) == 2.0
    assert mae([(10, 12), (10, 8)]) == 2.0


def test_mald_values():
    assert mald([(10, 12)]) == 0.2
    assert mald([(4, 2), (100, 100)]) == 0.25


def test_empty_input_rejected():
    for fn in (exact_match, mae, mald, lifebench_ld, lifebench_ls):
        with pytest.raises(EmptyInputError):
            fn([])


def test_invalid_records():
    with pytest.raises(ValueError):
        LengthRecord(0, 3)
    with pytest.raises(ValueError):
        LengthRecord(3, -1)


def test_lifebench_defaults():
    assert lifebench_ld([(100, 120)]) == pytest.approx(20.0)
    assert lifebench_ld([(100, 80), (100, 120)], signed=True) == pytest.approx(0.0)
    assert lifebench_ls([(100, 100)]) == 100.0
    assert lifebench_ls([(100, 150)]) == pytest.approx(50.0)
    assert lifebench_ls([(10, 40)]) == 0.0


def test_lifebench_pluggable():
    ld, ls = lifebench_scores([(10, 12)], ld_fn=lambda r: -1.0, knots=((0, 10), (0.1, 5), (0.5, 0)))
    assert ld == -1.0
    assert ls == pytest.approx(0.0 + 5 - 5 * (0.2 - 0.1) / 0.4)


def test_summary_row():
    s = summarize_compliance([(10, 10), (10, 12)])
    assert (s.n, s.em, s.mae) == (2, 0.5, 1.0)
    assert s.mald == pytest.approx(0.1)


@given(PAIRS)
def test_matches_exact_oracle(pairs):
    assert abs(exact_match(pairs) - float(brute_em(pairs))) < 1e-12
    assert abs(mae(pairs) - float(brute_mae(pairs))) < 1e-12
    assert abs(mald(pairs) - float(brute_mald(pairs))) < 1e-12


@given(PAIRS, st.randoms(use_true_random=False))
def test_permutation_invariance(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    for fn in (exact_match, mae, mald, lifebench_ld, lifebench_ls):
        assert fn(shuffled) == pytest.approx(fn(pairs), abs=1e-12)


@given(PAIRS)
def test_doubling(pairs):
    doubled = [(2 * t, 2 * a) for t, a in pairs]
    assert exact_match(doubled) == exact_match(pairs)
    assert mald(doubled) == pytest.approx(mald(pairs), abs=1e-12)
    assert mae(doubled) == pytest.approx(2 * mae(pairs), abs=1e-9)


@given(st.integers(1, 500), st.lists(st.integers(0, 1000), min_size=1, max_size=30))
def test_shared_target(target, achieved):
    pairs = [(target, a) for a in achieved]
    assert mald(pairs) == pytest.approx(mae(pairs) / target, abs=1e-12)
    if target == 1:
        assert mald(pairs) == pytest.approx(mae(pairs), abs=1e-12)


def test_rouge_hand_case():
    s = rouge("the cat sat", "the cat ran")
    assert s.rouge1.f1 == pytest.approx(2 / 3, abs=1e-9)
    assert s.rouge2.f1 == pytest.approx(1 / 2, abs=1e-9)
    assert s.rougeL.f1 == pytest.approx(2 / 3, abs=1e-9)


def test_rouge_identical_and_normalized():
    s = rouge("The cat, sat!", "the cat sat")
    assert s.rouge1.f1 == s.rouge2.f1 == s.rougeL.f1 == 1.0


def test_rouge_empty_cases():
    with pytest.raises(UndefinedScoreError):
        rouge("anything", "")
    assert rouge("", "the cat").rouge1.f1 == 0.0


@given(st.lists(st.sampled_from("a b c d e f".split()), max_size=25),
       st.lists(st.sampled_from("a b c d e f".split()), min_size=1, max_size=25))
def test_rouge_l_against_table_lcs(cand, ref):
    s = rouge(" ".join(cand), " ".join(ref))
    lcs = lcs_len(cand, ref)
    p = Fraction(lcs, len(cand)) if cand else 0
    r = Fraction(lcs, len(ref))
    f = 2 * p * r / (p + r) if p + r else 0
    assert s.rougeL.f1 == pytest.approx(float(f), abs=1e-12)


@pytest.mark.parametrize("reply,score", [
    ("Rating: [[7]]", 7.0),
    ("The answer is good. [[8.5]]", 8.5),
    ("Rating: [6]", 6.0),
])
def test_parse_rating(reply, score):
    assert parse_judge_rating(reply) == score


@pytest.mark.parametrize("reply", ["no rating here", "[[11]]", "[[0]]"])
def test_parse_rating_failures(reply):
    with pytest.raises(JudgeParseError):
        parse_judge_rating(reply)


def test_judge_with_scripted_backend():
    judge = ScriptedMock("judge", ["Rating: [[7]]"])
    assert judge_single_answer("What is 2+2?", "4", judge) == 7.0
    prompt = judge.prompts[0]
    assert "What is 2+2?" in prompt.full_text
    assert prompt.system_text


def test_oracle_batch_of_100():
    rng = random.Random(7)
    for _ in range(100):
        pairs = [(rng.randint(1, 1000), rng.randint(0, 2000)) for _ in range(rng.randint(1, 80))]
        assert abs(mald(pairs) - float(brute_mald(pairs))) <= 1e-12
