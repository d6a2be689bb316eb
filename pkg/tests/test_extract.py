from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mathforge.expr import check_equation, eval_expression
from mathforge.extract import (
    NormalizationError,
    extract_equations,
    extract_final_answer,
    normalize_answer,
    patterns_from_config,
)


def eq_texts(text):
    return [eq.text() for eq in extract_equations(text)]


# --------------------------------------------------------------- equations

def test_extracts_equations_in_document_order():
    text = ("Since she gave him four $20 bills, that means she gave him "
            "4 * $20 = $80. Now we simply subtract: $80 - $70 = $10.")
    assert eq_texts(text) == ["4 * 20 = 80", "80 - 70 = 10"]


def test_incomplete_equation_is_skipped():
    assert eq_texts("+ 4 = 7") == []
    assert eq_texts("= 12") == []
    assert eq_texts("3 + 4 =") == []


def test_chained_equality_splits_pairwise():
    text = "3.14×(0.4米)²=3.14×0.16=0.5024平方米"
    eqs = extract_equations(text)
    assert len(eqs) == 2
    assert all(check_equation(eq).is_true for eq in eqs)


def test_calculator_annotations_are_recognized():
    eqs = extract_equations("She got $<<20*4=80>>80 in total.")
    assert [eq.text() for eq in eqs] == ["20 * 4 = 80"]


def test_wordy_candidates_shrink_to_the_arithmetic():
    text = "$1,350 advance payment + 6 x $350 monthly installments = $3,150"
    eqs = extract_equations(text)
    assert len(eqs) == 1
    assert eqs[0].text() == "1350 + 6 * 350 = 3150"
    assert check_equation(eqs[0]).is_false


def test_algebra_poisons_the_sentence():
    assert eq_texts("5x + 4y = 29.2") == []
    assert eq_texts("设x米，1.5x = 540") == []
    assert eq_texts("let n = 5, then 2 + 2 = 4") == []
    # but an adjacent clean sentence still yields its equation
    assert eq_texts("1.5x = 540. Also 2 + 2 = 4.") == ["2 + 2 = 4"]


def test_noise_only_parens_are_dropped():
    text = "$3,350 (Cozy Homes' offer) - $3,150 (Furniture United's offer) = $200"
    assert eq_texts(text) == ["3350 - 3150 = 200"]


def test_spans_reslice_to_the_same_equation(casebook_paths):
    for by_model in casebook_paths.values():
        for path in by_model.values():
            for eq in path.equations:
                start, end = eq.span
                assert 0 <= start < end <= len(path.text)
                again = extract_equations(path.text[start:end])
                assert eq.text() in [a.text() for a in again]


def test_extraction_is_idempotent(casebook_paths):
    for by_model in casebook_paths.values():
        for path in by_model.values():
            once = [(eq.text(), eq.span) for eq in extract_equations(path.text)]
            twice = [(eq.text(), eq.span) for eq in extract_equations(path.text)]
            assert once == twice


# ----------------------------------------------------------------- answers

def test_answer_markers():
    assert extract_final_answer("Answer: \\boxed{10}.").value.fraction == 10
    assert extract_final_answer("The answer is 10.").value.fraction == 10
    assert extract_final_answer("blah blah\n#### 72").value.fraction == 72
    got = extract_final_answer("所以每千克大米的价格是3.6元。")
    assert got.value.fraction == Fraction(36, 10) and got.unit == "元"


def test_boxed_beats_trailing_numbers():
    text = "The items cost $4 and $5. Answer: \\boxed{9}. Check: 9."
    assert extract_final_answer(text).value.fraction == 9


def test_last_match_wins_within_a_tier():
    text = "The answer is 3. Wait, no. The answer is 7."
    assert extract_final_answer(text).value.fraction == 7


def test_last_number_fallback():
    assert extract_final_answer("Therefore, Thea got a change of $10.").value.fraction == 10
    assert extract_final_answer("no numerals here at all") is None


def test_trailing_text_without_markers_does_not_change_answer():
    text = "The answer is 42."
    before = extract_final_answer(text)
    after = extract_final_answer(text + "\nHope that helps, let me know!")
    assert before.value.fraction == after.value.fraction == 42


def test_golden_corpus_answers(casebook_paths):
    expected = {
        ("wp-change", "aligned-13b"): "10",
        ("wp-change", "chatgpt"): "10",
        ("wp-change", "gpt4"): "10",
        ("wp-offers", "aligned-13b"): "100",
        ("wp-offers", "chatgpt"): "200",
        ("wp-offers", "gpt4"): "100",
        ("wp-lid", "aligned-13b"): "0.5024",
        ("wp-lid", "chatgpt"): "0.155",
        ("wp-lid", "gpt4"): "0.5024",
        ("wp-rice", "aligned-13b"): "3.6",
        ("wp-rice", "chatgpt"): "10.48",
        ("wp-rice", "gpt4"): "3.6",
        ("wp-wire", "aligned-13b"): "360",
        ("wp-wire", "chatgpt"): "180",
        ("wp-wire", "gpt4"): "216",
    }
    for (item_id, model), want in expected.items():
        got = casebook_paths[item_id][model].final_answer
        assert got is not None, (item_id, model)
        assert got.value.fraction == Fraction(want), (item_id, model)


# --------------------------------------------------------------- normalize

def test_normalize_answer_examples():
    a = normalize_answer("$3,450")
    assert a.value.fraction == 3450 and a.unit == "$"
    assert normalize_answer("0").value.fraction == 0
    pct = normalize_answer("50%")
    assert pct.value.fraction == 50 and pct.unit == "%"
    zh = normalize_answer("3.6元")
    assert zh.value.fraction == Fraction(36, 10) and zh.unit == "元"
    frac = normalize_answer("3/4")
    assert frac.value.fraction == Fraction(3, 4)
    neg = normalize_answer("-12")
    assert neg.value.fraction == -12


def test_normalize_answer_word_unit():
    a = normalize_answer("25 km")
    assert a.value.fraction == 25 and a.unit == "km"


def test_normalize_answer_rejects_non_numerals():
    for bad in ["", "   ", "apples", "x+1"]:
        with pytest.raises(NormalizationError):
            normalize_answer(bad)


def test_percent_answer_agrees_with_expression_percent():
    # the expression oracle evaluates 50% to 1/2; the answer normalizer
    # keeps 50 with a percent unit, and the two meet via answers_equal
    from mathforge.verify import answers_equal
    half = eval_expression(__import__("mathforge.expr", fromlist=["parse_expression"])
                           .parse_expression("50%"))
    assert half.fraction == Fraction(1, 2)
    gold = normalize_answer("50%")
    from mathforge.extract import AnswerValue
    assert answers_equal(gold, AnswerValue(half))
    assert answers_equal(AnswerValue(half), gold)


# ------------------------------------------------------------------ config

def test_patterns_from_config_roundtrip():
    pats = patterns_from_config([
        {"lang": "en", "kind": "answer", "priority": 1,
         "pattern": r"RESULT=(?P<ans>\d+)"},
        {"kind": "equation-marker", "pattern": r"\[\[([^\[\]]+)\]\]"},
    ])
    assert extract_final_answer("RESULT=42 but 7 later", pats).value.fraction == 42
    eqs = extract_equations("so [[2*3=6]] holds", pats)
    assert [eq.text() for eq in eqs] == ["2 * 3 = 6"]


def test_patterns_require_ans_group():
    with pytest.raises(ValueError):
        patterns_from_config([{"kind": "answer", "priority": 1, "pattern": r"\d+"}])


@given(st.text(alphabet="0123456789+-*/=. ", max_size=40))
def test_extraction_never_crashes_on_arithmetic_soup(text):
    for eq in extract_equations(text):
        check_equation(eq)
