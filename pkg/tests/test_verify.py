import random

import pytest

from mathforge.extract import normalize_answer
from mathforge.verify import (
    FilterPolicy,
    GenMeta,
    ItemMeta,
    MathItem,
    ReasoningPath,
    answers_equal,
    dedup_paths,
    equation_list_key,
    filter_paths,
    passes_filter,
    verify_response,
)

GOLD_NARRATION = {
    # model -> set of case ids the narration calls correct
    "aligned-13b": {"wp-change", "wp-offers", "wp-lid", "wp-rice",
                    "wp-wire", "wp-derivative"},
    "chatgpt": {"wp-change", "wp-derivative"},
    "gpt4": {"wp-change", "wp-offers", "wp-lid", "wp-rice", "wp-derivative"},
}


def make_item(gold, multi=False, **meta):
    golds = [normalize_answer(g) for g in (gold if isinstance(gold, list) else [gold])]
    return MathItem(id="t1", question="q?", gold_answers=tuple(golds),
                    meta=ItemMeta(**meta))


def make_path(text, model="m"):
    return ReasoningPath.from_text(text, GenMeta(model_id=model))


# ----------------------------------------------------------- golden corpus

def test_golden_corpus_narration(casebook_items, casebook_paths):
    for model, correct_cases in GOLD_NARRATION.items():
        for item_id, item in casebook_items.items():
            path = casebook_paths[item_id][model]
            verdict = verify_response(item, path)
            kept = passes_filter(item, verdict)
            assert kept == (item_id in correct_cases), (model, item_id, verdict)


def test_golden_corpus_flags_the_wrong_installment_equation(casebook_items,
                                                            casebook_paths):
    item = casebook_items["wp-offers"]
    verdict = verify_response(item, casebook_paths["wp-offers"]["chatgpt"])
    assert not verdict.calc_correct and not verdict.answer_correct
    false_eqs = [eq.text() for eq, v in verdict.per_equation if v.is_false]
    assert false_eqs == ["1350 + 6 * 350 = 3150"]


def test_golden_corpus_gpt4_wrong_only_on_wire(casebook_items, casebook_paths):
    verdict = verify_response(casebook_items["wp-wire"],
                              casebook_paths["wp-wire"]["gpt4"])
    assert not verdict.answer_correct
    assert verdict.extracted.value.fraction == 216


def test_indeterminate_equation_does_not_fail_calc(casebook_items,
                                                   casebook_paths):
    # the circle-area response computes with the symbol pi: indeterminate
    verdict = verify_response(casebook_items["wp-lid"],
                              casebook_paths["wp-lid"]["chatgpt"])
    assert verdict.calc_correct
    assert any(v.is_indeterminate for _, v in verdict.per_equation)
    assert not passes_filter(casebook_items["wp-lid"], verdict)  # wrong answer


def test_strict_mode_fails_indeterminate(casebook_items, casebook_paths):
    item = casebook_items["wp-lid"]
    verdict = verify_response(item, casebook_paths["wp-lid"]["chatgpt"])
    assert not passes_filter(item, verdict, FilterPolicy(strict_calc=True))


# ---------------------------------------------------------------- verdicts

def test_verdict_empty_path():
    item = make_item("10")
    verdict = verify_response(item, make_path("I cannot solve this."))
    assert not verdict.answer_correct
    assert verdict.calc_correct  # vacuously: nothing provably wrong
    assert "no answer extracted" in verdict.notes


def test_verdict_determinism(casebook_items, casebook_paths):
    item = casebook_items["wp-offers"]
    path = casebook_paths["wp-offers"]["gpt4"]
    assert verify_response(item, path) == verify_response(item, path)


def test_answers_equal_units():
    ten = normalize_answer("10")
    ten_dollar = normalize_answer("$10")
    ten_meter = normalize_answer("10米")
    ten_pct = normalize_answer("10%")
    assert answers_equal(ten, ten_dollar)       # only one side has a unit
    assert answers_equal(ten_dollar, ten_dollar)
    assert not answers_equal(ten_dollar, ten_meter)  # both carry, and differ
    assert answers_equal(ten, ten_pct)          # bare 10 vs 10%
    assert answers_equal(ten_pct, normalize_answer("0.1"))  # percent rescale


def test_multi_answer_item_filters_on_calc_only():
    item = make_item(["7", "11"])
    wrong_answer_good_calc = make_path("2 + 2 = 4. The answer is 5.")
    kept = filter_paths(item, [wrong_answer_good_calc])
    assert len(kept) == 1
    bad_calc = make_path("2 + 2 = 5. The answer is 7.")
    assert filter_paths(item, [bad_calc]) == []


def test_filter_keeps_answer_and_calc_for_single_gold():
    item = make_item("10")
    good = make_path("4 * 20 = 80. 80 - 70 = 10. The answer is 10.")
    right_answer_wrong_step = make_path("4 * 20 = 70. The answer is 10.")
    wrong_answer = make_path("The answer is 12.")
    kept = filter_paths(item, [good, right_answer_wrong_step, wrong_answer])
    assert [p.text for p, _ in kept] == [good.text]


def test_four_candidates_one_removed_for_wrong_calculation():
    # right final answer does not save a path with a broken equation
    item = make_item("10")
    paths = [
        make_path("4 * 20 = 80. 80 - 70 = 10. The answer is 10."),
        make_path("20 * 4 = 80 so 80 - 70 = 10. The answer is 10."),
        make_path("Clearly 4 * 20 = 90, and 90 - 80 = 10. The answer is 10."),
        make_path("It comes to 10. The answer is 10."),
    ]
    kept = filter_paths(item, paths)
    assert len(kept) == 3
    assert paths[2].text not in [p.text for p, _ in kept]


def test_filter_preserves_order_and_subsequence():
    item = make_item("4")
    paths = [make_path(f"2 + 2 = 4. The answer is {n}.") for n in (4, 5, 4)]
    kept = filter_paths(item, paths)
    assert [p.text for p, _ in kept] == [paths[0].text, paths[2].text]


# ------------------------------------------------------------------- dedup

def test_dedup_keep_all_is_identity():
    item = make_item("10")
    pairs = filter_paths(item, [make_path("The answer is 10."),
                                make_path("Obviously the answer is 10.")])
    assert dedup_paths(pairs, "keep-all") == pairs


def test_dedup_by_equation_list_commutes():
    item = make_item("10")
    a = make_path("she gave 4 * $20 = $80. then $80 - $70 = $10. The answer is 10.")
    b = make_path("he paid 20 * 4 = 80. change: 80 - 70 = 10. The answer is 10.")
    assert equation_list_key(a) == equation_list_key(b)
    pairs = filter_paths(item, [a, b])
    assert len(pairs) == 2
    deduped = dedup_paths(pairs, "by-equation-list")
    assert [p.text for p, _ in deduped] == [a.text]
    # idempotent
    assert dedup_paths(deduped, "by-equation-list") == deduped


def test_dedup_distinct_lists_unchanged():
    item = make_item("10")
    a = make_path("4 * 20 = 80, so the answer is 10.")
    b = make_path("100 - 90 = 10. The answer is 10.")
    pairs = filter_paths(item, [a, b])
    assert dedup_paths(pairs, "by-equation-list") == pairs


# --------------------------------------------------- randomized filter suite

WRONG_EQ = "3 + 4 = 8"
RIGHT_EQ = "3 + 4 = 7"
INDET_EQ = "6 / (3 - 3) = 2"


def synth_path(rng, gold="10"):
    pieces = []
    answer = gold if rng.random() < 0.5 else str(int(gold) + rng.randint(1, 9))
    if rng.random() < 0.5:
        pieces.append(RIGHT_EQ + ".")
    if rng.random() < 0.3:
        pieces.append(WRONG_EQ + ".")
    if rng.random() < 0.2:
        pieces.append(INDET_EQ + ".")
    pieces.append(f"The answer is {answer}.")
    return make_path(" ".join(pieces))


@pytest.mark.parametrize("strict", [False, True])
def test_filter_policy_randomized(strict):
    rng = random.Random(1234 + strict)
    policy = FilterPolicy(strict_calc=strict)
    for case in range(500):
        multi = rng.random() < 0.3
        item = make_item(["10", "20"] if multi else "10")
        paths = [synth_path(rng) for _ in range(rng.randint(0, 6))]
        kept = filter_paths(item, paths, policy)
        kept_texts = [p.text for p, _ in kept]
        # subsequence of input
        it = iter([p.text for p in paths])
        assert all(any(t == u for u in it) for t in kept_texts)
        # every retained path satisfies the policy; every removed one violates it
        for path in paths:
            verdict = verify_response(item, path)
            expected = passes_filter(item, verdict, policy)
            assert (path.text in kept_texts) == expected
