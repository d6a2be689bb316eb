import random
from fractions import Fraction

import pytest

from mathforge.evaluation import (
    ConfigError,
    DomainExhausted,
    EmptyInputError,
    EvalConfig,
    FewShot,
    GradedResult,
    NumberedTemplate,
    SlotSpec,
    aggregate_metrics,
    assemble_eval_prompt,
    check_report_identity,
    emit_report,
    grade_prediction,
    perturb_numbers,
    template_from_json,
    GREEDY,
    NUCLEUS,
)
from oracle import oracle_eval
from test_verify import make_item

THEA_TEMPLATE = NumberedTemplate(
    template_id="hat-change",
    question_template=("While on vacation in Bali, Thea bought a hat from a "
                       "craftsman worth ${p}. If she gave the craftsman four "
                       "${b} bills, how much change did she get?"),
    slots=(SlotSpec("b", "int", 5, 50), SlotSpec("p", "int", 10, 150)),
    formula="4*b - p",
)


# ------------------------------------------------------------------ config

def test_decoding_presets_match_reported_settings():
    assert GREEDY.name == "greedy"
    assert (NUCLEUS.top_p, NUCLEUS.temperature, NUCLEUS.repetition_penalty) \
        == (0.9, 0.7, 1.01)
    assert EvalConfig().max_tokens == 2048


def test_few_shot_requires_shots():
    with pytest.raises(ConfigError):
        EvalConfig(prompting="few-shot-cot", shots=())


def test_assemble_prompt_zero_shot():
    item = make_item("10")
    assert assemble_eval_prompt(item, EvalConfig()) == item.question
    wrapped = assemble_eval_prompt(item, EvalConfig(meta_prompt_id="vicuna/v1"))
    assert wrapped.startswith("A chat between a curious user")
    assert item.question in wrapped and wrapped.endswith("ASSISTANT:")


def test_assemble_prompt_few_shot_order():
    shots = tuple(FewShot(f"q{i}", f"r{i}", str(i)) for i in range(8))
    item = make_item("10")
    prompt = assemble_eval_prompt(item, EvalConfig(prompting="few-shot-cot",
                                                   shots=shots))
    positions = [prompt.index(f"Question: q{i}") for i in range(8)]
    assert positions == sorted(positions)
    assert prompt.index("Question: q7") < prompt.index(item.question)
    assert prompt.count("Question:") == 9


# ----------------------------------------------------------------- grading

def test_grade_prediction_correct_and_incorrect(casebook_items, casebook_paths):
    thea = casebook_items["wp-change"]
    graded = grade_prediction(thea, casebook_paths["wp-change"]["aligned-13b"].text)
    assert graded.correct
    wire = casebook_items["wp-wire"]
    graded = grade_prediction(wire, casebook_paths["wp-wire"]["gpt4"].text)
    assert not graded.correct
    assert graded.extracted.value.fraction == 216


def test_grade_empty_prediction():
    graded = grade_prediction(make_item("10"), "")
    assert not graded.correct and graded.note == "no answer extracted"


def test_grading_ignores_rationale_quality():
    item = make_item("10")
    sloppy = "2 + 2 = 5, whatever. The answer is 10."
    assert grade_prediction(item, sloppy).correct  # final answer only


# ------------------------------------------------------------- aggregation

def graded_batch(spec):
    """spec: list of (correct, facets) tuples."""
    return [GradedResult(item_id=f"i{n}", prediction="", extracted=None,
                         correct=ok, facets=facets)
            for n, (ok, facets) in enumerate(spec)]


def test_overall_accuracy_exact():
    graded = graded_batch([(True, {}), (True, {}), (True, {}), (False, {})])
    report = aggregate_metrics(graded)
    assert report.overall == Fraction(3, 4)
    with pytest.raises(EmptyInputError):
        aggregate_metrics([])


def test_facet_weighted_mean_identity():
    rng = random.Random(42)
    spec = []
    for _ in range(200):
        facets = {}
        if rng.random() < 0.8:
            facets["grade"] = rng.randint(1, 6)
        if rng.random() < 0.5:
            facets["digits"] = rng.randint(1, 4)
        spec.append((rng.random() < 0.6, facets))
    graded = graded_batch(spec)
    report = aggregate_metrics(graded)
    check_report_identity(report, graded)
    # items missing a facet are excluded from that table only
    n_with_grade = sum(1 for _, f in spec if "grade" in f)
    assert sum(r.n for r in report.facet_tables["grade"]) == n_with_grade


def test_distractor_series_shape():
    rng = random.Random(7)
    spec = [(rng.random() < 0.5, {"distractor_count": d})
            for d in range(6) for _ in range(60)]
    report = aggregate_metrics(graded_batch(spec))
    rows = report.facet_tables["distractor_count"]
    assert [r.value for r in rows] == [0, 1, 2, 3, 4, 5]
    assert all(r.n == 60 for r in rows)
    series = next(s for s in report.series if s.x_label == "distractor_count")
    assert [x for x, _ in series.points] == [0, 1, 2, 3, 4, 5]


# ------------------------------------------------------------ perturbation

def test_identity_draw_reproduces_original(casebook_items):
    values = {"b": Fraction(20), "p": Fraction(70)}
    item = THEA_TEMPLATE.instantiate(values, "hat-change/identity")
    assert item.question == casebook_items["wp-change"].question
    assert item.gold_answers[0].value.fraction == 10


def test_fresh_draw_recomputes_gold():
    values = {"b": Fraction(30), "p": Fraction(95)}
    item = THEA_TEMPLATE.instantiate(values, "x")
    assert item.gold_answers[0].value.fraction == 25  # 4*30 - 95


def test_perturb_deterministic_and_checksum_stable():
    a = perturb_numbers(THEA_TEMPLATE, seed=11, count=5)
    b = perturb_numbers(THEA_TEMPLATE, seed=11, count=5)
    assert [(i.question, i.gold_answers[0].value.text()) for i in a] \
        == [(i.question, i.gold_answers[0].value.text()) for i in b]
    c = perturb_numbers(THEA_TEMPLATE, seed=12, count=5)
    assert [i.question for i in a] != [i.question for i in c]
    parts = THEA_TEMPLATE.literal_parts()
    for item in a + c:
        rest = item.question
        for part in parts:
            assert part in rest
            rest = rest.split(part, 1)[1] if part else rest


def test_perturb_golds_verify_against_independent_oracle():
    # cross-check gold = 4*b - p with the tuple-tree oracle
    for item in perturb_numbers(THEA_TEMPLATE, seed=3, count=20):
        import re
        p = Fraction(re.search(r"worth \$(\d+)", item.question).group(1))
        b = Fraction(re.search(r"four \$(\d+) bills", item.question).group(1))
        tree = ("bin", "-",
                ("bin", "*", ("num", Fraction(4), "4"), ("num", b, str(b))),
                ("num", p, str(p)))
        assert item.gold_answers[0].value.fraction == oracle_eval(tree)


def test_perturb_respects_answer_constraints():
    cramped = NumberedTemplate(
        template_id="t", question_template="a is {a}, b is {b}?",
        slots=(SlotSpec("a", "int", 1, 3), SlotSpec("b", "int", 1, 3)),
        formula="a - b", answer_positive=True)
    for item in perturb_numbers(cramped, seed=1, count=30):
        assert item.gold_answers[0].value.fraction > 0
    impossible = NumberedTemplate(
        template_id="t2", question_template="a is {a}?",
        slots=(SlotSpec("a", "int", 1, 3),), formula="a - 10",
        answer_positive=True)
    with pytest.raises(DomainExhausted):
        perturb_numbers(impossible, seed=1, count=1)


def test_template_slot_placeholder_mismatch():
    with pytest.raises(ConfigError):
        NumberedTemplate(template_id="bad", question_template="only {a}",
                         slots=(SlotSpec("a"), SlotSpec("b")), formula="a+b")


def test_template_from_json_decimal_slots():
    template = template_from_json({
        "template_id": "area",
        "question_template": "一个圆的半径是{r}米，面积是多少平方米？(取3.14)",
        "slots": [{"name": "r", "kind": "decimal", "low": 0.1, "high": 0.9,
                   "scale": 1}],
        "formula": "3.14 * r^2",
        "language": "zh",
    })
    items = perturb_numbers(template, seed=5, count=4)
    for item in items:
        assert "米" in item.question
        assert item.gold_answers[0].value.fraction > 0


# ---------------------------------------------------------------- emission

def full_report():
    rng = random.Random(0)
    spec = [(rng.random() < 0.7, {"grade": g}) for g in range(1, 7)
            for _ in range(10)]
    return aggregate_metrics(graded_batch(spec), fingerprint="abc123"), \
        graded_batch(spec)


def test_emit_json_is_canonical_and_stable():
    report, _ = full_report()
    once = emit_report(report, "json")["report.json"]
    twice = emit_report(report, "json")["report.json"]
    assert once == twice
    import json
    doc = json.loads(once)
    assert doc["config_fingerprint"] == "abc123"
    assert doc["overall"]["n"] == 60
    assert isinstance(doc["overall"]["pass@1"], float)


def test_emit_csv_rows():
    report, _ = full_report()
    text = emit_report(report, "csv")["report.csv"].decode()
    lines = text.strip().splitlines()
    assert lines[0] == "facet,value,n,accuracy"
    assert lines[1].startswith("overall,,60,")
    grade_rows = [l for l in lines if l.startswith("grade,")]
    assert [int(l.split(",")[1]) for l in grade_rows] == [1, 2, 3, 4, 5, 6]


def test_emit_csv_without_facets_has_only_overall():
    graded = graded_batch([(True, {}), (False, {})])
    report = aggregate_metrics(graded)
    text = emit_report(report, "csv")["report.csv"].decode()
    assert text.strip().splitlines() == ["facet,value,n,accuracy",
                                         "overall,,2,0.5000"]


def test_emit_plot_data_one_file_per_facet():
    report, _ = full_report()
    files = emit_report(report, "plot-data")
    assert set(files) == {"grade.dat"}
    body = files["grade.dat"].decode().splitlines()
    assert body[0].startswith("#")
    assert len(body) == 7
    assert all("\t" in line for line in body[1:])
