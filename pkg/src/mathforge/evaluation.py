"""Grade predictions, break accuracy down by complexity facets, and emit
machine-readable reports.

Grading is final-answer-only: a prediction is correct when its extracted
answer matches a gold answer under the tolerance policy, no matter what the
reasoning looked like. All aggregation happens in exact rationals so the
per-facet weighted means reconcile with the overall accuracy identically,
not approximately.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .expr import (
    ExpressionAst,
    TolerancePolicy,
    DEFAULT_TOLERANCE,
    eval_expression,
    parse_formula,
)
from .extract import AnswerValue, ExtractionPatterns, DEFAULT_PATTERNS, extract_final_answer
from .verify import ItemMeta, MathItem, answers_equal
from .augment import META_PROMPTS

FACETS = ("grade", "reasoning_steps", "digits", "distractor_count")


class ConfigError(ValueError):
    pass


class DomainExhausted(RuntimeError):
    pass


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class Decoding:
    name: str                     # greedy | nucleus
    top_p: Optional[float] = None
    temperature: Optional[float] = None
    repetition_penalty: Optional[float] = None


GREEDY = Decoding("greedy")
# nucleus settings used for sampled single responses
NUCLEUS = Decoding("nucleus", top_p=0.9, temperature=0.7,
                   repetition_penalty=1.01)


@dataclass(frozen=True)
class FewShot:
    question: str
    rationale: str
    answer: str


@dataclass(frozen=True)
class EvalConfig:
    decoding: Decoding = GREEDY
    max_tokens: int = 2048
    prompting: str = "zero-shot"          # zero-shot | few-shot-cot
    shots: tuple[FewShot, ...] = ()
    meta_prompt_id: Optional[str] = None  # wrap the question for chat models
    patterns: ExtractionPatterns = DEFAULT_PATTERNS
    tol: TolerancePolicy = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.decoding.name not in ("greedy", "nucleus"):
            raise ConfigError(f"unknown decoding {self.decoding.name!r}")
        if self.prompting not in ("zero-shot", "few-shot-cot"):
            raise ConfigError(f"unknown prompting {self.prompting!r}")
        if self.prompting == "few-shot-cot" and not self.shots:
            raise ConfigError("few-shot-cot requires at least one shot")

    def fingerprint(self) -> str:
        doc = {
            "decoding": self.decoding.__dict__,
            "max_tokens": self.max_tokens,
            "prompting": self.prompting,
            "shots": [s.__dict__ for s in self.shots],
            "meta_prompt_id": self.meta_prompt_id,
            "tol": self.tol.__dict__,
            "patterns": [p.pattern.pattern for p in self.patterns.answer_patterns],
        }
        blob = json.dumps(doc, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def assemble_eval_prompt(item: MathItem, config: EvalConfig) -> str:
    """Zero-shot: the question (meta-prompt wrapped for chat models).
    Few-shot: Q/rationale/answer blocks in order, then the question."""
    if config.prompting == "zero-shot":
        body = item.question
    else:
        blocks = [f"Question: {s.question}\n{s.rationale}\nThe answer is {s.answer}."
                  for s in config.shots]
        blocks.append(f"Question: {item.question}")
        body = "\n\n".join(blocks)
    if config.meta_prompt_id:
        template = META_PROMPTS[config.meta_prompt_id]
        head = template.split("{instruction}")[0]
        return f"{head}{body}. ASSISTANT:"
    return body


@dataclass(frozen=True)
class GradedResult:
    item_id: str
    prediction: str
    extracted: Optional[AnswerValue]
    correct: bool
    facets: dict
    note: str = ""


def grade_prediction(item: MathItem, prediction_text: str,
                     config: EvalConfig = EvalConfig()) -> GradedResult:
    extracted = extract_final_answer(prediction_text, config.patterns)
    note = ""
    if extracted is None:
        correct = False
        note = "no answer extracted"
    else:
        correct = any(answers_equal(gold, extracted, config.tol)
                      for gold in item.gold_answers)
    return GradedResult(item_id=item.id, prediction=prediction_text,
                        extracted=extracted, correct=correct,
                        facets=item.meta.as_dict(), note=note)


# --------------------------------------------------------------------------
# aggregation

@dataclass(frozen=True)
class FacetRow:
    value: int
    n: int
    accuracy: Fraction


@dataclass(frozen=True)
class Series:
    x_label: str
    y_label: str
    points: tuple[tuple[int, Fraction], ...]


@dataclass(frozen=True)
class Report:
    total: int
    correct: int
    overall: Fraction
    facet_tables: dict[str, tuple[FacetRow, ...]]
    series: tuple[Series, ...]
    fingerprint: str = ""


def aggregate_metrics(graded: list[GradedResult],
                      facets: tuple[str, ...] = FACETS,
                      fingerprint: str = "") -> Report:
    """Exact pass@1 plus one accuracy table per facet (ascending values;
    items missing a facet are left out of that table only)."""
    if not graded:
        raise EmptyInputError("nothing graded")
    total = len(graded)
    correct = sum(1 for g in graded if g.correct)
    tables: dict[str, tuple[FacetRow, ...]] = {}
    series = []
    for facet in facets:
        buckets: dict[int, list[GradedResult]] = {}
        for g in graded:
            value = g.facets.get(facet)
            if value is None:
                continue
            buckets.setdefault(int(value), []).append(g)
        if not buckets:
            continue
        rows = []
        for value in sorted(buckets):
            group = buckets[value]
            hits = sum(1 for g in group if g.correct)
            rows.append(FacetRow(value, len(group),
                                 Fraction(hits, len(group))))
        tables[facet] = tuple(rows)
        series.append(Series(x_label=facet, y_label="accuracy",
                             points=tuple((r.value, r.accuracy) for r in rows)))
    return Report(total=total, correct=correct,
                  overall=Fraction(correct, total),
                  facet_tables=tables, series=tuple(series),
                  fingerprint=fingerprint)


def check_report_identity(report: Report, graded: list[GradedResult]) -> None:
    """Each facet table's weighted mean must equal the overall accuracy of
    the items carrying that facet — exactly, in rational arithmetic."""
    for facet, rows in report.facet_tables.items():
        weighted = sum((row.accuracy * row.n for row in rows), Fraction(0))
        n = sum(row.n for row in rows)
        carrying = [g for g in graded if g.facets.get(facet) is not None]
        hits = sum(1 for g in carrying if g.correct)
        assert n == len(carrying)
        assert weighted / n == Fraction(hits, len(carrying))


# --------------------------------------------------------------------------
# number-perturbation robustness sets

@dataclass(frozen=True)
class SlotSpec:
    name: str
    kind: str = "int"          # int | decimal
    low: float = 1
    high: float = 100
    scale: int = 1             # decimal places for kind=decimal


@dataclass(frozen=True)
class NumberedTemplate:
    """A question with numeric slots and a formula that computes the gold
    answer from the slot values, so perturbed items stay provably correct."""

    template_id: str
    question_template: str
    slots: tuple[SlotSpec, ...]
    formula: str
    answer_positive: bool = True
    answer_integer: bool = False
    language: str = "en"
    meta: ItemMeta = field(default_factory=ItemMeta)

    def __post_init__(self):
        names = {s.name for s in self.slots}
        placeholders = set(re.findall(r"\{(\w+)\}", self.question_template))
        if names != placeholders:
            raise ConfigError(
                f"template {self.template_id}: slots {sorted(names)} do not "
                f"match placeholders {sorted(placeholders)}")
        self.formula_ast  # validate eagerly

    @property
    def formula_ast(self) -> ExpressionAst:
        return parse_formula(self.formula)

    def non_slot_checksum(self) -> str:
        parts = re.split(r"\{\w+\}", self.question_template)
        blob = "\x00".join(parts).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def literal_parts(self) -> list[str]:
        return re.split(r"\{\w+\}", self.question_template)

    def render_value(self, slot: SlotSpec, value: Fraction) -> str:
        if slot.kind == "int":
            return str(int(value))
        digits = value.numerator * 10 ** slot.scale // value.denominator
        text = str(abs(digits)).rjust(slot.scale + 1, "0")
        sign = "-" if digits < 0 else ""
        return f"{sign}{text[:-slot.scale]}.{text[-slot.scale:]}"

    def draw(self, rng: random.Random) -> dict[str, Fraction]:
        values = {}
        for slot in self.slots:
            if slot.kind == "int":
                values[slot.name] = Fraction(rng.randint(int(slot.low),
                                                         int(slot.high)))
            elif slot.kind == "decimal":
                unit = 10 ** slot.scale
                raw = rng.randint(round(slot.low * unit), round(slot.high * unit))
                values[slot.name] = Fraction(raw, unit)
            else:
                raise ConfigError(f"unknown slot kind {slot.kind!r}")
        return values

    def instantiate(self, values: dict[str, Fraction],
                    item_id: str) -> MathItem:
        rendered = {s.name: self.render_value(s, values[s.name])
                    for s in self.slots}
        question = self.question_template.format(**rendered)
        gold = eval_expression(self.formula_ast, bindings=values)
        answer = AnswerValue(value=gold, raw=gold.text())
        return MathItem(id=item_id, question=question,
                        gold_answers=(answer,), language=self.language,
                        meta=self.meta, template=self.template_id)

    def gold_ok(self, gold: Fraction) -> bool:
        if self.answer_positive and gold <= 0:
            return False
        if self.answer_integer and gold.denominator != 1:
            return False
        return True


def perturb_numbers(template: NumberedTemplate, seed: int,
                    count: int, max_rejects: int = 1000) -> list[MathItem]:
    """Fresh in-domain slot values with recomputed golds; the non-slot text
    is preserved byte-for-byte. Deterministic for a fixed seed."""
    rng = random.Random(seed)
    items = []
    for index in range(count):
        for attempt in range(max_rejects):
            values = template.draw(rng)
            gold = eval_expression(template.formula_ast, bindings=values)
            if template.gold_ok(gold.fraction):
                items.append(template.instantiate(
                    values, f"{template.template_id}/{index}"))
                break
        else:
            raise DomainExhausted(
                f"template {template.template_id}: no admissible draw in "
                f"{max_rejects} tries")
    return items


def template_from_json(record: dict) -> NumberedTemplate:
    meta = record.get("meta") or {}
    return NumberedTemplate(
        template_id=str(record["template_id"]),
        question_template=record["question_template"],
        slots=tuple(SlotSpec(name=s["name"], kind=s.get("kind", "int"),
                             low=s.get("low", 1), high=s.get("high", 100),
                             scale=int(s.get("scale", 1)))
                    for s in record["slots"]),
        formula=record["formula"],
        answer_positive=bool(record.get("answer_positive", True)),
        answer_integer=bool(record.get("answer_integer", False)),
        language=record.get("language", "en"),
        meta=ItemMeta(**{k: meta[k] for k in
                         ("grade", "reasoning_steps", "digits",
                          "distractor_count") if k in meta}),
    )


# --------------------------------------------------------------------------
# report emission

def _canonical_json(value, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        inner = ",\n".join(
            f'{pad}  {json.dumps(str(k), ensure_ascii=False)}: '
            f'{_canonical_json(value[k], indent + 1)}'
            for k in sorted(value, key=str))
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        inner = ",\n".join(f"{pad}  {_canonical_json(v, indent + 1)}"
                           for v in value)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(value, Fraction):
        return f"{float(value):.4f}"
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, bool):
        return "true" if value else "false"
    return json.dumps(value, ensure_ascii=False)


def emit_report(report: Report, fmt: str) -> dict[str, bytes]:
    """Render report files as name -> bytes; byte-stable for a given report.

    json: canonical single file; csv: facet,value,n,accuracy rows;
    plot-data: one x/y series file per facet."""
    if fmt == "json":
        doc = {
            "overall": {"pass@1": report.overall, "n": report.total,
                        "correct": report.correct},
            "facets": {
                facet: [{"value": r.value, "n": r.n, "accuracy": r.accuracy}
                        for r in rows]
                for facet, rows in report.facet_tables.items()
            },
            "config_fingerprint": report.fingerprint,
        }
        return {"report.json": (_canonical_json(doc) + "\n").encode("utf-8")}
    if fmt == "csv":
        lines = ["facet,value,n,accuracy"]
        lines.append(f"overall,,{report.total},{float(report.overall):.4f}")
        for facet in sorted(report.facet_tables):
            for row in report.facet_tables[facet]:
                lines.append(f"{facet},{row.value},{row.n},"
                             f"{float(row.accuracy):.4f}")
        return {"report.csv": ("\n".join(lines) + "\n").encode("utf-8")}
    if fmt == "plot-data":
        files = {}
        for series in report.series:
            lines = [f"# x={series.x_label} y={series.y_label}"]
            for x, y in series.points:
                lines.append(f"{x}\t{float(y):.4f}")
            files[f"{series.x_label}.dat"] = ("\n".join(lines) + "\n").encode("utf-8")
        return files
    raise ValueError(f"unknown report format {fmt!r}")


def write_report(report: Report, fmt: str, out_dir) -> list[str]:
    import os
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, blob in sorted(emit_report(report, fmt).items()):
        path = out / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, path)
        written.append(str(path))
    return written
