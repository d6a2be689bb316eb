"""Per-response verdicts and the quality filter over (question, path, gold).

A response passes for a single-gold question when its final answer matches
and every extracted equation evaluates true; questions with several accepted
answers are filtered on calculation correctness only. Indeterminate
equations (evaluation errors) never fail a path unless strict mode is on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .expr import (
    Equation,
    EquationVerdict,
    NumericValue,
    TolerancePolicy,
    DEFAULT_TOLERANCE,
    check_equation,
    numeric_equal,
)
from .extract import (
    AnswerValue,
    ExtractionPatterns,
    DEFAULT_PATTERNS,
    extract_equations,
    extract_final_answer,
    normalize_unit,
)


@dataclass(frozen=True)
class ItemMeta:
    grade: Optional[int] = None
    reasoning_steps: Optional[int] = None
    digits: Optional[int] = None
    distractor_count: Optional[int] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class MathItem:
    id: str
    question: str
    gold_answers: tuple[AnswerValue, ...]
    language: str = "en"
    meta: ItemMeta = field(default_factory=ItemMeta)
    template: Optional[str] = None

    def __post_init__(self):
        if not self.gold_answers:
            raise ValueError(f"item {self.id}: gold_answers must be non-empty")

    @property
    def multi_answer(self) -> bool:
        return len(self.gold_answers) > 1


@dataclass(frozen=True)
class GenMeta:
    model_id: str = "unknown"
    strategy: str = "zero-shot"
    temperature: float = 0.0
    prompt_id: str = ""


@dataclass(frozen=True)
class ReasoningPath:
    text: str
    equations: tuple[Equation, ...] = ()
    final_answer: Optional[AnswerValue] = None
    gen: GenMeta = field(default_factory=GenMeta)

    @staticmethod
    def from_text(text: str, gen: GenMeta = GenMeta(),
                  patterns: ExtractionPatterns = DEFAULT_PATTERNS,
                  path_id: Optional[str] = None) -> "ReasoningPath":
        equations = tuple(replace(eq, origin=(path_id, eq.origin[1]))
                          for eq in extract_equations(text, patterns))
        return ReasoningPath(text=text, equations=equations,
                             final_answer=extract_final_answer(text, patterns),
                             gen=gen)


@dataclass(frozen=True)
class Verdict:
    answer_correct: bool
    calc_correct: bool
    per_equation: tuple[tuple[Equation, EquationVerdict], ...] = ()
    extracted: Optional[AnswerValue] = None
    notes: tuple[str, ...] = ()


def answers_equal(gold: AnswerValue, got: AnswerValue,
                  tol: TolerancePolicy = DEFAULT_TOLERANCE) -> bool:
    """Value comparison with unit awareness.

    Units only discriminate when both sides carry one. A bare percent on one
    side also matches its /100 rescaling ('50%' equals 0.5 and 50).
    """
    gold_unit = normalize_unit(gold.unit)
    got_unit = normalize_unit(got.unit)
    if gold_unit and got_unit and gold_unit != got_unit:
        return False
    if numeric_equal(gold.value, got.value, tol):
        return True
    for pct_unit, pct, other in ((gold_unit, gold, got), (got_unit, got, gold)):
        if pct_unit == "%" and pct.value.is_numeric and other.value.is_numeric:
            rescaled = NumericValue.rational(pct.value.fraction / 100)
            if numeric_equal(rescaled, other.value, tol):
                return True
    return False


def verify_response(item: MathItem, path: ReasoningPath,
                    tol: TolerancePolicy = DEFAULT_TOLERANCE) -> Verdict:
    """Check the final answer against the gold set and every equation."""
    per_equation = tuple((eq, check_equation(eq, tol)) for eq in path.equations)
    calc_correct = all(not v.is_false for _, v in per_equation)
    notes = []
    indeterminate = sum(1 for _, v in per_equation if v.is_indeterminate)
    if indeterminate:
        notes.append(f"{indeterminate} indeterminate equation(s)")
    extracted = path.final_answer
    if extracted is None:
        answer_correct = False
        notes.append("no answer extracted")
    else:
        answer_correct = any(answers_equal(gold, extracted, tol)
                             for gold in item.gold_answers)
    return Verdict(answer_correct=answer_correct, calc_correct=calc_correct,
                   per_equation=per_equation, extracted=extracted,
                   notes=tuple(notes))


@dataclass(frozen=True)
class FilterPolicy:
    strict_calc: bool = False  # indeterminate equations fail the path too


def passes_filter(item: MathItem, verdict: Verdict,
                  policy: FilterPolicy = FilterPolicy()) -> bool:
    calc_ok = verdict.calc_correct
    if policy.strict_calc:
        calc_ok = calc_ok and all(not v.is_indeterminate
                                  for _, v in verdict.per_equation)
    if item.multi_answer:
        return calc_ok
    return calc_ok and verdict.answer_correct


def filter_paths(item: MathItem, paths: list[ReasoningPath],
                 policy: FilterPolicy = FilterPolicy(),
                 tol: TolerancePolicy = DEFAULT_TOLERANCE
                 ) -> list[tuple[ReasoningPath, Verdict]]:
    """Keep verified paths, preserving input order."""
    kept = []
    for path in paths:
        verdict = verify_response(item, path, tol)
        if passes_filter(item, verdict, policy):
            kept.append((path, verdict))
    return kept


def equation_list_key(path: ReasoningPath) -> tuple[str, ...]:
    """Dedup key: the sorted canonical print of the equation list, so
    commutative rewrites ('4*20' vs '20*4') collapse together."""
    return tuple(sorted(eq.canonical() for eq in path.equations))


def dedup_paths(paths: list[tuple[ReasoningPath, Verdict]],
                mode: str = "keep-all") -> list[tuple[ReasoningPath, Verdict]]:
    """keep-all retains every verified path (diverse contexts matter);
    by-equation-list keeps the first path per normalized equation list."""
    if mode == "keep-all":
        return list(paths)
    if mode != "by-equation-list":
        raise ValueError(f"unknown dedup mode {mode!r}")
    seen = set()
    kept = []
    for path, verdict in paths:
        key = equation_list_key(path)
        if key in seen:
            continue
        seen.add(key)
        kept.append((path, verdict))
    return kept
