"""JSON codecs for the artifacts that flow between pipeline stages.

Every stage reads and writes JSONL with these record shapes; a malformed
record raises SchemaError so the pipeline can fail fast with a line number.
"""

from __future__ import annotations

from typing import Any, Optional

from .expr import NumericValue
from .extract import (
    AnswerValue,
    ExtractionPatterns,
    DEFAULT_PATTERNS,
    NormalizationError,
    normalize_answer,
)
from .verify import GenMeta, ItemMeta, MathItem, ReasoningPath, Verdict


class SchemaError(ValueError):
    pass


def _require(record: dict, key: str, kind=None):
    if key not in record:
        raise SchemaError(f"missing field {key!r}")
    value = record[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


def answer_from_json(obj: Any) -> AnswerValue:
    """{"value": 10, "unit": "%"} or a bare number/string."""
    if isinstance(obj, dict):
        raw_value = _require(obj, "value")
        unit = obj.get("unit")
    else:
        raw_value, unit = obj, None
    text = raw_value if isinstance(raw_value, str) else repr(raw_value)
    try:
        answer = normalize_answer(text)
    except NormalizationError:
        return AnswerValue(NumericValue.non_numeric(text.strip()), unit, text)
    if unit is not None:
        return AnswerValue(answer.value, unit, text)
    return AnswerValue(answer.value, answer.unit, text)


def answer_to_json(answer: Optional[AnswerValue]) -> Optional[dict]:
    if answer is None:
        return None
    out: dict[str, Any] = {"value": answer.value.text()}
    if answer.unit:
        out["unit"] = answer.unit
    return out


def item_from_json(record: dict) -> MathItem:
    golds = _require(record, "gold_answers", list)
    if not golds:
        raise SchemaError("gold_answers must be non-empty")
    meta_in = record.get("meta") or {}
    if not isinstance(meta_in, dict):
        raise SchemaError("meta must be an object")
    meta = ItemMeta(
        grade=meta_in.get("grade"),
        reasoning_steps=meta_in.get("reasoning_steps"),
        digits=meta_in.get("digits"),
        distractor_count=meta_in.get("distractor_count"),
    )
    return MathItem(
        id=str(_require(record, "id")),
        question=_require(record, "question", str),
        gold_answers=tuple(answer_from_json(g) for g in golds),
        language=record.get("language", "en"),
        meta=meta,
        template=record.get("template"),
    )


def item_to_json(item: MathItem) -> dict:
    out: dict[str, Any] = {
        "id": item.id,
        "question": item.question,
        "gold_answers": [answer_to_json(g) for g in item.gold_answers],
        "language": item.language,
        "meta": item.meta.as_dict(),
    }
    if item.template:
        out["template"] = item.template
    return out


def gen_from_json(obj: dict) -> GenMeta:
    if not isinstance(obj, dict):
        raise SchemaError("gen must be an object")
    return GenMeta(
        model_id=obj.get("model_id", "unknown"),
        strategy=obj.get("strategy", "zero-shot"),
        temperature=float(obj.get("temperature", 0.0)),
        prompt_id=obj.get("prompt_id", ""),
    )


def gen_to_json(gen: GenMeta) -> dict:
    return {"model_id": gen.model_id, "strategy": gen.strategy,
            "temperature": gen.temperature, "prompt_id": gen.prompt_id}


def path_from_json(record: dict,
                   patterns: ExtractionPatterns = DEFAULT_PATTERNS
                   ) -> tuple[str, ReasoningPath]:
    """Returns (item_id, path); equations/answer are re-extracted from text
    so the path invariant holds no matter who produced the file."""
    item_id = str(_require(record, "item_id"))
    text = _require(record, "text", str)
    gen = gen_from_json(record.get("gen") or {})
    return item_id, ReasoningPath.from_text(text, gen, patterns, path_id=item_id)


def path_to_json(item_id: str, path: ReasoningPath) -> dict:
    return {"item_id": item_id, "text": path.text, "gen": gen_to_json(path.gen)}


def verdict_to_json(verdict: Verdict) -> dict:
    return {
        "answer_correct": verdict.answer_correct,
        "calc_correct": verdict.calc_correct,
        "extracted": answer_to_json(verdict.extracted),
        "equations": [
            {"text": eq.text(), "verdict": str(v), "span": list(eq.span)}
            for eq, v in verdict.per_equation
        ],
        "notes": list(verdict.notes),
    }


def prediction_from_json(record: dict) -> tuple[str, str]:
    return (str(_require(record, "item_id")),
            _require(record, "prediction", str))
