"""Find complete equations and the final answer in chain-of-thought text.

Equation candidates are discovered around '=' signs (and calculator
annotations like ``<<20*4=80>>``). Around each '=' we take the widest token
window on either side that still parses as a pure arithmetic expression:
unit words and descriptive noise are dropped, while algebra variables poison
the whole sentence, because an equation in unknowns is not checkable
arithmetic. A window that begins or ends at a dangling operator is a
fragment of something bigger and is skipped, which is exactly what makes
``+ 4 = 7`` incomplete.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from typing import Optional

from .expr import (
    Equation,
    NumericValue,
    ParseError,
    Token,
    normalize_chars,
    parse_tokens,
    tokenize,
)

log = logging.getLogger(__name__)


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class AnswerValue:
    """A final answer: exact value, optional unit, and the matched text."""

    value: NumericValue
    unit: Optional[str] = None
    raw: str = ""


_CUR = r"[$¥€£]"
_NUMERAL = r"(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?"
_ANS_CORE = rf"[-−]?\s*{_CUR}?\s*{_NUMERAL}(?:\s*/\s*{_NUMERAL})?%?"
_ZH_UNIT = r"(?P<unit>[\u4e00-\u9fff]{0,6})"


@dataclass(frozen=True)
class AnswerPattern:
    lang: str       # en | zh | any
    name: str
    pattern: re.Pattern
    priority: int


def _ap(lang: str, name: str, pattern: str, priority: int,
        flags: int = 0) -> AnswerPattern:
    return AnswerPattern(lang, name, re.compile(pattern, flags), priority)


CALC_ANNOTATION = re.compile(r"<<([^<>\n]*)>>")


def default_answer_patterns() -> tuple[AnswerPattern, ...]:
    return (
        _ap("any", "boxed", r"\\boxed\{\s*(?P<ans>[^{}]+?)\s*\}", 1),
        _ap("en", "hash-marker", r"####\s*(?P<ans>[^\n]+)", 2),
        _ap("en", "the-answer-is",
            rf"[Tt]he\s+(?:final\s+)?answer\s+is\s*[:：]?\s*(?P<ans>{_ANS_CORE})", 3),
        _ap("en", "answer-colon", rf"\b[Aa]nswer\s*[:：]\s*(?P<ans>{_ANS_CORE})", 4),
        _ap("zh", "zh-answer-marker",
            rf"答案(?:是|为)\s*[:：]?\s*(?P<ans>{_ANS_CORE})\s*{_ZH_UNIT}", 5),
        _ap("zh", "zh-conclusion",
            rf"(?:所以|因此)[^。\n]*?(?:是|为)[^。\n]*?(?P<ans>{_ANS_CORE})"
            rf"\s*{_ZH_UNIT}\s*[。．.!！]?\s*$", 6, re.MULTILINE),
        _ap("any", "last-number", rf"(?P<ans>{_ANS_CORE})\s*{_ZH_UNIT}", 7),
    )


@dataclass(frozen=True)
class ExtractionPatterns:
    answer_patterns: tuple[AnswerPattern, ...]
    equation_marker: re.Pattern = CALC_ANNOTATION
    split_chains: bool = True

    def __post_init__(self):
        if not self.answer_patterns:
            raise ValueError("answer pattern list must not be empty")
        ordered = tuple(sorted(self.answer_patterns, key=lambda p: p.priority))
        object.__setattr__(self, "answer_patterns", ordered)
        for pat in ordered:
            if "ans" not in pat.pattern.groupindex:
                raise ValueError(f"pattern {pat.name!r} lacks an (?P<ans>...) group")


DEFAULT_PATTERNS = ExtractionPatterns(default_answer_patterns())


def patterns_from_config(entries: list[dict]) -> ExtractionPatterns:
    """Build patterns from config entries {lang, kind, pattern, priority}."""
    answers = []
    marker = CALC_ANNOTATION
    for entry in entries:
        kind = entry.get("kind", "answer")
        if kind == "answer":
            answers.append(_ap(entry.get("lang", "any"),
                               entry.get("name", f"p{entry['priority']}"),
                               entry["pattern"], int(entry["priority"]),
                               re.MULTILINE if entry.get("multiline") else 0))
        elif kind == "equation-marker":
            marker = re.compile(entry["pattern"])
        else:
            raise ValueError(f"unknown pattern kind {kind!r}")
    return ExtractionPatterns(tuple(answers), marker)


# --------------------------------------------------------------------------
# answers

_UNIT_SUFFIX = re.compile(r"[\u4e00-\u9fff]+$")
_WORD_SUFFIX = re.compile(r"\s+([A-Za-z]+)\.?$")
_EDGE_PUNCT = "\u3002\uff0c\uff1b\uff1a\uff01\uff1f.,;:!?、'\"“”‘’()（）"


def normalize_answer(raw: str) -> AnswerValue:
    """Parse an answer string into value + unit.

    Currency and thousands separators are stripped, a trailing unit token is
    separated, and a percent sign is kept as the unit '%' (50% stays 50).
    Raises NormalizationError when no numeral is present.
    """
    if not raw or not raw.strip():
        raise NormalizationError("empty answer text")
    s = normalize_chars(raw).strip().strip(_EDGE_PUNCT + " ")
    unit = None
    if s and s[0] in "$¥€£":
        unit = s[0]
        s = s[1:].strip()
    if s.endswith("%"):
        unit = unit or "%"
        s = s[:-1].strip()
    m = _UNIT_SUFFIX.search(s)
    if m:
        unit = unit or m.group(0)
        s = s[:m.start()].strip()
    m = _WORD_SUFFIX.search(s)
    if m and any(c.isdigit() for c in s[:m.start()]):
        unit = unit or m.group(1)
        s = s[:m.start()].strip()
    s = s.replace(" ", "")
    try:
        value = NumericValue.from_literal(s)
    except (ValueError, ZeroDivisionError) as err:
        raise NormalizationError(f"no numeral in {raw!r}") from err
    return AnswerValue(value=value, unit=unit, raw=raw)


def normalize_unit(unit: Optional[str]) -> Optional[str]:
    if unit is None:
        return None
    u = normalize_chars(unit).strip()
    return u.lower() if u else None


def extract_final_answer(text: str,
                         patterns: ExtractionPatterns = DEFAULT_PATTERNS
                         ) -> Optional[AnswerValue]:
    """Scan answer markers by priority; within a tier the last match wins."""
    folded = normalize_chars(text)
    for pat in patterns.answer_patterns:
        matches = list(pat.pattern.finditer(folded))
        if not matches:
            continue
        m = matches[-1]
        core = m.group("ans")
        raw = text[m.start("ans"):m.end("ans")]
        try:
            answer = normalize_answer(core)
        except NormalizationError:
            token = core.strip().strip(_EDGE_PUNCT + " ")
            if not token:
                continue
            return AnswerValue(NumericValue.non_numeric(token), None, raw)
        unit = answer.unit
        if unit is None and "unit" in pat.pattern.groupindex:
            unit = m.group("unit") or None
        return AnswerValue(answer.value, normalize_unit(unit), raw)
    return None


# --------------------------------------------------------------------------
# equations

_SENTENCE_ENDERS = set("\n。．!?;")


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for i, ch in enumerate(text):
        if ch in _SENTENCE_ENDERS or (
                ch == "." and not (i > 0 and text[i - 1].isdigit()
                                   and i + 1 < len(text) and text[i + 1].isdigit())):
            if i > start:
                spans.append((start, i))
            start = i + 1
    if len(text) > start:
        spans.append((start, len(text)))
    return spans


def _drop_noise(window: list[Token]) -> list[Token]:
    toks = list(window)
    changed = True
    while changed:
        changed = False
        for i, tok in enumerate(toks):
            if tok.kind != "LPAREN":
                continue
            j = i + 1
            while j < len(toks) and toks[j].kind == "NOISE":
                j += 1
            if i + 1 < j < len(toks) and toks[j].kind == "RPAREN":
                del toks[i:j + 1]
                changed = True
                break
    return [t for t in toks if t.kind != "NOISE"]


def _neighbor(segment: list[Token], index: int, step: int) -> Optional[Token]:
    i = index + step
    while 0 <= i < len(segment):
        if segment[i].kind != "NOISE":
            return segment[i]
        i += step
    return None


def _best_suffix(segment: list[Token]):
    """Widest suffix of the segment that parses as a complete expression."""
    for i in range(len(segment)):
        kept = _drop_noise(segment[i:])
        if not kept or not any(t.kind == "NUM" for t in kept):
            continue
        try:
            ast = parse_tokens(kept)
        except ParseError:
            continue
        first = next(j for j in range(i, len(segment))
                     if segment[j] is kept[0])
        before = _neighbor(segment, first, -1)
        if before is not None and before.kind == "OP":
            continue  # fragment: expression dangling off an operator
        return ast, (kept[0].span[0], kept[-1].span[1])
    return None


def _best_prefix(segment: list[Token]):
    for i in range(len(segment), 0, -1):
        kept = _drop_noise(segment[:i])
        if not kept or not any(t.kind == "NUM" for t in kept):
            continue
        try:
            ast = parse_tokens(kept)
        except ParseError:
            continue
        last = next(j for j in range(i - 1, -1, -1)
                    if segment[j] is kept[-1])
        after = _neighbor(segment, last, +1)
        if after is not None and after.kind == "OP":
            continue
        return ast, (kept[0].span[0], kept[-1].span[1])
    return None


def _scan_segment(text: str, start: int, end: int,
                  split_chains: bool) -> list[Equation]:
    piece = text[start:end]
    tokens = tokenize(piece)
    for tok in tokens:
        tok.span = (tok.span[0] + start, tok.span[1] + start)
    if any(t.kind == "POISON" for t in tokens):
        culprit = next(t for t in tokens if t.kind == "POISON")
        log.debug("skipping candidate %r: algebra token %r",
                  piece.strip()[:60], culprit.text)
        return []
    eq_indices = [i for i, t in enumerate(tokens) if t.kind == "EQ"]
    if not eq_indices:
        return []
    if not split_chains:
        eq_indices = eq_indices[:1]
    bounds = [-1] + eq_indices + [len(tokens)]
    segments = [tokens[bounds[k] + 1:bounds[k + 1]]
                for k in range(len(bounds) - 1)]
    equations = []
    for k in range(len(segments) - 1):
        lhs = _best_suffix(segments[k])
        rhs = _best_prefix(segments[k + 1])
        if lhs is None or rhs is None:
            log.debug("skipping incomplete equation around %r",
                      piece.strip()[:60])
            continue
        lhs_ast, lhs_span = lhs
        rhs_ast, rhs_span = rhs
        equations.append(Equation(lhs_ast, rhs_ast,
                                  span=(lhs_span[0], rhs_span[1]),
                                  approx=tokens[eq_indices[k]].approx))
    return equations


def extract_equations(text: str,
                      patterns: ExtractionPatterns = DEFAULT_PATTERNS
                      ) -> list[Equation]:
    """All complete equations in document order, chains split pairwise."""
    folded = normalize_chars(text)
    equations: list[Equation] = []
    masked = list(folded)
    for m in patterns.equation_marker.finditer(folded):
        equations.extend(_scan_segment(folded, m.start(1), m.end(1),
                                       patterns.split_chains))
        for i in range(m.start(), m.end()):
            masked[i] = " "
    masked_text = "".join(masked)
    for s_start, s_end in _sentence_spans(masked_text):
        equations.extend(_scan_segment(masked_text, s_start, s_end,
                                       patterns.split_chains))
    equations.sort(key=lambda eq: eq.span)
    return [replace(eq, origin=(None, idx)) for idx, eq in enumerate(equations)]
