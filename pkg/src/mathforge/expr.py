"""Exact arithmetic over expressions found in chain-of-thought text.

Parsing is exact-first: every terminating decimal becomes a rational, all
evaluation happens on big rationals, and nothing is ever rounded. The lexer
tolerates the debris that surrounds arithmetic in model output (currency
signs, thousands separators, unicode operators, attached units), while
anything that smells like algebra (variables, LaTeX markup) is marked as a
poison token so callers can refuse to guess.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

BIGINT_CAP_BITS = 4096

Span = tuple[int, int]


_ASCII_DIGITS = set("0123456789")


def _is_digit(ch: str) -> bool:
    return ch in _ASCII_DIGITS


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, position: int, expectation: str):
        super().__init__(f"at {position}: expected {expectation}")
        self.position = position
        self.expectation = expectation


class EvalError(ExprError):
    def __init__(self, message: str, span: Optional[Span] = None):
        super().__init__(message)
        self.span = span


class DivisionByZero(EvalError):
    def __init__(self, span: Optional[Span] = None):
        super().__init__("division by zero", span)


class Overflow(EvalError):
    def __init__(self, span: Optional[Span] = None):
        super().__init__(f"rational exceeds {BIGINT_CAP_BITS}-bit cap", span)


class NonNumericSymbol(EvalError):
    def __init__(self, name: str, span: Optional[Span] = None):
        super().__init__(f"symbol '{name}' has no numeric value", span)
        self.name = name


# --------------------------------------------------------------------------
# character normalization (strictly 1:1 so spans into the original text hold)

_CHAR_PAIRS = {
    "×": "*", "✕": "*", "✖": "*", "∗": "*", "⋅": "*", "·": "*", "＊": "*",
    "÷": "/", "∕": "/", "⁄": "/", "／": "/",
    "−": "-", "－": "-", "＋": "+",
    "＝": "=", "（": "(", "）": ")", "％": "%", "＾": "^",
    "＄": "$", "￥": "¥", "：": ":", "；": ";", "？": "?", "！": "!",
}
_CHAR_PAIRS.update({chr(0xFF10 + i): str(i) for i in range(10)})
_CHAR_MAP = str.maketrans(_CHAR_PAIRS)

_SUPERSCRIPTS = {"⁰": 0, "¹": 1, "²": 2, "³": 3, "⁴": 4, "⁵": 5, "⁶": 6,
                 "⁷": 7, "⁸": 8, "⁹": 9}
_APPROX_EQ = "≈≒≃≅"
_CURRENCY = "$¥€£"
_POISON_CHARS = set("\\{}_√∑∫∏|[]&")

# Single letters that are ordinary English words, not algebra variables.
_LETTER_WORDS = {"a", "A", "I"}
# Measurement abbreviations that may trail a number ("0.75m / 2 = 0.375").
_UNIT_WORDS = {"m", "cm", "km", "mm", "kg", "g", "mg", "t", "l", "ml", "s",
               "h", "min", "hr", "hrs", "sec", "ft", "in", "lb", "lbs", "oz",
               "mi", "yd"}

_NUM_AT = re.compile(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+")
_WORD_AT = re.compile(r"[A-Za-z][A-Za-z'’]*")
_CJK_AT = re.compile(r"[㐀-鿿　-〿｡-･]+")


def normalize_chars(text: str) -> str:
    """Fold width/unicode operator variants; output has the same length."""
    return text.translate(_CHAR_MAP)


@dataclass
class Token:
    kind: str            # NUM OP LPAREN RPAREN PERCENT SUP EQ SYM NOISE POISON
    text: str
    span: Span
    value: Optional[Fraction] = None
    is_decimal: bool = False
    op: str = ""
    approx: bool = False
    sub: str = ""        # NOISE flavor: word | cjk | punct | unit


def _lex_number(norm: str, i: int) -> tuple[Token, int]:
    m = _NUM_AT.match(norm, i)
    assert m is not None
    raw = m.group(0)
    digits = raw.replace(",", "")
    if "." in digits:
        int_part, frac_part = digits.split(".")
        sig = int((int_part or "0") + frac_part)
        value = Fraction(sig, 10 ** len(frac_part))
        is_decimal = True
    else:
        value = Fraction(int(digits))
        is_decimal = False
    tok = Token("NUM", digits, (i, m.end()), value=value, is_decimal=is_decimal)
    return tok, m.end()


def tokenize(text: str, *, symbols: bool = False) -> list[Token]:
    """Lex ``text`` into tokens with spans into the original string.

    With ``symbols=True`` bare identifiers become SYM tokens (used for slot
    formulas); otherwise single letters that are not multiplication signs or
    units are POISON, signalling algebra we must not evaluate.
    """
    norm = normalize_chars(text)
    tokens: list[Token] = []
    i, n = 0, len(norm)
    while i < n:
        ch = norm[i]
        if ch.isspace():
            i += 1
            continue
        if _is_digit(ch) or (ch == "." and i + 1 < n and _is_digit(norm[i + 1])):
            tok, j = _lex_number(norm, i)
            tokens.append(tok)
            i = j
            # letters glued onto a number: unit, x-as-times, or a variable
            m = _WORD_AT.match(norm, i)
            if m:
                run = m.group(0)
                nxt = m.end()
                while nxt < n and norm[nxt].isspace():
                    nxt += 1
                if run in ("x", "X") and nxt < n and (_is_digit(norm[nxt])
                                                      or norm[nxt] in _CURRENCY
                                                      or norm[nxt] == "("):
                    tokens.append(Token("OP", run, (i, m.end()), op="*"))
                elif symbols:
                    tokens.append(Token("SYM", run, (i, m.end())))
                elif run.lower() in _UNIT_WORDS:
                    tokens.append(Token("NOISE", run, (i, m.end()), sub="unit"))
                else:
                    tokens.append(Token("POISON", run, (i, m.end())))
                i = m.end()
            continue
        if ch in _CURRENCY:
            j = i + 1
            while j < n and norm[j].isspace():
                j += 1
            if j < n and (_is_digit(norm[j]) or norm[j] == "."):
                i += 1  # currency marker absorbed by the following number
            else:
                tokens.append(Token("NOISE", ch, (i, i + 1), sub="punct"))
                i += 1
            continue
        if ch in "+-*/^":
            tokens.append(Token("OP", ch, (i, i + 1), op=ch))
            i += 1
            continue
        if ch == "(":
            tokens.append(Token("LPAREN", ch, (i, i + 1)))
            i += 1
            continue
        if ch == ")":
            tokens.append(Token("RPAREN", ch, (i, i + 1)))
            i += 1
            continue
        if ch == "%":
            tokens.append(Token("PERCENT", ch, (i, i + 1)))
            i += 1
            continue
        if ch in _SUPERSCRIPTS:
            j = i
            val = 0
            while j < n and norm[j] in _SUPERSCRIPTS:
                val = val * 10 + _SUPERSCRIPTS[norm[j]]
                j += 1
            tokens.append(Token("SUP", norm[i:j], (i, j),
                                value=Fraction(val)))
            i = j
            continue
        if ch == "=" or ch in _APPROX_EQ:
            tokens.append(Token("EQ", ch, (i, i + 1), approx=ch in _APPROX_EQ))
            i += 1
            continue
        if ch in ("π", "Π"):
            tokens.append(Token("SYM", ch, (i, i + 1)))
            i += 1
            continue
        if ch in _POISON_CHARS:
            tokens.append(Token("POISON", ch, (i, i + 1)))
            i += 1
            continue
        m = _WORD_AT.match(norm, i)
        if m:
            run = m.group(0)
            if symbols:
                tokens.append(Token("SYM", run, (i, m.end())))
            elif len(run) == 1:
                tokens.append(_resolve_single_letter(run, tokens, norm, m.end(), i))
            else:
                sub = "unit" if (run.lower() in _UNIT_WORDS and tokens
                                 and tokens[-1].kind == "NUM") else "word"
                tokens.append(Token("NOISE", run, (i, m.end()), sub=sub))
            i = m.end()
            continue
        m = _CJK_AT.match(norm, i)
        if m:
            tokens.append(Token("NOISE", m.group(0), (i, m.end()), sub="cjk"))
            i = m.end()
            continue
        tokens.append(Token("NOISE", ch, (i, i + 1), sub="punct"))
        i += 1
    return tokens


def _resolve_single_letter(run: str, prior: list[Token], norm: str,
                           end: int, start: int) -> Token:
    span = (start, end)
    if run in ("x", "X"):
        prev_ok = bool(prior) and prior[-1].kind in ("NUM", "RPAREN")
        j = end
        while j < len(norm) and norm[j].isspace():
            j += 1
        next_ok = j < len(norm) and (_is_digit(norm[j]) or norm[j] in _CURRENCY
                                     or norm[j] == "(")
        if prev_ok and next_ok:
            return Token("OP", run, span, op="*")
    if run.lower() in _UNIT_WORDS and prior and prior[-1].kind == "NUM":
        return Token("NOISE", run, span, sub="unit")
    if run in _LETTER_WORDS:
        return Token("NOISE", run, span, sub="word")
    return Token("POISON", run, span)


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: Fraction
    is_decimal: bool
    text: str
    span: Span = (0, 0)


@dataclass(frozen=True)
class Sym:
    name: str
    span: Span = (0, 0)


@dataclass(frozen=True)
class Neg:
    operand: "ExpressionAst"
    span: Span = (0, 0)


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / ^
    left: "ExpressionAst"
    right: "ExpressionAst"
    span: Span = (0, 0)


@dataclass(frozen=True)
class Percent:
    operand: "ExpressionAst"
    span: Span = (0, 0)


@dataclass(frozen=True)
class Paren:
    inner: "ExpressionAst"
    span: Span = (0, 0)


ExpressionAst = Union[Num, Sym, Neg, BinOp, Percent, Paren]


def num_from_fraction(value: Fraction) -> Num:
    return Num(value=value, is_decimal=False, text=format_fraction(value))


def format_fraction(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


class _Parser:
    def __init__(self, tokens: list[Token], end_position: int):
        self.tokens = tokens
        self.pos = 0
        self.end_position = end_position

    def _peek(self) -> Optional[Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> Optional[Token]:
        tok = self._peek()
        if tok is not None:
            self.pos += 1
        return tok

    def _fail(self, expectation: str):
        tok = self._peek()
        position = tok.span[0] if tok else self.end_position
        raise ParseError(position, expectation)

    def parse(self) -> ExpressionAst:
        node = self.expression()
        if self._peek() is not None:
            self._fail("end of expression")
        return node

    def expression(self) -> ExpressionAst:
        node = self.term()
        while True:
            tok = self._peek()
            if tok is not None and tok.kind == "OP" and tok.op in "+-":
                self._next()
                rhs = self.term()
                node = BinOp(tok.op, node, rhs, (node.span[0], rhs.span[1]))
            else:
                return node

    def term(self) -> ExpressionAst:
        node = self.factor()
        while True:
            tok = self._peek()
            if tok is not None and tok.kind == "OP" and tok.op in "*/":
                self._next()
                rhs = self.factor()
                node = BinOp(tok.op, node, rhs, (node.span[0], rhs.span[1]))
            else:
                return node

    def factor(self) -> ExpressionAst:
        tok = self._peek()
        if tok is not None and tok.kind == "OP" and tok.op == "-":
            self._next()
            operand = self.factor()
            return Neg(operand, (tok.span[0], operand.span[1]))
        return self.power()

    def power(self) -> ExpressionAst:
        base = self.postfix()
        tok = self._peek()
        if tok is not None and tok.kind == "OP" and tok.op == "^":
            self._next()
            exponent = self.factor()
            return BinOp("^", base, exponent, (base.span[0], exponent.span[1]))
        return base

    def postfix(self) -> ExpressionAst:
        node = self.atom()
        while True:
            tok = self._peek()
            if tok is not None and tok.kind == "PERCENT":
                self._next()
                node = Percent(node, (node.span[0], tok.span[1]))
            elif tok is not None and tok.kind == "SUP":
                self._next()
                exp = Num(tok.value, False, str(tok.value.numerator), tok.span)
                node = BinOp("^", node, exp, (node.span[0], tok.span[1]))
            else:
                return node

    def atom(self) -> ExpressionAst:
        tok = self._peek()
        if tok is None:
            self._fail("a number or '('")
        if tok.kind == "NUM":
            self._next()
            return Num(tok.value, tok.is_decimal, tok.text, tok.span)
        if tok.kind == "SYM":
            self._next()
            name = "pi" if tok.text in ("π", "Π") else tok.text
            return Sym(name, tok.span)
        if tok.kind == "LPAREN":
            self._next()
            inner = self.expression()
            closing = self._peek()
            if closing is None or closing.kind != "RPAREN":
                self._fail("')'")
            self._next()
            return Paren(inner, (tok.span[0], closing.span[1]))
        self._fail("a number or '('")


def parse_tokens(tokens: list[Token], end_position: int = 0) -> ExpressionAst:
    """Parse an already-filtered token list (no NOISE/POISON/EQ)."""
    if not tokens:
        raise ParseError(end_position, "an expression")
    return _Parser(tokens, end_position or tokens[-1].span[1]).parse()


def parse_expression(text: str, *, allow_symbols: bool = False) -> ExpressionAst:
    """Parse a candidate arithmetic expression covering the whole input.

    Currency signs, thousands separators and CJK unit context are stripped;
    any other unconsumable input raises ParseError.
    """
    kept: list[Token] = []
    for tok in tokenize(text, symbols=allow_symbols):
        if tok.kind == "NOISE":
            if tok.sub in ("cjk", "unit"):
                continue
            raise ParseError(tok.span[0], f"expression text, not {tok.text!r}")
        if tok.kind == "POISON":
            raise ParseError(tok.span[0], f"a numeric operand, not {tok.text!r}")
        if tok.kind == "EQ":
            raise ParseError(tok.span[0], "a single expression without '='")
        kept.append(tok)
    return parse_tokens(kept, len(text))


def parse_formula(text: str) -> ExpressionAst:
    """Parse a formula whose identifiers are free variables (slot names)."""
    return parse_expression(text, allow_symbols=True)


# --------------------------------------------------------------------------
# printing / structural identity

def to_text(node: ExpressionAst) -> str:
    if isinstance(node, Num):
        return node.text
    if isinstance(node, Sym):
        return "π" if node.name == "pi" else node.name
    if isinstance(node, Neg):
        return "-" + to_text(node.operand)
    if isinstance(node, Percent):
        return to_text(node.operand) + "%"
    if isinstance(node, Paren):
        return "(" + to_text(node.inner) + ")"
    if node.op == "^":
        return f"{to_text(node.left)}^{to_text(node.right)}"
    return f"{to_text(node.left)} {node.op} {to_text(node.right)}"


def same_structure(a: ExpressionAst, b: ExpressionAst) -> bool:
    """Structural identity, ignoring source spans."""
    if type(a) is not type(b):
        return False
    if isinstance(a, Num):
        return a.value == b.value and a.is_decimal == b.is_decimal
    if isinstance(a, Sym):
        return a.name == b.name
    if isinstance(a, Neg):
        return same_structure(a.operand, b.operand)
    if isinstance(a, Percent):
        return same_structure(a.operand, b.operand)
    if isinstance(a, Paren):
        return same_structure(a.inner, b.inner)
    return (a.op == b.op and same_structure(a.left, b.left)
            and same_structure(a.right, b.right))


def canonical_form(node: ExpressionAst) -> str:
    """Order-insensitive print: commutative chains are flattened and sorted.

    Used as a dedup key, so ``4 * 20`` and ``20 * 4`` collapse together.
    """
    if isinstance(node, Paren):
        return canonical_form(node.inner)
    if isinstance(node, Num):
        return format_fraction(node.value)
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Neg):
        return f"(neg {canonical_form(node.operand)})"
    if isinstance(node, Percent):
        return f"(pct {canonical_form(node.operand)})"
    if node.op in "+*":
        parts = sorted(_flatten(node, node.op))
        return "(" + node.op + " " + " ".join(parts) + ")"
    return f"({node.op} {canonical_form(node.left)} {canonical_form(node.right)})"


def _flatten(node: ExpressionAst, op: str) -> list[str]:
    if isinstance(node, Paren):
        return _flatten(node.inner, op)
    if isinstance(node, BinOp) and node.op == op:
        return _flatten(node.left, op) + _flatten(node.right, op)
    return [canonical_form(node)]


# --------------------------------------------------------------------------
# values and evaluation

@dataclass(frozen=True)
class NumericValue:
    """Exact numeric value or a verbatim non-numeric token.

    kind 'rational' holds a reduced fraction; kind 'decimal' additionally
    remembers how the literal was written (significand and scale) so it
    round-trips through text losslessly; kind 'token' is a verbatim string
    for answers that are not numerals.
    """

    kind: str  # rational | decimal | token
    fraction: Optional[Fraction] = None
    significand: int = 0
    scale: int = 0
    token: str = ""

    @staticmethod
    def rational(value: Fraction) -> "NumericValue":
        return NumericValue("rational", Fraction(value))

    @staticmethod
    def decimal(significand: int, scale: int) -> "NumericValue":
        return NumericValue("decimal", Fraction(significand, 10 ** scale),
                            significand=significand, scale=scale)

    @staticmethod
    def non_numeric(token: str) -> "NumericValue":
        return NumericValue("token", token=token)

    @staticmethod
    def from_literal(text: str) -> "NumericValue":
        """Exact value of a plain numeral: '10', '-3.60', '29.2', '3/4'."""
        t = text.strip().replace(",", "")
        sign = 1
        if t.startswith(("-", "−")):
            sign, t = -1, t[1:]
        elif t.startswith("+"):
            t = t[1:]
        if "/" in t:
            num, den = t.split("/", 1)
            return NumericValue.rational(sign * Fraction(int(num), int(den)))
        if "." in t:
            int_part, frac_part = t.split(".", 1)
            if not (int_part or frac_part) or not frac_part.isdigit() \
                    or (int_part and not int_part.isdigit()):
                raise ValueError(f"not a numeral: {text!r}")
            sig = sign * int((int_part or "0") + frac_part)
            return NumericValue.decimal(sig, len(frac_part))
        if not t.isdigit():
            raise ValueError(f"not a numeral: {text!r}")
        return NumericValue.rational(Fraction(sign * int(t)))

    @property
    def is_numeric(self) -> bool:
        return self.kind != "token"

    def text(self) -> str:
        if self.kind == "token":
            return self.token
        if self.kind == "decimal":
            sign = "-" if self.significand < 0 else ""
            digits = str(abs(self.significand)).rjust(self.scale + 1, "0")
            if self.scale == 0:
                return sign + digits
            return f"{sign}{digits[:-self.scale]}.{digits[-self.scale:]}"
        return format_fraction(self.fraction)

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class TolerancePolicy:
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6


DEFAULT_TOLERANCE = TolerancePolicy()

_TOKEN_NORM = re.compile(r"\s+")


def numeric_equal(a: NumericValue, b: NumericValue,
                  tol: TolerancePolicy = DEFAULT_TOLERANCE) -> bool:
    """Exact comparison for pure rationals; tolerance once decimals appear.

    Non-numeric tokens compare by normalized string equality (a numeric
    token is first re-read as a numeral when the other side is a number).
    """
    if a.kind == "token" or b.kind == "token":
        if a.kind == "token" and b.kind == "token":
            return _norm_token(a.token) == _norm_token(b.token)
        tokenish, numeric = (a, b) if a.kind == "token" else (b, a)
        try:
            reread = NumericValue.from_literal(tokenish.token)
        except (ValueError, ZeroDivisionError):
            return False
        return numeric_equal(reread, numeric, tol)
    if a.kind == "rational" and b.kind == "rational":
        return a.fraction == b.fraction
    diff = abs(a.fraction - b.fraction)
    magnitude = max(abs(a.fraction), abs(b.fraction))
    threshold = max(Fraction(tol.abs_tol), Fraction(tol.rel_tol) * magnitude)
    return diff <= threshold


def _norm_token(token: str) -> str:
    return _TOKEN_NORM.sub(" ", token.strip()).casefold()


def eval_expression(ast: ExpressionAst,
                    bindings: Optional[dict[str, Fraction]] = None,
                    cap_bits: int = BIGINT_CAP_BITS) -> NumericValue:
    """Evaluate to an exact rational; errors instead of guessing."""
    return NumericValue.rational(_eval(ast, bindings or {}, cap_bits))


def _capped(value: Fraction, span: Span, cap_bits: int) -> Fraction:
    if (value.numerator.bit_length() > cap_bits
            or value.denominator.bit_length() > cap_bits):
        raise Overflow(span)
    return value


def _eval(node: ExpressionAst, bindings: dict[str, Fraction],
          cap_bits: int) -> Fraction:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Sym):
        if node.name in bindings:
            return bindings[node.name]
        raise NonNumericSymbol(node.name, node.span)
    if isinstance(node, Neg):
        return -_eval(node.operand, bindings, cap_bits)
    if isinstance(node, Paren):
        return _eval(node.inner, bindings, cap_bits)
    if isinstance(node, Percent):
        return _eval(node.operand, bindings, cap_bits) / 100
    left = _eval(node.left, bindings, cap_bits)
    right = _eval(node.right, bindings, cap_bits)
    if node.op == "+":
        return _capped(left + right, node.span, cap_bits)
    if node.op == "-":
        return _capped(left - right, node.span, cap_bits)
    if node.op == "*":
        return _capped(left * right, node.span, cap_bits)
    if node.op == "/":
        if right == 0:
            raise DivisionByZero(node.span)
        return _capped(left / right, node.span, cap_bits)
    if node.op == "^":
        if right.denominator != 1:
            raise EvalError("non-integer exponent", node.span)
        exponent = right.numerator
        base_bits = max(left.numerator.bit_length(),
                        left.denominator.bit_length())
        if abs(exponent) * max(base_bits - 1, 1) > cap_bits:
            raise Overflow(node.span)
        if left == 0 and exponent < 0:
            raise DivisionByZero(node.span)
        return _capped(left ** exponent, node.span, cap_bits)
    raise EvalError(f"unknown operator {node.op!r}", node.span)


# --------------------------------------------------------------------------
# equations

@dataclass(frozen=True)
class Equation:
    """One complete equation lhs = rhs with its location in the source text."""

    lhs: ExpressionAst
    rhs: ExpressionAst
    span: Span = (0, 0)
    origin: tuple[Optional[str], int] = (None, 0)
    approx: bool = False

    def text(self) -> str:
        return f"{to_text(self.lhs)} = {to_text(self.rhs)}"

    def canonical(self) -> str:
        return f"{canonical_form(self.lhs)} = {canonical_form(self.rhs)}"


@dataclass(frozen=True)
class EquationVerdict:
    """true | false | indeterminate(reason)."""

    status: str  # 'true' | 'false' | 'indeterminate'
    reason: str = ""

    @property
    def is_true(self) -> bool:
        return self.status == "true"

    @property
    def is_false(self) -> bool:
        return self.status == "false"

    @property
    def is_indeterminate(self) -> bool:
        return self.status == "indeterminate"

    def __str__(self) -> str:
        if self.status == "indeterminate" and self.reason:
            return f"indeterminate({self.reason})"
        return self.status


VERDICT_TRUE = EquationVerdict("true")
VERDICT_FALSE = EquationVerdict("false")


def indeterminate(reason: str) -> EquationVerdict:
    return EquationVerdict("indeterminate", reason)


def check_equation(eq: Equation,
                   tol: TolerancePolicy = DEFAULT_TOLERANCE) -> EquationVerdict:
    """Does the equation hold numerically? Evaluation errors never count
    as false; they surface as indeterminate."""
    try:
        lhs = eval_expression(eq.lhs)
        rhs = eval_expression(eq.rhs)
    except EvalError as err:
        return indeterminate(type(err).__name__)
    return VERDICT_TRUE if numeric_equal(lhs, rhs, tol) else VERDICT_FALSE
