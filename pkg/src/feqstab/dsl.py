"""
.feq spec files

    # comment
    operator { +2*f(2/5 x, 2 y) -1*f(-1/5 x, 3 y) -2*f(3/5 x, y) }
    bound    { 0.05308416*|x|^8*|y|^8 }
    params   { p = 4 }

grammar
    document  := block*                       (operator required, each block once)
    operator  := 'operator' '{' term (sign term)* '}'
    term      := [sign] [rational ['*']] 'f' '(' lin ',' lin ')'
    lin       := [sign] part (sign part)*
    part      := rational ['*'] slot | slot ['/' number] | rational   (constants must be 0)
    bound     := 'bound' '{' [bterm ('+' bterm)*] '}'
    bterm     := [number ['/' number] ['*']] factor ('*' factor)*  | number
    factor    := '|' slot '|' ['^' exponent]
    params    := 'params' '{' (name '=' [sign] rational)* '}'
    slot      := 'x' | 'y'
"""

import logging
import re
from collections import namedtuple
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple

from .feqtypes import ArgMap, BoundSpec, BoundTerm, OperatorSpec, OperatorTerm
from .util import LOGGER_NAME, format_fraction, format_real

logger = logging.getLogger(LOGGER_NAME)


SLOTS = ("x", "y")
BLOCKS = ("operator", "bound", "params")

TOKEN_PATTERN = re.compile(
    r"""
    (?P<space>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<symbol>[-+*/(),{}|^=])
    """,
    re.VERBOSE,
)


Token = namedtuple("Token", ["kind", "text", "line", "column"])


class SpecError(ValueError):
    def __init__(
        self, message: str, line: int, column: int, expected: FrozenSet[str] = frozenset()
    ):
        self.message = message
        self.line = line
        self.column = column
        self.expected = frozenset(expected)
        detail = f" (expected {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{line}:{column}: {message}{detail}")


def tokenize(text: str) -> List[Token]:
    tokens, line, start, pos = [], 1, 0, 0
    while pos < len(text):
        match = TOKEN_PATTERN.match(text, pos)
        if match is None:
            raise SpecError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = match.lastgroup
        if kind == "newline":
            line, start = line + 1, match.end()
        elif kind not in ("space", "comment"):
            tokens.append(Token(kind, match.group(), line, pos - start + 1))
        pos = match.end()
    tokens.append(Token("eof", "", line, pos - start + 1))

    return tokens


@dataclass(frozen=True, eq=False)
class SpecDocument:
    operator: OperatorSpec
    bound: BoundSpec = field(default_factory=BoundSpec)
    params: Tuple[Tuple[str, float], ...] = ()
    spans: Dict = field(default_factory=dict, compare=False, repr=False)

    def key(self):
        return (self.operator.canonical(), self.bound.canonical(), tuple(sorted(self.params)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpecDocument):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    @property
    def param_dict(self) -> Dict[str, float]:
        return dict(self.params)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.spans: Dict = {}

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.current
        if token.kind != "eof":
            self.pos += 1
        return token

    def at(self, *texts: str) -> bool:
        return self.current.kind in ("symbol", "name") and self.current.text in texts

    def fail(self, message: str, expected=(), token: Optional[Token] = None):
        token = token or self.current
        found = repr(token.text) if token.kind != "eof" else "end of input"
        raise SpecError(f"{message}, found {found}", token.line, token.column, frozenset(expected))

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}", [repr(text)])
        return self.advance()

    def number(self) -> Token:
        if self.current.kind != "number":
            self.fail("expected a number", ["number"])
        return self.advance()

    def rational(self) -> Fraction:
        value = Fraction(self.number().text)
        if self.at("/"):
            self.advance()
            denominator = self.number()
            if Fraction(denominator.text) == 0:
                self.fail("division by zero", token=denominator)
            value /= Fraction(denominator.text)

        return value

    def sign(self) -> int:
        if self.at("+", "-"):
            return -1 if self.advance().text == "-" else 1
        return 1

    def slot(self) -> str:
        token = self.current
        if token.kind != "name":
            self.fail("expected a slot symbol", ["'x'", "'y'"])
        if token.text not in SLOTS:
            self.fail(f"unknown symbol {token.text}", ["'x'", "'y'"])

        return self.advance().text

    # documents

    def document(self) -> SpecDocument:
        blocks: Dict[str, object] = {}
        while self.current.kind != "eof":
            token = self.current
            if token.kind != "name" or token.text not in BLOCKS:
                self.fail("expected a block", [repr(b) for b in BLOCKS])
            if token.text in blocks:
                self.fail(f"duplicate {token.text} block")
            self.advance()
            self.expect("{")
            blocks[token.text] = getattr(self, f"{token.text}_block")()
            self.expect("}")
        if "operator" not in blocks:
            self.fail("missing operator block", ["'operator'"])

        return SpecDocument(
            operator=blocks["operator"],
            bound=blocks.get("bound", BoundSpec()),
            params=blocks.get("params", ()),
            spans=self.spans,
        )

    def operator_block(self) -> OperatorSpec:
        terms = []
        while not self.at("}"):
            if self.current.kind == "eof":
                self.fail("unclosed operator block", ["'}'", "term"])
            if terms and not self.at("+", "-"):
                self.fail("expected a signed term", ["'+'", "'-'", "'}'"])
            start = self.current
            term = self.operator_term()
            if term is None:
                self.fail("zero coefficient term", token=start)
            self.spans[("operator", len(terms))] = (start.line, start.column)
            terms.append(term)
        if not terms:
            self.fail("empty operator", ["term"])

        return OperatorSpec(terms)

    def operator_term(self) -> Optional[OperatorTerm]:
        coef = Fraction(self.sign())
        if self.current.kind == "number":
            coef *= self.rational()
            if self.at("*"):
                self.advance()
        if not self.at("f"):
            self.fail("expected f(...)", ["'f'"])
        self.advance()
        self.expect("(")
        a, b = self.lin()
        self.expect(",")
        c, d = self.lin()
        self.expect(")")
        if coef == 0:
            return None

        return OperatorTerm(coef, ArgMap(a, b, c, d))

    def lin(self) -> Tuple[Fraction, Fraction]:
        weights = {slot: Fraction(0) for slot in SLOTS}
        sign = self.sign()
        while True:
            start = self.current
            weight, slot = self.lin_part()
            if slot is None:
                if weight != 0:
                    self.fail("constant term in argument map", ["'x'", "'y'"], start)
            else:
                weights[slot] += sign * weight
            if not self.at("+", "-"):
                break
            sign = self.sign()

        return weights["x"], weights["y"]

    def lin_part(self) -> Tuple[Fraction, Optional[str]]:
        if self.current.kind == "number":
            weight = self.rational()
            if self.at("*"):
                self.advance()
                return weight, self.slot()
            if self.current.kind == "name":
                return weight, self.slot()
            return weight, None
        slot = self.slot()
        weight = Fraction(1)
        if self.at("/"):
            self.advance()
            denominator = self.number()
            if Fraction(denominator.text) == 0:
                self.fail("division by zero", token=denominator)
            weight /= Fraction(denominator.text)

        return weight, slot

    def bound_block(self) -> BoundSpec:
        terms = []
        while not self.at("}"):
            if self.current.kind == "eof":
                self.fail("unclosed bound block", ["'}'", "term"])
            if self.at("-"):
                self.fail("negative bound coefficient")
            if terms:
                self.expect("+")
            elif self.at("+"):
                self.advance()
            start = self.current
            self.spans[("bound", len(terms))] = (start.line, start.column)
            terms.append(self.bound_term())

        return BoundSpec(terms)

    def bound_term(self) -> BoundTerm:
        coef, exponents = 1.0, {slot: 0.0 for slot in SLOTS}
        if self.current.kind == "number":
            coef = float(self.rational())
            if not self.at("*"):
                return BoundTerm(coef, 0, 0)
            self.advance()
        while True:
            self.expect("|")
            slot = self.slot()
            self.expect("|")
            exponent = 1.0
            if self.at("^"):
                self.advance()
                if self.at("-"):
                    self.fail("negative exponent")
                exponent = float(self.rational())
            exponents[slot] += exponent
            if not self.at("*"):
                break
            self.advance()

        return BoundTerm(coef, exponents["x"], exponents["y"])

    def params_block(self) -> Tuple[Tuple[str, float], ...]:
        params: Dict[str, float] = {}
        while not self.at("}"):
            token = self.current
            if token.kind != "name":
                self.fail("expected a parameter name", ["name", "'}'"])
            if token.text in params:
                self.fail(f"duplicate parameter {token.text}")
            self.advance()
            self.expect("=")
            sign = self.sign()
            params[token.text] = sign * float(self.rational())
            self.spans[("params", token.text)] = (token.line, token.column)

        return tuple(sorted(params.items()))


def parse_spec(text: str) -> SpecDocument:
    document = _Parser(text).document()
    logger.debug(
        f"parsed spec: {len(document.operator.terms)} operator terms,"
        f" {len(document.bound.terms)} bound terms"
    )

    return document


def _format_lin(first: Fraction, second: Fraction) -> str:
    parts = []
    for weight, slot in ((first, "x"), (second, "y")):
        if weight == 0:
            continue
        magnitude = abs(weight)
        text = slot if magnitude == 1 else f"{format_fraction(magnitude)} {slot}"
        if parts:
            parts.append(f"{'-' if weight < 0 else '+'} {text}")
        else:
            parts.append(f"-{text}" if weight < 0 else text)

    return " ".join(parts) or "0"


def _format_bound_term(term: BoundTerm) -> str:
    factors = [format_real(term.coef)]
    for slot, exponent in (("x", term.exp_first), ("y", term.exp_second)):
        if exponent == 1:
            factors.append(f"|{slot}|")
        elif exponent != 0:
            factors.append(f"|{slot}|^{format_real(exponent)}")

    return " * ".join(factors)


def format_spec(document: SpecDocument) -> str:
    lines = ["operator {"]
    for term in document.operator.canonical().terms:
        m = term.map
        lines.append(
            f"  {format_fraction(term.coef, signed=True)} * "
            f"f({_format_lin(m.a, m.b)}, {_format_lin(m.c, m.d)})"
        )
    lines.append("}")
    if document.bound.terms:
        lines.append("bound {")
        for i, term in enumerate(document.bound.canonical().terms):
            lines.append(f"  {'+ ' if i else ''}{_format_bound_term(term)}")
        lines.append("}")
    if document.params:
        lines.append("params {")
        lines.extend(f"  {name} = {format_real(value)}" for name, value in sorted(document.params))
        lines.append("}")

    return "\n".join(lines) + "\n"


def document_for(operator: OperatorSpec, bound: BoundSpec, params: Dict[str, float]):
    return SpecDocument(operator, bound, tuple(sorted((k, float(v)) for k, v in params.items())))


def export_entry(entry) -> str:
    """catalog entry as .feq text, with its notes as comments; the probe param
    carries the entry probe scale to `run`"""
    header = [f"# {entry.name}"] + [f"# {note}" for note in entry.notes]
    params = {**entry.params, "probe": entry.probe_scale}
    body = format_spec(document_for(entry.spec, entry.bound, params))

    return "\n".join(header) + "\n" + body
