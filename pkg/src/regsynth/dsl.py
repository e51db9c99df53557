"""The regularity language: AST, interpreter, textual parser, printer.

A program is two nested integer for-loops, a list of linear inequality
conditions, a Draw statement placing an object at linear-expression
coordinates, and an attribute expression assigning the object to an
appearance group. Canonical text looks like::

    For (i in range(0, 3)) {
        For (j in range(0, 3)) {
            If (-1*i - 1*j + 2 >= 0) {
                Draw(x=10*i + 0*j + 4, y=0*i + 10*j + 4, attribute=0)
            }
        }
    }

Keywords and operators follow Python conventions. The on-disk format is
this canonical text (extension ``.rpg``); a JSON mirror of the AST is
provided for tooling.

Attribute group semantics, per variant:

* ``Constant``        -> always 0 (one group)
* ``Quotient(e, d)``  -> ``e // d``
* ``IsZero(e)``       -> 1 if ``e == 0`` else 0
* ``IsZeroBoth``      -> 1 if both expressions are 0, else 0
* ``Modulo(e, m)``    -> ``e % m`` (one group per remainder class; the
  printed conditional clause is the language's surface syntax for this
  variant, and its 0/1 literals are fixed tokens, not group labels)
* ``ModuloBoth``      -> 1 if both congruences hold, else 0
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Union

from .errors import DslGrammarError, DslSyntaxError
from .geometry import LatticeIndex, Point2


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class LinearExpr:
    """coef_i * i + coef_j * j + constant, all integers."""

    coef_i: int
    coef_j: int
    constant: int

    def evaluate(self, i: int, j: int) -> int:
        return self.coef_i * i + self.coef_j * j + self.constant

    def text(self) -> str:
        out = f"{self.coef_i}*i"
        out += f" - {-self.coef_j}*j" if self.coef_j < 0 else f" + {self.coef_j}*j"
        out += f" - {-self.constant}" if self.constant < 0 else f" + {self.constant}"
        return out


@dataclass(frozen=True)
class Constant:
    """The zero attribute: every object in group 0."""

    def evaluate(self, i: int, j: int) -> int:
        return 0

    def text(self) -> str:
        return "0"


@dataclass(frozen=True)
class Quotient:
    """expr // divisor; negative quotients clamp to group 0 so labels
    stay non-negative (the synthesizer never emits a template that
    clamps on its matched region)."""

    expr: LinearExpr
    divisor: int

    def __post_init__(self):
        if self.divisor < 2:
            raise DslGrammarError("divisor must be >= 2")

    def evaluate(self, i: int, j: int) -> int:
        return max(0, self.expr.evaluate(i, j) // self.divisor)

    def text(self) -> str:
        return f"({self.expr.text()}) // {self.divisor}"


@dataclass(frozen=True)
class IsZero:
    expr: LinearExpr

    def evaluate(self, i: int, j: int) -> int:
        return 1 if self.expr.evaluate(i, j) == 0 else 0

    def text(self) -> str:
        return f"1 If ({self.expr.text()} == 0) else 0"


@dataclass(frozen=True)
class IsZeroBoth:
    expr1: LinearExpr
    expr2: LinearExpr

    def evaluate(self, i: int, j: int) -> int:
        return 1 if self.expr1.evaluate(i, j) == 0 and self.expr2.evaluate(i, j) == 0 else 0

    def text(self) -> str:
        return f"1 If ({self.expr1.text()} == 0 and {self.expr2.text()} == 0) else 0"


@dataclass(frozen=True)
class Modulo:
    expr: LinearExpr
    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise DslGrammarError("modulus must be >= 2")

    def evaluate(self, i: int, j: int) -> int:
        return self.expr.evaluate(i, j) % self.modulus

    def text(self) -> str:
        return f"1 If (({self.expr.text()}) % {self.modulus} == 0) else 0"


@dataclass(frozen=True)
class ModuloBoth:
    expr1: LinearExpr
    modulus1: int
    expr2: LinearExpr
    modulus2: int

    def __post_init__(self):
        if self.modulus1 < 2 or self.modulus2 < 2:
            raise DslGrammarError("modulus must be >= 2")

    def evaluate(self, i: int, j: int) -> int:
        ok1 = self.expr1.evaluate(i, j) % self.modulus1 == 0
        ok2 = self.expr2.evaluate(i, j) % self.modulus2 == 0
        return 1 if ok1 and ok2 else 0

    def text(self) -> str:
        return (
            f"1 If (({self.expr1.text()}) % {self.modulus1} == 0 "
            f"and ({self.expr2.text()}) % {self.modulus2} == 0) else 0"
        )


AttributeExpr = Union[Constant, Quotient, IsZero, IsZeroBoth, Modulo, ModuloBoth]

_ATTR_KINDS = {
    "constant": Constant,
    "quotient": Quotient,
    "is_zero": IsZero,
    "is_zero_both": IsZeroBoth,
    "modulo": Modulo,
    "modulo_both": ModuloBoth,
}


@dataclass(frozen=True)
class RegularityProgram:
    """Two nested loops + conditions + a Draw statement.

    ``conditions`` entries mean ``expr >= 0``; ``y_expr.coef_i`` must be
    zero (the lattice's y coordinate depends on j alone).
    """

    outer_range: tuple[int, int]
    inner_range: tuple[int, int]
    conditions: tuple[LinearExpr, ...]
    x_expr: LinearExpr
    y_expr: LinearExpr
    attribute: AttributeExpr

    def __post_init__(self):
        object.__setattr__(self, "outer_range", tuple(self.outer_range))
        object.__setattr__(self, "inner_range", tuple(self.inner_range))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.outer_range[0] >= self.outer_range[1]:
            raise DslGrammarError("empty loop range")
        if self.inner_range[0] >= self.inner_range[1]:
            raise DslGrammarError("empty loop range")
        if self.y_expr.coef_i != 0:
            raise DslGrammarError("i must not appear in the y expression")


@dataclass(frozen=True)
class DrawCommand:
    """One executed Draw: a position, its group label, and the (i, j)
    pair that produced it."""

    position: Point2
    attribute: int
    index: LatticeIndex

    def __post_init__(self):
        if self.attribute < 0:
            raise DslGrammarError("attribute must be non-negative")


# ---------------------------------------------------------------- interpreter


def execute(program: RegularityProgram, bounds: tuple[int, int]) -> list[DrawCommand]:
    """Run the program, clipping to the image frame.

    Iterates i over the outer range and j over the inner range, emits a
    DrawCommand when every condition is >= 0 and the integer (x, y)
    lands inside ``bounds`` = (width, height). Output is ordered by
    (i, j). Integer arithmetic throughout; no rounding.
    """
    w, h = bounds
    draws = []
    for i in range(*program.outer_range):
        for j in range(*program.inner_range):
            if any(c.evaluate(i, j) < 0 for c in program.conditions):
                continue
            x = program.x_expr.evaluate(i, j)
            y = program.y_expr.evaluate(i, j)
            if 0 <= x < w and 0 <= y < h:
                draws.append(
                    DrawCommand(
                        position=Point2(x, y),
                        attribute=program.attribute.evaluate(i, j),
                        index=LatticeIndex(i, j),
                    )
                )
    return draws


# -------------------------------------------------------------------- printer


def unparse(program: RegularityProgram) -> str:
    """Canonical text form; inverse of parse up to whitespace."""
    pad = "    "
    lines = [
        f"For (i in range({program.outer_range[0]}, {program.outer_range[1]})) {{",
        f"{pad}For (j in range({program.inner_range[0]}, {program.inner_range[1]})) {{",
    ]
    depth = 2
    for cond in program.conditions:
        lines.append(f"{pad * depth}If ({cond.text()} >= 0) {{")
        depth += 1
    lines.append(
        f"{pad * depth}Draw(x={program.x_expr.text()}, "
        f"y={program.y_expr.text()}, attribute={program.attribute.text()})"
    )
    while depth > 0:
        depth -= 1
        lines.append(f"{pad * depth}}}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------- parser


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<name>[A-Za-z_]\w*)|(?P<op>==|>=|//|[(){},=%*+-]))"
)


class _Token:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind = kind
        self.value = value
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad = pos + (len(text[pos:]) - len(stripped))
            line += text.count("\n", line_start, bad)
            line_start = text.rfind("\n", 0, bad) + 1
            raise DslSyntaxError(
                f"unexpected character {text[bad]!r}", line, bad - line_start + 1
            )
        start = m.start(m.lastgroup)
        line += text.count("\n", line_start, start)
        if text.rfind("\n", 0, start) >= 0:
            line_start = text.rfind("\n", 0, start) + 1
        col = start - line_start + 1
        if m.lastgroup == "int":
            tokens.append(_Token("int", int(m.group("int")), line, col))
        elif m.lastgroup == "name":
            tokens.append(_Token("name", m.group("name"), line, col))
        else:
            tokens.append(_Token("op", m.group("op"), line, col))
        pos = m.end()
    tokens.append(_Token("eof", None, line, len(text) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str):
        tok = self.peek()
        raise DslSyntaxError(message, tok.line, tok.col)

    def expect_op(self, op: str) -> _Token:
        tok = self.peek()
        if tok.kind != "op" or tok.value != op:
            self.fail(f"expected {op!r}")
        return self.next()

    def expect_name(self, name: str) -> _Token:
        tok = self.peek()
        if tok.kind != "name" or tok.value != name:
            self.fail(f"expected {name!r}")
        return self.next()

    def integer(self) -> int:
        sign = 1
        tok = self.peek()
        if tok.kind == "op" and tok.value == "-":
            self.next()
            sign = -1
        tok = self.peek()
        if tok.kind != "int":
            self.fail("expected integer")
        self.next()
        return sign * tok.value

    # Expr := signed term (('+'|'-') term)* ; term := INT '*' var | var | INT
    def linear_expr(self) -> LinearExpr:
        coefs = {"i": 0, "j": 0, "const": 0}
        first = True
        while True:
            sign = 1
            tok = self.peek()
            if tok.kind == "op" and tok.value in "+-":
                sign = -1 if tok.value == "-" else 1
                self.next()
            elif not first:
                break
            tok = self.peek()
            if tok.kind == "int":
                self.next()
                value = tok.value
                nxt = self.peek()
                if nxt.kind == "op" and nxt.value == "*":
                    self.next()
                    var = self.peek()
                    if var.kind != "name" or var.value not in ("i", "j"):
                        self.fail("expected loop variable i or j")
                    self.next()
                    self._reject_nonlinear()
                    coefs[var.value] += sign * value
                else:
                    coefs["const"] += sign * value
            elif tok.kind == "name" and tok.value in ("i", "j"):
                self.next()
                self._reject_nonlinear()
                coefs[tok.value] += sign
            else:
                self.fail("expected term")
            first = False
        return LinearExpr(coefs["i"], coefs["j"], coefs["const"])

    def _reject_nonlinear(self):
        nxt = self.peek()
        if nxt.kind == "op" and nxt.value == "*":
            self.fail("non-linear expression")

    def program(self) -> RegularityProgram:
        self.expect_name("For")
        self.expect_op("(")
        var = self.peek()
        if var.kind != "name" or var.value != "i":
            self.fail("outer loop variable must be i")
        self.next()
        outer = self._range_clause()
        self.expect_op("{")

        self.expect_name("For")
        self.expect_op("(")
        var = self.peek()
        if var.kind != "name" or var.value != "j":
            if var.kind == "name" and var.value == "i":
                raise DslGrammarError("inner loop variable must be j")
            self.fail("inner loop variable must be j")
        self.next()
        inner = self._range_clause()
        self.expect_op("{")

        conditions = []
        while self.peek().kind == "name" and self.peek().value == "If":
            self.next()
            self.expect_op("(")
            expr = self.linear_expr()
            self.expect_op(">=")
            tok = self.peek()
            if tok.kind != "int" or tok.value != 0:
                self.fail("condition must compare against 0")
            self.next()
            self.expect_op(")")
            self.expect_op("{")
            conditions.append(expr)

        if self.peek().kind == "name" and self.peek().value == "For":
            self.fail("loops nest at most two deep")
        x_expr, y_expr, attribute = self._draw()

        for _ in range(len(conditions) + 2):
            self.expect_op("}")
        if self.peek().kind != "eof":
            self.fail("trailing input after program")

        if y_expr.coef_i != 0:
            raise DslGrammarError("i must not appear in the y expression")
        return RegularityProgram(
            outer_range=outer,
            inner_range=inner,
            conditions=tuple(conditions),
            x_expr=x_expr,
            y_expr=y_expr,
            attribute=attribute,
        )

    def _range_clause(self) -> tuple[int, int]:
        self.expect_name("in")
        self.expect_name("range")
        self.expect_op("(")
        lo = self.integer()
        self.expect_op(",")
        hi = self.integer()
        self.expect_op(")")
        self.expect_op(")")
        if lo >= hi:
            raise DslGrammarError("empty loop range")
        return (lo, hi)

    def _draw(self):
        self.expect_name("Draw")
        self.expect_op("(")
        self.expect_name("x")
        self.expect_op("=")
        x_expr = self.linear_expr()
        self.expect_op(",")
        self.expect_name("y")
        self.expect_op("=")
        y_expr = self.linear_expr()
        self.expect_op(",")
        self.expect_name("attribute")
        self.expect_op("=")
        attribute = self._attribute()
        self.expect_op(")")
        return x_expr, y_expr, attribute

    def _attribute(self) -> AttributeExpr:
        tok = self.peek()
        if tok.kind == "int" and tok.value == 0:
            self.next()
            return Constant()
        if tok.kind == "int" and tok.value == 1:
            nxt = self.tokens[self.pos + 1]
            if nxt.kind == "name" and nxt.value == "If":
                self.next()
                self.next()
                return self._attribute_clause()
            self.fail("constant attribute must be 0")
        if tok.kind == "int":
            self.fail("constant attribute must be 0")
        if tok.kind == "op" and tok.value == "(":
            self.next()
            expr = self.linear_expr()
            self.expect_op(")")
            op = self.peek()
            if op.kind == "op" and op.value == "//":
                self.next()
                divisor = self.integer()
                return Quotient(expr, divisor)
            if op.kind == "op" and op.value == "%":
                self.next()
                modulus = self.integer()
                return Modulo(expr, modulus)
            self.fail("expected // or % after attribute expression")
        self.fail("expected attribute expression")

    def _attribute_clause(self) -> AttributeExpr:
        # after '1 If': '(' <congruence-or-zero test> [and ...] ') else 0'
        self.expect_op("(")
        first = self._clause_part()
        second = None
        if self.peek().kind == "name" and self.peek().value == "and":
            self.next()
            second = self._clause_part()
        self.expect_op(")")
        self.expect_name("else")
        tok = self.peek()
        if tok.kind != "int" or tok.value != 0:
            self.fail("attribute clause must end with else 0")
        self.next()
        if second is None:
            expr, mod = first
            return IsZero(expr) if mod is None else Modulo(expr, mod)
        (e1, m1), (e2, m2) = first, second
        if (m1 is None) != (m2 is None):
            raise DslGrammarError("mixed conjunction in attribute clause")
        if m1 is None:
            return IsZeroBoth(e1, e2)
        return ModuloBoth(e1, m1, e2, m2)

    def _clause_part(self):
        # expr == 0  |  (expr) % INT == 0   (parens optional in both)
        tok = self.peek()
        if tok.kind == "op" and tok.value == "(":
            self.next()
            expr = self.linear_expr()
            self.expect_op(")")
        else:
            expr = self.linear_expr()
        mod = None
        if self.peek().kind == "op" and self.peek().value == "%":
            self.next()
            mod = self.integer()
        self.expect_op("==")
        tok = self.peek()
        if tok.kind != "int" or tok.value != 0:
            self.fail("comparison must be against 0")
        self.next()
        return expr, mod


def parse(text: str) -> RegularityProgram:
    """Parse canonical (or whitespace-mangled) program text.

    Raises DslSyntaxError with a source position for token-level
    problems and DslGrammarError for rule violations (empty ranges, i
    inside the y expression, moduli below 2).
    """
    return _Parser(text).program()


# ----------------------------------------------------------------- JSON mirror


def _expr_to_json(e: LinearExpr):
    return [e.coef_i, e.coef_j, e.constant]


def _expr_from_json(v) -> LinearExpr:
    return LinearExpr(int(v[0]), int(v[1]), int(v[2]))


def attribute_to_json(attr: AttributeExpr) -> dict:
    if isinstance(attr, Constant):
        return {"kind": "constant"}
    if isinstance(attr, Quotient):
        return {"kind": "quotient", "expr": _expr_to_json(attr.expr), "divisor": attr.divisor}
    if isinstance(attr, IsZero):
        return {"kind": "is_zero", "expr": _expr_to_json(attr.expr)}
    if isinstance(attr, IsZeroBoth):
        return {
            "kind": "is_zero_both",
            "expr1": _expr_to_json(attr.expr1),
            "expr2": _expr_to_json(attr.expr2),
        }
    if isinstance(attr, Modulo):
        return {"kind": "modulo", "expr": _expr_to_json(attr.expr), "modulus": attr.modulus}
    if isinstance(attr, ModuloBoth):
        return {
            "kind": "modulo_both",
            "expr1": _expr_to_json(attr.expr1),
            "modulus1": attr.modulus1,
            "expr2": _expr_to_json(attr.expr2),
            "modulus2": attr.modulus2,
        }
    raise TypeError(f"not an attribute expression: {attr!r}")


def attribute_from_json(doc: dict) -> AttributeExpr:
    kind = doc.get("kind")
    if kind not in _ATTR_KINDS:
        raise DslGrammarError(f"unknown attribute kind {kind!r}")
    if kind == "constant":
        return Constant()
    if kind == "quotient":
        return Quotient(_expr_from_json(doc["expr"]), int(doc["divisor"]))
    if kind == "is_zero":
        return IsZero(_expr_from_json(doc["expr"]))
    if kind == "is_zero_both":
        return IsZeroBoth(_expr_from_json(doc["expr1"]), _expr_from_json(doc["expr2"]))
    if kind == "modulo":
        return Modulo(_expr_from_json(doc["expr"]), int(doc["modulus"]))
    return ModuloBoth(
        _expr_from_json(doc["expr1"]),
        int(doc["modulus1"]),
        _expr_from_json(doc["expr2"]),
        int(doc["modulus2"]),
    )


def program_to_json(program: RegularityProgram) -> dict:
    return {
        "outer_range": list(program.outer_range),
        "inner_range": list(program.inner_range),
        "conditions": [_expr_to_json(c) for c in program.conditions],
        "x_expr": _expr_to_json(program.x_expr),
        "y_expr": _expr_to_json(program.y_expr),
        "attribute": attribute_to_json(program.attribute),
    }


def program_from_json(doc: dict) -> RegularityProgram:
    return RegularityProgram(
        outer_range=tuple(doc["outer_range"]),
        inner_range=tuple(doc["inner_range"]),
        conditions=tuple(_expr_from_json(c) for c in doc["conditions"]),
        x_expr=_expr_from_json(doc["x_expr"]),
        y_expr=_expr_from_json(doc["y_expr"]),
        attribute=attribute_from_json(doc["attribute"]),
    )


def save_program(program: RegularityProgram, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(unparse(program))


def load_program(path) -> RegularityProgram:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        return program_from_json(json.loads(text))
    return parse(text)
