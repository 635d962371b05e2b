"""
Expression language for basis functions and time signals.

Grammar (one variable ``t``):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | 't' | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := sin | cos | exp | ln

so ``^`` binds tighter than unary minus (-t^2 == -(t^2)) and is
right-associative, while the other binaries associate to the left.
Every node evaluates on scalars and on numpy arrays.
"""

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from utils.errors import DomainError, ExprSyntaxError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
}

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass(frozen=True)
class Token:
    kind: str      # number | name | op | eof
    text: str
    offset: int


def tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(source, pos)
        if match is None or match.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append(Token(kind, match.group(kind), start))
        pos = match.end()
    tokens.append(Token("eof", "", len(source)))
    return tokens


# ============================================================
# ----- AST -----
# ============================================================

def _check(value, what):
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite result in {what}")
    return value


@dataclass(frozen=True)
class Num:
    value: float

    def evaluate(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value)

    def to_source(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var:
    def evaluate(self, t):
        return np.asarray(t, dtype=float)

    def to_source(self):
        return "t"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"

    def evaluate(self, t):
        return -self.operand.evaluate(t)

    def to_source(self):
        return f"(-{self.operand.to_source()})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def evaluate(self, t):
        a = self.left.evaluate(t)
        b = self.right.evaluate(t)
        with np.errstate(all="ignore"):
            if self.op == "+":
                out = a + b
            elif self.op == "-":
                out = a - b
            elif self.op == "*":
                out = a * b
            elif self.op == "/":
                if np.any(np.asarray(b) == 0.0):
                    raise DomainError(f"division by zero in {self.to_source()}")
                out = a / b
            else:
                out = np.power(a, b)
        return _check(out, self.to_source())

    def to_source(self):
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"

    def evaluate(self, t):
        x = self.arg.evaluate(t)
        if self.func == "ln" and np.any(np.asarray(x) <= 0.0):
            raise DomainError(f"ln of non-positive argument in {self.to_source()}")
        with np.errstate(all="ignore"):
            out = FUNCTIONS[self.func](x)
        return _check(out, self.to_source())

    def to_source(self):
        return f"{self.func}({self.arg.to_source()})"


Expr = Union[Num, Var, Neg, BinOp, Call]


# ============================================================
# ----- RECURSIVE DESCENT PARSER -----
# ============================================================

class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str):
        tok = self.current
        if tok.kind != "op" or tok.text != text:
            raise ExprSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.offset)
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        if self.current.kind != "eof":
            raise ExprSyntaxError(f"expected operator or end of input, found {self.current.text!r}", self.current.offset)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.current.kind == "op" and self.current.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.current.kind == "op" and self.current.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.current
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if tok.text == "t":
                return Var()
            if tok.text not in FUNCTIONS:
                raise ExprSyntaxError(f"unknown identifier {tok.text!r}, expected t or one of {sorted(FUNCTIONS)}", tok.offset)
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(tok.text, arg)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"expected number, 't', function or '(', found {found!r}", tok.offset)


def parse_expr(source: str) -> Expr:
    if not isinstance(source, str):
        # numeric literals in problem files are accepted as constants
        return Num(float(source))
    return _Parser(source).parse()


def eval_expr(e: Expr, t: float) -> float:
    return float(e.evaluate(float(t)))


def eval_array(e: Expr, ts) -> np.ndarray:
    ts = np.asarray(ts, dtype=float)
    return np.broadcast_to(e.evaluate(ts), ts.shape).astype(float)


def pretty(e: Expr) -> str:
    return e.to_source()
