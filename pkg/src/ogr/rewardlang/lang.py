"""Reward programs: a line-oriented weighted-term expression language.

Grammar::

    program  := (line NEWLINE)*
    line     := "term" NAME "weight" REAL "=" expr  |  comment  |  blank
    expr     := "if" expr "then" expr "else" expr  |  compare
    compare  := sum (("<" | "<=" | ">" | ">=" | "==" | "!=") sum)?
    sum      := product (("+" | "-") product)*
    product  := unary (("*" | "/") unary)*
    unary    := "-" unary  |  atom
    atom     := REAL | NAME | FUNC "(" expr ("," expr)* ")" | "(" expr ")"
    FUNC     := min | max | abs | exp | tanh | clip

Comparisons yield 1.0 or 0.0; ``if`` treats any non-zero condition as true.
Evaluation saturates: division by zero gives 0, ``exp`` clamps its argument,
and every intermediate is held within +-SATURATION so totals stay finite.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

MAX_DEPTH = 32
MAX_TERMS = 32
MAX_SOURCE = 64_000
SATURATION = 1e12
EXP_ARG_MAX = 50.0

FUNCS = {"min": (2, None), "max": (2, None), "abs": (1, 1), "exp": (1, 1), "tanh": (1, 1), "clip": (3, 3)}
KEYWORDS = {"term", "weight", "if", "then", "else"} | set(FUNCS)
CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.message, self.line, self.col = message, line, col


class LimitError(ParseError):
    pass


class MissingVariable(KeyError):
    pass


# --- expression tree ---------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"
    other: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call, If]


@dataclass(frozen=True)
class Term:
    name: str
    weight: float
    expr: Expr


@dataclass(frozen=True)
class RewardProgram:
    terms: tuple[Term, ...]

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.terms:
            out |= variables(t.expr)
        return out

    def __str__(self) -> str:
        return print_program(self)


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        return set().union(*(variables(a) for a in e.args))
    return variables(e.cond) | variables(e.then) | variables(e.other)


def depth(e: Expr) -> int:
    if isinstance(e, (Num, Var)):
        return 1
    if isinstance(e, Neg):
        return 1 + depth(e.arg)
    if isinstance(e, BinOp):
        return 1 + max(depth(e.left), depth(e.right))
    if isinstance(e, Call):
        return 1 + max(depth(a) for a in e.args)
    return 1 + max(depth(e.cond), depth(e.then), depth(e.other))


# --- printing ----------------------------------------------------------------


def fmt_num(x: float) -> str:
    return repr(float(x))


def print_expr(e: Expr) -> str:
    """Canonical, fully parenthesized form."""
    if isinstance(e, Num):
        if math.copysign(1.0, e.value) < 0:
            return f"(-{fmt_num(-e.value)})"
        return fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{print_expr(e.arg)})"
    if isinstance(e, BinOp):
        return f"({print_expr(e.left)} {e.op} {print_expr(e.right)})"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(print_expr(a) for a in e.args)})"
    return f"(if {print_expr(e.cond)} then {print_expr(e.then)} else {print_expr(e.other)})"


def print_program(p: RewardProgram) -> str:
    return "".join(f"term {t.name} weight {fmt_num(t.weight)} = {print_expr(t.expr)}\n" for t in p.terms)


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|==|!=|[-+*/(),=<>]))"
)


class _Parser:
    def __init__(self, line: str, lineno: int):
        self.lineno = lineno
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        text = line.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                col = len(text) - len(text[pos:].lstrip()) + 1
                raise ParseError(f"unexpected character {text[col - 1]!r}", lineno, col)
            kind = m.lastgroup
            col = m.start(kind) + 1
            self.toks.append((kind, m.group(kind), col))
            pos = m.end()
        self.i = 0
        self.end_col = len(text) + 1

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", self.end_col)

    def fail(self, msg: str):
        raise ParseError(msg, self.lineno, self.peek()[2])

    def take(self, kind=None, value=None):
        tok = self.peek()
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            self.fail(f"expected {want!r}, found {tok[1] or 'end of line'!r}")
        self.i += 1
        return tok

    def number(self) -> float:
        sign = 1.0
        if self.peek()[:2] == ("op", "-"):
            self.i += 1
            sign = -1.0
        elif self.peek()[:2] == ("op", "+"):
            self.i += 1
        if self.peek()[0] != "num":
            self.fail("expected a real number")
        v = sign * float(self.take("num")[1])
        if not math.isfinite(v):
            self.fail("number out of range")
        return v

    def term(self) -> Term:
        self.take("name", "term")
        tok = self.peek()
        if tok[0] != "name" or tok[1] in KEYWORDS:
            self.fail("expected a term name")
        name = self.take()[1]
        self.take("name", "weight")
        weight = self.number()
        self.take("op", "=")
        expr = self.expr(1)
        if self.peek()[0] != "eof":
            self.fail(f"unexpected {self.peek()[1]!r}")
        if depth(expr) > MAX_DEPTH:
            raise LimitError(f"expression deeper than {MAX_DEPTH}", self.lineno, 1)
        return Term(name, weight, expr)

    def _guard(self, d: int):
        # grammar nesting bound; the tree-depth cap is checked after parsing
        if d > 6 * MAX_DEPTH:
            raise LimitError(f"expression deeper than {MAX_DEPTH}", self.lineno, self.peek()[2])

    def expr(self, d: int) -> Expr:
        self._guard(d)
        if self.peek()[:2] == ("name", "if"):
            self.i += 1
            c = self.expr(d + 1)
            self.take("name", "then")
            t = self.expr(d + 1)
            self.take("name", "else")
            return If(c, t, self.expr(d + 1))
        left = self.sum(d)
        tok = self.peek()
        if tok[0] == "op" and tok[1] in CMP_OPS:
            self.i += 1
            return BinOp(tok[1], left, self.sum(d + 1))
        return left

    def sum(self, d: int) -> Expr:
        self._guard(d)
        left = self.product(d + 1)
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            left = BinOp(op, left, self.product(d + 1))
        return left

    def product(self, d: int) -> Expr:
        self._guard(d)
        left = self.unary(d + 1)
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            left = BinOp(op, left, self.unary(d + 1))
        return left

    def unary(self, d: int) -> Expr:
        self._guard(d)
        if self.peek()[:2] == ("op", "-"):
            self.i += 1
            return Neg(self.unary(d + 1))
        return self.atom(d + 1)

    def atom(self, d: int) -> Expr:
        self._guard(d)
        kind, val, _ = self.peek()
        if kind == "num":
            self.i += 1
            v = float(val)
            if not math.isfinite(v):
                self.fail("number out of range")
            return Num(v)
        if kind == "op" and val == "(":
            self.i += 1
            e = self.expr(d + 1)
            self.take("op", ")")
            return e
        if kind == "name":
            if val in FUNCS:
                self.i += 1
                self.take("op", "(")
                args = [self.expr(d + 1)]
                while self.peek()[:2] == ("op", ","):
                    self.i += 1
                    args.append(self.expr(d + 1))
                self.take("op", ")")
                lo, hi = FUNCS[val]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    self.fail(f"{val} takes {lo if lo == hi else f'at least {lo}'} arguments, got {len(args)}")
                return Call(val, tuple(args))
            if val in KEYWORDS:
                self.fail(f"unexpected keyword {val!r}")
            self.i += 1
            return Var(val)
        self.fail(f"unexpected {val or 'end of line'!r}")


def parse_program(text: str) -> RewardProgram:
    if not text or not text.strip():
        raise ParseError("empty reward program", 1, 1)
    if len(text) > MAX_SOURCE:
        raise LimitError(f"source longer than {MAX_SOURCE} characters", 1, 1)
    terms, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        p = _Parser(body, lineno)
        t = p.term()
        if t.name in seen:
            raise ParseError(f"duplicate term {t.name!r}", lineno, 1)
        seen.add(t.name)
        terms.append(t)
        if len(terms) > MAX_TERMS:
            raise LimitError(f"more than {MAX_TERMS} terms", lineno, 1)
    if not terms:
        raise ParseError("reward program has no terms", 1, 1)
    return RewardProgram(tuple(terms))


# --- evaluation ----------------------------------------------------------------


def _sat(x: float) -> float:
    if x != x:
        return 0.0
    return SATURATION if x > SATURATION else (-SATURATION if x < -SATURATION else x)


def _div(a: float, b: float) -> float:
    return 0.0 if b == 0.0 else _sat(a / b)


_BIN: dict[str, Callable[[float, float], float]] = {
    "+": lambda a, b: _sat(a + b),
    "-": lambda a, b: _sat(a - b),
    "*": lambda a, b: _sat(a * b),
    "/": _div,
    "<": lambda a, b: float(a < b),
    "<=": lambda a, b: float(a <= b),
    ">": lambda a, b: float(a > b),
    ">=": lambda a, b: float(a >= b),
    "==": lambda a, b: float(a == b),
    "!=": lambda a, b: float(a != b),
}


def _clip(x, lo, hi):
    if lo > hi:
        lo, hi = hi, lo
    return min(max(x, lo), hi)


_FN = {
    "min": lambda *a: min(a),
    "max": lambda *a: max(a),
    "abs": abs,
    "exp": lambda x: _sat(math.exp(min(max(x, -EXP_ARG_MAX), EXP_ARG_MAX))),
    "tanh": math.tanh,
    "clip": _clip,
}


def compile_expr(e: Expr) -> Callable[[dict], float]:
    """Closure evaluating ``e`` against a variable mapping."""
    if isinstance(e, Num):
        v = _sat(e.value)
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def lookup(env):
            try:
                return _sat(env[name])
            except KeyError:
                raise MissingVariable(name) from None
        return lookup
    if isinstance(e, Neg):
        f = compile_expr(e.arg)
        return lambda env: -f(env)
    if isinstance(e, BinOp):
        op, f, g = _BIN[e.op], compile_expr(e.left), compile_expr(e.right)
        return lambda env: op(f(env), g(env))
    if isinstance(e, Call):
        fn, fs = _FN[e.fn], [compile_expr(a) for a in e.args]
        return lambda env: fn(*(f(env) for f in fs))
    c, t, o = compile_expr(e.cond), compile_expr(e.then), compile_expr(e.other)
    return lambda env: t(env) if c(env) != 0.0 else o(env)


class CompiledProgram:
    """A program bound to a fixed set of suspended terms, ready for per-step use."""

    def __init__(self, program: RewardProgram, suspended=frozenset()):
        self.program = program
        self.suspended = frozenset(suspended)
        self._terms = [
            (t.name, t.weight, None if t.name in self.suspended else compile_expr(t.expr))
            for t in program.terms
        ]

    def __call__(self, env: dict) -> tuple[float, dict[str, float]]:
        total, parts = 0.0, {}
        for name, w, f in self._terms:
            v = 0.0 if f is None else _sat(w * f(env))
            parts[name] = v
            total += v
        return _sat(total), parts


def evaluate(p: RewardProgram, env: dict, suspended=frozenset()) -> tuple[float, dict[str, float]]:
    """Weighted sum over evaluable terms with a per-term breakdown."""
    return CompiledProgram(p, suspended)(env)
