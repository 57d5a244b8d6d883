"""Expression trees and their evaluation.

Expressions cover arithmetic over reals, comparisons, boolean connectives,
references to declared variables/clocks and the built-in functions
``sin cos log exp sqrt`` plus ``random(b)`` (uniform draw from [0, b),
legal only inside updates).  Evaluation is strict left-to-right; two
evaluations of a random-free expression in the same state agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

from .errors import DomainError

Value = Union[float, bool]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Index:
    base: str
    index: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or 'not'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / < <= > >= == != and or
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Bool, Name, Index, Call, Unary, Binary]

BUILTIN_FUNCS = ("sin", "cos", "log", "exp", "sqrt", "random")

COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")
BOOL_OPS = ("and", "or")


def checked_log(v: float) -> float:
    if v <= 0.0:
        raise DomainError(f"log of non-positive value {v!r}")
    return math.log(v)


def checked_sqrt(v: float) -> float:
    if v < 0.0:
        raise DomainError(f"sqrt of negative value {v!r}")
    return math.sqrt(v)


# Shared by the tree-walk evaluator and the compiled code so both paths
# produce identical floats.
EVAL_FUNCS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": checked_log,
    "sqrt": checked_sqrt,
}


def eval_expr(e: Expr, env: Mapping[str, float], rng=None) -> Value:
    """Evaluate ``e`` against a name -> value environment.

    ``rng`` supplies ``random(b)`` draws; evaluating ``random`` without an
    rng is an error (it only appears in update context, where one is given).
    """
    if type(e) is Num:
        return e.value
    if type(e) is Bool:
        return e.value
    if type(e) is Name:
        try:
            return env[e.ident]
        except KeyError:
            raise DomainError(f"unbound identifier '{e.ident}'") from None
    if type(e) is Index:
        idx = eval_expr(e.index, env, rng)
        key = f"{e.base}[{_as_index(idx)}]"
        try:
            return env[key]
        except KeyError:
            raise DomainError(f"index out of range: {key}") from None
    if type(e) is Binary:
        op = e.op
        if op == "and":
            return bool(eval_expr(e.left, env, rng)) and bool(eval_expr(e.right, env, rng))
        if op == "or":
            return bool(eval_expr(e.left, env, rng)) or bool(eval_expr(e.right, env, rng))
        lv = eval_expr(e.left, env, rng)
        rv = eval_expr(e.right, env, rng)
        if op == "+":
            return lv + rv
        if op == "-":
            return lv - rv
        if op == "*":
            return lv * rv
        if op == "/":
            if rv == 0:
                raise DomainError("division by zero")
            return lv / rv
        if op == "<":
            return lv < rv
        if op == "<=":
            return lv <= rv
        if op == ">":
            return lv > rv
        if op == ">=":
            return lv >= rv
        if op == "==":
            return lv == rv
        if op == "!=":
            return lv != rv
        raise AssertionError(f"unknown operator {op!r}")
    if type(e) is Unary:
        v = eval_expr(e.operand, env, rng)
        return (not v) if e.op == "not" else -v
    if type(e) is Call:
        if e.func == "random":
            if rng is None:
                raise DomainError("random() evaluated outside update context")
            bound = eval_expr(e.args[0], env, rng)
            return rng.random() * bound
        fn = EVAL_FUNCS[e.func]
        return fn(eval_expr(e.args[0], env, rng))
    raise AssertionError(f"not an expression: {e!r}")


def _as_index(v: Value) -> int:
    i = int(v)
    if i != v:
        raise DomainError(f"array index {v!r} is not an integer")
    return i


# -- structural helpers ------------------------------------------------------

def children(e: Expr) -> Iterator[Expr]:
    if type(e) is Binary:
        yield e.left
        yield e.right
    elif type(e) is Unary:
        yield e.operand
    elif type(e) is Call:
        yield from e.args
    elif type(e) is Index:
        yield e.index


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from walk(c)


def identifiers(e: Expr) -> set[str]:
    """All names referenced, with array elements as their base name."""
    out = set()
    for node in walk(e):
        if type(node) is Name:
            out.add(node.ident)
        elif type(node) is Index:
            out.add(node.base)
    return out


def contains_random(e: Expr) -> bool:
    return any(type(n) is Call and n.func == "random" for n in walk(e))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace ``Name`` nodes by expressions; folds constant array indices.

    Used for template parameter instantiation and function inlining, so a
    substituted ``T[id]`` with ``id -> Num(0)`` becomes ``Name("T[0]")``.
    """
    t = type(e)
    if t is Name:
        return mapping.get(e.ident, e)
    if t is Index:
        idx = substitute(e.index, mapping)
        folded = fold(idx)
        if type(folded) is Num:
            key = f"{e.base}[{_as_index(folded.value)}]"
            return mapping.get(key, Name(key))
        return Index(e.base, idx)
    if t is Binary:
        return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if t is Unary:
        return Unary(e.op, substitute(e.operand, mapping))
    if t is Call:
        return Call(e.func, tuple(substitute(a, mapping) for a in e.args))
    return e


def fold(e: Expr) -> Expr:
    """Constant-fold arithmetic subtrees (no boolean short-circuit folding)."""
    t = type(e)
    if t is Binary:
        left, right = fold(e.left), fold(e.right)
        if type(left) is Num and type(right) is Num and e.op in ("+", "-", "*", "/"):
            return Num(eval_expr(Binary(e.op, left, right), {}))
        return Binary(e.op, left, right)
    if t is Unary:
        operand = fold(e.operand)
        if e.op == "-" and type(operand) is Num:
            return Num(-operand.value)
        return Unary(e.op, operand)
    if t is Call:
        return Call(e.func, tuple(fold(a) for a in e.args))
    if t is Index:
        return Index(e.base, fold(e.index))
    return e


# -- pretty printing ---------------------------------------------------------

_PREC = {
    "or": 1,
    "and": 2,
    "<": 4, "<=": 4, ">": 4, ">=": 4, "==": 4, "!=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
}
_UNARY_PREC = {"not": 3, "-": 7}


def pretty(e: Expr, parent_prec: int = 0) -> str:
    """Render with minimal parentheses; ``parse(pretty(e))`` returns ``e``."""
    t = type(e)
    if t is Num:
        v = e.value
        if v == int(v) and abs(v) < 1e15:
            s = str(int(v))
        else:
            s = repr(v)
        return s if v >= 0 or parent_prec < 7 else f"({s})"
    if t is Bool:
        return "true" if e.value else "false"
    if t is Name:
        return e.ident
    if t is Index:
        return f"{e.base}[{pretty(e.index)}]"
    if t is Call:
        return f"{e.func}({', '.join(pretty(a) for a in e.args)})"
    if t is Unary:
        prec = _UNARY_PREC[e.op]
        inner = pretty(e.operand, prec)
        s = f"!{inner}" if e.op == "not" else f"-{inner}"
        return s if prec >= parent_prec else f"({s})"
    if t is Binary:
        prec = _PREC[e.op]
        op = {"and": "&&", "or": "||"}.get(e.op, e.op)
        # left-assoc chain: right child needs one level more
        s = f"{pretty(e.left, prec)} {op} {pretty(e.right, prec + 1)}"
        return s if prec >= parent_prec else f"({s})"
    raise AssertionError(f"not an expression: {e!r}")
