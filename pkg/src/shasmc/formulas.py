"""Path formula trees: boolean state predicates under eventually/always and
time-bounded until.  Concrete syntax: ``<>``, ``[]``, ``U[<=b]``, ``&``, ``|``,
``!``, comparisons, and ``Component.Location`` atoms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .expr import Expr, pretty as expr_pretty


@dataclass(frozen=True)
class Atom:
    """Boolean-valued state expression (comparison or boolean combination)."""

    expr: Expr


@dataclass(frozen=True)
class LocAtom:
    """True when the named component instance is in the named location."""

    instance: str
    location: str


@dataclass(frozen=True)
class FNot:
    operand: "Formula"


@dataclass(frozen=True)
class FAnd:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class FOr:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Eventually:
    operand: "Formula"


@dataclass(frozen=True)
class Always:
    operand: "Formula"


@dataclass(frozen=True)
class Until:
    """``left U[<=bound] right`` with a finite, nonnegative time bound."""

    left: "Formula"
    right: "Formula"
    bound: float

    def __post_init__(self):
        if not (self.bound >= 0.0 and self.bound < float("inf")):
            raise ValueError(f"until bound must be finite and >= 0, got {self.bound}")


Formula = Union[Atom, LocAtom, FNot, FAnd, FOr, Eventually, Always, Until]

_PREC = {"or": 1, "and": 2, "until": 3, "not": 4}


def is_state_formula(f: Formula) -> bool:
    """True when ``f`` contains no temporal operator."""
    t = type(f)
    if t in (Atom, LocAtom):
        return True
    if t is FNot:
        return is_state_formula(f.operand)
    if t in (FAnd, FOr):
        return is_state_formula(f.left) and is_state_formula(f.right)
    return False


def atoms(f: Formula) -> list[Formula]:
    """All Atom/LocAtom leaves, in syntactic order."""
    t = type(f)
    if t in (Atom, LocAtom):
        return [f]
    if t is FNot:
        return atoms(f.operand)
    if t in (FAnd, FOr, Until):
        return atoms(f.left) + atoms(f.right)
    if t in (Eventually, Always):
        return atoms(f.operand)
    raise AssertionError(f"not a formula: {f!r}")


def pretty(f: Formula, parent_prec: int = 0) -> str:
    t = type(f)
    if t is Atom:
        return expr_pretty(f.expr, 4)  # comparisons need no parens at atom level
    if t is LocAtom:
        return f"{f.instance}.{f.location}"
    if t is FNot:
        return f"!{pretty(f.operand, _PREC['not'])}"
    if t is FAnd:
        s = f"{pretty(f.left, _PREC['and'])} & {pretty(f.right, _PREC['and'] + 1)}"
        return s if _PREC["and"] >= parent_prec else f"({s})"
    if t is FOr:
        s = f"{pretty(f.left, _PREC['or'])} | {pretty(f.right, _PREC['or'] + 1)}"
        return s if _PREC["or"] >= parent_prec else f"({s})"
    if t is Eventually:
        return f"<> {pretty(f.operand)}" if parent_prec == 0 else f"(<> {pretty(f.operand)})"
    if t is Always:
        return f"[] {pretty(f.operand)}" if parent_prec == 0 else f"([] {pretty(f.operand)})"
    if t is Until:
        b = f.bound
        bs = str(int(b)) if b == int(b) else repr(b)
        s = f"{pretty(f.left, _PREC['until'] + 1)} U[<={bs}] {pretty(f.right, _PREC['until'])}"
        return s if _PREC["until"] >= parent_prec else f"({s})"
    raise AssertionError(f"not a formula: {f!r}")
