"""Resolution of parsed queries against an elaborated network.

Names must refer to the network's clocks, discrete variables, constants or
the built-in ``time``; model constants are folded into the expression so the
engine never sees them.  Location atoms must name an existing instance and
location.
"""

from __future__ import annotations

from dataclasses import replace

from .errors import UnresolvedIdentifier
from .expr import Binary, Call, Expr, Index, Name, Num, Unary, fold
from .formulas import (
    Always,
    Atom,
    Eventually,
    FAnd,
    FNot,
    FOr,
    Formula,
    LocAtom,
    Until,
)
from .model import TIME, Network
from .queries import (
    CostBound,
    Bound,
    MonitorDistance,
    ProbCompare,
    ProbEstimate,
    ProbHypothesis,
    Query,
    Simulate,
    ValueEstimate,
)


def resolve_expr(e: Expr, network: Network) -> Expr:
    consts = dict(network.constants)
    known = set(network.clock_init)
    known.update(name for name, _ in network.discrete)
    known.add(TIME)

    def go(e: Expr) -> Expr:
        t = type(e)
        if t is Name:
            if e.ident in consts:
                return Num(consts[e.ident])
            if e.ident not in known:
                raise UnresolvedIdentifier(f"unknown identifier '{e.ident}'")
            return e
        if t is Index:
            folded = fold(go_index(e))
            if type(folded) is Num:
                return go(Name(f"{e.base}[{int(folded.value)}]"))
            raise UnresolvedIdentifier(f"array index on '{e.base}' must be constant")
        if t is Binary:
            return Binary(e.op, go(e.left), go(e.right))
        if t is Unary:
            return Unary(e.op, go(e.operand))
        if t is Call:
            return Call(e.func, tuple(go(a) for a in e.args))
        return e

    def go_index(e: Index) -> Expr:
        return go(e.index)

    return fold(go(e))


def resolve_formula(f: Formula, network: Network) -> Formula:
    t = type(f)
    if t is Atom:
        return Atom(resolve_expr(f.expr, network))
    if t is LocAtom:
        try:
            j = network.component_index(f.instance)
        except KeyError:
            raise UnresolvedIdentifier(f"unknown component '{f.instance}'") from None
        comp = network.components[j]
        if not any(loc.name == f.location for loc in comp.locations):
            raise UnresolvedIdentifier(
                f"component '{f.instance}' has no location '{f.location}'"
            )
        return f
    if t is FNot:
        return FNot(resolve_formula(f.operand, network))
    if t is FAnd:
        return FAnd(resolve_formula(f.left, network), resolve_formula(f.right, network))
    if t is FOr:
        return FOr(resolve_formula(f.left, network), resolve_formula(f.right, network))
    if t is Eventually:
        return Eventually(resolve_formula(f.operand, network))
    if t is Always:
        return Always(resolve_formula(f.operand, network))
    if t is Until:
        return Until(
            resolve_formula(f.left, network),
            resolve_formula(f.right, network),
            f.bound,
        )
    raise AssertionError(f"not a formula: {f!r}")


def resolve_bound(b: Bound, network: Network) -> Bound:
    if isinstance(b, CostBound):
        return CostBound(resolve_expr(b.clock, network), b.limit)
    return b


def resolve_query(q: Query, network: Network) -> Query:
    if isinstance(q, Simulate):
        return replace(
            q,
            bound=resolve_bound(q.bound, network),
            observables=tuple(resolve_expr(e, network) for e in q.observables),
        )
    if isinstance(q, (ProbEstimate, ProbHypothesis)):
        return replace(
            q,
            bound=resolve_bound(q.bound, network),
            formula=resolve_formula(q.formula, network),
        )
    if isinstance(q, ProbCompare):
        return replace(
            q,
            bound1=resolve_bound(q.bound1, network),
            formula1=resolve_formula(q.formula1, network),
            bound2=resolve_bound(q.bound2, network),
            formula2=resolve_formula(q.formula2, network),
        )
    if isinstance(q, ValueEstimate):
        return replace(
            q,
            bound=resolve_bound(q.bound, network),
            expr=resolve_expr(q.expr, network),
        )
    if isinstance(q, MonitorDistance):
        return replace(
            q,
            bound=resolve_bound(q.bound, network),
            formula=resolve_formula(q.formula, network),
        )
    raise AssertionError(f"not a query: {q!r}")
