"""Query ASTs: simulate, probability estimation, hypothesis tests,
probability comparison, expected-extremum estimation and peak-distance
measurement, each over a bounded run."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .expr import Expr, pretty as expr_pretty
from .formulas import Formula, pretty as formula_pretty

# Query defaults, applied when the text leaves them out.
DEFAULT_EPS = 0.05
DEFAULT_ALPHA = 0.05
DEFAULT_DELTA = 0.01


@dataclass(frozen=True)
class TimeBound:
    limit: float


@dataclass(frozen=True)
class StepBound:
    limit: int


@dataclass(frozen=True)
class CostBound:
    clock: Expr
    limit: float


Bound = Union[TimeBound, StepBound, CostBound]


@dataclass(frozen=True)
class Simulate:
    count: int
    bound: Bound
    observables: tuple[Expr, ...]


@dataclass(frozen=True)
class ProbEstimate:
    bound: Bound
    formula: Formula
    eps: float = DEFAULT_EPS
    alpha: float = DEFAULT_ALPHA


@dataclass(frozen=True)
class ProbHypothesis:
    bound: Bound
    formula: Formula
    relation: str  # '>=' or '<='
    theta: float
    delta: float = DEFAULT_DELTA
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_ALPHA


@dataclass(frozen=True)
class ProbCompare:
    bound1: Bound
    formula1: Formula
    bound2: Bound
    formula2: Formula
    delta: float = DEFAULT_DELTA
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_ALPHA


@dataclass(frozen=True)
class ValueEstimate:
    bound: Bound
    runs: int
    extremum: str  # 'min' or 'max'
    expr: Expr


@dataclass(frozen=True)
class MonitorDistance:
    """Distances between detected signal peaks, measured by auxiliary clock."""

    bound: Bound
    runs: int
    formula: Formula  # must match the two-threshold peak pattern


Query = Union[Simulate, ProbEstimate, ProbHypothesis, ProbCompare, ValueEstimate, MonitorDistance]


def _bound_str(b: Bound) -> str:
    if isinstance(b, TimeBound):
        return f"[<={_num(b.limit)}]"
    if isinstance(b, StepBound):
        return f"[#<={b.limit}]"
    return f"[{expr_pretty(b.clock)}<={_num(b.limit)}]"


def _num(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(v)


def pretty(q: Query) -> str:
    if isinstance(q, Simulate):
        obs = ", ".join(expr_pretty(e) for e in q.observables)
        return f"simulate {q.count} {_bound_str(q.bound)} {{{obs}}}"
    if isinstance(q, ProbEstimate):
        return f"Pr{_bound_str(q.bound)}({formula_pretty(q.formula)})"
    if isinstance(q, ProbHypothesis):
        return (
            f"Pr{_bound_str(q.bound)}({formula_pretty(q.formula)})"
            f" {q.relation} {q.theta!r}"
        )
    if isinstance(q, ProbCompare):
        return (
            f"Pr{_bound_str(q.bound1)}({formula_pretty(q.formula1)}) >= "
            f"Pr{_bound_str(q.bound2)}({formula_pretty(q.formula2)})"
        )
    if isinstance(q, ValueEstimate):
        return f"E{_bound_str(q.bound)[:-1]}; {q.runs}]({q.extremum}: {expr_pretty(q.expr)})"
    if isinstance(q, MonitorDistance):
        return f"distance{_bound_str(q.bound)[:-1]}; {q.runs}]({formula_pretty(q.formula)})"
    raise AssertionError(f"not a query: {q!r}")
