"""Path-formula evaluation over completed runs.

Verdicts over a recorded trace are computed exactly for the piecewise-linear
interpolation of the sampled observables: every comparison is reduced to a
signed margin whose zero crossings are located by inverse interpolation, the
truth of each subformula becomes a set of closed time intervals, and the
temporal operators act on those sets.  Duplicate timestamps (pre/post rows
of a discrete jump) give zero-length segments and need no special casing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import ModelError, UnknownAtom
from .expr import Binary, Bool, Expr, Num, eval_expr, identifiers, pretty
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

Interval = tuple[float, float]
IntervalSet = list[Interval]


@dataclass(frozen=True)
class Verdict:
    status: str  # 'satisfied' | 'violated' | 'inconclusive'
    at: Optional[float] = None

    @property
    def satisfied(self) -> bool:
        return self.status == "satisfied"


@dataclass(frozen=True)
class PeakPattern:
    """Rise of ``expr`` above ``hi`` confirmed by a drop below ``lo`` within
    ``window`` time units."""

    expr: Expr
    hi: float
    lo: float
    window: float


class PeakTracker:
    """Online two-threshold peak detector over a piecewise-linear signal.

    Gaps are distances between consecutive confirmed peak times, reported
    raw (false positives from noisy signals are not filtered out).
    """

    def __init__(self, hi: float, lo: float, window: float):
        self.hi, self.lo, self.window = hi, lo, window
        self.prev_t: Optional[float] = None
        self.prev_v = 0.0
        self.armed = True
        self.pending: Optional[float] = None
        self.last_peak: Optional[float] = None
        self.gaps: list[float] = []

    def feed(self, t: float, v: float):
        if self.prev_t is None:
            self.prev_t, self.prev_v = t, v
            if v > self.hi:
                self.pending, self.armed = t, False
            return
        pt, pv = self.prev_t, self.prev_v
        if self.armed and v > self.hi >= pv:
            frac = 0.0 if v == pv or t == pt else (self.hi - pv) / (v - pv)
            self.pending = pt + frac * (t - pt)
            self.armed = False
        elif not self.armed and v <= self.lo:
            frac = (
                0.0
                if v == pv or t == pt or pv <= self.lo
                else (pv - self.lo) / (pv - v)
            )
            t_lo = pt + frac * (t - pt)
            if self.pending is not None and t_lo - self.pending <= self.window:
                if self.last_peak is not None:
                    self.gaps.append(self.pending - self.last_peak)
                self.last_peak = self.pending
            self.pending = None
            self.armed = True
        self.prev_t, self.prev_v = t, v


def formula_loc_atoms(f: Optional[Formula]) -> list[LocAtom]:
    if f is None:
        return []
    t = type(f)
    if t is LocAtom:
        return [f]
    if t is Atom:
        return []
    if t is FNot:
        return formula_loc_atoms(f.operand)
    if t in (FAnd, FOr, Until):
        return formula_loc_atoms(f.left) + formula_loc_atoms(f.right)
    if t in (Eventually, Always):
        return formula_loc_atoms(f.operand)
    raise ModelError(f"not a formula: {f!r}")


# -- interval algebra ----------------------------------------------------------


def _merge(iv: IntervalSet) -> IntervalSet:
    if not iv:
        return []
    iv = sorted(iv)
    out = [iv[0]]
    for a, b in iv[1:]:
        la, lb = out[-1]
        if a <= lb:
            if b > lb:
                out[-1] = (la, b)
        else:
            out.append((a, b))
    return out


def _union(x: IntervalSet, y: IntervalSet) -> IntervalSet:
    return _merge(x + y)


def _intersect(x: IntervalSet, y: IntervalSet) -> IntervalSet:
    out = []
    i = j = 0
    while i < len(x) and j < len(y):
        a = max(x[i][0], y[j][0])
        b = min(x[i][1], y[j][1])
        if a <= b:
            out.append((a, b))
        if x[i][1] < y[j][1]:
            i += 1
        else:
            j += 1
    return out


def _complement(x: IntervalSet, horizon: float) -> IntervalSet:
    out = []
    cur = 0.0
    for a, b in x:
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < horizon:
        out.append((cur, horizon))
    return out


def _contains(x: IntervalSet, t: float) -> bool:
    return any(a <= t <= b for a, b in x)


# -- trace access ---------------------------------------------------------------


class _Trace:
    def __init__(self, run):
        self.times: list[float] = run.times
        self.columns: dict[str, list[float]] = run.columns
        self.horizon = self.times[-1] if self.times else 0.0
        self._series_cache: dict[str, list[float]] = {}

    def series(self, e: Expr) -> list[float]:
        key = pretty(e)
        hit = self._series_cache.get(key)
        if hit is not None:
            return hit
        col = self.columns.get(key)
        if col is None:
            missing = [
                n for n in identifiers(e) if n not in self.columns and n != "time"
            ]
            if missing:
                raise UnknownAtom(
                    f"formula needs unobserved expression(s): {', '.join(sorted(missing))}"
                )
            col = []
            names = list(identifiers(e))
            for k, t in enumerate(self.times):
                env = {n: self.columns[n][k] for n in names if n != "time"}
                env["time"] = t
                col.append(float(eval_expr(e, env)))
        self._series_cache[key] = col
        return col

    def margin_intervals(self, margin: Expr) -> IntervalSet:
        """Closed intervals where the margin is >= 0, with crossings located
        by linear inverse interpolation inside each sample segment."""
        vals = self.series(margin)
        times = self.times
        out: IntervalSet = []
        start: Optional[float] = None
        for k in range(len(times)):
            v = vals[k]
            t = times[k]
            if k > 0:
                pv, ptv = vals[k - 1], times[k - 1]
                if (pv >= 0.0) != (v >= 0.0) and t > ptv:
                    tau = ptv + (t - ptv) * (pv / (pv - v))
                    if v >= 0.0:
                        start = tau
                    else:
                        out.append((start if start is not None else ptv, tau))
                        start = None
            if v >= 0.0 and start is None:
                start = t
            elif v < 0.0 and start is not None:
                # jump (duplicate timestamp) straight into falsehood
                out.append((start, t))
                start = None
        if start is not None:
            out.append((start, times[-1] if times else start))
        return _merge(out)

    def step_intervals(self, name: str) -> IntervalSet:
        col = self.columns.get(name)
        if col is None:
            raise UnknownAtom(f"run records no column '{name}'")
        out: IntervalSet = []
        for k in range(len(self.times) - 1):
            if col[k] != 0.0:
                out.append((self.times[k], self.times[k + 1]))
        if col and col[-1] != 0.0:
            out.append((self.times[-1], self.times[-1]))
        return _merge(out)


def _comparison_margin(e: Expr) -> Optional[Expr]:
    if type(e) is Binary and e.op in ("<", "<="):
        return Binary("-", e.right, e.left)
    if type(e) is Binary and e.op in (">", ">="):
        return Binary("-", e.left, e.right)
    return None


def _truth(f: Formula, tr: _Trace) -> IntervalSet:
    H = tr.horizon
    t = type(f)
    if t is Atom:
        e = f.expr
        if type(e) is Bool:
            return [(0.0, H)] if e.value else []
        m = _comparison_margin(e)
        if m is not None:
            return tr.margin_intervals(m)
        if type(e) is Binary and e.op in ("==", "!="):
            eq = tr.margin_intervals(Binary("-", e.left, e.right))
            ge = tr.margin_intervals(Binary("-", e.right, e.left))
            both = _intersect(eq, ge)
            return both if e.op == "==" else _complement(both, H)
        if type(e) is Binary and e.op in ("and", "or"):
            lf, rf = Atom(e.left), Atom(e.right)
            sub = FAnd(lf, rf) if e.op == "and" else FOr(lf, rf)
            return _truth(sub, tr)
        # boolean-valued expression without comparison: sample-wise steps
        vals = tr.series(e)
        out = [
            (tr.times[k], tr.times[min(k + 1, len(tr.times) - 1)])
            for k in range(len(tr.times))
            if vals[k]
        ]
        return _merge(out)
    if t is LocAtom:
        return tr.step_intervals(f"{f.instance}.{f.location}")
    if t is FNot:
        return _complement(_truth(f.operand, tr), H)
    if t is FAnd:
        return _intersect(_truth(f.left, tr), _truth(f.right, tr))
    if t is FOr:
        return _union(_truth(f.left, tr), _truth(f.right, tr))
    if t is Eventually:
        inner = _truth(f.operand, tr)
        return [(0.0, inner[-1][1])] if inner else []
    if t is Always:
        holes = _complement(_truth(f.operand, tr), H)
        if not holes:
            return [(0.0, H)]
        last = holes[-1][1]
        return [(last, H)] if last < H else []
    if t is Until:
        phi = _truth(f.left, tr)
        psi = _truth(f.right, tr)
        out: IntervalSet = []
        for a, c in psi:
            lo = a
            for p, q in phi:
                if p <= a <= q:
                    lo = max(p, a - f.bound)
                    break
            else:
                lo = a
            out.append((lo, c))
        return _merge(out)
    raise ModelError(f"not a formula: {f!r}")


def check(f: Formula, run) -> Verdict:
    """Evaluate a path formula over a completed run.

    The trace is interpreted piecewise-linearly between samples; crossings of
    comparison atoms are located by inverse interpolation, so verdict times
    are exact for affine atoms.
    """
    tr = _Trace(run)
    tset = _truth(f, tr)
    aborted = getattr(run, "reason", "bound") == "zeno-abort"
    if _contains(tset, 0.0):
        return Verdict("satisfied", _witness(f, tr))
    if type(f) is Always:
        holes = _complement(_truth(f.operand, tr), tr.horizon)
        at = holes[0][0] if holes else 0.0
        return Verdict("violated", at)
    if aborted or type(f) is Eventually:
        return Verdict("inconclusive", tr.horizon)
    if type(f) is Until and tr.horizon < f.bound:
        return Verdict("inconclusive", tr.horizon)
    return Verdict("violated", 0.0)


def _witness(f: Formula, tr: _Trace) -> float:
    if type(f) is Eventually:
        inner = _truth(f.operand, tr)
        return inner[0][0] if inner else 0.0
    if type(f) is Always:
        return tr.horizon
    if type(f) is Until:
        psi = _truth(f.right, tr)
        for a, _c in psi:
            if a <= f.bound:
                return max(a, 0.0)
        return 0.0
    return 0.0


# -- peak distances --------------------------------------------------------------


def peak_pattern(f: Formula) -> PeakPattern:
    """Match the two-threshold peak formula
    ``true U[<=B] (expr > hi & true U[<=w] expr <= lo)``."""

    def unwrap_true(g: Formula) -> bool:
        return type(g) is Atom and type(g.expr) is Bool and g.expr.value

    if type(f) is not Until or not unwrap_true(f.left):
        raise ModelError("not a peak-distance formula (outer bounded until)")
    body = f.right
    if type(body) is not FAnd:
        raise ModelError("not a peak-distance formula (conjunction expected)")
    hi_atom, inner = body.left, body.right
    if type(inner) is not Until or not unwrap_true(inner.left):
        raise ModelError("not a peak-distance formula (inner bounded until)")
    lo_atom = inner.right
    if type(hi_atom) is not Atom or type(lo_atom) is not Atom:
        raise ModelError("not a peak-distance formula (threshold atoms expected)")
    hi_cmp, lo_cmp = hi_atom.expr, lo_atom.expr
    if not (type(hi_cmp) is Binary and hi_cmp.op in (">", ">=") and type(hi_cmp.right) is Num):
        raise ModelError("peak pattern needs 'expr > hi'")
    if not (type(lo_cmp) is Binary and lo_cmp.op in ("<", "<=") and type(lo_cmp.right) is Num):
        raise ModelError("peak pattern needs 'expr <= lo'")
    if hi_cmp.left != lo_cmp.left:
        raise ModelError("peak pattern thresholds must constrain the same expression")
    return PeakPattern(
        expr=hi_cmp.left,
        hi=hi_cmp.right.value,
        lo=lo_cmp.right.value,
        window=inner.bound,
    )


def peak_distance(f: Formula, run) -> list[float]:
    """Gaps between consecutive detected peaks of the two-threshold pattern;
    empty when fewer than two peaks are found."""
    pat = peak_pattern(f)
    tr = _Trace(run)
    vals = tr.series(pat.expr)
    tracker = PeakTracker(pat.hi, pat.lo, pat.window)
    for t, v in zip(tr.times, vals):
        tracker.feed(t, v)
    return tracker.gaps
