"""Compilation of an elaborated network into fast runtime form.

State lives in a flat list of floats (clocks, then discrete variables, then
elapsed time).  Every expression is translated to Python source over that
list and compiled once; for each network mode (vector of current locations)
a single stepper function is generated that performs fixed-step integration
inline and returns as soon as any watched sign changes, so the per-step cost
stays at a handful of bytecode operations regardless of model size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import ModelError, NonFinite
from .expr import (
    Binary,
    Bool,
    Call,
    Expr,
    Name,
    Num,
    Unary,
    checked_log,
    checked_sqrt,
    identifiers,
)
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

_EXEC_GLOBALS = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_log": checked_log,
    "_sqrt": checked_sqrt,
    "_NonFinite": NonFinite,
}


class SlotMap:
    """Flat indexing of the network state: clocks, discrete vars, time."""

    def __init__(self, network: Network):
        self.clock_names: list[str] = list(network.clock_init)
        self.discrete_names: list[str] = [n for n, _ in network.discrete]
        self.names: list[str] = self.clock_names + self.discrete_names + [TIME]
        self.index: dict[str, int] = {n: i for i, n in enumerate(self.names)}
        self.n_clocks = len(self.clock_names)
        self.time_slot = len(self.names) - 1
        self.int_slots = frozenset(
            self.index[n] for n in network.int_vars if n in self.index
        )

    def initial(self, network: Network) -> list[float]:
        sv = [0.0] * len(self.names)
        for n, v in network.clock_init.items():
            sv[self.index[n]] = v
        for n, v in network.discrete:
            sv[self.index[n]] = v
        return sv


def expr_src(e: Expr, slots: SlotMap, array: str = "s") -> str:
    """Python source for ``e`` over the state list ``array``."""
    t = type(e)
    if t is Num:
        return repr(e.value)
    if t is Bool:
        return "True" if e.value else "False"
    if t is Name:
        try:
            return f"{array}[{slots.index[e.ident]}]"
        except KeyError:
            raise ModelError(f"unresolved identifier '{e.ident}'") from None
    if t is Binary:
        l, r = expr_src(e.left, slots, array), expr_src(e.right, slots, array)
        op = e.op
        if op in ("and", "or"):
            return f"({l} {op} {r})"
        return f"({l} {op} {r})"
    if t is Unary:
        x = expr_src(e.operand, slots, array)
        return f"(not {x})" if e.op == "not" else f"(-{x})"
    if t is Call:
        if e.func == "random":
            return f"(rng.random() * {expr_src(e.args[0], slots, array)})"
        return f"_{e.func}({expr_src(e.args[0], slots, array)})"
    raise ModelError(f"cannot compile {e!r}")


def compile_fn(params: str, body_src: str, name: str = "_fn") -> Callable:
    src = f"def {name}({params}):\n    return {body_src}\n"
    ns = dict(_EXEC_GLOBALS)
    exec(compile(src, f"<compiled:{name}>", "exec"), ns)
    return ns[name]


def compile_stmts(params: str, lines: Sequence[str], name: str = "_fn") -> Callable:
    body = "\n".join(f"    {ln}" for ln in lines) or "    pass"
    src = f"def {name}({params}):\n{body}\n"
    ns = dict(_EXEC_GLOBALS)
    exec(compile(src, f"<compiled:{name}>", "exec"), ns)
    return ns[name]


# -- formulas -----------------------------------------------------------------


def formula_predicate_src(f: Formula, slots: SlotMap, comp_index) -> str:
    """Source of a state predicate over (s, locs); temporal nodes rejected."""
    t = type(f)
    if t is Atom:
        return expr_src(f.expr, slots)
    if t is LocAtom:
        j = comp_index[f.instance]
        return f"(locs[{j}] == {comp_index[f.instance, f.location]})"
    if t is FNot:
        return f"(not {formula_predicate_src(f.operand, slots, comp_index)})"
    if t is FAnd:
        return (
            f"({formula_predicate_src(f.left, slots, comp_index)} and "
            f"{formula_predicate_src(f.right, slots, comp_index)})"
        )
    if t is FOr:
        return (
            f"({formula_predicate_src(f.left, slots, comp_index)} or "
            f"{formula_predicate_src(f.right, slots, comp_index)})"
        )
    raise ModelError("temporal operator inside a state predicate")


def comparison_margins(e: Expr) -> list[Expr]:
    """Signed-margin expressions (>= 0 iff satisfied) of every comparison."""
    out: list[Expr] = []

    def go(e: Expr):
        if type(e) is Binary:
            if e.op in ("<", "<="):
                out.append(Binary("-", e.right, e.left))
            elif e.op in (">", ">="):
                out.append(Binary("-", e.left, e.right))
            elif e.op in ("==", "!="):
                out.append(Binary("-", e.left, e.right))
            elif e.op in ("and", "or"):
                go(e.left)
                go(e.right)
        elif type(e) is Unary and e.op == "not":
            go(e.operand)

    go(e)
    return out


def formula_margins(f: Formula) -> list[Expr]:
    t = type(f)
    if t is Atom:
        return comparison_margins(f.expr)
    if t is LocAtom:
        return []
    if t is FNot:
        return formula_margins(f.operand)
    if t in (FAnd, FOr, Until):
        return formula_margins(f.left) + formula_margins(f.right)
    if t in (Eventually, Always):
        return formula_margins(f.operand)
    raise ModelError(f"not a formula: {f!r}")


# -- affine / static analysis --------------------------------------------------


def _degree(e: Expr, moving: frozenset[str]) -> Optional[int]:
    """Polynomial degree in the moving slots: 0, 1, or None (not affine)."""
    t = type(e)
    if t in (Num, Bool):
        return 0
    if t is Name:
        return 1 if e.ident in moving else 0
    if t is Binary:
        dl, dr = _degree(e.left, moving), _degree(e.right, moving)
        if dl is None or dr is None:
            return None
        if e.op in ("+", "-"):
            return max(dl, dr)
        if e.op == "*":
            return dl + dr if dl + dr <= 1 else None
        if e.op == "/":
            return dl if dr == 0 else None
        return None  # comparisons/booleans are not arithmetic margins
    if t is Unary:
        return _degree(e.operand, moving) if e.op == "-" else None
    if t is Call:
        return 0 if all(_degree(a, moving) == 0 for a in e.args) else None
    return None


def is_affine(e: Expr, moving: frozenset[str]) -> bool:
    return _degree(e, moving) is not None


# -- runtime edge / location tables ---------------------------------------------


@dataclass
class BranchRt:
    weight_fn: Callable
    apply_fn: Callable  # (s, rng) -> None
    target: int  # location index within the component


@dataclass
class EdgeRt:
    action: str
    guard_fn: Optional[Callable]  # None means true
    urgent: bool
    branches: list[BranchRt]
    guard_margins: list[Expr] = field(default_factory=list)


@dataclass
class LocRt:
    name: str
    invariant_fn: Optional[Callable]
    invariant_margins: list[tuple[Callable, Expr]]  # (compiled margin, margin expr)
    rate_map: dict[int, Expr]  # clock slot -> rate expression
    exp_rate: Optional[Expr]
    exp_rate_fn: Optional[Callable]
    outputs: list[EdgeRt]
    inputs: dict[str, list[EdgeRt]]
    has_urgent_out: bool
    has_plain_out: bool


def compile_component(network: Network, j: int, slots: SlotMap) -> list[LocRt]:
    comp = network.components[j]
    loc_index = {loc.name: k for k, loc in enumerate(comp.locations)}
    out: list[LocRt] = []
    for loc in comp.locations:
        inv_fn = None
        inv_margins: list[tuple[Callable, Expr]] = []
        if loc.invariant is not None:
            inv_fn = compile_fn("s", expr_src(loc.invariant, slots))
            for m in comparison_margins(loc.invariant):
                inv_margins.append((compile_fn("s", expr_src(m, slots)), m))
        rate_map = {slots.index[c]: e for c, e in loc.rates}
        exp_fn = (
            compile_fn("s", expr_src(loc.exp_rate, slots))
            if loc.exp_rate is not None
            else None
        )
        outputs: list[EdgeRt] = []
        inputs: dict[str, list[EdgeRt]] = {}
        for e in comp.edges:
            if e.source != loc.name:
                continue
            rt = EdgeRt(
                action=e.action,
                guard_fn=None if e.guard is None else compile_fn("s", expr_src(e.guard, slots)),
                urgent=e.action in network.urgent,
                branches=[
                    BranchRt(
                        weight_fn=compile_fn("s", expr_src(b.weight, slots)),
                        apply_fn=_compile_assign(b.assignments, slots),
                        target=loc_index[b.target],
                    )
                    for b in e.branches
                ],
                guard_margins=[] if e.guard is None else comparison_margins(e.guard),
            )
            if e.kind == "output":
                outputs.append(rt)
            else:
                inputs.setdefault(e.action, []).append(rt)
        out.append(
            LocRt(
                name=loc.name,
                invariant_fn=inv_fn,
                invariant_margins=inv_margins,
                rate_map=rate_map,
                exp_rate=loc.exp_rate,
                exp_rate_fn=exp_fn,
                outputs=outputs,
                inputs=inputs,
                has_urgent_out=any(o.urgent for o in outputs),
                has_plain_out=any(not o.urgent for o in outputs),
            )
        )
    return out


def _compile_assign(assignments, slots: SlotMap) -> Callable:
    lines = []
    for target, e in assignments:
        idx = slots.index[target]
        src = expr_src(e, slots)
        if idx in slots.int_slots:
            lines.append(f"s[{idx}] = float(int({src}))")
        else:
            lines.append(f"s[{idx}] = {src}")
    return compile_stmts("s, rng", lines)


# -- delay specifications ----------------------------------------------------


NEVER, URGENT_ONLY, EXPONENTIAL, UNIFORM = range(4)


@dataclass
class DelaySpec:
    kind: int
    static: bool  # may the sampled absolute time be kept across steps?
    exp_rate_fn: Optional[Callable] = None
    window_atoms: Optional[list] = None  # (margin_fn, derivative static or None)


@dataclass
class Watch:
    src: str  # margin source over step locals
    purpose: str  # 'urgent' | 'monitor' | 'cost' | 'peak_hi' | 'peak_lo'
    comp: int = -1  # urgent watches: owning component


@dataclass
class ModeProgram:
    mode: tuple[int, ...]
    stepper: Callable
    rates_fn: Callable  # s -> tuple of clock rates, slot order
    delay_specs: list[DelaySpec]
    watches: list[Watch]
    has_dynamic: bool
    moving: frozenset[str]
    urgent_now_edges: list[tuple[int, EdgeRt]]  # guardless urgent edges fire instantly


class NetworkCompiler:
    """Per-query compilation context: slots, location tables, mode programs."""

    def __init__(
        self,
        network: Network,
        monitor_margin_exprs: Sequence[Expr] = (),
        cost_margin: Optional[Expr] = None,
        observables: Sequence[Expr] = (),
        track_expr: Optional[Expr] = None,
        track_kind: str = "max",
        peak_margins: Optional[tuple[Expr, Expr]] = None,
    ):
        self.network = network
        self.slots = SlotMap(network)
        self.loc_rt: list[list[LocRt]] = [
            compile_component(network, j, self.slots)
            for j in range(len(network.components))
        ]
        self.loc_index: list[dict[str, int]] = [
            {loc.name: k for k, loc in enumerate(comp.locations)}
            for comp in network.components
        ]
        self.monitor_margins = list(monitor_margin_exprs)
        self.cost_margin = cost_margin
        self.observables = list(observables)
        self.track_expr = track_expr
        self.track_kind = track_kind
        self.peak_margins = peak_margins
        self._programs: dict[tuple[int, ...], ModeProgram] = {}
        # reference map for formula compilation
        self.comp_index: dict = {}
        for j, comp in enumerate(network.components):
            self.comp_index[comp.name] = j
            for k, loc in enumerate(comp.locations):
                self.comp_index[comp.name, loc.name] = k

    def initial_locs(self) -> list[int]:
        return [
            self.loc_index[j][comp.initial]
            for j, comp in enumerate(self.network.components)
        ]

    def compile_predicate(self, f: Formula) -> Callable:
        return compile_fn(
            "s, locs", formula_predicate_src(f, self.slots, self.comp_index)
        )

    def compile_value(self, e: Expr) -> Callable:
        return compile_fn("s", expr_src(e, self.slots))

    def compile_row(self) -> Optional[Callable]:
        if not self.observables:
            return None
        src = ", ".join(expr_src(e, self.slots) for e in self.observables)
        return compile_fn("s", f"(s[{self.slots.time_slot}], {src})")

    def program(self, mode: tuple[int, ...]) -> ModeProgram:
        prog = self._programs.get(mode)
        if prog is None:
            prog = self._build_program(mode)
            self._programs[mode] = prog
        return prog

    # -- mode program construction ------------------------------------

    def _mode_rates(self, mode: tuple[int, ...]) -> list[Expr]:
        """Rate expression per clock slot; implicit rate 1 when undeclared."""
        rates: list[Expr] = [Num(1.0)] * self.slots.n_clocks
        declared: set[int] = set()
        for j, k in enumerate(mode):
            for slot, e in self.loc_rt[j][k].rate_map.items():
                rates[slot] = e
                declared.add(slot)
        return rates

    def _build_program(self, mode: tuple[int, ...]) -> ModeProgram:
        slots = self.slots
        rates = self._mode_rates(mode)
        moving = frozenset(
            [TIME]
            + [
                slots.clock_names[i]
                for i in range(slots.n_clocks)
                if not (type(rates[i]) is Num and rates[i].value == 0.0)
            ]
        )

        watches: list[Watch] = []
        urgent_now: list[tuple[int, EdgeRt]] = []
        delay_specs: list[DelaySpec] = []
        has_dynamic = False
        for j, k in enumerate(mode):
            loc = self.loc_rt[j][k]
            for edge in loc.outputs:
                if not edge.urgent:
                    continue
                if edge.guard_fn is None:
                    urgent_now.append((j, edge))
                    continue
                live = False
                for m in edge.guard_margins:
                    if identifiers(m) & moving:
                        watches.append(Watch(expr_src(m, slots), "urgent", j))
                        live = True
                # whether live or not, the guard may already hold on mode entry
                urgent_now.append((j, edge))
            spec = self._delay_spec(loc, moving, rates)
            delay_specs.append(spec)
            if not spec.static:
                has_dynamic = True
        for m in self.monitor_margins:
            if identifiers(m) & moving:
                watches.append(Watch(expr_src(m, slots), "monitor"))
        if self.cost_margin is not None and identifiers(self.cost_margin) & moving:
            watches.append(Watch(expr_src(self.cost_margin, slots), "cost"))
        if self.peak_margins is not None:
            for purpose, m in zip(("peak_hi", "peak_lo"), self.peak_margins):
                if identifiers(m) & moving:
                    watches.append(Watch(expr_src(m, slots), purpose))

        stepper = self._gen_stepper(rates, watches)
        rates_fn = compile_fn(
            "s", "(" + ", ".join(expr_src(r, slots) for r in rates) + ("," if rates else "") + ")"
        )
        return ModeProgram(
            mode=mode,
            stepper=stepper,
            rates_fn=rates_fn,
            delay_specs=delay_specs,
            watches=watches,
            has_dynamic=has_dynamic,
            moving=moving,
            urgent_now_edges=urgent_now,
        )

    def _delay_spec(self, loc: LocRt, moving: frozenset[str], rates: list[Expr]) -> DelaySpec:
        slots = self.slots
        if not loc.has_plain_out:
            return DelaySpec(URGENT_ONLY if loc.has_urgent_out else NEVER, True)
        if loc.invariant_fn is not None:
            atoms = []
            static = True
            for margin_fn, margin in loc.invariant_margins:
                refs = identifiers(margin) & moving
                if not refs:
                    atoms.append((margin_fn, "gate"))
                    continue
                # static only when the margin is affine in the moving slots
                # and those slots move at mode-constant rates
                const_rates = all(
                    r == TIME or type(rates[slots.index[r]]) is Num for r in refs
                )
                if const_rates and is_affine(margin, moving):
                    atoms.append((margin_fn, "affine"))
                else:
                    atoms.append((margin_fn, "dynamic"))
                    static = False
            return DelaySpec(UNIFORM, static, loc.exp_rate_fn, atoms)
        # no invariant: elaboration guaranteed an exprate exists
        refs = identifiers(loc.exp_rate) & moving if loc.exp_rate is not None else set()
        return DelaySpec(EXPONENTIAL, not refs, loc.exp_rate_fn)

    # -- stepper code generation ----------------------------------------

    def _gen_stepper(self, rates: list[Expr], watches: list[Watch]) -> Callable:
        slots = self.slots
        nclk = slots.n_clocks
        T = slots.time_slot
        local = {}  # slot -> local variable name
        for i in range(nclk):
            local[i] = f"c{i}"
        for i in range(nclk, T):
            local[i] = f"d{i}"
        local[T] = "t"

        def localize(src: str) -> str:
            # replace s[i] by the local name; safe since indices are literal
            for i in sorted(local, reverse=True):
                src = src.replace(f"s[{i}]", local[i])
            return src

        lines: list[str] = []
        lines.append("t = s[%d]" % T)
        for i in range(nclk):
            lines.append(f"c{i} = s[{i}]")
        for i in range(nclk, T):
            lines.append(f"d{i} = s[{i}]")
        for w_i, w in enumerate(watches):
            lines.append(f"w{w_i} = {localize(w.src)}")
        lines.append("i = 0")
        lines.append("while i < n:")
        body: list[str] = []
        for i in range(nclk):
            body.append(f"p{i} = c{i}")
        body.append("pt = t")
        rate_lines = []
        update_lines = []
        finite_terms = []
        for i, r in enumerate(rates):
            if type(r) is Num:
                if r.value == 0.0:
                    continue
                update_lines.append(f"c{i} += h * {r.value!r}")
            else:
                rate_lines.append(f"r{i} = {localize(expr_src(r, slots))}")
                update_lines.append(f"c{i} += h * r{i}")
            finite_terms.append(f"c{i}")
        body.extend(rate_lines)
        body.extend(update_lines)
        body.append("t += h")
        body.append("i += 1")
        if finite_terms:
            tot = " + ".join(finite_terms)
            body.append(f"if not (-1e300 < ({tot}) < 1e300):")
            body.append("    raise _NonFinite('state is no longer finite')")
        flip_flags = []
        for w_i, w in enumerate(watches):
            body.append(f"v{w_i} = {localize(w.src)}")
            body.append(f"f{w_i} = (v{w_i} > 0.0) != (w{w_i} > 0.0)")
            flip_flags.append(f"f{w_i}")
        if flip_flags:
            body.append(f"if {' or '.join(flip_flags)}:")
            for w_i in range(len(watches)):
                body.append(f"    if f{w_i}: flips.append(({w_i}, w{w_i}, v{w_i}))")
            pres = ", ".join([f"p{i}" for i in range(nclk)] + ["pt"])
            body.append(f"    pre[:] = [{pres}]")
            body.append("    break")
            for w_i in range(len(watches)):
                body.append(f"w{w_i} = v{w_i}")
        if self.observables:
            obs = ", ".join(localize(expr_src(e, slots)) for e in self.observables)
            body.append(f"rows.append((t, {obs}))")
        if self.track_expr is not None:
            cmp_op = ">" if self.track_kind == "max" else "<"
            body.append(f"tv = {localize(expr_src(self.track_expr, slots))}")
            body.append(f"if tv {cmp_op} track[0]: track[0] = tv")
        lines.extend("    " + b for b in body)
        for i in range(nclk):
            lines.append(f"s[{i}] = c{i}")
        lines.append(f"s[{T}] = t")
        lines.append("return i")
        return compile_stmts("s, h, n, rows, track, flips, pre", lines, "_stepper")
