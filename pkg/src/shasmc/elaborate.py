"""Instantiation of parsed model documents into composed networks.

Template parameters and constants are folded away, template locals are
renamed per instance (``Heater.t``), arrays are expanded element-wise
(``T[0]``, ``T[1]``), and every remaining expression refers only to flat
state slot names.  A component owns a continuous variable when it declares
it locally or gives it a rate in some location; unowned global clocks keep
the implicit rate 1.
"""

from __future__ import annotations

from typing import Optional

from .errors import ArityError, ModelError
from .expr import Expr, Index, Name, Num, eval_expr, fold, substitute, walk
from .model import (
    Branch,
    Edge,
    HybridAutomaton,
    Location,
    Network,
    compose,
)
from .parser import (
    EdgeDecl,
    InstanceDecl,
    LocationDecl,
    ModelDocument,
    TemplateDecl,
    VarDecl,
    parse_model,
)


def instance_label(template: str, args: tuple[float, ...]) -> str:
    if not args:
        return template
    return f"{template}({','.join(_fmt(a) for a in args)})"


def _fmt(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(v)


def _expand(decl: VarDecl, consts: dict[str, float], prefix: str = "") -> list[tuple[str, float]]:
    """Element names with folded initial values (default 0)."""
    names = (
        [prefix + decl.name]
        if decl.size is None
        else [f"{prefix}{decl.name}[{i}]" for i in range(decl.size)]
    )
    if decl.init:
        vals = [float(eval_expr(fold(substitute(e, {k: Num(v) for k, v in consts.items()})), {}))
                for e in decl.init]
        if len(vals) == 1 and len(names) > 1:
            vals = vals * len(names)
    else:
        vals = [0.0] * len(names)
    return list(zip(names, vals))


def elaborate(doc: ModelDocument) -> Network:
    """Instantiate all templates and compose the closed network."""
    consts: dict[str, float] = {}
    clock_init: dict[str, float] = {}
    discrete_init: dict[str, float] = {}
    int_names: set[str] = set()
    for d in doc.declarations:
        pairs = _expand(d, consts)
        if d.kind == "const":
            consts.update(pairs)
        elif d.kind == "clock":
            clock_init.update(pairs)
        else:
            if d.kind == "int":
                pairs = [(n, float(int(v))) for n, v in pairs]
                int_names.update(n for n, _ in pairs)
            discrete_init.update(pairs)

    actions: list[str] = []
    urgent: set[str] = set()
    for ch in doc.channels:
        names = [ch.name] if ch.size is None else [f"{ch.name}[{i}]" for i in range(ch.size)]
        actions.extend(names)
        if ch.urgent:
            urgent.update(names)
    action_set = frozenset(actions)

    templates = {t.name: t for t in doc.templates}
    components: list[HybridAutomaton] = []
    owned_globals: set[str] = set()
    for inst in doc.instances:
        tpl = templates[inst.template]
        comp, local_discrete, local_ints = _instantiate(
            tpl, inst, consts, clock_init, action_set, urgent
        )
        components.append(comp)
        discrete_init.update(local_discrete)
        int_names.update(local_ints)
        owned_globals.update(name for name, _ in comp.clocks)

    free = [(n, v) for n, v in clock_init.items() if n not in owned_globals]
    network = compose(
        components,
        discrete=discrete_init,
        int_vars=int_names,
        constants=consts,
        free_clocks=free,
    )
    _check_state_references(network)
    return network


def load_model(text: str) -> Network:
    return elaborate(parse_model(text))


def _instantiate(
    tpl: TemplateDecl,
    inst: InstanceDecl,
    consts: dict[str, float],
    global_clocks: dict[str, float],
    actions: frozenset[str],
    urgent: set[str],
):
    if len(inst.args) != len(tpl.params):
        raise ArityError(
            f"template '{tpl.name}' takes {len(tpl.params)} argument(s), "
            f"got {len(inst.args)}"
        )
    const_map = {k: Num(v) for k, v in consts.items()}
    arg_vals = []
    for a in inst.args:
        folded = fold(substitute(a, const_map))
        if type(folded) is not Num:
            raise ModelError(f"argument to '{tpl.name}' must be constant")
        arg_vals.append(folded.value)
    label = instance_label(tpl.name, tuple(arg_vals))

    mapping: dict[str, Expr] = dict(const_map)
    mapping.update({p: Num(v) for p, v in zip(tpl.params, arg_vals)})

    own_clocks: dict[str, float] = {}
    local_discrete: dict[str, float] = {}
    local_ints: set[str] = set()
    local_consts: dict[str, float] = dict(consts)
    for d in tpl.locals:
        if d.size is not None:
            raise ModelError(f"{label}: template locals cannot be arrays")
        if d.kind == "const":
            pairs = _expand(d, local_consts)
            local_consts.update(pairs)
            mapping[d.name] = Num(pairs[0][1])
            continue
        mangled = f"{label}.{d.name}"
        init = 0.0
        if d.init:
            e = fold(substitute(d.init[0], mapping))
            if type(e) is not Num:
                raise ModelError(f"{label}: initializer of '{d.name}' must be constant")
            init = e.value
        mapping[d.name] = Name(mangled)
        if d.kind == "clock":
            own_clocks[mangled] = init
        else:
            if d.kind == "int":
                init = float(int(init))
                local_ints.add(mangled)
            local_discrete[mangled] = init

    def sub(e: Optional[Expr]) -> Optional[Expr]:
        return None if e is None else fold(substitute(e, mapping))

    locations = []
    for ld in tpl.locations:
        locations.append(_build_location(ld, sub, mapping, label, own_clocks, global_clocks))

    outputs: set[str] = set()
    edges = []
    for ed in tpl.edges:
        edge = _build_edge(ed, sub, mapping, label)
        edges.append(edge)
        if edge.kind == "output":
            outputs.add(edge.action)

    comp = HybridAutomaton(
        name=label,
        locations=tuple(locations),
        initial=tpl.initial,
        clocks=tuple(own_clocks.items()),
        actions=actions,
        outputs=frozenset(outputs),
        edges=tuple(edges),
        urgent_actions=frozenset(urgent),
    )
    _check_delay_rates(comp, urgent, label)
    return comp, local_discrete, local_ints


def _build_location(ld: LocationDecl, sub, mapping, label, own_clocks, global_clocks):
    invariant = None
    for inv in ld.invariants:
        e = sub(inv)
        invariant = e if invariant is None else _conj(invariant, e)
    rate_items = []
    for rc in ld.rates:
        target = _resolve_slot(rc.clock, rc.index, mapping, label)
        if target not in global_clocks and target not in own_clocks:
            raise ModelError(f"{label}: rate target '{target}' is not a clock")
        if target in global_clocks:
            own_clocks.setdefault(target, global_clocks[target])
        if any(t == target for t, _ in rate_items):
            raise ModelError(f"{label}: duplicate rate for '{target}'")
        rate_items.append((target, sub(rc.expr)))
    return Location(
        name=ld.name,
        invariant=invariant,
        rates=tuple(rate_items),
        exp_rate=sub(ld.exp_rate),
    )


def _build_edge(ed: EdgeDecl, sub, mapping, label) -> Edge:
    action = _resolve_slot(ed.chan, ed.chan_index, mapping, label)
    assigns = tuple(
        (_resolve_slot(a.target, a.index, mapping, label), sub(a.expr)) for a in ed.updates
    )
    branch = Branch(
        weight=sub(ed.weight) if ed.weight is not None else Num(1.0),
        assignments=assigns,
        target=ed.target,
    )
    return Edge(
        source=ed.source,
        guard=sub(ed.guard),
        action=action,
        kind="output" if ed.direction == "!" else "input",
        branches=(branch,),
    )


def _resolve_slot(base: str, index: Optional[Expr], mapping, label) -> str:
    """Flatten a possibly indexed reference to its element slot name."""
    if index is None:
        e = mapping.get(base)
        if isinstance(e, Name):
            return e.ident  # template-local, mangled
        return base
    folded = fold(substitute(index, mapping))
    if type(folded) is not Num or folded.value != int(folded.value):
        raise ModelError(f"{label}: index on '{base}' must be an integer constant")
    return f"{base}[{int(folded.value)}]"


def _conj(a: Expr, b: Expr) -> Expr:
    from .expr import Binary

    return Binary("and", a, b)


def _check_delay_rates(comp: HybridAutomaton, urgent: set[str], label: str):
    """A location that can output on a plain channel needs a delay source:
    a (potentially bounding) invariant or an exponential rate."""
    for loc in comp.locations:
        plain_out = any(
            e.kind == "output" and e.action not in urgent
            for e in comp.edges
            if e.source == loc.name
        )
        if plain_out and loc.exp_rate is None and loc.invariant is None:
            raise ModelError(
                f"{label}: location '{loc.name}' has output edges but neither "
                f"an invariant nor an exprate to choose the delay"
            )


def _check_state_references(network: Network):
    slots = set(network.clock_init)
    slots.update(n for n, _ in network.discrete)
    slots.add("time")
    for comp in network.components:
        for loc in comp.locations:
            exprs = [loc.invariant, loc.exp_rate] + [e for _, e in loc.rates]
            for e in exprs:
                _check_expr(e, slots, comp.name)
        for edge in comp.edges:
            _check_expr(edge.guard, slots, comp.name)
            for b in edge.branches:
                _check_expr(b.weight, slots, comp.name)
                for target, e in b.assignments:
                    if target not in slots or target == "time":
                        raise ModelError(f"{comp.name}: cannot assign to '{target}'")
                    _check_expr(e, slots, comp.name)


def _check_expr(e: Optional[Expr], slots: set[str], who: str):
    if e is None:
        return
    for node in walk(e):
        if type(node) is Name and node.ident not in slots:
            raise ModelError(f"{who}: unresolved identifier '{node.ident}'")
        if type(node) is Index:
            raise ModelError(
                f"{who}: array index on '{node.base}' must be an elaboration-time constant"
            )
