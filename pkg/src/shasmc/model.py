"""Hybrid automata, their closed networks, and network states.

A component automaton owns a set of continuous variables (its clocks, in the
generalised sense: rates may be arbitrary state expressions, so a location's
rate map defines an ODE system).  Components communicate by broadcast over a
shared action alphabet that the components' output sets partition.  Discrete
(integer or real-valued, piecewise-constant) variables are global to the
network; the disjointness requirement applies to continuous variables only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    CompositionError,
    OutputClash,
    SharedVariable,
    UncoveredAction,
)
from .expr import Expr, eval_expr

TIME = "time"  # built-in: global elapsed time, rate 1, never assignable


@dataclass(frozen=True)
class Branch:
    """One weighted outcome of an edge: assignments applied in order."""

    weight: Expr
    assignments: tuple[tuple[str, Expr], ...]
    target: str


@dataclass(frozen=True)
class Edge:
    source: str
    guard: Optional[Expr]  # None means true
    action: str
    kind: str  # 'output' | 'input'
    branches: tuple[Branch, ...]

    def __post_init__(self):
        if not self.branches:
            raise CompositionError(f"edge on '{self.action}' has no branches")


@dataclass(frozen=True)
class Location:
    name: str
    invariant: Optional[Expr] = None
    rates: tuple[tuple[str, Expr], ...] = ()  # explicit clock rates; default 1
    exp_rate: Optional[Expr] = None  # delay rate when the invariant does not bound

    def rate_map(self) -> dict[str, Expr]:
        return dict(self.rates)


@dataclass(frozen=True)
class HybridAutomaton:
    """One component: Def-style tuple (L, l0, X, Sigma, E, F, I).

    ``clocks`` maps each owned continuous variable to its initial value.
    ``actions`` is the full shared alphabet; ``outputs`` the subset this
    component owns.  Input-enabledness is implicit: an input with no enabled
    edge is ignored (stay-put).
    """

    name: str
    locations: tuple[Location, ...]
    initial: str
    clocks: tuple[tuple[str, float], ...]
    actions: frozenset[str]
    outputs: frozenset[str]
    edges: tuple[Edge, ...]
    urgent_actions: frozenset[str] = frozenset()

    def __post_init__(self):
        names = {loc.name for loc in self.locations}
        if self.initial not in names:
            raise CompositionError(
                f"{self.name}: initial location '{self.initial}' not declared"
            )
        for e in self.edges:
            if e.source not in names:
                raise CompositionError(f"{self.name}: edge from unknown '{e.source}'")
            for b in e.branches:
                if b.target not in names:
                    raise CompositionError(f"{self.name}: edge to unknown '{b.target}'")
        if not self.outputs <= self.actions:
            raise CompositionError(f"{self.name}: outputs not a subset of the alphabet")

    @property
    def inputs(self) -> frozenset[str]:
        return self.actions - self.outputs

    def location(self, name: str) -> Location:
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise KeyError(name)


@dataclass(frozen=True)
class Network:
    """Closed parallel composition of components.

    Continuous-variable sets are pairwise disjoint and output sets partition
    the alphabet, so every action has a unique owner ``c(a)``.
    """

    components: tuple[HybridAutomaton, ...]
    actions: frozenset[str]
    urgent: frozenset[str]
    discrete: tuple[tuple[str, float], ...] = ()  # global int/real variables
    int_vars: frozenset[str] = frozenset()
    constants: tuple[tuple[str, float], ...] = ()  # folded, kept for queries
    free_clocks: tuple[tuple[str, float], ...] = ()  # owned by nobody, rate 1

    @property
    def clock_init(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for comp in self.components:
            out.update(dict(comp.clocks))
        out.update(dict(self.free_clocks))
        return out

    def owner(self, action: str) -> int:
        """Index of the unique component outputting ``action``."""
        for j, comp in enumerate(self.components):
            if action in comp.outputs:
                return j
        raise KeyError(action)

    def component_index(self, name: str) -> int:
        for j, comp in enumerate(self.components):
            if comp.name == name:
                return j
        raise KeyError(name)

    def initial_state(self) -> "State":
        return State(
            locations=tuple(c.initial for c in self.components),
            clocks=self.clock_init,
            discrete=dict(self.discrete),
            time=0.0,
        )


@dataclass
class State:
    """Snapshot of a network: per-component location plus global valuation."""

    locations: tuple[str, ...]
    clocks: dict[str, float]
    discrete: dict[str, float]
    time: float = 0.0

    def env(self) -> dict[str, float]:
        """Flat evaluation environment (clocks, discrete vars, elapsed time)."""
        e = dict(self.clocks)
        e.update(self.discrete)
        e[TIME] = self.time
        return e

    def copy(self) -> "State":
        return State(self.locations, dict(self.clocks), dict(self.discrete), self.time)


def compose(
    components: Sequence[HybridAutomaton],
    discrete: Mapping[str, float] | Iterable[tuple[str, float]] = (),
    int_vars: Iterable[str] = (),
    constants: Mapping[str, float] | Iterable[tuple[str, float]] = (),
    free_clocks: Iterable[tuple[str, float]] = (),
) -> Network:
    """Validate composability and build the closed network.

    The composed invariant is the conjunction of the components' invariants
    and the delay function the componentwise union of their rate maps; both
    are realised operationally by the engine rather than built symbolically.
    """
    if not components:
        raise CompositionError("a network needs at least one component")
    owned: dict[str, str] = {}
    for comp in components:
        for clk, _ in comp.clocks:
            if clk in owned:
                raise SharedVariable(clk, owned[clk], comp.name)
            owned[clk] = comp.name

    actions: set[str] = set()
    urgent: set[str] = set()
    for comp in components:
        actions |= comp.actions
        urgent |= comp.urgent_actions
    out_owner: dict[str, str] = {}
    for comp in components:
        for a in comp.outputs:
            if a in out_owner:
                raise OutputClash(a, out_owner[a], comp.name)
            out_owner[a] = comp.name
    for a in sorted(actions):
        if a not in out_owner:
            raise UncoveredAction(a)

    discrete_items = tuple(discrete.items() if isinstance(discrete, Mapping) else discrete)
    const_items = tuple(constants.items() if isinstance(constants, Mapping) else constants)
    return Network(
        components=tuple(components),
        actions=frozenset(actions),
        urgent=frozenset(urgent),
        discrete=discrete_items,
        int_vars=frozenset(int_vars),
        constants=const_items,
        free_clocks=tuple(free_clocks),
    )


def rates(network: Network, state: State) -> dict[str, float]:
    """Current derivative of every continuous variable.

    A clock with no explicit rate in the component's current location moves
    at the implicit rate 1.
    """
    env = state.env()
    out: dict[str, float] = {}
    for comp, loc_name in zip(network.components, state.locations):
        loc = comp.location(loc_name)
        rate_map = loc.rate_map()
        for clk, _ in comp.clocks:
            e = rate_map.get(clk)
            out[clk] = 1.0 if e is None else float(eval_expr(e, env))
    for clk, _ in network.free_clocks:
        out[clk] = 1.0
    return out


def eval_in_state(e: Expr, state: State, rng=None):
    """Evaluate an expression in a network state (spec-level ``eval``)."""
    return eval_expr(e, state.env(), rng)
