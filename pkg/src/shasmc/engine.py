"""Random-run generation for a network: components race by sampling delays
from their per-location distributions (uniform when the invariant bounds the
delay, exponential otherwise, Dirac for urgent outputs) against an internal
integrator that advances all continuous variables with fixed-step Euler
updates, re-evaluating rates at every step.

The sampled-delay race is exact for this distribution family: exponentials
are memoryless and re-sampling a uniform over its remaining window preserves
the original law, so bids are drawn once per race and kept until the next
discrete event invalidates them.  Urgent guards and monitored comparisons
are watched inside the generated stepper; crossings are refined by linear
interpolation within the offending step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .compile import (
    EXPONENTIAL,
    NEVER,
    NetworkCompiler,
    UNIFORM,
    URGENT_ONLY,
    formula_margins,
)
from .errors import (
    InvariantAlreadyViolated,
    ModelError,
    NonFinite,
    SimulationError,
    ZenoAbort,
)
from .expr import Binary, Expr, Num, pretty
from .formulas import Always, Eventually, Formula, is_state_formula
from .model import Network, State
from .monitor import PeakPattern, PeakTracker, Verdict, formula_loc_atoms
from .queries import Bound, CostBound, StepBound, TimeBound

INF = math.inf

DEFAULT_DT = 0.01
ZENO_CAP = 10_000
ZENO_EPS = 1e-9
_CHUNK_CAP = 1_000_000  # stepper chunk bound for unbounded-time cost runs


# -- delay distributions (exposed for inspection and tests) -------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError("need lo <= hi")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("need rate > 0")


@dataclass(frozen=True)
class Dirac:
    d: float

    def __post_init__(self):
        if not self.d >= 0:
            raise ValueError("need d >= 0")


@dataclass(frozen=True)
class RaceOutcome:
    winner: int  # component index, or -1 for the integrator
    delay: float
    action: Optional[str]  # None: integrator won, or no output guard held


@dataclass
class Run:
    """Bounded timed trace: samples of the observed expressions plus the
    discrete events; pre/post rows share a timestamp at jumps."""

    times: list[float]
    columns: dict[str, list[float]]
    events: list[tuple[float, str, str]]  # (time, action, winner component)
    reason: str  # 'bound' | 'early-stop' | 'zeno-abort'

    @property
    def horizon(self) -> float:
        return self.times[-1] if self.times else 0.0


@dataclass
class RunOutcome:
    verdict: Optional[Verdict] = None
    extremum: Optional[float] = None
    gaps: list[float] = field(default_factory=list)
    run: Optional[Run] = None
    events: int = 0
    end_time: float = 0.0
    reason: str = "bound"


class _RunCtx:
    """Mutable per-run state; one instance per generated run."""

    __slots__ = (
        "s", "locs", "bids", "rows", "track", "flips", "pre", "tracker",
        "loc_spans", "events_list", "events", "zeno_run", "last_event_t",
        "verdict", "reason", "epoch_new",
    )

    def __init__(self, s, locs, n_comp, value_kind, tracker):
        self.s = s
        self.locs = locs
        self.bids = [INF] * n_comp
        self.rows: list[tuple] = []
        self.track = [-INF if value_kind == "max" else INF]
        self.flips: list[tuple] = []
        self.pre: list[float] = []
        self.tracker = tracker
        self.loc_spans: list[tuple[int, tuple[int, ...]]] = [(0, tuple(locs))]
        self.events_list: list[tuple[float, str, str]] = []
        self.events = 0
        self.zeno_run = 0
        self.last_event_t = 0.0
        self.verdict: Optional[Verdict] = None
        self.reason = "bound"
        self.epoch_new = True


class Runtime:
    """Compiled simulation context for one (network, query) pair.

    Build once, then call :meth:`run` with one random stream per run.
    Instances hold no cross-run state and may be shared by workers that
    each pass their own stream.
    """

    def __init__(
        self,
        network: Network,
        *,
        bound: Bound,
        dt: float = DEFAULT_DT,
        observables: Sequence[Expr] = (),
        formula: Optional[Formula] = None,
        early_stop: bool = True,
        value_expr: Optional[Expr] = None,
        value_kind: str = "max",
        peak: Optional[PeakPattern] = None,
        record: bool = False,
        zeno_cap: int = ZENO_CAP,
        zeno_eps: float = ZENO_EPS,
    ):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.network = network
        self.dt = dt
        self.bound = bound
        self.zeno_cap = zeno_cap
        self.zeno_eps = zeno_eps
        self.early_stop = early_stop

        self.t_bound = INF
        self.step_cap: Optional[int] = None
        cost_margin: Optional[Expr] = None
        if isinstance(bound, TimeBound):
            self.t_bound = bound.limit
        elif isinstance(bound, StepBound):
            self.step_cap = bound.limit
        elif isinstance(bound, CostBound):
            cost_margin = Binary("-", Num(bound.limit), bound.clock)
        else:
            raise ModelError(f"unsupported bound {bound!r}")

        # Formula handling: <>/[] over a state predicate is monitored online
        # (with early stop); anything else records a trace for the offline
        # checker, including one column per comparison margin.
        self.online_kind: Optional[str] = None
        self.offline = False
        self.formula = formula
        inner: Optional[Formula] = None
        monitor_margins: list[Expr] = []
        obs = list(observables)
        if formula is not None:
            if type(formula) is Eventually and is_state_formula(formula.operand):
                self.online_kind, inner = "<>", formula.operand
            elif type(formula) is Always and is_state_formula(formula.operand):
                self.online_kind, inner = "[]", formula.operand
            else:
                self.offline = True
                record = True
                obs.extend(formula_margins(formula))
            if inner is not None:
                monitor_margins = formula_margins(inner)

        self.record = record
        self.peak = peak
        peak_margins = None
        if peak is not None:
            peak_margins = (
                Binary("-", peak.expr, Num(peak.hi)),
                Binary("-", peak.expr, Num(peak.lo)),
            )

        self.compiler = NetworkCompiler(
            network,
            monitor_margin_exprs=monitor_margins,
            cost_margin=cost_margin,
            observables=obs if record else [],
            track_expr=value_expr,
            track_kind=value_kind,
            peak_margins=peak_margins,
        )
        self.slots = self.compiler.slots
        self.obs_exprs = obs if record else []
        self.column_names = [pretty(e) for e in self.obs_exprs]
        self.row_fn = self.compiler.compile_row() if record else None
        self.value_kind = value_kind
        self.value_fn = (
            self.compiler.compile_value(value_expr) if value_expr is not None else None
        )
        self.peak_fn = (
            self.compiler.compile_value(peak.expr) if peak is not None else None
        )
        self.cost_fn = (
            self.compiler.compile_value(cost_margin) if cost_margin is not None else None
        )
        self.pred_fn = self.compiler.compile_predicate(inner) if inner is not None else None
        self.loc_atoms = formula_loc_atoms(formula) if self.offline else []

    # -- single run ------------------------------------------------------

    def run(self, rng) -> RunOutcome:
        T = self.slots.time_slot
        s = self.slots.initial(self.network)
        locs = self.compiler.initial_locs()
        tracker = (
            PeakTracker(self.peak.hi, self.peak.lo, self.peak.window)
            if self.peak is not None
            else None
        )
        ctx = _RunCtx(s, locs, len(self.network.components), self.value_kind, tracker)

        if self.record:
            ctx.rows.append(self.row_fn(s))
        if self.value_fn is not None:
            ctx.track[0] = self.value_fn(s)
        if tracker is not None:
            tracker.feed(0.0, self.peak_fn(s))
        self._update_verdict(ctx, s, locs, 0.0)
        if ctx.verdict is not None and self.early_stop:
            ctx.reason = "early-stop"
            return self._finish(ctx)
        if self.cost_fn is not None and self.cost_fn(s) <= 0.0:
            return self._finish(ctx)
        if self.step_cap == 0:
            return self._finish(ctx)
        if self.t_bound <= 0.0:
            return self._finish(ctx)

        while True:
            prog = self.compiler.program(tuple(locs))
            if ctx.epoch_new or prog.has_dynamic:
                self._sample_bids(prog, s, s[T], rng, ctx.bids)
                ctx.epoch_new = False
            t = s[T]
            t_next_bid = min(ctx.bids)
            t_target = min(self.t_bound, t_next_bid)
            if prog.has_dynamic:
                t_target = min(t_target, t + self.dt)
            if t_target == INF and self.cost_fn is None:
                raise SimulationError(
                    "run cannot progress: no pending events and no time bound"
                )

            if t_target > t + 1e-12 * max(1.0, abs(t) if t_target == INF else t_target):
                status, data = self._advance(prog, ctx, t_target, rng)
                if status == "verdict":
                    ctx.reason = "early-stop"
                    break
                if status == "cost":
                    break
                if status == "urgent":
                    if self._event(data, ctx, rng):
                        break
                    continue
                t = s[T]

            if t_next_bid > self.t_bound:
                if self.t_bound - t <= 1e-12 * max(1.0, self.t_bound):
                    break  # bound reached
                continue  # partial advance (dynamic-mode cap)
            if t < t_next_bid - 1e-12 * max(1.0, abs(t_next_bid)):
                continue

            tmin = min(ctx.bids)
            winners = [j for j, b in enumerate(ctx.bids) if b == tmin]
            winner = winners[0] if len(winners) == 1 else winners[int(rng.random() * len(winners))]
            if self._event(winner, ctx, rng):
                break

        return self._finish(ctx)

    # -- pieces ------------------------------------------------------------

    def _update_verdict(self, ctx: _RunCtx, s, locs, t: float):
        if self.pred_fn is None or ctx.verdict is not None:
            return
        holds = bool(self.pred_fn(s, locs))
        if self.online_kind == "<>" and holds:
            ctx.verdict = Verdict("satisfied", t)
        elif self.online_kind == "[]" and not holds:
            ctx.verdict = Verdict("violated", t)

    def _event(self, winner: int, ctx: _RunCtx, rng) -> bool:
        """Fire the winner; True when the run must stop."""
        s, locs = ctx.s, ctx.locs
        action = self._fire(winner, ctx, rng)
        ctx.epoch_new = True
        if action is None:
            return False  # no guard satisfied: race again
        t = s[self.slots.time_slot]
        ctx.events += 1
        if t - ctx.last_event_t < self.zeno_eps:
            ctx.zeno_run += 1
        else:
            ctx.zeno_run = 0
            ctx.last_event_t = t
        if ctx.zeno_run > self.zeno_cap:
            ctx.reason = "zeno-abort"
            return True
        self._update_verdict(ctx, s, locs, t)
        if ctx.verdict is not None and self.early_stop:
            ctx.reason = "early-stop"
            return True
        if ctx.tracker is not None:
            ctx.tracker.feed(t, self.peak_fn(s))
        if self.value_fn is not None:
            v = self.value_fn(s)
            if (v > ctx.track[0]) if self.value_kind == "max" else (v < ctx.track[0]):
                ctx.track[0] = v
        if self.step_cap is not None and ctx.events >= self.step_cap:
            return True
        if self.cost_fn is not None and self.cost_fn(s) <= 0.0:
            return True
        return False

    def _sample_bids(self, prog, s, t: float, rng, bids: list[float]):
        for j, spec in enumerate(prog.delay_specs):
            k = spec.kind
            if k == EXPONENTIAL:
                rate = spec.exp_rate_fn(s)
                bids[j] = t + rng.expovariate(rate) if rate > 0.0 else INF
            elif k == UNIFORM:
                dmax = self._window(prog, spec, s)
                if dmax == INF:
                    if spec.exp_rate_fn is not None:
                        rate = spec.exp_rate_fn(s)
                        bids[j] = t + rng.expovariate(rate) if rate > 0.0 else INF
                    else:
                        raise ModelError(
                            f"{self.network.components[j].name}: delay is unbounded "
                            f"here and the location declares no exprate"
                        )
                elif dmax <= 0.0:
                    bids[j] = t
                else:
                    bids[j] = t + rng.uniform(0.0, dmax)
            else:  # NEVER / URGENT_ONLY
                bids[j] = INF
        for j, edge in prog.urgent_now_edges:
            if (edge.guard_fn is None or edge.guard_fn(s)) and t < bids[j]:
                bids[j] = t

    def _window(self, prog, spec, s) -> float:
        """Upper delay bound from the invariant under current constant rates."""
        dmax = INF
        scratch = None
        h0 = self.dt
        for margin_fn, cls in spec.window_atoms:
            m = margin_fn(s)
            if m < 0.0:
                return 0.0
            if cls == "gate":
                continue
            if scratch is None:
                r = prog.rates_fn(s)
                scratch = list(s)
                for i in range(self.slots.n_clocks):
                    scratch[i] += h0 * r[i]
                scratch[self.slots.time_slot] += h0
            slope = (margin_fn(scratch) - m) / h0
            if slope < 0.0:
                d = m / -slope
                if d < dmax:
                    dmax = d
        return dmax

    def _advance(self, prog, ctx: _RunCtx, t_target: float, rng):
        """Integrate toward ``t_target``; returns early on watched crossings."""
        T = self.slots.time_slot
        s = ctx.s
        h = self.dt
        stepper = prog.stepper
        rows = ctx.rows if self.record else None
        flips = ctx.flips
        while True:
            t = s[T]
            remaining = t_target - t
            if remaining <= 1e-12 * max(1.0, abs(t)):
                return "reached", None
            if remaining == INF:
                n, hh = _CHUNK_CAP, h
            elif remaining >= h * (1.0 - 1e-9):
                n = int(remaining / h + 1e-9)
                hh = h
                if n == 0:
                    n, hh = 1, remaining
            else:
                n, hh = 1, remaining
            del flips[:]
            stepper(s, hh, n, rows, ctx.track, flips, ctx.pre)
            if not flips:
                continue
            status = self._handle_flips(prog, ctx, hh, rng)
            if status is not None:
                return status
            if self.record:
                ctx.rows.append(self.row_fn(s))  # the completed step's sample

    def _interp_state(self, prog, s, pre, theta: float, hh: float) -> list[float]:
        s2 = list(s)
        nclk = self.slots.n_clocks
        for i in range(nclk):
            s2[i] = pre[i]
        s2[self.slots.time_slot] = pre[nclk]
        r = prog.rates_fn(s2)
        d = theta * hh
        for i in range(nclk):
            s2[i] += d * r[i]
        s2[self.slots.time_slot] += d
        return s2

    def _handle_flips(self, prog, ctx: _RunCtx, hh: float, rng):
        """Process watched sign changes inside the last committed step, in
        crossing order.  Urgent/cost crossings roll the state back to the
        interpolated crossing point."""
        s, locs = ctx.s, ctx.locs
        entries = []
        for widx, wpre, wpost in ctx.flips:
            denom = wpre - wpost
            theta = 1.0 if denom == 0.0 else max(0.0, min(1.0, wpre / denom))
            entries.append((theta, widx, wpre, wpost))
        entries.sort()
        i = 0
        while i < len(entries):
            theta = entries[i][0]
            group = [e for e in entries if e[0] == theta]
            i += len(group)
            s2 = self._interp_state(prog, s, ctx.pre, theta, hh)
            t2 = s2[self.slots.time_slot]
            terminal: list[tuple[str, Optional[int]]] = []
            for _, widx, wpre, wpost in group:
                w = prog.watches[widx]
                if w.purpose == "monitor":
                    self._update_verdict(ctx, s2, locs, t2)
                    if ctx.verdict is not None and self.early_stop:
                        s[:] = s2
                        return "verdict", ctx.verdict
                elif w.purpose == "cost":
                    if wpost <= 0.0 < wpre:
                        terminal.append(("cost", None))
                elif w.purpose == "urgent":
                    loc = self.compiler.loc_rt[w.comp][locs[w.comp]]
                    for edge in loc.outputs:
                        if edge.urgent and (edge.guard_fn is None or edge.guard_fn(s2)):
                            terminal.append(("urgent", w.comp))
                            break
                elif w.purpose in ("peak_hi", "peak_lo") and ctx.tracker is not None:
                    ctx.tracker.feed(t2, self.peak_fn(s2))
            if terminal:
                pick = terminal[0] if len(terminal) == 1 else terminal[int(rng.random() * len(terminal))]
                s[:] = s2
                return pick
        return None

    def _fire(self, winner: int, ctx: _RunCtx, rng) -> Optional[str]:
        """Winner emits a chosen enabled output; every other component with an
        enabled input edge follows.  None when no output guard held."""
        s, locs = ctx.s, ctx.locs
        loc = self.compiler.loc_rt[winner][locs[winner]]
        choices = []
        total = 0.0
        for edge in loc.outputs:
            if edge.guard_fn is None or edge.guard_fn(s):
                for br in edge.branches:
                    w = br.weight_fn(s)
                    if w < 0.0:
                        raise ModelError(
                            f"negative branch weight in {self.network.components[winner].name}"
                        )
                    choices.append((edge, br, w))
                    total += w
        if not choices or total <= 0.0:
            return None
        if self.record:
            ctx.rows.append(self.row_fn(s))  # pre-event sample
        edge, br = self._pick(choices, total, rng)
        br.apply_fn(s, rng)
        locs[winner] = br.target
        action = edge.action

        for j in range(len(locs)):
            if j == winner:
                continue
            in_edges = self.compiler.loc_rt[j][locs[j]].inputs.get(action)
            if not in_edges:
                continue
            rchoices = []
            rtotal = 0.0
            for e in in_edges:
                if e.guard_fn is None or e.guard_fn(s):
                    for b in e.branches:
                        w = b.weight_fn(s)
                        if w < 0.0:
                            raise ModelError(
                                f"negative branch weight in {self.network.components[j].name}"
                            )
                        rchoices.append((e, b, w))
                        rtotal += w
            if not rchoices or rtotal <= 0.0:
                continue  # input ignored: stay put
            _, b, = self._pick(rchoices, rtotal, rng)
            b.apply_fn(s, rng)
            locs[j] = b.target

        self._check_finite(s)
        self._check_invariants(s, locs)
        t = s[self.slots.time_slot]
        ctx.events_list.append((t, action, self.network.components[winner].name))
        if self.record:
            ctx.rows.append(self.row_fn(s))  # post-event sample
            ctx.loc_spans.append((len(ctx.rows) - 1, tuple(locs)))
        return action

    @staticmethod
    def _pick(choices, total: float, rng):
        if len(choices) == 1:
            edge, br, _ = choices[0]
            return edge, br
        u = rng.random() * total
        acc = 0.0
        for edge, br, w in choices:
            acc += w
            if u <= acc:
                return edge, br
        edge, br, _ = choices[-1]
        return edge, br

    def _check_finite(self, s):
        for v in s:
            if not (-1e300 < v < 1e300):
                raise NonFinite("state is no longer finite after an update")

    def _check_invariants(self, s, locs):
        """Overshoot within one step's drift is tolerated; more is an error."""
        h0 = self.dt
        for j, k in enumerate(locs):
            loc = self.compiler.loc_rt[j][k]
            if loc.invariant_fn is None or loc.invariant_fn(s):
                continue
            prog = self.compiler.program(tuple(locs))
            r = prog.rates_fn(s)
            scratch = list(s)
            for i in range(self.slots.n_clocks):
                scratch[i] += h0 * r[i]
            scratch[self.slots.time_slot] += h0
            for margin_fn, _expr in loc.invariant_margins:
                m = margin_fn(s)
                if m >= 0.0:
                    continue
                slope = abs(margin_fn(scratch) - m) / h0
                if -m > 2.0 * slope * h0 + 1e-9:
                    raise InvariantAlreadyViolated(
                        f"{self.network.components[j].name} violates the invariant "
                        f"of '{loc.name}' by {-m:g}"
                    )

    def _final_verdict(self, ctx: _RunCtx) -> Optional[Verdict]:
        if ctx.verdict is not None:
            return ctx.verdict
        if self.online_kind is None:
            return None
        t = ctx.s[self.slots.time_slot]
        if ctx.reason == "zeno-abort":
            return Verdict("inconclusive", t)
        if self.online_kind == "<>":
            return Verdict("inconclusive", t)
        return Verdict("satisfied", t)

    def _finish(self, ctx: _RunCtx) -> RunOutcome:
        out = RunOutcome()
        out.reason = ctx.reason
        out.events = ctx.events
        out.end_time = ctx.s[self.slots.time_slot]
        out.verdict = self._final_verdict(ctx)
        if self.value_fn is not None:
            out.extremum = ctx.track[0]
        if ctx.tracker is not None:
            out.gaps = ctx.tracker.gaps
        if self.record:
            out.run = self._assemble_run(ctx)
        return out

    def _assemble_run(self, ctx: _RunCtx) -> Run:
        rows = ctx.rows
        times = [r[0] for r in rows]
        columns = {
            name: [r[k + 1] for r in rows] for k, name in enumerate(self.column_names)
        }
        for atom in self.loc_atoms:
            j = self.compiler.comp_index[atom.instance]
            k = self.compiler.comp_index[atom.instance, atom.location]
            col = [0.0] * len(rows)
            spans = ctx.loc_spans + [(len(rows), None)]
            for (start, mode), (end, _) in zip(spans, spans[1:]):
                if mode is not None and mode[j] == k:
                    for i in range(start, end):
                        col[i] = 1.0
            columns[f"{atom.instance}.{atom.location}"] = col
        return Run(times=times, columns=columns, events=ctx.events_list, reason=ctx.reason)


# -- spec-level operations ------------------------------------------------------


def euler_step(valuation, rate_valuation, dt: float) -> dict[str, float]:
    """One fixed-step Euler update, rates held constant during the step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = {}
    for name, v in valuation.items():
        nv = v + dt * rate_valuation.get(name, 0.0)
        if not (-1e300 < nv < 1e300) or nv != nv:
            raise NonFinite(f"'{name}' became non-finite")
        out[name] = nv
    return out


_RUNTIME_CACHE: dict[int, tuple[Network, Runtime]] = {}


def _plain_runtime(network: Network, dt: float) -> Runtime:
    key = id(network)
    hit = _RUNTIME_CACHE.get(key)
    if hit is not None and hit[0] is network and hit[1].dt == dt:
        return hit[1]
    rt = Runtime(network, bound=TimeBound(INF), dt=dt)
    if len(_RUNTIME_CACHE) > 32:
        _RUNTIME_CACHE.clear()
    _RUNTIME_CACHE[key] = (network, rt)
    return rt


def _state_to_slots(rt: Runtime, state: State) -> tuple[list[float], list[int]]:
    s = [0.0] * len(rt.slots.names)
    for n, v in state.clocks.items():
        s[rt.slots.index[n]] = v
    for n, v in state.discrete.items():
        s[rt.slots.index[n]] = v
    s[rt.slots.time_slot] = state.time
    locs = [
        rt.compiler.loc_index[j][name] for j, name in enumerate(state.locations)
    ]
    return s, locs


def _slots_to_state(rt: Runtime, s: list[float], locs: list[int]) -> State:
    clocks = {n: s[rt.slots.index[n]] for n in rt.slots.clock_names}
    discrete = {n: s[rt.slots.index[n]] for n in rt.slots.discrete_names}
    names = tuple(
        rt.network.components[j].locations[k].name for j, k in enumerate(locs)
    )
    return State(locations=names, clocks=clocks, discrete=discrete, time=s[rt.slots.time_slot])


def delay_distribution(network: Network, component: int, state: State, dt: float = DEFAULT_DT):
    """The component's current delay distribution: Dirac(0) when an urgent
    output is enabled, Uniform(0, dmax) when the invariant bounds the delay,
    Exponential(rate) otherwise; None when the component cannot output."""
    rt = _plain_runtime(network, dt)
    s, locs = _state_to_slots(rt, state)
    _assert_invariants(rt, s, locs)
    j = component
    loc = rt.compiler.loc_rt[j][locs[j]]
    for edge in loc.outputs:
        if edge.urgent and (edge.guard_fn is None or edge.guard_fn(s)):
            return Dirac(0.0)
    prog = rt.compiler.program(tuple(locs))
    spec = prog.delay_specs[j]
    if spec.kind in (NEVER, URGENT_ONLY):
        return None
    if spec.kind == UNIFORM:
        dmax = rt._window(prog, spec, s)
        if dmax < INF:
            return Uniform(0.0, dmax)
    rate = spec.exp_rate_fn(s) if spec.exp_rate_fn is not None else 0.0
    if rate <= 0.0:
        return None
    return Exponential(rate)


def _assert_invariants(rt: Runtime, s, locs):
    rt._check_invariants(s, locs)


def race(network: Network, state: State, dt: float, rng) -> RaceOutcome:
    """One race: every component samples a delay, the integrator bids ``dt``;
    minimum wins (ties uniform), and a winning component picks its output by
    the weights evaluated in the delayed state."""
    rt = _plain_runtime(network, DEFAULT_DT if dt == INF else dt)
    s, locs = _state_to_slots(rt, state)
    prog = rt.compiler.program(tuple(locs))
    bids = [INF] * len(network.components)
    t = s[rt.slots.time_slot]
    rt._sample_bids(prog, s, t, rng, bids)
    delays = [b - t for b in bids] + [dt]
    dmin = min(delays)
    winners = [i for i, d in enumerate(delays) if d == dmin]
    pick = winners[0] if len(winners) == 1 else winners[int(rng.random() * len(winners))]
    if pick == len(network.components):
        return RaceOutcome(-1, dt, None)
    # advance a copy to the chosen delay and pick the output there
    s2 = list(s)
    _advance_plain(rt, prog, s2, dmin)
    loc = rt.compiler.loc_rt[pick][locs[pick]]
    choices = []
    total = 0.0
    for edge in loc.outputs:
        if edge.guard_fn is None or edge.guard_fn(s2):
            for br in edge.branches:
                w = br.weight_fn(s2)
                choices.append((edge, br, w))
                total += w
    if not choices or total <= 0.0:
        return RaceOutcome(pick, dmin, None)
    edge, _br = Runtime._pick(choices, total, rng)
    return RaceOutcome(pick, dmin, edge.action)


def _advance_plain(rt: Runtime, prog, s, delay: float):
    """Advance clocks by ``delay``, splitting at dt boundaries with rate
    re-evaluation (no watches)."""
    left = delay
    nclk = rt.slots.n_clocks
    while left > 0.0:
        h = rt.dt if left > rt.dt else left
        r = prog.rates_fn(s)
        for i in range(nclk):
            s[i] += h * r[i]
        s[rt.slots.time_slot] += h
        left -= h


def fire(network: Network, state: State, outcome: RaceOutcome, rng, dt: float = DEFAULT_DT) -> State:
    """Advance by the outcome's delay and apply its discrete effect: the
    winner takes an enabled edge for the chosen action, receivers with
    enabled input edges follow, everyone else stays put."""
    rt = _plain_runtime(network, dt)
    s, locs = _state_to_slots(rt, state)
    prog = rt.compiler.program(tuple(locs))
    _advance_plain(rt, prog, s, outcome.delay)
    if outcome.winner >= 0 and outcome.action is not None:
        ctx = _RunCtx(s, locs, len(network.components), "max", None)
        loc = rt.compiler.loc_rt[outcome.winner][locs[outcome.winner]]
        choices = []
        total = 0.0
        for edge in loc.outputs:
            if edge.action != outcome.action:
                continue
            if edge.guard_fn is None or edge.guard_fn(s):
                for br in edge.branches:
                    w = br.weight_fn(s)
                    choices.append((edge, br, w))
                    total += w
        if choices and total > 0.0:
            edge, br = Runtime._pick(choices, total, rng)
            br.apply_fn(s, rng)
            locs[outcome.winner] = br.target
            for j in range(len(locs)):
                if j == outcome.winner:
                    continue
                in_edges = rt.compiler.loc_rt[j][locs[j]].inputs.get(outcome.action)
                if not in_edges:
                    continue
                rchoices = []
                rtotal = 0.0
                for e in in_edges:
                    if e.guard_fn is None or e.guard_fn(s):
                        for b in e.branches:
                            w = b.weight_fn(s)
                            rchoices.append((e, b, w))
                            rtotal += w
                if rchoices and rtotal > 0.0:
                    _, b = Runtime._pick(rchoices, rtotal, rng)
                    b.apply_fn(s, rng)
                    locs[j] = b.target
        rt._check_finite(s)
        rt._check_invariants(s, locs)
    return _slots_to_state(rt, s, locs)


def simulate(
    network: Network,
    bound: Bound,
    dt: float,
    observables: Sequence[Expr],
    rng,
    zeno_cap: int = ZENO_CAP,
    zeno_eps: float = ZENO_EPS,
) -> Run:
    """Generate one recorded run; raises ZenoAbort if the heuristic trips."""
    rt = Runtime(
        network,
        bound=bound,
        dt=dt,
        observables=observables,
        record=True,
        zeno_cap=zeno_cap,
        zeno_eps=zeno_eps,
    )
    out = rt.run(rng)
    if out.reason == "zeno-abort":
        raise ZenoAbort(
            f"aborted after {out.events} transitions without time progress",
            state=out.run,
        )
    return out.run
