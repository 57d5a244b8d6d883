"""Lexer and recursive-descent parsers for the model format and the query
language.

Model files are flat keyword-based text: global declarations, ``template``
blocks containing ``location``/``edge`` clauses, and one ``system`` line.
Queries are single lines (``simulate``, ``Pr``, ``E``, ``distance``).  All
identifiers are resolved against the declarations while parsing, so
diagnostics carry line/column positions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .errors import BadBound, DuplicateDeclaration, ParseError, UnresolvedIdentifier
from .expr import (
    Binary,
    Bool,
    Call,
    Expr,
    Index,
    Name,
    Num,
    Unary,
    contains_random,
    fold,
    substitute,
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
from .queries import (
    CostBound,
    Bound,
    MonitorDistance,
    ProbCompare,
    ProbEstimate,
    ProbHypothesis,
    Query,
    Simulate,
    StepBound,
    TimeBound,
    ValueEstimate,
)

# -- document AST ------------------------------------------------------------


@dataclass(frozen=True)
class VarDecl:
    kind: str  # 'const' | 'int' | 'var' | 'clock'
    name: str
    size: Optional[int]  # None for scalars
    init: tuple[Expr, ...]  # one per element; empty means default 0


@dataclass(frozen=True)
class ChanDecl:
    name: str
    size: Optional[int]
    urgent: bool


@dataclass(frozen=True)
class FuncDecl:
    name: str
    params: tuple[str, ...]
    body: Expr


@dataclass(frozen=True)
class RateClause:
    clock: str
    index: Optional[Expr]
    expr: Expr


@dataclass(frozen=True)
class LocationDecl:
    name: str
    invariants: tuple[Expr, ...] = ()
    rates: tuple[RateClause, ...] = ()
    exp_rate: Optional[Expr] = None


@dataclass(frozen=True)
class Assign:
    target: str
    index: Optional[Expr]
    expr: Expr


@dataclass(frozen=True)
class EdgeDecl:
    source: str
    target: str
    guard: Optional[Expr]
    chan: str
    chan_index: Optional[Expr]
    direction: str  # '!' or '?'
    weight: Optional[Expr]
    updates: tuple[Assign, ...]


@dataclass(frozen=True)
class TemplateDecl:
    name: str
    params: tuple[str, ...]
    locals: tuple[VarDecl, ...]
    locations: tuple[LocationDecl, ...]
    initial: str
    edges: tuple[EdgeDecl, ...]


@dataclass(frozen=True)
class InstanceDecl:
    template: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class ModelDocument:
    declarations: tuple[VarDecl, ...]
    channels: tuple[ChanDecl, ...]
    funcs: tuple[FuncDecl, ...]
    templates: tuple[TemplateDecl, ...]
    instances: tuple[InstanceDecl, ...]


# -- lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>//[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|&&|\|\||->|<>|\[\]|[-+*/<>!&|(){}\[\];,=?:.'\#])
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "const", "int", "var", "clock", "chan", "broadcast", "urgent",
    "template", "location", "edge", "init", "invariant", "rate", "exprate",
    "guard", "sync", "weight", "update", "system", "func",
    "true", "false", "and", "or", "not",
    "simulate", "Pr", "E", "distance", "min", "max",
}

BUILTIN_CALLS = {"sin": 1, "cos": 1, "log": 1, "exp": 1, "sqrt": 1, "random": 1}


@dataclass(frozen=True)
class Token:
    kind: str  # 'num' | 'ident' | 'kw' | 'op' | 'eof'
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    line, col, pos = 1, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(s)
        else:
            if kind == "ident" and s in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, s, line, col))
            col += len(s)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


# -- symbol table used while parsing -----------------------------------------


@dataclass
class _Sym:
    kind: str  # 'const' 'int' 'var' 'clock' 'chan' 'func' 'template' 'param' 'builtin'
    size: Optional[int] = None  # array length, None for scalars
    arity: Optional[int] = None  # funcs / templates
    urgent: bool = False  # channels
    decl: Optional["FuncDecl"] = None  # funcs


class _Scope:
    def __init__(self):
        self.globals: dict[str, _Sym] = {"time": _Sym("builtin")}
        self.locals: Optional[dict[str, _Sym]] = None

    def declare(self, name: str, sym: _Sym, tok: Token):
        table = self.locals if self.locals is not None else self.globals
        if name in table or name in self.globals or name in BUILTIN_CALLS:
            raise DuplicateDeclaration(f"'{name}' already declared", tok.line, tok.col)
        table[name] = sym

    def lookup(self, name: str) -> Optional[_Sym]:
        if self.locals is not None and name in self.locals:
            return self.locals[name]
        return self.globals.get(name)


class Parser:
    """Single-pass recursive-descent parser with resolution."""

    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.scope = _Scope()
        self.check_symbols = True

    # token plumbing
    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def accept(self, text: str) -> Optional[Token]:
        t = self.peek()
        if t.text == text and t.kind in ("op", "kw"):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected '{text}', found '{t.text or 'end of input'}'", t.line, t.col)
        return t

    def ident(self, what: str = "identifier") -> Token:
        t = self.next()
        if t.kind != "ident":
            raise ParseError(f"expected {what}, found '{t.text or 'end of input'}'", t.line, t.col)
        return t

    def error(self, msg: str, tok: Optional[Token] = None):
        t = tok or self.peek()
        raise ParseError(msg, t.line, t.col)

    # -- expressions ----------------------------------------------------

    def expression(self) -> Expr:
        return self._or()

    def _or(self) -> Expr:
        e = self._and()
        while self.peek().text in ("||", "|", "or") and self.peek().kind in ("op", "kw"):
            self.next()
            e = Binary("or", e, self._and())
        return e

    def _and(self) -> Expr:
        e = self._not()
        while self.peek().text in ("&&", "&", "and") and self.peek().kind in ("op", "kw"):
            self.next()
            e = Binary("and", e, self._not())
        return e

    def _not(self) -> Expr:
        if self.peek().text in ("!", "not") and self.peek().kind in ("op", "kw"):
            self.next()
            return Unary("not", self._not())
        return self._cmp()

    def _cmp(self) -> Expr:
        e = self._arith()
        t = self.peek()
        if t.kind == "op" and t.text in ("<", "<=", ">", ">=", "==", "!="):
            self.next()
            return Binary(t.text, e, self._arith())
        return e

    def _arith(self) -> Expr:
        e = self._term()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = self.next().text
            e = Binary(op, e, self._term())
        return e

    def _term(self) -> Expr:
        e = self._factor()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = self.next().text
            e = Binary(op, e, self._factor())
        return e

    def _factor(self) -> Expr:
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.next()
            e = self._factor()
            return Num(-e.value) if type(e) is Num else Unary("-", e)
        if t.kind == "num":
            self.next()
            return Num(float(t.text))
        if t.kind == "kw" and t.text in ("true", "false"):
            self.next()
            return Bool(t.text == "true")
        if t.kind == "op" and t.text == "(":
            self.next()
            e = self.expression()
            self.expect(")")
            return e
        if t.kind == "ident":
            return self._name_or_call()
        self.error(f"expected expression, found '{t.text or 'end of input'}'")

    def _name_or_call(self) -> Expr:
        t = self.ident()
        name = t.text
        if self.peek().text == "(" and self.peek().kind == "op":
            self.next()
            args = []
            if self.peek().text != ")":
                args.append(self.expression())
                while self.accept(","):
                    args.append(self.expression())
            self.expect(")")
            if name in BUILTIN_CALLS:
                if len(args) != BUILTIN_CALLS[name]:
                    self.error(f"'{name}' takes {BUILTIN_CALLS[name]} argument(s)", t)
                return Call(name, tuple(args))
            sym = self.scope.lookup(name) if self.check_symbols else None
            if self.check_symbols:
                if sym is None or sym.kind != "func":
                    raise UnresolvedIdentifier(f"unknown function '{name}'", t.line, t.col)
                if len(args) != sym.arity:
                    self.error(f"'{name}' takes {sym.arity} argument(s)", t)
                fdecl = sym.decl
                return substitute(fdecl.body, dict(zip(fdecl.params, args)))
            return Call(name, tuple(args))
        if self.peek().text == "[" and self.peek(1).text != "]":
            if self._looks_like_index():
                self.next()
                idx = self.expression()
                self.expect("]")
                self._check_array(name, idx, t)
                folded = fold(idx)
                if type(folded) is Num:
                    return Name(f"{name}[{int(folded.value)}]")
                return Index(name, idx)
        self._check_scalar(name, t)
        return Name(name)

    def _looks_like_index(self) -> bool:
        # Distinguish `x[3]` from a following bound like `x [<=40]` in queries.
        nxt = self.peek(1)
        return not (nxt.kind == "op" and nxt.text in ("<=", "#"))

    def _check_array(self, name: str, idx: Expr, tok: Token):
        if not self.check_symbols:
            return
        sym = self.scope.lookup(name)
        if sym is None:
            raise UnresolvedIdentifier(f"unknown identifier '{name}'", tok.line, tok.col)
        if sym.size is None:
            self.error(f"'{name}' is not an array", tok)
        folded = fold(idx)
        if type(folded) is Num:
            k = int(folded.value)
            if k != folded.value or not 0 <= k < sym.size:
                self.error(f"index {folded.value!r} out of range for '{name}[{sym.size}]'", tok)

    def _check_scalar(self, name: str, tok: Token):
        if not self.check_symbols:
            return
        sym = self.scope.lookup(name)
        if sym is None:
            raise UnresolvedIdentifier(f"unknown identifier '{name}'", tok.line, tok.col)
        if sym.kind in ("chan", "template", "func"):
            self.error(f"'{name}' ({sym.kind}) cannot appear in an expression", tok)
        if sym.size is not None:
            self.error(f"array '{name}' must be indexed", tok)

    # -- model documents --------------------------------------------------

    def model_document(self) -> ModelDocument:
        decls: list[VarDecl] = []
        chans: list[ChanDecl] = []
        funcs: list[FuncDecl] = []
        templates: list[TemplateDecl] = []
        instances: Optional[tuple[InstanceDecl, ...]] = None
        while self.peek().kind != "eof":
            t = self.peek()
            if t.text in ("const", "int", "var", "clock"):
                decls.extend(self._var_decl())
            elif t.text in ("urgent", "broadcast", "chan"):
                chans.extend(self._chan_decl())
            elif t.text == "func":
                funcs.append(self._func_decl())
            elif t.text == "template":
                templates.append(self._template())
            elif t.text == "system":
                if instances is not None:
                    self.error("duplicate system line", t)
                instances = self._system()
            else:
                self.error(f"expected declaration, found '{t.text or 'end of input'}'")
        if instances is None:
            self.error("model has no system line")
        return ModelDocument(
            declarations=tuple(decls),
            channels=tuple(chans),
            funcs=tuple(funcs),
            templates=tuple(templates),
            instances=instances,
        )

    def _var_decl(self) -> list[VarDecl]:
        kind = self.next().text
        out = []
        while True:
            t = self.ident()
            size = self._opt_size()
            init: tuple[Expr, ...] = ()
            if self.accept("="):
                init = self._init_values(size)
            if kind == "const" and not init:
                self.error("constants need an initializer", t)
            for e in init:
                if contains_random(e):
                    self.error("random() is not allowed in initializers", t)
            self.scope.declare(t.text, _Sym(kind, size), t)
            out.append(VarDecl(kind, t.text, size, init))
            if not self.accept(","):
                break
        self.expect(";")
        return out

    def _opt_size(self) -> Optional[int]:
        if self.peek().text == "[" and self.peek().kind == "op":
            self.next()
            t = self.next()
            if t.kind != "num" or "." in t.text:
                self.error("array size must be an integer literal", t)
            self.expect("]")
            size = int(t.text)
            if size <= 0:
                self.error("array size must be positive", t)
            return size
        return None

    def _init_values(self, size: Optional[int]) -> tuple[Expr, ...]:
        if self.accept("{"):
            vals = [self.expression()]
            while self.accept(","):
                vals.append(self.expression())
            self.expect("}")
            if size is not None and len(vals) != size:
                self.error(f"expected {size} initializer(s), got {len(vals)}")
            return tuple(vals)
        e = self.expression()
        if size is not None:
            return tuple([e] * size)
        return (e,)

    def _chan_decl(self) -> list[ChanDecl]:
        urgent = bool(self.accept("urgent"))
        self.accept("broadcast")
        self.expect("chan")
        out = []
        while True:
            t = self.ident()
            size = self._opt_size()
            self.scope.declare(t.text, _Sym("chan", size, urgent=urgent), t)
            out.append(ChanDecl(t.text, size, urgent))
            if not self.accept(","):
                break
        self.expect(";")
        return out

    def _func_decl(self) -> FuncDecl:
        self.expect("func")
        t = self.ident()
        self.expect("(")
        params = []
        if self.peek().text != ")":
            params.append(self.ident().text)
            while self.accept(","):
                params.append(self.ident().text)
        self.expect(")")
        self.expect("=")
        saved = self.scope.locals
        self.scope.locals = {p: _Sym("param") for p in params}
        body = self.expression()
        self.scope.locals = saved
        self.expect(";")
        if contains_random(body):
            self.error("random() is not allowed in function bodies", t)
        decl = FuncDecl(t.text, tuple(params), body)
        self.scope.declare(t.text, _Sym("func", arity=len(params), decl=decl), t)
        return decl

    def _template(self) -> TemplateDecl:
        self.expect("template")
        name_tok = self.ident()
        self.expect("(")
        params = []
        if self.peek().text != ")":
            params.append(self.ident().text)
            while self.accept(","):
                params.append(self.ident().text)
        self.expect(")")
        self.expect("{")

        self.scope.locals = {}
        for p in params:
            if p in self.scope.globals:
                self.error(f"parameter '{p}' shadows a global", name_tok)
            self.scope.locals[p] = _Sym("param")

        locals_: list[VarDecl] = []
        locations: list[LocationDecl] = []
        edges: list[EdgeDecl] = []
        initial: Optional[str] = None
        loc_edge_toks: list[Token] = []
        while not self.accept("}"):
            t = self.peek()
            if t.text in ("clock", "int", "var", "const"):
                locals_.extend(self._var_decl())
            elif t.text == "location":
                locations.append(self._location())
            elif t.text == "init":
                self.next()
                it = self.ident()
                if initial is not None:
                    self.error("duplicate init clause", it)
                initial = it.text
                loc_edge_toks.append(it)
                self.expect(";")
            elif t.text == "edge":
                edges.append(self._edge())
                loc_edge_toks.append(t)
            else:
                self.error(f"expected template clause, found '{t.text or 'end of input'}'")
        self.scope.locals = None

        loc_names = {l.name for l in locations}
        if len(loc_names) != len(locations):
            self.error(f"duplicate location name in template '{name_tok.text}'", name_tok)
        if initial is None:
            self.error(f"template '{name_tok.text}' has no init clause", name_tok)
        for ref, tok in zip([initial] + [e.source for e in edges], loc_edge_toks):
            if ref not in loc_names:
                raise UnresolvedIdentifier(f"unknown location '{ref}'", tok.line, tok.col)
        for e in edges:
            if e.target not in loc_names:
                self.error(f"unknown location '{e.target}'", name_tok)

        tpl = TemplateDecl(
            name_tok.text, tuple(params), tuple(locals_),
            tuple(locations), initial, tuple(edges),
        )
        self.scope.declare(name_tok.text, _Sym("template", arity=len(params)), name_tok)
        return tpl

    def _location(self) -> LocationDecl:
        self.expect("location")
        t = self.ident()
        self.expect("{")
        invariants: list[Expr] = []
        rate_clauses: list[RateClause] = []
        exp_rate: Optional[Expr] = None
        while not self.accept("}"):
            c = self.next()
            if c.text == "invariant":
                e = self.expression()
                self._no_random(e, c, "invariants")
                invariants.append(e)
            elif c.text == "rate":
                ct = self.ident("clock name")
                idx = None
                if self.peek().text == "[":
                    self.next()
                    idx = self.expression()
                    self.expect("]")
                    self._check_array(ct.text, idx, ct)
                else:
                    self._check_scalar(ct.text, ct)
                sym = self.scope.lookup(ct.text)
                if sym is not None and sym.kind != "clock":
                    self.error(f"rate target '{ct.text}' is not a clock", ct)
                self.expect("'")
                self.expect("=")
                e = self.expression()
                self._no_random(e, c, "rates")
                if any(r.clock == ct.text and r.index == idx for r in rate_clauses):
                    raise DuplicateDeclaration(f"duplicate rate for '{ct.text}'", ct.line, ct.col)
                rate_clauses.append(RateClause(ct.text, idx, e))
            elif c.text == "exprate":
                if exp_rate is not None:
                    self.error("duplicate exprate clause", c)
                exp_rate = self.expression()
                self._no_random(exp_rate, c, "delay rates")
            else:
                self.error(f"expected location clause, found '{c.text}'", c)
            self.expect(";")
        return LocationDecl(t.text, tuple(invariants), tuple(rate_clauses), exp_rate)

    def _edge(self) -> EdgeDecl:
        self.expect("edge")
        src = self.ident().text
        self.expect("->")
        dst = self.ident().text
        self.expect("{")
        guard = weight = None
        sync = None
        updates: list[Assign] = []
        while not self.accept("}"):
            c = self.next()
            if c.text == "guard":
                if guard is not None:
                    self.error("duplicate guard clause", c)
                guard = self.expression()
                self._no_random(guard, c, "guards")
            elif c.text == "sync":
                if sync is not None:
                    self.error("duplicate sync clause", c)
                ct = self.ident("channel name")
                sym = self.scope.lookup(ct.text)
                if sym is None or sym.kind != "chan":
                    raise UnresolvedIdentifier(f"unknown channel '{ct.text}'", ct.line, ct.col)
                idx = None
                if self.peek().text == "[":
                    self.next()
                    idx = self.expression()
                    self.expect("]")
                    if sym.size is None:
                        self.error(f"channel '{ct.text}' is not an array", ct)
                elif sym.size is not None:
                    self.error(f"channel array '{ct.text}' must be indexed", ct)
                d = self.next()
                if d.text not in ("!", "?"):
                    self.error("expected '!' or '?' after channel", d)
                sync = (ct.text, idx, d.text, getattr(sym, "urgent", False))
            elif c.text == "weight":
                if weight is not None:
                    self.error("duplicate weight clause", c)
                weight = self.expression()
                self._no_random(weight, c, "weights")
            elif c.text == "update":
                updates.extend(self._assignments(c))
            else:
                self.error(f"expected edge clause, found '{c.text}'", c)
            self.expect(";")
        if sync is None:
            self.error(f"edge {src} -> {dst} has no sync clause")
        chan, idx, direction, urgent = sync
        if urgent and direction == "!" and weight is not None:
            self.error(f"urgent output edge on '{chan}' cannot carry a weight")
        return EdgeDecl(src, dst, guard, chan, idx, direction, weight, tuple(updates))

    def _assignments(self, ctx: Token) -> list[Assign]:
        out = []
        while True:
            t = self.ident("assignment target")
            sym = self.scope.lookup(t.text)
            if sym is None:
                raise UnresolvedIdentifier(f"unknown identifier '{t.text}'", t.line, t.col)
            if sym.kind not in ("clock", "int", "var"):
                self.error(f"cannot assign to {sym.kind} '{t.text}'", t)
            idx = None
            if self.peek().text == "[":
                self.next()
                idx = self.expression()
                self.expect("]")
                self._check_array(t.text, idx, t)
            elif sym.size is not None:
                self.error(f"array '{t.text}' must be indexed", t)
            self.expect("=")
            out.append(Assign(t.text, idx, self.expression()))
            if not self.accept(","):
                return out

    def _no_random(self, e: Expr, tok: Token, where: str):
        if contains_random(e):
            self.error(f"random() is not allowed in {where}", tok)

    def _system(self) -> tuple[InstanceDecl, ...]:
        self.expect("system")
        out = []
        while True:
            t = self.ident("template name")
            sym = self.scope.lookup(t.text)
            if sym is None or sym.kind != "template":
                raise UnresolvedIdentifier(f"unknown template '{t.text}'", t.line, t.col)
            args: list[Expr] = []
            if self.accept("("):
                if self.peek().text != ")":
                    args.append(self.expression())
                    while self.accept(","):
                        args.append(self.expression())
                self.expect(")")
            out.append(InstanceDecl(t.text, tuple(args)))
            if not self.accept(","):
                break
        self.expect(";")
        return tuple(out)

    # -- queries -----------------------------------------------------------

    def query(self) -> Query:
        t = self.peek()
        if t.text == "simulate":
            return self._simulate()
        if t.text == "Pr":
            return self._pr_query()
        if t.text == "E":
            return self._value_query()
        if t.text == "distance":
            return self._distance_query()
        self.error(f"expected a query, found '{t.text or 'end of input'}'")

    def _simulate(self) -> Query:
        self.expect("simulate")
        t = self.next()
        if t.kind != "num" or "." in t.text:
            self.error("expected run count", t)
        bound = self._bound()
        self.expect("{")
        obs = [self.expression()]
        while self.accept(","):
            obs.append(self.expression())
        self.expect("}")
        self._end_of_query()
        for e in obs:
            if contains_random(e):
                self.error("random() is not allowed in observables", t)
        return Simulate(int(t.text), bound, tuple(obs))

    def _pr_query(self) -> Query:
        self.expect("Pr")
        bound = self._bound()
        self.expect("(")
        f = self.path_formula()
        self.expect(")")
        t = self.peek()
        if t.kind == "op" and t.text in (">=", "<="):
            relation = self.next().text
            if self.peek().text == "Pr":
                if relation != ">=":
                    self.error("probability comparison uses '>='", t)
                self.next()
                bound2 = self._bound()
                self.expect("(")
                f2 = self.path_formula()
                self.expect(")")
                self._end_of_query()
                return ProbCompare(bound, f, bound2, f2)
            nt = self.next()
            if nt.kind != "num":
                self.error("expected probability threshold", nt)
            self._end_of_query()
            theta = float(nt.text)
            if not 0.0 < theta < 1.0:
                self.error(f"threshold {theta} outside (0,1)", nt)
            return ProbHypothesis(bound, f, relation, theta)
        self._end_of_query()
        return ProbEstimate(bound, f)

    def _value_query(self) -> Query:
        self.expect("E")
        bound, runs = self._bound_with_count()
        self.expect("(")
        kw = self.next()
        if kw.text not in ("min", "max"):
            self.error("expected 'min:' or 'max:'", kw)
        self.expect(":")
        e = self.expression()
        self.expect(")")
        self._end_of_query()
        if contains_random(e):
            self.error("random() is not allowed in observables", kw)
        return ValueEstimate(bound, runs, kw.text, e)

    def _distance_query(self) -> Query:
        self.expect("distance")
        bound, runs = self._bound_with_count()
        self.expect("(")
        f = self.path_formula()
        self.expect(")")
        self._end_of_query()
        return MonitorDistance(bound, runs, f)

    def _bound_with_count(self) -> tuple[Bound, int]:
        self.expect("[")
        bound = self._bound_core()
        self.expect(";")
        t = self.next()
        if t.kind != "num" or "." in t.text:
            self.error("expected run count", t)
        self.expect("]")
        runs = int(t.text)
        if runs < 1:
            self.error("run count must be >= 1", t)
        return bound, runs

    def _bound(self) -> Bound:
        self.expect("[")
        b = self._bound_core()
        self.expect("]")
        return b

    def _bound_core(self) -> Bound:
        t = self.peek()
        if t.text == "<=":
            self.next()
            return TimeBound(self._bound_limit())
        if t.text == "#":
            self.next()
            self.expect("<=")
            nt = self.next()
            if nt.kind != "num" or "." in nt.text:
                raise BadBound("step bound must be an integer", nt.line, nt.col)
            return StepBound(int(nt.text))
        try:
            clock = self._arith()
            self.expect("<=")
            return CostBound(clock, self._bound_limit())
        except BadBound:
            raise
        except ParseError as err:
            raise BadBound(f"malformed bound: {err.args[0]}", t.line, t.col) from None

    def _bound_limit(self) -> float:
        t = self.peek()
        e = fold(self._arith())
        if type(e) is not Num or e.value < 0:
            raise BadBound("bound limit must be a nonnegative constant", t.line, t.col)
        return e.value

    def _end_of_query(self):
        t = self.peek()
        if t.kind != "eof":
            self.error(f"unexpected '{t.text}' after query")

    # -- path formulas -------------------------------------------------------

    def path_formula(self) -> Formula:
        if self.accept("<>"):
            return Eventually(self._formula_or())
        if self.accept("[]"):
            return Always(self._formula_or())
        return self._formula_or()

    def _formula_or(self) -> Formula:
        f = self._formula_and()
        while self.peek().text in ("|", "||", "or") and self.peek().kind in ("op", "kw"):
            self.next()
            f = FOr(f, self._formula_and())
        return f

    def _formula_and(self) -> Formula:
        f = self._formula_until()
        while self.peek().text in ("&", "&&", "and") and self.peek().kind in ("op", "kw"):
            self.next()
            f = FAnd(f, self._formula_until())
        return f

    def _formula_until(self) -> Formula:
        f = self._formula_unary()
        t = self.peek()
        if t.kind == "ident" and t.text == "U":
            self.next()
            self.expect("[")
            self.expect("<=")
            bt = self.peek()
            bound = fold(self._arith())
            if type(bound) is not Num or bound.value < 0:
                raise BadBound("until bound must be a nonnegative constant", bt.line, bt.col)
            self.expect("]")
            right = self._formula_until()
            return Until(f, right, bound.value)
        return f

    def _formula_unary(self) -> Formula:
        t = self.peek()
        if t.text in ("!", "not") and t.kind in ("op", "kw"):
            self.next()
            return FNot(self._formula_unary())
        if t.text == "(" and t.kind == "op":
            self.next()
            f = self.path_formula()
            self.expect(")")
            return f
        if t.text == "<>" or t.text == "[]":
            return self.path_formula()
        return self._formula_atom()

    def _formula_atom(self) -> Formula:
        loc = self._try_loc_atom()
        if loc is not None:
            return loc
        t = self.peek()
        e = self._cmp()
        if contains_random(e):
            self.error("random() is not allowed in formulas", t)
        return Atom(e)

    def _try_loc_atom(self) -> Optional[LocAtom]:
        # Instance.Location or Template(args).Location; args must be literals.
        start = self.i
        t = self.peek()
        if t.kind != "ident":
            return None
        saved_check = self.check_symbols
        self.check_symbols = False
        try:
            name = self.next().text
            args: Optional[list[float]] = None
            if self.peek().text == "(" and self.peek().kind == "op":
                self.next()
                args = []
                if self.peek().text != ")":
                    while True:
                        neg = bool(self.accept("-"))
                        nt = self.next()
                        if nt.kind != "num":
                            self.i = start
                            return None
                        args.append(-float(nt.text) if neg else float(nt.text))
                        if not self.accept(","):
                            break
                if self.peek().text != ")":
                    self.i = start
                    return None
                self.next()
            if self.peek().text != "." or self.peek().kind != "op":
                self.i = start
                return None
            self.next()
            loc = self.ident("location name").text
            # empty parens canonicalize to the bare template name
            label = name if not args else f"{name}({','.join(_fmt_arg(a) for a in args)})"
            return LocAtom(label, loc)
        finally:
            self.check_symbols = saved_check


def _fmt_arg(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(v)


# -- public entry points -------------------------------------------------------


def parse_model(text: str) -> ModelDocument:
    """Parse a model file into a document with all identifiers resolved."""
    return Parser(tokenize(text)).model_document()


def parse_expression(text: str) -> Expr:
    """Parse a standalone expression (no identifier resolution)."""
    p = Parser(tokenize(text))
    p.check_symbols = False
    e = p.expression()
    t = p.peek()
    if t.kind != "eof":
        p.error(f"unexpected '{t.text}' after expression")
    return e


def parse_formula(text: str) -> Formula:
    """Parse a standalone path formula (no identifier resolution)."""
    p = Parser(tokenize(text))
    p.check_symbols = False
    f = p.path_formula()
    t = p.peek()
    if t.kind != "eof":
        p.error(f"unexpected '{t.text}' after formula")
    return f


def parse_query(text: str, network=None) -> Query:
    """Parse a single query; resolve names against ``network`` when given."""
    p = Parser(tokenize(text))
    p.check_symbols = False
    q = p.query()
    if network is not None:
        from .resolve import resolve_query  # local import: avoids cycle

        q = resolve_query(q, network)
    return q


def parse_query_file(text: str, network=None) -> list[Query]:
    """One query per line; blank lines and ``//`` comments are skipped."""
    out = []
    for raw in text.splitlines():
        line = raw.split("//", 1)[0].strip()
        if line:
            out.append(parse_query(line, network))
    return out
