"""Small-step semantics over configurations ``tau; sigma; loc; m``.

Shared rules live in :func:`_step`; the honest and attacker rules for remote
redexes are supplied by a mode object (:class:`Good` or :class:`Bad`).  A step
yields a list of alternatives so that the same code drives deterministic
runs and exhaustive exploration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from miniprisma.ast import (
    CLFN,
    COFN,
    DONE,
    FALSE,
    MORE,
    SENDER,
    TRMP,
    TRUE,
    UNIT,
    WHO,
    WORD,
    App,
    Const,
    Get,
    Ident,
    IfLet,
    Kind,
    Lam,
    Let,
    Location,
    Pair,
    Prim,
    Program,
    RemoteS,
    RemoteT,
    Set,
    Term,
    Var,
    boolean,
    is_value,
    match_pattern,
    pure,
    substitute,
    tuple_,
    untuple,
)

RESULT = pure("_r")


@dataclass(frozen=True, slots=True)
class Write:
    loc: int
    var: Ident
    value: Term

    def __str__(self) -> str:
        return f"wr({self.loc}, {self.var.name}, {self.value})"


@dataclass(frozen=True, slots=True)
class Msg:
    loc: int
    value: Term

    def __str__(self) -> str:
        return f"msg({self.loc}, {self.value})"


Event = Union[Write, Msg]
Trace = tuple  # tuple[Event, ...]


@dataclass(frozen=True, slots=True)
class Configuration:
    normal: Trace
    synthetic: Trace
    loc: int
    term: Term

    def with_term(self, term: Term) -> "Configuration":
        return Configuration(self.normal, self.synthetic, self.loc, term)


@dataclass(frozen=True)
class Bounds:
    clients: tuple[int, ...] = (1, 2)
    universe: tuple[Term, ...] = ()
    step_budget: int = 10000
    path_limit: int = 200000
    # Literal attacker rule for await: pick any client, ignoring the predicate.
    attacker_ignores_predicates: bool = False

    def __post_init__(self) -> None:
        clients = tuple(sorted(set(self.clients)))
        if not clients or any(c < 1 for c in clients):
            raise ValueError("clients must be a non-empty set of naturals >= 1")
        object.__setattr__(self, "clients", clients)
        universe = tuple(dict.fromkeys(self.universe or default_universe(clients)))
        if UNIT not in universe:
            raise ValueError("universe must contain unit")
        if any(not is_value(v) for v in universe):
            raise ValueError("universe may contain only values")
        object.__setattr__(self, "universe", universe)

    def extend(self, values: Iterable[Term]) -> "Bounds":
        return Bounds(
            self.clients,
            tuple(dict.fromkeys((*self.universe, *values))),
            self.step_budget,
            self.path_limit,
            self.attacker_ignores_predicates,
        )


def default_universe(clients: Iterable[int] = (1, 2)) -> tuple[Term, ...]:
    base = [UNIT, TRUE, FALSE, Const(0), Const(1), Const(2), tuple_([Const(0), Const(1)])]
    base += [Const(c) for c in clients]
    return tuple(dict.fromkeys(base))


# --- step outcomes --------------------------------------------------------


@dataclass(frozen=True)
class Next:
    configs: tuple[Configuration, ...]


@dataclass(frozen=True)
class Value:
    config: Configuration


@dataclass(frozen=True)
class Stuck:
    reason: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.reason}: {self.detail}" if self.detail else self.reason


@dataclass(frozen=True)
class BudgetExceeded:
    pass


StepOutcome = Union[Next, Value, Stuck, BudgetExceeded]


class StuckError(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(reason)
        self.stuck = Stuck(reason, detail)


class BudgetError(Exception):
    pass


class InitError(ValueError):
    pass


# --- initialization -------------------------------------------------------


def init(clients: Iterable[int], p: Program) -> Configuration:
    clients = tuple(sorted(set(clients)))
    if not clients:
        raise InitError("client set must be non-empty")
    normal: list[Event] = []
    synthetic: list[Event] = []
    seen: set[tuple[int, Ident]] = set()

    def emit(defs, location: Location, out: list[Event]) -> None:
        for d in defs:
            if d.location is not location:
                continue
            locs = (0,) if location is Location.CONTRACT else clients
            for c in locs:
                if (c, d.var) in seen:
                    raise InitError(f"duplicate definition of this.{d.var.name} at location {c}")
                seen.add((c, d.var))
                out.append(Write(c, d.var, d.value))

    emit(p.defs, Location.CONTRACT, normal)
    emit(p.syndefs, Location.CONTRACT, synthetic)
    emit(p.defs, Location.CLIENT, normal)
    emit(p.syndefs, Location.CLIENT, synthetic)
    return Configuration(tuple(normal), tuple(synthetic), 0, p.main)


# --- shared rules ---------------------------------------------------------

Alt = tuple[Term, tuple, tuple]  # (term, appended normal events, appended synthetic events)
_NONE: tuple = ()


def lookup(trace: Trace, loc: int, var: Ident) -> Term | None:
    for ev in reversed(trace):
        if type(ev) is Write and ev.loc == loc and ev.var == var:
            return ev.value
    return None


def _first_order(v: Term) -> bool:
    while type(v) is Pair:
        if not _first_order(v.head):
            return False
        v = v.tail
    return type(v) is Const


def _delta(op: Prim, arg: Term) -> Term:
    items = untuple(arg)
    if op is Prim.ADD:
        if items and len(items) == 2 and all(type(i) is Const and type(i.c) is int for i in items):
            return Const((items[0].c + items[1].c) % WORD)
        raise StuckError("bad operands", f"+ {arg}")
    if op is Prim.EQ:
        if items and len(items) == 2:
            if not (_first_order(items[0]) and _first_order(items[1])):
                raise StuckError("eq/lt on lambda", f"== {arg}")
            return boolean(items[0] == items[1])
        raise StuckError("bad operands", f"== {arg}")
    if op is Prim.LT:
        if items and len(items) == 2:
            if not (_first_order(items[0]) and _first_order(items[1])):
                raise StuckError("eq/lt on lambda", f"< {arg}")
            if all(type(i) is Const and type(i.c) is int for i in items):
                return boolean(items[0].c < items[1].c)
        raise StuckError("bad operands", f"< {arg}")
    if op is Prim.AND:
        if items and len(items) == 2 and all(i in (TRUE, FALSE) for i in items):
            return boolean(items[0] == TRUE and items[1] == TRUE)
        raise StuckError("bad operands", f"&& {arg}")
    if op is Prim.TRY:
        if items and len(items) == 3 and type(items[1]) is Lam and type(items[2]) is Lam:
            handler = items[1]
            return IfLet(handler.pattern, items[0], handler.body, App(items[2], UNIT))
        raise StuckError("bad operands", f"try {arg}")
    if op is Prim.BIND:
        raise StuckError("bind has no evaluation rule")
    raise StuckError("application of non-function value", str(Const(op)))


class Mode:
    """Resolves the remote redexes; the base class has no rule for them."""

    def remote_s(self, pred: Term, body: Term, cfg: "_Ctx") -> list[Alt]:
        raise StuckError("no rule", "await needs a semantics mode")

    def remote_t(self, client: int, body: Term, cfg: "_Ctx") -> list[Alt]:
        raise StuckError("no rule", "awaitT needs a semantics mode")

    def trampoline_clients(self, cfg: "_Ctx") -> list[int]:
        raise StuckError("no rule", "trampoline client choice needs a semantics mode")


@dataclass
class _Ctx:
    normal: Trace
    synthetic: Trace
    loc: int
    mode: Mode
    bounds: Bounds | None


def _need_contract(ctx: _Ctx, what: str) -> None:
    if ctx.loc != 0:
        raise StuckError("remote redex at client location", what)


def _step(t: Term, ctx: _Ctx) -> list[Alt]:
    """All one-step reducts of ``t`` (leftmost-innermost redex)."""
    cls = type(t)
    if cls is App:
        fn, arg = t.fn, t.arg
        if not is_value(fn):
            return [(App(n, arg), dn, ds) for n, dn, ds in _step(fn, ctx)]
        if not is_value(arg):
            return [(App(fn, n), dn, ds) for n, dn, ds in _step(arg, ctx)]
        if type(fn) is Lam:
            sigma = match_pattern(fn.pattern, arg)
            if sigma is None:
                raise StuckError("application match failed", f"{fn.pattern} against {arg}")
            return [(substitute(sigma, fn.body), _NONE, _NONE)]
        if type(fn) is Const and fn.c is Prim.TRMP:
            return _trampoline(arg, ctx)
        if type(fn) is Const and type(fn.c) is Prim:
            return [(_delta(fn.c, arg), _NONE, _NONE)]
        raise StuckError("application of non-function value", str(fn))
    if cls is Let:
        if not is_value(t.bound):
            return [(Let(t.pattern, n, t.body), dn, ds) for n, dn, ds in _step(t.bound, ctx)]
        sigma = match_pattern(t.pattern, t.bound)
        if sigma is None:
            raise StuckError("let-match failed", f"{t.pattern} against {t.bound}")
        return [(substitute(sigma, t.body), _NONE, _NONE)]
    if cls is Pair:
        if not is_value(t.head):
            return [(Pair(n, t.tail), dn, ds) for n, dn, ds in _step(t.head, ctx)]
        return [(Pair(t.head, n), dn, ds) for n, dn, ds in _step(t.tail, ctx)]
    if cls is Get:
        trace = ctx.synthetic if t.var.kind is Kind.SYNTHETIC else ctx.normal
        v = lookup(trace, ctx.loc, t.var)
        if v is None:
            raise StuckError("unbound variable", f"this.{t.var.name} at location {ctx.loc}")
        return [(v, _NONE, _NONE)]
    if cls is Set:
        if not is_value(t.rhs):
            return [(Set(t.var, n), dn, ds) for n, dn, ds in _step(t.rhs, ctx)]
        ev = (Write(ctx.loc, t.var, t.rhs),)
        if t.var.kind is Kind.SYNTHETIC:
            return [(UNIT, _NONE, ev)]
        return [(UNIT, ev, _NONE)]
    if cls is IfLet:
        if not is_value(t.scrutinee):
            return [
                (IfLet(t.pattern, n, t.then, t.orelse), dn, ds)
                for n, dn, ds in _step(t.scrutinee, ctx)
            ]
        sigma = match_pattern(t.pattern, t.scrutinee)
        if sigma is None:
            return [(t.orelse, _NONE, _NONE)]
        return [(substitute(sigma, t.then), _NONE, _NONE)]
    if cls is RemoteS:
        if not is_value(t.pred):
            return [(RemoteS(n, t.body), dn, ds) for n, dn, ds in _step(t.pred, ctx)]
        _need_contract(ctx, "await")
        return ctx.mode.remote_s(t.pred, t.body, ctx)
    if cls is RemoteT:
        _need_contract(ctx, "awaitT")
        return ctx.mode.remote_t(t.client, t.body, ctx)
    if cls is Var:
        raise StuckError("unbound variable", t.id.name)
    raise StuckError("value has no reduct", str(t))


def _trampoline(arg: Term, ctx: _Ctx) -> list[Alt]:
    _need_contract(ctx, "trmp")
    items = untuple(arg)
    if items and len(items) == 2 and items[0] == DONE:
        return [(items[1], _NONE, _NONE)]
    if items and len(items) == 3 and items[0] == MORE and type(items[2]) is Pair:
        rec1, rec2 = items[1], items[2]
        cont = App(TRMP, App(Get(COFN), Pair(rec2.head, Pair(Var(RESULT), rec2.tail))))
        return [
            (Let(Var(RESULT), RemoteT(c, App(Get(CLFN), rec1)), cont), _NONE, _NONE)
            for c in ctx.mode.trampoline_clients(ctx)
        ]
    raise StuckError("bad trampoline record", str(arg))


def run_pure(term: Term, normal: Trace, synthetic: Trace, loc: int, budget: int) -> Term:
    """Evaluate with shared rules only; raises on stuck, budget, or trace change."""
    ctx = _Ctx(normal, synthetic, loc, Mode(), None)
    for _ in range(budget):
        if is_value(term):
            return term
        ((term, dn, ds),) = _step(term, ctx)
        if dn or ds:
            raise StuckError("impure predicate", str(term))
    if is_value(term):
        return term
    raise BudgetError()


def _satisfies(pred: Term, client: int, ctx: _Ctx) -> bool:
    """Whether ``pred(client)`` purely reduces to true; stuck or non-true means no."""
    budget = ctx.bounds.step_budget if ctx.bounds else 10000
    try:
        return run_pure(App(pred, Const(client)), ctx.normal, ctx.synthetic, 0, budget) == TRUE
    except StuckError as e:
        if e.stuck.reason == "impure predicate":
            raise
        return False


def _message(client: int, v: Term) -> Alt:
    return (v, (Msg(client, v),), (Write(0, SENDER, Const(client)),))


class Good(Mode):
    """Honest clients: the predicate selects the client and the body really runs."""

    def remote_s(self, pred, body, ctx):
        return [(RemoteT(c, body), _NONE, _NONE) for c in ctx.bounds.clients if _satisfies(pred, c, ctx)]

    def remote_t(self, client, body, ctx):
        try:
            v = _run_client(body, client, ctx)
        except StuckError as e:
            raise StuckError("client body stuck", str(e.stuck)) from None
        return [_message(client, v)]

    def trampoline_clients(self, ctx):
        who = lookup(ctx.synthetic, 0, WHO)
        clients = ctx.bounds.clients
        if who is not None:
            for c in clients:
                if _satisfies(who, c, ctx):
                    return [c]
        return [clients[0]]


def _run_client(body: Term, client: int, ctx: _Ctx) -> Term:
    """Run a client body to a value at ``client``; its trace effects are discarded afterwards."""
    sub = _Ctx(ctx.normal, ctx.synthetic, client, ctx.mode, ctx.bounds)
    for _ in range(ctx.bounds.step_budget):
        if is_value(body):
            return body
        ((body, dn, ds),) = _step(body, sub)
        if dn:
            sub.normal = sub.normal + dn
        if ds:
            sub.synthetic = sub.synthetic + ds
    if is_value(body):
        return body
    raise BudgetError()


class Bad(Mode):
    """Attacker-controlled clients: any client answers, with any universe value."""

    def remote_s(self, pred, body, ctx):
        clients = ctx.bounds.clients
        if not ctx.bounds.attacker_ignores_predicates:
            clients = [c for c in clients if _satisfies(pred, c, ctx)]
        return [(RemoteT(c, body), _NONE, _NONE) for c in clients]

    def remote_t(self, client, body, ctx):
        return [_message(client, v) for v in ctx.bounds.universe]

    def trampoline_clients(self, ctx):
        return list(ctx.bounds.clients)


GOOD = Good()
BAD = Bad()
SHARED = Mode()


def successors(c: Configuration, mode: Mode, bounds: Bounds | None) -> list[Configuration]:
    """Raw successor list; raises :class:`StuckError` / :class:`BudgetError`."""
    ctx = _Ctx(c.normal, c.synthetic, c.loc, mode, bounds)
    out = []
    for term, dn, ds in _step(c.term, ctx):
        out.append(
            Configuration(
                c.normal + dn if dn else c.normal,
                c.synthetic + ds if ds else c.synthetic,
                c.loc,
                term,
            )
        )
    return out


def _outcome(c: Configuration, mode: Mode, bounds: Bounds | None) -> StepOutcome:
    if is_value(c.term):
        return Value(c)
    try:
        return Next(tuple(successors(c, mode, bounds)))
    except StuckError as e:
        return e.stuck
    except BudgetError:
        return BudgetExceeded()


def step_shared(c: Configuration) -> StepOutcome:
    return _outcome(c, SHARED, None)


def step_good(c: Configuration, bounds: Bounds) -> StepOutcome:
    return _outcome(c, GOOD, bounds)


def step_bad(c: Configuration, bounds: Bounds) -> StepOutcome:
    return _outcome(c, BAD, bounds)


@dataclass(frozen=True)
class RunResult:
    normal: Trace
    synthetic: Trace
    value: Term
    steps: int


def run_det(c: Configuration, bounds: Bounds) -> RunResult | Stuck | BudgetExceeded:
    """Honest run, taking the lowest client at every choice point."""
    for n in range(bounds.step_budget + 1):
        if is_value(c.term):
            return RunResult(c.normal, c.synthetic, c.term, n)
        if n == bounds.step_budget:
            break
        out = step_good(c, bounds)
        if isinstance(out, Next):
            if not out.configs:
                return Stuck("no client satisfies the predicate")
            c = out.configs[0]
        else:
            return out
    return BudgetExceeded()


def run_program(p: Program, bounds: Bounds) -> RunResult | Stuck | BudgetExceeded:
    return run_det(init(bounds.clients, p), bounds)
