"""The compiler: monadic normal form, guards, CPS and defunctionalization.

``compile`` is the full pipeline from a source program to a trampolined
first-order target program.  Each stage is also exposed on its own so the
equivalence checker can test them one at a time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from miniprisma.ast import (
    AND,
    BIND,
    CLFN,
    COFN,
    DONE,
    EQ,
    FALSE,
    MORE,
    SENDER,
    STATE,
    TRMP,
    TRUE,
    UNIT,
    WHO,
    App,
    Const,
    Definition,
    Get,
    IfLet,
    Lam,
    Let,
    Location,
    Pair,
    Program,
    RemoteS,
    RemoteT,
    Set,
    Subset,
    Term,
    Var,
    all_names,
    free_vars,
    fvset,
    is_nat,
    pattern_vars,
    pure,
    rename,
    subterms,
    tuple_,
    validate_subset,
)

DISPATCH = pure("_disp")
ASSERT_FALSE = Let(TRUE, FALSE, UNIT)
GUARD_TRUE = Lam(UNIT, TRUE)


class CompileError(Exception):
    pass


@dataclass
class FreshSupply:
    """Deterministic source of ``tmpN`` identifiers and state tags (tags start at 1)."""

    seed: int = 0
    avoid: set[str] = field(default_factory=set)
    next_ident: int = field(init=False)
    next_tag: int = field(init=False)

    def __post_init__(self) -> None:
        self.next_ident = self.seed
        self.next_tag = self.seed + 1

    def ident(self) -> Var:
        while True:
            name = f"tmp{self.next_ident}"
            self.next_ident += 1
            if name not in self.avoid:
                self.avoid.add(name)
                return Var(pure(name))

    def tag(self) -> Const:
        c = Const(self.next_tag)
        self.next_tag += 1
        return c

    def reserve(self, t: Term) -> None:
        self.avoid |= all_names(t)


def count_awaits(t: Term) -> int:
    return sum(1 for s in subterms(t) if type(s) is RemoteS)


# --- MNF ------------------------------------------------------------------


def assoc(m: Term) -> Term:
    """Rotate ``let x0 = (let x1 = m1; m0); m2`` into ``let x1 = m1; let x0 = m0; m2``."""
    if type(m) is not Let or type(m.bound) is not Let:
        return m
    inner, m2 = m.bound, m.body
    p1, m1, m0 = inner.pattern, inner.bound, inner.body
    clash = [v for v in pattern_vars(p1) if v in fvset(m2)]
    if clash:
        avoid = all_names(m) | {v.name for v in fvset(m)}
        mapping = {}
        for v in clash:
            new = next(f"{v.name}_{k}" for k in itertools.count(1) if f"{v.name}_{k}" not in avoid)
            avoid.add(new)
            mapping[v] = pure(new)
        p1, m0 = rename(p1, mapping), rename(m0, mapping)
    return assoc(Let(p1, m1, assoc(Let(m.pattern, m0, m2))))


def is_trivial(t: Term) -> bool:
    """Operands allowed in MNF: constants, variables, lambdas, and pairs of those."""
    cls = type(t)
    if cls is Const or cls is Var or cls is Lam:
        return True
    return cls is Pair and is_trivial(t.head) and is_trivial(t.tail)


def _is_atom(t: Term) -> bool:
    return is_trivial(t) or type(t) is Get


def _is_mnf_rhs(t: Term) -> bool:
    cls = type(t)
    if _is_atom(t):
        return True
    if cls is App:
        return _is_atom(t.fn) and _is_atom(t.arg)
    if cls is Set:
        return _is_atom(t.rhs)
    if cls is RemoteS:
        return _is_atom(t.pred)
    if cls is IfLet:
        return _is_atom(t.scrutinee)
    return False


def is_mnf(m: Term) -> bool:
    """A right-nested let chain whose bindings are flat and whose operands are atoms."""
    while type(m) is Let:
        if not _is_mnf_rhs(m.bound):
            return False
        m = m.body
    return _is_atom(m)


def is_mnf_program(p: Program) -> bool:
    return type(p.main) is App and p.main.fn == TRMP and is_mnf(p.main.arg)


def uniquify(m: Term, fs: FreshSupply) -> Term:
    """Rename main-level let binders that could capture once lets are hoisted.

    Binders inside lambda bodies, if-let branches and await bodies stay put,
    because normalisation never moves code out of them.
    """
    counts: dict[str, int] = {}
    for s in subterms(m):
        if type(s) in (Lam, Let, IfLet):
            for v in pattern_vars(s.pattern):
                counts[v.name] = counts.get(v.name, 0) + 1
    free = {v.name for v in fvset(m)}

    def walk(t: Term) -> Term:
        cls = type(t)
        if cls is Let:
            bound = walk(t.bound)
            pat, body = t.pattern, t.body
            clash = [v for v in pattern_vars(pat) if counts[v.name] > 1 or v.name in free]
            if clash:
                mapping = {v: fs.ident().id for v in clash}
                pat, body = rename(pat, mapping), rename(body, mapping)
            return Let(pat, bound, walk(body))
        if cls is App:
            return App(walk(t.fn), walk(t.arg))
        if cls is Pair:
            return Pair(walk(t.head), walk(t.tail))
        if cls is Set:
            return Set(t.var, walk(t.rhs))
        if cls is RemoteS:
            return RemoteS(walk(t.pred), t.body)
        if cls is IfLet:
            return IfLet(t.pattern, walk(t.scrutinee), t.then, t.orelse)
        return t

    return walk(m)


Bindings = list[tuple[Term, Term]]


def _norm(m: Term, fs: FreshSupply) -> tuple[Bindings, Term]:
    """Return bindings (in evaluation order) and a trivial result term."""
    cls = type(m)
    if cls is Const or cls is Var or cls is Lam:
        return [], m
    if cls is Pair:
        bh, sh = _norm(m.head, fs)
        bt, st = _norm(m.tail, fs)
        return bh + bt, Pair(sh, st)
    if cls is Let:
        b0, r0 = _norm(m.bound, fs)
        b1, r1 = _norm(m.body, fs)
        if b0 and type(r0) is Var and b0[-1][0] == r0:
            # bind the pattern directly instead of going through a temporary
            b0 = b0[:-1] + [(m.pattern, b0[-1][1])]
        else:
            b0 = b0 + [(m.pattern, r0)]
        return b0 + b1, r1
    if cls is App:
        bf, sf = _norm(m.fn, fs)
        ba, sa = _norm(m.arg, fs)
        return _bind(bf + ba, App(sf, sa), fs)
    if cls is Get:
        return _bind([], m, fs)
    if cls is Set:
        b, s = _norm(m.rhs, fs)
        return _bind(b, Set(m.var, s), fs)
    if cls is RemoteS:
        b, s = _norm(m.pred, fs)
        return _bind(b, RemoteS(s, m.body), fs)
    if cls is IfLet:
        b, s = _norm(m.scrutinee, fs)
        return _bind(b, IfLet(m.pattern, s, m.then, m.orelse), fs)
    if cls is RemoteT:
        return _bind([], m, fs)
    raise CompileError(f"cannot normalise {cls.__name__}")  # pragma: no cover


def _bind(bindings: Bindings, rhs: Term, fs: FreshSupply) -> tuple[Bindings, Term]:
    t = fs.ident()
    return bindings + [(t, rhs)], t


def _chain(bindings: Bindings, result: Term) -> Term:
    for pat, rhs in reversed(bindings):
        result = Let(pat, rhs, result)
    return result


def mnf_expr(m: Term, fs: FreshSupply | None = None) -> Term:
    fs = fs or FreshSupply()
    fs.reserve(m)
    m = uniquify(m, fs)
    return _chain(*_norm(m, fs))


def mnf_program(p: Program, fs: FreshSupply | None = None) -> Program:
    """Wrap main as ``trmp`` of the normalised ``(Done, main)`` record."""
    violations = validate_subset(p, Subset.SOURCE)
    if violations:
        raise CompileError("; ".join(map(str, violations)))
    fs = fs or FreshSupply()
    _reserve_program(fs, p)
    return p.replace(main=App(TRMP, mnf_expr(tuple_([DONE, p.main]), fs)))


def _reserve_program(fs: FreshSupply, p: Program) -> None:
    fs.reserve(p.main)
    for d in (*p.defs, *p.syndefs):
        fs.reserve(d.value)


def _trmp_body(p: Program, stage: str) -> Term:
    if type(p.main) is not App or p.main.fn != TRMP:
        raise CompileError(f"{stage} expects main of the form trmp(m)")
    return p.main.arg


# --- guards ---------------------------------------------------------------


def guard_assert(tag: Const) -> Term:
    """``this.state == c && this.who(this.sender)``"""
    return App(AND, tuple_([App(EQ, tuple_([Get(STATE), tag])), App(Get(WHO), Get(SENDER))]))


def guard_expr(m: Term, fs: FreshSupply) -> Term:
    out: list[tuple[Term, Term]] = []
    while type(m) is Let:
        if type(m.bound) is RemoteS:
            c = fs.tag()
            out += [
                (UNIT, Set(WHO, m.bound.pred)),
                (UNIT, Set(STATE, c)),
                (m.pattern, RemoteS(GUARD_TRUE, m.bound.body)),
                (TRUE, guard_assert(c)),
                (UNIT, Set(STATE, Const(0))),
            ]
        else:
            if count_awaits(m.bound):
                raise CompileError("await outside the let chain; run mnf first")
            out.append((m.pattern, m.bound))
        m = m.body
    if count_awaits(m):
        raise CompileError("await outside the let chain; run mnf first")
    return _chain(out, m)


def guard_program(p: Program, fs: FreshSupply | None = None) -> Program:
    fs = fs or FreshSupply()
    return p.replace(main=App(TRMP, guard_expr(_trmp_body(p, "guard"), fs)))


# --- CPS ------------------------------------------------------------------


def cps_expr(m: Term) -> Term:
    if type(m) is not Let:
        return m
    if type(m.bound) is RemoteS:
        if m.bound.pred != GUARD_TRUE:
            raise CompileError("cps expects guarded awaits with predicate () -> true")
        return App(App(BIND, Lam(UNIT, m.bound.body)), Lam(m.pattern, cps_expr(m.body)))
    return Let(m.pattern, m.bound, cps_expr(m.body))


def cps_program(p: Program) -> Program:
    return p.replace(main=App(TRMP, cps_expr(_trmp_body(p, "cps"))))


# --- defunctionalization --------------------------------------------------


def _fv_tuple(t: Term) -> Term:
    return tuple_(Var(v) for v in free_vars(t))


def _split_dispatchers(p: Program) -> tuple[Term, Term, list[Definition]]:
    clfn = p.syndef(CLFN)
    cofn = p.syndef(COFN)
    if clfn is None or cofn is None:
        raise CompileError("defun expects clfn/cofn synthetic definitions")
    for d in (clfn, cofn):
        if type(d.value) is not Lam or d.value.pattern != Var(DISPATCH):
            raise CompileError(f"{d.var} must be a dispatcher over {DISPATCH.name}")
    rest = [d for d in p.syndefs if d.var not in (CLFN, COFN)]
    return clfn.value.body, cofn.value.body, rest


def _seed_tag(prefix: list[tuple[Term, Term]]) -> Const | None:
    """Tag of the ``this.state := c`` immediately preceding a bind, if any."""
    if prefix:
        pat, rhs = prefix[-1]
        if type(rhs) is Set and rhs.var == STATE and is_nat(rhs.rhs) and rhs.rhs.c != 0:
            return rhs.rhs
    return None


def _is_bind(t: Term) -> bool:
    return type(t) is App and type(t.fn) is App and t.fn.fn == BIND


def defun_expr(m: Term, alts: tuple[Term, Term], fs: FreshSupply) -> tuple[Term, tuple[Term, Term]]:
    """Defunctionalise the bind chain ``m``; returns the new term and dispatcher bodies."""
    prefix: list[tuple[Term, Term]] = []
    while type(m) is Let:
        prefix.append((m.pattern, m.bound))
        m = m.body
    if _is_bind(m):
        thunk, k = m.fn.arg, m.arg
        if type(thunk) is not Lam or thunk.pattern != UNIT or type(k) is not Lam:
            raise CompileError(">>= must be applied to a thunk and a continuation")
        e2, alts = defun_expr(k.body, alts, fs)
        c = _seed_tag(prefix) or fs.tag()
        e1, x = thunk.body, k.pattern
        fv1, fv2 = _fv_tuple(thunk), _fv_tuple(Lam(x, e2))
        cl = IfLet(Pair(c, fv1), Var(DISPATCH), e1, alts[0])
        co = IfLet(Pair(c, Pair(x, fv2)), Var(DISPATCH), e2, alts[1])
        m = tuple_([MORE, Pair(c, fv1), Pair(c, fv2)])
        alts = (cl, co)
    return _chain(prefix, m), alts


def _with_dispatchers(p: Program, main: Term, alts: tuple[Term, Term], rest: list[Definition]) -> Program:
    syndefs = [
        Definition(Location.CLIENT, CLFN, Lam(Var(DISPATCH), alts[0])),
        Definition(Location.CONTRACT, COFN, Lam(Var(DISPATCH), alts[1])),
        *rest,
    ]
    return p.replace(syndefs=tuple(syndefs), main=main)


def seed_dispatchers(p: Program) -> Program:
    """Prepend the ``assert(false)`` clfn/cofn definitions to the synthetic definitions."""
    return _with_dispatchers(p, p.main, (ASSERT_FALSE, ASSERT_FALSE), list(p.syndefs))


def defun(p: Program, fs: FreshSupply | None = None) -> Program:
    """Defunctionalise a program whose synthetic definitions already hold dispatchers."""
    fs = fs or FreshSupply()
    _reserve_tags(fs, p)
    cl, co, rest = _split_dispatchers(p)
    main, alts = defun_expr(_trmp_body(p, "defun"), (cl, co), fs)
    return _with_dispatchers(p, App(TRMP, main), alts, rest)


def defun_program(p: Program, fs: FreshSupply | None = None) -> Program:
    return defun(seed_dispatchers(p), fs)


def _reserve_tags(fs: FreshSupply, p: Program) -> None:
    used = [s.c for s in subterms(p.main) if is_nat(s)]
    for d in p.syndefs:
        used += [s.c for s in subterms(d.value) if is_nat(s)]
    fs.next_tag = max([fs.next_tag, *(u + 1 for u in used if u < 2**64)])


# --- compositions ---------------------------------------------------------


def comp(p: Program, fs: FreshSupply | None = None) -> Program:
    """defun . cps . guard on ``d; b; trmp(m)`` whose ``b`` already holds dispatchers."""
    fs = fs or FreshSupply()
    return defun(cps_program(guard_program(p, fs)), fs)


def comp_prime(p: Program, fs: FreshSupply | None = None) -> Program:
    """Like :func:`comp`, but seeds the ``assert(false)`` dispatchers first."""
    fs = fs or FreshSupply()
    return defun_program(cps_program(guard_program(p, fs)), fs)


def compile(p: Program, fs: FreshSupply | None = None) -> Program:
    fs = fs or FreshSupply()
    return comp_prime(mnf_program(p, fs), fs)


STAGES = ("mnf", "guard", "cps", "defun")


def compile_stages(p: Program, fs: FreshSupply | None = None) -> dict[str, Program]:
    fs = fs or FreshSupply()
    out = {"mnf": mnf_program(p, fs)}
    out["guard"] = guard_program(out["mnf"], fs)
    out["cps"] = cps_program(out["guard"])
    out["defun"] = defun_program(out["cps"], fs)
    return out


def comp_fused(p: Program, fs: FreshSupply | None = None) -> Program:
    """Single-pass guard+CPS+defunctionalization, used to cross-check :func:`comp_prime`."""
    fs = fs or FreshSupply()
    _reserve_program(fs, p)

    def go(m: Term, alts: tuple[Term, Term]) -> tuple[Term, tuple[Term, Term]]:
        prefix: list[tuple[Term, Term]] = []
        while type(m) is Let and type(m.bound) is not RemoteS:
            prefix.append((m.pattern, m.bound))
            m = m.body
        if type(m) is Let:
            c = fs.tag()
            x, pred, e1 = m.pattern, m.bound.pred, m.bound.body
            rest, alts = go(m.body, alts)
            e2 = Let(TRUE, guard_assert(c), Let(UNIT, Set(STATE, Const(0)), rest))
            fv1, fv2 = _fv_tuple(Lam(UNIT, e1)), _fv_tuple(Lam(x, e2))
            alts = (
                IfLet(Pair(c, fv1), Var(DISPATCH), e1, alts[0]),
                IfLet(Pair(c, Pair(x, fv2)), Var(DISPATCH), e2, alts[1]),
            )
            prefix += [(UNIT, Set(WHO, pred)), (UNIT, Set(STATE, c))]
            m = tuple_([MORE, Pair(c, fv1), Pair(c, fv2)])
        return _chain(prefix, m), alts

    main, alts = go(_trmp_body(p, "comp"), (ASSERT_FALSE, ASSERT_FALSE))
    return _with_dispatchers(p, App(TRMP, main), alts, list(p.syndefs))
