"""Random well-formed source programs for property tests.

Programs are loosely typed (naturals, booleans, pairs) so most runs do not
get stuck, have at most ``max_awaits`` awaits, and stay under a node budget.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from miniprisma.ast import (
    ADD,
    AND,
    EQ,
    FALSE,
    LT,
    TRUE,
    TRY,
    UNIT,
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
    Set,
    Term,
    Var,
    mutable,
    pure,
    size,
    tuple_,
)

NAT, BOOL = "nat", "bool"
CONTRACT_FIELDS = ("f0", "f1")
CLIENT_FIELDS = ("g0",)


def _op(op: Term, a: Term, b: Term) -> Term:
    return App(op, tuple_([a, b]))


PREDICATES = (
    Lam(Var(pure("c")), TRUE),
    Lam(Var(pure("c")), _op(EQ, Var(pure("c")), Const(1))),
    Lam(Var(pure("c")), _op(EQ, Var(pure("c")), Const(2))),
    Lam(Var(pure("c")), _op(LT, Var(pure("c")), Const(2))),
    Lam(Var(pure("c")), _op(LT, Get(mutable("f0")), Const(2))),
    Lam(Var(pure("c")), _op(AND, _op(EQ, Var(pure("c")), Const(2)), _op(EQ, Get(mutable("f1")), Const(0)))),
)


@dataclass
class _State:
    rng: random.Random
    awaits_left: int
    names: int = 0
    scope: list[tuple[str, str]] = field(default_factory=list)

    def fresh(self) -> str:
        # occasionally reuse a name to exercise shadowing
        if self.names and self.rng.random() < 0.15:
            return f"x{self.rng.randrange(self.names)}"
        self.names += 1
        return f"x{self.names - 1}"


class ProgramGen:
    def __init__(self, rng: random.Random, max_awaits: int = 3, max_size: int = 40):
        self.rng = rng
        self.max_awaits = max_awaits
        self.max_size = max_size

    # -- leaves

    def leaf(self, st: _State, ty: str, loc: str) -> Term:
        rng = self.rng
        vars_ = [n for n, t in st.scope if t == ty]
        if ty == BOOL:
            if vars_ and rng.random() < 0.3:
                return Var(pure(rng.choice(vars_)))
            return rng.choice((TRUE, FALSE))
        roll = rng.random()
        if vars_ and roll < 0.45:
            return Var(pure(rng.choice(vars_)))
        if roll < 0.65:
            fields = CONTRACT_FIELDS if loc == "co" else CLIENT_FIELDS
            return Get(mutable(rng.choice(fields)))
        return Const(rng.randrange(4))

    # -- expressions

    def expr(self, st: _State, ty: str, depth: int, loc: str, main: bool) -> Term:
        rng = self.rng
        if depth <= 0 or rng.random() < 0.25:
            return self.leaf(st, ty, loc)
        if ty == BOOL:
            op = rng.choice((EQ, LT, AND))
            sub = BOOL if op is AND else NAT
            return _op(op, self.expr(st, sub, depth - 1, loc, main), self.expr(st, sub, depth - 1, loc, main))
        choices = ["add", "let", "beta", "iflet", "pair"]
        if main and loc == "co":
            choices += ["set", "assert"]
            if st.awaits_left:
                choices += ["await", "await"]
        kind = rng.choice(choices)
        if kind == "add":
            return _op(ADD, self.expr(st, NAT, depth - 1, loc, main), self.expr(st, NAT, depth - 1, loc, main))
        if kind == "await":
            return self.await_(st, depth)
        if kind == "let":
            bound = self.expr(st, NAT, depth - 1, loc, main)
            name = st.fresh()
            st.scope.append((name, NAT))
            body = self.expr(st, NAT, depth - 1, loc, main)
            st.scope.pop()
            return Let(Var(pure(name)), bound, body)
        if kind == "beta":
            name = st.fresh()
            st.scope.append((name, NAT))
            body = self.expr(st, NAT, depth - 1, loc, False)
            st.scope.pop()
            return App(Lam(Var(pure(name)), body), self.expr(st, NAT, depth - 1, loc, main))
        if kind == "iflet":
            scrut = self.expr(st, NAT, depth - 1, loc, main)
            a = self.expr(st, NAT, depth - 1, loc, False)
            b = self.expr(st, NAT, depth - 1, loc, False)
            return IfLet(Const(rng.randrange(3)), scrut, a, b)
        if kind == "pair":
            # destructure immediately so the result stays a natural
            a = st.fresh()
            b = st.fresh()
            while b == a:
                b = st.fresh()
            bound = tuple_([self.expr(st, NAT, depth - 1, loc, main), self.expr(st, NAT, depth - 1, loc, main)])
            st.scope += [(a, NAT), (b, NAT)]
            body = self.expr(st, NAT, depth - 1, loc, main)
            del st.scope[-2:]
            return Let(tuple_([Var(pure(a)), Var(pure(b))]), bound, body)
        if kind == "set":
            rhs = self.expr(st, NAT, depth - 1, loc, main)
            rest = self.expr(st, NAT, depth - 1, loc, main)
            return Let(UNIT, Set(mutable(rng.choice(CONTRACT_FIELDS)), rhs), rest)
        if kind == "assert":
            cond = self.expr(st, BOOL, 1, loc, False)
            return Let(TRUE, cond, self.expr(st, NAT, depth - 1, loc, main))
        raise AssertionError(kind)  # pragma: no cover

    def await_(self, st: _State, depth: int) -> Term:
        st.awaits_left -= 1
        pred = self.rng.choice(PREDICATES)
        body = self.expr(st, NAT, min(depth - 1, 2), "cl", False)
        return RemoteS(pred, body)

    def statements(self, st: _State) -> Term:
        """A contract main: a few let/set/await statements and a final expression."""
        rng = self.rng
        depth = 2 if st.awaits_left < 2 else 1
        n = rng.randrange(max(1, st.awaits_left), 5)
        items: list[tuple[Term, Term]] = []
        for _ in range(n):
            roll = rng.random()
            if roll < 0.6 and st.awaits_left:
                name = st.fresh()
                items.append((Var(pure(name)), self.await_(st, depth + 1)))
                st.scope.append((name, NAT))
            elif roll < 0.7:
                items.append((UNIT, Set(mutable(rng.choice(CONTRACT_FIELDS)), self.expr(st, NAT, depth, "co", True))))
            else:
                name = st.fresh()
                items.append((Var(pure(name)), self.expr(st, NAT, depth, "co", True)))
                st.scope.append((name, NAT))
        final = self.expr(st, NAT, depth, "co", True)
        for pat, rhs in reversed(items):
            final = Let(pat, rhs, final)
        return final

    def program(self) -> Program:
        for _ in range(1000):
            awaits = self.rng.choice([0] + [k for k in range(1, self.max_awaits + 1) for _ in range(3)])
            st = _State(self.rng, awaits)
            main = self.statements(st)
            if size(main) <= self.max_size:
                defs = [Definition(Location.CONTRACT, mutable(f), Const(self.rng.randrange(3))) for f in CONTRACT_FIELDS]
                defs += [Definition(Location.CLIENT, mutable(g), Const(self.rng.randrange(3))) for g in CLIENT_FIELDS]
                return Program(tuple(defs), (), main)
        raise RuntimeError("could not generate a program within the size limit")


def random_program(seed: int, max_awaits: int = 3, max_size: int = 40) -> Program:
    return ProgramGen(random.Random(seed), max_awaits, max_size).program()


def random_closed_term(seed: int, depth: int = 4) -> Term:
    """Await-free, store-free closed term; a few are ill-typed on purpose."""
    rng = random.Random(seed)
    st = _State(rng, 0)

    def go(d: int) -> Term:
        if d <= 0 or rng.random() < 0.2:
            vars_ = [n for n, _ in st.scope]
            roll = rng.random()
            if vars_ and roll < 0.5:
                return Var(pure(rng.choice(vars_)))
            if roll < 0.8:
                return Const(rng.randrange(4))
            return rng.choice((TRUE, FALSE, UNIT))
        kind = rng.choice(("op", "op", "let", "beta", "iflet", "pair", "lam", "app", "try"))
        if kind == "op":
            return _op(rng.choice((ADD, ADD, EQ, LT, AND)), go(d - 1), go(d - 1))
        if kind in ("let", "beta", "lam"):
            name = st.fresh()
            bound = go(d - 1)
            st.scope.append((name, NAT))
            body = go(d - 1)
            st.scope.pop()
            if kind == "let":
                return Let(Var(pure(name)), bound, body)
            if kind == "lam":
                return Lam(Var(pure(name)), body)
            return App(Lam(Var(pure(name)), body), bound)
        if kind == "iflet":
            name = st.fresh()
            scrut = go(d - 1)
            pat = rng.choice((Var(pure(name)), Pair(Var(pure(name)), Const(1)), Const(rng.randrange(3))))
            binds = type(pat) is not Const
            if binds:
                st.scope.append((name, NAT))
            then = go(d - 1)
            if binds:
                st.scope.pop()
            return IfLet(pat, scrut, then, go(d - 1))
        if kind == "pair":
            return Pair(go(d - 1), go(d - 1))
        if kind == "app":
            return App(go(d - 1), go(d - 1))
        # try(m, x -> e1, () -> e2) left as the primitive application
        name = st.fresh()
        scrut = go(d - 1)
        st.scope.append((name, NAT))
        then = go(d - 1)
        st.scope.pop()
        return App(TRY, tuple_([scrut, Lam(Var(pure(name)), then), Lam(UNIT, go(d - 1))]))

    return go(depth)
