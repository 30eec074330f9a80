"""Surface forms and their elaboration into core terms.

The parser builds these nodes for infix operators, tuples, sequencing,
``assert`` and ``try``; :func:`desugar` rewrites them away.  Core terms pass
through untouched, so desugaring an already-core term is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

from miniprisma.ast import (
    ADD,
    AND,
    EQ,
    LT,
    TRUE,
    TRY,
    UNIT,
    App,
    Const,
    Get,
    IfLet,
    Lam,
    Let,
    Pair,
    RemoteS,
    RemoteT,
    Set,
    Term,
    Var,
    tuple_,
    untuple,
)

INFIX = {"+": ADD, "==": EQ, "<": LT, "&&": AND}


@dataclass(frozen=True)
class Infix:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Tuple:
    items: tuple


@dataclass(frozen=True)
class Seq:
    first: object
    rest: object


@dataclass(frozen=True)
class Assert:
    cond: object
    rest: object


@dataclass(frozen=True)
class Try:
    """``try(m, x -> e1, () -> e2)`` written out as a triple."""

    scrutinee: object
    handler: object
    fallback: object


SURFACE = (Infix, Tuple, Seq, Assert, Try)


def try_to_iflet(arg: Term) -> Term | None:
    """``try`` applied to ``(m, x -> e1, () -> e2)`` as an if-let, when it has that shape."""
    items = untuple(arg)
    if items is None or len(items) != 3:
        return None
    scrut, handler, fallback = items
    if type(handler) is not Lam or type(fallback) is not Lam or fallback.pattern != UNIT:
        return None
    return IfLet(handler.pattern, scrut, handler.body, fallback.body)


def desugar(t: object) -> Term:
    if isinstance(t, Infix):
        if t.op not in INFIX:
            raise ValueError(f"unknown infix operator {t.op!r}")
        return App(INFIX[t.op], tuple_([desugar(t.left), desugar(t.right)]))
    if isinstance(t, Tuple):
        return tuple_(desugar(i) for i in t.items)
    if isinstance(t, Seq):
        return Let(UNIT, desugar(t.first), desugar(t.rest))
    if isinstance(t, Assert):
        return Let(TRUE, desugar(t.cond), desugar(t.rest))
    if isinstance(t, Try):
        arg = tuple_([desugar(t.scrutinee), desugar(t.handler), desugar(t.fallback)])
        return try_to_iflet(arg) or App(TRY, arg)
    if not isinstance(t, Term):
        raise TypeError(f"not a term: {t!r}")
    cls = type(t)
    if cls in (Const, Var, Get):
        return t
    if cls is Pair:
        return Pair(desugar(t.head), desugar(t.tail))
    if cls is Lam:
        return Lam(desugar(t.pattern), desugar(t.body))
    if cls is Let:
        return Let(desugar(t.pattern), desugar(t.bound), desugar(t.body))
    if cls is App:
        fn, arg = desugar(t.fn), desugar(t.arg)
        if fn == TRY:
            return try_to_iflet(arg) or App(fn, arg)
        return App(fn, arg)
    if cls is Set:
        return Set(t.var, desugar(t.rhs))
    if cls is RemoteS:
        return RemoteS(desugar(t.pred), desugar(t.body))
    if cls is RemoteT:
        return RemoteT(t.client, desugar(t.body))
    if cls is IfLet:
        return IfLet(desugar(t.pattern), desugar(t.scrutinee), desugar(t.then), desugar(t.orelse))
    raise TypeError(t)  # pragma: no cover
