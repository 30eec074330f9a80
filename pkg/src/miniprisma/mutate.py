"""Deliberately broken compilations, used to show the guards are load-bearing."""

from __future__ import annotations

from miniprisma.ast import COFN, TRUE, Definition, IfLet, Lam, Let, Program, Term
from miniprisma.passes import guard_assert


def _strip(t: Term, tag: int) -> tuple[Term, bool]:
    if type(t) is Let and t.pattern == TRUE and t.bound == guard_assert_for(tag):
        return t.body, True
    if type(t) is Let:
        body, hit = _strip(t.body, tag)
        return Let(t.pattern, t.bound, body), hit
    if type(t) is IfLet:
        then, hit = _strip(t.then, tag)
        if hit:
            return IfLet(t.pattern, t.scrutinee, then, t.orelse), True
        orelse, hit = _strip(t.orelse, tag)
        return IfLet(t.pattern, t.scrutinee, t.then, orelse), hit
    return t, False


def guard_assert_for(tag: int) -> Term:
    from miniprisma.ast import Const

    return guard_assert(Const(tag))


def strip_guard(p: Program, tag: int) -> Program:
    """Remove the guard assert for ``tag`` from the contract dispatcher."""
    syndefs = []
    found = False
    for d in p.syndefs:
        if d.var == COFN and type(d.value) is Lam:
            body, hit = _strip(d.value.body, tag)
            found |= hit
            d = Definition(d.location, d.var, Lam(d.value.pattern, body))
        syndefs.append(d)
    if not found:
        raise ValueError(f"no guard assert for tag {tag}")
    return p.replace(syndefs=tuple(syndefs))
