"""Render a compiled program as a state-machine contract skeleton plus a client stub.

The output is Solidity-flavoured pseudocode for reading, not for solc.
"""

from __future__ import annotations

from dataclasses import dataclass

from miniprisma.ast import (
    CLFN,
    COFN,
    DONE,
    MORE,
    STATE,
    TRMP,
    TRUE,
    UNIT,
    WHO,
    App,
    IfLet,
    Lam,
    Let,
    Pair,
    Program,
    Set,
    Subset,
    Term,
    is_nat,
    untuple,
    validate_subset,
)
from miniprisma.parser import pretty_term
from miniprisma.passes import guard_assert


class EmitError(Exception):
    pass


@dataclass(frozen=True)
class Phase:
    tag: int
    contract_pattern: Term
    contract_clause: Term
    client_pattern: Term
    client_clause: Term


@dataclass(frozen=True)
class FsmView:
    phases: tuple[Phase, ...]
    constructor_prefix: Term
    final_expr: Term


def _clauses(body: Term) -> dict[int, tuple[Term, Term]]:
    out = {}
    while type(body) is IfLet:
        pat = body.pattern
        if type(pat) is not Pair or not is_nat(pat.head):
            raise EmitError(f"dispatcher clause pattern {pretty_term(pat)} has no tag")
        out[pat.head.c] = (pat.tail, body.then)
        body = body.orelse
    return out


def _split_chain(t: Term) -> tuple[list[tuple[Term, Term]], Term]:
    prefix = []
    while type(t) is Let:
        prefix.append((t.pattern, t.bound))
        t = t.body
    return prefix, t


def _rebuild(prefix: list[tuple[Term, Term]], final: Term) -> Term:
    for pat, rhs in reversed(prefix):
        final = Let(pat, rhs, final)
    return final


def _next_tag(final: Term) -> int | None:
    items = untuple(final)
    if items and len(items) == 3 and items[0] == MORE and type(items[1]) is Pair and is_nat(items[1].head):
        return items[1].head.c
    return None


def fsm_view(p: Program) -> FsmView:
    violations = validate_subset(p, Subset.TARGET)
    if violations:
        raise EmitError("; ".join(map(str, violations)))
    if type(p.main) is not App or p.main.fn != TRMP:
        raise EmitError("compiled main must be trmp(...)")
    cl = p.syndef(CLFN)
    co = p.syndef(COFN)
    cl_clauses = _clauses(cl.value.body) if cl and type(cl.value) is Lam else {}
    co_clauses = _clauses(co.value.body) if co and type(co.value) is Lam else {}
    if set(cl_clauses) != set(co_clauses):
        raise EmitError("clfn and cofn clauses disagree on tags")
    prefix, final = _split_chain(p.main.arg)
    # walk phases in execution order, then any unreachable ones by tag
    order: list[int] = []
    tag = _next_tag(final)
    while tag is not None and tag in co_clauses and tag not in order:
        order.append(tag)
        tag = _next_tag(_split_chain(co_clauses[tag][1])[1])
    order += sorted(set(co_clauses) - set(order))
    phases = tuple(
        Phase(t, co_clauses[t][0], co_clauses[t][1], cl_clauses[t][0], cl_clauses[t][1]) for t in order
    )
    return FsmView(phases, _rebuild(prefix, UNIT), final)


# --- rendering ------------------------------------------------------------


def _expr(t: Term) -> str:
    return pretty_term(t)


def _statement(pat: Term, rhs: Term) -> str:
    if type(rhs) is Set and pat == UNIT:
        if rhs.var == STATE:
            return f"state = {_expr(rhs.rhs)};"
        if rhs.var == WHO:
            return f"who = {_expr(rhs.rhs)};"
        return f"{rhs.var.name} = {_expr(rhs.rhs)};"
    if pat == TRUE:
        if is_guard(rhs):
            tag = untuple(untuple(rhs.arg)[0].arg)[1].c
            return f"require(state == {tag} && who(sender));"
        return f"require({_expr(rhs)});"
    if pat == UNIT:
        return f"{_expr(rhs)};"
    return f"let {pretty_term(pat)} = {_expr(rhs)};"


def is_guard(t: Term) -> bool:
    items = untuple(t.arg) if type(t) is App else None
    if not items or len(items) != 2 or type(items[0]) is not App:
        return False
    eq = untuple(items[0].arg)
    return bool(eq) and len(eq) == 2 and is_nat(eq[1]) and t == guard_assert(eq[1])


def _final(final: Term, prefix: list[tuple[Term, Term]]) -> list[str]:
    items = untuple(final)
    if items and len(items) == 2 and items[0] == DONE:
        return [f"done({_expr(items[1])});"]
    tag = _next_tag(final)
    if tag is not None:
        last = prefix[-1][1] if prefix else None
        if type(last) is Set and last.var == STATE:
            return []
        return [f"goto phase{tag};"]
    return [f"return {_expr(final)};"]


def _body(t: Term) -> list[str]:
    prefix, final = _split_chain(t)
    return [_statement(p, r) for p, r in prefix] + _final(final, prefix)


def _params(pat: Term) -> str:
    items = untuple(pat)
    if items is None:
        return pretty_term(pat)
    return ", ".join(pretty_term(i) if type(i) is not Pair else f"({pretty_term(i)})" for i in items)


def _contract_params(pat: Term) -> str:
    # pattern is x :: fv-tuple
    x = pretty_term(pat.head)
    rest = _params(pat.tail)
    return ", ".join(s for s in (x, rest) if s)


def _block(header: str, lines: list[str], indent: str = "  ") -> list[str]:
    return [f"{indent}{header} {{", *(f"{indent}  {ln}" for ln in lines), f"{indent}}}"]


def _client_body(t: Term) -> list[str]:
    prefix, final = _split_chain(t)
    return [_statement(p, r) for p, r in prefix] + [f"return {_expr(final)};"]


def emit_fsm(p: Program) -> tuple[str, str]:
    view = fsm_view(p)
    contract = ["contract {"]
    fields = [f"  {d.var.name} = {_expr(d.value)};" for d in p.defs if d.location.value == "co"]
    contract += fields
    ctor_prefix, _ = _split_chain(view.constructor_prefix)
    contract += _block("constructor()", [_statement(a, b) for a, b in ctor_prefix] + _final(view.final_expr, ctor_prefix))
    for ph in view.phases:
        contract += _block(f"function phase{ph.tag}({_contract_params(ph.contract_pattern)})", _body(ph.contract_clause))
    contract.append("}")
    client = ["client {"]
    client += [f"  {d.var.name} = {_expr(d.value)};" for d in p.defs if d.location.value == "cl"]
    for ph in view.phases:
        client += _block(f"function phase{ph.tag}({_params(ph.client_pattern)})", _client_body(ph.client_clause))
    client.append("}")
    return "\n".join(contract) + "\n", "\n".join(client) + "\n"


def phase_functions(text: str) -> list[list[str]]:
    """Split emitted text into the stripped body lines of each ``function phaseN``."""
    out: list[list[str]] = []
    current: list[str] | None = None
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("function phase"):
            current = []
            out.append(current)
        elif line == "  }":
            current = None
        elif current is not None:
            current.append(s)
    return out

