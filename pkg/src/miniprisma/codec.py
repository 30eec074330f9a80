"""JSON encodings for values, traces, trace sets and equivalence reports."""

from __future__ import annotations

from typing import Any

from miniprisma.ast import FALSE, TRUE, UNIT, Const, Lam, Pair, Term
from miniprisma.equiv import EquivReport, Ret, TraceSet
from miniprisma.interp import Msg, Write
from miniprisma.parser import pretty_term


def value_json(v: Term) -> Any:
    if v == TRUE:
        return True
    if v == FALSE:
        return False
    if v == UNIT:
        return "unit"
    if type(v) is Const:
        return str(v.c) if type(v.c) is int else {"const": pretty_term(v)}
    if type(v) is Pair:
        return ["::", value_json(v.head), value_json(v.tail)]
    if type(v) is Lam:
        return {"fun": pretty_term(v)}
    return {"term": pretty_term(v)}


def event_json(ev) -> dict:
    if type(ev) is Write:
        return {"kind": "wr", "loc": ev.loc, "var": ev.var.name, "value": value_json(ev.value)}
    if type(ev) is Msg:
        return {"kind": "msg", "loc": ev.loc, "value": value_json(ev.value)}
    if type(ev) is Ret:
        return {"kind": "ret", "value": value_json(ev.value)}
    raise TypeError(ev)


def trace_json(trace) -> list[dict]:
    return [event_json(ev) for ev in trace]


def render_entry(entry) -> str:
    trace, value = entry
    return " ".join(str(ev) for ev in trace) + f" => {pretty_term(value)}"


def _entry_key(entry) -> tuple:
    return (len(entry[0]), render_entry(entry))


def trace_set_json(ts: TraceSet) -> dict:
    s = ts.stats
    return {
        "complete": ts.complete,
        "entries": [
            {"trace": trace_json(t), "value": value_json(v)}
            for t, v in sorted(ts.entries, key=_entry_key)
        ],
        "stats": {
            "entries": len(ts.entries),
            "branch_points": s.branch_points,
            "steps": s.steps,
            "stuck": s.stuck,
            "budget_hits": s.budget_hits,
            "diverged": s.diverged,
        },
    }


def report_json(r: EquivReport) -> dict:
    def wit(entries):
        return [
            {"trace": trace_json(t), "value": value_json(v), "pretty": render_entry((t, v))}
            for t, v in entries
        ]

    return {
        "equal": r.equal,
        "conclusive": r.conclusive,
        "witnesses": {"left_only": wit(r.left_only), "right_only": wit(r.right_only)},
        "stats": r.stats,
    }
