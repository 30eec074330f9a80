"""Bounded trace sets under the attacker semantics and the equalities built on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from miniprisma import passes
from miniprisma.ast import (
    TRMP,
    App,
    Program,
    STATE,
    Set,
    Substitution,
    Term,
    alpha_normalize,
    contains_lambda,
    is_nat,
    is_value,
    subterms,
    substitute,
)
from miniprisma.interp import (
    BAD,
    Bounds,
    BudgetError,
    Configuration,
    Msg,
    Mode,
    StuckError,
    Write,
    init,
    successors,
)

Entry = tuple  # (normal trace, value)


@dataclass(frozen=True, slots=True)
class Ret:
    """End-of-run marker used in step-indexed frontiers."""

    value: Term

    def __str__(self) -> str:
        return f"ret({self.value})"


@dataclass
class Stats:
    branch_points: int = 0
    steps: int = 0
    stuck: int = 0
    budget_hits: int = 0
    diverged: int = 0
    pruned: int = 0
    path_limit_hit: bool = False


@dataclass(frozen=True)
class TraceSet:
    entries: frozenset
    complete: bool
    stats: Stats = field(default_factory=Stats, compare=False)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class EquivReport:
    equal: bool
    conclusive: bool
    left_only: list = field(default_factory=list)
    right_only: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def verified(self) -> bool:
        return self.equal and self.conclusive


def _canon(v: Term) -> Term:
    return alpha_normalize(v) if contains_lambda(v) else v


def _canon_event(ev):
    if type(ev) is Write:
        return Write(ev.loc, ev.var, _canon(ev.value)) if contains_lambda(ev.value) else ev
    if type(ev) is Msg:
        return Msg(ev.loc, _canon(ev.value)) if contains_lambda(ev.value) else ev
    return ev


def observable(trace: Iterable) -> tuple:
    """Normal events with lambda values alpha-normalised, so entries compare by structure."""
    return tuple(_canon_event(ev) for ev in trace)


def observable_value(v: Term) -> Term:
    return _canon(v)


def explore(
    start: Configuration,
    bounds: Bounds,
    *,
    mode: Mode = BAD,
    budget: int | None = None,
    frontier: bool = False,
) -> TraceSet:
    """Depth-first enumeration of every run from ``start``.

    Deterministic stretches run inline with cycle detection; only branch
    points are pushed and deduplicated.  With ``frontier`` set, paths still
    running when the budget runs out contribute their current trace and
    finished paths append a :class:`Ret` marker.
    """
    budget = bounds.step_budget if budget is None else budget
    stats = Stats()
    entries: set = set()
    complete = True
    seen: set = set()
    stack: list[tuple[Configuration, int]] = [(start, 0)]
    while stack:
        c, n = stack.pop()
        # Brent cycle detection over a deterministic stretch
        mark, mark_len, power, lam = c.term, (len(c.normal), len(c.synthetic)), 1, 0
        while True:
            if is_value(c.term):
                if frontier:
                    entries.add(observable(c.normal) + (Ret(_canon(c.term)),))
                else:
                    entries.add((observable(c.normal), _canon(c.term)))
                break
            if n >= budget:
                if frontier:
                    entries.add(observable(c.normal))
                else:
                    stats.budget_hits += 1
                    complete = False
                break
            try:
                nxt = successors(c, mode, bounds)
            except StuckError:
                stats.stuck += 1
                break
            except BudgetError:
                stats.budget_hits += 1
                complete = False
                break
            n += 1
            stats.steps += 1
            if len(nxt) == 1:
                c = nxt[0]
                if c.term == mark and (len(c.normal), len(c.synthetic)) == mark_len:
                    stats.diverged += 1
                    if frontier:
                        entries.add(observable(c.normal))
                    break
                lam += 1
                if lam == power:
                    mark, mark_len, power, lam = c.term, (len(c.normal), len(c.synthetic)), power * 2, 0
                continue
            if not nxt:
                stats.stuck += 1
                break
            stats.branch_points += 1
            if stats.branch_points > bounds.path_limit:
                stats.path_limit_hit = True
                complete = False
                stack.clear()
                break
            for s in reversed(nxt):
                if s in seen:
                    stats.pruned += 1
                    continue
                seen.add(s)
                stack.append((s, n))
            break
    return TraceSet(frozenset(entries), complete, stats)


def trace_set(p: Program, bounds: Bounds, *, closing: Substitution | None = None) -> TraceSet:
    c = init(bounds.clients, p)
    if closing:
        c = c.with_term(substitute(closing, c.term))
    return explore(c, bounds)


def _sorted(entries, limit: int) -> list:
    return sorted(entries, key=lambda e: (len(e[0]), repr(e)))[:limit]


def trace_equal(a: TraceSet, b: TraceSet, witnesses: int = 5) -> EquivReport:
    left, right = a.entries - b.entries, b.entries - a.entries
    return EquivReport(
        equal=not left and not right,
        conclusive=a.complete and b.complete,
        left_only=_sorted(left, witnesses),
        right_only=_sorted(right, witnesses),
        stats={
            "left": _stats_dict(a),
            "right": _stats_dict(b),
        },
    )


def _stats_dict(t: TraceSet) -> dict:
    s = t.stats
    return {
        "entries": len(t.entries),
        "complete": t.complete,
        "branch_points": s.branch_points,
        "steps": s.steps,
        "stuck": s.stuck,
        "budget_hits": s.budget_hits,
        "diverged": s.diverged,
    }


# --- step-indexed non-disagreement ----------------------------------------


def traces_compatible(t: tuple, s: tuple) -> bool:
    """Two traces never disagree: one is a prefix of the other."""
    k = min(len(t), len(s))
    return t[:k] == s[:k]


def _covers(ts: list[tuple], ss: list[tuple]) -> bool:
    """Every trace in ``ts`` is prefix-compatible with some trace in ``ss``."""
    exact = set(ss)
    prefixes = {s[:k] for s in ss for k in range(len(s) + 1)}
    return all(t in prefixes or any(t[:k] in exact for k in range(len(t))) for t in ts)


def sets_compatible(ts: Iterable[tuple], ss: Iterable[tuple]) -> bool:
    ts, ss = list(ts), list(ss)
    return _covers(ts, ss) and _covers(ss, ts)


def frontier(p: Program, n: int, bounds: Bounds) -> TraceSet:
    return explore(init(bounds.clients, p), bounds, budget=n, frontier=True)


def nondisagree(p1: Program, p2: Program, n: int, bounds: Bounds) -> bool:
    if n > bounds.step_budget:
        raise ValueError("n must not exceed the step budget")
    b = with_tags(bounds, p1, p2)
    return sets_compatible(frontier(p1, n, b).entries, frontier(p2, n, b).entries)


# --- theorem and lemma harness --------------------------------------------


def tags_of(p: Program) -> list[Term]:
    """Guard tags: the naturals written to ``this.state`` other than the reset value 0."""
    out: dict[Term, None] = {}
    for t in (p.main, *(d.value for d in p.syndefs)):
        for s in subterms(t):
            if type(s) is Set and s.var == STATE and is_nat(s.rhs) and s.rhs.c != 0:
                out.setdefault(s.rhs)
    return list(out)


def with_tags(bounds: Bounds, *programs: Program) -> Bounds:
    return bounds.extend(t for p in programs for t in tags_of(p))


def compare(p: Program, q: Program, bounds: Bounds, *, closing: Substitution | None = None) -> EquivReport:
    b = with_tags(bounds, p, q)
    return trace_equal(trace_set(p, b, closing=closing), trace_set(q, b, closing=closing))


PASSES = ("assoc", "mnf", "mnf2", "comp", "comp2")


def apply_pass(p: Program, which: str, seed: int = 0) -> tuple[Program, Program]:
    """Return (before, after) programs for one lemma instance."""
    fs = passes.FreshSupply(seed)
    if which == "assoc":
        return p, p.replace(main=passes.assoc(p.main))
    if which == "mnf":
        return p, p.replace(main=passes.mnf_expr(p.main, fs))
    if which == "mnf2":
        return p, passes.mnf_program(p, fs)
    if which == "comp":
        before = passes.seed_dispatchers(_as_trmp(p, fs))
        return before, passes.comp(before, fs)
    if which == "comp2":
        before = _as_trmp(p, fs)
        return before, passes.comp_prime(before, fs)
    raise ValueError(f"unknown pass {which!r}; expected one of {', '.join(PASSES)}")


def _as_trmp(p: Program, fs: passes.FreshSupply) -> Program:
    """Programs already of the form ``trmp(m)`` pass through; source programs get mnf first."""
    if type(p.main) is App and p.main.fn == TRMP:
        return p
    return passes.mnf_program(p, fs)


def check_pass_equiv(
    p: Program, which: str, bounds: Bounds, *, closing: Substitution | None = None, seed: int = 0
) -> EquivReport:
    before, after = apply_pass(p, which, seed)
    return compare(before, after, bounds, closing=closing)


def check_secure(
    p: Program,
    bounds: Bounds,
    *,
    compiler: Callable[[Program], Program] | None = None,
    seed: int = 0,
) -> EquivReport:
    """Trace sets of ``p`` and its compiled form under attack, at the given bounds."""
    compiled = compiler(p) if compiler else passes.compile(p, passes.FreshSupply(seed))
    return compare(p, compiled, bounds)
