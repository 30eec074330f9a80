"""Terms, programs, substitution and pattern matching for the MiniPrisma calculus.

One ``Term`` hierarchy covers values, patterns, sub-expressions and main
expressions.  Which subset a term belongs to is a property checked by
:func:`is_value`, :func:`is_pattern` and :func:`validate_subset`, not a
separate type.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

WORD = 2**256


class Kind(enum.Enum):
    PURE = "pure"
    MUTABLE = "mutable"
    SYNTHETIC = "synthetic"


SYNTHETIC_NAMES = frozenset({"who", "state", "clfn", "cofn", "sender"})


@dataclass(frozen=True, slots=True)
class Ident:
    kind: Kind
    name: str

    def __post_init__(self) -> None:
        if self.kind is Kind.SYNTHETIC and self.name not in SYNTHETIC_NAMES:
            raise ValueError(f"{self.name!r} is not a synthetic name")

    def __str__(self) -> str:
        return self.name


def pure(name: str) -> Ident:
    return Ident(Kind.PURE, name)


def mutable(name: str) -> Ident:
    """Field ident for ``this.name``; synthetic when the name is reserved."""
    kind = Kind.SYNTHETIC if name in SYNTHETIC_NAMES else Kind.MUTABLE
    return Ident(kind, name)


WHO = Ident(Kind.SYNTHETIC, "who")
STATE = Ident(Kind.SYNTHETIC, "state")
CLFN = Ident(Kind.SYNTHETIC, "clfn")
COFN = Ident(Kind.SYNTHETIC, "cofn")
SENDER = Ident(Kind.SYNTHETIC, "sender")


class Prim(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNIT = "()"
    AND = "&&"
    ADD = "+"
    EQ = "=="
    LT = "<"
    TRY = "try"
    BIND = ">>="
    TRMP = "trmp"
    DONE = "Done"
    MORE = "More"


class Term:
    """Base class: structural equality with cached hashes and free-variable sets."""

    __slots__ = ("_hash", "_fvs", "_val")

    def _fields(self) -> tuple:
        return tuple(getattr(self, f) for f in self.__match_args__)

    def __hash__(self) -> int:
        try:
            return self._hash
        except AttributeError:
            h = hash((type(self).__name__,) + self._fields())
            object.__setattr__(self, "_hash", h)
            return h

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if type(self) is not type(other) or hash(self) != hash(other):
            return False
        return self._fields() == other._fields()

    def __ne__(self, other: object) -> bool:
        return not self.__eq__(other)

    def __str__(self) -> str:
        from miniprisma.parser import pretty_term

        return pretty_term(self)


@dataclass(frozen=True, slots=True, eq=False)
class Const(Term):
    c: int | Prim

    def __post_init__(self) -> None:
        if isinstance(self.c, bool):
            raise TypeError("use Prim.TRUE / Prim.FALSE for booleans")
        if isinstance(self.c, int) and not 0 <= self.c < WORD:
            raise ValueError(f"natural {self.c} out of range [0, 2^256)")


@dataclass(frozen=True, slots=True, eq=False)
class Pair(Term):
    head: Term
    tail: Term


@dataclass(frozen=True, slots=True, eq=False)
class Lam(Term):
    pattern: Term
    body: Term


@dataclass(frozen=True, slots=True, eq=False)
class Var(Term):
    id: Ident


@dataclass(frozen=True, slots=True, eq=False)
class Let(Term):
    pattern: Term
    bound: Term
    body: Term


@dataclass(frozen=True, slots=True, eq=False)
class App(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True, slots=True, eq=False)
class Get(Term):
    var: Ident


@dataclass(frozen=True, slots=True, eq=False)
class Set(Term):
    var: Ident
    rhs: Term


@dataclass(frozen=True, slots=True, eq=False)
class RemoteS(Term):
    """``↓s(pred, () -> body)``; ``body`` is stored without its unit thunk."""

    pred: Term
    body: Term


@dataclass(frozen=True, slots=True, eq=False)
class RemoteT(Term):
    """``↓t(client, () -> body)``: body pinned to one client (runtime only)."""

    client: int
    body: Term


@dataclass(frozen=True, slots=True, eq=False)
class IfLet(Term):
    pattern: Term
    scrutinee: Term
    then: Term
    orelse: Term


def Nat(n: int) -> Const:
    return Const(n)


TRUE = Const(Prim.TRUE)
FALSE = Const(Prim.FALSE)
UNIT = Const(Prim.UNIT)
AND = Const(Prim.AND)
ADD = Const(Prim.ADD)
EQ = Const(Prim.EQ)
LT = Const(Prim.LT)
TRY = Const(Prim.TRY)
BIND = Const(Prim.BIND)
TRMP = Const(Prim.TRMP)
DONE = Const(Prim.DONE)
MORE = Const(Prim.MORE)


def boolean(b: bool) -> Const:
    return TRUE if b else FALSE


def is_nat(t: Term) -> bool:
    return type(t) is Const and type(t.c) is int


def tuple_(items: Iterable[Term]) -> Term:
    """``(m0, ..., mn)`` as right-nested pairs ending in unit."""
    out: Term = UNIT
    for item in reversed(list(items)):
        out = Pair(item, out)
    return out


def untuple(t: Term) -> list[Term] | None:
    """Inverse of :func:`tuple_`; None when ``t`` is not unit-terminated."""
    items = []
    while type(t) is Pair:
        items.append(t.head)
        t = t.tail
    return items if t == UNIT else None


# --- programs -------------------------------------------------------------


class Location(enum.Enum):
    CONTRACT = "co"
    CLIENT = "cl"


@dataclass(frozen=True)
class Definition:
    location: Location
    var: Ident
    value: Term


@dataclass(frozen=True)
class Program:
    defs: tuple[Definition, ...]
    syndefs: tuple[Definition, ...]
    main: Term

    def __post_init__(self) -> None:
        object.__setattr__(self, "defs", tuple(self.defs))
        object.__setattr__(self, "syndefs", tuple(self.syndefs))

    def replace(self, **kw) -> "Program":
        fields = {"defs": self.defs, "syndefs": self.syndefs, "main": self.main}
        fields.update(kw)
        return Program(**fields)

    def syndef(self, var: Ident) -> Definition | None:
        for d in self.syndefs:
            if d.var == var:
                return d
        return None


# --- structural predicates ------------------------------------------------


def is_value(t: Term) -> bool:
    try:
        return t._val
    except AttributeError:
        cls = type(t)
        if cls is Const or cls is Lam:
            v = True
        elif cls is Pair:
            v = is_value(t.head) and is_value(t.tail)
        else:
            v = False
        object.__setattr__(t, "_val", v)
        return v


def is_pattern(t: Term) -> bool:
    if type(t) is Const or type(t) is Var:
        return True
    if type(t) is Pair:
        return is_pattern(t.head) and is_pattern(t.tail)
    return False


def pattern_vars(p: Term) -> list[Ident]:
    """Variables bound by a pattern, left to right (duplicates kept)."""
    out: list[Ident] = []
    stack = [p]
    while stack:
        t = stack.pop()
        if type(t) is Var:
            out.append(t.id)
        elif type(t) is Pair:
            stack.append(t.tail)
            stack.append(t.head)
    return out


def is_linear(p: Term) -> bool:
    vs = pattern_vars(p)
    return len(vs) == len(set(vs))


def children(t: Term) -> tuple[Term, ...]:
    cls = type(t)
    if cls is Pair:
        return (t.head, t.tail)
    if cls is Lam:
        return (t.pattern, t.body)
    if cls is Let:
        return (t.pattern, t.bound, t.body)
    if cls is App:
        return (t.fn, t.arg)
    if cls is Set:
        return (t.rhs,)
    if cls is RemoteS:
        return (t.pred, t.body)
    if cls is RemoteT:
        return (t.body,)
    if cls is IfLet:
        return (t.pattern, t.scrutinee, t.then, t.orelse)
    return ()


def subterms(t: Term) -> Iterator[Term]:
    """Pre-order walk over every node, patterns included."""
    stack = [t]
    while stack:
        s = stack.pop()
        yield s
        stack.extend(reversed(children(s)))


def size(t: Term) -> int:
    return sum(1 for _ in subterms(t))


# --- free variables -------------------------------------------------------


def fvset(t: Term) -> frozenset[Ident]:
    """Unordered free Pure identifiers, cached on the node."""
    try:
        return t._fvs
    except AttributeError:
        pass
    cls = type(t)
    if cls is Var:
        s = frozenset((t.id,))
    elif cls is Const or cls is Get:
        s = frozenset()
    elif cls is Lam:
        s = fvset(t.body) - frozenset(pattern_vars(t.pattern))
    elif cls is Let:
        s = fvset(t.bound) | (fvset(t.body) - frozenset(pattern_vars(t.pattern)))
    elif cls is IfLet:
        s = (
            fvset(t.scrutinee)
            | (fvset(t.then) - frozenset(pattern_vars(t.pattern)))
            | fvset(t.orelse)
        )
    else:
        s = frozenset().union(*(fvset(c) for c in children(t)))
    object.__setattr__(t, "_fvs", s)
    return s


def free_vars(t: Term) -> list[Ident]:
    """Free Pure identifiers in first-occurrence, left-to-right order."""
    out: dict[Ident, None] = {}

    def walk(t: Term, bound: frozenset[Ident]) -> None:
        if not (fvset(t) - bound):
            return
        cls = type(t)
        if cls is Var:
            out.setdefault(t.id)
        elif cls is Lam:
            walk(t.body, bound | frozenset(pattern_vars(t.pattern)))
        elif cls is Let:
            walk(t.bound, bound)
            walk(t.body, bound | frozenset(pattern_vars(t.pattern)))
        elif cls is IfLet:
            walk(t.scrutinee, bound)
            walk(t.then, bound | frozenset(pattern_vars(t.pattern)))
            walk(t.orelse, bound)
        else:
            for c in children(t):
                walk(c, bound)

    walk(t, frozenset())
    return list(out)


def all_names(t: Term) -> set[str]:
    """Every Pure name occurring anywhere, bound or free."""
    return {s.id.name for s in subterms(t) if type(s) is Var}


# --- substitution ---------------------------------------------------------

Substitution = Mapping[Ident, Term]


def compose(outer: Substitution, inner: Substitution) -> dict[Ident, Term]:
    """Right-to-left composition: ``compose(s, s2)(x) == s(s2(x))``."""
    out = {k: substitute(outer, v) for k, v in inner.items()}
    for k, v in outer.items():
        out.setdefault(k, v)
    return out


def _fresh_name(base: str, avoid: set[str]) -> str:
    for k in itertools.count(1):
        cand = f"{base}_{k}"
        if cand not in avoid:
            return cand
    raise AssertionError  # pragma: no cover


def _under_binder(s: Substitution, pat: Term, body: Term) -> tuple[Term, Term]:
    bound = pattern_vars(pat)
    body_fv = fvset(body)
    inner = {k: v for k, v in s.items() if k in body_fv and k not in bound}
    if not inner:
        return pat, body
    incoming = frozenset().union(*(fvset(v) for v in inner.values()))
    clash = [b for b in bound if b in incoming]
    if clash:
        avoid = {i.name for i in incoming} | all_names(body) | {i.name for i in inner}
        ren: dict[Ident, Term] = {}
        for b in clash:
            new = _fresh_name(b.name, avoid)
            avoid.add(new)
            ren[b] = Var(pure(new))
        pat = _subst(ren, pat)
        body = _subst(ren, body)
    return pat, _subst(inner, body)


def _subst(s: Substitution, t: Term) -> Term:
    if fvset(t).isdisjoint(s):
        return t
    cls = type(t)
    if cls is Var:
        return s.get(t.id, t)
    if cls is Pair:
        return Pair(_subst(s, t.head), _subst(s, t.tail))
    if cls is App:
        return App(_subst(s, t.fn), _subst(s, t.arg))
    if cls is Lam:
        return Lam(*_under_binder(s, t.pattern, t.body))
    if cls is Let:
        bound = _subst(s, t.bound)
        pat, body = _under_binder(s, t.pattern, t.body)
        return Let(pat, bound, body)
    if cls is IfLet:
        scrut = _subst(s, t.scrutinee)
        pat, then = _under_binder(s, t.pattern, t.then)
        return IfLet(pat, scrut, then, _subst(s, t.orelse))
    if cls is Set:
        return Set(t.var, _subst(s, t.rhs))
    if cls is RemoteS:
        return RemoteS(_subst(s, t.pred), _subst(s, t.body))
    if cls is RemoteT:
        return RemoteT(t.client, _subst(s, t.body))
    raise TypeError(f"unexpected node {t!r}")  # pragma: no cover


def substitute(s: Substitution, t: Term) -> Term:
    """Capture-avoiding substitution of free Pure identifiers."""
    return _subst(s, t) if s else t


def rename(t: Term, mapping: Mapping[Ident, Ident]) -> Term:
    return substitute({k: Var(v) for k, v in mapping.items()}, t)


def match_pattern(pattern: Term, value: Term) -> dict[Ident, Term] | None:
    """Match a linear pattern against a value; None signals match failure."""
    out: dict[Ident, Term] = {}
    stack = [(pattern, value)]
    while stack:
        p, v = stack.pop()
        cls = type(p)
        if cls is Var:
            out[p.id] = v
        elif cls is Const:
            if p != v:
                return None
        elif cls is Pair:
            if type(v) is not Pair:
                return None
            stack.append((p.tail, v.tail))
            stack.append((p.head, v.head))
        else:
            return None
    return out


# --- alpha normalisation --------------------------------------------------


@dataclass
class _Renamer:
    avoid: set[str]
    counter: itertools.count = field(default_factory=itertools.count)

    def next(self) -> Ident:
        while True:
            name = f"x{next(self.counter)}"
            if name not in self.avoid:
                return pure(name)


def alpha_normalize(t: Term, renamer: _Renamer | None = None) -> Term:
    """Rename every binder to ``x0, x1, ...`` in pre-order; free names untouched."""
    if renamer is None:
        renamer = _Renamer({i.name for i in fvset(t)})

    def bind(pat: Term, env: dict[Ident, Ident]) -> tuple[Term, dict[Ident, Ident]]:
        env = dict(env)
        for v in pattern_vars(pat):
            env[v] = renamer.next()
        return walk(pat, env), env

    def walk(t: Term, env: dict[Ident, Ident]) -> Term:
        cls = type(t)
        if cls is Var:
            return Var(env.get(t.id, t.id))
        if cls is Const or cls is Get:
            return t
        if cls is Lam:
            pat, inner = bind(t.pattern, env)
            return Lam(pat, walk(t.body, inner))
        if cls is Let:
            bound = walk(t.bound, env)
            pat, inner = bind(t.pattern, env)
            return Let(pat, bound, walk(t.body, inner))
        if cls is IfLet:
            scrut = walk(t.scrutinee, env)
            pat, inner = bind(t.pattern, env)
            return IfLet(pat, scrut, walk(t.then, inner), walk(t.orelse, env))
        if cls is Pair:
            return Pair(walk(t.head, env), walk(t.tail, env))
        if cls is App:
            return App(walk(t.fn, env), walk(t.arg, env))
        if cls is Set:
            return Set(t.var, walk(t.rhs, env))
        if cls is RemoteS:
            return RemoteS(walk(t.pred, env), walk(t.body, env))
        if cls is RemoteT:
            return RemoteT(t.client, walk(t.body, env))
        raise TypeError(t)  # pragma: no cover

    return walk(t, {})


def contains_lambda(t: Term) -> bool:
    return any(type(s) is Lam for s in subterms(t))


# --- subset validation ----------------------------------------------------


class Subset(enum.Enum):
    SOURCE = "source"
    TARGET = "target"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


_SOURCE_BANNED = {Prim.BIND: ">>=", Prim.TRMP: "trmp", Prim.DONE: "Done", Prim.MORE: "More"}


def _check_term(t: Term, path: str, subset: Subset, remote_ok: bool, out: list[Violation]) -> None:
    cls = type(t)
    if cls is Const:
        if subset is Subset.SOURCE and t.c in _SOURCE_BANNED:
            out.append(Violation(path, f"{_SOURCE_BANNED[t.c]} not in source subset"))
        if subset is Subset.TARGET and t.c is Prim.BIND:
            out.append(Violation(path, ">>= not in target subset"))
        return
    if cls is Var:
        if t.id.kind is not Kind.PURE:
            out.append(Violation(path, f"variable {t.id} must be a pure identifier"))
        return
    if cls is Get or cls is Set:
        if t.var.kind is Kind.PURE:
            out.append(Violation(path, f"field {t.var} must be mutable or synthetic"))
        if subset is Subset.SOURCE and t.var.kind is Kind.SYNTHETIC:
            out.append(Violation(path, f"synthetic identifier this.{t.var} not in source subset"))
        if cls is Set:
            _check_term(t.rhs, path + ".rhs", subset, remote_ok, out)
        return
    if cls is RemoteS or cls is RemoteT:
        if not remote_ok:
            out.append(Violation(path, "remote expression outside main-expression position"))
        if cls is RemoteT and subset is not Subset.HYBRID:
            out.append(Violation(path, "awaitT is runtime-only"))
        if cls is RemoteS and subset is Subset.TARGET:
            out.append(Violation(path, "await not in target subset"))
        if cls is RemoteS:
            _check_term(t.pred, path + ".pred", subset, False, out)
        _check_term(t.body, path + ".body", subset, False, out)
        return
    if cls is Lam:
        _check_pattern(t.pattern, path + ".pattern", subset, out)
        _check_term(t.body, path + ".body", subset, False, out)
        return
    if cls is Let:
        _check_pattern(t.pattern, path + ".pattern", subset, out)
        _check_term(t.bound, path + ".bound", subset, remote_ok, out)
        _check_term(t.body, path + ".body", subset, remote_ok, out)
        return
    if cls is IfLet:
        _check_pattern(t.pattern, path + ".pattern", subset, out)
        _check_term(t.scrutinee, path + ".scrutinee", subset, remote_ok, out)
        _check_term(t.then, path + ".then", subset, False, out)
        _check_term(t.orelse, path + ".else", subset, False, out)
        return
    if cls is Pair:
        _check_term(t.head, path + ".head", subset, remote_ok, out)
        _check_term(t.tail, path + ".tail", subset, remote_ok, out)
        return
    if cls is App:
        _check_term(t.fn, path + ".fn", subset, remote_ok, out)
        _check_term(t.arg, path + ".arg", subset, remote_ok, out)
        return
    out.append(Violation(path, f"unknown node {cls.__name__}"))  # pragma: no cover


def _check_pattern(p: Term, path: str, subset: Subset, out: list[Violation]) -> None:
    if not is_pattern(p):
        out.append(Violation(path, "patterns may contain only constants, pairs and variables"))
        return
    if not is_linear(p):
        out.append(Violation(path, "pattern binds a variable twice"))
    _check_term(p, path, subset, False, out)


def validate_subset(p: Program, subset: Subset | str) -> list[Violation]:
    """All violations of ``subset`` in ``p``; an empty list means the program is ok."""
    subset = Subset(subset)
    out: list[Violation] = []
    for k, d in enumerate(p.defs):
        path = f"defs[{k}]"
        if d.var.kind is not Kind.MUTABLE:
            out.append(Violation(path, f"definition of this.{d.var} must bind a mutable field"))
        if not is_value(d.value):
            out.append(Violation(path, "definitions must bind values"))
        _check_term(d.value, path + ".value", subset, False, out)
    if subset is Subset.SOURCE and p.syndefs:
        out.append(Violation("syndefs", "synthetic definitions not in source subset"))
    for k, d in enumerate(p.syndefs):
        path = f"syndefs[{k}]"
        if d.var.kind is not Kind.SYNTHETIC:
            out.append(Violation(path, f"synthetic definition of this.{d.var} must bind a synthetic field"))
        if not is_value(d.value):
            out.append(Violation(path, "definitions must bind values"))
        _check_term(d.value, path + ".value", subset, False, out)
    _check_term(p.main, "main", subset, True, out)
    return out


# --- canonical form -------------------------------------------------------


def _is_state_tag_eq(t: Term) -> bool:
    items = untuple(t.arg) if type(t) is App and t.fn == EQ else None
    return bool(items) and len(items) == 2 and items[0] == Get(STATE) and is_nat(items[1])


def _retag(t: Term, tags: dict[int, int], disp: frozenset[Ident]) -> Term:
    """Renumber compiler tags in the positions the pipeline generates them."""

    def tag(n: int) -> Const:
        if n not in tags:
            tags[n] = len(tags) + 1
        return Const(tags[n])

    def head_tag(pat: Term) -> Term:
        if type(pat) is Pair and is_nat(pat.head):
            return Pair(tag(pat.head.c), walk(pat.tail))
        return walk(pat)

    def walk(t: Term) -> Term:
        cls = type(t)
        if cls is Set and t.var == STATE and is_nat(t.rhs) and t.rhs.c != 0:
            return Set(t.var, tag(t.rhs.c))
        if cls is App and _is_state_tag_eq(t):
            return App(t.fn, tuple_([Get(STATE), tag(untuple(t.arg)[1].c)]))
        if cls is IfLet and type(t.scrutinee) is Var and t.scrutinee.id in disp:
            return IfLet(head_tag(t.pattern), t.scrutinee, walk(t.then), walk(t.orelse))
        if cls is Pair and t.head == MORE:
            items = untuple(t)
            if items is not None and len(items) == 3:
                return tuple_([MORE, head_tag(items[1]), head_tag(items[2])])
        if cls is Const or cls is Var or cls is Get:
            return t
        if cls is Pair:
            return Pair(walk(t.head), walk(t.tail))
        if cls is Lam:
            return Lam(t.pattern, walk(t.body))
        if cls is Let:
            return Let(t.pattern, walk(t.bound), walk(t.body))
        if cls is App:
            return App(walk(t.fn), walk(t.arg))
        if cls is Set:
            return Set(t.var, walk(t.rhs))
        if cls is RemoteS:
            return RemoteS(walk(t.pred), walk(t.body))
        if cls is RemoteT:
            return RemoteT(t.client, walk(t.body))
        if cls is IfLet:
            return IfLet(t.pattern, walk(t.scrutinee), walk(t.then), walk(t.orelse))
        raise TypeError(t)  # pragma: no cover

    return walk(t)


def _dispatch_params(p: Program) -> frozenset[Ident]:
    out = set()
    for d in p.syndefs:
        if d.var in (CLFN, COFN) and type(d.value) is Lam and type(d.value.pattern) is Var:
            out.add(d.value.pattern.id)
    return frozenset(out)


def canonicalize(p: Program) -> Program:
    """Alpha-normalise binders and renumber compiler tags in traversal order."""
    tags: dict[int, int] = {}
    disp = _dispatch_params(p)
    main = _retag(p.main, tags, disp)
    defs = [Definition(d.location, d.var, _retag(d.value, tags, disp)) for d in p.defs]
    syndefs = [Definition(d.location, d.var, _retag(d.value, tags, disp)) for d in p.syndefs]
    return Program(
        tuple(Definition(d.location, d.var, alpha_normalize(d.value)) for d in defs),
        tuple(Definition(d.location, d.var, alpha_normalize(d.value)) for d in syndefs),
        alpha_normalize(main),
    )


def canonicalize_term(t: Term) -> Term:
    return alpha_normalize(_retag(t, {}, frozenset()))
