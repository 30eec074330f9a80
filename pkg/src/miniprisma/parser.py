"""Concrete syntax for MiniPrisma: a hand-written lexer, an LL parser, and a printer.

Source files use ``.mp``.  The same grammar with ``hybrid=True`` also accepts
the compiler-internal constants and synthetic fields, so that every pipeline
stage except the runtime-only ``awaitT`` can be printed and read back.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from miniprisma import sugar
from miniprisma.ast import (
    DONE,
    FALSE,
    MORE,
    SYNTHETIC_NAMES,
    TRMP,
    TRUE,
    TRY,
    UNIT,
    WORD,
    App,
    Const,
    Definition,
    Get,
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
    Subset,
    Term,
    Var,
    is_value,
    mutable,
    pure,
    untuple,
    validate_subset,
)

KEYWORDS = {
    "main", "let", "assert", "if", "then", "else", "fun", "this", "await",
    "true", "false", "unit", "try", "trmp", "Done", "More",
}
# Pure names the compiler mints; rejected in source text so generated names never clash.
COMPILER_NAME = re.compile(r"tmp\d+|_disp|_r")

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|--[^\n]*)
    |(?P<nat>\d+)
    |(?P<at>@co|@cl)
    |(?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<sym>>>=|::|:=|->|==|&&|[{}(),;.=+<])
    """,
    re.VERBOSE,
)

OPERATORS = {"+": Prim.ADD, "==": Prim.EQ, "<": Prim.LT, "&&": Prim.AND, ">>=": Prim.BIND}
_CONST_WORDS = {
    "true": TRUE, "false": FALSE, "unit": UNIT, "try": TRY,
    "trmp": TRMP, "Done": DONE, "More": MORE,
}


class ParseError(Exception):
    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int

    @property
    def where(self) -> str:
        return f"{self.line}:{self.col}"


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError([f"{line}:{pos - line_start + 1}: unexpected character {text[pos]!r}"])
        kind = m.lastgroup
        if kind != "ws":
            if kind == "ident" and m.group() in KEYWORDS:
                kind = "kw"
            out.append(Token(kind, m.group(), line, pos - line_start + 1))
        for k, ch in enumerate(m.group()):
            if ch == "\n":
                line, line_start = line + 1, pos + k + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


class Parser:
    def __init__(self, text: str, hybrid: bool = False):
        self.toks = tokenize(text)
        self.i = 0
        self.hybrid = hybrid

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("kw", "sym", "at") and self.tok.text in texts

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError([f"{tok.where}: {msg}"])

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> str:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected identifier, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok.text

    def pure_name(self) -> Var:
        tok = self.tok
        name = self.ident()
        if not self.hybrid and (name in SYNTHETIC_NAMES or COMPILER_NAME.fullmatch(name)):
            raise self.error(f"{name!r} is reserved", tok)
        return Var(pure(name))

    def field(self) -> tuple[str, Token]:
        self.expect("this")
        self.expect(".")
        tok = self.tok
        return self.ident(), tok

    # -- programs

    def program(self) -> Program:
        defs, syndefs = [], []
        while self.at("@co", "@cl"):
            loc = Location.CONTRACT if self.tok.text == "@co" else Location.CLIENT
            self.i += 1
            name, _ = self.field()
            self.expect("=")
            tok = self.tok
            value = sugar.desugar(self.stmt())
            if not is_value(value):
                raise self.error("definitions must bind values", tok)
            self.expect(";")
            target = syndefs if name in SYNTHETIC_NAMES else defs
            target.append(Definition(loc, mutable(name), value))
        self.expect("main")
        self.expect("{")
        main = sugar.desugar(self.seq())
        self.expect("}")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r} after main block")
        return Program(tuple(defs), tuple(syndefs), main)

    # -- expressions, loosest binding first

    def seq(self):
        if self.at("let"):
            self.i += 1
            pat = self.pattern()
            self.expect("=")
            bound = self.stmt()
            self.expect(";")
            return Let(pat, sugar.desugar(bound), sugar.desugar(self.seq()))
        if self.at("assert"):
            self.i += 1
            self.expect("(")
            cond = self.seq()
            self.expect(")")
            self.expect(";")
            return sugar.Assert(cond, self.seq())
        if self.at("if"):
            self.i += 1
            self.expect("let")
            pat = self.pattern()
            self.expect("=")
            scrut = self.stmt()
            self.expect("then")
            then = self.seq()
            self.expect("else")
            orelse = self.seq()
            return IfLet(pat, sugar.desugar(scrut), sugar.desugar(then), sugar.desugar(orelse))
        if self.at("fun"):
            return self.lam()
        first = self.stmt()
        if self.at(";"):
            self.i += 1
            return sugar.Seq(first, self.seq())
        return first

    def lam(self) -> Lam:
        self.expect("fun")
        pat = self.pattern()
        self.expect("->")
        return Lam(pat, sugar.desugar(self.seq()))

    def stmt(self):
        if self.at("this") and self.peek(2).kind == "ident" and self.peek(3).text == ":=":
            name, _ = self.field()
            self.expect(":=")
            return Set(mutable(name), sugar.desugar(self.cons()))
        if self.at("let", "assert", "if", "fun"):
            # sequencing forms are allowed here only when parenthesised
            if self.at("fun"):
                return self.lam()
            raise self.error(f"{self.tok.text!r} must be parenthesised here")
        return self.cons()

    def cons(self):
        head = self.infix()
        if self.at("::"):
            self.i += 1
            return Pair(sugar.desugar(head), sugar.desugar(self.cons()))
        return head

    def infix(self):
        left = self.app()
        if self.at("+", "==", "<", "&&"):
            op = self.tok.text
            self.i += 1
            right = self.app()
            if self.at("+", "==", "<", "&&", ">>="):
                raise self.error("infix operators do not chain; add parentheses")
            return sugar.Infix(op, left, right)
        return left

    def starts_atom(self) -> bool:
        t = self.tok
        if t.kind in ("nat", "ident"):
            return True
        return t.kind in ("kw", "sym") and t.text in (
            "(", "this", "await", "fun", *(_CONST_WORDS)
        )

    def app(self):
        fn = self.atom()
        while self.starts_atom():
            fn = App(sugar.desugar(fn), sugar.desugar(self.atom()))
        return fn

    def atom(self):
        t = self.tok
        if t.kind == "nat":
            self.i += 1
            n = int(t.text)
            if n >= WORD:
                raise self.error("natural literal exceeds 2^256 - 1", t)
            return Const(n)
        if t.kind == "ident":
            return self.pure_name()
        if self.at(*_CONST_WORDS):
            self.i += 1
            return _CONST_WORDS[t.text]
        if self.at("this"):
            name, _ = self.field()
            return Get(mutable(name))
        if self.at("fun"):
            return self.lam()
        if self.at("await"):
            self.i += 1
            self.expect("(")
            pred = self.seq()
            self.expect(")")
            self.expect("{")
            body = self.seq()
            self.expect("}")
            return RemoteS(sugar.desugar(pred), sugar.desugar(body))
        if self.at("("):
            self.i += 1
            if self.at(")"):
                self.i += 1
                return UNIT
            if self.tok.text in OPERATORS and self.peek().text == ")":
                op = self.tok.text
                self.i += 2
                return Const(OPERATORS[op])
            items = [self.seq()]
            while self.at(","):
                self.i += 1
                items.append(self.seq())
            self.expect(")")
            return sugar.Tuple(tuple(items)) if len(items) > 1 else items[0]
        raise self.error(f"unexpected {t.text or 'end of input'!r}")

    # -- patterns

    def pattern(self) -> Term:
        head = self.pattern_atom()
        if self.at("::"):
            self.i += 1
            return Pair(head, self.pattern())
        return head

    def pattern_atom(self) -> Term:
        t = self.tok
        if t.kind == "nat":
            self.i += 1
            return Const(int(t.text))
        if t.kind == "ident":
            return self.pure_name()
        if self.at(*_CONST_WORDS):
            self.i += 1
            return _CONST_WORDS[t.text]
        if self.at("("):
            self.i += 1
            if self.at(")"):
                self.i += 1
                return UNIT
            items = [self.pattern()]
            while self.at(","):
                self.i += 1
                items.append(self.pattern())
            self.expect(")")
            if len(items) == 1:
                return items[0]
            out: Term = UNIT
            for item in reversed(items):
                out = Pair(item, out)
            return out
        raise self.error(f"expected pattern, found {t.text or 'end of input'!r}")


def parse(text: str, *, hybrid: bool = False) -> Program:
    """Parse and validate a program; raises :class:`ParseError` with positioned messages."""
    prog = Parser(text, hybrid=hybrid).program()
    violations = validate_subset(prog, Subset.HYBRID if hybrid else Subset.SOURCE)
    if violations:
        raise ParseError([str(v) for v in violations])
    return prog


def parse_term(text: str, *, hybrid: bool = True) -> Term:
    p = Parser(text, hybrid=hybrid)
    t = sugar.desugar(p.seq())
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}")
    return t


# --- printing -------------------------------------------------------------

SEQ, STMT, CONS, INFIX, APP, ATOM = range(6)

_CONST_TEXT = {
    Prim.TRUE: "true", Prim.FALSE: "false", Prim.UNIT: "()", Prim.TRY: "try",
    Prim.TRMP: "trmp", Prim.DONE: "Done", Prim.MORE: "More",
    Prim.ADD: "(+)", Prim.EQ: "(==)", Prim.LT: "(<)", Prim.AND: "(&&)", Prim.BIND: "(>>=)",
}
_INFIX_TEXT = {Prim.ADD: "+", Prim.EQ: "==", Prim.LT: "<", Prim.AND: "&&"}


def _pattern(p: Term) -> str:
    if type(p) is Pair:
        items = untuple(p)
        if items is not None and len(items) >= 2:
            return "(" + ", ".join(_pattern(i) for i in items) + ")"
        head = _pattern(p.head)
        if type(p.head) is Pair:
            head = f"({head})"
        return f"{head} :: {_pattern(p.tail)}"
    return _fmt(p, ATOM, None)


def _nl(ind: int | None) -> str:
    return " " if ind is None else "\n" + " " * ind


def _fmt(t: Term, level: int, ind: int | None) -> str:
    """Render ``t`` so that it reparses in a context expecting ``level``.

    ``ind`` is the current indentation for block layout, or None for one line.
    """
    cls = type(t)
    text: str
    own: int
    if cls is Const:
        return str(t.c) if type(t.c) is int else _CONST_TEXT[t.c]
    if cls is Var:
        return t.id.name
    if cls is Get:
        return f"this.{t.var.name}"
    if cls is Let:
        if t.pattern == UNIT:
            text = f"{_fmt(t.bound, STMT, None)};{_nl(ind)}{_fmt(t.body, SEQ, ind)}"
        elif t.pattern == TRUE:
            text = f"assert({_fmt(t.bound, SEQ, None)});{_nl(ind)}{_fmt(t.body, SEQ, ind)}"
        else:
            text = (
                f"let {_pattern(t.pattern)} = {_fmt(t.bound, STMT, None)};"
                f"{_nl(ind)}{_fmt(t.body, SEQ, ind)}"
            )
        own = SEQ
    elif cls is IfLet:
        inner = None if ind is None else ind + 2
        text = (
            f"if let {_pattern(t.pattern)} = {_fmt(t.scrutinee, STMT, None)} then"
            f"{_nl(inner)}{_fmt(t.then, SEQ, inner)}{_nl(ind)}else"
        )
        if type(t.orelse) is IfLet:
            text += " " + _fmt(t.orelse, SEQ, ind)
        else:
            text += f"{_nl(inner)}{_fmt(t.orelse, SEQ, inner)}"
        own = SEQ
    elif cls is Lam:
        inner = None if ind is None else ind + 2
        body = _fmt(t.body, SEQ, inner)
        if ind is not None and type(t.body) in (Let, IfLet):
            text = f"fun {_pattern(t.pattern)} ->{_nl(inner)}{body}"
        else:
            text = f"fun {_pattern(t.pattern)} -> {body}"
        own = SEQ
    elif cls is Set:
        text = f"this.{t.var.name} := {_fmt(t.rhs, CONS, None)}"
        own = STMT
    elif cls is Pair:
        items = untuple(t)
        if items is not None and len(items) >= 2:
            return "(" + ", ".join(_fmt(i, SEQ, None) for i in items) + ")"
        text = f"{_fmt(t.head, INFIX, None)} :: {_fmt(t.tail, CONS, None)}"
        own = CONS
    elif cls is App:
        items = untuple(t.arg)
        if type(t.fn) is Const and t.fn.c in _INFIX_TEXT and items is not None and len(items) == 2:
            text = f"{_fmt(items[0], APP, None)} {_INFIX_TEXT[t.fn.c]} {_fmt(items[1], APP, None)}"
            own = INFIX
        else:
            text = f"{_fmt(t.fn, APP, None)} {_fmt(t.arg, ATOM, None)}"
            own = APP
    elif cls is RemoteS:
        return f"await({_fmt(t.pred, SEQ, None)}) {{ {_fmt(t.body, SEQ, None)} }}"
    elif cls is RemoteT:
        return f"awaitT({t.client}) {{ {_fmt(t.body, SEQ, None)} }}"
    else:  # pragma: no cover
        raise TypeError(t)
    if own < level:
        if ind is not None and own == SEQ:
            # re-render inline so parentheses enclose a single line
            return "(" + _fmt(t, SEQ, None) + ")"
        return f"({text})"
    return text


def pretty_term(t: Term, *, block: bool = False) -> str:
    return _fmt(t, SEQ, 2 if block else None)


def pretty(p: Program, stage: str = "source") -> str:
    """Deterministic text for ``p``; ``stage`` is only a header marker for non-source output."""
    lines = []
    if stage != "source":
        lines.append(f"-- stage: {stage}")
    for d in (*p.defs, *p.syndefs):
        value = _fmt(d.value, STMT, None)
        if d.var.kind is Kind.SYNTHETIC and type(d.value) is Lam:
            value = "(" + _fmt(d.value, SEQ, 2) + ")"
        lines.append(f"@{d.location.value} this.{d.var.name} = {value};")
    lines.append("main {")
    lines.append("  " + _fmt(p.main, SEQ, 2))
    lines.append("}")
    return "\n".join(lines) + "\n"
