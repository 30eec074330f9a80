import pytest
from hypothesis import given
from hypothesis import strategies as st

from miniprisma.ast import (
    ADD,
    TRMP,
    TRUE,
    UNIT,
    App,
    Const,
    Definition,
    Get,
    Ident,
    Kind,
    Lam,
    Let,
    Location,
    Pair,
    Program,
    RemoteS,
    RemoteT,
    Subset,
    Var,
    WORD,
    alpha_normalize,
    canonicalize,
    compose,
    free_vars,
    is_linear,
    is_value,
    match_pattern,
    mutable,
    pure,
    substitute,
    tuple_,
    untuple,
    validate_subset,
)
from miniprisma.parser import parse, parse_term
from miniprisma.passes import FreshSupply, compile

x, y, z = (Var(pure(n)) for n in "xyz")


def test_ident_kinds_are_disjoint():
    assert Ident(Kind.PURE, "a") != Ident(Kind.MUTABLE, "a")
    assert mutable("state").kind is Kind.SYNTHETIC


def test_const_range_and_bool_rejected():
    Const(WORD - 1)
    with pytest.raises(ValueError):
        Const(WORD)
    with pytest.raises((TypeError, ValueError)):
        Const(True)


def test_free_vars_examples():
    assert free_vars(x) == [pure("x")]
    assert free_vars(Lam(x, App(x, y))) == [pure("y")]
    assert free_vars(Let(x, y, Pair(x, z))) == [pure("y"), pure("z")]


def test_free_vars_ignores_fields_and_keeps_first_occurrence_order():
    t = App(Get(mutable("f")), tuple_([z, y, z, x]))
    assert free_vars(t) == [pure("z"), pure("y"), pure("x")]


def test_substitute_examples():
    three = Const(3)
    assert substitute({pure("x"): three}, x) == three
    assert substitute({pure("x"): three}, Lam(x, x)) == Lam(x, x)
    v = Lam(z, z)
    assert substitute({pure("y"): v}, Lam(x, y)) == Lam(x, v)


def test_substitute_avoids_capture():
    # open values are not produced by evaluation, but substitution stays correct on them
    out = substitute({pure("y"): x}, Lam(x, Pair(x, y)))
    assert type(out) is Lam and out.pattern != x
    assert out.body == Pair(out.pattern, x)


def test_compose_is_right_to_left():
    inner = {pure("x"): y}
    outer = {pure("y"): Const(1)}
    s = compose(outer, inner)
    assert substitute(s, x) == substitute(outer, substitute(inner, x))


def test_match_pattern_examples():
    assert match_pattern(Const(5), Const(5)) == {}
    assert match_pattern(x, Const(7)) == {pure("x"): Const(7)}
    assert match_pattern(Pair(x, Const(2)), Pair(Const(3), Const(2))) == {pure("x"): Const(3)}
    assert match_pattern(Const(1), Const(2)) is None


def test_linearity():
    assert is_linear(Pair(x, y))
    assert not is_linear(Pair(x, x))


def test_desugar_examples():
    assert parse_term("2 + 3") == App(ADD, Pair(Const(2), Pair(Const(3), UNIT)))
    assert parse_term("assert(x); y") == Let(TRUE, x, y)
    assert parse_term("(1, 2)") == Pair(Const(1), Pair(Const(2), UNIT))
    assert parse_term("a; b") == Let(UNIT, Var(pure("a")), Var(pure("b")))


def test_try_normalises_to_iflet():
    t = parse_term("try (m, fun x -> x, fun () -> 0)")
    assert type(t).__name__ == "IfLet"
    assert t.pattern == x and t.then == x and t.orelse == Const(0)


def _prog(main, defs=(), syndefs=()):
    return Program(tuple(defs), tuple(syndefs), main)


def test_validate_source_accepts_remote():
    p = parse("main { let r = await(fun a -> true) { 1 }; r }")
    assert validate_subset(p, Subset.SOURCE) == []


def test_validate_source_rejects_target_only_constructs():
    msgs = [v.message for v in validate_subset(_prog(App(TRMP, Const(1))), Subset.SOURCE)]
    assert "trmp not in source subset" in msgs
    assert validate_subset(_prog(RemoteT(1, Const(1))), Subset.SOURCE)
    assert validate_subset(_prog(Get(mutable("who"))), Subset.SOURCE)


def test_validate_target_rejects_remote():
    p = _prog(RemoteS(Lam(x, TRUE), Const(1)))
    assert any("RemoteS" in v.message or "await" in v.message for v in validate_subset(p, Subset.TARGET))


def test_remote_placement_under_lambda_rejected():
    p = _prog(Lam(x, RemoteS(Lam(y, TRUE), Const(1))))
    assert validate_subset(p, Subset.HYBRID)


def test_definitions_must_be_values_of_the_right_kind():
    bad = Definition(Location.CONTRACT, mutable("f"), App(ADD, tuple_([Const(1), Const(2)])))
    assert validate_subset(_prog(UNIT, [bad]), Subset.SOURCE)
    syn = Definition(Location.CONTRACT, mutable("g"), Const(0))
    assert validate_subset(_prog(UNIT, [], [syn]), Subset.HYBRID)


def test_canonicalize_idempotent_and_alpha_invariant():
    p = parse("main { let a = 1; let b = (fun q -> q + a) 2; b }")
    q = parse("main { let u = 1; let v = (fun w -> w + u) 2; v }")
    assert canonicalize(p) == canonicalize(canonicalize(p))
    assert canonicalize(p) == canonicalize(q)


def test_canonicalize_erases_fresh_seed():
    p = parse("@co this.i = 0; main { let r = await(fun a -> true) { 1 }; this.i := r; r }")
    c1, c2 = compile(p, FreshSupply(0)), compile(p, FreshSupply(40))
    assert c1 != c2
    assert canonicalize(c1) == canonicalize(c2)


# --- properties ------------------------------------------------------------

names = st.sampled_from(["a", "b", "c", "d"])
consts = st.integers(0, 5).map(Const) | st.sampled_from([TRUE, UNIT])
values = st.recursive(consts, lambda kids: st.builds(Pair, kids, kids), max_leaves=6)


@st.composite
def pattern_and_value(draw):
    """A linear pattern and a value it matches."""
    used: set[str] = set()

    def go(depth):
        kind = draw(st.sampled_from(["var", "const", "pair"] if depth else ["var", "const"]))
        if kind == "var":
            free = [n for n in "abcdefgh" if n not in used]
            n = draw(st.sampled_from(free))
            used.add(n)
            v = draw(values)
            return Var(pure(n)), v
        if kind == "const":
            c = draw(consts)
            return c, c
        (p1, v1), (p2, v2) = go(depth - 1), go(depth - 1)
        return Pair(p1, p2), Pair(v1, v2)

    return go(3)


@given(pattern_and_value())
def test_match_then_substitute_rebuilds_value(pv):
    p, v = pv
    sigma = match_pattern(p, v)
    assert sigma is not None
    assert substitute(sigma, p) == v


terms = st.recursive(
    names.map(lambda n: Var(pure(n))) | consts,
    lambda kids: st.builds(App, kids, kids)
    | st.builds(Pair, kids, kids)
    | st.builds(lambda n, b: Lam(Var(pure(n)), b), names, kids)
    | st.builds(lambda n, a, b: Let(Var(pure(n)), a, b), names, kids, kids),
    max_leaves=10,
)


@given(terms, values)
def test_substitution_removes_the_variable(t, v):
    out = substitute({pure("a"): v}, t)
    assert pure("a") not in free_vars(out)
    assert set(free_vars(out)) == set(free_vars(t)) - {pure("a")}


@given(terms)
def test_alpha_normalize_idempotent_and_fv_preserving(t):
    n = alpha_normalize(t)
    assert alpha_normalize(n) == n
    assert free_vars(n) == free_vars(t)


@given(values)
def test_tuple_roundtrip(v):
    items = untuple(v)
    if items is not None:
        assert tuple_(items) == v
    assert is_value(v)
