import pytest

from miniprisma.ast import (
    BIND,
    CLFN,
    COFN,
    MORE,
    STATE,
    TRMP,
    TRUE,
    UNIT,
    WHO,
    App,
    Const,
    IfLet,
    Lam,
    Let,
    Program,
    RemoteS,
    Set,
    Subset,
    Var,
    canonicalize,
    pure,
    subterms,
    untuple,
    validate_subset,
)
from miniprisma.gen import random_program
from miniprisma.interp import Bounds, RunResult, run_program
from miniprisma.parser import parse
from miniprisma import passes
from miniprisma.passes import (
    ASSERT_FALSE,
    GUARD_TRUE,
    CompileError,
    FreshSupply,
    assoc,
    comp_fused,
    comp_prime,
    compile,
    count_awaits,
    cps_program,
    defun_program,
    guard_assert,
    guard_program,
    is_mnf,
    is_mnf_program,
    mnf_expr,
    mnf_program,
)

x0, x1 = Var(pure("x0")), Var(pure("x1"))
ONE_AWAIT = "@co this.i = 0; main { let r = await(fun a -> true) { 1 }; this.i := r; r }"
TWO_AWAIT = """
@co this.a = 0;
main {
  let u = await(fun c -> c == 1) { 1 };
  let v = await(fun c -> c == 2) { u + 1 };
  this.a := u + v;
  v
}
"""


def count(t, pred):
    return sum(1 for s in subterms(t) if pred(s))


def program_count(p: Program, pred) -> int:
    return count(p.main, pred) + sum(count(d.value, pred) for d in p.syndefs)


def clauses(p: Program, var) -> list[IfLet]:
    body = p.syndef(var).value.body
    out = []
    while type(body) is IfLet:
        out.append(body)
        body = body.orelse
    assert body == ASSERT_FALSE
    return out


# --- assoc -----------------------------------------------------------------


def test_assoc_rotation_example():
    t = Let(x0, Let(x1, Const(1), x1), x0)
    assert assoc(t) == Let(x1, Const(1), Let(x0, x1, x0))


def test_assoc_atom_is_identity():
    assert assoc(x0) == x0


def test_assoc_renames_to_avoid_capture():
    # let x0 = (let x1 = 1; x1); x1 must not capture the outer x1
    t = Let(x0, Let(x1, Const(1), x1), x1)
    out = assoc(t)
    assert out.pattern != x1
    assert out.body.body == x1


def test_assoc_idempotent_on_corpus(corpus_program):
    _, p = corpus_program
    m = mnf_program(p).main.arg
    assert assoc(assoc(m)) == assoc(m)


# --- mnf -------------------------------------------------------------------


def test_mnf_expr_example():
    f, g = Var(pure("f")), Var(pure("g"))
    out = mnf_expr(App(f, App(g, Const(1))), FreshSupply())
    t0, t1 = Var(pure("tmp0")), Var(pure("tmp1"))
    assert out == Let(t0, App(g, Const(1)), Let(t1, App(f, t0), t1))


def test_mnf_expr_atom_unchanged():
    assert mnf_expr(x0) == x0


def test_mnf_program_wraps_done():
    p = mnf_program(parse("main { 5 }"))
    assert p.main.fn == TRMP
    out = run_program(p, Bounds())
    assert isinstance(out, RunResult) and out.value == Const(5) and out.normal == ()


def test_mnf_program_rejects_non_source():
    p = Program((), (), App(TRMP, Const(1)))
    with pytest.raises(CompileError):
        mnf_program(p)


def test_is_mnf_after_mnf_corpus(corpus_program):
    _, p = corpus_program
    assert is_mnf_program(mnf_program(p))


@pytest.mark.parametrize("seed", range(100))
def test_is_mnf_after_mnf_random(seed):
    p = random_program(seed)
    assert is_mnf(mnf_program(p).main.arg)


def test_is_mnf_rejects_nested_let():
    assert not is_mnf(Let(x0, Let(x1, Const(1), x1), x0))


# --- guard -----------------------------------------------------------------


def test_guard_one_await_expansion():
    g = guard_program(mnf_program(parse(ONE_AWAIT)))
    m = g.main
    assert count(m, lambda s: type(s) is Set and s.var == WHO) == 1
    assert count(m, lambda s: type(s) is Set and s.var == STATE and s.rhs == Const(1)) == 1
    assert count(m, lambda s: type(s) is Set and s.var == STATE and s.rhs == Const(0)) == 1
    assert count(m, lambda s: type(s) is Let and s.pattern == TRUE and s.bound == guard_assert(Const(1))) == 1


def test_guard_zero_await_unchanged():
    p = mnf_program(parse("@co this.n = 1; main { this.n := this.n + 1; this.n }"))
    assert guard_program(p) == p


def test_guard_predicates_become_true_and_tags_distinct(corpus_program):
    _, p = corpus_program
    g = guard_program(mnf_program(p))
    remotes = [s for s in subterms(g.main) if type(s) is RemoteS]
    assert all(r.pred == GUARD_TRUE for r in remotes)
    tags = [s.rhs for s in subterms(g.main) if type(s) is Set and s.var == STATE and s.rhs != Const(0)]
    assert len(tags) == len(set(tags)) == count_awaits(p.main)


# --- cps -------------------------------------------------------------------


def test_cps_replaces_each_await_with_one_bind(corpus_program):
    _, p = corpus_program
    c = cps_program(guard_program(mnf_program(p)))
    assert count(c.main, lambda s: type(s) is RemoteS) == 0
    assert count(c.main, lambda s: s == BIND) == count_awaits(p.main)


def test_cps_await_free_unchanged():
    p = guard_program(mnf_program(parse("main { 1 + 2 }")))
    assert cps_program(p) == p


def test_cps_rejects_unguarded_remote():
    p = mnf_program(parse(ONE_AWAIT))
    with pytest.raises(CompileError):
        cps_program(p)


# --- defun -----------------------------------------------------------------


def test_defun_two_awaits_two_clauses():
    out = compile(parse(TWO_AWAIT))
    assert len(clauses(out, CLFN)) == 2
    assert len(clauses(out, COFN)) == 2


def test_defun_zero_awaits_keeps_base_dispatchers():
    out = compile(parse("main { 0 }"))
    for var in (CLFN, COFN):
        lam = out.syndef(var).value
        assert type(lam) is Lam and lam.pattern == Var(passes.DISPATCH) and lam.body == ASSERT_FALSE


def test_defun_records_share_a_tag():
    out = compile(parse(ONE_AWAIT))
    more = [untuple(s) for s in subterms(out.main) if untuple(s) and untuple(s)[0] == MORE]
    assert len(more) == 1
    _, rec1, rec2 = more[0]
    assert rec1.head == rec2.head == Const(1)


def test_defun_dispatcher_locations():
    out = compile(parse(ONE_AWAIT))
    assert out.syndef(CLFN).location.value == "cl"
    assert out.syndef(COFN).location.value == "co"


def test_defun_program_matches_compile():
    p = parse(TWO_AWAIT)
    fs = FreshSupply()
    staged = defun_program(cps_program(guard_program(mnf_program(p, fs), fs)), fs)
    assert staged == compile(p)


# --- whole pipeline ----------------------------------------------------------


def test_compile_structure_on_corpus(corpus_program):
    _, p = corpus_program
    out = compile(p)
    assert validate_subset(out, Subset.TARGET) == []
    n = count_awaits(p.main)
    assert len(clauses(out, CLFN)) == len(clauses(out, COFN)) == n


@pytest.mark.parametrize("seed", range(100))
def test_compile_random_passes_target_validation(seed):
    p = random_program(seed)
    out = compile(p)
    assert validate_subset(out, Subset.TARGET) == []
    assert len(clauses(out, COFN)) == count_awaits(p.main)


def test_compile_pure_program_same_value():
    p = parse("main { let f = (fun (a, b) -> a + b); f (2, 3) }")
    src, out = run_program(p, Bounds()), run_program(compile(p), Bounds())
    assert src.value == out.value == Const(5)


def test_compile_deterministic_for_a_seed():
    p = parse(TWO_AWAIT)
    assert compile(p, FreshSupply(3)) == compile(p, FreshSupply(3))


def test_fused_agrees_with_pipeline(corpus_program):
    _, p = corpus_program
    m = mnf_program(p, FreshSupply())
    assert canonicalize(comp_fused(m, FreshSupply(7))) == canonicalize(comp_prime(m, FreshSupply()))


def test_stages_are_consistent():
    stages = passes.compile_stages(parse(TWO_AWAIT))
    assert list(stages) == list(passes.STAGES)
    assert stages["defun"] == compile(parse(TWO_AWAIT))


def test_fresh_supply_skips_program_names():
    fs = FreshSupply(avoid={"tmp0", "tmp1"})
    assert fs.ident().id.name == "tmp2"
    assert fs.tag() == Const(1)


def test_unit_pattern_sequence_survives():
    p = parse("@co this.n = 0; main { this.n := 1; this.n := 2; this.n }")
    assert run_program(compile(p), Bounds()).value == Const(2)
    assert UNIT in [s.pattern for s in subterms(compile(p).main) if type(s) is Let]
