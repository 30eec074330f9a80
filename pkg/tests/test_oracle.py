import pytest

from miniprisma.ast import Program, alpha_normalize
from miniprisma.gen import random_closed_term
from miniprisma.interp import Bounds, RunResult, Stuck, run_program

from oracles import evaluate


def substitution_verdict(t):
    out = run_program(Program((), (), t), Bounds())
    if isinstance(out, RunResult):
        return "value", alpha_normalize(out.value)
    if isinstance(out, Stuck):
        return "stuck", out.reason
    return "budget", None


def oracle_verdict(t):
    kind, v = evaluate(t)
    return (kind, alpha_normalize(v)) if kind == "value" else (kind, v)


@pytest.mark.parametrize("seed", range(100))
def test_oracle_agrees(seed):
    t = random_closed_term(seed)
    assert substitution_verdict(t) == oracle_verdict(t)


def test_oracle_sample_covers_values_and_stuck():
    kinds = {oracle_verdict(random_closed_term(s))[0] for s in range(100)}
    assert {"value", "stuck"} <= kinds
