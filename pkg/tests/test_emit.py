import os

import pytest

from miniprisma.emit import EmitError, emit_fsm, fsm_view, phase_functions
from miniprisma.equiv import tags_of
from miniprisma.parser import parse
from miniprisma.passes import compile, count_awaits

from conftest import CORPUS_FILES, GOLDEN, load

UPDATE = os.environ.get("MP_UPDATE_GOLDEN") == "1"


def _check_golden(name: str, text: str) -> None:
    path = GOLDEN / name
    if UPDATE:
        path.write_text(text)
    assert path.exists(), f"missing golden {path}; run with MP_UPDATE_GOLDEN=1"
    assert text == path.read_text()


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_emit_matches_golden(path):
    p = load(path)
    contract, client = emit_fsm(compile(p))
    _check_golden(f"{path.stem}.contract.txt", contract)
    _check_golden(f"{path.stem}.client.txt", client)


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_phase_count_and_require_lines(path):
    p = load(path)
    q = compile(p)
    contract, client = emit_fsm(q)
    phases = phase_functions(contract)
    assert len(phases) == len(phase_functions(client)) == count_awaits(p.main)
    tags = [t.c for t in tags_of(q)]
    for body, view in zip(phases, fsm_view(q).phases):
        assert body[0] == f"require(state == {view.tag} && who(sender));"
        assert view.tag in tags


def test_one_await_single_phase():
    contract, _ = emit_fsm(compile(parse("main { let r = await(fun a -> true) { 1 }; r }")))
    assert contract.count("function phase") == 1
    assert contract.count("require(") == 1
    assert "done(" in contract


def test_zero_await_constructor_only():
    contract, client = emit_fsm(compile(parse("@co this.n = 0; main { this.n := 1; this.n }")))
    assert "function" not in contract and "constructor()" in contract
    assert client == "client {\n}\n"


def test_emit_rejects_source_programs():
    with pytest.raises(EmitError):
        emit_fsm(parse("main { let r = await(fun a -> true) { 1 }; r }"))


def test_emit_is_injective_on_corpus():
    texts = {emit_fsm(compile(load(p))) for p in CORPUS_FILES}
    assert len(texts) == len(CORPUS_FILES)


def test_emit_deterministic():
    p = load(CORPUS_FILES[0])
    assert emit_fsm(compile(p)) == emit_fsm(compile(p))
