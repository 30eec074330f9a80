import json
import re
import subprocess
import sys

import pytest

from miniprisma.cli import EXIT_USAGE, main

from conftest import CORPUS, CORPUS_FILES, ROOT, SELF_APP


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out), err


@pytest.fixture(autouse=True)
def _isolate(tmp_path, monkeypatch):
    # no stray miniprisma.toml or MP_SEED from the environment
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("MP_SEED", raising=False)


def test_verify_theorem_escrow(capsys):
    code, report, _ = run_json(capsys, "verify", CORPUS / "escrow_lite.mp", "--theorem")
    assert code == 0 and report["equal"] and report["conclusive"]


@pytest.mark.parametrize("lemma", ["assoc", "mnf", "mnf2", "comp", "comp2"])
def test_verify_lemmas(capsys, lemma):
    code, report, _ = run_json(capsys, "verify", CORPUS / "two_phase.mp", "--lemma", lemma)
    assert code == 0 and report["equal"]


def test_verify_inconclusive_exit_2(capsys, tmp_path):
    f = tmp_path / "grow.mp"
    f.write_text("main { let f = (fun x -> (x x) + 1); f f }")
    code, report, _ = run_json(capsys, "verify", f, "--step-budget", "100")
    assert code == 2 and not report["conclusive"]


def test_compile_stop_after_mnf(capsys):
    code, out, _ = run(capsys, "compile", CORPUS / "counter.mp", "--stop-after", "mnf")
    assert code == 0
    assert out.startswith("-- stage: mnf\n") and "trmp" in out


def test_compile_full_and_emit(capsys, tmp_path):
    code, out, err = run(capsys, "compile", CORPUS / "one_await.mp", "--emit-fsm", tmp_path / "fsm")
    assert code == 0 and "this.cofn" in out
    assert (tmp_path / "fsm" / "one_await.contract.txt").read_text().startswith("contract {")
    assert (tmp_path / "fsm" / "one_await.client.txt").exists()


def test_emit_needs_full_pipeline(capsys, tmp_path):
    code, _, err = run(capsys, "compile", CORPUS / "one_await.mp", "--stop-after", "cps", "--emit-fsm", tmp_path)
    assert code == EXIT_USAGE and "--emit-fsm" in err


def test_explore_one_await_default_bounds(capsys):
    code, ts, _ = run_json(capsys, "explore", CORPUS / "one_await.mp")
    assert code == 0 and ts["complete"]
    # two clients times the seven default universe values
    assert len(ts["entries"]) == 14


def test_explore_one_await_small_universe(capsys):
    code, ts, _ = run_json(capsys, "explore", CORPUS / "one_await.mp", "--universe", "0", "1", "unit")
    assert code == 0 and len(ts["entries"]) == 6
    first = ts["entries"][0]
    assert first["trace"][0] == {"kind": "wr", "loc": 0, "var": "i", "value": "0"}
    assert first["trace"][1]["kind"] == "msg"


def test_explore_compiled_same_entries(capsys):
    _, a, _ = run_json(capsys, "explore", CORPUS / "two_phase.mp")
    _, b, _ = run_json(capsys, "explore", CORPUS / "two_phase.mp", "--compiled")
    assert a["entries"] == b["entries"]


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_run_source_and_compiled_identical(capsys, path):
    code1, out1, _ = run(capsys, "run", path)
    code2, out2, _ = run(capsys, "run", path, "--compiled")
    assert code1 == code2 == 0
    assert out1 == out2
    assert set(json.loads(out1)) == {"trace", "value"}


def test_run_stuck_exit_1(capsys, tmp_path):
    f = tmp_path / "stuck.mp"
    f.write_text("main { assert(false); 1 }")
    code, out, err = run_json(capsys, "run", f)
    assert code == 1 and out["stuck"] == "let-match failed" and "stuck" in err


def test_run_budget_exit_2(capsys):
    code, out, _ = run_json(capsys, "run", SELF_APP, "--step-budget", "50")
    assert code == 2 and out == {"budget_exceeded": True}


def test_check_ok_and_errors(capsys, tmp_path):
    code, out, _ = run_json(capsys, "check", CORPUS / "three_phase.mp")
    assert code == 0 and out == {"ok": True, "awaits": 3}
    f = tmp_path / "bad.mp"
    f.write_text("main { trmp 1 }")
    code, out, err = run_json(capsys, "check", f)
    assert code == 1 and not out["ok"] and "trmp not in source subset" in err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["check"],
        ["compile", "x.mp", "--stop-after", "parse"],
        ["verify", "x.mp", "--lemma", "mnf", "--theorem"],
        ["check", "does-not-exist.mp"],
        ["explore", str(CORPUS / "one_await.mp"), "--universe", "(fun x -> x) 1"],
        ["explore", str(CORPUS / "one_await.mp"), "--universe", "0"],
        ["explore", str(CORPUS / "one_await.mp"), "--clients", "0"],
    ],
)
def test_usage_errors_exit_64(capsys, argv):
    with pytest.raises(SystemExit) as e:
        sys.exit(main(argv))
    assert e.value.code == EXIT_USAGE


def _state_tags(text: str) -> set[str]:
    return set(re.findall(r"this\.state := (\d+)", text)) - {"0"}


def test_config_precedence(capsys, tmp_path, monkeypatch):
    target = CORPUS / "one_await.mp"
    (tmp_path / "miniprisma.toml").write_text("fresh_seed = 5\nclients = [1]\n")
    _, out, _ = run(capsys, "compile", target)
    assert _state_tags(out) == {"6"}
    monkeypatch.setenv("MP_SEED", "7")
    _, out, _ = run(capsys, "compile", target)
    assert _state_tags(out) == {"8"}
    _, out, _ = run(capsys, "compile", target, "--seed", "9")
    assert _state_tags(out) == {"10"}
    _, ts, _ = run_json(capsys, "explore", target)
    assert {ev["loc"] for e in ts["entries"] for ev in e["trace"] if ev["kind"] == "msg"} == {1}
    _, ts, _ = run_json(capsys, "explore", target, "--clients", "1", "2")
    assert {ev["loc"] for e in ts["entries"] for ev in e["trace"] if ev["kind"] == "msg"} == {1, 2}


def test_config_errors(capsys, tmp_path):
    (tmp_path / "miniprisma.toml").write_text("colour = 1\n")
    code, _, err = run(capsys, "check", CORPUS / "counter.mp")
    assert code == EXIT_USAGE and "unknown keys" in err
    code, _, err = run(capsys, "check", CORPUS / "counter.mp", "--config", tmp_path / "missing.toml")
    assert code == EXIT_USAGE


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "miniprisma", "check", str(CORPUS / "one_await.mp")],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )
    assert out.returncode == 0 and json.loads(out.stdout)["awaits"] == 1
