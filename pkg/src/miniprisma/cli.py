"""Command-line front end: check, compile, run, explore and verify MiniPrisma programs.

JSON goes to stdout, diagnostics to stderr.  Exit codes: 0 success or
verified, 1 violation or inequality, 2 inconclusive (a budget was hit),
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from miniprisma import codec, emit, equiv, passes
from miniprisma.ast import Program, Term, is_value
from miniprisma.interp import Bounds, BudgetExceeded, InitError, RunResult, Stuck, run_program
from miniprisma.parser import ParseError, parse, parse_term, pretty

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 64
CONFIG_NAME = "miniprisma.toml"


class UsageError(Exception):
    pass


class _ArgParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class RunConfig:
    clients: list[int] = field(default_factory=lambda: [1, 2])
    universe: list[str] = field(default_factory=list)
    step_budget: int = 10000
    path_limit: int = 200000
    fresh_seed: int = 0

    def bounds(self) -> Bounds:
        universe = tuple(_value(s) for s in self.universe)
        try:
            return Bounds(tuple(self.clients), universe, self.step_budget, self.path_limit)
        except ValueError as e:
            raise UsageError(str(e)) from None


def _value(text: str) -> Term:
    try:
        v = parse_term(text)
    except ParseError as e:
        raise UsageError(f"universe literal {text!r}: {e}") from None
    if not is_value(v):
        raise UsageError(f"universe literal {text!r} is not a value")
    return v


def _nat(name: str, x) -> int:
    if type(x) is not int or x < 0:
        raise UsageError(f"{name} must be a natural number, got {x!r}")
    return x


def load_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    """Precedence: flags, then MP_SEED, then the config file, then defaults."""
    cfg = RunConfig()
    path = Path(args.config) if args.config else Path(CONFIG_NAME)
    if args.config or path.exists():
        try:
            data = tomllib.loads(path.read_text())
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise UsageError(f"config {path}: {e}") from None
        unknown = set(data) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
        if "clients" in data:
            cfg.clients = [_nat("clients", c) for c in data["clients"]]
        if "universe" in data:
            cfg.universe = [str(u) for u in data["universe"]]
        for key in ("step_budget", "path_limit", "fresh_seed"):
            if key in data:
                setattr(cfg, key, _nat(key, data[key]))
    if "MP_SEED" in environ:
        try:
            cfg.fresh_seed = _nat("MP_SEED", int(environ["MP_SEED"]))
        except ValueError:
            raise UsageError(f"MP_SEED must be a natural number, got {environ['MP_SEED']!r}") from None
    for key in ("clients", "universe", "step_budget", "path_limit"):
        if getattr(args, key, None) is not None:
            setattr(cfg, key, getattr(args, key))
    if args.seed is not None:
        cfg.fresh_seed = args.seed
    return cfg


def _emit_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _load(path: str) -> Program:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(str(e)) from None
    return parse(text)


def _compiled(p: Program, cfg: RunConfig) -> Program:
    return passes.compile(p, passes.FreshSupply(cfg.fresh_seed))


# --- subcommands ----------------------------------------------------------


def cmd_check(args, cfg: RunConfig) -> int:
    p = _load(args.file)
    _emit_json({"ok": True, "awaits": passes.count_awaits(p.main)})
    return EXIT_OK


def cmd_compile(args, cfg: RunConfig) -> int:
    p = _load(args.file)
    stages = passes.compile_stages(p, passes.FreshSupply(cfg.fresh_seed))
    stage = args.stop_after or "defun"
    if args.emit_fsm and stage != "defun":
        raise UsageError("--emit-fsm needs the full pipeline; drop --stop-after")
    sys.stdout.write(pretty(stages[stage], stage=stage))
    if args.emit_fsm:
        out = Path(args.emit_fsm)
        out.mkdir(parents=True, exist_ok=True)
        contract, client = emit.emit_fsm(stages["defun"])
        name = Path(args.file).stem
        (out / f"{name}.contract.txt").write_text(contract)
        (out / f"{name}.client.txt").write_text(client)
        print(f"wrote {out / name}.contract.txt and {out / name}.client.txt", file=sys.stderr)
    return EXIT_OK


def cmd_run(args, cfg: RunConfig) -> int:
    p = _load(args.file)
    if args.compiled:
        p = _compiled(p, cfg)
    out = run_program(p, cfg.bounds())
    if isinstance(out, RunResult):
        _emit_json({"trace": codec.trace_json(out.normal), "value": codec.value_json(out.value)})
        return EXIT_OK
    if isinstance(out, Stuck):
        _emit_json({"stuck": out.reason, "detail": out.detail})
        print(f"stuck: {out}", file=sys.stderr)
        return EXIT_FAIL
    assert isinstance(out, BudgetExceeded)
    _emit_json({"budget_exceeded": True})
    print("step budget exceeded", file=sys.stderr)
    return EXIT_INCONCLUSIVE


def cmd_explore(args, cfg: RunConfig) -> int:
    p = _load(args.file)
    if args.compiled:
        p = _compiled(p, cfg)
    ts = equiv.trace_set(p, equiv.with_tags(cfg.bounds(), p))
    _emit_json(codec.trace_set_json(ts))
    return EXIT_OK if ts.complete else EXIT_INCONCLUSIVE


def cmd_verify(args, cfg: RunConfig) -> int:
    p = _load(args.file)
    bounds = cfg.bounds()
    if args.lemma:
        report = equiv.check_pass_equiv(p, args.lemma, bounds, seed=cfg.fresh_seed)
    else:
        report = equiv.check_secure(p, bounds, seed=cfg.fresh_seed)
    _emit_json(codec.report_json(report))
    return verdict(report)


def verdict(report: equiv.EquivReport) -> int:
    if not report.conclusive:
        return EXIT_INCONCLUSIVE
    return EXIT_OK if report.equal else EXIT_FAIL


# --- argument parsing -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"TOML config file (default: ./{CONFIG_NAME} if present)")
    common.add_argument("--clients", type=int, nargs="+", metavar="N", help="client addresses")
    common.add_argument("--universe", nargs="+", metavar="VALUE", help="attacker-injectable value literals")
    common.add_argument("--step-budget", dest="step_budget", type=int, metavar="N")
    common.add_argument("--path-limit", dest="path_limit", type=int, metavar="N")
    common.add_argument("--seed", type=int, metavar="N", help="fresh-name seed (overrides MP_SEED)")

    ap = _ArgParser(prog="miniprisma", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_ArgParser)

    p = sub.add_parser("check", parents=[common], help="parse and validate a source program")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("compile", parents=[common], help="compile and print a pipeline stage")
    p.add_argument("file")
    p.add_argument("--stop-after", choices=passes.STAGES, metavar="STAGE", help=", ".join(passes.STAGES))
    p.add_argument("--emit-fsm", metavar="DIR", help="write <name>.contract.txt and <name>.client.txt")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", parents=[common], help="honest deterministic run, prints the trace")
    p.add_argument("file")
    p.add_argument("--compiled", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explore", parents=[common], help="attacker trace set, prints JSON")
    p.add_argument("file")
    p.add_argument("--compiled", action="store_true")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("verify", parents=[common], help="bounded trace-set equivalence check")
    p.add_argument("file")
    which = p.add_mutually_exclusive_group()
    which.add_argument("--lemma", choices=equiv.PASSES)
    which.add_argument("--theorem", action="store_true", help="source vs compiled (the default)")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        cfg.bounds()
        return args.func(args, cfg)
    except UsageError as e:
        print(f"miniprisma: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InitError as e:
        print(f"miniprisma: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ParseError as e:
        _emit_json({"ok": False, "errors": e.errors})
        for msg in e.errors:
            print(f"{args.file}:{msg}", file=sys.stderr)
        return EXIT_FAIL
    except (passes.CompileError, emit.EmitError) as e:
        print(f"miniprisma: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
