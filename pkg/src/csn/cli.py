"""Command-line driver: check, run, trace, explore and props."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from csn.gen import GenConfig, subject_reduction_suite
from csn.load import CORPUS, network_from_unit, unit_from_network
from csn.parser import ParseError, parse_file, pretty_print
from csn.semantics import (
    PREDICATES, AllHold, StateBudgetExceeded, explore, make_policy, run,
)
from csn.typecheck import CSNTypeError, TypeCheckFailed

EXIT_OK = 0
EXIT_TYPE = 1
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_RUNTIME = 4
EXIT_COUNTEREXAMPLE = 5
EXIT_STATE_BUDGET = 6

EPILOG = """exit codes:
  0  success
  1  type errors
  2  parse errors
  3  input/output errors
  4  runtime error during a run
  5  counterexample found
  6  state budget exceeded

Inputs may be file paths or names of bundled examples (ping, ping-micro,
polling, deploy, ...).  CSN_SEED overrides the default random seed."""


class _Fail(Exception):
    def __init__(self, code: int):
        self.code = code


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.suffix and (CORPUS / f"{path}.csn").exists():
        return CORPUS / f"{path}.csn"
    return p


def _report_type_errors(errors: Sequence[CSNTypeError], as_json: bool):
    if as_json:
        print(json.dumps([e.to_dict() for e in errors], indent=2))
    else:
        for e in errors:
            print(f"type error: {e}", file=sys.stderr)


def _load(args, typed: bool = True):
    path = _resolve(args.input)
    try:
        unit = parse_file(path)
    except OSError as e:
        print(f"error: cannot read {path}: {e.strerror or e}", file=sys.stderr)
        raise _Fail(EXIT_IO)
    except ParseError as e:
        print(f"{path}:{e}", file=sys.stderr)
        raise _Fail(EXIT_PARSE)
    try:
        return network_from_unit(unit, typed=typed,
                                 metering=True if getattr(args, "meter", False) else None)
    except TypeCheckFailed as e:
        _report_type_errors(e.errors, getattr(args, "json", False))
        raise _Fail(EXIT_TYPE)
    except CSNTypeError as e:
        _report_type_errors([e], getattr(args, "json", False))
        raise _Fail(EXIT_TYPE)


def default_seed() -> int:
    return int(os.environ.get("CSN_SEED", "0"))


def cmd_check(args) -> int:
    net = _load(args)
    if args.json:
        print("[]")
    else:
        print(f"ok: {len(net.sensors)} sensor(s) well typed")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.max_steps < 0:
        print("error: --max-steps must be >= 0", file=sys.stderr)
        return EXIT_IO
    net = _load(args, typed=not args.untyped)
    seed = args.seed if args.seed is not None else default_seed()
    final, trace = run(net, make_policy(args.schedule, seed), args.max_steps)
    if args.trace_out:
        try:
            trace.write(args.trace_out)
        except OSError as e:
            print(f"error: cannot write {args.trace_out}: {e.strerror or e}",
                  file=sys.stderr)
            return EXIT_IO
    print(f"{trace.outcome} after {trace.steps} step(s)")
    for sid in final.logs.sensors():
        for entry in final.logs.entries(sid):
            print(f"{sid}\t{entry.step}\t{entry.builtin}\t{pretty_print(entry.value)}")
    if trace.outcome == "error":
        print(json.dumps(trace.events[-1]), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_explore(args) -> int:
    net = _load(args)
    pred = PREDICATES[args.prop](net)
    try:
        res = explore(net, args.depth, pred, args.max_states)
    except StateBudgetExceeded as e:
        print(f"state budget exceeded: {e.visited} states", file=sys.stderr)
        return EXIT_STATE_BUDGET
    if isinstance(res, AllHold):
        print(f"{args.prop} holds: {res.states} state(s) to depth {args.depth}")
        return EXIT_OK
    print(f"{args.prop} violated after {len(res.path)} step(s):")
    for c in res.path:
        print(f"  {c}")
    print(pretty_print(unit_from_network(res.network)), end="")
    return EXIT_COUNTEREXAMPLE


def cmd_props(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    cfg = GenConfig(seed=seed, max_sensors=args.max_sensors)
    start = time.perf_counter()
    report = subject_reduction_suite(cfg, args.instances, args.depth,
                                     args.max_states, jobs=args.jobs)
    print(report.summary())
    print(f"{'seconds'.ljust(19)}  {time.perf_counter() - start:.2f}")
    if report.failures:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for f in report.failures:
            path = out / f"counterexample-{f.seed}.csn"
            steps = "".join(f"// step: {c}\n" for c in f.path)
            path.write_text(steps + pretty_print(unit_from_network(f.network)),
                            encoding="utf-8")
            print(f"wrote {path}")
        return EXIT_COUNTEREXAMPLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="csn", description="Type check, run and explore sensor networks.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and type check a network")
    p.add_argument("input")
    p.add_argument("--json", action="store_true", help="machine-readable errors")
    p.set_defaults(func=cmd_check)

    def run_options(p, trace_required: bool):
        p.add_argument("input")
        if trace_required:
            p.add_argument("trace_out", help="where to write the JSON-lines trace")
        else:
            p.add_argument("--trace-out", help="write the JSON-lines trace here")
        p.add_argument("--schedule", default="deliver-all",
                       choices=("deliver-all", "round-robin", "random"))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--max-steps", type=int, default=10_000)
        p.add_argument("--meter", action="store_true",
                       help="subtract energy for every step")
        p.add_argument("--untyped", action="store_true",
                       help="run without type checking")
        p.add_argument("--json", action="store_true")
        p.set_defaults(func=cmd_run)

    run_options(sub.add_parser("run", help="run to quiescence or budget"), False)
    run_options(sub.add_parser("trace", help="run and write the trace"), True)

    p = sub.add_parser("explore", help="check a property on every reachable state")
    p.add_argument("input")
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--prop", default="well-typed", choices=sorted(PREDICATES))
    p.add_argument("--max-states", type=int, default=50_000)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("props", help="subject reduction over generated networks")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-sensors", type=int, default=3)
    p.add_argument("--max-states", type=int, default=50_000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default="counterexamples")
    p.set_defaults(func=cmd_props)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as f:
        return f.code


if __name__ == "__main__":
    sys.exit(main())
