"""Command-line entry point: ``pmcu run|fuzz|demo|trace-diff``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import firmware as fwreg
from . import harness
from . import trace as tr
from .core import Outcome, TickMode
from .errors import PmcuError, UnknownFirmware

EXIT_OK, EXIT_CRASHED, EXIT_TIMEOUT, EXIT_USAGE = 0, 2, 3, 64
_EXIT = {Outcome.Halted: EXIT_OK, Outcome.Crashed: EXIT_CRASHED, Outcome.Timeout: EXIT_TIMEOUT}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_input(path: str | None) -> bytes:
    if path is None:
        return b""
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read input {path}: {exc}") from exc


def _execute(name: str, args) -> int:
    fw = fwreg.lookup(name)
    m, hal, out, hooks = harness.build_machine(
        fw, _read_input(args.input), tick_mode=TickMode(args.tick_mode), period=args.period,
        seed=args.seed, step_limit=args.step_limit)
    try:
        result = m.start(hooks)
    finally:
        hal.close()
    if args.trace:
        Path(args.trace).write_text(m.trace_text())
    sys.stdout.buffer.write(bytes(out))
    sys.stdout.flush()
    rep = harness.RunReport(result.outcome, m.events, m.vt, tr.trace_hash(m.trace_list),
                            bytes(out), result.crash)
    print(rep.summary(), file=sys.stderr)
    return _EXIT[result.outcome]


def cmd_run(args) -> int:
    return _execute(args.firmware, args)


def cmd_demo(args) -> int:
    if args.action == "list":
        for name in fwreg.names():
            fw = fwreg.lookup(name)
            tag = f" [{fw.expected.value}]" if fw.expected else ""
            print(f"{name:<24}{fw.description}{tag}")
        return EXIT_OK
    if args.action == "matrix":
        rows = harness.corpus_matrix()
        for row in rows:
            print(row.format())
        print(f"detected {sum(r.detected for r in rows)}/{len(rows)}")
        return EXIT_OK if all(r.detected for r in rows) else EXIT_CRASHED
    if not args.name:
        raise UsageError("demo run needs a demo name")
    return _execute(args.name, args)


def cmd_fuzz(args) -> int:
    fwreg.lookup(args.firmware)
    if args.source == "gen":
        source = harness.Generator(args.seed, args.min_len, args.max_len)
    elif Path(args.source).is_dir():
        source = harness.Directory(args.source)
    elif Path(args.source).is_file():
        source = harness.SingleFile(args.source)
    else:
        raise UsageError(f"--source must be 'gen', a directory or a file, got {args.source!r}")
    stats = harness.run_persistent(args.firmware, source, args.iters, seed=args.seed)
    text = stats.report()
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_trace_diff(args) -> int:
    try:
        a = tr.loads(Path(args.a).read_text())
        b = tr.loads(Path(args.b).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load trace: {exc}") from exc
    result = tr.diff(a, b)
    print(result)
    return EXIT_OK if result == "identical" else 1


def _add_exec_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", metavar="FILE", help="bytes fed to the firmware's input slot")
    p.add_argument("--tick-mode", choices=[m.value for m in TickMode], default="det")
    p.add_argument("--period", type=int, default=10,
                   help="tick period: checkpoints (det) or microseconds (vt)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-limit", type=int, default=harness.DEFAULT_STEP_LIMIT)
    p.add_argument("--trace", metavar="OUT", help="write the scheduler trace to OUT")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pmcu", description="Portable MCU simulator and persistent-mode harness.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="execute one firmware once")
    p.add_argument("firmware")
    _add_exec_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fuzz", help="persistent-mode run over many testcases")
    p.add_argument("firmware")
    p.add_argument("--source", required=True, metavar="DIR|FILE|gen")
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-len", type=int, default=0)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--report", metavar="OUT")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("demo", help="list, run, or tabulate the built-in demos")
    p.add_argument("action", choices=["list", "run", "matrix"])
    p.add_argument("name", nargs="?")
    _add_exec_options(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("trace-diff", help="report the first differing trace event")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_trace_diff)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "iters", 1) <= 0:
        parser.error("--iters must be positive")
    try:
        return args.func(args)
    except (UsageError, UnknownFirmware) as exc:
        print(f"pmcu: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PmcuError as exc:
        print(f"pmcu: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
