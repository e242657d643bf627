"""Command-line front end: parse, optionally transform, explore or audit.

Exit codes: 0 success, 1 assertion failure found (or audit mismatch),
2 usage or parse error, 3 budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Optional

from . import corpus, oracle
from .explorer import ExploreOptions, explore
from .generate import GenLimits, generate_program
from .hb import BASELINE, IFAA
from .interp import DEFAULT_MAX_STEPS
from .ir import Assume
from .parser import ProgramError, format_program, parse_program
from .plp import analyse_thread, transform
from .rewrite import rewrite_assume_to_await

EXIT_OK, EXIT_ASSERT, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3

MODES = ("explore", "oracle-audit", "transform-only", "fpc-report")
_ALIASES = {"audit": "oracle-audit", "transform": "transform-only", "fpc": "fpc-report"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    input: str
    mode: str = "explore"
    plp: bool = False
    await_rewrite: bool = False
    ifaa: bool = False
    unroll: Optional[int] = None
    max_steps: int = DEFAULT_MAX_STEPS
    keep_traces: bool = False
    dot: Optional[str] = None
    json: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.unroll is not None and self.unroll < 1:
            raise UsageError("--unroll must be at least 1")
        if self.max_steps < 1:
            raise UsageError("--max-steps must be positive")


def read_source(where: str) -> tuple:
    """``(text, display name)`` for a path, ``-`` (stdin) or ``corpus:NAME``."""
    if where == "-":
        return sys.stdin.read(), "<stdin>"
    if where.startswith("corpus:"):
        name = where[len("corpus:"):]
        try:
            return corpus.source(name), where
        except (KeyError, ValueError) as exc:
            raise UsageError(str(exc)) from None
    try:
        with open(where, encoding="utf-8") as fh:
            return fh.read(), where
    except OSError as exc:
        raise UsageError(f"cannot read {where}: {exc.strerror}") from None


def _has_assumes(p) -> bool:
    return any(isinstance(s, Assume) for t in p.threads for b in t.blocks for s in b.stmts)


def prepare(cfg: RunConfig, p):
    """Apply the requested transformations; returns ``(program, reports)``."""
    if cfg.await_rewrite and not cfg.plp and not _has_assumes(p):
        raise UsageError("--await-rewrite needs --plp or an input that contains assumes")
    reports = None
    if cfg.plp:
        p, reports = transform(p, await_rewrite=cfg.await_rewrite)
    elif cfg.await_rewrite:
        from .ir import Program

        p = Program(p.globals, tuple(rewrite_assume_to_await(t) for t in p.threads))
    return p, reports


def _witness(p, schedule) -> list:
    from .interp import replay

    ex = replay(p, schedule)
    names = [t.name for t in p.threads]
    lines = ["assertion failure witness:"]
    for e in ex.events:
        what = e.kind + (f" {e.var}" if e.var else "")
        lines.append(f"  {names[e.thread]}#{e.index} {what}")
    return lines


def _dot(p, report) -> str:
    """Explored schedules plus unexplored wakeup sequences, in Graphviz syntax."""
    names = [t.name for t in p.threads]
    nodes = {(): 0}
    edges = []
    leaves = {}
    for ex in report.executions or ():
        path = ()
        for e in ex.events:
            nxt = path + (e.thread,)
            if nxt not in nodes:
                nodes[nxt] = len(nodes)
                label = f"{names[e.thread]}: {e.kind}" + (f" {e.var}" if e.var else "")
                edges.append((nodes[path], nodes[nxt], label))
            path = nxt
        leaves[nodes[path]] = "blocked" if ex.is_blocked else "complete"
    pending_edges = []
    for prefix, seq in report.pending:
        path = ()
        for t in prefix:
            nxt = path + (t,)
            if nxt not in nodes:
                nodes[nxt] = len(nodes)
                pending_edges.append((nodes[path], nodes[nxt], names[t]))
            path = nxt
        for t in seq:
            nxt = path + (t,)
            if nxt not in nodes:
                nodes[nxt] = len(nodes)
                pending_edges.append((nodes[path], nodes[nxt], names[t]))
            path = nxt
    out = ["digraph exploration {", "  node [shape=point];"]
    for n, kind in sorted(leaves.items()):
        shape = "box" if kind == "complete" else "octagon"
        out.append(f'  n{n} [shape={shape}, label="{kind}"];')
    for a, b, label in edges:
        out.append(f'  n{a} -> n{b} [label="{label}"];')
    for a, b, label in pending_edges:
        out.append(f'  n{a} -> n{b} [label="{label}", style=dashed];')
    out.append("}")
    return "\n".join(out) + "\n"


def run(cfg: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        cfg.validate()
        text, name = read_source(cfg.input)
        p0 = parse_program(text, file=name)
        p, reports = prepare(cfg, p0)
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except ProgramError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE

    if cfg.mode == "transform-only":
        print(format_program(p), end="", file=out)
        if reports:
            print("", file=out)
            for t, rep in zip(p0.threads, reports):
                for line in rep.render(t).splitlines():
                    print(f"# {line}", file=out)
        return EXIT_OK

    if cfg.mode == "fpc-report":
        reps = reports if reports is not None else [analyse_thread(t) for t in p0.threads]
        if cfg.json:
            data = [{"thread": r.thread,
                     "loops": [{"header": lr.header, "pc": lr.pc.render(),
                                "table": {f"{b}:{i}": f.render() for (b, i), f in lr.table.items()},
                                "impure_backedges": sorted(list(e) for e in lr.impure_backedges)}
                               for lr in r.loops]}
                    for r in reps]
            print(json.dumps(data, indent=2, ensure_ascii=False), file=out)
        else:
            for t, rep in zip(p0.threads, reps):
                print(rep.render(t), file=out)
        return EXIT_OK

    pol = IFAA if cfg.ifaa else BASELINE
    keep = cfg.keep_traces or cfg.dot is not None or cfg.mode == "oracle-audit"
    opts = ExploreOptions(unroll=cfg.unroll, max_steps=cfg.max_steps, keep_traces=keep)
    report = explore(p, pol, opts)
    verdict = None
    if cfg.mode == "oracle-audit" and not report.incomplete:
        try:
            verdict = oracle.audit(p, pol, report, unroll=cfg.unroll)
        except oracle.OracleLimitExceeded as exc:
            print(f"error: {exc}", file=err)
            return EXIT_BUDGET

    if cfg.json:
        data = report.as_dict()
        if cfg.keep_traces:
            data["executions"] = [list(ex.schedule) for ex in report.executions]
        if verdict is not None:
            data["audit"] = {"correct": verdict.correct, "optimal": verdict.optimal,
                             "classes": verdict.classes, "explored": verdict.explored,
                             "mismatches": [list(map(_jsonable, m)) for m in verdict.mismatches]}
        print(json.dumps(data, indent=2), file=out)
    else:
        print(report.summary(), file=out)
        if cfg.keep_traces:
            for ex in report.executions:
                tag = "blocked" if ex.is_blocked else "complete"
                print(f"  {tag}: {' '.join(p.threads[t].name for t in ex.schedule)}", file=out)
        if verdict is not None:
            print(f"audit: correct={verdict.correct} optimal={verdict.optimal} "
                  f"classes={verdict.classes} explored={verdict.explored}", file=out)
            for m in verdict.mismatches:
                print(f"  mismatch: {m}", file=out)
        if report.assertion_failure_executions:
            for line in _witness(p, report.assertion_failure_executions[0]):
                print(line, file=out)
    if cfg.dot is not None:
        with open(cfg.dot, "w", encoding="utf-8") as fh:
            fh.write(_dot(p, report))

    if report.incomplete:
        print(f"error: exploration incomplete: {report.incomplete_reason}", file=err)
        return EXIT_BUDGET
    if report.assertion_failure_executions:
        return EXIT_ASSERT
    if verdict is not None and not verdict.ok:
        return EXIT_ASSERT
    return EXIT_OK


def _jsonable(x):
    return list(x) if isinstance(x, tuple) else x


def _add_run_flags(sp) -> None:
    sp.add_argument("input", help="program file, '-' for stdin, or corpus:NAME")
    sp.add_argument("--plp", action="store_true", help="apply partial loop purity elimination")
    sp.add_argument("--await-rewrite", action="store_true", help="turn load+assume pairs into awaits")
    sp.add_argument("--ifaa", action="store_true", help="treat unused-result fetch-and-adds as independent")
    sp.add_argument("--unroll", type=int, metavar="K", help="block a thread after K traversals of a backedge")
    sp.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS, metavar="N")
    sp.add_argument("--keep-traces", action="store_true", help="list every explored schedule")
    sp.add_argument("--dot", metavar="PATH", help="write the explored execution tree as Graphviz")
    sp.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="awaitmc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for mode, alias, help_ in (
        ("explore", [], "explore all executions up to equivalence"),
        ("oracle-audit", ["audit"], "explore and compare against brute-force enumeration"),
        ("transform-only", ["transform"], "print the transformed program"),
        ("fpc-report", ["fpc"], "print forward purity conditions per loop"),
    ):
        sp = sub.add_parser(mode, aliases=alias, help=help_)
        _add_run_flags(sp)
    g = sub.add_parser("generate", help="print a random program")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--threads", type=int, default=3)
    g.add_argument("--ops", type=int, default=5, help="event budget per thread")
    g.add_argument("--vars", type=int, default=2)
    c = sub.add_parser("corpus", help="list built-in programs or print one")
    c.add_argument("name", nargs="?")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "generate":
        try:
            text = generate_program(args.seed, GenLimits(threads=args.threads, ops_per_thread=args.ops,
                                                         variables=args.vars))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(text, end="")
        return EXIT_OK
    if args.command == "corpus":
        if args.name is None:
            for n in corpus.names():
                print(n)
            print("sortnet<k>")
            return EXIT_OK
        try:
            print(corpus.source(args.name), end="")
        except (KeyError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK
    mode = _ALIASES.get(args.command, args.command)
    cfg = RunConfig(input=args.input, mode=mode, plp=args.plp, await_rewrite=args.await_rewrite,
                    ifaa=args.ifaa, unroll=args.unroll, max_steps=args.max_steps,
                    keep_traces=args.keep_traces, dot=args.dot, json=args.json)
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
