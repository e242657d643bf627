"""Acceptance criteria 1-7.

Each criterion is a function returning ``(passed, report, detail)``.  The
report is a plain data structure without timings so criterion 7 can compare
two runs for equality.  Every test records a PASS/FAIL line that the
conftest prints at the end of the session; running this file directly
prints the same lines.
"""

import time

import pytest

from awaitmc import corpus, interp, oracle
from awaitmc.explorer import explore
from awaitmc.generate import generate_program
from awaitmc.hb import BASELINE, IFAA
from awaitmc.parser import format_program, format_stmt, parse_program
from awaitmc.plp import analyse_thread, transform

AUDIT_SEEDS = 500
AUDIT_UNROLL = 1
THM1_UNROLL = 2


def _counts(p, pol=BASELINE, **kw):
    r = explore(p, pol, **kw)
    assert not r.incomplete, r.incomplete_reason
    return r.complete_count, r.blocked_count


def criterion_1():
    # values quoted in the source text: Fig 3 "four executions explored",
    # Fig 4 "two traces", Fig 2b two traces one blocked, Fig 2c a single trace
    expected = {"fig3": (4, 0), "fig4": (2, None), "fig2b": (1, 1), "fig2c": (1, 0)}
    report = {}
    ok = True
    slow = []
    for name, (c, b) in expected.items():
        t0 = time.perf_counter()
        got = _counts(corpus.load(name))
        if time.perf_counter() - t0 >= 1.0:
            slow.append(name)
        report[name] = got
        if b is None:
            ok &= sum(got) == c
        else:
            ok &= got == (c, b)
    ok &= not slow
    return ok, report, f"{report} slow={slow}"


def criterion_2():
    p = corpus.load("fig5")
    t0 = time.perf_counter()
    with_ifaa = _counts(p, IFAA)
    without = _counts(p, BASELINE)
    elapsed = time.perf_counter() - t0
    classes = oracle.enumerate_classes(p, IFAA)
    report = {"ifaa": with_ifaa, "baseline": without, "oracle_classes": len(classes),
              "oracle_split": (classes.complete, classes.blocked)}
    ok = (sum(with_ifaa) == len(classes) == 2 and classes.complete == 1 and classes.blocked == 1
          and sum(without) > sum(with_ifaa) and elapsed < 1.0)
    return ok, report, f"{report} time={elapsed:.3f}s"


def criterion_3():
    report = {}
    ok = True
    t0 = time.perf_counter()
    for k in (1, 2, 3):
        p = corpus.load(f"sortnet{k}")
        full = transform(p, await_rewrite=True)[0]
        assume_only = transform(p)[0]
        report[k] = {
            "plp_await_ifaa": _counts(full, IFAA),
            "plp_assume": _counts(assume_only, BASELINE),
            "plp_assume_ifaa": _counts(assume_only, IFAA),
        }
        ok &= report[k]["plp_await_ifaa"] == (1, 0)
    elapsed = time.perf_counter() - t0
    for key in ("plp_assume", "plp_assume_ifaa"):
        totals = [sum(report[k][key]) for k in (1, 2, 3)]
        ok &= all(b >= 2 * a for a, b in zip(totals, totals[1:]))
    ok &= elapsed < 10.0
    return ok, report, f"{report} time={elapsed:.2f}s"


def _audit_programs():
    progs = [(n, corpus.load(n)) for n in corpus.names()]
    progs += [(f"sortnet{k}", corpus.load(f"sortnet{k}")) for k in (1, 2, 3)]
    progs += [(f"seed{i}", parse_program(generate_program(i))) for i in range(AUDIT_SEEDS)]
    return progs


def criterion_4():
    t0 = time.perf_counter()
    audits = 0
    mismatched = []
    seen = set()
    for name, p in _audit_programs():
        for plp in (False, True):
            q = transform(p)[0] if plp else p
            text = format_program(q)
            for pol in (BASELINE, IFAA):
                # assume-only PLP leaves loop-free programs unchanged
                if (text, pol) in seen:
                    continue
                seen.add((text, pol))
                r = explore(q, pol, unroll=AUDIT_UNROLL, keep_traces=True)
                v = oracle.audit(q, pol, r, unroll=AUDIT_UNROLL)
                audits += 1
                if not v.ok:
                    mismatched.append((name, plp, pol.ifaa_enabled, v.mismatches[:2]))
    elapsed = time.perf_counter() - t0
    report = {"audits": audits, "mismatched": mismatched}
    ok = not mismatched and elapsed < 300
    return ok, report, f"audits={audits} mismatches={len(mismatched)} time={elapsed:.1f}s"


def _local_states(p, ignore=None):
    m = interp.Machine(p, unroll=THM1_UNROLL, track_purity=True, purity_ignore=ignore)
    part = oracle.enumerate_classes(m, BASELINE)
    states = set()
    pure = 0
    for c in part.classes:
        s = c.end_state
        pure += sum(ts.pure for ts in s.threads)
        states |= interp.local_states(s)
    return states, pure


def _project(states, regs):
    return {(n, tuple((k, v) for k, v in r if k in regs[n])) for n, r in states}


def criterion_5():
    report = {}
    ok = True
    for name in corpus.LOOP_PROGRAMS:
        p = corpus.load(name)
        before, _ = _local_states(p)
        for aw in (False, True):
            q = transform(p, await_rewrite=aw)[0]
            # registers introduced by the transformation are not comparable,
            # and the detector judges purity on the original registers only
            added = {u.name: set(u.registers) - set(t.registers) for t, u in zip(p.threads, q.threads)}
            after, pure = _local_states(q, added)
            common = {t.name: set(t.registers) & set(u.registers) for t, u in zip(p.threads, q.threads)}
            same = _project(before, common) == _project(after, common)
            report[(name, aw)] = (pure, same, len(after))
            ok &= pure == 0 and same
    bad = {k: v for k, v in report.items() if not (v[0] == 0 and v[1])}
    return ok, report, f"programs={len(corpus.LOOP_PROGRAMS)} failures={bad}"


def criterion_6():
    p = corpus.load("fig6")
    th = p.threads[0]
    rep = analyse_thread(th)
    loop = rep.loops[0]
    table = {f"{b}:{i}": f.render() for (b, i), f in loop.table.items()}
    q = transform(p)[0]
    stmts = [format_stmt(s) for s in q.threads[0].block_map()["L1"].stmts]
    report = {"pc": loop.pc.render(), "table": table, "L1": stmts}
    ok = (loop.pc.render() == "[a > 4]"
          and table["L1:0"] == "[a > 4]"
          and table["L2:0"] == "[false]"
          and table["L3:0"] == "[a ≥ 4]"
          and stmts[:3] == ["a := x;", "assume(a <= 4);", "b := y;"])
    return ok, report, f"pc={report['pc']} L1={stmts}"


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6}
_first_reports: dict = {}


def _run(n, lines):
    passed, report, detail = CRITERIA[n]()
    _first_reports[n] = report
    lines[n] = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(lines[n])
    return passed


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, acceptance_lines):
    assert _run(n, acceptance_lines), acceptance_lines[n]


def test_criterion_7_determinism(acceptance_lines):
    diffs = []
    for n, fn in CRITERIA.items():
        first = _first_reports.get(n)
        if first is None:
            first = fn()[1]
        if fn()[1] != first:
            diffs.append(n)
    passed = not diffs
    acceptance_lines[7] = f"criterion 7: {'PASS' if passed else 'FAIL'}  differing criteria={diffs}"
    print(acceptance_lines[7])
    assert passed


if __name__ == "__main__":
    lines: dict = {}
    for n in sorted(CRITERIA):
        _run(n, lines)
    test_criterion_7_determinism(lines)
