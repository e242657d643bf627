import pytest

from awaitmc import corpus, interp, oracle
from awaitmc.explorer import ExplorationReport, explore
from awaitmc.generate import generate_program
from awaitmc.hb import BASELINE, IFAA
from awaitmc.parser import parse_program

SMALL = ["fig1", "fig2a", "fig3", "fig4", "fig5", "fig6", "cas_lock", "two_waiters", "nested_loop"]


def _programs():
    progs = [corpus.load(n) for n in SMALL]
    progs += [parse_program(generate_program(i)) for i in range(40)]
    return progs


@pytest.mark.parametrize("pol", [BASELINE, IFAA], ids=["base", "ifaa"])
def test_class_search_matches_full_partition(pol):
    for p in _programs():
        try:
            full = oracle.partition_classes(oracle.enumerate_maximal(p, unroll=1, limit=30_000), pol)
        except oracle.OracleLimitExceeded:
            continue
        fast = oracle.enumerate_classes(p, pol, unroll=1)
        assert fast.keys() == full.keys()
        assert [c.blocked for c in fast.classes] == [c.blocked for c in full.classes]


def test_enumerated_schedules_replay_exactly():
    for p in _programs()[:20]:
        for ex in oracle.enumerate_maximal(p, unroll=1, limit=30_000):
            assert interp.replay(p, ex.schedule, unroll=1).events == ex.events


def test_enumeration_is_lexicographic_and_maximal():
    execs = oracle.enumerate_maximal(corpus.load("fig4"))
    scheds = [ex.schedule for ex in execs]
    assert scheds == sorted(scheds)
    assert all(ex.is_maximal for ex in execs)


def test_ifaa_refines_partition():
    for p in _programs():
        assert len(oracle.enumerate_classes(p, IFAA, unroll=1)) <= len(oracle.enumerate_classes(p, BASELINE, unroll=1))


def test_fig5_class_count():
    part = oracle.enumerate_classes(corpus.load("fig5"), IFAA)
    assert (part.complete, part.blocked) == (1, 1)
    assert len(oracle.enumerate_classes(corpus.load("fig5"), BASELINE)) == 8


def test_canonical_form_ignores_commuting_order():
    p = corpus.load("fig3")
    execs = oracle.enumerate_maximal(p)
    keys = {oracle.canonical_form(ex.events) for ex in execs}
    assert len(keys) == 4 < len(execs)


def test_limit_raises():
    with pytest.raises(oracle.OracleLimitExceeded):
        oracle.enumerate_maximal(corpus.load("two_waiters"), unroll=2, limit=5)
    with pytest.raises(oracle.OracleLimitExceeded):
        oracle.enumerate_classes(corpus.load("two_waiters"), unroll=2, limit=5)


def _report(execs):
    return ExplorationReport(executions=list(execs))


def test_audit_flags_each_kind_of_mismatch():
    p = corpus.load("fig3")
    part = oracle.enumerate_classes(p)
    execs = oracle.enumerate_maximal(p)
    by_key = {}
    for ex in execs:
        by_key.setdefault(oracle.canonical_form(ex.events), []).append(ex)
    reps = [v[0] for v in by_key.values()]

    assert oracle.audit(p, BASELINE, _report(reps), partition=part).ok
    missed = oracle.audit(p, BASELINE, _report(reps[1:]), partition=part)
    assert not missed.correct and missed.mismatches[0][0] == "missed"
    dup_class = next(v for v in by_key.values() if len(v) > 1)
    dup = oracle.audit(p, BASELINE, _report(reps + dup_class[1:2]), partition=part)
    assert dup.correct and not dup.optimal

    other = oracle.enumerate_maximal(corpus.load("fig4"))[0]
    unknown = oracle.audit(p, BASELINE, _report(reps + [other]), partition=part)
    assert not unknown.correct and unknown.mismatches[0][0] == "unknown-class"


def test_audit_requires_traces():
    p = corpus.load("fig4")
    with pytest.raises(ValueError):
        oracle.audit(p, BASELINE, explore(p))


def test_full_and_class_methods_agree():
    p = corpus.load("two_waiters")
    r = explore(p, IFAA, unroll=1, keep_traces=True)
    a = oracle.audit(p, IFAA, r, unroll=1)
    b = oracle.audit(p, IFAA, r, unroll=1, method="full")
    assert (a.ok, a.classes) == (b.ok, b.classes)
