import pytest

from awaitmc import corpus, explorer, interp, oracle
from awaitmc.explorer import ExploreOptions, explore
from awaitmc.generate import generate_program
from awaitmc.hb import BASELINE, IFAA
from awaitmc.parser import parse_program

# (complete, blocked) at unroll 2; each value was checked against the oracle
# by test_corpus_audit before being written here
COUNTS = {
    "fig1": ((9, 4), (9, 4)),
    "fig2a": ((3, 1), (3, 1)),
    "fig2b": ((1, 1), (1, 1)),
    "fig2c": ((1, 0), (1, 0)),
    "fig3": ((4, 0), (4, 0)),
    "fig3_assert": ((4, 0), (4, 0)),
    "fig4": ((2, 0), (2, 0)),
    "fig5": ((2, 6), (1, 1)),
    "fig6": ((6, 4), (6, 4)),
    "counter_loop": ((3, 0), (3, 0)),
    "nested_loop": ((7, 4), (7, 4)),
    "cas_lock": ((6, 2), (6, 2)),
    "xchg_lock": ((6, 2), (6, 2)),
    "two_waiters": ((18, 7), (9, 7)),
    "sortnet2": ((18, 7), (9, 7)),
}


@pytest.mark.parametrize("name", sorted(COUNTS))
@pytest.mark.parametrize("pol", [BASELINE, IFAA], ids=["base", "ifaa"])
def test_corpus_audit(name, pol):
    p = corpus.load(name)
    r = explore(p, pol, unroll=2, keep_traces=True)
    v = oracle.audit(p, pol, r, unroll=2)
    assert v.ok, v.mismatches
    assert (r.complete_count, r.blocked_count) == COUNTS[name][pol.ifaa_enabled]
    assert r.stats.sleep_blocked == 0


@pytest.mark.parametrize("seed", range(60))
def test_random_audit_with_full_enumeration(seed):
    # the slower oracle that enumerates every interleaving
    p = parse_program(generate_program(seed))
    for pol in (BASELINE, IFAA):
        r = explore(p, pol, unroll=1, keep_traces=True)
        try:
            v = oracle.audit(p, pol, r, unroll=1, method="full", limit=20_000)
        except oracle.OracleLimitExceeded:
            pytest.skip("too many interleavings for full enumeration")
        assert v.ok, v.mismatches


def _class_keys(report, pol):
    return sorted(oracle.canonical_form(ex.events, pol) for ex in report.executions)


@pytest.mark.parametrize("seed", range(40))
def test_wi_cache_does_not_change_results(seed):
    p = parse_program(generate_program(seed))
    on = explore(p, IFAA, unroll=1, keep_traces=True, wi_cache=True)
    off = explore(p, IFAA, unroll=1, keep_traces=True, wi_cache=False)
    assert [ex.schedule for ex in on.executions] == [ex.schedule for ex in off.executions]


@pytest.mark.parametrize("name", ["fig1", "two_waiters", "cas_lock", "nested_loop"])
def test_can_stop_shortcut_preserves_classes(name):
    p = corpus.load(name)
    a = explore(p, BASELINE, unroll=2, keep_traces=True, can_stop=True)
    b = explore(p, BASELINE, unroll=2, keep_traces=True, can_stop=False)
    assert _class_keys(a, BASELINE) == _class_keys(b, BASELINE)


@pytest.mark.parametrize("name", ["fig3", "fig4", "cas_lock"])
def test_removing_sleep_sets_is_caught_by_audit(name):
    # mutation check: the audit must notice redundant exploration
    p = corpus.load(name)
    r = explore(p, BASELINE, unroll=1, keep_traces=True, use_sleep_sets=False, max_executions=200)
    v = oracle.audit(p, BASELINE, r, unroll=1)
    assert not v.optimal
    assert any(m[0] == "duplicate" for m in v.mismatches)


class _CheckingExplorer(explorer._Explorer):
    """Asserts the wakeup-tree insertion invariant and tree hygiene."""

    def wut_insert(self, i, v, v_ev):
        frame = self.frames[i]
        for q in frame.sleep:
            assert not explorer._wi_member(frame.state, q, v_ev, self.pol, None)
        super().wut_insert(i, v, v_ev)

    def explore(self):
        original = self.frames

        class Watch(list):
            def pop(inner, *a):
                f = list.pop(inner, *a)
                for q in f.sleep:
                    assert f.wut.child(q) is None
                return f

        self.frames = Watch(original)
        super().explore()


@pytest.mark.parametrize("name", ["fig1", "fig5", "two_waiters", "xchg_lock", "sortnet2"])
@pytest.mark.parametrize("pol", [BASELINE, IFAA], ids=["base", "ifaa"])
def test_insertion_invariant_and_tree_hygiene(name, pol):
    ex = _CheckingExplorer(corpus.load(name), pol, ExploreOptions(unroll=2))
    r = ex.run()
    assert r.total == sum(COUNTS[name][pol.ifaa_enabled])


def test_assertion_failure_reported():
    p = parse_program("""\
global x = 0;
thread a {
  L0:
    x := 1;
    exit;
}
thread b {
  L0:
    r := x;
    assert(r == 0);
    exit;
}
""")
    r = explore(p)
    assert r.total == 2
    assert len(r.assertion_failure_executions) == 1
    ex = interp.replay(p, r.assertion_failure_executions[0])
    assert ex.assertion_failures


def test_budget_makes_report_incomplete():
    r = explore(corpus.load("fig2a"), max_steps=20)
    assert r.incomplete
    assert "budget" in r.incomplete_reason


def test_execution_limit():
    r = explore(corpus.load("two_waiters"), unroll=2, max_executions=3)
    assert r.incomplete and r.total == 3


def test_options_and_keywords_are_exclusive():
    with pytest.raises(TypeError):
        explore(corpus.load("fig4"), BASELINE, ExploreOptions(), unroll=1)


def test_report_dict_without_time_is_stable():
    a = explore(corpus.load("fig1"), unroll=2).as_dict(include_time=False)
    b = explore(corpus.load("fig1"), unroll=2).as_dict(include_time=False)
    assert a == b and "time" not in a


def test_wakeup_tree_sequences():
    root = explorer.WutNode()
    child = explorer.WutNode()
    root.children.append([1, child])
    child.children.append([0, explorer.WutNode()])
    root.children.append([2, explorer.WutNode()])
    assert root.sequences() == [(1, 0), (2,)]
    assert root.child(2) is not None and root.child(3) is None


def test_pending_sequences_recorded_when_stopped_early():
    r = explore(corpus.load("two_waiters"), unroll=2, max_executions=10, keep_traces=True)
    assert r.pending
    for prefix, seq in r.pending:
        # each pending sequence is runnable from its prefix
        interp.replay(corpus.load("two_waiters"), prefix + seq[:1], unroll=2)
    assert explore(corpus.load("two_waiters"), unroll=2).pending == []
