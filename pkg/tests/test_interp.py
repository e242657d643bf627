import itertools

import pytest

from awaitmc import corpus, interp
from awaitmc.explorer import explore
from awaitmc.interp import BudgetExceeded, NotEnabledError, Machine, replay
from awaitmc.parser import parse_program


def _all_schedules(p, **opts):
    s0 = interp.initial_state(p, **opts)
    stack = [(s0, ())]
    while stack:
        s, sched = stack.pop()
        en = interp.enabled(s)
        if not en:
            yield sched, s
        for t in en:
            stack.append((interp.step(s, t)[0], sched + (t,)))


@pytest.mark.parametrize("name", ["fig1", "fig2b", "fig3_assert", "fig5", "cas_lock", "nested_loop"])
def test_replay_reproduces_explored_executions(name):
    p = corpus.load(name)
    r = explore(p, unroll=2, keep_traces=True)
    for ex in r.executions:
        again = replay(p, ex.schedule, unroll=2)
        assert again.events == ex.events
        assert again.end_state.memory == ex.end_state.memory


@pytest.mark.parametrize("name", ["fig2b", "fig3", "fig4", "fig6", "two_waiters"])
def test_enabled_excludes_blocked_and_exited(name):
    for _, s in itertools.islice(_all_schedules(corpus.load(name), unroll=2), 500):
        for t in range(len(s.threads)):
            if interp.thread_status(s, t) in (interp.ASSUME_BLOCKED, interp.EXITED):
                assert t not in interp.enabled(s)


def test_await_reenabled_by_write():
    p = corpus.load("fig2c")  # p: await(x == 1); q: y := 42; x := 1
    s = interp.initial_state(p)
    assert interp.thread_status(s, 0) == interp.AWAIT_BLOCKED
    assert interp.enabled(s) == (1,)
    s, _ = interp.step(s, 1)
    assert 0 not in interp.enabled(s)
    s, _ = interp.step(s, 1)
    assert 0 in interp.enabled(s)


def test_assume_blocks_permanently():
    p = corpus.load("fig2b")
    ex = replay(p, [0, 0])  # load x = 0, then the assume fails
    assert ex.events[-1].kind == "assume" and ex.events[-1].ok is False
    assert interp.thread_status(ex.end_state, 0) == interp.ASSUME_BLOCKED
    with pytest.raises(NotEnabledError):
        replay(p, [0, 0, 0])


def test_phi_takes_value_of_taken_edge():
    p = parse_program("""\
global x = 0;
thread t {
  L0:
    a := x;
    br a == 0 L1 L2;
  L1:
    b := 10;
    goto L3;
  L2:
    c := 20;
    goto L3;
  L3:
    d := phi(L1: b, L2: c);
    exit;
}
thread u {
  L0:
    x := 1;
    exit;
}
""")
    first = interp.extend_maximal(p, replay(p, [0]))
    assert first.end_state.threads[0].regs["d"] == 10
    second = interp.extend_maximal(p, replay(p, [1, 0]))
    assert second.end_state.threads[0].regs["d"] == 20


def test_fig6_loop_register_follows_last_load():
    p = corpus.load("fig6")
    # p loads x=4 (loops), q writes 5 then 0, p loads 0 and exits
    ex = interp.extend_maximal(p, replay(p, [0, 0, 1, 1]), unroll=5)
    assert ex.end_state.threads[0].regs["a"] == 0
    assert ex.end_state.threads[0].status == interp.EXITED


def test_cmpxchg_reports_success_as_one():
    p = parse_program("global l = 0;\nthread t {\n  L0:\n    a := cmpxchg(l, 0, 7);\n"
                      "    b := cmpxchg(l, 0, 9);\n    exit;\n}\n")
    ex = replay(p, [0, 0])
    assert ex.end_state.threads[0].regs == {"a": 1, "b": 0}
    assert ex.end_state.mem() == {"l": 7}


def test_unroll_bound_blocks_thread():
    p = corpus.load("counter_loop")
    m = Machine(p, unroll=1)
    ex = interp.extend_maximal(m)
    assert ex.is_maximal


def test_budget_exceeded_on_nontermination():
    p = parse_program("global x = 0;\nthread t {\n  L0:\n    a := x;\n    br a == 0 L0 L1;\n  L1:\n    exit;\n}\n")
    with pytest.raises(BudgetExceeded, match="budget"):
        interp.extend_maximal(p, max_steps=50)


def test_assert_failure_recorded():
    p = parse_program("global x = 0;\nthread t {\n  L0:\n    a := x;\n    assert(a == 1);\n    exit;\n}\n")
    ex = interp.extend_maximal(p)
    assert ex.assertion_failures == ((0, 2),)


def test_spawn_and_join_order_threads():
    p = corpus.load("fig3_assert")
    s = interp.initial_state(p)
    assert interp.enabled(s) == (0,)  # only main runs before spawning


def test_purity_counter_counts_pure_iterations():
    p = corpus.load("fig2a")
    m = Machine(p, unroll=3, track_purity=True)
    ex = replay(m, [0, 0, 0, 0])  # two spins reading x == 0
    assert ex.end_state.threads[0].pure >= 1


def test_local_states_lists_exited_threads():
    p = corpus.load("fig2c")
    ex = replay(p, [1, 1, 0, 0])
    names = {n for n, _ in interp.local_states(ex.end_state)}
    assert names == {"p", "q"}
