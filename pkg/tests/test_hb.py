import random

import pytest

from awaitmc import corpus, hb, interp, oracle
from awaitmc.generate import GenLimits, generate_program
from awaitmc.hb import BASELINE, IFAA, HbRelation, compute_hb, equivalent, race_positions
from awaitmc.parser import parse_program

POLICIES = [BASELINE, IFAA]
SMALL = GenLimits(threads=3, ops_per_thread=3, variables=2)


def _random_execution(p, rng, unroll=1):
    s = interp.initial_state(p, unroll=unroll)
    evs = []
    while interp.enabled(s):
        s, e = interp.step(s, rng.choice(interp.enabled(s)))
        evs.append(e)
    return s, evs


def _programs(n, limits=SMALL):
    return [parse_program(generate_program(i, limits)) for i in range(n)]


@pytest.mark.parametrize("pol", POLICIES)
def test_hb_is_a_strict_partial_order(pol):
    rng = random.Random(7)
    for p in _programs(60):
        _, evs = _random_execution(p, rng)
        rel = HbRelation(evs, pol)
        n = len(evs)
        for i in range(n):
            assert not rel.hb(i, i)
            for j in range(n):
                if rel.hb(i, j):
                    assert not rel.hb(j, i)
                    for k in range(n):
                        if rel.hb(j, k):
                            assert rel.hb(i, k)


@pytest.mark.parametrize("pol", POLICIES)
def test_vector_clocks_match_bitset_closure(pol):
    rng = random.Random(11)
    for p in _programs(80):
        _, evs = _random_execution(p, rng)
        rel = HbRelation(evs, pol)
        preds = oracle.closure_preds(evs, pol)
        for j in range(len(evs)):
            for i in range(j):
                assert rel.hb(i, j) == bool(preds[j] >> i & 1)


def test_push_pop_restores_clocks():
    rng = random.Random(3)
    for p in _programs(40):
        _, evs = _random_execution(p, rng)
        rel = HbRelation(evs[:2], BASELINE)
        snapshot = list(rel.clocks)
        for e in evs[2:]:
            rel.push(e)
        for _ in evs[2:]:
            rel.pop()
        assert rel.clocks == snapshot
        if len(evs) > 2:
            copy = rel.extend(evs[2])
            assert len(copy) == 3 and len(rel) == 2


@pytest.mark.parametrize("pol", POLICIES)
def test_races_are_adjacent_conflicting_pairs(pol):
    rng = random.Random(5)
    for p in _programs(120):
        _, evs = _random_execution(p, rng)
        rel = HbRelation(evs, pol)
        brute = sorted(
            (i, j) for j in range(len(evs)) for i in range(j)
            if not evs[j].may_block and evs[i].thread != evs[j].thread
            and hb.conflicts(evs[i], evs[j], pol) and rel.adjacent(i, j))
        assert race_positions(rel) == brute


@pytest.mark.parametrize("name", ["fig1", "fig3", "fig4", "fig5", "two_waiters", "cas_lock"])
@pytest.mark.parametrize("pol", POLICIES)
def test_equivalence_agrees_with_canonical_form(name, pol):
    execs = oracle.enumerate_maximal(corpus.load(name), unroll=1)[:60]
    for a in execs:
        for b in execs:
            same = oracle.canonical_form(a.events, pol) == oracle.canonical_form(b.events, pol)
            assert equivalent(a, b, pol) == same


def test_first_thread_is_weak_initial():
    rng = random.Random(9)
    for p in _programs(60):
        s0 = interp.initial_state(p, unroll=1)
        _, evs = _random_execution(p, rng)
        w = [e.thread for e in evs]
        if w:
            assert w[0] in hb.weak_initials(s0, w)


def _sequences(s, depth):
    """All thread sequences of length <= depth runnable from ``s``."""
    out = [()]
    frontier = [(s, ())]
    for _ in range(depth):
        nxt = []
        for st, seq in frontier:
            for t in interp.enabled(st):
                item = (interp.step(st, t)[0], seq + (t,))
                nxt.append(item)
                out.append(item[1])
        frontier = nxt
    return out


@pytest.mark.parametrize("pol", POLICIES)
def test_weak_initials_are_inherited_by_prefixes(pol):
    # p in WI(w) and u a happens-before prefix of w  =>  p in WI(u)
    rng = random.Random(13)
    checked = 0
    for p in _programs(40, GenLimits(threads=3, ops_per_thread=2, variables=2)):
        s_full, evs = _random_execution(p, rng)
        cut = rng.randint(0, len(evs))
        s = interp.run_from(interp.initial_state(p, unroll=1), [e.thread for e in evs[:cut]])[0]
        w = [e.thread for e in evs[cut:]]
        wi_w = hb.weak_initials(s, w, pol)
        for u in _sequences(s, min(3, len(w))):
            if not u or not hb.hb_prefix(list(u), w, s, pol):
                continue
            checked += 1
            assert wi_w <= hb.weak_initials(s, list(u), pol)
    assert checked > 50


def test_ifaa_makes_dead_faas_independent():
    p = corpus.load("fig5")
    execs = oracle.enumerate_maximal(p)
    assert len(oracle.partition_classes(execs, IFAA)) <= len(oracle.partition_classes(execs, BASELINE))
    faas = [e for ex in execs for e in ex.events if e.kind == "faa" and e.faa_indep]
    a = next(e for e in faas if e.thread == 0)
    b = next(e for e in faas if e.thread == 1)
    assert hb.conflicts(a, b, BASELINE) and not hb.conflicts(a, b, IFAA)


def test_notafter_and_pre():
    ex = interp.extend_maximal(corpus.load("fig4"))
    e = ex.events[0]
    later = hb.notafter(e, ex)
    rel = compute_hb(ex)
    assert all(not rel.hb(0, ex.events.index(x)) for x in later)
    assert len(hb.pre(ex, ex.events[2])) == 2
