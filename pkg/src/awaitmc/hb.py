"""Happens-before, trace equivalence, races and weak initials.

Events are ordered by happens-before when they belong to the same thread,
when one spawns the other's thread or joins on it, or when they conflict:
same shared variable, at least one write, and (with the IFAA policy) not both
fetch-and-adds whose results are dead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import interp
from .interp import Event, ExecState, Execution


@dataclass(frozen=True)
class ConflictPolicy:
    ifaa_enabled: bool = False


BASELINE = ConflictPolicy(False)
IFAA = ConflictPolicy(True)


def conflicts(e: Event, e2: Event, pol: ConflictPolicy = BASELINE) -> bool:
    """Conflict on shared memory (spawn/join ordering is not a conflict)."""
    if e.var is None or e.var != e2.var:
        return False
    if not (e.writes or e2.writes):
        return False
    if pol.ifaa_enabled and e.faa_indep and e2.faa_indep:
        return False
    return True


def direct_dep(e: Event, e2: Event, pol: ConflictPolicy = BASELINE) -> bool:
    """Whether ``e`` (earlier) is ordered before ``e2`` by a single rule."""
    if e.thread == e2.thread:
        return True
    if e.kind == "spawn" and e.target == e2.thread:
        return True
    if e2.kind == "join" and e2.target == e.thread:
        return True
    return conflicts(e, e2, pol)


def independent(e: Event, e2: Event, pol: ConflictPolicy = BASELINE) -> bool:
    return not direct_dep(e, e2, pol)


class HbRelation:
    """Vector-clock representation of happens-before over an event sequence.

    Clocks are built incrementally.  Per shared variable three running joins
    are kept (all writes, all accesses, all accesses other than independent
    fetch-and-adds), so appending an event costs O(variables x threads)
    rather than a scan of the whole prefix.  ``push``/``pop`` mutate in place;
    ``extend`` returns a copy.
    """

    __slots__ = ("events", "clocks", "pol", "nthreads", "_var", "_last", "_undo")

    def __init__(self, events: Sequence[Event], pol: ConflictPolicy, nthreads: Optional[int] = None):
        events = tuple(events)
        if nthreads is None:
            nthreads = 1 + max((e.thread for e in events), default=-1)
            for e in events:
                if e.target is not None:
                    nthreads = max(nthreads, e.target + 1)
        self.events: list = []
        self.clocks: list = []
        self.pol = pol
        self.nthreads = nthreads
        self._var: dict = {}
        self._last: dict = {}  # thread -> clock of its latest event (or of its spawn)
        self._undo: list = []
        for e in events:
            self.push(e)

    def push(self, e: Event) -> None:
        n = max(self.nthreads, e.thread + 1, (e.target + 1) if e.target is not None else 0)
        if n != self.nthreads:
            self.nthreads = n
        c = list(self._last.get(e.thread, ()))
        c += [0] * (n - len(c))
        if e.kind == "join":
            _join_into(c, self._last.get(e.target, ()))
        undo_var = None
        if e.var is not None:
            agg = self._var.get(e.var, ((), (), ()))
            w_all, a_all, n_faa = agg
            if e.writes:
                indep = self.pol.ifaa_enabled and e.faa_indep
                _join_into(c, n_faa if indep else a_all)
            else:
                _join_into(c, w_all)
            c[e.thread] = e.index
            ct = tuple(c)
            if e.writes:
                w_all = _join(w_all, ct)
            a_all = _join(a_all, ct)
            if not (self.pol.ifaa_enabled and e.faa_indep):
                n_faa = _join(n_faa, ct)
            undo_var = (e.var, self._var.get(e.var))
            self._var[e.var] = (w_all, a_all, n_faa)
        else:
            c[e.thread] = e.index
            ct = tuple(c)
        undo_last = [(e.thread, self._last.get(e.thread))]
        self._last[e.thread] = ct
        if e.kind == "spawn" and e.target is not None:
            undo_last.append((e.target, self._last.get(e.target)))
            self._last[e.target] = _join(self._last.get(e.target, ()), ct)
        self.events.append(e)
        self.clocks.append(ct)
        self._undo.append((undo_var, undo_last))

    def pop(self) -> Event:
        undo_var, undo_last = self._undo.pop()
        for t, old in reversed(undo_last):
            if old is None:
                self._last.pop(t, None)
            else:
                self._last[t] = old
        if undo_var is not None:
            var, old = undo_var
            if old is None:
                del self._var[var]
            else:
                self._var[var] = old
        self.clocks.pop()
        return self.events.pop()

    def extend(self, e: Event) -> "HbRelation":
        new = HbRelation(self.events, self.pol, self.nthreads)
        new.push(e)
        return new

    def __len__(self) -> int:
        return len(self.events)

    def hb(self, i: int, j: int) -> bool:
        """Event at position ``i`` happens before event at position ``j``."""
        if i >= j:
            return False
        e = self.events[i]
        c = self.clocks[j]
        return e.thread < len(c) and c[e.thread] >= e.index

    def adjacent(self, i: int, j: int) -> bool:
        if not self.hb(i, j):
            return False
        return not any(self.hb(i, k) and self.hb(k, j) for k in range(i + 1, j))

    def edges(self) -> set:
        """All ordered pairs of event ids related by happens-before."""
        out = set()
        n = len(self.events)
        for j in range(n):
            for i in range(j):
                if self.hb(i, j):
                    out.add((self.events[i].id, self.events[j].id))
        return out

    def notafter(self, i: int) -> list:
        """Positions after ``i`` that do not happen after ``i``."""
        return [k for k in range(i + 1, len(self.events)) if not self.hb(i, k)]

    def predecessors_within(self, j: int, start: int) -> bool:
        """True if some event at a position in ``[start, j)`` happens before ``j``."""
        return any(self.hb(k, j) for k in range(start, j))


def _join_into(c: list, other) -> None:
    for t, v in enumerate(other):
        if t >= len(c):
            c.append(v)
        elif v > c[t]:
            c[t] = v


def _join(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    n = max(len(a), len(b))
    return tuple(max(a[t] if t < len(a) else 0, b[t] if t < len(b) else 0) for t in range(n))


def _events(E) -> tuple:
    return E.events if isinstance(E, Execution) else tuple(E)


def compute_hb(E, pol: ConflictPolicy = BASELINE) -> HbRelation:
    nthreads = None
    if isinstance(E, Execution):
        nthreads = len(E.end_state.threads)
    return HbRelation(_events(E), pol, nthreads)


def hb_signature(events: Sequence[Event], pol: ConflictPolicy) -> tuple:
    """Event id set plus hb pair set; equal signatures mean equivalent executions."""
    rel = HbRelation(events, pol)
    return frozenset(e.id for e in events), frozenset(rel.edges())


def equivalent(E1, E2, pol: ConflictPolicy = BASELINE) -> bool:
    """Same events (as thread/index pairs) and the same happens-before relation."""
    a, b = _events(E1), _events(E2)
    if len(a) != len(b):
        return False
    return hb_signature(a, pol) == hb_signature(b, pol)


# ---------------------------------------------------------------------------
# Races
# ---------------------------------------------------------------------------


def race_positions(rel: HbRelation) -> list:
    """``(i, j)`` positions of non-blocking races, lexicographically ordered."""
    evs = rel.events
    clocks = rel.clocks
    out = []
    n = len(evs)
    for j in range(n):
        ej = evs[j]
        if ej.may_block or ej.var is None:
            continue
        cj = clocks[j]
        # scan backwards; ``cover`` joins the clocks of hb-predecessors seen so
        # far, so an earlier predecessor is adjacent iff it is not covered
        cover = [0] * len(cj)
        for i in range(j - 1, -1, -1):
            ei = evs[i]
            t = ei.thread
            if t >= len(cj) or cj[t] < ei.index:
                continue  # not before j
            if cover[t] >= ei.index:
                continue  # some later predecessor already follows it
            if ei.thread != ej.thread and conflicts(ei, ej, rel.pol):
                out.append((i, j))
            ci = clocks[i]
            for u in range(len(ci)):
                if ci[u] > cover[u]:
                    cover[u] = ci[u]
    out.sort()
    return out


def non_blocking_races(E, pol: ConflictPolicy = BASELINE) -> list:
    """Pairs ``(e, e')`` racing without ``e'`` being enable-able by others."""
    rel = compute_hb(E, pol)
    return [(rel.events[i], rel.events[j]) for i, j in race_positions(rel)]


# ---------------------------------------------------------------------------
# Weak initials and sequence combinators
# ---------------------------------------------------------------------------


def weak_initials_events(s: ExecState, w_events: Sequence[Event], pol: ConflictPolicy,
                         candidates=None) -> frozenset:
    """Weak initials of ``w`` (already executed from ``s``; events given).

    ``candidates`` restricts which threads are tested (all threads by default).
    """
    first: dict = {}
    for k, e in enumerate(w_events):
        first.setdefault(e.thread, k)
    nthreads = len(s.threads)
    pool = range(nthreads) if candidates is None else candidates
    out = set()
    for p in pool:
        if p in first:
            k = first[p]
            ek = w_events[k]
            if not any(direct_dep(w_events[i], ek, pol) for i in range(k)):
                out.add(p)
        else:
            if not interp.is_enabled(s, p):
                continue
            ep = interp.step(s, p)[1]
            if not any(direct_dep(ep, ew, pol) or direct_dep(ew, ep, pol) for ew in w_events):
                out.add(p)
    return frozenset(out)


def _state_of(E) -> ExecState:
    return E.end_state if isinstance(E, Execution) else E


def weak_initials(E, w: Sequence[int], pol: ConflictPolicy = BASELINE) -> frozenset:
    """Weak initials of the thread sequence ``w`` after execution/state ``E``."""
    s = _state_of(E)
    _, evs = interp.run_from(s, w)
    return weak_initials_events(s, evs, pol)


def pre(E: Execution, e: Event) -> Execution:
    """The prefix of ``E`` strictly before ``e``."""
    for k, ek in enumerate(E.events):
        if ek.id == e.id:
            return interp.replay(E.end_state.machine, [x.thread for x in E.events[:k]])
    raise ValueError(f"event {e.id} does not occur in the execution")


def notafter(e: Event, E: Execution, pol: ConflictPolicy = BASELINE) -> tuple:
    """Events after ``e`` in ``E`` that do not happen after ``e``."""
    rel = compute_hb(E, pol)
    for k, ek in enumerate(rel.events):
        if ek.id == e.id:
            return tuple(rel.events[i] for i in rel.notafter(k))
    raise ValueError(f"event {e.id} does not occur in the execution")


def hb_prefix(u: Sequence[int], w: Sequence[int], E, pol: ConflictPolicy = BASELINE) -> bool:
    """Whether ``E.u.v`` is equivalent to ``E.w`` for some ``v`` (``u`` and ``w`` thread sequences)."""
    s = _state_of(E)
    _, w_ev = interp.run_from(s, w)
    try:
        s_u, u_ev = interp.run_from(s, u)
    except interp.NotEnabledError:
        return False
    return hb_prefix_events(s_u, u_ev, w_ev, pol)


def hb_prefix_events(s_u: ExecState, u_ev: Sequence[Event], w_ev: Sequence[Event],
                     pol: ConflictPolicy) -> bool:
    """``u_ev`` already executed, ending in ``s_u``; test completion to ``w_ev``."""
    w_ids = [e.id for e in w_ev]
    u_ids = {e.id for e in u_ev}
    if not u_ids <= set(w_ids) or len(u_ids) != len(u_ev):
        return False
    rest = [e.thread for e in w_ev if e.id not in u_ids]
    try:
        _, v_ev = interp.run_from(s_u, rest)
    except interp.NotEnabledError:
        return False
    return equivalent(list(u_ev) + list(v_ev), w_ev, pol)
