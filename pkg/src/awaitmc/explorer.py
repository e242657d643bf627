"""Optimal DPOR for programs with await statements.

``explore`` performs the depth-first exploration with sleep sets and wakeup
trees.  When a maximal execution is reached it inserts wakeup sequences for

* non-blocking races (the later event cannot be enabled or disabled by
  another thread), and
* events that can block (awaits), by searching for maximal happens-before
  prefixes of the reversible suffix after which the await is enabled.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from . import interp
from .hb import BASELINE, ConflictPolicy, HbRelation, conflicts, direct_dep, race_positions
from .interp import BudgetExceeded, Event, ExecState, Execution


@dataclass
class ExploreOptions:
    unroll: Optional[int] = None
    max_steps: int = interp.DEFAULT_MAX_STEPS
    keep_traces: bool = False
    wi_cache: bool = True
    use_sleep_sets: bool = True  # disabling breaks optimality (used for mutation tests)
    can_stop: bool = True  # the can-stop/did-insert shortcut of the blocking-race loop
    max_executions: Optional[int] = None


@dataclass
class ExploreStats:
    events_stepped: int = 0
    races: int = 0
    blocking_candidates: int = 0
    wut_insertions: int = 0
    guard_rejections: int = 0
    sleep_blocked: int = 0
    time: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ExplorationReport:
    complete_count: int = 0
    blocked_count: int = 0
    assertion_failure_executions: list = field(default_factory=list)  # schedules
    executions: Optional[list] = None
    stats: ExploreStats = field(default_factory=ExploreStats)
    incomplete: bool = False
    incomplete_reason: str = ""
    # wakeup sequences left unexplored when the run stopped early, as
    # (schedule prefix, thread sequence) pairs
    pending: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.complete_count + self.blocked_count

    def summary(self) -> str:
        return (f"complete={self.complete_count} blocked={self.blocked_count} "
                f"time={self.stats.time:.3f}")

    def as_dict(self, include_time: bool = True) -> dict:
        stats = self.stats.as_dict()
        if not include_time:
            stats.pop("time")
        d = {
            "complete": self.complete_count,
            "blocked": self.blocked_count,
            "assertion_failures": [list(s) for s in self.assertion_failure_executions],
            "incomplete": self.incomplete,
            "stats": stats,
        }
        if self.incomplete_reason:
            d["incomplete_reason"] = self.incomplete_reason
        if include_time:
            d["time"] = round(self.stats.time, 3)
        return d


class WutNode:
    """A node of a wakeup tree; children are kept in insertion order."""

    __slots__ = ("children",)

    def __init__(self):
        self.children: list = []  # list of [thread, WutNode]

    def child(self, p: int) -> Optional["WutNode"]:
        for q, n in self.children:
            if q == p:
                return n
        return None

    def sequences(self, prefix=()) -> list:
        """Leaves as thread sequences (for inspection and tests)."""
        if not self.children:
            return [prefix] if prefix else []
        out = []
        for q, n in self.children:
            out.extend(n.sequences(prefix + (q,)))
        return out


class _Frame:
    __slots__ = ("state", "sleep", "wut", "peek", "cur", "started")

    def __init__(self, state: ExecState, sleep: set, wut: WutNode):
        self.state = state
        self.sleep = sleep
        self.wut = wut
        self.peek: dict = {}
        self.cur: Optional[int] = None  # thread whose subtree is being explored
        self.started = False


def _wi_member(s: ExecState, p: int, v_ev: list, pol: ConflictPolicy, cache: Optional[dict]) -> bool:
    """Is ``p`` a weak initial of the (executed) sequence ``v_ev`` after ``s``."""
    for k, e in enumerate(v_ev):
        if e.thread == p:
            return not any(direct_dep(v_ev[i], e, pol) for i in range(k))
    if cache is not None and p in cache:
        ep = cache[p]
    else:
        if not interp.is_enabled(s, p):
            return False
        ep = interp.step(s, p)[1]
        if cache is not None:
            cache[p] = ep
    if ep is None:
        return False
    return not any(direct_dep(ep, ew, pol) or direct_dep(ew, ep, pol) for ew in v_ev)


def _remove_first(v: list, p: int) -> list:
    out = list(v)
    out.remove(p)
    return out


class _Explorer:
    def __init__(self, program, pol: ConflictPolicy, opts: ExploreOptions):
        self.machine = interp.Machine(program, unroll=opts.unroll, max_steps=opts.max_steps)
        self.pol = pol
        self.opts = opts
        self.report = ExplorationReport(executions=[] if opts.keep_traces else None)
        self.frames: list = []
        self.events: list = []
        self.rel = HbRelation((), pol, self.machine.nthreads)
        self.done = False

    # -- helpers -----------------------------------------------------------
    def peek(self, k: int, p: int) -> Optional[Event]:
        f = self.frames[k]
        if self.opts.wi_cache and p in f.peek:
            return f.peek[p]
        s = f.state
        e = interp.peek_event(s, p) if s.threads[p].status == interp.RUNNABLE else None
        if self.opts.wi_cache:
            f.peek[p] = e
        return e

    def sleep_guard(self, s: ExecState, sleep: set, v_ev: list, cache) -> bool:
        """True if no sleeping thread is a weak initial of ``v``."""
        for q in sorted(sleep):
            if _wi_member(s, q, v_ev, self.pol, cache):
                return False
        return True

    # -- main loop -----------------------------------------------------------
    def run(self) -> ExplorationReport:
        t0 = time.perf_counter()
        s0 = interp.initial_state(self.machine)
        self.frames.append(_Frame(s0, set(), WutNode()))
        try:
            self.explore()
        except BudgetExceeded as exc:
            self.report.incomplete = True
            self.report.incomplete_reason = str(exc)
            self._collect_pending()
        self.report.stats.time = time.perf_counter() - t0
        return self.report

    def explore(self) -> None:
        """Depth-first search over the frame stack (no recursion, so very long
        executions only cost memory)."""
        frames = self.frames
        use_sleep = self.opts.use_sleep_sets
        while frames:
            k = len(frames) - 1
            frame = frames[k]
            if frame.cur is not None:
                # back from the subtree of frame.cur
                p = frame.cur
                frame.cur = None
                if use_sleep:
                    frame.sleep.add(p)
                frame.wut.children = [c for c in frame.wut.children if c[0] != p]
            elif not frame.started:
                frame.started = True
                en = interp.enabled(frame.state)
                if not en:
                    self.on_maximal(k)
                    self._leave()
                    continue
                if not frame.wut.children:
                    choices = [p for p in en if p not in frame.sleep]
                    if not choices:
                        self.report.stats.sleep_blocked += 1
                        self._leave()
                        continue
                    frame.wut.children.append([choices[0], WutNode()])
            if self.done or not frame.wut.children:
                self._leave()
                continue
            p, sub = frame.wut.children[0]
            if p in frame.sleep and use_sleep:
                raise AssertionError(f"wakeup tree schedules sleeping thread {p}")
            s2, e = interp.step(frame.state, p)
            self.report.stats.events_stepped += 1
            sleep2 = set()
            if use_sleep:
                for q in frame.sleep:
                    eq = self.peek(k, q)
                    if eq is not None and not (direct_dep(eq, e, self.pol) or direct_dep(e, eq, self.pol)):
                        sleep2.add(q)
            frame.cur = p
            frames.append(_Frame(s2, sleep2, sub))
            self.events.append(e)
            self.rel.push(e)

    def _collect_pending(self) -> None:
        prefix = [e.thread for e in self.events]
        for k, f in enumerate(self.frames):
            for p, sub in f.wut.children:
                if p == f.cur:
                    continue  # its subtree lives in the deeper frames
                for seq in sub.sequences((p,)) or [(p,)]:
                    self.report.pending.append((tuple(prefix[:k]), seq))

    def _leave(self) -> None:
        self.frames.pop()
        if self.frames:
            self.events.pop()
            self.rel.pop()

    # -- maximal executions --------------------------------------------------
    def on_maximal(self, n: int) -> None:
        rep = self.report
        s = self.frames[n].state
        blocked = any(ts.status != interp.EXITED for ts in s.threads)
        if blocked:
            rep.blocked_count += 1
        else:
            rep.complete_count += 1
        sched = tuple(e.thread for e in self.events)
        if s.failures:
            rep.assertion_failure_executions.append(sched)
        if rep.executions is not None:
            rep.executions.append(Execution(tuple(self.events), s, self.machine.program))
        if self.opts.max_executions is not None and rep.total >= self.opts.max_executions:
            self.done = True
            rep.incomplete = True
            rep.incomplete_reason = "execution limit reached"
            self._collect_pending()
            return
        self.nonblocking_races()
        self.blocking_races(n)

    def nonblocking_races(self) -> None:
        rel = self.rel
        evs = self.events
        for i, j in race_positions(rel):
            self.report.stats.races += 1
            v = [evs[k].thread for k in rel.notafter(i)] + [evs[j].thread]
            self.guarded_insert(i, v)

    def guarded_insert(self, i: int, v: list) -> bool:
        frame = self.frames[i]
        s = frame.state
        _, v_ev = interp.run_from(s, v)
        cache = frame.peek if self.opts.wi_cache else None
        if self.opts.use_sleep_sets and not self.sleep_guard(s, frame.sleep, v_ev, cache):
            self.report.stats.guard_rejections += 1
            return False
        self.wut_insert(i, v, v_ev)
        return True

    def wut_insert(self, i: int, v: list, v_ev: list) -> None:
        frame = self.frames[i]
        node = frame.wut
        s = frame.state
        cache = frame.peek if self.opts.wi_cache else None
        while True:
            for p, child in node.children:
                if _wi_member(s, p, v_ev, self.pol, cache):
                    if p not in v:
                        return
                    v = _remove_first(v, p)
                    if not v:
                        return
                    s = interp.step(s, p)[0]
                    node = child
                    cache = None
                    if not node.children:
                        return
                    _, v_ev = interp.run_from(s, v)
                    break
            else:
                cur = node
                for q in v:
                    nxt = WutNode()
                    cur.children.append([q, nxt])
                    cur = nxt
                self.report.stats.wut_insertions += 1
                return

    # -- blocking events -----------------------------------------------------
    def blocking_races(self, n: int) -> None:
        evs = self.events
        s = self.frames[n].state
        cands = []
        for p in range(len(s.threads)):
            if interp.thread_status(s, p) == interp.AWAIT_BLOCKED:
                cands.append((interp.peek_event(s, p), n))
        for j, e in enumerate(evs):
            if e.is_await:
                cands.append((e, j))
        for ep, end in cands:
            self.report.stats.blocking_candidates += 1
            self.handle_blocking(ep, end)

    def handle_blocking(self, ep: Event, end: int) -> None:
        evs = self.events
        rel = self.rel
        pol = self.pol
        enablers = [m for m in range(end)
                    if evs[m].thread != ep.thread and evs[m].var == ep.var and evs[m].writes]
        can_stop = False
        for i in range(end - 1, -1, -1):
            e = evs[i]
            if e.thread == ep.thread or not conflicts(e, ep, pol):
                continue
            w = rel.notafter(i)
            if self.opts.can_stop and all(conflicts(e, evs[m], pol) for m in enablers if m != i):
                can_stop = True
            did_insert = False
            for u in self.enabling_subsequences(i, w, ep):
                did_insert = True
                v = [evs[k].thread for k in u] + [ep.thread]
                self.guarded_insert(i, v)
            if can_stop and did_insert:
                break

    def enabling_subsequences(self, i: int, w: list, ep: Event) -> list:
        """Maximal hb-closed subsequences ``u`` of ``w`` after which ``ep`` is next and enabled."""
        evs = self.events
        rel = self.rel
        s0 = self.frames[i].state
        t = ep.thread
        need = ep.index - 1
        found: list = []
        seen: set = set()
        stack = [tuple(w)]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            st, _ = interp.run_from(s0, [evs[k].thread for k in u])
            ts = st.threads[t]
            if ts.count == need and ts.status == interp.RUNNABLE and \
                    (ts.block, ts.pos) == (ep.block, ep.pos) and interp.is_enabled(st, t):
                found.append(u)
                continue
            removable = [f for f in u if evs[f].thread != t and evs[f].var == ep.var and evs[f].writes]
            # push in reverse so the latest writer is removed first
            for f in removable:
                u2 = tuple(g for g in u if g != f and not rel.hb(f, g))
                if u2 not in seen:
                    stack.append(u2)
        sets = [frozenset(u) for u in found]
        out = []
        kept: list = []
        for u, su in zip(found, sets):
            if any(su < other for other in sets):
                continue
            if su in kept:
                continue
            kept.append(su)
            out.append(u)
        return out


def explore(program, pol: ConflictPolicy = BASELINE, opts: Optional[ExploreOptions] = None,
            **kw) -> ExplorationReport:
    """Explore every equivalence class of maximal executions exactly once."""
    if opts is None:
        opts = ExploreOptions(**kw)
    elif kw:
        raise TypeError("pass either opts or keyword options, not both")
    return _Explorer(program, pol, opts).run()
