"""Sequentially consistent interpreter.

A ``Machine`` is a program compiled for execution together with run options
(unroll bound, step budget, optional purity instrumentation).  ``ExecState``
values are immutable; ``step`` returns a fresh state and the emitted event.

Only statements emit events.  Phi nodes and terminators are resolved eagerly
after every step ("settling"), so a runnable thread always sits at a statement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from . import ir
from .ir import (
    Assert, Assign, Assume, Await, Branch, CmpXchg, Exit, Faa, Goto, Join, Load, LoadAwait,
    Program, Spawn, Store, Xchg, XchgAwait,
)

RUNNABLE = "runnable"
UNSTARTED = "unstarted"
ASSUME_BLOCKED = "assume-blocked"
EXITED = "exited"
AWAIT_BLOCKED = "await-blocked"  # derived, never stored
JOIN_WAIT = "joined-wait"  # derived, never stored

DEFAULT_MAX_STEPS = 10**6
LOCAL_TRANSITION_LIMIT = 100_000


class BudgetExceeded(Exception):
    """The per-execution step budget ran out (possible nontermination)."""


class NotEnabledError(Exception):
    """A thread was stepped although it is not enabled."""

    def __init__(self, thread: int, step_index: Optional[int] = None):
        where = "" if step_index is None else f" at schedule step {step_index}"
        super().__init__(f"thread {thread} is not enabled{where}")
        self.thread = thread
        self.step_index = step_index


@dataclass(frozen=True, slots=True)
class Event:
    thread: int
    index: int  # per-thread, starting at 1
    kind: str
    var: Optional[str]
    reads: bool
    writes: bool
    faa_indep: bool  # fetch-and-add whose result register is dead
    value_read: Optional[int]
    value_written: Optional[int]
    block: str
    pos: int
    target: Optional[int] = None  # spawn/join target thread
    ok: Optional[bool] = None  # assume/assert outcome, cmpxchg success

    @property
    def id(self) -> tuple:
        return (self.thread, self.index)

    @property
    def is_await(self) -> bool:
        return self.kind in ("await", "load_await", "xchg_await")

    @property
    def may_block(self) -> bool:
        """Events whose enabledness other threads can change."""
        return self.kind in ("await", "load_await", "xchg_await", "join")


class ThreadState(NamedTuple):
    block: str
    pos: int
    prev: Optional[str]  # predecessor block used for phi resolution
    regs: dict  # never mutated in place
    status: str
    count: int  # events emitted so far
    backedges: dict  # (src, dst) -> traversals; never mutated in place
    loops: tuple = ()  # purity tracking: (header, impure, header phi values) per active iteration
    pure: int = 0  # completed pure iterations


class ExecState(NamedTuple):
    machine: "Machine"
    memory: tuple
    threads: tuple
    steps: int
    failures: tuple  # (thread, index) of failed asserts

    def mem(self) -> dict:
        return dict(zip(self.machine.var_names, self.memory))

    def status(self, t: int) -> str:
        return thread_status(self, t)


class _CBlock:
    __slots__ = ("label", "phis", "stmts", "term")

    def __init__(self, b: ir.BasicBlock):
        self.label = b.label
        self.phis = [(ph.dst, dict(ph.sources)) for ph in b.phis]
        self.stmts = list(b.stmts)
        self.term = b.term


class _CThread:
    def __init__(self, t: ir.ThreadCfg, track_purity: bool, purity_ignore=frozenset()):
        self.name = t.name
        self.blocks = {b.label: _CBlock(b) for b in t.blocks}
        self.entry = t.entry_block
        info = ir.build_cfg_info(t)
        self.backedges = info.backedges
        uses = ir.register_uses(t)
        self.dead = {r for r in t.registers if uses.get(r, 0) == 0}
        self.loops_of_block: dict = {}
        self.loop_body: dict = {}
        self.internal_of: dict = {}
        self.carried: dict = {}  # header -> phi registers compared across an iteration
        if track_purity:
            for lp in info.loops:
                self.loop_body[lp.header] = lp.body
                for e in lp.internal_backedges:
                    self.internal_of.setdefault(e, []).append(lp.header)
                self.carried[lp.header] = tuple(ph.dst for ph in t.block(lp.header).phis
                                                if ph.dst not in purity_ignore)
            for b in t.blocks:
                hs = [lp.header for lp in info.loops if b.label in lp.body]
                self.loops_of_block[b.label] = hs


class Machine:
    """A program compiled for interpretation."""

    def __init__(
        self,
        program: Program,
        unroll: Optional[int] = None,
        max_steps: int = DEFAULT_MAX_STEPS,
        track_purity: bool = False,
        ghost_assumes: frozenset = frozenset(),
        purity_ignore: Optional[dict] = None,
    ):
        if unroll is not None and unroll < 1:
            raise ValueError("unroll bound must be >= 1")
        self.program = program
        self.unroll = unroll
        self.max_steps = max_steps
        self.track_purity = track_purity
        self.ghost_assumes = ghost_assumes  # {(thread, block, pos)} treated as no-ops
        self.var_names = tuple(n for n, _ in program.globals)
        self.var_index = {n: i for i, n in enumerate(self.var_names)}
        # thread name -> registers left out of the loop-carried comparison
        ignore = purity_ignore or {}
        self.threads = [_CThread(t, track_purity, frozenset(ignore.get(t.name, ())))
                        for t in program.threads]
        self.thread_ids = {t.name: i for i, t in enumerate(program.threads)}
        self.spawned = {self.thread_ids[n] for n in program.spawned_threads()}

    @property
    def nthreads(self) -> int:
        return len(self.threads)

    def stmt_at(self, t: int, ts: ThreadState):
        return self.threads[t].blocks[ts.block].stmts[ts.pos]


def as_machine(p, **opts) -> Machine:
    if isinstance(p, Machine):
        if opts:
            raise TypeError("options cannot be combined with an existing Machine")
        return p
    return Machine(p, **opts)


# ---------------------------------------------------------------------------
# Settling: phis, terminators, backedge bookkeeping
# ---------------------------------------------------------------------------


def _settle(m: Machine, tid: int, ts: ThreadState) -> ThreadState:
    th = m.threads[tid]
    block, pos, prev, regs = ts.block, ts.pos, ts.prev, ts.regs
    backedges, loops, pure = ts.backedges, ts.loops, ts.pure
    hops = 0
    while pos >= len(th.blocks[block].stmts):
        term = th.blocks[block].term
        if isinstance(term, Exit):
            return ts._replace(block=block, pos=pos, prev=prev, regs=regs, status=EXITED,
                               backedges=backedges, loops=(), pure=pure)
        if isinstance(term, Goto):
            nxt = term.target
        else:
            nxt = term.then if ir.eval_expr(term.cond, regs) else term.orelse
        hops += 1
        if hops > LOCAL_TRANSITION_LIMIT:
            raise BudgetExceeded(
                f"thread {th.name}: possible nontermination (too many local transitions)"
            )
        edge = (block, nxt)
        if edge in th.backedges:
            n = backedges.get(edge, 0) + 1
            backedges = dict(backedges)
            backedges[edge] = n
            if m.unroll is not None and n > m.unroll:
                return ts._replace(block=block, pos=pos, prev=prev, regs=regs,
                                   status=ASSUME_BLOCKED, backedges=backedges,
                                   loops=loops, pure=pure)
        cb = th.blocks[nxt]
        if cb.phis:
            vals = [
                (dst, srcs[block].value if isinstance(srcs[block], ir.Const) else regs[srcs[block].name])
                for dst, srcs in cb.phis
            ]
            regs = dict(regs)
            regs.update(vals)
        if m.track_purity:
            loops, pure = _purity_edge(th, loops, pure, edge, regs)
        prev, block, pos = block, nxt, 0
    return ts._replace(block=block, pos=pos, prev=prev, regs=regs, backedges=backedges,
                       loops=loops, pure=pure)


def _purity_edge(th: _CThread, loops: tuple, pure: int, edge: tuple, regs: dict):
    """Update active iterations for a CFG edge; ``regs`` already holds the
    phi values of the target block."""
    src, dst = edge
    active = {h: (imp, snap) for h, imp, snap in loops}
    for h in th.internal_of.get(edge, ()):
        if h in active:
            active[h] = (True, active[h][1])
    if dst in th.loop_body:
        snap = tuple(regs[r] for r in th.carried[dst])
        if (src, dst) in th.backedges and dst in active:
            impure, before = active[dst]
            if not impure and snap == before:
                pure += 1
        active[dst] = (False, snap)
    # leaving a loop ends its iteration
    for h in list(active):
        if dst not in th.loop_body[h]:
            del active[h]
    return tuple(sorted((h, imp, snap) for h, (imp, snap) in active.items())), pure


def _mark_impure(th: _CThread, loops: tuple) -> tuple:
    if not loops:
        return loops
    return tuple((h, True, snap) for h, _, snap in loops)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def initial_state(p, **opts) -> ExecState:
    """Initial state: declared memory, entry and never-spawned threads started."""
    m = as_machine(p, **opts)
    mem = tuple(v for _, v in m.program.globals)
    ths = []
    for tid, th in enumerate(m.threads):
        ts = ThreadState(th.entry, 0, None, {}, UNSTARTED, 0, {})
        if tid not in m.spawned:
            ts = _start(m, tid, ts)
        ths.append(ts)
    return ExecState(m, mem, tuple(ths), 0, ())


def _start(m: Machine, tid: int, ts: ThreadState) -> ThreadState:
    th = m.threads[tid]
    loops = ()
    if m.track_purity and th.entry in th.loop_body:
        loops = ((th.entry, False, ()),)
    ts = ts._replace(status=RUNNABLE, loops=loops)
    return _settle(m, tid, ts)


def _await_holds(stmt, memory: tuple, m: Machine, regs: dict) -> bool:
    cur = memory[m.var_index[stmt.var]]
    rhs = stmt.rhs.value if isinstance(stmt.rhs, ir.Const) else regs[stmt.rhs.name]
    return ir.compare(stmt.op, cur, rhs)


def is_enabled(s: ExecState, t: int) -> bool:
    ts = s.threads[t]
    if ts.status != RUNNABLE:
        return False
    m = s.machine
    stmt = m.stmt_at(t, ts)
    if isinstance(stmt, (Await, LoadAwait, XchgAwait)):
        return _await_holds(stmt, s.memory, m, ts.regs)
    if isinstance(stmt, Join):
        return s.threads[m.thread_ids[stmt.thread]].status == EXITED
    return True


def enabled(s: ExecState) -> tuple:
    """Ids of threads that can take a step, in increasing order."""
    return tuple(t for t in range(len(s.threads)) if is_enabled(s, t))


def thread_status(s: ExecState, t: int) -> str:
    ts = s.threads[t]
    if ts.status != RUNNABLE:
        return ts.status
    stmt = s.machine.stmt_at(t, ts)
    if isinstance(stmt, (Await, LoadAwait, XchgAwait)):
        if not _await_holds(stmt, s.memory, s.machine, ts.regs):
            return AWAIT_BLOCKED
    elif isinstance(stmt, Join):
        if s.threads[s.machine.thread_ids[stmt.thread]].status != EXITED:
            return JOIN_WAIT
    return RUNNABLE


def blocked_threads(s: ExecState) -> tuple:
    """(thread, reason) for every thread that is neither runnable nor exited."""
    out = []
    for t in range(len(s.threads)):
        st = thread_status(s, t)
        if st not in (RUNNABLE, EXITED):
            out.append((t, st))
    return tuple(out)


def step(s: ExecState, t: int) -> tuple:
    """Execute the next statement of thread ``t``; returns ``(state, event)``."""
    if not is_enabled(s, t):
        raise NotEnabledError(t)
    m = s.machine
    if s.steps >= m.max_steps:
        raise BudgetExceeded(f"step budget of {m.max_steps} events exhausted (possible nontermination)")
    th = m.threads[t]
    ts = s.threads[t]
    stmt = th.blocks[ts.block].stmts[ts.pos]
    regs = ts.regs
    memory = s.memory
    threads = s.threads
    index = ts.count + 1
    failures = s.failures
    status = RUNNABLE
    var = None
    reads = writes = faa_indep = False
    vread = vwritten = target = ok = None
    newregs = None
    impure = False

    def ev(e):
        return ir.eval_expr(e, regs)

    if isinstance(stmt, Load):
        kind, var, reads = "load", stmt.var, True
        vread = memory[m.var_index[var]]
        newregs = {stmt.dst: vread}
    elif isinstance(stmt, Store):
        kind, var, writes = "store", stmt.var, True
        vwritten = ev(stmt.value)
        impure = True
    elif isinstance(stmt, Faa):
        kind, var, reads, writes = "faa", stmt.var, True, True
        faa_indep = stmt.dst is None or stmt.dst in th.dead
        vread = memory[m.var_index[var]]
        add = ev(stmt.value)
        vwritten = ir.wrap64(vread + add)
        impure = add != 0
        if stmt.dst is not None:
            newregs = {stmt.dst: vread}
    elif isinstance(stmt, Xchg):
        kind, var, reads, writes = "xchg", stmt.var, True, True
        vread = memory[m.var_index[var]]
        vwritten = ev(stmt.value)
        impure = vwritten != vread
        newregs = {stmt.dst: vread}
    elif isinstance(stmt, CmpXchg):
        kind, var, reads = "cmpxchg", stmt.var, True
        vread = memory[m.var_index[var]]
        ok = vread == ev(stmt.expected)
        if ok:
            writes = True
            vwritten = ev(stmt.new)
            impure = True
        newregs = {stmt.dst: 1 if ok else 0}
    elif isinstance(stmt, Await):
        kind, var, reads = "await", stmt.var, True
        vread = memory[m.var_index[var]]
    elif isinstance(stmt, LoadAwait):
        kind, var, reads = "load_await", stmt.var, True
        vread = memory[m.var_index[var]]
        newregs = {stmt.dst: vread}
    elif isinstance(stmt, XchgAwait):
        kind, var, reads, writes = "xchg_await", stmt.var, True, True
        vread = memory[m.var_index[var]]
        vwritten = ev(stmt.new)
        impure = vwritten != vread
        if stmt.dst is not None:
            newregs = {stmt.dst: vread}
    elif isinstance(stmt, Assign):
        kind = "assign"
        newregs = {stmt.dst: ev(stmt.value)}
    elif isinstance(stmt, Assume):
        kind = "assume"
        ok = bool(ev(stmt.cond))
        if not ok and (t, ts.block, ts.pos) not in m.ghost_assumes:
            status = ASSUME_BLOCKED
    elif isinstance(stmt, Assert):
        kind = "assert"
        ok = bool(ev(stmt.cond))
        if not ok:
            failures = failures + ((t, index),)
    elif isinstance(stmt, Spawn):
        kind = "spawn"
        target = m.thread_ids[stmt.thread]
        impure = True
    elif isinstance(stmt, Join):
        kind = "join"
        target = m.thread_ids[stmt.thread]
    else:  # pragma: no cover - exhaustive over statement kinds
        raise TypeError(f"unknown statement {stmt!r}")

    if writes:
        mem = list(memory)
        mem[m.var_index[var]] = vwritten
        memory = tuple(mem)
    if newregs:
        regs = dict(regs)
        regs.update(newregs)
    loops = ts.loops
    if impure and m.track_purity:
        loops = _mark_impure(th, loops)
    event = Event(t, index, kind, var, reads, writes, faa_indep, vread, vwritten,
                  ts.block, ts.pos, target, ok)
    nts = ts._replace(pos=ts.pos + 1, regs=regs, count=index, status=status, loops=loops)
    if status == RUNNABLE:
        nts = _settle(m, t, nts)
    threads = list(threads)
    threads[t] = nts
    if target is not None and kind == "spawn":
        tgt = threads[target]
        if tgt.status == UNSTARTED:
            threads[target] = _start(m, target, tgt)
    return ExecState(m, memory, tuple(threads), s.steps + 1, failures), event


def peek_event(s: ExecState, t: int) -> Event:
    """The next event of ``t`` after ``s``.

    For an enabled thread this is the exact event; for a thread blocked at an
    await it is the event shape (access kind and variable) the await would
    have, with no observed values.
    """
    if is_enabled(s, t):
        return step(s, t)[1]
    ts = s.threads[t]
    if ts.status != RUNNABLE:
        raise NotEnabledError(t)
    stmt = s.machine.stmt_at(t, ts)
    idx = ts.count + 1
    if isinstance(stmt, Join):
        return Event(t, idx, "join", None, False, False, False, None, None, ts.block, ts.pos,
                     s.machine.thread_ids[stmt.thread], None)
    kind = {Await: "await", LoadAwait: "load_await", XchgAwait: "xchg_await"}[type(stmt)]
    return Event(t, idx, kind, stmt.var, True, kind == "xchg_await", False, None, None,
                 ts.block, ts.pos, None, None)


# ---------------------------------------------------------------------------
# Executions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Execution:
    events: tuple
    end_state: ExecState
    program: Program

    @property
    def schedule(self) -> tuple:
        return tuple(e.thread for e in self.events)

    @property
    def blocked_threads(self) -> tuple:
        return blocked_threads(self.end_state)

    @property
    def assertion_failures(self) -> tuple:
        return self.end_state.failures

    @property
    def is_maximal(self) -> bool:
        return not enabled(self.end_state)

    @property
    def is_blocked(self) -> bool:
        """Maximal with some thread not exited."""
        return bool(self.blocked_threads)

    def __len__(self) -> int:
        return len(self.events)


def replay(p, schedule: Sequence[int], **opts) -> Execution:
    """Run ``schedule`` (thread ids) from the initial state."""
    m = as_machine(p, **opts)
    s = initial_state(m)
    events = []
    for i, t in enumerate(schedule):
        if not is_enabled(s, t):
            raise NotEnabledError(t, i)
        s, e = step(s, t)
        events.append(e)
    return Execution(tuple(events), s, m.program)


def run_from(s: ExecState, schedule: Sequence[int]) -> tuple:
    """Run ``schedule`` from state ``s``; returns ``(state, events)``."""
    events = []
    for i, t in enumerate(schedule):
        if not is_enabled(s, t):
            raise NotEnabledError(t, i)
        s, e = step(s, t)
        events.append(e)
    return s, events


def extend_maximal(p, prefix: Optional[Execution] = None, **opts) -> Execution:
    """Extend ``prefix`` to a maximal execution, always running the lowest enabled thread."""
    if prefix is None:
        m = as_machine(p, **opts)
        s = initial_state(m)
        events: list = []
    else:
        s = prefix.end_state
        m = s.machine
        events = list(prefix.events)
    while True:
        en = enabled(s)
        if not en:
            return Execution(tuple(events), s, m.program)
        s, e = step(s, en[0])
        events.append(e)


def local_states(s: ExecState, exited_only: bool = True) -> frozenset:
    """``(thread name, sorted register items)`` for threads in ``s``."""
    out = set()
    m = s.machine
    for t, ts in enumerate(s.threads):
        if exited_only and ts.status != EXITED:
            continue
        out.add((m.threads[t].name, tuple(sorted(ts.regs.items()))))
    return frozenset(out)
