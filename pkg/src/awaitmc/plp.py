"""Partial loop purity: find conditions under which a loop iteration is pure
and block such iterations with inserted assumes.

The pass runs per thread.  For every natural loop (innermost first) it
propagates forward purity conditions backwards through the loop body,
reads the purity condition off the header, and inserts one
``assume(¬c)`` per disjunct ``c`` at the earliest point where every
register of ``c`` has been assigned in the current iteration.  All loops
are analysed on the original thread and the insertions are applied at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from . import ir
from .fpc import Conjunct, DnfOverflow, Fpc, comparison, cond_dnf, substitute
from .ir import (
    Assert, Assign, Assume, Await, BasicBlock, Branch, CmpXchg, Const, Faa, Goto, Join,
    Load, LoadAwait, Phi, Program, Reg, Spawn, Store, ThreadCfg, Xchg, XchgAwait,
    build_cfg_info, impure_header_backedges,
)

__all__ = [
    "LoopReport", "PurityReport", "statement_purity_guard", "propagate_fpc",
    "insert_assumes", "transform", "impure_header_backedges",
]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class LoopReport:
    header: str
    body: tuple  # blocks in reverse postorder
    pc: Fpc
    table: dict  # (block, index) -> Fpc; index 0 is the block start
    impure_backedges: frozenset
    internal_backedges: tuple
    overflow: bool = False
    insertions: list = field(default_factory=list)  # (Conjunct, (block, index))

    def table_lines(self, blocks: dict) -> list:
        out = []
        for b in self.body:
            blk = blocks[b]
            for i in range(len(blk.stmts) + 1):
                where = f"{b}:{i}"
                stmt = ""
                if i < len(blk.stmts):
                    from .parser import format_stmt
                    stmt = format_stmt(blk.stmts[i])
                out.append(f"  {where:<8} {self.table[(b, i)].render():<24} {stmt}".rstrip())
        return out


@dataclass
class PurityReport:
    thread: str
    loops: list = field(default_factory=list)

    def render(self, thread: Optional[ThreadCfg] = None) -> str:
        lines = [f"thread {self.thread}:"]
        if not self.loops:
            lines.append("  no loops")
        blocks = thread.block_map() if thread is not None else None
        for lr in self.loops:
            lines.append(f" loop {lr.header}: PC = {lr.pc.render()}"
                         + (" (disjunct cap exceeded)" if lr.overflow else ""))
            if lr.impure_backedges:
                lines.append("  impure header backedges: "
                             + ", ".join(f"{a}->{b}" for a, b in sorted(lr.impure_backedges)))
            if blocks is not None:
                lines += lr.table_lines(blocks)
            for c, (b, i) in lr.insertions:
                lines.append(f"  insert assume(¬({c.render()})) at {b}:{i}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------


def statement_purity_guard(s) -> Fpc:
    """Condition under which ``s`` leaves shared memory unchanged."""
    if isinstance(s, (Store, Spawn)):
        return Fpc.false()
    if isinstance(s, Faa):
        return comparison("==", s.value, Const(0))
    if isinstance(s, Xchg):
        return comparison("==", Reg(s.dst), s.value)
    if isinstance(s, CmpXchg):
        # dst is 1 when the swap happened; a failed compare writes nothing
        return comparison("==", Reg(s.dst), Const(0))
    if isinstance(s, XchgAwait):
        if s.op == "==":
            return comparison("==", s.rhs, s.new)
        if s.dst is not None:
            return comparison("==", Reg(s.dst), s.new)
        return Fpc.false()
    return Fpc.true()


def _sets_floor(s) -> bool:
    return isinstance(s, ir.AWAIT_FORMS + ir.RMW_FORMS)


def _edge_guards(term) -> list:
    if isinstance(term, Goto):
        return [(term.target, Fpc.true())]
    if isinstance(term, Branch):
        return [(term.then, cond_dnf(term.cond, True)), (term.orelse, cond_dnf(term.cond, False))]
    return []


def propagate_fpc(thread: ThreadCfg, loop: ir.Loop, info: ir.CfgInfo) -> LoopReport:
    """Forward purity conditions at every statement boundary of ``loop``."""
    blocks = thread.block_map()
    body = tuple(b for b in info.rpo if b in loop.body)
    impure = impure_header_backedges(thread, loop)
    internal = set(loop.internal_backedges)
    table: dict = {}
    before: dict = {}
    try:
        for b in reversed(body):
            blk = blocks[b]
            acc = Fpc.false()
            for tgt, g in _edge_guards(blk.term):
                if tgt not in loop.body:
                    f = Fpc.false()
                elif tgt == loop.header:
                    f = Fpc.false() if (b, tgt) in impure else g
                elif (b, tgt) in internal:
                    f = Fpc.false()
                else:
                    f = before[tgt] & g
                acc = acc | f
            n = len(blk.stmts)
            table[(b, n)] = acc
            for i in range(n - 1, -1, -1):
                s = blk.stmts[i]
                if _sets_floor(s):
                    acc = acc.with_floor((b, i + 1))
                acc = acc & statement_purity_guard(s)
                table[(b, i)] = acc
            before[b] = acc
    except DnfOverflow:
        table = {(b, i): Fpc.false() for b in body for i in range(len(blocks[b].stmts) + 1)}
        return LoopReport(loop.header, body, Fpc.false(), table, impure, loop.internal_backedges, True)
    return LoopReport(loop.header, body, table[(loop.header, 0)], table, impure, loop.internal_backedges)


# ---------------------------------------------------------------------------
# Insertion
# ---------------------------------------------------------------------------


class _Names:
    def __init__(self, taken):
        self.taken = set(taken)

    def fresh(self, base: str) -> str:
        for k in itertools.count(1):
            name = f"{base}{k}"
            if name not in self.taken:
                self.taken.add(name)
                return name
        raise AssertionError("unreachable")


def _def_sites(thread: ThreadCfg) -> dict:
    """register -> (block, position after the definition, is_phi)."""
    out = {}
    for b in thread.blocks:
        for ph in b.phis:
            out[ph.dst] = (b.label, 0, True)
        for i, s in enumerate(b.stmts):
            d = ir.stmt_def(s)
            if d is not None:
                out[d] = (b.label, i + 1, False)
    return out


class _Flow:
    """SSA values of a per-iteration shadow quantity inside one loop.

    The quantity is reset to ``reset`` at the loop header, becomes
    ``Reg(r)`` after the statement defining ``r`` (when ``reg`` is given),
    and becomes ``Const(1)`` on the loop's internal backedges (when
    ``mark_internal`` is set).  Multi-predecessor blocks get phis, trivial
    phis are removed afterwards.
    """

    def __init__(self, loop, info, body, names, sites, reg=None, mark_internal=False, base="sh"):
        self.loop = loop
        self.info = info
        self.body = body
        self.reg = reg
        self.phis: dict = {}  # block -> [dst, {pred: atom}]
        self.inval: dict = {}
        self.outval: dict = {}
        internal = set(loop.internal_backedges)
        def_block = def_pos = None
        if reg is not None and reg in sites:
            def_block, def_pos, _ = sites[reg]
        self.def_block, self.def_pos = def_block, def_pos
        for b in body:
            if b == loop.header:
                v = Reg(reg) if def_block == b and def_pos == 0 else Const(0)
            else:
                preds = [p for p in info.preds[b] if p in loop.body]
                if len(preds) == 1 and (preds[0], b) not in internal:
                    v = self.outval[preds[0]]
                else:
                    v = Reg(names.fresh(base))
                    self.phis[b] = [v.name, {}]
            self.inval[b] = v
            self.outval[b] = Reg(reg) if def_block == b else v
        for b, (dst, srcs) in self.phis.items():
            for p in info.preds[b]:
                if p not in loop.body:
                    continue
                srcs[p] = Const(1) if (mark_internal and (p, b) in internal) else self.outval[p]
        self._drop_trivial()

    def _drop_trivial(self):
        changed = True
        while changed:
            changed = False
            for b in list(self.phis):
                dst, srcs = self.phis[b]
                vals = {v for v in srcs.values() if v != Reg(dst)}
                if len(vals) == 1:
                    (v,) = vals
                    del self.phis[b]
                    self._replace(Reg(dst), v)
                    changed = True

    def _replace(self, old, new):
        for d in (self.inval, self.outval):
            for k, v in d.items():
                if v == old:
                    d[k] = new
        for _, srcs in self.phis.values():
            for k, v in srcs.items():
                if v == old:
                    srcs[k] = new

    def value_at(self, block: str, index: int):
        if self.def_block == block and index >= self.def_pos:
            return Reg(self.reg)
        return self.inval[block]

    def needed_phis(self, roots) -> dict:
        need = {}
        work = [r for r in roots if isinstance(r, Reg)]
        by_dst = {dst: (b, srcs) for b, (dst, srcs) in self.phis.items()}
        while work:
            r = work.pop()
            if r.name in by_dst and r.name not in need:
                b, srcs = by_dst[r.name]
                need[r.name] = (b, srcs)
                work.extend(v for v in srcs.values() if isinstance(v, Reg))
        return need


def _plan_loop(thread, loop, info, report: LoopReport, names, sites) -> tuple:
    """Assumes to insert ``(block, index, expr)`` and phis ``block -> [Phi]``."""
    rpo = {b: i for i, b in enumerate(info.rpo)}
    body = report.body
    assumes = []
    phis: dict = {}
    if report.pc.is_false():
        return assumes, phis
    tib = None
    if loop.internal_backedges:
        tib = _Flow(loop, info, body, names, sites, mark_internal=True, base="tib")
    flows: dict = {}
    for c in report.pc.conjuncts:
        pos = (rpo[loop.header], 0)
        where = (loop.header, 0)
        for r in sorted(c.regs()):
            site = sites.get(r)
            if site is None or site[0] not in loop.body:
                continue
            cand = (rpo[site[0]], site[1])
            if cand > pos:
                pos, where = cand, (site[0], site[1])
        if c.floor is not None:
            cand = (rpo[c.floor[0]], c.floor[1])
            if cand > pos:
                pos, where = cand, c.floor
        b, i = where
        mapping = {}
        roots = []
        for r in sorted(c.regs()):
            site = sites.get(r)
            if site is None or site[0] not in loop.body:
                continue
            if r not in flows:
                flows[r] = _Flow(loop, info, body, names, sites, reg=r, base=f"{r}_sh")
            v = flows[r].value_at(b, i)
            if v != Reg(r):
                mapping[r] = v
                roots.append((flows[r], v))
        cc = substitute(c, mapping) if mapping else c
        if cc is None:
            report.insertions.append((c, where))
            continue
        cond = cc.negated_expr()
        if tib is not None:
            t = tib.value_at(b, i)
            if t != Const(0):
                roots.append((tib, t))
                cond = ir.BinOp("||", ir.BinOp("!=", t, Const(0)), cond) if not cc.is_true() \
                    else ir.BinOp("!=", t, Const(0))
        if isinstance(cond, Const) and cond.value:
            continue
        assumes.append((b, i, cond))
        report.insertions.append((c, where))
        for flow, v in roots:
            for dst, (blk, srcs) in flow.needed_phis([v]).items():
                lst = phis.setdefault(blk, {})
                lst[dst] = Phi(dst, tuple((p, srcs[p]) for p in info.preds[blk] if p in srcs))
    return assumes, phis


def insert_assumes(thread: ThreadCfg, reports, info: Optional[ir.CfgInfo] = None,
                   reserved=()) -> ThreadCfg:
    """Apply the insertions planned for every loop report of ``thread``.

    ``reserved`` lists names (globals) that fresh registers must avoid.
    """
    if info is None:
        info = build_cfg_info(thread)
    names = _Names(set(thread.registers) | set(reserved))
    sites = _def_sites(thread)
    all_assumes: list = []
    all_phis: dict = {}
    by_header = {lp.header: lp for lp in info.loops}
    for rep in reports:
        loop = by_header[rep.header]
        assumes, phis = _plan_loop(thread, loop, info, rep, names, sites)
        all_assumes += assumes
        for b, d in phis.items():
            all_phis.setdefault(b, {}).update(d)
    if not all_assumes:
        return thread
    new_blocks = []
    for blk in thread.blocks:
        at: dict = {}
        for b, i, cond in all_assumes:
            if b == blk.label:
                at.setdefault(i, []).append(Assume(cond))
        stmts = []
        for i in range(len(blk.stmts) + 1):
            stmts += at.get(i, [])
            if i < len(blk.stmts):
                stmts.append(blk.stmts[i])
        extra = tuple(all_phis.get(blk.label, {}).values())
        new_blocks.append(BasicBlock(blk.label, blk.phis + extra, tuple(stmts), blk.term))
    return thread.replace_blocks(tuple(new_blocks))


def analyse_thread(thread: ThreadCfg, info: Optional[ir.CfgInfo] = None) -> PurityReport:
    if info is None:
        info = build_cfg_info(thread)
    rep = PurityReport(thread.name)
    for loop in info.loops:  # innermost first
        rep.loops.append(propagate_fpc(thread, loop, info))
    return rep


def transform(p: Program, await_rewrite: bool = False) -> tuple:
    """PLP (and optionally the await rewrite) on every thread.

    Returns the new program and a :class:`PurityReport` per thread.
    """
    from .rewrite import rewrite_assume_to_await

    reports = []
    threads = []
    for t in p.threads:
        info = build_cfg_info(t)
        rep = analyse_thread(t, info)
        t2 = insert_assumes(t, rep.loops, info, reserved=p.shared_vars)
        if await_rewrite:
            t2 = rewrite_assume_to_await(t2, p.shared_vars)
        reports.append(rep)
        threads.append(t2)
    out = Program(p.globals, tuple(threads))
    diags = ir.validate_program(out)
    if diags:
        raise ir.IRError("transformed program is invalid: " + "; ".join(d.message for d in diags))
    return out, reports
