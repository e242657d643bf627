"""Turn ``load; assume`` pairs into awaits and clean up the control flow.

After the statement rewrite, branches whose outcome is fixed by facts known
at that point (an await's condition, an assume, a constant assignment) are
folded, unreachable blocks are dropped and ``goto`` chains are merged.  A
spinloop whose body was a load followed by the exit test therefore collapses
into a single await.
"""

from __future__ import annotations

from typing import Optional

from . import ir
from .fpc import Conjunct, Fpc, cond_dnf
from .ir import (
    Assign, Assume, Await, BasicBlock, BinOp, Branch, CmpXchg, Const, Goto, Load, LoadAwait,
    Reg, ThreadCfg, Xchg, XchgAwait, compare, expr_regs, register_uses,
)


def _single_comparison(cond, r: str) -> Optional[tuple]:
    """``(op, atom)`` if ``cond`` is ``r op atom`` (either side), else None."""
    if not (isinstance(cond, BinOp) and cond.op in ir.RELOPS):
        return None
    op, lhs, rhs = cond.op, cond.lhs, cond.rhs
    if lhs != Reg(r):
        if rhs != Reg(r):
            return None
        lhs, rhs, op = rhs, lhs, ir.SWAPPED_RELOP[op]
    if not isinstance(rhs, (Reg, Const)) or rhs == Reg(r):
        return None
    return op, rhs


def _rewrite_pair(load, assume: Assume, uses: dict) -> Optional[list]:
    r = load.dst
    m = _single_comparison(assume.cond, r)
    if m is None:
        return None
    op, atom = m
    live = uses.get(r, 0) > 1
    if isinstance(load, Load):
        return [LoadAwait(r, load.var, op, atom) if live else Await(load.var, op, atom)]
    if isinstance(load, Xchg):
        return [XchgAwait(r if live else None, load.var, op, atom, load.value)]
    if isinstance(load, CmpXchg):
        if not isinstance(atom, Const) or not isinstance(load.expected, (Reg, Const)):
            return None
        ok_success = compare(op, 1, atom.value)
        ok_failure = compare(op, 0, atom.value)
        if ok_success and not ok_failure:
            out = [XchgAwait(None, load.var, "==", load.expected, load.new)]
            return out + ([Assign(r, Const(1))] if live else [])
        if ok_failure and not ok_success:
            out = [Await(load.var, "!=", load.expected)]
            return out + ([Assign(r, Const(0))] if live else [])
    return None


def rewrite_statements(thread: ThreadCfg) -> tuple:
    """Pattern rewrite only; returns the thread and the registers of added assigns."""
    uses = register_uses(thread)
    added = set()
    blocks = []
    for blk in thread.blocks:
        out = []
        stmts = blk.stmts
        i = 0
        while i < len(stmts):
            s = stmts[i]
            nxt = stmts[i + 1] if i + 1 < len(stmts) else None
            if isinstance(s, (Load, Xchg, CmpXchg)) and isinstance(nxt, Assume):
                rep = _rewrite_pair(s, nxt, uses)
                if rep is not None:
                    out += rep
                    added |= {x.dst for x in rep if isinstance(x, Assign)}
                    i += 2
                    continue
            out.append(s)
            i += 1
        blocks.append(BasicBlock(blk.label, blk.phis, tuple(out), blk.term))
    return thread.replace_blocks(blocks), added


# ---------------------------------------------------------------------------
# Control-flow cleanup
# ---------------------------------------------------------------------------


def _fact(s) -> Optional[Conjunct]:
    f: Optional[Fpc] = None
    if isinstance(s, (LoadAwait, XchgAwait)) and s.dst is not None and isinstance(s.rhs, Const):
        f = cond_dnf(BinOp(s.op, Reg(s.dst), s.rhs))
    elif isinstance(s, Assign) and isinstance(s.value, Const):
        f = cond_dnf(BinOp("==", Reg(s.dst), s.value))
    elif isinstance(s, Assume):
        f = cond_dnf(s.cond)
    if f is None or len(f.conjuncts) != 1:
        return None
    return f.conjuncts[0]


def _decide(cond, facts: Conjunct) -> Optional[bool]:
    d = cond_dnf(cond)
    if d.is_false():
        return False
    if d.is_true():
        return True
    if all(facts.conj(c) is None for c in d.conjuncts):
        return False
    if any(facts.implies(c) for c in d.conjuncts):
        return True
    return None


def fold_branches(thread: ThreadCfg) -> tuple:
    info = ir.build_cfg_info(thread)
    blocks = thread.block_map()
    at_end: dict = {}
    changed = False
    out = dict(blocks)
    for b in info.rpo:
        idom = info.idom.get(b)
        facts = at_end[idom] if idom is not None else Conjunct()
        for s in blocks[b].stmts:
            f = _fact(s)
            if f is not None:
                nf = facts.conj(f)
                facts = nf if nf is not None else facts
        at_end[b] = facts
        term = blocks[b].term
        if isinstance(term, Branch):
            verdict = True if term.then == term.orelse else _decide(term.cond, facts)
            if verdict is not None:
                tgt = term.then if verdict else term.orelse
                out[b] = BasicBlock(b, blocks[b].phis, blocks[b].stmts, Goto(tgt))
                changed = True
    return thread.replace_blocks(out[b.label] for b in thread.blocks), changed


def _preds(blocks) -> dict:
    preds = {b.label: [] for b in blocks}
    for b in blocks:
        for t in ir.term_succs(b.term):
            if b.label not in preds[t]:
                preds[t].append(b.label)
    return preds


def prune(thread: ThreadCfg) -> ThreadCfg:
    """Drop unreachable blocks, fix phis, merge single-predecessor goto chains."""
    blocks = list(thread.blocks)
    while True:
        bmap = {b.label: b for b in blocks}
        entry = blocks[0].label
        seen = {entry}
        work = [entry]
        while work:
            for t in ir.term_succs(bmap[work.pop()].term):
                if t not in seen:
                    seen.add(t)
                    work.append(t)
        blocks = [b for b in blocks if b.label in seen]
        preds = _preds(blocks)
        fixed = []
        for b in blocks:
            srcs_ok = set(preds[b.label])
            phis = []
            assigns = []
            for ph in b.phis:
                src = tuple((l, a) for l, a in ph.sources if l in srcs_ok)
                if len(preds[b.label]) == 1 and b.label != entry:
                    assigns.append(Assign(ph.dst, src[0][1]))
                else:
                    phis.append(ir.Phi(ph.dst, src))
            fixed.append(BasicBlock(b.label, tuple(phis), tuple(assigns) + b.stmts, b.term))
        blocks = fixed
        merged = False
        for idx, a in enumerate(blocks):
            if not isinstance(a.term, Goto):
                continue
            tgt = a.term.target
            if tgt == a.label or tgt == entry or preds[tgt] != [a.label]:
                continue
            b = next(x for x in blocks if x.label == tgt)
            new_a = BasicBlock(a.label, a.phis, a.stmts + b.stmts, b.term)
            rest = []
            for x in blocks:
                if x.label == tgt:
                    continue
                if x.label == a.label:
                    x = new_a
                phis = tuple(ir.Phi(ph.dst, tuple((a.label if l == tgt else l, v) for l, v in ph.sources))
                             for ph in x.phis)
                rest.append(BasicBlock(x.label, phis, x.stmts, x.term))
            blocks = rest
            merged = True
            break
        if not merged:
            return thread.replace_blocks(blocks)


def _drop_dead(thread: ThreadCfg, removable: set) -> ThreadCfg:
    while True:
        uses = register_uses(thread)
        blocks = []
        changed = False
        for blk in thread.blocks:
            stmts = []
            for s in blk.stmts:
                if isinstance(s, LoadAwait) and not uses.get(s.dst):
                    s = Await(s.var, s.op, s.rhs)
                    changed = True
                elif isinstance(s, XchgAwait) and s.dst is not None and not uses.get(s.dst):
                    s = XchgAwait(None, s.var, s.op, s.rhs, s.new)
                    changed = True
                elif isinstance(s, Assign) and s.dst in removable and not uses.get(s.dst):
                    changed = True
                    continue
                stmts.append(s)
            blocks.append(BasicBlock(blk.label, blk.phis, tuple(stmts), blk.term))
        thread = thread.replace_blocks(blocks)
        if not changed:
            return thread


def rewrite_assume_to_await(thread: ThreadCfg, shared=None) -> ThreadCfg:
    """Rewrite ``load; assume`` pairs into awaits and simplify the result."""
    thread, added = rewrite_statements(thread)
    while True:
        thread, changed = fold_branches(thread)
        thread = prune(thread)
        if not changed:
            break
    return _drop_dead(thread, added)
