"""SSA control-flow-graph IR for small concurrent programs.

Programs are immutable trees of frozen dataclasses, so they hash, compare
structurally and can be shared freely.  Thread ids are the positions of the
threads in ``Program.threads``; thread 0 is the entry thread.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1


def wrap64(v: int) -> int:
    """Wrap an integer into signed 64-bit range."""
    return ((v + (1 << 63)) & ((1 << 64) - 1)) - (1 << 63)


class IRError(Exception):
    """Raised for structurally invalid IR (e.g. irreducible control flow)."""


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

RELOPS = ("==", "!=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*")
LOGIC_OPS = ("&&", "||")

NEGATED_RELOP = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}
SWAPPED_RELOP = {"==": "==", "!=": "!=", "<": ">", ">": "<", "<=": ">=", ">=": "<="}


@dataclass(frozen=True)
class Reg:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class UnOp:
    op: str  # "-" or "!"
    arg: "Expr"


Atom = Union[Reg, Const]
Expr = Union[Reg, Const, BinOp, UnOp]

TRUE = Const(1)
FALSE = Const(0)


def compare(op: str, a: int, b: int) -> bool:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise IRError(f"unknown relational operator {op!r}")


def eval_expr(e: Expr, regs) -> int:
    """Evaluate ``e`` given a mapping from register names to values."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Reg):
        return regs[e.name]
    if isinstance(e, UnOp):
        v = eval_expr(e.arg, regs)
        if e.op == "-":
            return wrap64(-v)
        return 0 if v else 1
    op = e.op
    if op == "&&":
        return 1 if (eval_expr(e.lhs, regs) and eval_expr(e.rhs, regs)) else 0
    if op == "||":
        return 1 if (eval_expr(e.lhs, regs) or eval_expr(e.rhs, regs)) else 0
    a = eval_expr(e.lhs, regs)
    b = eval_expr(e.rhs, regs)
    if op == "+":
        return wrap64(a + b)
    if op == "-":
        return wrap64(a - b)
    if op == "*":
        return wrap64(a * b)
    return 1 if compare(op, a, b) else 0


def expr_regs(e: Expr) -> Iterator[str]:
    if isinstance(e, Reg):
        yield e.name
    elif isinstance(e, BinOp):
        yield from expr_regs(e.lhs)
        yield from expr_regs(e.rhs)
    elif isinstance(e, UnOp):
        yield from expr_regs(e.arg)


def subst_expr(e: Expr, mapping: dict) -> Expr:
    """Replace registers by atoms according to ``mapping`` (name -> Atom)."""
    if isinstance(e, Reg):
        return mapping.get(e.name, e)
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(e.lhs, mapping), subst_expr(e.rhs, mapping))
    if isinstance(e, UnOp):
        return UnOp(e.op, subst_expr(e.arg, mapping))
    return e


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Load:
    dst: str
    var: str


@dataclass(frozen=True)
class Store:
    var: str
    value: Expr


@dataclass(frozen=True)
class Faa:
    """Atomic ``var +:= value``; the old value goes to ``dst`` if present."""

    dst: Optional[str]
    var: str
    value: Expr


@dataclass(frozen=True)
class Xchg:
    dst: str
    var: str
    value: Expr


@dataclass(frozen=True)
class CmpXchg:
    """``dst`` receives 1 on success (value swapped in), 0 otherwise."""

    dst: str
    var: str
    expected: Expr
    new: Expr


@dataclass(frozen=True)
class Assume:
    cond: Expr


@dataclass(frozen=True)
class Await:
    var: str
    op: str
    rhs: Atom


@dataclass(frozen=True)
class LoadAwait:
    dst: str
    var: str
    op: str
    rhs: Atom


@dataclass(frozen=True)
class XchgAwait:
    """Wait until ``var op rhs`` holds, then atomically swap in ``new``."""

    dst: Optional[str]
    var: str
    op: str
    rhs: Atom
    new: Expr


@dataclass(frozen=True)
class Assign:
    dst: str
    value: Expr


@dataclass(frozen=True)
class Spawn:
    thread: str


@dataclass(frozen=True)
class Join:
    thread: str


@dataclass(frozen=True)
class Assert:
    cond: Expr


Statement = Union[
    Load, Store, Faa, Xchg, CmpXchg, Assume, Await, LoadAwait, XchgAwait,
    Assign, Spawn, Join, Assert,
]

AWAIT_FORMS = (Await, LoadAwait, XchgAwait)
RMW_FORMS = (Faa, Xchg, CmpXchg, XchgAwait)


def stmt_def(s: Statement) -> Optional[str]:
    """The register defined by ``s`` (SSA target), if any."""
    return getattr(s, "dst", None)


def stmt_uses(s: Statement) -> list[str]:
    """Registers read by ``s`` in evaluation order (duplicates kept)."""
    if isinstance(s, (Store, Faa, Xchg)):
        return list(expr_regs(s.value))
    if isinstance(s, CmpXchg):
        return list(expr_regs(s.expected)) + list(expr_regs(s.new))
    if isinstance(s, (Assume, Assert)):
        return list(expr_regs(s.cond))
    if isinstance(s, (Await, LoadAwait)):
        return list(expr_regs(s.rhs))
    if isinstance(s, XchgAwait):
        return list(expr_regs(s.rhs)) + list(expr_regs(s.new))
    if isinstance(s, Assign):
        return list(expr_regs(s.value))
    return []


def stmt_var(s: Statement) -> Optional[str]:
    """Shared variable accessed by ``s``, if any."""
    return getattr(s, "var", None)


# ---------------------------------------------------------------------------
# Blocks, threads, programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Phi:
    dst: str
    sources: tuple  # tuple of (label, Atom), sorted by label order of appearance

    def source_for(self, label: str) -> Atom:
        for lbl, atom in self.sources:
            if lbl == label:
                return atom
        raise KeyError(label)


@dataclass(frozen=True)
class Goto:
    target: str


@dataclass(frozen=True)
class Branch:
    cond: Expr
    then: str
    orelse: str


@dataclass(frozen=True)
class Exit:
    pass


Terminator = Union[Goto, Branch, Exit]


def term_succs(t: Terminator) -> tuple:
    if isinstance(t, Goto):
        return (t.target,)
    if isinstance(t, Branch):
        return (t.then, t.orelse)
    return ()


def term_uses(t: Terminator) -> list[str]:
    if isinstance(t, Branch):
        return list(expr_regs(t.cond))
    return []


@dataclass(frozen=True)
class BasicBlock:
    label: str
    phis: tuple = ()
    stmts: tuple = ()
    term: Terminator = field(default_factory=Exit)

    @property
    def id(self) -> str:
        return self.label


@dataclass(frozen=True)
class ThreadCfg:
    name: str
    blocks: tuple

    @property
    def entry_block(self) -> str:
        return self.blocks[0].label

    @property
    def registers(self) -> frozenset:
        out = set()
        for b in self.blocks:
            out.update(p.dst for p in b.phis)
            for s in b.stmts:
                d = stmt_def(s)
                if d is not None:
                    out.add(d)
        return frozenset(out)

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def block_map(self) -> dict:
        return {b.label: b for b in self.blocks}

    def replace_blocks(self, blocks: Iterable[BasicBlock]) -> "ThreadCfg":
        return ThreadCfg(self.name, tuple(blocks))


@dataclass(frozen=True)
class Program:
    globals: tuple  # tuple of (name, initial value)
    threads: tuple  # tuple of ThreadCfg

    @property
    def shared_vars(self) -> dict:
        return dict(self.globals)

    @property
    def entry_thread(self) -> int:
        return 0

    def thread_index(self, name: str) -> int:
        for i, t in enumerate(self.threads):
            if t.name == name:
                return i
        raise KeyError(name)

    def spawned_threads(self) -> frozenset:
        """Names of threads that are the target of some ``spawn``."""
        out = set()
        for t in self.threads:
            for b in t.blocks:
                for s in b.stmts:
                    if isinstance(s, Spawn):
                        out.add(s.thread)
        return frozenset(out)

    def replace_thread(self, idx: int, t: ThreadCfg) -> "Program":
        ts = list(self.threads)
        ts[idx] = t
        return Program(self.globals, tuple(ts))


# ---------------------------------------------------------------------------
# CFG analyses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Loop:
    header: str
    body: frozenset
    backedges: tuple  # (src, header) pairs into this header
    internal_backedges: tuple  # backedges inside the body not targeting header
    parent: Optional[str] = None  # header of the innermost enclosing loop
    depth: int = 1

    def __contains__(self, label: str) -> bool:
        return label in self.body


@dataclass(frozen=True)
class CfgInfo:
    entry: str
    preds: dict  # label -> tuple of predecessor labels (order of first appearance)
    succs: dict
    rpo: tuple  # reverse postorder of reachable blocks
    idom: dict  # label -> immediate dominator label (entry maps to None)
    backedges: frozenset
    loops: tuple  # ordered innermost-first

    def dominates(self, a: str, b: str) -> bool:
        """True if block ``a`` dominates block ``b`` (reflexive)."""
        cur: Optional[str] = b
        while cur is not None:
            if cur == a:
                return True
            cur = self.idom.get(cur)
        return False

    def loop_of(self, header: str) -> Loop:
        for lp in self.loops:
            if lp.header == header:
                return lp
        raise KeyError(header)

    def loops_containing(self, label: str) -> list:
        return [lp for lp in self.loops if label in lp.body]

    def rpo_index(self) -> dict:
        return {b: i for i, b in enumerate(self.rpo)}


def _succs_preds(t: ThreadCfg):
    succs = {b.label: term_succs(b.term) for b in t.blocks}
    preds: dict = {b.label: [] for b in t.blocks}
    for b in t.blocks:
        for s in succs[b.label]:
            if s in preds and b.label not in preds[s]:
                preds[s].append(b.label)
    return succs, {k: tuple(v) for k, v in preds.items()}


def _rpo(entry: str, succs: dict) -> list:
    seen = {entry}
    order: list = []
    stack = [(entry, iter(succs.get(entry, ())))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for nxt in it:
            if nxt not in seen and nxt in succs:
                seen.add(nxt)
                stack.append((nxt, iter(succs[nxt])))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    order.reverse()
    return order


def _dominators(entry: str, rpo: list, preds: dict) -> dict:
    """Cooper-Harvey-Kennedy iterative immediate dominators."""
    index = {b: i for i, b in enumerate(rpo)}
    idom: dict = {entry: entry}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for b in rpo[1:]:
            ps = [p for p in preds[b] if p in idom]
            if not ps:
                continue
            new = ps[0]
            for p in ps[1:]:
                new = intersect(p, new)
            if idom.get(b) != new:
                idom[b] = new
                changed = True
    out = {b: idom[b] for b in rpo}
    out[entry] = None
    return out


def build_cfg_info(t: ThreadCfg) -> CfgInfo:
    """Dominators, backedges and natural loops of a thread.

    Raises ``IRError`` naming the offending edge when a retreating edge's
    target does not dominate its source (irreducible control flow).
    """
    succs, preds = _succs_preds(t)
    entry = t.entry_block
    rpo = _rpo(entry, succs)
    reach = set(rpo)
    idom = _dominators(entry, rpo, preds)
    index = {b: i for i, b in enumerate(rpo)}

    def dom(a: str, b: str) -> bool:
        cur: Optional[str] = b
        while cur is not None:
            if cur == a:
                return True
            cur = idom[cur]
        return False

    backedges = set()
    for a in rpo:
        for b in succs[a]:
            if b not in reach:
                continue
            if dom(b, a):
                backedges.add((a, b))
            elif index[b] <= index[a]:
                raise IRError(
                    f"thread {t.name}: irreducible control flow at edge {a} -> {b}"
                )

    # natural loops; backedges to one header share a loop
    headers: dict = {}
    for a, h in sorted(backedges, key=lambda e: (index[e[1]], index[e[0]])):
        headers.setdefault(h, []).append((a, h))
    bodies: dict = {}
    for h, edges in headers.items():
        body = {h}
        work = [a for a, _ in edges]
        while work:
            n = work.pop()
            if n in body:
                continue
            body.add(n)
            work.extend(p for p in preds[n] if p in reach)
        bodies[h] = frozenset(body)

    # nesting: parent = smallest strictly containing body
    parent: dict = {}
    for h, body in bodies.items():
        best = None
        for h2, body2 in bodies.items():
            if h2 != h and h in body2 and body < body2:
                if best is None or len(body2) < len(bodies[best]):
                    best = h2
        parent[h] = best

    def depth(h: str) -> int:
        d = 1
        while parent[h] is not None:
            h = parent[h]
            d += 1
        return d

    loops = []
    for h, body in bodies.items():
        internal = tuple(
            sorted(
                ((a, b) for (a, b) in backedges if a in body and b in body and b != h),
                key=lambda e: (index[e[0]], index[e[1]]),
            )
        )
        loops.append(
            Loop(
                header=h,
                body=body,
                backedges=tuple(sorted(headers[h], key=lambda e: index[e[0]])),
                internal_backedges=internal,
                parent=parent[h],
                depth=depth(h),
            )
        )
    loops.sort(key=lambda lp: (-lp.depth, index[lp.header]))
    return CfgInfo(
        entry=entry,
        preds=preds,
        succs=succs,
        rpo=tuple(rpo),
        idom=idom,
        backedges=frozenset(backedges),
        loops=tuple(loops),
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    thread: Optional[str]
    block: Optional[str]
    index: Optional[int]  # statement index in block, None for block-level
    kind: str
    message: str

    def __str__(self) -> str:
        loc = []
        if self.thread is not None:
            loc.append(f"thread {self.thread}")
        if self.block is not None:
            loc.append(f"block {self.block}")
        if self.index is not None:
            loc.append(f"stmt {self.index}")
        where = ", ".join(loc)
        return f"{where}: {self.kind}: {self.message}" if where else f"{self.kind}: {self.message}"


def _expr_diags(e: Expr, sink: list, where: tuple, regs: set, globals_: set) -> None:
    for r in expr_regs(e):
        if r in globals_:
            sink.append(Diagnostic(*where, "shared-in-expr",
                                   f"shared variable {r} used inside an expression"))
        elif r not in regs:
            sink.append(Diagnostic(*where, "undefined-register", f"register {r} is never defined"))


def validate_program(p: Program) -> list:
    """Return one ``Diagnostic`` per violated IR invariant (empty if valid)."""
    diags: list = []
    if not p.threads:
        diags.append(Diagnostic(None, None, None, "no-threads", "no threads declared"))
        return diags
    gnames = [g for g, _ in p.globals]
    gset = set(gnames)
    if len(gset) != len(gnames):
        diags.append(Diagnostic(None, None, None, "duplicate-global", "duplicate global declaration"))
    tnames = [t.name for t in p.threads]
    if len(set(tnames)) != len(tnames):
        diags.append(Diagnostic(None, None, None, "duplicate-thread", "duplicate thread name"))
    tset = set(tnames)
    for t in p.threads:
        diags.extend(_validate_thread(t, gset, tset, p.threads[0].name))
    return diags


def _validate_thread(t: ThreadCfg, gset: set, tset: set, entry_name: str) -> list:
    diags: list = []
    name = t.name
    if not t.blocks:
        return [Diagnostic(name, None, None, "empty-thread", "thread has no blocks")]
    labels = [b.label for b in t.blocks]
    lset = set(labels)
    if len(lset) != len(labels):
        diags.append(Diagnostic(name, None, None, "duplicate-label", "duplicate block label"))

    # SSA: collect definitions
    defs: dict = {}
    for b in t.blocks:
        for i, ph in enumerate(b.phis):
            if ph.dst in defs:
                diags.append(Diagnostic(name, b.label, None, "ssa",
                                        f"register {ph.dst} assigned more than once"))
            defs.setdefault(ph.dst, (b.label, -1 - i))
        for i, s in enumerate(b.stmts):
            d = stmt_def(s)
            if d is None:
                continue
            if d in gset:
                diags.append(Diagnostic(name, b.label, i, "register-shadows-global",
                                        f"register {d} has the name of a shared variable"))
            if d in defs:
                diags.append(Diagnostic(name, b.label, i, "ssa",
                                        f"register {d} assigned more than once"))
            defs.setdefault(d, (b.label, i))
    regs = set(defs)

    bad_edge = False
    for b in t.blocks:
        for s in term_succs(b.term):
            if s not in lset:
                bad_edge = True
                diags.append(Diagnostic(name, b.label, None, "unknown-label",
                                        f"jump to undefined block {s}"))
        if isinstance(b.term, Branch):
            _expr_diags(b.term.cond, diags, (name, b.label, None), regs, gset)

    # per-statement checks
    for b in t.blocks:
        for i, s in enumerate(b.stmts):
            where = (name, b.label, i)
            v = stmt_var(s)
            if v is not None and v not in gset:
                diags.append(Diagnostic(*where, "undeclared-global",
                                        f"shared variable {v} is not declared"))
            for r in stmt_uses(s):
                if r in gset:
                    diags.append(Diagnostic(*where, "shared-in-expr",
                                            f"shared variable {r} used inside an expression"))
                elif r not in regs:
                    diags.append(Diagnostic(*where, "undefined-register",
                                            f"register {r} is never defined"))
            if isinstance(s, (Await, LoadAwait, XchgAwait)) and s.op not in RELOPS:
                diags.append(Diagnostic(*where, "bad-await", f"unknown relation {s.op}"))
            if isinstance(s, (Spawn, Join)):
                if s.thread not in tset:
                    diags.append(Diagnostic(*where, "unknown-thread",
                                            f"thread {s.thread} does not exist"))
                elif isinstance(s, Spawn) and s.thread == entry_name:
                    diags.append(Diagnostic(*where, "spawn-entry",
                                            "the entry thread cannot be spawned"))
                elif s.thread == name:
                    diags.append(Diagnostic(*where, "self-reference",
                                            f"thread {name} cannot {type(s).__name__.lower()} itself"))
    if bad_edge:
        return diags

    succs, preds = _succs_preds(t)
    entry = t.entry_block
    if t.blocks[0].phis:
        diags.append(Diagnostic(name, entry, None, "phi-in-entry",
                                "the entry block cannot contain phi nodes"))
    for b in t.blocks:
        for ph in b.phis:
            srcs = [lbl for lbl, _ in ph.sources]
            if len(set(srcs)) != len(srcs) or set(srcs) != set(preds[b.label]):
                diags.append(Diagnostic(name, b.label, None, "phi-coverage",
                                        f"phi for {ph.dst} must list exactly the predecessors "
                                        f"{sorted(preds[b.label])}"))
            for lbl, atom in ph.sources:
                if isinstance(atom, Reg) and atom.name not in regs:
                    diags.append(Diagnostic(name, b.label, None, "undefined-register",
                                            f"register {atom.name} is never defined"))
    try:
        info = build_cfg_info(t)
    except IRError as exc:
        diags.append(Diagnostic(name, None, None, "irreducible", str(exc)))
        return diags

    if diags:
        return diags
    diags.extend(_check_dominance(t, info, defs))
    return diags


def _check_dominance(t: ThreadCfg, info: CfgInfo, defs: dict) -> list:
    """Every use must be dominated by its definition (phi uses: at the pred's end)."""
    diags: list = []
    reach = set(info.rpo)

    def def_reaches(reg: str, block: str, idx: int) -> bool:
        dblock, didx = defs[reg]
        if dblock == block:
            return didx < idx
        return dblock in reach and info.dominates(dblock, block)

    for b in t.blocks:
        if b.label not in reach:
            continue
        for ph in b.phis:
            for lbl, atom in ph.sources:
                if isinstance(atom, Reg) and lbl in reach and not def_reaches(atom.name, lbl, 1 << 30):
                    diags.append(Diagnostic(t.name, b.label, None, "use-before-def",
                                            f"phi source {atom.name} from {lbl} is not available there"))
        for i, s in enumerate(b.stmts):
            for r in stmt_uses(s):
                if not def_reaches(r, b.label, i):
                    diags.append(Diagnostic(t.name, b.label, i, "use-before-def",
                                            f"register {r} is not defined on every path to this use"))
        for r in term_uses(b.term):
            if not def_reaches(r, b.label, 1 << 30):
                diags.append(Diagnostic(t.name, b.label, None, "use-before-def",
                                        f"register {r} is not defined on every path to this branch"))
    return diags


def register_uses(t: ThreadCfg) -> dict:
    """Map each register to the number of places that read it."""
    counts: dict = {}
    for b in t.blocks:
        for ph in b.phis:
            for _, atom in ph.sources:
                if isinstance(atom, Reg):
                    counts[atom.name] = counts.get(atom.name, 0) + 1
        for s in b.stmts:
            for r in stmt_uses(s):
                counts[r] = counts.get(r, 0) + 1
        for r in term_uses(b.term):
            counts[r] = counts.get(r, 0) + 1
    return counts


def impure_header_backedges(t: ThreadCfg, loop: Loop) -> frozenset:
    """Backedges along which some header phi carries a changed value.

    A phi is considered unchanged along a backedge when the incoming value
    is the phi's own register, or the same atom every loop-entry edge
    supplies.
    """
    header = t.block(loop.header)
    entries = [(lbl) for lbl, _ in (header.phis[0].sources if header.phis else ())
               if (lbl, loop.header) not in loop.backedges]
    out = set()
    for src, h in loop.backedges:
        for ph in header.phis:
            val = ph.source_for(src)
            if val == Reg(ph.dst):
                continue
            entry_vals = {ph.source_for(lbl) for lbl in entries}
            if len(entry_vals) == 1 and val in entry_vals:
                continue
            out.add((src, h))
            break
    return frozenset(out)
