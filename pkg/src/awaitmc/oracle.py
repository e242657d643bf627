"""Brute-force ground truth for small programs.

Two enumeration strategies are provided:

``enumerate_maximal``
    plain depth-first enumeration of every maximal interleaving;
``enumerate_classes``
    breadth-first search over *prefix classes*: prefixes with the same
    canonical happens-before form reach the same state, so only one
    representative of each is extended.  It yields exactly the classes the
    full enumeration partitions into, at a fraction of the cost.

Happens-before here is computed by bitset closure over the direct ordering
rules and is independent of the vector clocks used by the explorer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import interp
from .hb import BASELINE, ConflictPolicy, conflicts
from .interp import Execution


class OracleLimitExceeded(Exception):
    """The program is too large for exhaustive enumeration."""


# ---------------------------------------------------------------------------
# Canonical forms
# ---------------------------------------------------------------------------


def _ordered(a, b, pol: ConflictPolicy) -> bool:
    if a.thread == b.thread:
        return True
    if a.kind == "spawn" and a.target == b.thread:
        return True
    if b.kind == "join" and b.target == a.thread:
        return True
    return conflicts(a, b, pol)


def closure_preds(events, pol: ConflictPolicy) -> list:
    """For each position, the bitset of positions that happen before it."""
    preds = []
    for j, ej in enumerate(events):
        acc = 0
        for i in range(j):
            if _ordered(events[i], ej, pol):
                acc |= preds[i] | (1 << i)
        preds.append(acc)
    return preds


def canonical_form(events, pol: ConflictPolicy = BASELINE) -> tuple:
    """Sorted event descriptors plus the sorted transitive-reduction edges."""
    preds = closure_preds(events, pol)
    edges = []
    for j, pj in enumerate(preds):
        covered = 0
        m = pj
        while m:
            low = m & -m
            k = low.bit_length() - 1
            covered |= preds[k]
            m ^= low
        direct = pj & ~covered
        while direct:
            low = direct & -direct
            i = low.bit_length() - 1
            edges.append((events[i].id, events[j].id))
            direct ^= low
    evs = tuple(sorted((e.thread, e.index, e.block, e.pos, e.kind) for e in events))
    return evs, tuple(sorted(edges))


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def _machine(p, unroll, max_steps):
    if isinstance(p, interp.Machine):
        return p
    return interp.Machine(p, unroll=unroll, max_steps=max_steps)


def enumerate_maximal(p, unroll: Optional[int] = None, limit: int = 200_000,
                      max_steps: int = interp.DEFAULT_MAX_STEPS) -> list:
    """Every maximal interleaving, in lexicographic schedule order."""
    m = _machine(p, unroll, max_steps)
    out: list = []
    stack = [(interp.initial_state(m), ())]
    while stack:
        s, evs = stack.pop()
        en = interp.enabled(s)
        if not en:
            out.append(Execution(evs, s, m.program))
            if len(out) > limit:
                raise OracleLimitExceeded(f"more than {limit} maximal executions")
            continue
        for t in reversed(en):
            s2, e = interp.step(s, t)
            stack.append((s2, evs + (e,)))
    return out


@dataclass
class ClassInfo:
    key: tuple
    schedule: tuple
    members: int
    blocked: bool
    failed_assert: bool = False
    end_state: Optional[interp.ExecState] = None


@dataclass
class ClassPartition:
    classes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def complete(self) -> int:
        return sum(1 for c in self.classes if not c.blocked)

    @property
    def blocked(self) -> int:
        return sum(1 for c in self.classes if c.blocked)

    def keys(self) -> set:
        return {c.key for c in self.classes}


def _is_blocked(s: interp.ExecState) -> bool:
    return any(ts.status != interp.EXITED for ts in s.threads)


def partition_classes(execs, pol: ConflictPolicy = BASELINE) -> ClassPartition:
    """Group executions by canonical happens-before form."""
    by_key: dict = {}
    order = []
    for ex in execs:
        key = canonical_form(ex.events, pol)
        info = by_key.get(key)
        if info is None:
            info = ClassInfo(key, ex.schedule, 0, _is_blocked(ex.end_state),
                             bool(ex.end_state.failures), ex.end_state)
            by_key[key] = info
            order.append(key)
        info.members += 1
    classes = sorted((by_key[k] for k in order), key=lambda c: c.schedule)
    return ClassPartition(classes)


def enumerate_classes(p, pol: ConflictPolicy = BASELINE, unroll: Optional[int] = None,
                      limit: int = 200_000, max_steps: int = interp.DEFAULT_MAX_STEPS) -> ClassPartition:
    """Classes of maximal executions via search over deduplicated prefixes."""
    m = _machine(p, unroll, max_steps)
    # a prefix is (state, events, closure bitsets); its key is the pair of
    # frozensets (event descriptors, reduction edges).  Appending an event only
    # adds reduction edges that end in it, so keys extend incrementally.
    empty = (frozenset(), frozenset())
    frontier = {empty: (interp.initial_state(m), (), ())}
    finals: dict = {}
    seen = 0
    while frontier:
        nxt: dict = {}
        for key in sorted(frontier, key=lambda k: [e.thread for e in frontier[k][1]]):
            s, evs, preds = frontier[key]
            en = interp.enabled(s)
            if not en:
                ckey = canonical_form(evs, pol)
                info = finals.get(ckey)
                if info is None:
                    finals[ckey] = ClassInfo(ckey, tuple(e.thread for e in evs), 1, _is_blocked(s),
                                             bool(s.failures), s)
                else:
                    info.members += 1
                continue
            for t in en:
                s2, e = interp.step(s, t)
                pj = 0
                for i, ei in enumerate(evs):
                    if _ordered(ei, e, pol):
                        pj |= preds[i] | (1 << i)
                covered = 0
                mbits = pj
                while mbits:
                    low = mbits & -mbits
                    covered |= preds[low.bit_length() - 1]
                    mbits ^= low
                direct = pj & ~covered
                new_edges = []
                while direct:
                    low = direct & -direct
                    new_edges.append((evs[low.bit_length() - 1].id, e.id))
                    direct ^= low
                k2 = (key[0] | {(e.thread, e.index, e.block, e.pos, e.kind)}, key[1].union(new_edges))
                if k2 not in nxt:
                    nxt[k2] = (s2, evs + (e,), preds + (pj,))
                    seen += 1
                    if seen > limit:
                        raise OracleLimitExceeded(f"more than {limit} prefix classes")
        frontier = nxt
    classes = sorted(finals.values(), key=lambda c: c.schedule)
    return ClassPartition(classes)


# ---------------------------------------------------------------------------
# Audit
# ---------------------------------------------------------------------------


@dataclass
class OracleVerdict:
    correct: bool
    optimal: bool
    mismatches: list
    explored: int
    classes: int

    @property
    def ok(self) -> bool:
        return self.correct and self.optimal


def audit(p, pol: ConflictPolicy, report, unroll: Optional[int] = None,
          partition: Optional[ClassPartition] = None, method: str = "classes",
          limit: int = 200_000) -> OracleVerdict:
    """Compare explored executions (``report.executions``) against the oracle."""
    if report.executions is None:
        raise ValueError("audit needs a report produced with keep_traces=True")
    if partition is None:
        if method == "full":
            partition = partition_classes(enumerate_maximal(p, unroll=unroll, limit=limit), pol)
        else:
            partition = enumerate_classes(p, pol, unroll=unroll, limit=limit)
    hits: dict = {c.key: 0 for c in partition.classes}
    mismatches = []
    for ex in report.executions:
        key = canonical_form(ex.events, pol)
        if key not in hits:
            mismatches.append(("unknown-class", ex.schedule))
            hits[key] = 1
            continue
        hits[key] += 1
    by_key = {c.key: c for c in partition.classes}
    correct = not any(m[0] == "unknown-class" for m in mismatches)
    optimal = True
    for key, n in hits.items():
        if key not in by_key:
            continue
        if n == 0:
            correct = False
            mismatches.append(("missed", by_key[key].schedule))
        elif n > 1:
            optimal = False
            mismatches.append(("duplicate", by_key[key].schedule, n))
    if report.incomplete:
        correct = False
        mismatches.append(("incomplete", report.incomplete_reason))
    return OracleVerdict(correct, optimal, mismatches, len(report.executions), len(partition))
