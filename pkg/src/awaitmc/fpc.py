"""Purity conditions in disjunctive normal form over registers.

A :class:`Conjunct` keeps comparisons of a register against a constant as an
integer :class:`Range` per register (so ``a >= 4`` and ``a != 4`` combine to
``a > 4``) and any other comparison as a general :class:`Atom`.  An
:class:`Fpc` is a disjunction of conjuncts kept in a canonical order.

Simplifications applied by :func:`simplify`:

* same-register range intersection inside a conjunct (and dropping empty
  conjuncts),
* complement merge: two conjuncts that agree everywhere except on one
  register whose two ranges union to a single range are merged,
* subsumption: a conjunct that implies another one is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ir import (
    NEGATED_RELOP, RELOPS, SWAPPED_RELOP, BinOp, Const, Expr, Reg, UnOp, compare,
    eval_expr, expr_regs,
)

DNF_CAP = 64

_SYMBOL = {"==": "=", "!=": "≠", "<": "<", "<=": "≤", ">": ">", ">=": "≥"}


class DnfOverflow(Exception):
    """A condition grew beyond the disjunct cap."""


# ---------------------------------------------------------------------------
# Ranges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Range:
    """Integer constraint ``lo ⋈ r ⋈ hi`` minus a set of excluded values.

    Bounds carry a strictness flag purely to keep the written form close to
    how the condition arose (``a > 4`` rather than ``a ≥ 5``).
    """

    lo: Optional[int] = None
    lo_strict: bool = False
    hi: Optional[int] = None
    hi_strict: bool = False
    excluded: frozenset = frozenset()

    # effective inclusive integer bounds
    @property
    def lo_int(self) -> Optional[int]:
        if self.lo is None:
            return None
        return self.lo + 1 if self.lo_strict else self.lo

    @property
    def hi_int(self) -> Optional[int]:
        if self.hi is None:
            return None
        return self.hi - 1 if self.hi_strict else self.hi

    @staticmethod
    def of(op: str, c: int) -> "Range":
        if op == "==":
            return Range(c, False, c, False)
        if op == "!=":
            return Range(excluded=frozenset([c]))
        if op == "<":
            return Range(hi=c, hi_strict=True)
        if op == "<=":
            return Range(hi=c)
        if op == ">":
            return Range(lo=c, lo_strict=True)
        return Range(lo=c)

    def contains(self, v: int) -> bool:
        lo, hi = self.lo_int, self.hi_int
        if lo is not None and v < lo:
            return False
        if hi is not None and v > hi:
            return False
        return v not in self.excluded

    def is_empty(self) -> bool:
        lo, hi = self.lo_int, self.hi_int
        if lo is not None and hi is not None:
            if lo > hi:
                return True
            if hi - lo < len(self.excluded) + 1:
                return all(v in self.excluded for v in range(lo, hi + 1))
        return False

    def is_full(self) -> bool:
        return self.lo is None and self.hi is None and not self.excluded

    def normalized(self) -> "Range":
        r = self
        changed = True
        while changed:
            changed = False
            lo, hi = r.lo_int, r.hi_int
            keep = frozenset(v for v in r.excluded
                             if (lo is None or v >= lo) and (hi is None or v <= hi))
            if keep != r.excluded:
                r = Range(r.lo, r.lo_strict, r.hi, r.hi_strict, keep)
                changed = True
            if lo is not None and lo in r.excluded:
                ex = r.excluded - {lo}
                r = Range(lo, True, r.hi, r.hi_strict, ex) if lo == r.lo else Range(lo + 1, False, r.hi, r.hi_strict, ex)
                changed = True
            hi = r.hi_int
            if hi is not None and hi in r.excluded:
                ex = r.excluded - {hi}
                r = Range(r.lo, r.lo_strict, hi, True, ex) if hi == r.hi else Range(r.lo, r.lo_strict, hi - 1, False, ex)
                changed = True
        if r.lo_int is not None and r.lo_int == r.hi_int and (r.lo_strict or r.hi_strict):
            v = r.lo_int
            r = Range(v, False, v, False, r.excluded)
        return r

    def intersect(self, other: "Range") -> "Range":
        lo, lo_s = self.lo, self.lo_strict
        if other.lo is not None and (lo is None or other.lo_int > self.lo_int):
            lo, lo_s = other.lo, other.lo_strict
        hi, hi_s = self.hi, self.hi_strict
        if other.hi is not None and (hi is None or other.hi_int < self.hi_int):
            hi, hi_s = other.hi, other.hi_strict
        return Range(lo, lo_s, hi, hi_s, self.excluded | other.excluded).normalized()

    def implies(self, other: "Range") -> bool:
        """Every value admitted by ``self`` is admitted by ``other``."""
        if self.is_empty():
            return True
        if other.lo is not None and (self.lo_int is None or self.lo_int < other.lo_int):
            return False
        if other.hi is not None and (self.hi_int is None or self.hi_int > other.hi_int):
            return False
        return all(not self.contains(v) for v in other.excluded)

    def union(self, other: "Range") -> Optional["Range"]:
        """The union when it is again a single range, else ``None``."""
        if self.implies(other):
            return other
        if other.implies(self):
            return self
        # complementary pair such as (a == 4, a != 4) or (a < 4, a >= 4)
        if self.excluded or other.excluded:
            if self.excluded and not other.excluded and self.lo is None and self.hi is None:
                rest = frozenset(v for v in self.excluded if not other.contains(v))
                return Range(excluded=rest).normalized()
            if other.excluded and not self.excluded and other.lo is None and other.hi is None:
                return other.union(self)
            return None
        a, b = (self, other) if (self.lo_int is None or (other.lo_int is not None and self.lo_int <= other.lo_int)) else (other, self)
        a_hi = a.hi_int
        if a_hi is None:
            return Range(a.lo, a.lo_strict).normalized()
        if b.lo_int is not None and b.lo_int > a_hi + 1:
            return None
        hi, hi_s = (b.hi, b.hi_strict) if b.hi is None or (b.hi_int > a_hi) else (a.hi, a.hi_strict)
        if b.hi is None:
            hi, hi_s = None, False
        return Range(a.lo, a.lo_strict, hi, hi_s).normalized()

    def atoms(self, reg: str) -> list:
        """Written form as ``(reg, op, value)`` triples."""
        out = []
        lo, hi = self.lo_int, self.hi_int
        if lo is not None and lo == hi:
            out.append((reg, "==", lo))
        else:
            if self.lo is not None:
                out.append((reg, ">" if self.lo_strict else ">=", self.lo))
            if self.hi is not None:
                out.append((reg, "<" if self.hi_strict else "<=", self.hi))
        for v in sorted(self.excluded):
            out.append((reg, "!=", v))
        return out


# ---------------------------------------------------------------------------
# Atoms, conjuncts, DNF
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """General comparison ``lhs op rhs`` that is not register-vs-constant."""

    op: str
    lhs: Expr
    rhs: Expr

    def regs(self) -> set:
        return set(expr_regs(self.lhs)) | set(expr_regs(self.rhs))


def _fmt(e: Expr) -> str:
    from .parser import format_expr

    return format_expr(e)


@dataclass(frozen=True)
class Conjunct:
    ranges: tuple = ()  # sorted (reg, Range) pairs, no full ranges
    atoms: frozenset = frozenset()
    floor: Optional[tuple] = None  # earliest insertion point (block, index)

    @staticmethod
    def make(ranges: dict, atoms=frozenset(), floor=None) -> Optional["Conjunct"]:
        items = []
        for r in sorted(ranges):
            rg = ranges[r].normalized()
            if rg.is_empty():
                return None
            if not rg.is_full():
                items.append((r, rg))
        return Conjunct(tuple(items), frozenset(atoms), floor)

    def range_map(self) -> dict:
        return dict(self.ranges)

    def regs(self) -> set:
        out = {r for r, _ in self.ranges}
        for a in self.atoms:
            out |= a.regs()
        return out

    def is_true(self) -> bool:
        return not self.ranges and not self.atoms

    def conj(self, other: "Conjunct") -> Optional["Conjunct"]:
        rm = self.range_map()
        for r, rg in other.ranges:
            rm[r] = rm[r].intersect(rg) if r in rm else rg
        atoms = self.atoms | other.atoms
        for a in atoms:
            if Atom(NEGATED_RELOP[a.op], a.lhs, a.rhs) in atoms:
                return None
        return Conjunct.make(rm, atoms, _later(self.floor, other.floor))

    def implies(self, other: "Conjunct") -> bool:
        if not other.atoms <= self.atoms:
            return False
        mine = self.range_map()
        for r, rg in other.ranges:
            if r not in mine or not mine[r].implies(rg):
                return False
        return True

    def with_floor(self, floor) -> "Conjunct":
        return Conjunct(self.ranges, self.atoms, floor)

    def triples(self) -> list:
        """All comparisons as ``(lhs, op, rhs)`` with expressions."""
        out = []
        for r, rg in self.ranges:
            for reg, op, v in rg.atoms(r):
                out.append((Reg(reg), op, Const(v)))
        for a in sorted(self.atoms, key=_atom_key):
            out.append((a.lhs, a.op, a.rhs))
        return out

    def render(self) -> str:
        if self.is_true():
            return "true"
        return " ∧ ".join(f"{_fmt(l)} {_SYMBOL[op]} {_fmt(r)}" for l, op, r in self.triples())

    def to_expr(self) -> Expr:
        parts = [BinOp(op, l, r) for l, op, r in self.triples()]
        if not parts:
            return Const(1)
        e = parts[0]
        for p in parts[1:]:
            e = BinOp("&&", e, p)
        return e

    def negated_expr(self) -> Expr:
        """``¬c`` as a disjunction of negated comparisons."""
        parts = [BinOp(NEGATED_RELOP[op], l, r) for l, op, r in self.triples()]
        if not parts:
            return Const(0)
        e = parts[0]
        for p in parts[1:]:
            e = BinOp("||", e, p)
        return e


def _atom_key(a: Atom) -> tuple:
    return (_fmt(a.lhs), a.op, _fmt(a.rhs))


def _later(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return max(a, b)


@dataclass(frozen=True)
class Fpc:
    conjuncts: tuple = ()

    @staticmethod
    def false() -> "Fpc":
        return Fpc(())

    @staticmethod
    def true() -> "Fpc":
        return Fpc((Conjunct(),))

    def is_false(self) -> bool:
        return not self.conjuncts

    def is_true(self) -> bool:
        return any(c.is_true() for c in self.conjuncts)

    def __len__(self) -> int:
        return len(self.conjuncts)

    def __or__(self, other: "Fpc") -> "Fpc":
        return simplify(self.conjuncts + other.conjuncts)

    def __and__(self, other: "Fpc") -> "Fpc":
        out = []
        for a in self.conjuncts:
            for b in other.conjuncts:
                c = a.conj(b)
                if c is not None:
                    out.append(c)
                    if len(out) > DNF_CAP * DNF_CAP:
                        raise DnfOverflow("conjunction too large")
        return simplify(out)

    def with_floor(self, floor) -> "Fpc":
        """Set the earliest insertion point on conjuncts that have none yet."""
        return Fpc(tuple(c if c.floor is not None else c.with_floor(floor) for c in self.conjuncts))

    def regs(self) -> set:
        out: set = set()
        for c in self.conjuncts:
            out |= c.regs()
        return out

    def render(self) -> str:
        if not self.conjuncts:
            return "[false]"
        return "[" + " ∨ ".join(c.render() for c in self.conjuncts) + "]"

    __str__ = render

    def evaluate(self, regs: dict) -> bool:
        return any(all(compare(op, eval_expr(l, regs), eval_expr(r, regs)) for l, op, r in c.triples())
                   for c in self.conjuncts)


def simplify(conjuncts) -> Fpc:
    cs = []
    seen = set()
    for c in conjuncts:
        if c is None:
            continue
        key = (c.ranges, c.atoms)
        if key in seen:
            # keep the later floor so the merged disjunct stays safe
            for i, d in enumerate(cs):
                if (d.ranges, d.atoms) == key:
                    cs[i] = d.with_floor(_later(d.floor, c.floor))
            continue
        seen.add(key)
        cs.append(c)
    changed = True
    while changed:
        changed = False
        # subsumption
        for i, c in enumerate(cs):
            if any(j != i and c.implies(d) for j, d in enumerate(cs)):
                winner = next(j for j, d in enumerate(cs) if j != i and c.implies(d))
                cs[winner] = cs[winner].with_floor(_later(cs[winner].floor, c.floor))
                del cs[i]
                changed = True
                break
        if changed:
            continue
        # complement merge on a single register
        for i in range(len(cs)):
            for j in range(i + 1, len(cs)):
                m = _merge(cs[i], cs[j])
                if m is not None:
                    cs[i] = m
                    del cs[j]
                    changed = True
                    break
            if changed:
                break
    if any(c.is_true() for c in cs):
        floor = None
        for c in cs:
            if c.is_true():
                floor = _later(floor, c.floor)
        cs = [Conjunct(floor=floor)]
    if len(cs) > DNF_CAP:
        raise DnfOverflow(f"more than {DNF_CAP} disjuncts")
    cs.sort(key=lambda c: (c.render(), c.floor or ()))
    return Fpc(tuple(cs))


def _merge(a: Conjunct, b: Conjunct) -> Optional[Conjunct]:
    if a.atoms != b.atoms:
        return None
    ra, rb = a.range_map(), b.range_map()
    keys = set(ra) | set(rb)
    diff = [r for r in keys if ra.get(r) != rb.get(r)]
    if len(diff) != 1:
        return None
    r = diff[0]
    u = ra.get(r, Range()).union(rb.get(r, Range()))
    if u is None:
        return None
    ra[r] = u
    return Conjunct.make(ra, a.atoms, _later(a.floor, b.floor))


# ---------------------------------------------------------------------------
# Conditions to DNF
# ---------------------------------------------------------------------------


def comparison(op: str, lhs: Expr, rhs: Expr) -> Fpc:
    """DNF of the single comparison ``lhs op rhs``."""
    if isinstance(lhs, Const) and not isinstance(rhs, Const):
        lhs, rhs, op = rhs, lhs, SWAPPED_RELOP[op]
    if isinstance(lhs, Const) and isinstance(rhs, Const):
        return Fpc.true() if compare(op, lhs.value, rhs.value) else Fpc.false()
    if lhs == rhs:
        return Fpc.true() if op in ("==", "<=", ">=") else Fpc.false()
    if isinstance(lhs, Reg) and isinstance(rhs, Const):
        c = Conjunct.make({lhs.name: Range.of(op, rhs.value)})
        return Fpc.false() if c is None else Fpc((c,))
    if op in ("==", "!=") and _fmt(lhs) > _fmt(rhs):
        lhs, rhs = rhs, lhs
    return Fpc((Conjunct(atoms=frozenset([Atom(op, lhs, rhs)])),))


def cond_dnf(e: Expr, positive: bool = True) -> Fpc:
    """DNF of ``e`` (or of its negation) read as a truth value."""
    if isinstance(e, UnOp) and e.op == "!":
        return cond_dnf(e.arg, not positive)
    if isinstance(e, BinOp) and e.op in ("&&", "||"):
        a, b = cond_dnf(e.lhs, positive), cond_dnf(e.rhs, positive)
        if (e.op == "&&") == positive:
            return a & b
        return a | b
    if isinstance(e, BinOp) and e.op in RELOPS:
        op = e.op if positive else NEGATED_RELOP[e.op]
        return comparison(op, e.lhs, e.rhs)
    if isinstance(e, Const):
        return Fpc.true() if bool(e.value) == positive else Fpc.false()
    return comparison("!=" if positive else "==", e, Const(0))


def substitute(c: Conjunct, mapping: dict) -> Optional[Conjunct]:
    """Replace registers by atoms; returns ``None`` if the result is false."""
    from .ir import subst_expr

    acc: Optional[Conjunct] = Conjunct(floor=c.floor)
    for l, op, r in c.triples():
        f = comparison(op, subst_expr(l, mapping), subst_expr(r, mapping))
        if f.is_false():
            return None
        if f.is_true():
            continue
        acc = acc.conj(f.conjuncts[0])
        if acc is None:
            return None
    return acc
