"""Random small programs for differential testing against the oracle."""

from __future__ import annotations

import random
from dataclasses import dataclass

OPS = ("load", "store", "faa", "await", "assume", "spin", "xchg", "cmpxchg")

# events an op can contribute; a spin loop is charged for two iterations,
# which is what it can run under the audit's unroll bound of 1
EVENT_COST = {"load": 1, "store": 1, "faa": 1, "await": 1, "assume": 2, "spin": 2,
              "xchg": 1, "cmpxchg": 1}


@dataclass(frozen=True)
class GenLimits:
    threads: int = 3
    ops_per_thread: int = 5
    variables: int = 2
    values: int = 2  # constants drawn from 0..values
    ops: tuple = OPS


def generate_program(seed: int, limits: GenLimits = GenLimits()) -> str:
    """Program text for ``seed``; the same seed always yields the same text."""
    if limits.threads < 1:
        raise ValueError("a program needs at least one thread")
    if limits.ops_per_thread < 1 or limits.variables < 1:
        raise ValueError("ops_per_thread and variables must be positive")
    rng = random.Random(seed)
    nvars = rng.randint(1, limits.variables)
    gvars = [chr(ord("x") + i) if i < 3 else f"v{i}" for i in range(nvars)]
    nthreads = rng.randint(1, limits.threads) if limits.threads > 1 else 1
    if limits.threads > 1 and nthreads == 1:
        nthreads = 2
    out = [f"# generated from seed {seed}"]
    out += [f"global {v} = 0;" for v in gvars]
    for t in range(nthreads):
        out.append("")
        out += _thread(rng, f"t{t}", gvars, limits)
    return "\n".join(out) + "\n"


def _val(rng, limits) -> int:
    return rng.randint(0, limits.values)


def _thread(rng, name, gvars, limits) -> list:
    budget = rng.randint(1, limits.ops_per_thread)
    blocks: list = []
    label = "L0"
    cur: list = []
    regs: list = []
    nreg = 0
    nblk = 0

    def fresh():
        nonlocal nreg
        nreg += 1
        return f"r{nreg}"

    while budget > 0:
        op = rng.choice([o for o in limits.ops if EVENT_COST[o] <= budget] or ["load"])
        budget -= EVENT_COST[op]
        x = rng.choice(gvars)
        c = _val(rng, limits)
        rel = rng.choice(("==", "!="))
        if op == "load":
            r = fresh()
            cur.append(f"{r} := {x};")
            regs.append(r)
        elif op == "store":
            val = rng.choice(regs) if regs and rng.random() < 0.3 else str(c or 1)
            cur.append(f"{x} := {val};")
        elif op == "faa":
            if rng.random() < 0.5:
                cur.append(f"{x} +:= {c or 1};")
            else:
                r = fresh()
                cur.append(f"{r} := faa({x}, {c or 1});")
                regs.append(r)
        elif op == "await":
            if rng.random() < 0.5:
                cur.append(f"await({x} {rel} {c});")
            else:
                r = fresh()
                cur.append(f"{r} := await({x} {rel} {c});")
                regs.append(r)
        elif op == "assume":
            r = fresh()
            cur.append(f"{r} := {x};")
            cur.append(f"assume({r} {rel} {c});")
        elif op == "xchg":
            r = fresh()
            cur.append(f"{r} := xchg({x}, {c});")
            regs.append(r)
        elif op == "cmpxchg":
            r = fresh()
            cur.append(f"{r} := cmpxchg({x}, {c}, {_val(rng, limits)});")
            regs.append(r)
        else:  # spin until x satisfies the condition
            nblk += 1
            w, nxt = f"W{nblk}", f"N{nblk}"
            r = fresh()
            blocks.append((label, cur + [f"goto {w};"]))
            blocks.append((w, [f"{r} := {x};", f"br {r} {_neg(rel)} {c} {w} {nxt};"]))
            label, cur = nxt, []
            regs.append(r)
    blocks.append((label, cur + ["exit;"]))
    lines = [f"thread {name} {{"]
    for lab, stmts in blocks:
        lines.append(f"  {lab}:")
        lines += [f"    {s}" for s in stmts]
    lines.append("}")
    return lines


def _neg(rel: str) -> str:
    return "!=" if rel == "==" else "=="
