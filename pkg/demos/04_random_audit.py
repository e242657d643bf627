"""Differential testing against brute force.

Random programs are explored and every explored execution is matched with
the equivalence classes found by exhaustive enumeration.  Any missed or
duplicated class would be printed.
"""

import sys

from awaitmc import oracle
from awaitmc.explorer import explore
from awaitmc.generate import generate_program
from awaitmc.hb import BASELINE, IFAA
from awaitmc.parser import parse_program

n = int(sys.argv[1]) if len(sys.argv) > 1 else 100
bad = 0
for seed in range(n):
    p = parse_program(generate_program(seed))
    for pol in (BASELINE, IFAA):
        r = explore(p, pol, unroll=1, keep_traces=True)
        v = oracle.audit(p, pol, r, unroll=1)
        if not v.ok:
            bad += 1
            print(f"seed {seed} ifaa={pol.ifaa_enabled}: {v.mismatches}")
print(f"{n} programs, {2 * n} audits, {bad} mismatches")
print("example program (seed 0):")
print(generate_program(0))
