"""Scaling on the sorting-network benchmark.

In sortnet(k) a producer does one compare-and-swap round and raises a
flag; k consumers spin on the flag, do their own round and bump a shared
counter.  With assume-bounded loops the number of explored
executions grows with k; with awaits and independent increments a single
execution covers everything.
"""

import time

from awaitmc import corpus
from awaitmc.explorer import explore
from awaitmc.hb import BASELINE, IFAA
from awaitmc.plp import transform

print(f"{'k':>2} {'assume':>10} {'assume+ifaa':>12} {'await+ifaa':>11} {'time':>8}")
for k in range(1, 5):
    p = corpus.load(f"sortnet{k}")
    t0 = time.perf_counter()
    assume_only = transform(p)[0]
    awaited = transform(p, await_rewrite=True)[0]
    a = explore(assume_only, BASELINE)
    b = explore(assume_only, IFAA)
    c = explore(awaited, IFAA)
    print(f"{k:>2} {a.total:>10} {b.total:>12} {c.total:>11} {time.perf_counter() - t0:>7.2f}s")
