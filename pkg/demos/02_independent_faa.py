"""Fetch-and-adds whose results are unused commute with each other.

Three threads add 1, 1 and 3 to x and a fourth waits for x == 3, which only
holds while r's increment is the sole one applied.  Treating the unused
increments as independent collapses their orders, and the oracle confirms
that two classes remain: s fires after r alone, or s stays blocked.
"""

from awaitmc import corpus, oracle
from awaitmc.explorer import explore
from awaitmc.hb import BASELINE, IFAA

p = corpus.load("fig5")
print(corpus.source("fig5"))
for name, pol in (("plain conflicts", BASELINE), ("independent FAAs", IFAA)):
    r = explore(p, pol, keep_traces=True)
    verdict = oracle.audit(p, pol, r)
    print(f"{name:17s} explored {r.total} executions; oracle classes {verdict.classes}; "
          f"correct={verdict.correct} optimal={verdict.optimal}")
