"""A spinloop, the same loop bounded by an assume, and the await it becomes.

Thread p below spins on x until q publishes it.  Exploring the spinloop
directly needs an unroll bound and still yields several executions, most of
them p spinning a different number of times.  The loop-purity pass inserts
an assume that cuts off every iteration which would read the same value
again, and the await rewrite turns the load plus assume into a single await.
"""

from awaitmc import corpus
from awaitmc.explorer import explore
from awaitmc.parser import format_program
from awaitmc.plp import transform

p = corpus.load("fig2a")
print(format_program(p))

r = explore(p, unroll=2)
print(f"spinloop, unrolled twice:   {r.complete_count} complete, {r.blocked_count} blocked")

bounded, reports = transform(p)
print(reports[0].render(p.threads[0]))
r = explore(bounded)
print(f"with the inserted assume:   {r.complete_count} complete, {r.blocked_count} blocked")

awaited, _ = transform(p, await_rewrite=True)
print(format_program(awaited))
r = explore(awaited)
print(f"after the await rewrite:    {r.complete_count} complete, {r.blocked_count} blocked")
