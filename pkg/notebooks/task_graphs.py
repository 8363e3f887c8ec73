"""
Task graphs and schedules
=========================

Tasks declare the tiles they read and write. Edges come from the order in
which tasks are inserted, so any schedule that respects them gives the
result of running the tasks one after another.
"""

import numpy as np

from taskeig import Engine, TaskGraph, from_dense, hessenberg_reduce

m = from_dense(np.arange(16.0).reshape(4, 4), tile_size=2)
g = TaskGraph(m)
a, b = m.handle(0, 0), m.handle(1, 1)

# write a, read a into b, then write a again
t0 = g.insert(lambda: m.tile(0, 0).__imul__(2.0), writes=[a], label="scale")
t1 = g.insert(lambda: m.tile(1, 1).__iadd__(m.tile(0, 0)), reads=[a], writes=[b], label="add")
t2 = g.insert(lambda: m.tile(0, 0).fill(0.0), writes=[a], label="clear")
print(sorted(g.edges))

rep = g.execute(workers=2)
print(m.data)
for r in rep.records:
    print(r.label, "worker", r.worker)

# a traced engine keeps one record per task across graphs
eng = Engine(workers=2, trace=True)
hessenberg_reduce(from_dense(np.random.default_rng(0).standard_normal((64, 64)), tile_size=16), engine=eng)
kinds = {}
for rec in eng.trace_records():
    k = rec["label"].split("[")[0]
    kinds[k] = kinds.get(k, 0) + 1
print(kinds)
