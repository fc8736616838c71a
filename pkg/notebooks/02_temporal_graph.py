"""
Event streams, chronological splits and computation graphs
==========================================================
"""

import numpy as np

from tgib.tempgraph import TemporalGraph, chronological_split, extract_computation_graph

# five people emailing each other over ten days
src = np.array([0, 1, 2, 0, 3, 1, 4, 2, 0, 3])
dst = np.array([1, 2, 3, 2, 4, 3, 0, 4, 3, 1])
t = np.arange(1.0, 11.0)
g = TemporalGraph(src, dst, t, num_nodes=5)

train, val, test = chronological_split(g)
print("train days", g.t[train], "val", g.t[val], "test", g.t[test])

# who did node 3 talk to before day 9?
for other, when, _, pos in g.temporal_neighbors(3, 9.0, n=3):
    print(f"  node {other} on day {when:g} (event {g.event_ids[pos]})")

# everything the last event could depend on within two hops
cg = extract_computation_graph(g, len(g) - 1, L=2, n=20)
for pos, hop, dt in zip(cg.positions, cg.hops, cg.dt):
    print(f"event {g.event_ids[pos]}: hop {hop}, {dt:g} days earlier")
