"""
One wave, step by step
======================

A single initiator broadcasts down the tree, leaves answer, and the answers
flow back up.  When the initiator has heard from every neighbour it learns
whether the whole structure is well formed.
"""

from copif.harness import experiment_tree
from copif.protocol import Configuration
from copif.scheduler import run_with_trace

ov = experiment_tree(12, seed=1, replication=0)
start = ov.root

# a request flag is all it takes to start a wave
cfg = Configuration.clean(ov).with_requests([start])
trace, metrics = run_with_trace(cfg, "sync", seed=0)

# each step lists the (node, rule) pairs that fired
for i, step in enumerate(trace):
    phases = "".join(step.configuration.states[p].phase.value[0] for p in sorted(ov.nodes))
    print(f"{i:2d} {phases}  {[(p, r.name) for p, r in step.fired]}")

# B broadcasting, F feedback, C clean
print("verdict:", metrics.verdict)
print("messages:", metrics.messages_total, "rounds:", metrics.rounds_total)
