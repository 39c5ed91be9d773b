"""
Recovering from arbitrary state
===============================

Scribble over every node's protocol variables and let the rules run.  The
detectors show the broken patterns, and after a few rounds they are gone.
"""

from copif.harness import experiment_tree, inject_faults, stabilize
from copif.protocol import Configuration
from copif.scheduler import Simulation
from copif.verification import all_reports

ov = experiment_tree(50, seed=3, replication=0)
faulty = inject_faults(Configuration.clean(ov), count=len(ov), seed=3)

# what the detectors see right after the corruption
for rep in all_reports(faulty):
    print(f"{rep.kind!s:8} {len(rep.witnesses):3d} witnesses")

final, silent_at, metrics = stabilize(faulty, "central", seed=3)
print("detectors silent after", silent_at, "rounds")
print("quiescent after", metrics.rounds_total, "rounds, all clean:", final.all_clean())

# the repaired tree serves requests normally
sim = Simulation(final.with_requests([ov.root]), "sync", 0)
print("fresh wave verdict:", sim.run().verdict)
