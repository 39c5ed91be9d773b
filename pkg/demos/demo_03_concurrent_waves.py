"""
Many initiators, one wave
=========================

When k nodes start at once, the waves with larger identifiers are absorbed
by the smallest one.  Only one wave completes, and every initiator still
gets the answer.  The classic protocol has to run k separate waves.
"""

from copif.harness import ExperimentConfig, Sweep, efficiency

sweep = Sweep()
n = 1000

# same trees, same initiators, two protocols
print(" k   classic     copif   E")
for k in (1, 4, 16, 64):
    classic = [r.metrics for r in sweep.run(ExperimentConfig(n, k, "classic", replications=3))]
    copif = [r.metrics for r in sweep.run(ExperimentConfig(n, k, "copif", replications=3))]
    e = efficiency(classic, copif, k)
    print(f"{k:2d} {classic[0].messages_total:9d} {copif[0].messages_total:9d}   {e:.3f}")

# E is the classic cost over k times the collaborative cost; at k = 1 it is 1
rep = sweep.replication(ExperimentConfig(n, 16, "copif"), 0)
print("winner", rep.metrics.first_winner, "initiators", len(rep.initiators))
best = min(rep.overlay.own_wave[p] for p in rep.initiators)
print("smallest id won:", rep.metrics.first_winner == best)
