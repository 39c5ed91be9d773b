"""Classic (non-collaborative) PIF baseline.

Each initiator gets its own wave over a private, initially clean copy of the
per-node state, so waves never meet.  A single wave runs the same
initiation, broadcast, feedback and cleaning rules as the collaborative
protocol; only merging and correction rules are absent.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Iterable, Optional

from .state import CLASSIC_RULES, Configuration


def run_classic_pif(
    cfg: Configuration,
    initiators: Iterable[int],
    scheduler="sync",
    seed=0,
    max_rounds=100_000,
    cache: Optional[dict] = None,
    **kw,
):
    """Run one isolated wave per initiator and sum their costs.

    Returns the (still all-clean) configuration with the verdicts recorded,
    and the accumulated `RunMetrics`.  A wave's schedule depends only on
    ``seed`` and its initiator, so callers sweeping nested initiator sets on
    one configuration can pass the same ``cache`` dict to reuse waves.
    """
    from ..scheduler import RunMetrics, Simulation

    if cfg.mailbox or not cfg.all_clean():
        raise ValueError("classic PIF needs an all-clean configuration with an empty mailbox")
    total = RunMetrics()
    answered = dict(cfg.answered)
    for p in sorted(set(initiators)):
        cfg.overlay.node(p)
        key = (p, str(seed), str(scheduler))
        if cache is not None and key in cache:
            m, ans = cache[key]
        else:
            sim = Simulation(cfg.with_requests([p]), scheduler, f"{seed}/wave/{p}", rules=CLASSIC_RULES, **kw)
            m, ans = sim.run(max_rounds), dict(sim.answered)
            if cache is not None:
                cache[key] = (m, ans)
        total.absorb(m)
        answered.update(ans)
    return replace(cfg, answered=answered), total
