"""Experiment driver: tree construction, fault injection, concurrent
initiations, metric collection, efficiency and CSV output.

All randomness is drawn from string-seeded `random.Random` instances, so a
given `ExperimentConfig` always produces the same rows.
"""
from __future__ import annotations

import csv
import io
import random
import statistics
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .overlay import Overlay, build_overlay, controlled_height_overlay, random_labels, relabel, tree_height
from .prefix_core import WaveId, make_alphabet
from .protocol import CLEAN, Configuration, NodeState, Phase, Rule, run_classic_pif
from .scheduler import LatencyModel, RunMetrics, SchedulerKind, Simulation
from .verification import detectors_silent, states_silent

MODES = ("classic", "copif")
CSV_COLUMNS = (
    "n", "k", "mode", "replication", "seed", "messages", "rounds",
    "duration", "verdict", "winner_peer", "stabilization_rounds",
)
DESK_N = (250, 1000, 4000)
DESK_K = (1, 2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    k: int = 1
    mode: str = "copif"
    scheduler: SchedulerKind = SchedulerKind.SYNCHRONOUS
    replications: int = 10
    seed: int = 0
    alphabet_size: int = 2
    max_label_length: int = 18
    faults: int = 0
    num_peers: int = 16
    latency: LatencyModel = LatencyModel()
    max_rounds: int = 100_000

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 1 or self.replications < 1:
            raise ValueError("n, k and replications must all be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.faults < 0:
            raise ValueError("faults must be >= 0")
        object.__setattr__(self, "scheduler", SchedulerKind(self.scheduler))


@dataclass
class Replication:
    """One replication: the tree, who initiated, and what came out."""

    index: int
    overlay: Overlay
    initiators: tuple[int, ...]
    metrics: RunMetrics
    final: Configuration

    @property
    def winner_peer(self) -> Optional[int]:
        w = self.metrics.first_winner
        return None if w is None else w.peer_id


def experiment_tree(n: int, seed, replication: int, alphabet_size: int = 2, max_length: int = 18, num_peers: int = 16) -> Overlay:
    """The tree of one replication; it depends on neither k nor the mode."""
    alphabet = make_alphabet(alphabet_size)
    labels = random_labels(n, alphabet, max_length, random.Random(f"labels/{seed}/{n}/{replication}"))
    return build_overlay(labels, num_peers, alphabet, max_length, f"tree/{seed}/{n}/{replication}")


def pick_initiators(overlay: Overlay, k: int, seed, replication: int) -> tuple[int, ...]:
    """k distinct nodes, uniformly; the choices for k are a prefix of those for k+1."""
    nodes = sorted(overlay.nodes)
    if k > len(nodes):
        raise ValueError(f"k={k} exceeds the {len(nodes)} nodes of the tree")
    order = random.Random(f"init/{seed}/{len(overlay)}/{replication}").sample(nodes, len(nodes))
    return tuple(order[:k])


def random_state(overlay: Overlay, p: int, rng: random.Random) -> NodeState:
    """Uniformly random (phase, wave, father) over existing peers x labels and p's neighbours."""
    phase = rng.choice(list(Phase))
    if phase is Phase.C:
        return CLEAN
    peers = sorted(overlay.peers)
    labels = sorted({nd.label for nd in overlay.nodes.values()})
    wave = WaveId(rng.choice(peers), rng.choice(labels))
    father = rng.choice((None,) + overlay.adjacency[p])
    return NodeState(phase, wave, father)


def inject_faults(cfg: Configuration, count: int, seed, corrupt_labels: bool = False) -> Configuration:
    """Overwrite the state of ``count`` random nodes.

    With ``corrupt_labels`` one of those nodes (never the root) also gets a
    random label, which leaves at least one node with an incorrect position.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return cfg
    rng = random.Random(f"faults/{seed}")
    ov = cfg.overlay
    victims = rng.sample(sorted(ov.nodes), min(count, len(ov.nodes)))
    out = cfg.with_states({p: random_state(ov, p, rng) for p in victims})
    if corrupt_labels:
        out = make_locally_incorrect(out, rng)
    return out


def make_locally_incorrect(cfg: Configuration, seed) -> Configuration:
    """Give one non-root node a label that breaks the prefix property around it."""
    rng = seed if isinstance(seed, random.Random) else random.Random(f"mislabel/{seed}")
    ov = cfg.overlay
    cands = sorted(p for p in ov.nodes if p != ov.root)
    if not cands:
        raise ValueError("a single-node tree has no node to mislabel")
    alphabet = ov.alphabet
    for _ in range(1000):
        p = rng.choice(cands)
        length = rng.randint(1, max(ov.max_length, 1))
        lab = "".join(rng.choice(alphabet) for _ in range(length))
        bad = relabel(ov, p, lab)
        if not all(bad.position_ok.values()):
            return replace(cfg, overlay=bad)
    raise RuntimeError("could not produce a locally incorrect label")  # pragma: no cover


def stabilize(cfg: Configuration, kind=SchedulerKind.SYNCHRONOUS, seed=0, max_rounds: int = 100_000) -> tuple[Configuration, int, RunMetrics]:
    """Run a faulty configuration to quiescence.

    Returns the final configuration, the round count at which the detectors
    first fell silent, and the run's metrics.
    """
    sim = Simulation(cfg, kind, f"stabilize/{seed}")
    first: list[int] = []
    if detectors_silent(cfg):
        first.append(0)

    def watch(s: Simulation) -> None:
        if not first and states_silent(s.overlay, s.states):
            first.append(s.metrics.rounds_total)

    metrics = sim.run(max_rounds, on_step=watch)
    final = sim.snapshot()
    if not first:
        first.append(metrics.rounds_total)
    return final, first[0], metrics


def run_replication(
    ec: ExperimentConfig, index: int, overlay: Optional[Overlay] = None, cache: Optional[dict] = None
) -> Replication:
    """One replication.  ``overlay`` and ``cache`` let a sweep over k reuse
    the tree and the classic waves of this (seed, n, replication)."""
    ov = overlay or experiment_tree(ec.n, ec.seed, index, ec.alphabet_size, ec.max_label_length, ec.num_peers)
    cfg = Configuration.clean(ov)
    stab = None
    if ec.faults:
        faulty = inject_faults(cfg, ec.faults, f"{ec.seed}/{ec.n}/{index}")
        cfg, stab, _ = stabilize(faulty, ec.scheduler, f"{ec.seed}/{ec.n}/{index}", ec.max_rounds)
        cfg = replace(cfg, mailbox=(), answered={})
    inits = pick_initiators(ov, ec.k, ec.seed, index)
    run_seed = f"{ec.seed}/{ec.n}/{index}"
    if ec.mode == "classic":
        final, metrics = run_classic_pif(
            cfg, inits, ec.scheduler, run_seed, ec.max_rounds, cache=cache, latency=ec.latency
        )
    else:
        sim = Simulation(cfg.with_requests(inits), ec.scheduler, run_seed, latency=ec.latency)
        metrics = sim.run(ec.max_rounds)
        final = sim.snapshot()
    metrics.stabilization_rounds = stab
    return Replication(index, ov, inits, metrics, final)


class Sweep:
    """Shares trees and classic waves between cells of one n."""

    def __init__(self) -> None:
        self._trees: dict = {}
        self._caches: dict = {}

    def replication(self, ec: ExperimentConfig, index: int) -> Replication:
        key = (ec.n, ec.seed, index, ec.alphabet_size, ec.max_label_length, ec.num_peers)
        ov = self._trees.get(key)
        if ov is None:
            ov = self._trees[key] = experiment_tree(ec.n, ec.seed, index, ec.alphabet_size, ec.max_label_length, ec.num_peers)
        cache = self._caches.setdefault(key + (ec.faults, ec.latency), {})
        return run_replication(ec, index, ov, cache)

    def run(self, ec: ExperimentConfig) -> list[Replication]:
        return [self.replication(ec, r) for r in range(ec.replications)]


def run_replications(ec: ExperimentConfig, sweep: Optional[Sweep] = None) -> list[Replication]:
    return (sweep or Sweep()).run(ec)


def run_experiment(ec: ExperimentConfig) -> list[RunMetrics]:
    """One `RunMetrics` per replication."""
    return [r.metrics for r in run_replications(ec)]


def indicator(m: RunMetrics, which: str = "messages") -> float:
    if which == "messages":
        return m.messages_total
    if which == "duration":
        return m.synthetic_duration
    if which == "rounds":
        return m.rounds_total
    raise ValueError(f"unknown indicator {which!r}")


def median_indicator(runs, which: str = "messages") -> float:
    """Median of an indicator over replications; numbers pass through."""
    if isinstance(runs, (int, float)):
        return float(runs)
    if isinstance(runs, RunMetrics):
        return indicator(runs, which)
    return statistics.median(indicator(m, which) for m in runs)


def efficiency(classic, copif, k: int, which: str = "messages") -> float:
    """I_classic / (k * I_copif) over replication medians."""
    ic = median_indicator(classic, which)
    ip = median_indicator(copif, which)
    if ip == 0:
        raise ZeroDivisionError("collaborative indicator is zero")
    return ic / (k * ip)


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """(slope, intercept, R^2) of an ordinary least-squares line."""
    slope, intercept = statistics.linear_regression(xs, ys)
    r = statistics.correlation(xs, ys)
    return slope, intercept, r * r


# -- scaling measurements ----------------------------------------------------


@dataclass
class ScalingRow:
    h: int
    median_rounds: float
    median_quiescence_rounds: float
    samples: list[int] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.median_rounds / (self.h * self.h)


def measure_stabilization_scaling(
    heights: Iterable[int], seeds: Iterable = range(5), kind=SchedulerKind.SYNCHRONOUS, max_rounds: int = 100_000
) -> tuple[list[ScalingRow], float]:
    """Median rounds to detector-silence from fully corrupted chain trees.

    Returns the table and the least-squares c in rounds ~ c * h^2.
    """
    seeds = list(seeds)
    rows = []
    for h in heights:
        ov = controlled_height_overlay(h, seed=f"height/{h}")
        clean = Configuration.clean(ov)
        stab, quiet = [], []
        for s in seeds:
            faulty = inject_faults(clean, len(ov), f"scaling/{h}/{s}")
            _, rounds, metrics = stabilize(faulty, kind, f"scaling/{h}/{s}", max_rounds)
            stab.append(rounds)
            quiet.append(metrics.rounds_total)
        rows.append(ScalingRow(h, statistics.median(stab), statistics.median(quiet), stab))
    num = sum(r.median_rounds * r.h**2 for r in rows)
    den = sum(r.h**4 for r in rows)
    return rows, (num / den if den else 0.0)


def merge_rounds(overlay: Overlay, initiators: Sequence[int], kind=SchedulerKind.SYNCHRONOUS, seed=0, max_rounds: int = 10_000) -> int:
    """Rounds from a clean start until every initiator has started and a
    single (B, ., NULL) extremity is left."""
    sim = Simulation(Configuration.clean(overlay).with_requests(initiators), kind, f"merge/{seed}")
    pending = set(initiators)
    while not sim.quiescent and sim.metrics.rounds_total <= max_rounds:
        fired, _, _ = sim.step()
        pending.difference_update(p for p, r in fired if r is Rule.R1)
        if not pending:
            roots = [p for p, s in sim.states.items() if s.phase is Phase.B and s.father is None]
            if len(roots) == 1:
                return sim.metrics.rounds_total
    raise RuntimeError("waves never merged into a single extremity")


def measure_merge_time(heights: Iterable[int], k: int = 4, seeds: Iterable = range(5), kind=SchedulerKind.SYNCHRONOUS) -> list[tuple[int, float, int]]:
    """(h, median merge rounds, worst merge rounds) with k initiators on chain trees.

    The two deepest leaves always initiate, so the waves start a full
    diameter apart; the other initiators are random.
    """
    seeds = list(seeds)
    out = []
    for h in heights:
        ov = controlled_height_overlay(h, seed=f"height/{h}")
        deepest = sorted(ov.nodes, key=lambda p: (-len(ov.nodes[p].label), ov.nodes[p].label))[:2]
        samples = []
        for s in seeds:
            rng = random.Random(f"merge/{h}/{s}")
            rest = [p for p in sorted(ov.nodes) if p not in deepest]
            inits = deepest + rng.sample(rest, max(0, min(k, len(ov)) - 2))
            samples.append(merge_rounds(ov, inits, kind, f"{h}/{s}"))
        out.append((h, statistics.median(samples), max(samples)))
    return out


# -- CSV ---------------------------------------------------------------------


def csv_rows(ec: ExperimentConfig, sweep: Optional[Sweep] = None) -> list[dict]:
    rows = []
    for rep in run_replications(ec, sweep):
        m = rep.metrics
        wp = rep.winner_peer if ec.mode == "copif" else None
        rows.append(
            {
                "n": ec.n,
                "k": ec.k,
                "mode": ec.mode,
                "replication": rep.index,
                "seed": ec.seed,
                "messages": m.messages_total,
                "rounds": m.rounds_total,
                "duration": f"{m.synthetic_duration:.6f}",
                "verdict": str(m.verdict) if m.verdict is not None else "",
                "winner_peer": "" if wp is None else wp,
                "stabilization_rounds": "" if m.stabilization_rounds is None else m.stabilization_rounds,
            }
        )
    return rows


def bench(
    ns: Iterable[int] = DESK_N,
    ks: Iterable[int] = DESK_K,
    reps: int = 10,
    seed: int = 0,
    modes: Iterable[str] = MODES,
    scheduler=SchedulerKind.SYNCHRONOUS,
    faults: int = 0,
    progress=None,
) -> str:
    """Run the grid and return the CSV text (rows in grid order)."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for n in ns:
        sweep = Sweep()
        for k in ks:
            for mode in modes:
                ec = ExperimentConfig(n, k, mode, scheduler, reps, seed, faults=faults)
                w.writerows(csv_rows(ec, sweep))
                if progress is not None:
                    progress(n, k, mode)
    return buf.getvalue()


def tree_summary(ov: Overlay) -> dict:
    return {"nodes": len(ov), "height": tree_height(ov), "peers": len(ov.peers)}
