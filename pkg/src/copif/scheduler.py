"""Execution engine for the shared-variable model.

Each step evaluates guards against a frozen snapshot, lets the daemon pick a
non-empty subset of enabled nodes, and applies their actions atomically.
Guards are re-evaluated only for nodes whose closed neighbourhood changed;
an unchanged neighbourhood yields the same guard value, and the number of
such re-evaluations is what the message metric charges for.
"""
from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, TextIO

from .prefix_core import WaveId
from .protocol.messages import receive
from .protocol.rules import _guards, choose_rule, execute
from .protocol.state import (
    ALL_RULES,
    MERGE_RULES,
    AppMessage,
    Configuration,
    DlptState,
    Phase,
    Rule,
)


class SchedulerKind(str, Enum):
    SYNCHRONOUS = "sync"
    CENTRAL_RANDOM = "central"
    DISTRIBUTED_ADVERSARIAL = "adversarial"

    def __str__(self) -> str:
        return self.value


class NonTermination(RuntimeError):
    """The run exceeded its round budget."""


@dataclass(frozen=True)
class LatencyModel:
    """Per-read round-trip delay used for the synthetic duration.

    ``constant``: every step whose daemon fires anything costs ``scale``.
    ``exponential``: a firing node waits for the slowest of its neighbour
    reads, each Exp(mean=scale); the step costs the slowest firing node.
    """

    kind: str = "constant"
    scale: float = 1.0

    def step_cost(self, degrees: Iterable[int], rng: random.Random) -> float:
        degrees = list(degrees)
        if not degrees:
            return 0.0
        if self.kind == "constant":
            return self.scale
        if self.kind == "exponential":
            return max(
                max((rng.expovariate(1.0 / self.scale) for _ in range(max(d, 1))), default=0.0)
                for d in degrees
            )
        raise ValueError(f"unknown latency model {self.kind!r}")


@dataclass
class RunMetrics:
    messages_total: int = 0
    reads: int = 0
    app_messages: int = 0
    rounds_total: int = 0
    steps: int = 0
    rule_executions: int = 0
    synthetic_duration: float = 0.0
    per_wave_outcome: dict[WaveId, str] = field(default_factory=dict)
    verdict: Optional[DlptState] = None
    stabilization_rounds: Optional[int] = None
    dropped_messages: int = 0
    rule_counts: Counter = field(default_factory=Counter)
    # waves in the order they completed; a requester whose verdict is still
    # in transit may start a later wave, so this can be longer than 1
    completion_order: list[WaveId] = field(default_factory=list)

    def absorb(self, other: "RunMetrics") -> None:
        """Accumulate another run's costs (used for independent classic waves)."""
        self.messages_total += other.messages_total
        self.reads += other.reads
        self.app_messages += other.app_messages
        self.rounds_total += other.rounds_total
        self.steps += other.steps
        self.rule_executions += other.rule_executions
        self.synthetic_duration += other.synthetic_duration
        self.per_wave_outcome.update(other.per_wave_outcome)
        self.dropped_messages += other.dropped_messages
        self.rule_counts.update(other.rule_counts)
        self.completion_order.extend(other.completion_order)
        if other.verdict is not None:
            if self.verdict is None or other.verdict is DlptState.INCORRECT:
                self.verdict = other.verdict

    @property
    def winners(self) -> list[WaveId]:
        return sorted(w for w, o in self.per_wave_outcome.items() if o == "won")

    @property
    def first_winner(self) -> Optional[WaveId]:
        return self.completion_order[0] if self.completion_order else None


@dataclass(frozen=True)
class StepResult:
    configuration: Configuration
    fired: tuple[tuple[int, Rule], ...]
    rounds_elapsed: int
    reads_performed: int


class Simulation:
    """Mutable run state; `snapshot()` produces immutable configurations."""

    def __init__(
        self,
        cfg: Configuration,
        kind: SchedulerKind = SchedulerKind.SYNCHRONOUS,
        seed: int | str = 0,
        *,
        rules: frozenset = ALL_RULES,
        fairness_cap: Optional[int] = None,
        latency: LatencyModel = LatencyModel(),
        trace: Optional[TextIO] = None,
    ):
        self.overlay = ov = cfg.overlay
        self.kind = SchedulerKind(kind)
        self.rules = rules
        self.states = dict(cfg.states)
        self.answered = dict(cfg.answered)
        self.dropped = cfg.dropped
        self.fairness_cap = fairness_cap if fairness_cap is not None else 4 * len(ov.nodes)
        self.latency = latency
        self.trace = trace
        self._rng = random.Random(f"daemon/{seed}")
        self._tie = random.Random(f"tie/{seed}")
        self._lat = random.Random(f"latency/{seed}")
        self._hold = random.Random(f"hold/{seed}")
        # (release step, seq, message); FIFO per (sender, receiver) pair
        self._mailbox: deque[tuple[int, AppMessage]] = deque((0, m) for m in cfg.mailbox)
        self._pair_release: dict[tuple[int, int], int] = {}
        self.step_no = 0
        self.metrics = RunMetrics()
        self.enabled: dict[int, tuple[Rule, ...]] = {}
        self.age: dict[int, int] = {}
        self._round_pending: set[int] = set()
        self.initiations: list[tuple[int, int, WaveId]] = []
        self.completions: list[tuple[int, int, WaveId, DlptState]] = []
        self.visited: set[int] = set()

        active = {p for p, s in self.states.items() if s.phase is not Phase.C or s.request_pif}
        dirty = set(active)
        for p in active:
            dirty.update(ov.adjacency[p])
        self._evaluate(dirty)

    # -- helpers -------------------------------------------------------------

    def _evaluate(self, nodes: Iterable[int]) -> int:
        ov, states, rules = self.overlay, self.states, self.rules
        reads = 0
        for p in nodes:
            reads += len(ov.adjacency[p])
            en = _guards(ov, states, p, rules)
            if en:
                self.enabled[p] = en
            else:
                self.enabled.pop(p, None)
        self.metrics.reads += reads
        self.metrics.messages_total += 2 * reads
        return reads

    def _post(self, msgs: Iterable[AppMessage]) -> None:
        for m in msgs:
            self.metrics.app_messages += 1
            self.metrics.messages_total += 1
            release = self.step_no
            if self.kind is SchedulerKind.DISTRIBUTED_ADVERSARIAL:
                release += self._hold.randrange(self.fairness_cap + 1)
                key = (m.from_peer, m.to_peer)
                release = max(release, self._pair_release.get(key, 0))
                self._pair_release[key] = release
            self._mailbox.append((release, m))

    def _deliver_due(self) -> set[int]:
        """Deliver every message whose release step has come (relays included)."""
        touched: set[int] = set()
        while True:
            due = [e for e in self._mailbox if e[0] <= self.step_no]
            if not due:
                return touched
            self._mailbox = deque(e for e in self._mailbox if e[0] > self.step_no)
            for _, m in due:
                updates, follow = receive(self.overlay, self.states, m)
                if not updates and not follow:
                    self.dropped += 1
                    self.metrics.dropped_messages += 1
                self.states.update(updates)
                touched.update(updates)
                self._post(follow)

    def _select(self, en: list[int]) -> list[int]:
        if self.kind is SchedulerKind.SYNCHRONOUS:
            return en
        cap = self.fairness_cap
        overdue = [p for p in en if self.age.get(p, 0) >= cap]
        if self.kind is SchedulerKind.CENTRAL_RANDOM:
            if overdue:
                return [min(overdue, key=lambda p: (-self.age[p], p))]
            return [self._rng.choice(en)]
        if overdue:
            return overdue
        # adversary: hold back merging moves while anything else can run
        slow = [p for p in en if choose_rule(self.enabled[p]) in MERGE_RULES]
        fast = [p for p in en if choose_rule(self.enabled[p]) not in MERGE_RULES]
        pool = fast or slow
        chosen = [p for p in pool if self._rng.random() < 0.5]
        return chosen or [self._rng.choice(pool)]

    # -- public API ----------------------------------------------------------

    @property
    def quiescent(self) -> bool:
        return not self.enabled and not self._mailbox

    @property
    def mailbox(self) -> tuple[AppMessage, ...]:
        return tuple(m for _, m in self._mailbox)

    def snapshot(self) -> Configuration:
        return Configuration(self.overlay, dict(self.states), self.mailbox, dict(self.answered), self.dropped)

    def step(self) -> tuple[tuple[tuple[int, Rule], ...], int, int]:
        """One step; returns (fired, rounds started, reads performed)."""
        reads0 = self.metrics.reads
        touched = self._deliver_due()
        if touched:
            self._evaluate(touched)
        self.step_no += 1
        en = sorted(self.enabled)
        if not en:
            return (), 0, self.metrics.reads - reads0

        new_round = 0
        self._round_pending &= set(en)
        if not self._round_pending:
            self._round_pending = set(en)
            self.metrics.rounds_total += 1
            new_round = 1

        chosen = self._select(en)
        ov, states = self.overlay, self.states
        effects = []
        for p in chosen:
            rule = choose_rule(self.enabled[p])
            effects.append((p, rule, execute(ov, states, p, rule, self._tie)))

        dirty: set[int] = set()
        outgoing: list[AppMessage] = []
        for p, rule, eff in effects:
            before = states[p]
            states[p] = eff.state
            if before.triple != eff.state.triple:
                dirty.add(p)
                dirty.update(ov.adjacency[p])
            else:
                dirty.add(p)
            if eff.state.phase is not Phase.C:
                self.visited.add(p)
            outgoing.extend(eff.messages)
            if rule is Rule.R1:
                self.initiations.append((self.step_no, p, eff.state.wave))
            if eff.verdict is not None:
                self.answered[eff.verdict[0]] = eff.verdict[1]
                self.completions.append((self.step_no, p, eff.verdict[0], eff.verdict[1]))
            self.metrics.rule_counts[rule] += 1
            if self.trace is not None:
                wave = eff.state.wave if eff.state.wave is not None else before.wave
                self.trace.write(
                    f"{self.step_no}\t{p}\t{rule}\t{before.phase}\t{eff.state.phase}\t{wave if wave else '-'}\n"
                )
        self._post(outgoing)
        self.metrics.rule_executions += len(effects)
        self.metrics.steps += 1
        self.metrics.synthetic_duration += self.latency.step_cost(
            (len(ov.adjacency[p]) for p in chosen), self._lat
        )

        fired_set = set(chosen)
        for p in en:
            if p in fired_set:
                self.age.pop(p, None)
            else:
                self.age[p] = self.age.get(p, 0) + 1
        self._evaluate(dirty)
        for p in list(self.age):
            if p not in self.enabled:
                del self.age[p]
        self._round_pending -= fired_set
        self._round_pending &= set(self.enabled)
        fired = tuple((p, rule) for p, rule, _ in effects)
        return fired, new_round, self.metrics.reads - reads0

    def run(self, max_rounds: int = 10_000, on_step: Optional[Callable[["Simulation"], None]] = None) -> RunMetrics:
        if max_rounds <= 0:
            raise ValueError("max_rounds must be positive")
        while not self.quiescent:
            self.step()
            if on_step is not None:
                on_step(self)
            if self.metrics.rounds_total > max_rounds:
                raise NonTermination(f"not quiescent after {max_rounds} rounds ({self.step_no} steps)")
        return self.finish()

    def finish(self) -> RunMetrics:
        m = self.metrics
        m.dropped_messages = self.dropped
        m.completion_order = [w for _, _, w, _ in self.completions]
        won = set(m.completion_order)
        for _, _, w in self.initiations:
            m.per_wave_outcome[w] = "won" if w in won else "absorbed"
        if self.completions:
            m.verdict = self.completions[-1][3]
        return m


def step(cfg: Configuration, kind: SchedulerKind = SchedulerKind.SYNCHRONOUS, seed: int | str = 0, **kw) -> StepResult:
    sim = Simulation(cfg, kind, seed, **kw)
    reads0 = sim.metrics.reads
    fired, rounds, reads = sim.step()
    return StepResult(sim.snapshot(), fired, rounds, reads + reads0)


def run_until_quiescent(
    cfg: Configuration,
    kind: SchedulerKind = SchedulerKind.SYNCHRONOUS,
    seed: int | str = 0,
    max_rounds: int = 10_000,
    **kw,
) -> tuple[Configuration, RunMetrics]:
    sim = Simulation(cfg, kind, seed, **kw)
    metrics = sim.run(max_rounds)
    return sim.snapshot(), metrics


def run_with_trace(
    cfg: Configuration,
    kind: SchedulerKind = SchedulerKind.SYNCHRONOUS,
    seed: int | str = 0,
    max_rounds: int = 10_000,
    **kw,
) -> tuple[list[StepResult], RunMetrics]:
    """Like `run_until_quiescent` but keeps every intermediate configuration.

    Stops silently at the round budget; the trace then ends non-quiescent.
    """
    sim = Simulation(cfg, kind, seed, **kw)
    trace = [StepResult(sim.snapshot(), (), 0, sim.metrics.reads)]
    while not sim.quiescent and sim.metrics.rounds_total <= max_rounds:
        fired, rounds, reads = sim.step()
        trace.append(StepResult(sim.snapshot(), fired, rounds, reads))
    return trace, sim.finish()
