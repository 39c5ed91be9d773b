"""Runtime detectors for the abnormal patterns the correction rules remove,
plus the wave-structure notions (subtrees, friendly sets, partial-final
configurations) and a checker for complete collaborative-wave traces.

Every detector is a pure function of a `Configuration`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .overlay import Overlay
from .protocol.rules import _guards
from .protocol.state import FEEDBACK, Configuration, NodeState, Phase, Rule

B, C = Phase.B, Phase.C


class DetectorKind(str, Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    B = "B"
    DYNAMIC = "Dynamic"
    TRAP = "Trap"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class DetectorReport:
    kind: DetectorKind
    witnesses: tuple[tuple[int, ...], ...]

    @property
    def present(self) -> bool:
        return bool(self.witnesses)

    def to_json(self) -> str:
        return json.dumps({"kind": str(self.kind), "present": self.present, "witnesses": [list(w) for w in self.witnesses]})


def _broadcasting(st: Mapping[int, NodeState]) -> list[int]:
    return sorted(p for p, s in st.items() if s.phase is B)


def _abnormal_A(ov: Overlay, st: Mapping[int, NodeState], bnodes: Sequence[int]):
    for p in bnodes:
        s = st[p]
        q = s.father
        if q is None:
            if s.wave != ov.own_wave[p]:
                yield DetectorKind.A1, (p,)
            continue
        sq = st[q]
        if sq.phase is not B:
            yield DetectorKind.A4, (p, q)
        elif sq.wave > s.wave and sq.father != p:
            yield DetectorKind.A2, (p, q)
        elif sq.wave == s.wave and sq.father == p:
            yield DetectorKind.A3, (p, q)


def detect_abnormal_A(cfg: Configuration) -> dict[DetectorKind, DetectorReport]:
    """One report per sub-type A1-A4; a witness is ``(p,)`` or ``(p, father)``."""
    found: dict[DetectorKind, list[tuple[int, ...]]] = {k: [] for k in (DetectorKind.A1, DetectorKind.A2, DetectorKind.A3, DetectorKind.A4)}
    for kind, w in _abnormal_A(cfg.overlay, cfg.states, _broadcasting(cfg.states)):
        found[kind].append(w)
    return {k: DetectorReport(k, tuple(v)) for k, v in found.items()}


def _abnormal_B(ov: Overlay, st: Mapping[int, NodeState], bnodes: Sequence[int]) -> list[tuple[int, ...]]:
    by_key: dict = {}
    for q in bnodes:
        sq = st[q]
        for p in ov.adjacency[q]:
            if st[p].phase is C and sq.father != p:
                by_key.setdefault((p, sq.wave), []).append(q)
    return sorted((p, *qs) for (p, _), qs in by_key.items() if len(qs) > 1)


def detect_abnormal_B(cfg: Configuration) -> DetectorReport:
    return DetectorReport(DetectorKind.B, tuple(_abnormal_B(cfg.overlay, cfg.states, _broadcasting(cfg.states))))


def _dynamic(ov: Overlay, st: Mapping[int, NodeState], bnodes: Sequence[int]) -> list[tuple[int, int]]:
    out = []
    for p in bnodes:
        sp = st[p]
        for q in ov.adjacency[p]:
            sq = st[q]
            if p < q and sq.phase is B and sp.wave == sq.wave and sp.father != q and sq.father != p:
                out.append((p, q))
    return sorted(out)


def detect_dynamic_abnormal(cfg: Configuration) -> DetectorReport:
    return DetectorReport(DetectorKind.DYNAMIC, tuple(_dynamic(cfg.overlay, cfg.states, _broadcasting(cfg.states))))


def _trap_pairs(ov: Overlay, st: Mapping[int, NodeState], bnodes: Sequence[int]):
    """Same-wave broadcasting nodes attached (father pointing away) to one clean region.

    Yields (p0, x0, y, x1): the two endpoints and their clean attachment nodes.
    """
    comp: dict[int, int] = {}
    attach: dict = {}
    for q in bnodes:
        sq = st[q]
        for x in ov.adjacency[q]:
            if st[x].phase is not C or sq.father == x:
                continue
            if x not in comp:
                # label the whole clean region around x
                comp[x] = x
                stack = [x]
                while stack:
                    a = stack.pop()
                    for b in ov.adjacency[a]:
                        if b not in comp and st[b].phase is C:
                            comp[b] = x
                            stack.append(b)
            attach.setdefault((comp[x], sq.wave), []).append((q, x))
    for group in attach.values():
        group.sort()
        for i, (p0, x0) in enumerate(group):
            for y, x1 in group[i + 1:]:
                yield p0, x0, y, x1


def _tree_path(ov: Overlay, a: int, b: int) -> list[int]:
    prev = {a: None}
    stack = [a]
    while stack and b not in prev:
        x = stack.pop()
        for y in ov.adjacency[x]:
            if y not in prev:
                prev[y] = x
                stack.append(y)
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


def detect_trap(cfg: Configuration) -> DetectorReport:
    """Paths p0..pk (k >= 2) between two same-wave broadcasting nodes whose
    fathers point off the path, with every interior node clean."""
    ov, st = cfg.overlay, cfg.states
    out = [tuple([p0] + _tree_path(ov, x0, x1) + [y]) for p0, x0, y, x1 in _trap_pairs(ov, st, _broadcasting(st))]
    return DetectorReport(DetectorKind.TRAP, tuple(sorted(out)))


def all_reports(cfg: Configuration) -> list[DetectorReport]:
    reps = list(detect_abnormal_A(cfg).values())
    reps += [detect_abnormal_B(cfg), detect_dynamic_abnormal(cfg), detect_trap(cfg)]
    return reps


def detectors_silent(cfg: Configuration) -> bool:
    """No detector fires; short-circuits on the first witness."""
    return states_silent(cfg.overlay, cfg.states)


def states_silent(ov: Overlay, st: Mapping[int, NodeState]) -> bool:
    bnodes = _broadcasting(st)
    if not bnodes:
        return True
    if next(_abnormal_A(ov, st, bnodes), None) is not None:
        return False
    if _dynamic(ov, st, bnodes) or _abnormal_B(ov, st, bnodes):
        return False
    return next(_trap_pairs(ov, st, bnodes), None) is None


def compute_subtree(cfg: Configuration, p: int) -> frozenset[int]:
    """p plus every non-clean node whose chain of fathers reaches p."""
    ov, st = cfg.overlay, cfg.states
    ov.node(p)
    seen = {p}
    stack = [p]
    while stack:
        x = stack.pop()
        for y in ov.adjacency[x]:
            if y not in seen and st[y].phase is not C and st[y].father == x:
                seen.add(y)
                stack.append(y)
    return frozenset(seen)


def pif_friendly_sets(cfg: Configuration) -> list[frozenset[int]]:
    """Groups of non-clean nodes whose waves are not separated by feedback nodes.

    Two adjacent non-clean nodes belong together when both broadcast, or when
    one is the other's father.  A feedback node adjacent to a foreign wave it
    is not attached to therefore separates the two.
    """
    ov, st = cfg.overlay, cfg.states
    parent = {p: p for p in st if st[p].phase is not C}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p, q in ov.edges():
        sp, sq = st[p], st[q]
        if sp.phase is C or sq.phase is C:
            continue
        if (sp.phase is B and sq.phase is B) or sp.father == q or sq.father == p:
            parent[find(p)] = find(q)
    groups: dict[int, set[int]] = {}
    for p in parent:
        groups.setdefault(find(p), set()).add(p)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def partial_final_reached(cfg: Configuration, friendly_set: Iterable[int]) -> Optional[int]:
    """The extremity p = (B, id, NULL) whose subtree holds the rest of the set in feedback, if any."""
    members = frozenset(friendly_set)
    st = cfg.states
    roots = [p for p in members if st[p].phase is B and st[p].father is None]
    if len(roots) != 1:
        return None
    (p,) = roots
    sub = compute_subtree(cfg, p)
    rest = members - {p}
    if rest <= sub and all(st[q].phase in FEEDBACK for q in rest):
        return p
    return None


def is_quiescent(cfg: Configuration) -> bool:
    if cfg.mailbox:
        return False
    return not any(_guards(cfg.overlay, cfg.states, p) for p in cfg.states)


def is_copif_wave(trace: Sequence, initiators: Iterable[int]) -> bool:
    """Check a complete run (list of `StepResult`) against the wave definition.

    (a) every requesting initiator fired R1; (b) every node left the clean
    phase at some point; (c) exactly one node completed the wave (R10/R11)
    and it was one of the initiators.  A trace not ending quiescent and
    all-clean is rejected.
    """
    initiators = set(initiators)
    if not trace:
        return False
    last = trace[-1].configuration
    if not (last.all_clean() and is_quiescent(last)):
        return False
    fired = [(p, r) for st in trace for p, r in st.fired]
    started = {p for p, r in fired if r is Rule.R1}
    if not initiators <= started:
        return False
    visited = set()
    for st in trace:
        visited.update(p for p, s in st.configuration.states.items() if s.phase is not C)
    if visited != set(last.states):
        return False
    completers = [p for p, r in fired if r in (Rule.R10, Rule.R11)]
    return len(completers) == 1 and completers[0] in initiators


def wave_winner(trace: Sequence) -> Optional[tuple[int, object]]:
    """(node, wave) of the first R10/R11 completion in a trace."""
    for i, st in enumerate(trace):
        for p, r in st.fired:
            if r in (Rule.R10, Rule.R11):
                return p, trace[i - 1].configuration.states[p].wave
    return None
