"""Guarded rules R1-R20 of the collaborative PIF protocol.

Guards read a node's own state and its neighbours' states only.  Readings of
the ambiguous guard atoms:

* ``min_p`` is the set of broadcasting neighbours that do not point at p and
  carry the smallest wave among those.
* phase ``F`` without a suffix (R18, R19) becomes FC or FI according to the
  node's own position check, see :func:`feedback_correctness`.
* internal nodes and the initiator fold their own position check into the
  feedback verdict (R8-R11), leaves do so through R6/R7.
* R12 also releases two feedback nodes that name each other as father, a
  corrupted pair no other rule can leave.
* a clean leaf reacts to a broadcasting neighbour with R6/R7 only when it has
  no pending request (a requesting node initiates with R1 instead).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from ..overlay import Overlay
from ..prefix_core import WaveId
from .state import (
    ALL_RULES,
    FEEDBACK,
    AppMessage,
    Configuration,
    DlptState,
    MessageKind,
    NodeState,
    Phase,
    Rule,
)

B, C, FC, FI = Phase.B, Phase.C, Phase.FC, Phase.FI

# order in which a node picks among several enabled rules; R2 first so that a
# subscription is never skipped, then corrections, then normal progress
PRIORITY: tuple[Rule, ...] = (
    Rule.R2,
    Rule.R13, Rule.R17, Rule.R15, Rule.R16, Rule.R14, Rule.R18, Rule.R19, Rule.R20,
    Rule.R1, Rule.R5, Rule.R4, Rule.R10, Rule.R11, Rule.R6, Rule.R7, Rule.R8, Rule.R9, Rule.R12, Rule.R3,
)
_RANK = {r: i for i, r in enumerate(PRIORITY)}


class RuleNotEnabled(RuntimeError):
    pass


def choose_rule(rules: Sequence[Rule]) -> Rule:
    return min(rules, key=_RANK.__getitem__)


def _guards(ov: Overlay, states: Mapping[int, NodeState], p: int, allowed=ALL_RULES) -> tuple[Rule, ...]:
    s = states[p]
    nbrs = ov.adjacency[p]
    ph = s.phase
    out: list[Rule] = []

    # broadcasting neighbours not pointing at p, and their minimum wave
    minwave: Optional[WaveId] = None
    for q in nbrs:
        sq = states[q]
        if sq.phase is B and sq.father != p and (minwave is None or sq.wave < minwave):
            minwave = sq.wave

    if ph is C:
        req = s.request_pif
        if req:
            if not any(states[q].father == p for q in nbrs):
                out.append(Rule.R1)
        elif minwave is not None:
            same = [q for q in nbrs if states[q].phase is B and states[q].wave == minwave]
            fb_at_p = any(states[q].phase in FEEDBACK and states[q].father == p for q in nbrs)
            if len(same) == 1 and not fb_at_p:
                out.append(Rule.R3)
            if len(nbrs) == 1:
                out.append(Rule.R6 if ov.position_ok[p] else Rule.R7)
        # R19: two broadcasting neighbours with a common wave, neither fathered by p
        seen: set[WaveId] = set()
        for q in nbrs:
            sq = states[q]
            if sq.phase is B and sq.father != p:
                if sq.wave in seen:
                    out.append(Rule.R19)
                    break
                seen.add(sq.wave)

    elif ph is B:
        f = s.father
        wave = s.wave
        if f is None:
            own = ov.own_wave[p]
            if minwave is not None and minwave < wave:
                out.append(Rule.R5)
            if wave != own:
                out.append(Rule.R13)
            elif all(states[q].phase in FEEDBACK and states[q].father == p for q in nbrs):
                ok = ov.position_ok[p] and all(states[q].phase is FC for q in nbrs)
                out.append(Rule.R10 if ok else Rule.R11)
        else:
            sf = states[f]
            if s.request_pif and s.subscribed_wave != wave:
                out.append(Rule.R2)
            if minwave is not None and minwave < wave:
                if any(q != f and states[q].phase is B and states[q].father != p and states[q].wave == minwave for q in nbrs):
                    out.append(Rule.R4)
            if sf.phase is B:
                others_fb = True
                any_fi = False
                for q in nbrs:
                    if q == f:
                        continue
                    sq = states[q]
                    if sq.phase not in FEEDBACK or sq.father != p:
                        others_fb = False
                        break
                    if sq.phase is FI:
                        any_fi = True
                if others_fb:
                    out.append(Rule.R8 if ov.position_ok[p] and not any_fi else Rule.R9)
                if sf.wave > wave:
                    out.append(Rule.R15)
                if sf.wave == wave and sf.father == p:
                    out.append(Rule.R17)
                if sf.father != p and sf.wave < wave:
                    # R20: father's wave is smaller than some other candidate's
                    if any(
                        q != f and states[q].phase is B and states[q].father != p and states[q].wave > sf.wave
                        for q in nbrs
                    ):
                        out.append(Rule.R20)
            else:
                out.append(Rule.R15)
                if sf.phase in FEEDBACK:
                    out.append(Rule.R16)
            if any(q != f and states[q].phase is B and states[q].wave == wave and states[q].father != p for q in nbrs):
                out.append(Rule.R18)

    else:  # feedback phases
        f = s.father
        if f is None or states[f].phase is C or (states[f].phase in FEEDBACK and states[f].father == p):
            out.append(Rule.R12)
        if f is not None and any(q != f and states[q].phase not in FEEDBACK for q in nbrs):
            out.append(Rule.R14)

    if allowed is not ALL_RULES:
        out = [r for r in out if r in allowed]
    out.sort()
    return tuple(out)


def enabled_rules(cfg: Configuration, p: int, allowed=ALL_RULES) -> frozenset[Rule]:
    """Rules whose guard holds at node ``p`` in ``cfg``."""
    cfg.overlay.node(p)
    return frozenset(_guards(cfg.overlay, cfg.states, p, allowed))


def feedback_correctness(cfg: Configuration, p: int) -> Phase:
    return FC if cfg.overlay.position_ok[p] else FI


@dataclass(frozen=True, slots=True)
class Effect:
    state: NodeState
    messages: tuple[AppMessage, ...] = ()
    verdict: Optional[tuple[WaveId, DlptState]] = None


def _pick(cands: list[int], rng: Optional[random.Random]) -> int:
    cands.sort()
    if len(cands) == 1 or rng is None:
        return cands[0]
    return rng.choice(cands)


def execute(
    ov: Overlay, states: Mapping[int, NodeState], p: int, rule: Rule, rng: Optional[random.Random] = None
) -> Effect:
    """Statement of ``rule`` at ``p``, computed against the given (pre-step) states."""
    s = states[p]
    nbrs = ov.adjacency[p]
    host = ov.nodes[p].host_peer
    fphase = FC if ov.position_ok[p] else FI

    def min_cands() -> tuple[WaveId, list[int]]:
        cands = [q for q in nbrs if states[q].phase is B and states[q].father != p]
        m = min(states[q].wave for q in cands)
        return m, [q for q in cands if states[q].wave == m]

    if rule is Rule.R1:
        return Effect(s.moved(B, ov.own_wave[p], None, dlpt_state=DlptState.UNKNOWN))
    if rule is Rule.R2:
        msg = AppMessage(MessageKind.INTERESTED, host, s.wave.peer_id, s.wave)
        return Effect(replace(s, subscribed_wave=s.wave, dlpt_state=DlptState.UNKNOWN), (msg,))
    if rule is Rule.R3:
        m, qs = min_cands()
        return Effect(s.moved(B, m, qs[0]))
    if rule is Rule.R4:
        m, qs = min_cands()
        q = _pick([q for q in qs if q != s.father], rng)
        return Effect(s.moved(B, m, q, subscribed_wave=s.subscribed_wave))
    if rule is Rule.R5:
        m, qs = min_cands()
        q = _pick(qs, rng)
        msg = AppMessage(MessageKind.INTERESTED, host, m.peer_id, m)
        return Effect(s.moved(B, m, q, subscribed_wave=m), (msg,))
    if rule in (Rule.R6, Rule.R7):
        (q,) = nbrs
        return Effect(s.moved(FC if rule is Rule.R6 else FI, states[q].wave, q))
    if rule in (Rule.R8, Rule.R9):
        f = s.father
        return Effect(s.moved(FC if rule is Rule.R8 else FI, states[f].wave, f))
    if rule in (Rule.R10, Rule.R11):
        verdict = DlptState.CORRECT if rule is Rule.R10 else DlptState.INCORRECT
        kind = MessageKind.DLPT_CORRECT if rule is Rule.R10 else MessageKind.DLPT_INCORRECT
        msgs = tuple(AppMessage(kind, host, peer) for peer in sorted(s.list_to_contact))
        new = s.moved(C, request_pif=False, dlpt_state=DlptState.UNKNOWN, list_to_contact=frozenset())
        return Effect(new, msgs, (s.wave, verdict))
    if rule in (Rule.R12, Rule.R13, Rule.R14, Rule.R15, Rule.R16, Rule.R17):
        return Effect(s.moved(C))
    if rule is Rule.R18:
        return Effect(s.moved(fphase, s.wave, s.father))
    if rule is Rule.R19:
        seen: dict[WaveId, list[int]] = {}
        for q in nbrs:
            sq = states[q]
            if sq.phase is B and sq.father != p:
                seen.setdefault(sq.wave, []).append(q)
        cands = [q for qs in seen.values() if len(qs) > 1 for q in qs]
        q = _pick(cands, rng)
        return Effect(s.moved(fphase, states[q].wave, q))
    if rule is Rule.R20:
        f = s.father
        return Effect(s.moved(B, states[f].wave, f, subscribed_wave=s.subscribed_wave))
    raise ValueError(rule)  # pragma: no cover


def apply_rule(cfg: Configuration, p: int, rule: Rule, tie_rng: int | random.Random | None = None) -> Configuration:
    """Execute one enabled rule at ``p`` and return the resulting configuration."""
    if rule not in _guards(cfg.overlay, cfg.states, p):
        raise RuleNotEnabled(f"{rule} is not enabled at node {p}")
    rng = tie_rng if isinstance(tie_rng, random.Random) or tie_rng is None else random.Random(tie_rng)
    eff = execute(cfg.overlay, cfg.states, p, rule, rng)
    answered = dict(cfg.answered)
    if eff.verdict is not None:
        answered[eff.verdict[0]] = eff.verdict[1]
    new = cfg.with_states({p: eff.state})
    return replace(new, mailbox=cfg.mailbox + eff.messages, answered=answered)
