"""Application-level message reception (subscriptions and verdicts)."""
from __future__ import annotations

from dataclasses import replace
from typing import Mapping

from ..overlay import Overlay
from .state import AppMessage, Configuration, DlptState, MessageKind, NodeState

_VERDICT = {
    MessageKind.DLPT_CORRECT: DlptState.CORRECT,
    MessageKind.DLPT_INCORRECT: DlptState.INCORRECT,
}


def receive(
    ov: Overlay, states: Mapping[int, NodeState], msg: AppMessage
) -> tuple[dict[int, NodeState], list[AppMessage]]:
    """Effect of delivering ``msg``: (state updates, follow-up messages).

    An empty update dict with no follow-ups means the message was dropped.

    Verdicts go to every node of the recipient peer still waiting for an
    answer (pending request or own subscribers).  Such a node records the
    verdict, drops its request and relays the verdict to its own subscribers,
    which is how answers reach nodes that subscribed to an initiator that
    later resigned.
    """
    if msg.kind is MessageKind.INTERESTED:
        p = ov.node_by_address.get(msg.payload)
        if p is None or ov.nodes[p].host_peer != msg.to_peer:
            return {}, []
        s = states[p]
        return {p: replace(s, list_to_contact=s.list_to_contact | {msg.from_peer})}, []

    if msg.kind is MessageKind.CONTACT_FOR_ANSWER:
        return {}, [AppMessage(MessageKind.INTERESTED, msg.to_peer, msg.payload.peer_id, msg.payload)]

    verdict = _VERDICT[msg.kind]
    updates: dict[int, NodeState] = {}
    relay: list[AppMessage] = []
    for p in ov.nodes_by_peer.get(msg.to_peer, ()):
        s = states[p]
        if not (s.request_pif or s.list_to_contact):
            continue
        relay.extend(AppMessage(msg.kind, msg.to_peer, peer) for peer in sorted(s.list_to_contact))
        updates[p] = replace(s, dlpt_state=verdict, request_pif=False, list_to_contact=frozenset())
    return updates, relay


def deliver_message(cfg: Configuration, msg: AppMessage) -> Configuration:
    """Consume ``msg`` from the mailbox and apply its reception event."""
    box = list(cfg.mailbox)
    try:
        box.remove(msg)
    except ValueError:
        raise ValueError(f"{msg} is not in the mailbox") from None
    updates, follow = receive(cfg.overlay, cfg.states, msg)
    dropped = cfg.dropped
    if not updates and not follow:
        dropped += 1
    new = cfg.with_states(updates) if updates else cfg
    return replace(new, mailbox=tuple(box) + tuple(follow), dropped=dropped)
