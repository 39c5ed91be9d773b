"""JSON form of a `Configuration`, used by the ``verify`` and ``run`` commands.

Layout::

    {"alphabet": "01", "max_length": 18,
     "tree": [[node_id, label, parent_or_null, host_peer], ...],
     "states": {"<node_id>": {"phase": "B", "wave": [peer, label], "father": 3,
                              "request": false, "dlpt": "Unknown", "contact": [..]}},
     "mailbox": [{"kind": "Interested", "from": 1, "to": 2, "payload": [peer, label]}]}

Nodes missing from ``states`` are clean.
"""
from __future__ import annotations

import json
from typing import Any

from .overlay import Overlay, OverlayNode
from .prefix_core import WaveId
from .protocol.state import CLEAN, AppMessage, Configuration, DlptState, MessageKind, NodeState, Phase


def _wave(w) -> WaveId | None:
    return None if w is None else WaveId(int(w[0]), str(w[1]))


def overlay_to_dict(ov: Overlay) -> dict[str, Any]:
    tree = [[p, nd.label, nd.parent, nd.host_peer] for p, nd in sorted(ov.nodes.items())]
    return {"alphabet": ov.alphabet, "max_length": ov.max_length, "peers": sorted(ov.peers), "tree": tree}


def overlay_from_dict(d: dict[str, Any]) -> Overlay:
    rows = d["tree"]
    kids: dict[int, list[int]] = {int(r[0]): [] for r in rows}
    labels = {int(r[0]): str(r[1]) for r in rows}
    for p, _, parent, _ in rows:
        if parent is not None:
            if int(parent) not in kids:
                raise ValueError(f"node {p} has unknown parent {parent}")
            kids[int(parent)].append(int(p))
    nodes = {}
    for p, label, parent, host in rows:
        ch = tuple(sorted(kids[int(p)], key=lambda c: (labels[c], c)))
        nodes[int(p)] = OverlayNode(int(p), str(label), None if parent is None else int(parent), ch, int(host))
    roots = [p for p, nd in nodes.items() if nd.parent is None]
    if len(roots) != 1:
        raise ValueError(f"expected exactly one root, found {len(roots)}")
    peers = d.get("peers") or sorted({nd.host_peer for nd in nodes.values()})
    return Overlay(nodes, roots[0], peers, d.get("alphabet", "01"), int(d.get("max_length", 18)))


def state_to_dict(s: NodeState) -> dict[str, Any]:
    return {
        "phase": s.phase.value,
        "wave": None if s.wave is None else [s.wave.peer_id, s.wave.initiator_label],
        "father": s.father,
        "request": s.request_pif,
        "dlpt": s.dlpt_state.value,
        "contact": sorted(s.list_to_contact),
    }


def state_from_dict(d: dict[str, Any]) -> NodeState:
    return NodeState(
        Phase(d.get("phase", "C")),
        _wave(d.get("wave")),
        d.get("father"),
        bool(d.get("request", False)),
        DlptState(d.get("dlpt", "Unknown")),
        frozenset(int(x) for x in d.get("contact", ())),
    )


def config_to_dict(cfg: Configuration) -> dict[str, Any]:
    out = overlay_to_dict(cfg.overlay)
    out["states"] = {str(p): state_to_dict(s) for p, s in sorted(cfg.states.items()) if s != CLEAN}
    out["mailbox"] = [
        {
            "kind": m.kind.value,
            "from": m.from_peer,
            "to": m.to_peer,
            "payload": None if m.payload is None else list(m.payload),
        }
        for m in cfg.mailbox
    ]
    return out


def config_from_dict(d: dict[str, Any]) -> Configuration:
    ov = overlay_from_dict(d)
    states = {p: CLEAN for p in ov.nodes}
    for key, sd in d.get("states", {}).items():
        p = int(key)
        if p not in states:
            raise ValueError(f"state given for unknown node {p}")
        s = state_from_dict(sd)
        if s.father is not None and s.father not in ov.adjacency[p]:
            raise ValueError(f"node {p}: father {s.father} is not a neighbour")
        states[p] = s
    mailbox = tuple(
        AppMessage(MessageKind(m["kind"]), int(m["from"]), int(m["to"]), _wave(m.get("payload")))
        for m in d.get("mailbox", ())
    )
    return Configuration(ov, states, mailbox)


def dumps(cfg: Configuration) -> str:
    return json.dumps(config_to_dict(cfg), indent=1, sort_keys=True)


def loads(text: str) -> Configuration:
    return config_from_dict(json.loads(text))
