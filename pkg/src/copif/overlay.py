"""The DLPT overlay: a proper greatest-common-prefix tree mapped onto peers.

`Overlay` values are treated as immutable snapshots.  Bulk construction goes
through `TreeBuilder`, which mutates in place and freezes once; the
functional `insert_service` thaws, inserts and re-freezes.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .prefix_core import Label, WaveId, check_label, gcp, is_prefix, is_proper_prefix, make_alphabet

ServiceRecord = tuple[str, str]


class UnknownNode(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class OverlayNode:
    node_id: int
    label: Label
    parent: Optional[int]
    children: tuple[int, ...]
    host_peer: int
    stored_services: tuple[ServiceRecord, ...] = ()


class Overlay:
    """A labeled tree plus the peers hosting its nodes.

    Nothing here enforces the PGCP properties: corrupted trees must be
    representable so the protocol can detect them.
    """

    def __init__(
        self,
        nodes: Mapping[int, OverlayNode],
        root: int,
        peers: Iterable[int],
        alphabet: str = "01",
        max_length: int = 18,
    ):
        self.nodes: Mapping[int, OverlayNode] = dict(nodes)
        self.root = root
        self.peers = frozenset(peers)
        self.alphabet = alphabet
        self.max_length = max_length
        if root not in self.nodes:
            raise UnknownNode(root)

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Overlay):
            return NotImplemented
        return (self.root, self.nodes, self.peers) == (other.root, other.nodes, other.peers)

    def __repr__(self) -> str:
        return f"Overlay({len(self.nodes)} nodes, {len(self.peers)} peers)"

    def node(self, p: int) -> OverlayNode:
        try:
            return self.nodes[p]
        except KeyError:
            raise UnknownNode(p) from None

    def label(self, p: int) -> Label:
        return self.node(p).label

    @cached_property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj = {}
        for p, nd in self.nodes.items():
            adj[p] = nd.children if nd.parent is None else (nd.parent,) + nd.children
        return adj

    @cached_property
    def own_wave(self) -> dict[int, WaveId]:
        """The wave id each node would use as an initiator."""
        return {p: WaveId(nd.host_peer, nd.label) for p, nd in self.nodes.items()}

    @cached_property
    def position_ok(self) -> dict[int, bool]:
        return {p: local_position_correct(self, p) for p in self.nodes}

    @cached_property
    def nodes_by_peer(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for p in sorted(self.nodes):
            out.setdefault(self.nodes[p].host_peer, []).append(p)
        return {peer: tuple(ps) for peer, ps in out.items()}

    @cached_property
    def node_by_address(self) -> dict[WaveId, int]:
        out: dict[WaveId, int] = {}
        for p in sorted(self.nodes):
            out.setdefault(self.own_wave[p], p)
        return out

    def find_label(self, label: Label) -> Optional[int]:
        for p in sorted(self.nodes):
            if self.nodes[p].label == label:
                return p
        return None

    def edges(self) -> list[tuple[int, int]]:
        return [(nd.parent, p) for p, nd in sorted(self.nodes.items()) if nd.parent is not None]

    def thaw(self) -> "TreeBuilder":
        tb = TreeBuilder(self.peers, self.alphabet, self.max_length, root_peer=self.nodes[self.root].host_peer)
        tb.label.clear(); tb.parent.clear(); tb.children.clear(); tb.host.clear(); tb.services.clear()
        for p, nd in self.nodes.items():
            tb.label[p] = nd.label
            tb.parent[p] = nd.parent
            tb.children[p] = list(nd.children)
            tb.host[p] = nd.host_peer
            tb.services[p] = list(nd.stored_services)
        tb.root = self.root
        tb.next_id = max(self.nodes) + 1
        return tb


def _route(
    label_of: Callable[[int], Label],
    parent_of: Callable[[int], Optional[int]],
    children_of: Callable[[int], Sequence[int]],
    start: int,
    target: Label,
) -> tuple[int, int]:
    """Lexicographic walk; returns (final node, hop count)."""
    p, hops = start, 0
    while True:
        lp = label_of(p)
        if lp == target:
            return p, hops
        if not is_proper_prefix(lp, target):
            up = parent_of(p)
            if up is None:
                return p, hops
            p, hops = up, hops + 1
            continue
        nxt = next((q for q in children_of(p) if is_prefix(label_of(q), target)), None)
        if nxt is None:
            return p, hops
        p, hops = nxt, hops + 1


class TreeBuilder:
    """Mutable tree used to grow an overlay by repeated insertions."""

    def __init__(
        self,
        peers: Iterable[int],
        alphabet: str = "01",
        max_length: int = 18,
        root_peer: Optional[int] = None,
        rng: Optional[random.Random] = None,
    ):
        self.peers = tuple(sorted(set(peers)))
        if not self.peers:
            raise ValueError("need at least one peer")
        self.alphabet = alphabet
        self.max_length = max_length
        self.rng = rng or random.Random(0)
        self.label: dict[int, Label] = {}
        self.parent: dict[int, Optional[int]] = {}
        self.children: dict[int, list[int]] = {}
        self.host: dict[int, int] = {}
        self.services: dict[int, list[ServiceRecord]] = {}
        self.next_id = 0
        self.root = self._new_node("", None, self.peers[0] if root_peer is None else root_peer)

    def _new_node(self, label: Label, parent: Optional[int], host: Optional[int] = None) -> int:
        p = self.next_id
        self.next_id += 1
        self.label[p] = label
        self.parent[p] = parent
        self.children[p] = []
        self.host[p] = self.rng.choice(self.peers) if host is None else host
        self.services[p] = []
        if parent is not None:
            self._attach(parent, p)
        return p

    def _attach(self, parent: int, child: int) -> None:
        self.parent[child] = parent
        kids = self.children[parent]
        kids.append(child)
        kids.sort(key=lambda q: (self.label[q], q))

    def route(self, start: int, target: Label) -> tuple[int, int]:
        return _route(self.label.__getitem__, self.parent.__getitem__, self.children.__getitem__, start, target)

    def insert(self, service_label: Label, entry: Optional[int] = None, record: Optional[ServiceRecord] = None) -> int:
        """Route from ``entry`` and store the service, growing the tree if needed.

        Returns the node now carrying ``service_label``.
        """
        check_label(service_label, self.alphabet, self.max_length)
        if entry is None:
            entry = self.root
        p, _ = self.route(entry, service_label)
        if self.label[p] != service_label:
            p = self._grow(p, service_label)
        if record is not None:
            self.services[p].append(record)
        return p

    def _grow(self, p: int, target: Label) -> int:
        lp = self.label[p]
        # children's labels diverge right after lp, so at most one child shares target's next symbol
        c = next(
            (q for q in self.children[p] if len(gcp(self.label[q], target)) > len(lp)),
            None,
        )
        if c is None:
            return self._new_node(target, p)
        g = gcp(self.label[c], target)
        self.children[p].remove(c)
        if g == target:
            mid = self._new_node(target, p)
            self._attach(mid, c)
            return mid
        mid = self._new_node(g, p)
        self._attach(mid, c)
        return self._new_node(target, mid)

    def freeze(self) -> Overlay:
        nodes = {
            p: OverlayNode(p, self.label[p], self.parent[p], tuple(self.children[p]), self.host[p], tuple(self.services[p]))
            for p in self.label
        }
        return Overlay(nodes, self.root, self.peers, self.alphabet, self.max_length)


def empty_overlay(num_peers: int = 16, alphabet: str = "01", max_length: int = 18, root_peer: int = 0) -> Overlay:
    """A tree holding only the root (empty label)."""
    return TreeBuilder(range(num_peers), alphabet, max_length, root_peer=root_peer).freeze()


def build_overlay(
    labels: Sequence[Label],
    num_peers: int = 16,
    alphabet: str = "01",
    max_length: int = 18,
    seed: int | str = 0,
    random_entry: bool = True,
) -> Overlay:
    """Insert ``labels`` in order into an empty tree, entering at random nodes."""
    rng = random.Random(seed)
    tb = TreeBuilder(range(num_peers), alphabet, max_length, root_peer=rng.randrange(num_peers), rng=rng)
    for i, lab in enumerate(labels):
        entry = rng.choice(list(tb.label)) if random_entry else tb.root
        tb.insert(lab, entry, (lab, f"service-{i}"))
    return tb.freeze()


def random_labels(n: int, alphabet: str, max_length: int, rng: random.Random) -> list[Label]:
    """``n`` labels drawn uniformly from all words of length <= max_length."""
    a = len(alphabet)
    weights = [a**i for i in range(max_length + 1)]
    lengths = rng.choices(range(max_length + 1), weights=weights, k=n)
    return ["".join(rng.choice(alphabet) for _ in range(m)) for m in lengths]


def neighbors(overlay: Overlay, p: int) -> frozenset[int]:
    overlay.node(p)
    return frozenset(overlay.adjacency[p])


def insert_service(
    overlay: Overlay,
    entry_node: int,
    service_label: Label,
    placement_rng: int | random.Random = 0,
    record: Optional[ServiceRecord] = None,
) -> Overlay:
    overlay.node(entry_node)
    tb = overlay.thaw()
    tb.rng = placement_rng if isinstance(placement_rng, random.Random) else random.Random(placement_rng)
    tb.insert(service_label, entry_node, record if record is not None else (service_label, ""))
    return tb.freeze()


def route_request(overlay: Overlay, start: int, target: Label) -> int:
    overlay.node(start)
    nodes = overlay.nodes
    p, _ = _route(
        lambda q: nodes[q].label, lambda q: nodes[q].parent, lambda q: nodes[q].children, start, target
    )
    return p


def route_hops(overlay: Overlay, start: int, target: Label) -> int:
    nodes = overlay.nodes
    _, hops = _route(
        lambda q: nodes[q].label, lambda q: nodes[q].parent, lambda q: nodes[q].children, start, target
    )
    return hops


def local_position_correct(overlay: Overlay, p: int) -> bool:
    """Both PGCP properties evaluated in p's one-hop neighbourhood."""
    nd = overlay.nodes[p]
    lp = nd.label
    if nd.parent is not None and not is_proper_prefix(overlay.nodes[nd.parent].label, lp):
        return False
    kids = [overlay.nodes[c].label for c in nd.children]
    if not all(is_proper_prefix(lp, lc) for lc in kids):
        return False
    return all(gcp(a, b) == lp for a, b in combinations(kids, 2))


def tree_height(overlay: Overlay) -> int:
    depth = {overlay.root: 0}
    frontier = [overlay.root]
    while frontier:
        nxt = []
        for p in frontier:
            for c in overlay.nodes[p].children:
                depth[c] = depth[p] + 1
                nxt.append(c)
        frontier = nxt
    return max(depth.values())


def relabel(overlay: Overlay, p: int, label: Label) -> Overlay:
    """Copy of the overlay with one label replaced (no validity checks)."""
    nodes = dict(overlay.nodes)
    nd = nodes[p]
    nodes[p] = OverlayNode(p, label, nd.parent, nd.children, nd.host_peer, nd.stored_services)
    return Overlay(nodes, overlay.root, overlay.peers, overlay.alphabet, overlay.max_length)


def controlled_height_overlay(height: int, num_peers: int = 16, seed: int | str = 0, alphabet: str = "01") -> Overlay:
    """Two label chains ``0, 00, ...`` and ``1, 11, ...`` under the root.

    The tree has the requested height and diameter ``2 * height``.
    """
    if height < 0:
        raise ValueError("height must be >= 0")
    labels = [s * i for i in range(1, height + 1) for s in alphabet[:2]]
    return build_overlay(labels, num_peers, alphabet, max(height, 1), seed, random_entry=False)


# -- text serialization: node_id<TAB>label<TAB>parent|-<TAB>host_peer ----------


def dump_tree(overlay: Overlay) -> str:
    lines = []
    for p in sorted(overlay.nodes):
        nd = overlay.nodes[p]
        parent = "-" if nd.parent is None else str(nd.parent)
        lines.append(f"{p}\t{nd.label}\t{parent}\t{nd.host_peer}")
    return "\n".join(lines) + "\n"


def load_tree(text: str, alphabet: Optional[str] = None, max_length: Optional[int] = None) -> Overlay:
    label: dict[int, Label] = {}
    parent: dict[int, Optional[int]] = {}
    host: dict[int, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ValueError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
        p = int(fields[0])
        if p in label:
            raise ValueError(f"line {lineno}: duplicate node id {p}")
        label[p] = fields[1]
        parent[p] = None if fields[2] == "-" else int(fields[2])
        host[p] = int(fields[3])
    roots = [p for p, q in parent.items() if q is None]
    if len(roots) != 1:
        raise ValueError(f"expected exactly one root, found {len(roots)}")
    children: dict[int, list[int]] = {p: [] for p in label}
    for p, q in parent.items():
        if q is not None:
            if q not in label:
                raise ValueError(f"node {p} has unknown parent {q}")
            children[q].append(p)
    nodes = {
        p: OverlayNode(p, label[p], parent[p], tuple(sorted(children[p], key=lambda c: (label[c], c))), host[p])
        for p in label
    }
    if alphabet is None:
        alphabet = "".join(sorted(set("".join(label.values())))) or make_alphabet(2)
    if max_length is None:
        max_length = max((len(v) for v in label.values()), default=0)
    return Overlay(nodes, roots[0], set(host.values()), alphabet, max_length)
