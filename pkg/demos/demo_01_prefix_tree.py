"""
Building a prefix tree of services
==================================

Services are named by words over a small alphabet.  The overlay keeps them
in a tree where every node's label is the greatest common prefix of its
children, so a lookup can walk towards the target one hop at a time.
"""

import random

from copif.overlay import build_overlay, empty_overlay, insert_service, route_hops, route_request, tree_height

# start from an empty tree (only the root, labelled with the empty word)
ov = empty_overlay(num_peers=4, alphabet="01", max_length=6)
print(len(ov), "node:", repr(ov.nodes[ov.root].label))

# insert a few services; internal nodes appear where two labels diverge
for label in ["0101", "0110", "1", "01"]:
    ov = insert_service(ov, ov.root, label)
for p, nd in sorted(ov.nodes.items(), key=lambda kv: kv[1].label):
    print(f"{nd.label or '<root>':8} parent={nd.parent} peer={nd.host_peer}")

# lookups may start anywhere and reach the node holding the label
start = max(ov.nodes)
target = route_request(ov, start, "0110")
print("route from", ov.nodes[start].label, "->", ov.nodes[target].label, "in", route_hops(ov, start, "0110"), "hops")

# a bigger random tree: labels uniform over words of length <= 18
rng = random.Random(0)
labels = ["".join(rng.choice("01") for _ in range(rng.randint(1, 18))) for _ in range(500)]
big = build_overlay(labels, num_peers=16, seed=0)
print(len(big), "nodes, height", tree_height(big))

# every node checks its own position from its neighbourhood alone
print("all positions correct:", all(big.position_ok.values()))
