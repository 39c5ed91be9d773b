import os
import random

import pytest
from hypothesis import HealthCheck, settings

from copif.overlay import build_overlay
from copif.protocol import CLEAN, Configuration, NodeState, Phase
from copif.prefix_core import WaveId

settings.register_profile("ci", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=60)
settings.load_profile("ci")

B, C, FC, FI = Phase.B, Phase.C, Phase.FC, Phase.FI


def make_tree(*labels, peers=4, alphabet="01", max_length=8, seed=0):
    """Tree built by inserting ``labels`` at the root, in order."""
    return build_overlay(list(labels), peers, alphabet, max_length, seed, random_entry=False)


def at(ov, label):
    p = ov.find_label(label)
    assert p is not None, label
    return p


def config(ov, states=None, requests=()):
    """Configuration from {label: NodeState}; unnamed nodes are clean."""
    cfg = Configuration.clean(ov)
    cfg = cfg.with_states({at(ov, lab): s for lab, s in (states or {}).items()})
    return cfg.with_requests([at(ov, lab) for lab in requests])


def wave_of(ov, label):
    return ov.own_wave[at(ov, label)]


def pgcp_violations(ov):
    """Brute-force check of both prefix-tree properties over the whole tree."""
    bad = []
    for p, nd in ov.nodes.items():
        stack = list(nd.children)
        while stack:
            q = stack.pop()
            lq = ov.nodes[q].label
            if not (len(nd.label) < len(lq) and lq[: len(nd.label)] == nd.label):
                bad.append(("prefix", p, q))
            stack.extend(ov.nodes[q].children)
        kids = [ov.nodes[c].label for c in nd.children]
        for i in range(len(kids)):
            for j in range(i + 1, len(kids)):
                if os.path.commonprefix([kids[i], kids[j]]) != nd.label:
                    bad.append(("gcp", p, kids[i], kids[j]))
    return bad


@pytest.fixture
def rng():
    return random.Random(1234)
