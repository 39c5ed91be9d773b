import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from copif import configio
from copif.harness import experiment_tree, inject_faults
from copif.prefix_core import WaveId
from copif.protocol import AppMessage, Configuration, MessageKind


def _structure(ov):
    return {p: (nd.label, nd.parent, nd.children, nd.host_peer) for p, nd in ov.nodes.items()}


@given(st.integers(0, 10**6))
def test_roundtrip(seed):
    ov = experiment_tree(25, seed, 0, alphabet_size=3, max_length=6)
    cfg = inject_faults(Configuration.clean(ov), 10, seed)
    cfg = cfg.with_requests([ov.root])
    back = configio.loads(configio.dumps(cfg))
    assert _structure(back.overlay) == _structure(ov)
    assert back.states == cfg.states
    assert back.overlay.alphabet == ov.alphabet


def test_mailbox_roundtrip():
    ov = experiment_tree(5, 0, 0)
    msg = AppMessage(MessageKind.INTERESTED, 1, 2, WaveId(2, "01"))
    cfg = Configuration(ov, Configuration.clean(ov).states, (msg, AppMessage(MessageKind.DLPT_CORRECT, 2, 1)))
    assert configio.loads(configio.dumps(cfg)).mailbox == cfg.mailbox


def test_clean_states_omitted():
    d = configio.config_to_dict(Configuration.clean(experiment_tree(10, 0, 0)))
    assert d["states"] == {} and d["mailbox"] == []


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["tree"].append([999, "1", 12345, 0]),
        lambda d: d["tree"][0].__setitem__(2, 1),
        lambda d: d["states"].__setitem__("999", {"phase": "B"}),
        lambda d: d["states"].__setitem__("0", {"phase": "B", "wave": [0, ""], "father": 0}),
    ],
)
def test_malformed(mutate):
    d = configio.config_to_dict(Configuration.clean(experiment_tree(10, 0, 0)))
    mutate(d)
    with pytest.raises(ValueError):
        configio.loads(json.dumps(d))
