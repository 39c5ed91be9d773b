import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import B, C, FC, FI, at, config, make_tree
from copif.harness import experiment_tree, inject_faults
from copif.prefix_core import WaveId
from copif.protocol import ALL_RULES, CORRECTION_RULES, MERGE_RULES, Configuration, NodeState, Rule
from copif.scheduler import Simulation, run_with_trace
from copif.verification import (
    DetectorKind,
    all_reports,
    compute_subtree,
    detect_abnormal_A,
    detect_abnormal_B,
    detect_dynamic_abnormal,
    detect_trap,
    detectors_silent,
    is_copif_wave,
    is_quiescent,
    partial_final_reached,
    pif_friendly_sets,
    wave_winner,
)

W, V = WaveId(1, "a"), WaveId(2, "b")


def test_clean_configuration_is_silent():
    cfg = Configuration.clean(make_tree("0", "1", "01"))
    assert detectors_silent(cfg)
    assert all(not r.present for r in all_reports(cfg))
    assert len(all_reports(cfg)) == 7


def test_a1_foreign_initiator():
    ov = make_tree("0", peers=10)
    p = at(ov, "0")
    peer = ov.nodes[p].host_peer
    cfg = config(ov, {"0": NodeState(B, WaveId(peer, "1"))})
    assert detect_abnormal_A(cfg)[DetectorKind.A1].witnesses == ((p,),)
    ok = config(ov, {"0": NodeState(B, ov.own_wave[p])})
    assert not detect_abnormal_A(ok)[DetectorKind.A1].present


def test_a2_a3_a4():
    ov = make_tree("0", "01")
    a, b = at(ov, "0"), at(ov, "01")
    rep = detect_abnormal_A(config(ov, {"0": NodeState(B, W, b), "01": NodeState(B, W, a)}))
    assert set(rep[DetectorKind.A3].witnesses) == {(a, b), (b, a)}
    rep = detect_abnormal_A(config(ov, {"0": NodeState(B, V, ov.root), "01": NodeState(B, W, a)}))
    assert rep[DetectorKind.A2].witnesses == ((b, a),)
    rep = detect_abnormal_A(config(ov, {"0": NodeState(FC, W, ov.root), "01": NodeState(B, W, a)}))
    assert (b, a) in rep[DetectorKind.A4].witnesses


def test_abnormal_b():
    ov = make_tree("0", "1")
    l, r = at(ov, "0"), at(ov, "1")
    same = Configuration.clean(ov).with_states({l: NodeState(B, W), r: NodeState(B, W)})
    assert detect_abnormal_B(same).witnesses == ((ov.root, l, r),)
    diff = Configuration.clean(ov).with_states({l: NodeState(B, W), r: NodeState(B, V)})
    assert not detect_abnormal_B(diff).present


def test_dynamic_abnormal():
    ov = make_tree("0", "01")
    a, b = at(ov, "0"), at(ov, "01")
    cfg = config(ov, {"": NodeState(B, W), "0": NodeState(B, W, ov.root), "01": NodeState(B, W)})
    assert detect_dynamic_abnormal(cfg).witnesses == ((min(a, b), max(a, b)),)
    cfg = config(ov, {"": NodeState(B, W), "0": NodeState(B, W, ov.root), "01": NodeState(B, W, a)})
    assert not detect_dynamic_abnormal(cfg).present


def test_trap_examples():
    ov = make_tree("0", "01", "011")
    ends = {"": NodeState(B, W), "01": NodeState(B, W, at(ov, "011"))}
    cfg = config(ov, ends)
    assert detect_trap(cfg).witnesses == ((ov.root, at(ov, "0"), at(ov, "01")),)
    cfg = config(ov, ends | {"0": NodeState(B, W, ov.root)})
    assert not detect_trap(cfg).present
    # the father of an endpoint pointing into the path disqualifies it
    cfg = config(ov, {"": NodeState(B, W, at(ov, "0")), "01": NodeState(B, W, at(ov, "011"))})
    assert not detect_trap(cfg).present


def dfs_traps(cfg):
    """Path enumeration straight from the definition."""
    ov, st = cfg.overlay, cfg.states
    out = []
    for p0 in sorted(st):
        if st[p0].phase is not B:
            continue
        for p1 in ov.adjacency[p0]:
            if st[p1].phase is not C or st[p0].father == p1:
                continue
            stack = [(p1, (p0, p1))]
            while stack:
                x, path = stack.pop()
                for y in ov.adjacency[x]:
                    if y == path[-2]:
                        continue
                    if st[y].phase is C:
                        stack.append((y, path + (y,)))
                    elif st[y].phase is B and st[y].wave == st[p0].wave and st[y].father != x and p0 < y:
                        out.append(path + (y,))
    return sorted(out)


def naive_b(cfg):
    out = []
    for p in sorted(cfg.states):
        if cfg.states[p].phase is not C:
            continue
        groups = {}
        for q in cfg.overlay.adjacency[p]:
            s = cfg.states[q]
            if s.phase is B and s.father != p:
                groups.setdefault(s.wave, []).append(q)
        out += [(p, *sorted(qs)) for qs in groups.values() if len(qs) > 1]
    return sorted(out)


def sparse_random(seed, n=30):
    rng = random.Random(seed)
    ov = experiment_tree(n, seed, 0, alphabet_size=3, max_length=5)
    waves = [WaveId(0, ""), WaveId(1, "0")]
    states = {}
    for p in ov.nodes:
        if rng.random() < 0.35:
            states[p] = NodeState(rng.choice([B, B, FC]), rng.choice(waves), rng.choice((None,) + ov.adjacency[p]))
    return Configuration.clean(ov).with_states(states)


@given(st.integers(0, 10**6))
def test_fast_detectors_match_definitions(seed):
    cfg = sparse_random(seed)
    assert list(detect_trap(cfg).witnesses) == dfs_traps(cfg)
    assert list(detect_abnormal_B(cfg).witnesses) == naive_b(cfg)
    naive_dyn = sorted(
        (min(p, q), max(p, q))
        for p, q in cfg.overlay.edges()
        if cfg.states[p].phase is B and cfg.states[q].phase is B and cfg.states[p].wave == cfg.states[q].wave
        and cfg.states[p].father != q and cfg.states[q].father != p
    )
    assert list(detect_dynamic_abnormal(cfg).witnesses) == naive_dyn
    assert detectors_silent(cfg) == (not any(r.present for r in all_reports(cfg)))


def test_report_json():
    rep = detect_abnormal_B(Configuration.clean(make_tree("0")))
    assert rep.to_json() == '{"kind": "B", "present": false, "witnesses": []}'


def test_subtree_examples():
    ov = make_tree("0", "1", "01")
    cfg = Configuration.clean(ov)
    assert compute_subtree(cfg, at(ov, "1")) == {at(ov, "1")}
    w = ov.own_wave[ov.root]
    mid = config(ov, {"": NodeState(B, w), "0": NodeState(B, w, ov.root), "1": NodeState(FC, W, ov.root)})
    assert compute_subtree(mid, ov.root) == {ov.root, at(ov, "0"), at(ov, "1")}
    assert compute_subtree(mid, at(ov, "0")) == {at(ov, "0")}


def test_subtree_after_full_broadcast():
    ov = experiment_tree(30, 0, 0)
    sim = Simulation(Configuration.clean(ov).with_requests([ov.root]), "sync", 0)
    while not all(s.phase is not C for s in sim.states.values()):
        sim.step()
    assert compute_subtree(sim.snapshot(), ov.root) == set(ov.nodes)


def test_partial_final():
    ov = make_tree("0", "1")
    w = ov.own_wave[ov.root]
    cfg = config(ov, {"": NodeState(B, w), "0": NodeState(FC, w, ov.root), "1": NodeState(FC, w, ov.root)})
    (fs,) = pif_friendly_sets(cfg)
    assert partial_final_reached(cfg, fs) == ov.root
    cfg = config(ov, {"": NodeState(B, w), "0": NodeState(FC, w, ov.root), "1": NodeState(B, w, ov.root)})
    assert partial_final_reached(cfg, set(ov.nodes)) is None
    assert partial_final_reached(Configuration.clean(ov), set()) is None


def test_friendly_sets_split_on_feedback():
    ov = make_tree("0", "01", "011")
    cfg = config(ov, {"": NodeState(B, W), "0": NodeState(FC, V, at(ov, "01")), "01": NodeState(B, V)})
    sets = pif_friendly_sets(cfg)
    assert sets == [frozenset({ov.root}), frozenset({at(ov, "0"), at(ov, "01")})]


@pytest.mark.parametrize("k", [1, 4])
def test_copif_wave_clauses(k):
    ov = experiment_tree(40, 3, 0)
    inits = sorted(ov.nodes)[:: max(1, len(ov) // k)][:k]
    trace, m = run_with_trace(Configuration.clean(ov).with_requests(inits), "sync", 0)
    assert is_copif_wave(trace, inits)
    p, w = wave_winner(trace)
    assert w == min(ov.own_wave[q] for q in inits)
    assert m.winners == [w]
    truncated, _ = run_with_trace(Configuration.clean(ov).with_requests(inits), "sync", 0, max_rounds=3)
    assert not is_copif_wave(truncated, inits)
    assert not is_copif_wave([], inits)


@pytest.mark.parametrize("seed", range(30))
def test_clean_runs_never_trip_detectors(seed):
    """From all-clean, the wave and merge rules never create an abnormal pattern."""
    rng = random.Random(seed)
    ov = experiment_tree(rng.randint(5, 200), seed, 0)
    inits = rng.sample(sorted(ov.nodes), rng.randint(1, min(8, len(ov))))
    kind = rng.choice(["sync", "central", "adversarial"])
    sim = Simulation(Configuration.clean(ov).with_requests(inits), kind, seed, rules=(ALL_RULES - CORRECTION_RULES) | MERGE_RULES)
    sim.run(on_step=lambda s: _assert_silent(s))
    assert sim.snapshot().all_clean()


def _assert_silent(sim):
    assert detectors_silent(sim.snapshot())


@pytest.mark.parametrize("seed", range(30))
def test_corruption_clears_for_good(seed):
    """Type-A patterns vanish and never return; traps never increase."""
    rng = random.Random(seed)
    ov = experiment_tree(rng.randint(5, 60), seed, 0, alphabet_size=2, max_length=6)
    cfg = inject_faults(Configuration.clean(ov), len(ov), seed)
    kind = rng.choice(["sync", "central", "adversarial"])
    trace, _ = run_with_trace(cfg, kind, seed)
    last = trace[-1].configuration
    assert last.all_clean() and is_quiescent(last)
    a_flags = [any(r.present for r in detect_abnormal_A(s.configuration).values()) for s in trace]
    if False in a_flags:
        first_clear = a_flags.index(False)
        assert not any(a_flags[first_clear:])
    traps = [len(detect_trap(c).witnesses) for c in [cfg] + [s.configuration for s in trace]]
    assert all(b <= a for a, b in zip(traps, traps[1:]))


@pytest.mark.parametrize("kind", ["sync", "central", "adversarial"])
def test_requesting_node_eventually_initiates(kind):
    for seed in range(10):
        ov = experiment_tree(30, seed, 0)
        p = sorted(ov.nodes)[seed % len(ov)]
        cfg = inject_faults(Configuration.clean(ov), len(ov), seed).with_requests([p])
        trace, _ = run_with_trace(cfg, kind, seed)
        fired = {r for s in trace for q, r in s.fired if q == p}
        assert fired & {Rule.R1, Rule.R2}
        assert not trace[-1].configuration.states[p].request_pif
