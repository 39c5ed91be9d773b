import io
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import B, C, at, config, make_tree
from copif.harness import experiment_tree, inject_faults
from copif.overlay import tree_height
from copif.prefix_core import WaveId
from copif.protocol import Configuration, DlptState, NodeState, Phase, Rule, apply_rule, choose_rule, enabled_rules
from copif.scheduler import (
    LatencyModel,
    NonTermination,
    SchedulerKind,
    Simulation,
    run_until_quiescent,
    run_with_trace,
    step,
)


def test_fixpoint_step():
    ov = make_tree("0", "1")
    cfg = Configuration.clean(ov)
    res = step(cfg, "central", 0)
    assert res.fired == ()
    assert res.configuration == cfg
    out, m = run_until_quiescent(cfg)
    assert m.steps == 0 and m.messages_total == 0


def test_sync_fires_all_enabled():
    ov = make_tree("0")
    cfg = Configuration.clean(ov).with_requests(list(ov.nodes))
    res = step(cfg, "sync", 0)
    assert sorted(res.fired) == sorted((p, Rule.R1) for p in ov.nodes)


def test_central_fires_one():
    ov = make_tree("0", "1", "00", "01", "10")
    cfg = Configuration.clean(ov).with_requests(list(ov.nodes)[:5])
    assert sum(1 for p in cfg.states if enabled_rules(cfg, p)) == 5
    assert len(step(cfg, "central", 4).fired) == 1


def test_reads_counted_per_evaluated_neighbour():
    ov = make_tree("0")
    cfg = Configuration.clean(ov).with_requests([ov.root])
    res = step(cfg, "sync", 0)
    # initial evaluation of both nodes (1 read each) plus re-evaluation of both after R1
    assert res.reads_performed == 4


def test_path_of_three_single_request():
    ov = make_tree("0", "01")
    cfg = Configuration.clean(ov).with_requests([at(ov, "01")])
    out, m = run_until_quiescent(cfg, "sync", 0)
    assert out.all_clean()
    assert out.answered == {ov.own_wave[at(ov, "01")]: DlptState.CORRECT}
    assert m.rounds_total <= 6 * (tree_height(ov) + 1)


def test_single_a1_fault_needs_one_r13():
    ov = experiment_tree(30, 4, 0)
    p = sorted(ov.nodes)[7]
    cfg = Configuration.clean(ov).with_states({p: NodeState(Phase.B, WaveId(999, "zz"))})
    for kind in ("sync", "central"):
        out, m = run_until_quiescent(cfg, kind, 1)
        assert out.all_clean()
        assert m.rule_counts[Rule.R13] == 1


def test_non_termination():
    ov = experiment_tree(50, 0, 0)
    cfg = Configuration.clean(ov).with_requests(sorted(ov.nodes)[:3])
    with pytest.raises(NonTermination):
        run_until_quiescent(cfg, "sync", 0, max_rounds=2)
    with pytest.raises(ValueError):
        run_until_quiescent(cfg, "sync", 0, max_rounds=0)


def random_config(seed, n=25):
    ov = experiment_tree(n, seed, 0, alphabet_size=3, max_length=5)
    cfg = inject_faults(Configuration.clean(ov), len(ov), seed)
    rng = random.Random(seed)
    return cfg.with_requests([p for p in ov.nodes if rng.random() < 0.2 and cfg.states[p].phase is C])


@given(st.integers(0, 10**6))
def test_sync_step_equals_snapshot_semantics(seed):
    """Applying the fired rules one by one against the frozen pre-state, in any
    order, gives the synchronous step's result."""
    cfg = random_config(seed)
    res = step(cfg, "sync", seed)
    order = list(res.fired)
    random.Random(seed).shuffle(order)
    states = dict(cfg.states)
    for p, r in order:
        assert r == choose_rule(enabled_rules(cfg, p))
        states[p] = apply_rule(cfg, p, r, random.Random(f"x{seed}")).states[p]
    expected = {p: (s.phase, s.wave, s.father) for p, s in states.items()}
    got = {p: (s.phase, s.wave, s.father) for p, s in res.configuration.states.items()}
    ties = {p for p, r in res.fired if r in (Rule.R4, Rule.R5, Rule.R19)}
    assert {p: v for p, v in got.items() if p not in ties} == {p: v for p, v in expected.items() if p not in ties}


@pytest.mark.parametrize("kind", list(SchedulerKind))
def test_determinism(kind):
    cfg = random_config(11, 40)
    a, ma = run_with_trace(cfg, kind, 5)
    b, mb = run_with_trace(cfg, kind, 5)
    assert [s.fired for s in a] == [s.fired for s in b]
    assert a[-1].configuration == b[-1].configuration
    assert ma == mb


@pytest.mark.parametrize("kind", ["central", "adversarial"])
def test_weak_fairness_cap(kind):
    cfg = random_config(3, 60)
    sim = Simulation(cfg, kind, 2)
    cap = sim.fairness_cap
    assert cap == 4 * len(cfg.overlay)
    worst = 0

    def watch(s):
        nonlocal worst
        worst = max([worst, *s.age.values()])

    sim.run(on_step=watch)
    assert worst <= cap


def test_adversary_holds_messages_fifo():
    cfg = random_config(5, 40).with_requests([])
    ov = cfg.overlay
    inits = sorted(ov.nodes)[:6]
    sim = Simulation(Configuration.clean(ov).with_requests(inits), "adversarial", 1)
    sent = []
    orig = sim._post

    def spy(msgs):
        msgs = list(msgs)
        orig(msgs)
        sent.extend(list(sim._mailbox)[-len(msgs):] if msgs else [])

    sim._post = spy
    sim.run()
    by_pair = {}
    for release, m in sent:
        by_pair.setdefault((m.from_peer, m.to_peer), []).append(release)
    assert all(r == sorted(r) for r in by_pair.values())


def test_trace_lines():
    ov = make_tree("0", "01")
    buf = io.StringIO()
    cfg = Configuration.clean(ov).with_requests([ov.root])
    Simulation(cfg, "sync", 0, trace=buf).run()
    lines = buf.getvalue().splitlines()
    first = lines[0].split("\t")
    assert first[:5] == ["1", str(ov.root), "R1", "C", "B"]
    assert all(len(line.split("\t")) == 6 for line in lines)


def test_rounds_and_latency():
    ov = experiment_tree(60, 1, 0)
    cfg = Configuration.clean(ov).with_requests([ov.root])
    _, m = run_until_quiescent(cfg, "sync", 0)
    assert m.rounds_total == m.steps  # every step of a clean sync wave starts a round
    assert m.synthetic_duration == m.steps
    _, me = run_until_quiescent(cfg, "sync", 0, latency=LatencyModel("exponential", 2.0))
    assert me.messages_total == m.messages_total
    assert me.synthetic_duration != m.synthetic_duration
    with pytest.raises(ValueError):
        LatencyModel("weird").step_cost([1], random.Random())


def test_central_round_longer_than_a_step():
    ov = experiment_tree(60, 1, 0)
    cfg = Configuration.clean(ov).with_requests([ov.root])
    _, m = run_until_quiescent(cfg, "central", 0)
    assert m.rounds_total < m.steps
