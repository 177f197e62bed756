from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbcast.checker import check_execution, check_lcd
from cbcast.protocol import Deliver, hist_vc
from cbcast.simulator import (
    SimConfig,
    SimConfigError,
    Simulation,
    SimulationExhausted,
    replay_figures,
    sim_new,
)


def test_sim_new():
    sim = sim_new(SimConfig(n_procs=3, seed=42))
    assert [p.vc for p in sim.procs] == [(0, 0, 0)] * 3
    assert sim.network == [] and sim.trace == []


@pytest.mark.parametrize("kw", [
    dict(n_procs=0), dict(n_procs=2, p_drop=1.5), dict(n_procs=2, p_duplicate=-0.1),
    dict(n_procs=2, receive_weight=-1),
    dict(n_procs=2, broadcast_weight=0, receive_weight=0, deliver_weight=0),
    dict(n_procs=2, max_steps=-1),
])
def test_bad_config(kw):
    with pytest.raises(SimConfigError):
        sim_new(SimConfig(**kw))


def transcript(sim):
    return "\n".join(ev.to_json() for ev in sim.trace)


def test_deterministic():
    cfg = SimConfig(n_procs=4, seed=7, max_steps=300, p_drop=0.2, p_duplicate=0.1)
    a, b = Simulation(cfg).run(), Simulation(cfg).run()
    assert transcript(a) == transcript(b)
    assert a.summary() == b.summary()
    c = Simulation(SimConfig(n_procs=4, seed=8, max_steps=300, p_drop=0.2, p_duplicate=0.1)).run()
    assert transcript(a) != transcript(c)


def test_broadcast_fans_out():
    sim = sim_new(SimConfig(n_procs=3, seed=1))
    rec = sim.do_broadcast(0)
    assert rec.kind == "broadcast" and rec.sent == 2
    assert sorted(d for d, _ in sim.network) == [1, 2]
    assert rec.message.vc == (1, 0, 0)


def test_drop_everything():
    sim = sim_new(SimConfig(n_procs=3, seed=1, p_drop=1.0))
    rec = sim.do_broadcast(2)
    assert (rec.sent, rec.dropped, sim.network) == (0, 2, [])


def test_duplicates_are_harmless():
    sim = sim_new(SimConfig(n_procs=2, seed=1, p_duplicate=1.0))
    sim.do_broadcast(0)
    assert len(sim.network) == 2
    sim.do_receive(0)
    sim.do_receive(0)
    assert len(sim.procs[1].dq) == 1


def test_deliver_noop():
    sim = sim_new(SimConfig(n_procs=3, seed=1))
    before = list(sim.procs)
    assert sim.do_deliver(1).kind == "noop"
    assert sim.procs == before and sim.trace == []


def test_budget_and_quiescence():
    sim = sim_new(SimConfig(n_procs=2, seed=3, max_steps=5))
    sim.run()
    assert sim.steps == 5
    with pytest.raises(SimulationExhausted):
        sim.x_step()
    quiet = sim_new(SimConfig(n_procs=2, seed=3, broadcast_weight=0, deliver_weight=0))
    assert quiet.x_step().kind == "quiescent"
    assert quiet.steps == 0


def test_redraws_when_network_empty():
    sim = sim_new(SimConfig(n_procs=2, seed=0, max_steps=50, receive_weight=100.0))
    kinds = [sim.x_step().kind for _ in range(3)]
    # the receive category is disabled until something is in flight
    assert kinds[0] in ("broadcast", "noop")
    assert "quiescent" not in kinds


def test_drain_fresh():
    assert sim_new(SimConfig(n_procs=3, seed=0)).drain() == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 5), dup=st.sampled_from([0.0, 0.1]))
def test_reliable_drain_delivers_everything(seed, n, dup):
    sim = Simulation(SimConfig(n_procs=n, seed=seed, max_steps=150, p_duplicate=dup), check_invariants=True)
    sim.run()
    sim.drain()
    assert sim.queued() == 0 and sim.network == []
    assert sim.undelivered() == []
    assert sim.report().clean


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 5))
def test_lossy_drain_stays_safe(seed, n):
    sim = Simulation(SimConfig(n_procs=n, seed=seed, max_steps=150, p_drop=0.3), check_invariants=True)
    sim.run()
    sim.drain()
    assert sim.network == []
    assert sim.report().clean


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 4))
def test_every_step_keeps_local_invariants(seed, n):
    sim = Simulation(SimConfig(n_procs=n, seed=seed, max_steps=120, p_drop=0.1, p_duplicate=0.1))
    for _ in range(120):
        rec = sim.x_step()
        p = sim.procs[rec.pid]
        assert hist_vc(p.history, n) == p.vc
        assert check_lcd(p.id, p.history) == []


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 4))
def test_message_conservation(seed, n):
    sim = Simulation(SimConfig(n_procs=n, seed=seed, max_steps=200))
    for _ in range(200):
        sim.x_step()
        sent = [ev.msg for ev in sim.trace if ev.kind == "broadcast"]
        for q in sim.procs:
            flying = Counter(m.key for d, m in sim.network if d == q.id)
            queued = Counter(m.key for m in q.dq)
            done = Counter(e.message.key for e in q.history if isinstance(e, Deliver))
            for m in sent:
                if m.sender != q.id:
                    assert flying[m.key] + queued[m.key] + done[m.key] == 1


def test_summary_fields():
    sim = Simulation(SimConfig(n_procs=3, seed=5, max_steps=200)).run()
    s = sim.summary()
    assert {"delivered", "dropped", "max_dq_len", "mean_dq_len_after_delivery", "violations"} <= set(s)
    assert s["violations"] == 0
    assert s["prng"] == "numpy.random.PCG64"
    assert s["mean_dq_len_after_delivery"] >= 0


# -- golden executions


@pytest.fixture(scope="module")
def figs():
    return replay_figures()


def test_fig2(figs):
    f = figs["fig2"]
    assert [f.messages[k].vc for k in ("m1", "m2", "m3")] == [(1, 0, 0), (1, 1, 0), (0, 0, 1)]
    assert ("p3", "m2") in f.buffered


def test_fig4_left(figs):
    f = figs["fig4_left"]
    assert f.vc("bob") == (2, 0, 0)
    assert f.vc("carol") == (2, 0, 0)
    assert f.buffered == [("carol", "found")]
    carol = [e.message.raw for e in reversed(f.procs[2].history)]
    assert carol == ["lost", "found"]


def test_fig4_right(figs):
    f = figs["fig4_right"]
    assert f.messages["glad"].vc == (2, 1, 0)
    assert f.vc("carol") == (2, 1, 0)
    assert f.buffered == [("carol", "glad")]
    carol = [e.message.raw for e in reversed(f.procs[2].history)]
    assert carol == ["lost", "found", "glad"]


def test_figures_are_clean(figs):
    for f in figs.values():
        assert check_execution(f.execution).clean
        assert all(hist_vc(p.history, 3) == p.vc for p in f.procs)
