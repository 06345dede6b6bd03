import pytest

from derecho.errors import ConfigError, ProtocolBug
from derecho.events import EXECUTE, REQUEST_RECEIVED
from derecho.sim import Channel, SimConfig, SimStatus, Simulator, simulate


def test_same_seed_same_events():
    cfg = SimConfig(num_nodes=3, num_requests_per_client=20, window_size=3, seed=11,
                    test_failure=True, fail_node=2, fail_after=60)
    _, a = simulate(cfg)
    _, b = simulate(cfg)
    assert a.events == b.events and a.steps == b.steps


def test_different_seeds_interleave_differently():
    runs = {tuple(simulate(SimConfig(num_requests_per_client=10, seed=s))[1].events)
            for s in range(5)}
    assert len(runs) > 1


def test_channel_is_fifo():
    chan = Channel(0, 1)
    for i in range(5):
        chan.put(i)
    assert [chan.take() for _ in range(5)] == list(range(5))


def test_channel_detects_reordering():
    chan = Channel(0, 1)
    chan.put("a")
    chan.put("b")
    chan.queue.rotate(1)
    with pytest.raises(ProtocolBug):
        chan.take()


def test_quiescent_after_draining():
    sim, result = simulate(SimConfig(num_requests_per_client=10))
    assert result.status is SimStatus.QUIESCENT
    assert not sim.nonempty
    assert all(c.done for c in sim.clients.values())


def test_sst_copies_converge_at_quiescence():
    sim, _ = simulate(SimConfig(num_nodes=4, num_requests_per_client=13, window_size=2,
                                seed=3))
    nodes = list(sim.nodes.values())
    for rank, owner in enumerate(nodes):
        for other in nodes:
            assert other.sst.rows[rank] == owner.sst.own


def test_zero_requests_finish_immediately():
    sim, result = simulate(SimConfig(num_requests_per_client=0))
    assert result.status is SimStatus.QUIESCENT
    assert result.events and all(e.kind == "view_installed" for e in result.events)
    assert all(c.done for c in sim.clients.values())


def test_crash_stops_turns_and_traffic():
    cfg = SimConfig(num_requests_per_client=10, test_failure=True, fail_node=0,
                    fail_after=5, seed=1)
    sim, result = simulate(cfg)
    assert result.status is SimStatus.QUIESCENT
    assert 0 not in result.views
    assert all(e.step <= 5 for e in result.events if e.node == 0)
    assert not any(0 in key for key in sim.channels if sim.channels[key].queue)
    assert result.views == {1: 1, 2: 1}


def test_crash_twice_is_noop():
    sim = Simulator(SimConfig(num_requests_per_client=3))
    sim.crash(1)
    timers = list(sim.timers)
    sim.crash(1)
    assert sim.timers == timers and sim.crashed == {1}


def test_no_crash_without_failure_flag():
    sim, result = simulate(SimConfig(num_requests_per_client=5, fail_node=0, fail_after=3))
    assert not sim.crashed
    assert result.views == {0: 0, 1: 0, 2: 0}


def test_client_resends_to_another_member():
    cfg = SimConfig(num_nodes=3, num_requests_per_client=6, test_failure=True,
                    fail_node=0, fail_after=0, client_timeout=200, seed=2)
    sim, result = simulate(cfg)
    assert result.status is SimStatus.QUIESCENT
    client = next(iter(sim.clients.values()))
    assert client.done and set(client.responses.values()) <= {1, 2}
    for node in (1, 2):
        ids = [e.request_id for e in result.events if e.kind == EXECUTE and e.node == node]
        assert sorted(ids) == list(range(6))
    received_at = {e.node for e in result.events if e.kind == REQUEST_RECEIVED}
    assert received_at <= {1, 2}


def test_budget_exhaustion_reported():
    _, result = simulate(SimConfig(num_requests_per_client=50, max_steps=30))
    assert result.status is SimStatus.BUDGET_EXHAUSTED
    assert result.steps == 30


def test_several_clients():
    _, result = simulate(SimConfig(num_nodes=2, num_clients=3, num_requests_per_client=4,
                                   seed=9))
    assert result.status is SimStatus.QUIESCENT
    executed = {(e.client_id, e.request_id) for e in result.events
                if e.kind == EXECUTE and e.node == 0}
    assert executed == {(c, r) for c in (2, 3, 4) for r in range(4)}


@pytest.mark.parametrize("changes", [
    dict(num_nodes=0),
    dict(window_size=0),
    dict(num_requests_per_client=-1),
    dict(test_failure=True, fail_node=3),
    dict(max_steps=0),
    dict(buffer_guard="le"),
    dict(seed=-1),
    dict(client_timeout=0),
])
def test_invalid_configs_rejected(changes):
    with pytest.raises(ConfigError):
        SimConfig(**changes).validate()
