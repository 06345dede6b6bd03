import random

import pytest
from hypothesis import given, settings, strategies as st

from derecho.checker import (AGREEMENT, DELIVERY_ORDERING, FAIL, INDETERMINATE, PASS,
                             PROGRESS_COUNTS, PROPERTIES, UNIFORM_INTEGRITY, VALIDITY,
                             VIRTUAL_SYNCHRONY, OnlineChecker, Verdict, check_agreement,
                             check_all, check_delivery_ordering, check_progress_counts,
                             check_uniform_integrity, check_validity,
                             check_virtual_synchrony)
from derecho.events import DELIVER, EXECUTE, KINDS, REQUEST_RECEIVED, VIEW_INSTALLED, \
    ProtocolEvent
from derecho.mutations import MUTATORS, NotApplicable
from derecho.sim import SimConfig, simulate


def ev(kind, node=0, vid=0, gidx=None, t=0, rid=None, members=None, step=0):
    return ProtocolEvent(kind=kind, node=node, vid=vid, gidx=gidx, t=t, step=step,
                         client_id=None if rid is None else 9, request_id=rid,
                         payload_digest=None if rid is None else f"d{rid}",
                         members=members)


def deliver(node, gidx, t, rid=None, vid=0):
    return ev(DELIVER, node=node, vid=vid, gidx=gidx, t=t, rid=gidx if rid is None else rid)


def execute(node, gidx, rid, vid=0):
    return ev(EXECUTE, node=node, vid=vid, gidx=gidx, rid=rid)


def received(node, rid):
    return ev(REQUEST_RECEIVED, node=node, rid=rid)


def installed(node, vid, members):
    return ev(VIEW_INSTALLED, node=node, vid=vid, members=tuple(members))


def run_trace(**kw):
    return simulate(SimConfig(**kw))[1].events


def test_failing_verdict_needs_counterexample():
    with pytest.raises(ValueError):
        Verdict(AGREEMENT, FAIL, ())


def test_empty_trace():
    assert check_delivery_ordering([]).status == PASS
    assert check_validity([]).status == PASS
    assert check_agreement([]).status == PASS
    assert check_uniform_integrity([]).status == PASS
    assert check_progress_counts([]).status == PASS
    assert check_virtual_synchrony([]).status == INDETERMINATE


def test_ordering_in_sequence_passes():
    trace = [deliver(0, 0, 0), deliver(0, 1, 1), deliver(0, 2, 2)]
    assert check_delivery_ordering(trace).passed


def test_ordering_swap_names_the_pair():
    a, b = deliver(0, 2, 1), deliver(0, 1, 2)
    verdict = check_delivery_ordering([deliver(0, 0, 0), a, b])
    assert verdict.status == FAIL
    assert verdict.counterexample == (a, b)


def test_ordering_is_per_node():
    trace = [deliver(0, 0, 5), deliver(1, 1, 0)]
    assert check_delivery_ordering(trace).passed


def test_ordering_across_views_uses_view_first():
    trace = [deliver(0, 7, 0, vid=0), deliver(0, 0, 1, vid=1)]
    assert check_delivery_ordering(trace).passed
    bad = [deliver(0, 0, 1, vid=1), deliver(0, 7, 2, vid=0)]
    assert check_delivery_ordering(bad).status == FAIL


def test_validity_examples():
    assert check_validity([received(0, 1)]).passed
    assert check_validity(run_trace(num_requests_per_client=5)).passed
    forged = execute(1, 0, 42)
    verdict = check_validity([received(0, 1), execute(0, 0, 1), forged])
    assert verdict.status == FAIL and verdict.counterexample == (forged,)


def test_validity_accepts_receipt_at_any_node():
    assert check_validity([received(2, 1), execute(0, 0, 1)]).passed


def test_agreement_examples():
    assert check_agreement([execute(0, 0, 1), execute(0, 1, 2)]).passed
    assert check_agreement(run_trace(num_requests_per_client=10)).passed
    a, b = execute(0, 4, 1), execute(2, 4, 3)
    verdict = check_agreement([execute(1, 4, 1), a, b])
    assert verdict.status == FAIL
    assert set(verdict.counterexample) == {execute(1, 4, 1), b}


def test_agreement_distinguishes_views():
    assert check_agreement([execute(0, 0, 1, vid=0), execute(1, 0, 2, vid=1)]).passed


def test_uniform_integrity_examples():
    assert check_uniform_integrity([execute(0, 0, 1), execute(1, 0, 1)]).passed
    crash = run_trace(num_requests_per_client=20, test_failure=True, fail_after=30,
                      client_timeout=100)
    assert check_uniform_integrity(crash).passed
    first, again = execute(0, 0, 1), execute(0, 3, 1)
    verdict = check_uniform_integrity([first, execute(0, 1, 2), again])
    assert verdict.status == FAIL and verdict.counterexample == (first, again)


def test_progress_examples():
    trace = run_trace(num_requests_per_client=10)
    verdict = check_progress_counts(trace)
    assert verdict.passed and "10 requests" in verdict.detail
    crash = run_trace(num_nodes=3, num_requests_per_client=100, test_failure=True,
                      fail_after=200, seed=4)
    assert check_progress_counts(crash).passed


def test_progress_truncated_run_fails_with_missing_ids():
    trace = simulate(SimConfig(num_requests_per_client=10, max_steps=25))[1].events
    verdict = check_progress_counts(trace)
    assert verdict.status == FAIL
    missing = {e.request_id for e in verdict.counterexample}
    executed = {e.request_id for e in trace if e.kind == EXECUTE and e.node == 0}
    assert missing and not missing & executed
    assert check_progress_counts(trace, complete=False).status == INDETERMINATE


def test_progress_ignores_departed_members():
    trace = [installed(0, 0, [0, 1]), installed(1, 0, [0, 1]), received(0, 1),
             execute(1, 0, 1), installed(1, 1, [1])]
    assert check_progress_counts(trace).passed


def test_virtual_synchrony_examples():
    assert check_virtual_synchrony(run_trace(num_requests_per_client=5)).passed
    crash = run_trace(num_nodes=3, num_requests_per_client=30, window_size=3,
                      test_failure=True, fail_after=50, seed=1)
    assert check_virtual_synchrony(crash).passed
    extra = deliver(2, 3, 3, rid=3)
    trace = [installed(n, 0, [0, 1, 2]) for n in range(3)]
    trace += [deliver(n, g, g) for n in (1, 2) for g in range(3)] + [extra]
    trace += [installed(n, 1, [1, 2]) for n in (1, 2)]
    verdict = check_virtual_synchrony(trace)
    assert verdict.status == FAIL and verdict.counterexample == (extra,)


def test_check_all_on_clean_run():
    verdicts = check_all(run_trace(num_requests_per_client=10))
    assert [v.name for v in verdicts] == list(PROPERTIES)
    assert all(v.passed for v in verdicts)


events_strategy = st.builds(
    ev,
    kind=st.sampled_from(KINDS),
    node=st.integers(0, 2),
    vid=st.integers(0, 2),
    gidx=st.integers(0, 4),
    t=st.integers(0, 5),
    rid=st.integers(0, 3),
    members=st.sampled_from([None, (0, 1, 2), (1, 2), (0,)]),
    step=st.integers(0, 3),
)


def online(trace, complete=True):
    checker = OnlineChecker()
    for event in trace:
        checker(event)
    return checker.verdicts(complete)


@settings(max_examples=300, deadline=None)
@given(st.lists(events_strategy, max_size=25), st.booleans())
def test_online_matches_offline_on_arbitrary_traces(trace, complete):
    assert online(trace, complete) == check_all(trace, complete)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32), fail=st.booleans(), requests=st.integers(0, 25))
def test_online_matches_offline_on_runs(seed, fail, requests):
    cfg = SimConfig(num_requests_per_client=requests, window_size=2, seed=seed,
                    test_failure=fail, fail_after=seed % 120)
    checker = OnlineChecker()
    _, result = simulate(cfg, listener=checker)
    assert checker.verdicts() == check_all(result.events)


def test_checker_does_not_touch_the_trace():
    trace = run_trace(num_requests_per_client=10)
    before = list(trace)
    check_all(trace)
    online(trace)
    assert trace == before


@pytest.fixture(scope="module")
def base_traces():
    clean = run_trace(num_requests_per_client=12, window_size=3, seed=7)
    crash = run_trace(num_nodes=4, num_requests_per_client=30, window_size=2, seed=3,
                      test_failure=True, fail_node=1, fail_after=80)
    assert all(v.passed for v in check_all(clean) + check_all(crash))
    return [clean, crash]


@pytest.mark.parametrize("prop", PROPERTIES)
def test_mutation_is_caught(prop, base_traces):
    rng = random.Random(prop)
    caught = 0
    for trace in base_traces:
        for _ in range(3):
            try:
                mutated, injected = MUTATORS[prop](trace, rng)
            except NotApplicable:
                continue
            verdicts = {v.name: v for v in check_all(mutated)}
            assert verdicts[prop].status == FAIL
            assert set(injected) <= set(verdicts[prop].counterexample)
            assert {v.name: v for v in online(mutated)}[prop] == verdicts[prop]
            caught += 1
    assert caught >= 3


def test_virtual_synchrony_mutation_needs_a_view_change(base_traces):
    with pytest.raises(NotApplicable):
        MUTATORS[VIRTUAL_SYNCHRONY](base_traces[0], random.Random(0))
