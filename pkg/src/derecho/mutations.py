"""Inject exactly one property violation into a passing trace.

Each generator returns ``(mutated_trace, injected)`` where ``injected`` holds
the events that were added or rewritten. A sound checker must fail the
targeted property and name the injected events in its counterexample.
"""

from __future__ import annotations

from dataclasses import replace

from .checker import (AGREEMENT, DELIVERY_ORDERING, PROGRESS_COUNTS, UNIFORM_INTEGRITY,
                      VALIDITY, VIRTUAL_SYNCHRONY)
from .events import DELIVER, EXECUTE, REQUEST_RECEIVED, VIEW_INSTALLED, ProtocolEvent


class NotApplicable(ValueError):
    """The trace has no place to inject this kind of violation."""


def _fresh_request(trace, rng):
    used = {ev.request_id for ev in trace if ev.request_id is not None}
    rid = max(used, default=0) + 1 + rng.randrange(1000)
    client = next((ev.client_id for ev in trace if ev.client_id is not None), 0)
    return client, rid, f"forged{rid:012d}"[:16]


def swap_delivery_times(trace, rng):
    """Swap the clocks of two consecutive deliveries at one node."""
    pairs = []
    last = {}
    for pos, ev in enumerate(trace):
        if ev.kind == DELIVER:
            if ev.node in last:
                pairs.append((last[ev.node], pos))
            last[ev.node] = pos
    if not pairs:
        raise NotApplicable("no node delivered twice")
    i, j = pairs[rng.randrange(len(pairs))]
    a, b = trace[i], trace[j]
    out = list(trace)
    out[i] = replace(a, t=b.t)
    out[j] = replace(b, t=a.t)
    return out, [out[i], out[j]]


def forge_execute(trace, rng):
    """Execute a request no client ever sent."""
    executes = [pos for pos, ev in enumerate(trace) if ev.kind == EXECUTE]
    if not executes:
        raise NotApplicable("no execute events")
    pos = executes[rng.randrange(len(executes))]
    client, rid, dig = _fresh_request(trace, rng)
    forged = replace(trace[pos], client_id=client, request_id=rid, payload_digest=dig)
    out = list(trace)
    out.insert(pos + 1, forged)
    return out, [forged]


def diverge_execute(trace, rng):
    """Rewrite one execute so it disagrees with another node at the same index."""
    nodes_at = {}
    for ev in trace:
        if ev.kind == EXECUTE:
            nodes_at.setdefault(ev.index, set()).add(ev.node)
    shared = [pos for pos, ev in enumerate(trace)
              if ev.kind == EXECUTE and len(nodes_at[ev.index]) > 1]
    if not shared:
        raise NotApplicable("no index executed on two nodes")
    pos = shared[rng.randrange(len(shared))]
    client, rid, dig = _fresh_request(trace, rng)
    out = list(trace)
    out[pos] = replace(trace[pos], client_id=client, request_id=rid, payload_digest=dig)
    return out, [out[pos]]


def reexecute(trace, rng):
    """Execute an already executed request again at a later index on the same node."""
    executes = [pos for pos, ev in enumerate(trace) if ev.kind == EXECUTE]
    if not executes:
        raise NotApplicable("no execute events")
    pos = executes[rng.randrange(len(executes))]
    ev = trace[pos]
    top = max(e.gidx for e in trace
              if e.kind == EXECUTE and e.node == ev.node and e.vid == ev.vid)
    again = replace(ev, gidx=top + 1 + rng.randrange(5), t=ev.t + 1)
    insert_at = pos + 1 + rng.randrange(len(trace) - pos)
    out = list(trace)
    out.insert(insert_at, again)
    return out, [again]


def orphan_request(trace, rng):
    """Receive a request that is never executed anywhere."""
    nodes = sorted({ev.node for ev in trace if ev.kind == VIEW_INSTALLED})
    if not nodes:
        raise NotApplicable("no nodes")
    client, rid, dig = _fresh_request(trace, rng)
    pos = rng.randrange(len(trace) + 1)
    step = trace[pos - 1].step if pos else 0
    node = nodes[rng.randrange(len(nodes))]
    vid = max((e.vid for e in trace[:pos] if e.node == node), default=0)
    injected = ProtocolEvent(kind=REQUEST_RECEIVED, node=node, vid=vid, step=step,
                             client_id=client, request_id=rid, payload_digest=dig)
    out = list(trace)
    out.insert(pos, injected)
    return out, [injected]


def extra_delivery(trace, rng):
    """Deliver one more message on one survivor of an ended view."""
    installed = {}
    for ev in trace:
        if ev.kind == VIEW_INSTALLED:
            installed.setdefault(ev.vid, set()).add(ev.node)
    ended = [(vid, node) for vid in installed for node in sorted(installed.get(vid + 1, ()))
             if len(installed[vid + 1]) > 1]
    if not ended:
        raise NotApplicable("no view ended with two or more survivors")
    vid, node = ended[rng.randrange(len(ended))]
    client, rid, dig = _fresh_request(trace, rng)
    positions = [pos for pos, ev in enumerate(trace) if ev.node == node and ev.vid == vid]
    pos = positions[rng.randrange(len(positions))] + 1
    top = max((e.gidx for e in trace if e.kind == DELIVER and e.vid == vid), default=-1)
    injected = ProtocolEvent(kind=DELIVER, node=node, vid=vid, step=trace[pos - 1].step,
                             t=trace[pos - 1].t, gidx=top + 1 + rng.randrange(3),
                             client_id=client, request_id=rid, payload_digest=dig)
    out = list(trace)
    out.insert(pos, injected)
    return out, [injected]


MUTATORS = {
    DELIVERY_ORDERING: swap_delivery_times,
    VALIDITY: forge_execute,
    AGREEMENT: diverge_execute,
    UNIFORM_INTEGRITY: reexecute,
    PROGRESS_COUNTS: orphan_request,
    VIRTUAL_SYNCHRONY: extra_delivery,
}
