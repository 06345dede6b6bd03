"""Safety and progress properties over a ProtocolEvent trace.

The ``check_*`` functions evaluate one property over a whole trace.
:class:`OnlineChecker` consumes events one at a time and reaches the same
verdicts; the two are kept as separate code paths so each can be tested
against the other.

Indexes are compared as ``(vid, gidx)`` pairs because global indexes restart
at zero in every view.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

from .events import DELIVER, EXECUTE, REQUEST_RECEIVED, VIEW_INSTALLED, ProtocolEvent

PASS = "pass"
FAIL = "fail"
INDETERMINATE = "indeterminate"

DELIVERY_ORDERING = "delivery_ordering"
VALIDITY = "validity"
AGREEMENT = "agreement"
UNIFORM_INTEGRITY = "uniform_integrity"
PROGRESS_COUNTS = "progress_counts"
VIRTUAL_SYNCHRONY = "virtual_synchrony"
PROPERTIES = (DELIVERY_ORDERING, VALIDITY, AGREEMENT, UNIFORM_INTEGRITY,
              PROGRESS_COUNTS, VIRTUAL_SYNCHRONY)


@dataclass(frozen=True)
class Verdict:
    name: str
    status: str
    counterexample: tuple = ()
    detail: str = ""

    def __post_init__(self):
        if self.status == FAIL and not self.counterexample:
            raise ValueError(f"failing verdict {self.name} needs a counterexample")

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def __str__(self):
        text = f"{self.name}: {self.status.upper()}"
        return f"{text} ({self.detail})" if self.detail else text


def _ordered_wrongly(a: ProtocolEvent, b: ProtocolEvent) -> bool:
    if b.index > a.index:
        return not b.t > a.t
    if a.index > b.index:
        return not a.t > b.t
    return False


def check_delivery_ordering(trace: Iterable[ProtocolEvent]) -> Verdict:
    per_node = defaultdict(list)
    for pos, ev in enumerate(trace):
        if ev.kind == DELIVER:
            per_node[ev.node].append((pos, ev))
    first = None
    for events in per_node.values():
        top_index = top_t = None
        for j, (pos, later) in enumerate(events):
            if first is not None and pos > first[0]:
                break
            if top_index is None or later.index > top_index and later.t > top_t:
                pass
            else:
                bad = next((e for _, e in events[:j] if _ordered_wrongly(e, later)), None)
                if bad is not None:
                    first = (pos, bad, later)
                    break
            top_index = later.index if top_index is None else max(top_index, later.index)
            top_t = later.t if top_t is None else max(top_t, later.t)
    if first is None:
        return Verdict(DELIVERY_ORDERING, PASS)
    _, a, b = first
    return Verdict(DELIVERY_ORDERING, FAIL, (a, b),
                   f"node {a.node} delivered {a.index} at t={a.t} and {b.index} at t={b.t}")


def check_validity(trace: Iterable[ProtocolEvent]) -> Verdict:
    trace = list(trace)
    received = {ev.request for ev in trace if ev.kind == REQUEST_RECEIVED}
    for ev in trace:
        if ev.kind == EXECUTE and ev.request not in received:
            return Verdict(VALIDITY, FAIL, (ev,),
                           f"node {ev.node} executed {ev.request} which no node received")
    return Verdict(VALIDITY, PASS)


def check_agreement(trace: Iterable[ProtocolEvent]) -> Verdict:
    first_at = {}
    for ev in trace:
        if ev.kind != EXECUTE:
            continue
        prior = first_at.setdefault(ev.index, ev)
        if prior.request != ev.request:
            return Verdict(AGREEMENT, FAIL, (prior, ev),
                           f"index {ev.index}: node {prior.node} executed {prior.request}, "
                           f"node {ev.node} executed {ev.request}")
    return Verdict(AGREEMENT, PASS)


def check_uniform_integrity(trace: Iterable[ProtocolEvent]) -> Verdict:
    first_exec = {}
    for ev in trace:
        if ev.kind != EXECUTE:
            continue
        prior = first_exec.setdefault((ev.node, ev.request), ev)
        if prior.index != ev.index:
            return Verdict(UNIFORM_INTEGRITY, FAIL, (prior, ev),
                           f"node {ev.node} executed {ev.request} at {prior.index} "
                           f"and {ev.index}")
    return Verdict(UNIFORM_INTEGRITY, PASS)


def _event_order(ev):
    return (ev.step, ev.node, ev.kind, str(ev.request), str(ev.index))


def final_members(trace) -> tuple:
    latest = None
    nodes = []
    for ev in trace:
        if ev.node not in nodes:
            nodes.append(ev.node)
        if ev.kind == VIEW_INSTALLED and (latest is None or ev.vid > latest.vid):
            latest = ev
    if latest is None or latest.members is None:
        return tuple(sorted(nodes))
    return tuple(latest.members)


def _progress_verdict(members, received_first, executed_by, extra_events) -> Verdict:
    received = set(received_first)
    missing = set()
    extra = set()
    for node in members:
        done = executed_by.get(node, set())
        missing |= received - done
        extra |= done - received
    if not missing and not extra:
        return Verdict(PROGRESS_COUNTS, PASS, (),
                       f"{len(received)} requests executed on {len(members)} nodes")
    cex = [received_first[k] for k in missing]
    cex += [ev for ev in extra_events if ev.request in extra and ev.node in members]
    cex.sort(key=_event_order)
    ids = sorted((k[0], k[1]) for k in missing)
    return Verdict(PROGRESS_COUNTS, FAIL, tuple(cex),
                   f"{len(received)} requests received; missing {ids}; "
                   f"{len(extra)} executed without receipt")


def check_progress_counts(trace: Iterable[ProtocolEvent], complete: bool = True) -> Verdict:
    """Distinct received requests equal distinct executed requests on every final member.

    Only meaningful for a finished run; with ``complete=False`` the verdict
    is indeterminate.
    """
    trace = list(trace)
    if not complete:
        return Verdict(PROGRESS_COUNTS, INDETERMINATE, (), "run still in progress")
    received_first = {}
    executed_by = defaultdict(set)
    executes = []
    for ev in trace:
        if ev.kind == REQUEST_RECEIVED:
            received_first.setdefault(ev.request, ev)
        elif ev.kind == EXECUTE:
            executed_by[ev.node].add(ev.request)
            executes.append(ev)
    return _progress_verdict(final_members(trace), received_first, executed_by, executes)


def _vs_verdict(installed, delivered) -> Verdict:
    if not installed:
        return Verdict(VIRTUAL_SYNCHRONY, INDETERMINATE, (), "no view installed")
    for vid in sorted(installed):
        survivors = sorted(installed.get(vid + 1, ()))
        if len(survivors) < 2:
            continue
        sets = {node: {(ev.gidx, ev.request) for ev in delivered.get((vid, node), [])}
                for node in survivors}
        common = set.intersection(*sets.values())
        if all(s == common for s in sets.values()):
            continue
        cex = [ev for node in survivors for ev in delivered.get((vid, node), [])
               if (ev.gidx, ev.request) not in common]
        cex.sort(key=_event_order)
        return Verdict(VIRTUAL_SYNCHRONY, FAIL, tuple(cex),
                       f"survivors {survivors} of view {vid} delivered different messages")
    return Verdict(VIRTUAL_SYNCHRONY, PASS)


def check_virtual_synchrony(trace: Iterable[ProtocolEvent]) -> Verdict:
    installed = defaultdict(set)
    delivered = defaultdict(list)
    for ev in trace:
        if ev.kind == VIEW_INSTALLED:
            installed[ev.vid].add(ev.node)
        elif ev.kind == DELIVER:
            delivered[(ev.vid, ev.node)].append(ev)
    return _vs_verdict(installed, delivered)


def check_all(trace, complete: bool = True) -> list:
    trace = list(trace)
    return [
        check_delivery_ordering(trace),
        check_validity(trace),
        check_agreement(trace),
        check_uniform_integrity(trace),
        check_progress_counts(trace, complete),
        check_virtual_synchrony(trace),
    ]


class OnlineChecker:
    """Incremental evaluation of the same properties as :func:`check_all`.

    Safety violations are recorded the moment the offending event arrives;
    the remaining properties are computed from maintained indexes when
    :meth:`verdicts` is called.
    """

    def __init__(self):
        self.events = 0
        self.nodes = []
        self.latest_view = None
        self.received_first = {}
        self.unmatched_executes = []
        self.executed_by = defaultdict(set)
        self.executes = []
        self.first_at = {}
        self.first_exec = {}
        self.deliveries = defaultdict(list)
        self.max_seen = {}
        self.installed = defaultdict(set)
        self.delivered = defaultdict(list)
        self.violations = {}

    def __call__(self, event):
        self.feed(event)

    def feed(self, ev: ProtocolEvent):
        self.events += 1
        if ev.node not in self.nodes:
            self.nodes.append(ev.node)
        if ev.kind == REQUEST_RECEIVED:
            self.received_first.setdefault(ev.request, ev)
        elif ev.kind == DELIVER:
            self._feed_delivery(ev)
        elif ev.kind == EXECUTE:
            self._feed_execute(ev)
        elif ev.kind == VIEW_INSTALLED:
            self.installed[ev.vid].add(ev.node)
            if self.latest_view is None or ev.vid > self.latest_view.vid:
                self.latest_view = ev

    def _violate(self, name, events, detail):
        self.violations.setdefault(name, Verdict(name, FAIL, tuple(events), detail))

    def _feed_delivery(self, ev):
        self.delivered[(ev.vid, ev.node)].append(ev)
        history = self.deliveries[ev.node]
        bound = self.max_seen.get(ev.node)
        if bound is not None and not (ev.index > bound[0] and ev.t > bound[1]):
            for earlier in history:
                if _ordered_wrongly(earlier, ev):
                    self._violate(DELIVERY_ORDERING, (earlier, ev),
                                  f"node {ev.node} delivered {earlier.index} at t={earlier.t} "
                                  f"and {ev.index} at t={ev.t}")
                    break
        history.append(ev)
        if bound is None:
            self.max_seen[ev.node] = (ev.index, ev.t)
        else:
            self.max_seen[ev.node] = (max(bound[0], ev.index), max(bound[1], ev.t))

    def _feed_execute(self, ev):
        self.unmatched_executes.append(ev)
        self.executed_by[ev.node].add(ev.request)
        self.executes.append(ev)
        prior = self.first_at.setdefault(ev.index, ev)
        if prior.request != ev.request:
            self._violate(AGREEMENT, (prior, ev),
                          f"index {ev.index}: node {prior.node} executed {prior.request}, "
                          f"node {ev.node} executed {ev.request}")
        prior = self.first_exec.setdefault((ev.node, ev.request), ev)
        if prior.index != ev.index:
            self._violate(UNIFORM_INTEGRITY, (prior, ev),
                          f"node {ev.node} executed {ev.request} at {prior.index} "
                          f"and {ev.index}")

    def _validity(self) -> Verdict:
        self.unmatched_executes = [ev for ev in self.unmatched_executes
                                   if ev.request not in self.received_first]
        if self.unmatched_executes:
            ev = self.unmatched_executes[0]
            return Verdict(VALIDITY, FAIL, (ev,),
                           f"node {ev.node} executed {ev.request} which no node received")
        return Verdict(VALIDITY, PASS)

    def _members(self):
        if self.latest_view is None or self.latest_view.members is None:
            return tuple(sorted(self.nodes))
        return tuple(self.latest_view.members)

    def verdict(self, name: str, complete: bool = True) -> Verdict:
        if name in self.violations:
            return self.violations[name]
        if name == VALIDITY:
            return self._validity()
        if name == PROGRESS_COUNTS:
            if not complete:
                return Verdict(PROGRESS_COUNTS, INDETERMINATE, (), "run still in progress")
            return _progress_verdict(self._members(), self.received_first,
                                     self.executed_by, self.executes)
        if name == VIRTUAL_SYNCHRONY:
            return _vs_verdict(self.installed, self.delivered)
        return Verdict(name, PASS)

    def verdicts(self, complete: bool = True) -> list:
        return [self.verdict(name, complete) for name in PROPERTIES]


def all_passed(verdicts) -> bool:
    return all(v.passed for v in verdicts)
