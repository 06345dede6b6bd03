"""Deterministic discrete-step network simulator.

Channels are reliable and FIFO per (src, dst) pair. Each step the scheduler
picks, uniformly with a seeded RNG, one enabled action: deliver the head of a
nonempty channel, give a node a protocol turn, or let a client whose resend
timer expired act. When nothing is enabled the step counter jumps to the next
timed event (crash, crash notice, client timeout).
"""

from __future__ import annotations

import enum
import heapq
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import ConfigError, ProtocolBug, WindowBoundViolation
from .events import Request
from .node import ClientRequest, Node, Response
from .steady_state import BUFFER_GUARDS


class SimStatus(enum.Enum):
    RUNNING = "running"
    QUIESCENT = "quiescent"
    BUDGET_EXHAUSTED = "budget-exhausted"


@dataclass
class SimConfig:
    num_nodes: int = 3
    num_clients: int = 1
    num_requests_per_client: int = 10
    window_size: int = 10
    test_failure: bool = False
    fail_node: int = 0
    fail_after: int = 0
    seed: int = 0
    max_steps: int = 1_000_000
    detection_delay: int = 50
    # staged suspicion: this survivor (by node id) hears of the crash late
    late_detector: Optional[int] = None
    late_by: int = 0
    client_timeout: int = 3000
    buffer_guard: str = "eq"
    # the two halves of the leader-selection deadlock fix
    reset_agreement: bool = True
    follow_new_leader: bool = True

    def validate(self):
        if self.num_nodes < 1 or self.num_clients < 0 or self.num_requests_per_client < 0:
            raise ConfigError("node, client and request counts must be non-negative "
                              "with at least one node")
        if self.window_size < 1:
            raise ConfigError("window_size must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if self.test_failure and not 0 <= self.fail_node < self.num_nodes:
            raise ConfigError(f"fail_node {self.fail_node} is not a node")
        if self.fail_after < 0 or self.detection_delay < 0 or self.late_by < 0:
            raise ConfigError("step counts must be non-negative")
        if self.client_timeout < 1:
            raise ConfigError("client_timeout must be positive")
        if self.buffer_guard not in BUFFER_GUARDS:
            raise ConfigError(f"unknown buffer guard {self.buffer_guard!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")


class Channel:
    def __init__(self, src, dst):
        self.src = src
        self.dst = dst
        self.queue = deque()
        self.sent = 0
        self.delivered = 0

    def put(self, msg):
        self.queue.append((self.sent, msg))
        self.sent += 1

    def take(self):
        seq, msg = self.queue.popleft()
        if seq != self.delivered:
            raise ProtocolBug(f"channel {self.src}->{self.dst} reordered message {seq}")
        self.delivered += 1
        return msg

    def drop_all(self):
        self.delivered += len(self.queue)
        self.queue.clear()


class Client:
    """Sends its requests round-robin over the nodes and resends on silence."""

    def __init__(self, client_id, num_requests, node_ids, timeout):
        self.id = client_id
        self.node_ids = list(node_ids)
        self.timeout = timeout
        self.requests = {
            rid: Request(client_id, rid, f"client{client_id}-req{rid}".encode())
            for rid in range(num_requests)
        }
        self.target = {rid: rid % len(self.node_ids) for rid in self.requests}
        self.outstanding = set(self.requests)
        self.responses = {}
        self.last_progress = 0

    @property
    def done(self) -> bool:
        return not self.outstanding

    def start(self, net):
        for rid in sorted(self.requests):
            net.send(self.id, self.node_ids[self.target[rid]], ClientRequest(self.requests[rid]))

    def handle(self, src, msg, now):
        if not isinstance(msg, Response):
            raise ProtocolBug(f"client {self.id}: unexpected message {msg!r}")
        self.responses.setdefault(msg.request_id, msg.node)
        if msg.request_id in self.outstanding:
            self.outstanding.discard(msg.request_id)
            self.last_progress = now

    def next_timer(self) -> Optional[int]:
        return self.last_progress + self.timeout if self.outstanding else None

    def resend(self, net, now):
        for rid in sorted(self.outstanding):
            self.target[rid] = (self.target[rid] + 1) % len(self.node_ids)
            net.send(self.id, self.node_ids[self.target[rid]], ClientRequest(self.requests[rid]))
        self.last_progress = now


@dataclass
class SimResult:
    status: SimStatus
    steps: int
    events: list
    views: dict = field(default_factory=dict)
    error: Optional[BaseException] = None


class Simulator:

    def __init__(self, config: SimConfig, listener=None):
        config.validate()
        self.config = config
        self.rng = random.Random(config.seed)
        self.now = 0
        self.status = SimStatus.RUNNING
        self.events = []
        self.listener = listener
        self.crashed = set()
        self.channels = {}
        self.nonempty = {}
        self.timers = []
        self._timer_seq = 0
        node_ids = list(range(config.num_nodes))
        self.nodes = {
            i: Node(i, node_ids, config.window_size, self,
                    buffer_guard=config.buffer_guard,
                    reset_agreement=config.reset_agreement,
                    follow_new_leader=config.follow_new_leader)
            for i in node_ids
        }
        self.clients = {
            cid: Client(cid, config.num_requests_per_client, node_ids, config.client_timeout)
            for cid in range(config.num_nodes, config.num_nodes + config.num_clients)
        }
        if config.test_failure:
            self._schedule(config.fail_after, "crash", config.fail_node)
        for client in self.clients.values():
            client.start(self)

    # net interface used by nodes and clients

    def send(self, src, dst, msg):
        if src in self.crashed or dst in self.crashed:
            return
        key = (src, dst)
        chan = self.channels.get(key)
        if chan is None:
            chan = self.channels[key] = Channel(src, dst)
        chan.put(msg)
        self.nonempty[key] = chan

    def emit(self, event):
        event = replace(event, step=self.now)
        self.events.append(event)
        if self.listener is not None:
            self.listener(event)

    # timed events

    def _schedule(self, at, kind, arg):
        heapq.heappush(self.timers, (at, self._timer_seq, kind, arg))
        self._timer_seq += 1

    def _fire_due_timers(self):
        while self.timers and self.timers[0][0] <= self.now:
            _, _, kind, arg = heapq.heappop(self.timers)
            if kind == "crash":
                self.crash(arg)
            elif kind == "notice":
                node, failed = arg
                if node not in self.crashed:
                    self.nodes[node].notify_crash(failed)

    def _next_timed(self):
        times = [t[0] for t in self.timers]
        times += [c.next_timer() for c in self.clients.values() if not c.done]
        return min(times) if times else None

    def crash(self, node_id):
        """Fail-stop ``node_id``: no more turns, in-flight traffic to and from it is lost."""
        if node_id in self.crashed:
            return
        self.crashed.add(node_id)
        for key in list(self.nonempty):
            if node_id in key:
                self.nonempty.pop(key).drop_all()
        cfg = self.config
        for survivor in sorted(self.nodes):
            if survivor in self.crashed:
                continue
            delay = cfg.detection_delay
            if survivor == cfg.late_detector:
                delay += cfg.late_by
            self._schedule(self.now + delay, "notice", (survivor, node_id))

    # stepping

    def live_nodes(self):
        return [n for i, n in self.nodes.items() if i not in self.crashed and not n.removed]

    def _obligations(self) -> bool:
        if any(not c.done for c in self.clients.values()):
            return True
        return any(n.has_obligations() for n in self.live_nodes())

    def step(self) -> SimStatus:
        if self.status is not SimStatus.RUNNING:
            return self.status
        self._fire_due_timers()
        actions = [("chan", key) for key in self.nonempty]
        actions += [("node", n) for n in self.live_nodes() if n.enabled_actions()]
        actions += [("client", c) for c in self.clients.values()
                    if not c.done and c.next_timer() <= self.now]
        if not actions:
            nxt = self._next_timed()
            if nxt is None:
                self.status = (SimStatus.BUDGET_EXHAUSTED if self._obligations()
                               else SimStatus.QUIESCENT)
            elif nxt >= self.config.max_steps:
                self.now = self.config.max_steps
                self.status = SimStatus.BUDGET_EXHAUSTED
            else:
                self.now = max(nxt, self.now + 1)
            return self.status
        kind, target = actions[self.rng.randrange(len(actions))]
        if kind == "chan":
            chan = self.nonempty[target]
            msg = chan.take()
            if not chan.queue:
                del self.nonempty[target]
            dst = chan.dst
            if dst in self.clients:
                self.clients[dst].handle(chan.src, msg, self.now)
            else:
                self.nodes[dst].handle(chan.src, msg)
        elif kind == "node":
            target.turn(self.rng)
        else:
            target.resend(self, self.now)
        self.now += 1
        self.check_invariants()
        if self.now >= self.config.max_steps:
            self.status = SimStatus.BUDGET_EXHAUSTED
        return self.status

    def check_invariants(self):
        w = self.config.window_size
        live = self.live_nodes()
        for node in live:
            in_flight = node.sent_num - node.completed_num
            if not 0 <= in_flight <= w:
                raise WindowBoundViolation(
                    f"step {self.now}: node {node.id} has {in_flight} multicasts in flight, "
                    f"window {w}")
            rank = node.view.my_rank
            for peer in live:
                if peer is node or peer.view.vid != node.view.vid:
                    continue
                unread = node.sent_num - peer.sst.own.received_num[rank]
                if unread > w:
                    raise WindowBoundViolation(
                        f"step {self.now}: node {node.id} overwrote a slot node {peer.id} "
                        f"has not read ({unread} unread, window {w})")

    def run(self) -> SimResult:
        error = None
        try:
            while self.step() is SimStatus.RUNNING:
                pass
        except ProtocolBug as exc:
            error = exc
            self.status = SimStatus.BUDGET_EXHAUSTED
        views = {i: n.view.vid for i, n in self.nodes.items() if i not in self.crashed}
        return SimResult(status=self.status, steps=self.now, events=self.events,
                         views=views, error=error)

    @property
    def quiescent(self) -> bool:
        return self.status is SimStatus.QUIESCENT


def simulate(config: SimConfig, listener=None) -> tuple:
    sim = Simulator(config, listener)
    return sim, sim.run()
