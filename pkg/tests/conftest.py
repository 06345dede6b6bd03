from collections import defaultdict, deque

import pytest

from derecho.node import ClientRequest, Node, Response

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class LocalNet:
    """Hand-driven network for unit tests: nothing moves until pump() is called."""

    def __init__(self):
        self.queues = defaultdict(deque)
        self.events = []
        self.nodes = {}
        self.responses = []
        self.crashed = set()

    def send(self, src, dst, msg):
        if src in self.crashed or dst in self.crashed:
            return
        self.queues[(src, dst)].append(msg)

    def crash(self, node_id, notify=()):
        """Fail-stop ``node_id``, then tell the nodes in ``notify`` about it."""
        self.crashed.add(node_id)
        for key in self.queues:
            if node_id in key:
                self.queues[key].clear()
        for other in notify:
            self.nodes[other].notify_crash(node_id)

    def emit(self, event):
        self.events.append(event)

    def pending(self, src=None, dst=None):
        return sum(len(q) for (s, d), q in self.queues.items()
                   if (src is None or s == src) and (dst is None or d == dst))

    def deliver_one(self, src, dst):
        msg = self.queues[(src, dst)].popleft()
        if isinstance(msg, Response):
            self.responses.append(msg)
        else:
            self.nodes[dst].handle(src, msg)

    def pump(self):
        """Deliver every queued message, channel by channel, until all are empty."""
        while True:
            keys = sorted(k for k, q in self.queues.items() if q)
            if not keys:
                return
            for src, dst in keys:
                while self.queues[(src, dst)]:
                    self.deliver_one(src, dst)

    def request(self, node_id, req, client=99):
        self.nodes[node_id].handle(client, ClientRequest(req))

    def kinds(self, kind, node=None):
        return [e for e in self.events if e.kind == kind and (node is None or e.node == node)]


def make_group(n, window, **kwargs):
    net = LocalNet()
    members = list(range(n))
    for i in members:
        net.nodes[i] = Node(i, members, window, net, **kwargs)
    return net, [net.nodes[i] for i in members]


@pytest.fixture
def group3():
    return make_group(3, 10)


def settle(net, nodes, rng, limit=100_000):
    """Alternate message delivery and node turns until nothing is enabled."""
    for _ in range(limit):
        net.pump()
        live = [n for n in nodes if n.id not in net.crashed and n.enabled_actions()]
        if not live:
            return
        live[rng.randrange(len(live))].turn(rng)
    raise AssertionError("group did not settle")
