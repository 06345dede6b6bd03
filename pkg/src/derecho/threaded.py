"""Wall-clock benchmark mode: one thread per node, mailboxes between them.

Interleavings here depend on the OS scheduler, so this mode is excluded from
checking determinism. Events are still merged into one stream whose per-node
order is preserved. No failure injection.
"""

from __future__ import annotations

import queue
import random
import threading
import time
from dataclasses import dataclass, replace

from .events import Request
from .node import ClientRequest, Node, Response
from .sim import SimConfig


@dataclass
class BenchResult:
    events: list
    wall_time: float
    completed: bool


class _Net:
    def __init__(self, actor_ids):
        self.mailboxes = {a: queue.SimpleQueue() for a in actor_ids}
        self.lock = threading.Lock()
        self.events = []

    def send(self, src, dst, msg):
        self.mailboxes[dst].put((src, msg))

    def emit(self, event):
        with self.lock:
            self.events.append(replace(event, step=len(self.events)))


def _node_loop(node, mailbox, rng, stop):
    while not stop.is_set():
        try:
            while True:
                src, msg = mailbox.get_nowait()
                node.handle(src, msg)
        except queue.Empty:
            pass
        if not node.turn(rng):
            try:
                src, msg = mailbox.get(timeout=0.001)
            except queue.Empty:
                continue
            node.handle(src, msg)


def run_threaded(config: SimConfig, timeout: float = 120.0) -> BenchResult:
    config.validate()
    node_ids = list(range(config.num_nodes))
    client_ids = list(range(config.num_nodes, config.num_nodes + config.num_clients))
    net = _Net(node_ids + client_ids)
    nodes = [Node(i, node_ids, config.window_size, net, buffer_guard=config.buffer_guard)
             for i in node_ids]
    stop = threading.Event()
    threads = [threading.Thread(target=_node_loop,
                                args=(n, net.mailboxes[n.id], random.Random(config.seed + n.id),
                                      stop), daemon=True)
               for n in nodes]
    started = time.perf_counter()
    for t in threads:
        t.start()
    outstanding = set()
    for cid in client_ids:
        for rid in range(config.num_requests_per_client):
            req = Request(cid, rid, f"client{cid}-req{rid}".encode())
            net.send(cid, node_ids[rid % len(node_ids)], ClientRequest(req))
            outstanding.add((cid, rid))
    deadline = started + timeout
    while outstanding and time.perf_counter() < deadline:
        for cid in client_ids:
            try:
                _, msg = net.mailboxes[cid].get(timeout=0.01)
            except queue.Empty:
                continue
            if isinstance(msg, Response):
                outstanding.discard((msg.client_id, msg.request_id))
    wall = time.perf_counter() - started
    total = config.num_clients * config.num_requests_per_client
    while time.perf_counter() < deadline and any(len(n.responded) < total for n in nodes):
        time.sleep(0.001)
    stop.set()
    for t in threads:
        t.join()
    return BenchResult(events=list(net.events), wall_time=wall, completed=not outstanding)
