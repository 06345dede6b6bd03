"""SST multicast: ring-buffer sends, receipt, stability and delivery."""

from __future__ import annotations

from .errors import ProtocolBug, WindowBoundViolation
from .events import DELIVER, EXECUTE, REQUEST_RECEIVED, Request
from .sst import Slot, reduce_min

# get_buffer guard variants: "eq" and "ge" are correct, "lt" and "gt" are the
# historical buggy forms kept for regression tests.
BUFFER_GUARDS = {
    "eq": lambda in_flight, window: in_flight == window,
    "ge": lambda in_flight, window: in_flight >= window,
    "gt": lambda in_flight, window: in_flight > window,
    "lt": lambda in_flight, window: in_flight < window,
}


def round_robin_index(sender_rank: int, k: int, n: int) -> int:
    """Global index of the ``k``-th multicast (zero-based) from ``sender_rank``."""
    if not 0 <= sender_rank < n:
        raise ValueError(f"rank {sender_rank} out of range for {n} members")
    if k < 0:
        raise ValueError("message count must be non-negative")
    return k * n + sender_rank


class SteadyStateMixin:

    def reset_sender_state(self):
        self.sent_num = 0
        self.completed_num = 0
        self.pending = {}
        self.next_deliver_index = 0
        self.last_stable = -1
        self.send_log = []

    # sending

    def on_client_request(self, req: Request):
        self.emit(REQUEST_RECEIVED, client_id=req.client_id,
                  request_id=req.request_id, payload_digest=req.key[2])
        key = req.key
        if key in self.responded:
            self.respond(req)
            return
        if key in self.seen_requests:
            return
        self.seen_requests.add(key)
        if self.parked or self.sst.own.wedged or self.get_buffer() is None:
            self.parked.append(req)
        else:
            self.send_req(req)

    def get_buffer(self):
        in_flight = self.sent_num - self.completed_num
        if in_flight > self.window_size and self.buffer_guard in ("eq", "ge"):
            raise WindowBoundViolation(
                f"node {self.id}: {in_flight} multicasts in flight, window {self.window_size}")
        if BUFFER_GUARDS[self.buffer_guard](in_flight, self.window_size):
            return None
        return self.sent_num % self.window_size

    def send_req(self, req):
        slot = self.get_buffer()
        if slot is None:
            raise ProtocolBug("send_req called without a free slot")
        self.write_sst("slots", Slot(payload=req, seq_num=self.sent_num), index=slot)
        self.sent_num += 1
        self.send_log.append(req)

    def retry_parked(self) -> bool:
        if not self._can_retry_parked():
            return False
        self.send_req(self.parked.popleft())
        return True

    def _can_retry_parked(self) -> bool:
        return bool(self.parked) and not self.sst.own.wedged and self.get_buffer() is not None

    # receiving

    def _fresh_senders(self):
        own = self.sst.own
        w = self.window_size
        rows = self.sst.rows
        return [s for s, k in enumerate(own.received_num) if rows[s].slots[k % w].seq_num == k]

    def _can_receive(self) -> bool:
        return not self.sst.own.wedged and bool(self._fresh_senders())

    def receive_req(self) -> bool:
        if self.sst.own.wedged:
            return False
        senders = self._fresh_senders()
        if not senders:
            return False
        n = self.view.num_members
        for s in senders:
            k = self.sst.own.received_num[s]
            slot = self.sst.rows[s].slots[k % self.window_size]
            self.recv(s, round_robin_index(s, k, n), slot.payload)
        self.publish()
        return True

    def recv(self, sender: int, gidx: int, payload):
        if gidx in self.pending or gidx < self.next_deliver_index:
            raise ProtocolBug(f"node {self.id}: duplicate receipt of index {gidx}")
        self.pending[gidx] = payload
        own = self.sst.own
        own.received_num[sender] += 1
        n = len(own.received_num)
        # first index not yet held locally, minus one
        own.global_index = min(c * n + s for s, c in enumerate(own.received_num)) - 1
        self.sst.version += 1

    # delivery

    def stable_msg_idx(self):
        own = self.sst.own
        return reduce_min("global_index", self.sst.rows, mask=[not s for s in own.suspected])

    def _can_deliver(self) -> bool:
        if self.sst.own.wedged:
            return False
        stable = self.stable_msg_idx()
        return stable is not None and stable > self.last_stable

    def stability_delivery(self) -> bool:
        if not self._can_deliver():
            return False
        stable = self.stable_msg_idx()
        self.deliver_through(stable)
        self.last_stable = stable
        rank, n = self.view.my_rank, self.view.num_members
        done = 0 if stable < rank else (stable - rank) // n + 1
        done = min(done, self.sent_num)
        if done > self.completed_num:
            self.completed_num = done
        return True

    def deliver_through(self, last: int):
        while self.next_deliver_index <= last:
            gidx = self.next_deliver_index
            if gidx not in self.pending:
                raise ProtocolBug(f"node {self.id}: index {gidx} is stable but not held")
            payload = self.pending.pop(gidx)
            if payload is not None:
                self.deliver_upcall(gidx, payload)
            self.next_deliver_index += 1

    def _can_send_null(self) -> bool:
        if self.parked or self.sst.own.wedged:
            return False
        if self.sent_num >= max(self.sst.own.received_num):
            return False
        return self.get_buffer() is not None

    def send_null_if_stalled(self) -> bool:
        if not self._can_send_null():
            return False
        self.send_req(None)
        return True

    def deliver_upcall(self, gidx: int, req: Request):
        t = self.delivery_clock
        self.delivery_clock += 1
        self.emit(DELIVER, gidx=gidx, t=t, client_id=req.client_id,
                  request_id=req.request_id, payload_digest=req.key[2])
        if req.key not in self.responded:
            self.execute(gidx, req, t)

    def execute(self, gidx: int, req: Request, t: int = 0):
        self.emit(EXECUTE, gidx=gidx, t=t, client_id=req.client_id,
                  request_id=req.request_id, payload_digest=req.key[2])
        self.responded.add(req.key)
        self.respond(req)
