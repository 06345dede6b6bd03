from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import ProtocolBug
from .events import ProtocolEvent, Request
from .sst import RowUpdate, View
from .steady_state import BUFFER_GUARDS, SteadyStateMixin
from .view_change import ViewChangeMixin


@dataclass(frozen=True)
class ClientRequest:
    request: Request


@dataclass(frozen=True)
class Response:
    client_id: int
    request_id: int
    node: int


class Node(SteadyStateMixin, ViewChangeMixin):
    """One group member.

    ``net`` must provide ``send(src, dst, msg)`` and ``emit(event)``. The
    runtime calls :meth:`handle` for each arriving message and :meth:`turn`
    to let the node run one of its always-enabled protocol functions.
    """

    def __init__(self, node_id, members, window_size, net, *,
                 buffer_guard="eq", reset_agreement=True, follow_new_leader=True):
        if window_size < 1:
            raise ValueError("window_size must be positive")
        if buffer_guard not in BUFFER_GUARDS:
            raise ValueError(f"unknown buffer guard {buffer_guard!r}")
        self.id = node_id
        self.window_size = window_size
        self.net = net
        self.buffer_guard = buffer_guard
        self.reset_agreement = reset_agreement
        self.follow_new_leader = follow_new_leader
        self.removed = False
        self.responded = set()
        self.seen_requests = set()
        self.parked = deque()
        self.known_failed = set()
        self.future = {}
        self.delivery_clock = 0
        self.view = None
        self.enter_view(View(vid=0, members=tuple(members), owner=node_id))

    def __repr__(self):
        return f"Node({self.id}, vid={self.view.vid})"

    # plumbing

    def emit(self, kind, **fields):
        fields.setdefault("t", self.delivery_clock)
        self.net.emit(ProtocolEvent(kind=kind, node=self.id, vid=self.view.vid, **fields))

    def publish(self):
        update = self.sst.publish(self.id)
        for member in self.view.members:
            if member != self.id:
                self.net.send(self.id, member, update)

    def write_sst(self, name, value, index=None):
        self.sst.set(name, value, index)
        self.publish()

    def respond(self, req: Request):
        self.net.send(self.id, req.client_id,
                      Response(client_id=req.client_id, request_id=req.request_id, node=self.id))

    # message handlers

    def handle(self, src, msg):
        if self.removed:
            return
        if isinstance(msg, RowUpdate):
            self.on_row_update(msg)
        elif isinstance(msg, ClientRequest):
            self.on_client_request(msg.request)
        else:
            raise ProtocolBug(f"node {self.id}: unexpected message {msg!r}")

    def on_row_update(self, update: RowUpdate):
        if update.vid < self.view.vid:
            return
        if update.vid > self.view.vid:
            self.future.setdefault(update.vid, []).append(update)
            return
        rank = self.view.rank_of(update.sender)
        if rank is None:
            return
        self.sst.wt_local_sst(rank, update.row, update.write_seq)

    # scheduling

    def enabled_actions(self):
        if self.removed:
            return []
        actions = []
        if self._can_receive():
            actions.append(self.receive_req)
        if self._can_deliver():
            actions.append(self.stability_delivery)
        if self._can_retry_parked():
            actions.append(self.retry_parked)
        if self._can_send_null():
            actions.append(self.send_null_if_stalled)
        if self._can_select_leader():
            actions.append(self.leader_selection)
        if self._can_change_view():
            actions.append(self.view_change_step)
        return actions

    def turn(self, rng) -> bool:
        actions = self.enabled_actions()
        if not actions:
            return False
        return actions[rng.randrange(len(actions))]()

    def has_obligations(self) -> bool:
        """True while undelivered or unsent work, or an unfinished view change, remains."""
        if self.removed:
            return False
        return bool(self.pending or self.parked or self.sst.own.wedged)
