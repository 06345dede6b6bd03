"""Shared-state table: rows, views, slots and reducer functions.

Every node keeps one copy of the table with a row per view member. A node
only ever mutates its own row; peers learn about it through full-row
snapshots pushed over FIFO channels, which stands in for one-sided RDMA
writes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from operator import attrgetter
from typing import Any, Callable, Optional, Sequence, Union

from .errors import ProtocolBug

JOIN = "join"
LEAVE = "leave"


@dataclass(frozen=True)
class Slot:
    """One ring-buffer cell.

    ``seq_num`` is the sender's zero-based message count when the cell was
    written; -1 marks a cell that was never written. ``payload`` is None for
    a null (stall-prevention) message.
    """

    payload: Any = None
    seq_num: int = -1


EMPTY_SLOT = Slot()


@dataclass(frozen=True)
class MembershipChange:
    node: int
    kind: str = LEAVE

    def __post_init__(self):
        if self.kind not in (JOIN, LEAVE):
            raise ValueError(f"unknown membership change kind {self.kind!r}")


@dataclass
class SSTRow:
    slots: list
    global_index: int
    received_num: list
    suspected: list
    wedged: bool = False
    changes: list = field(default_factory=list)
    num_changes: int = 0
    num_acked: int = 0
    num_committed: int = 0
    num_installed: int = 0
    # final deliverable index of the ending view, published by the leader
    ragged_trim: Optional[int] = None

    @classmethod
    def initial(cls, num_members: int, window_size: int) -> "SSTRow":
        return cls(
            slots=[EMPTY_SLOT] * window_size,
            global_index=-1,
            received_num=[0] * num_members,
            suspected=[False] * num_members,
        )

    def snapshot(self) -> "SSTRow":
        return SSTRow(
            slots=list(self.slots),
            global_index=self.global_index,
            received_num=list(self.received_num),
            suspected=list(self.suspected),
            wedged=self.wedged,
            changes=list(self.changes),
            num_changes=self.num_changes,
            num_acked=self.num_acked,
            num_committed=self.num_committed,
            num_installed=self.num_installed,
            ragged_trim=self.ragged_trim,
        )

    def check_counters(self):
        if not (
            0 <= self.num_installed <= self.num_committed <= self.num_acked
            <= self.num_changes <= len(self.changes)
        ):
            raise ProtocolBug(
                "membership counters out of order: installed=%d committed=%d "
                "acked=%d changes=%d ledger=%d"
                % (self.num_installed, self.num_committed, self.num_acked,
                   self.num_changes, len(self.changes))
            )


@dataclass
class View:
    vid: int
    members: tuple
    owner: int
    leader_rank: int = 0

    def __post_init__(self):
        self.members = tuple(self.members)
        if len(set(self.members)) != len(self.members):
            raise ProtocolBug(f"duplicate members in view {self.members}")

    @property
    def num_members(self) -> int:
        return len(self.members)

    @property
    def my_rank(self) -> int:
        return self.members.index(self.owner)

    def rank_of(self, node: int) -> Optional[int]:
        try:
            return self.members.index(node)
        except ValueError:
            return None

    def with_changes(self, changes: Sequence[MembershipChange]) -> "View":
        """Next view after applying ``changes`` in ledger order."""
        members = list(self.members)
        for change in changes:
            if change.kind == LEAVE:
                if change.node not in members:
                    raise ProtocolBug(f"cannot remove non-member {change.node}")
                members.remove(change.node)
            else:
                if change.node in members:
                    raise ProtocolBug(f"cannot add existing member {change.node}")
                members.append(change.node)
        return View(vid=self.vid + 1, members=tuple(members), owner=self.owner)

    def add_member(self, node: int) -> "View":
        return self.with_changes([MembershipChange(node, JOIN)])

    def remove_member(self, node: int) -> "View":
        return self.with_changes([MembershipChange(node, LEAVE)])


@dataclass(frozen=True)
class RowUpdate:
    """Wire message carrying a full copy of the sender's row."""

    sender: int
    vid: int
    write_seq: int
    row: SSTRow


Column = Union[str, Callable[[SSTRow], Any]]


def _getter(column: Column) -> Callable[[SSTRow], Any]:
    return attrgetter(column) if isinstance(column, str) else column


def reduce_logical_or(column: Column, rows: Sequence[SSTRow]) -> bool:
    if not rows:
        raise ValueError("reduce_logical_or needs at least one row")
    get = _getter(column)
    return any(bool(get(row)) for row in rows)


def reduce_min(column: Column, rows: Sequence[SSTRow],
               mask: Optional[Sequence[bool]] = None) -> Optional[int]:
    """Minimum of ``column`` over rows whose mask entry is true.

    Returns None when the mask excludes every row; callers treat that as
    "cannot advance".
    """
    get = _getter(column)
    if mask is None:
        values = [get(row) for row in rows]
    else:
        if len(mask) != len(rows):
            raise ValueError("mask length does not match rows")
        values = [get(row) for row, keep in zip(rows, mask) if keep]
    return min(values) if values else None


class SST:
    """One node's copy of the table for a single view."""

    def __init__(self, view: View, window_size: int):
        n = view.num_members
        self.vid = view.vid
        self.my_rank = view.my_rank
        self.window_size = window_size
        self.rows = [SSTRow.initial(n, window_size) for _ in range(n)]
        self.write_seq = 0
        self.last_seq = [-1] * n
        # bumped on every local change; lets await-style loops skip re-evaluation
        self.version = 0

    @property
    def own(self) -> SSTRow:
        return self.rows[self.my_rank]

    def set(self, name: str, value, index: Optional[int] = None):
        """Local write to the own row without publishing."""
        if index is None:
            setattr(self.own, name, value)
        else:
            getattr(self.own, name)[index] = value
        self.version += 1

    def publish(self, sender: int) -> RowUpdate:
        update = RowUpdate(sender=sender, vid=self.vid, write_seq=self.write_seq,
                           row=self.own.snapshot())
        self.write_seq += 1
        return update

    def wt_local_sst(self, rank: int, row: SSTRow, write_seq: int):
        if rank == self.my_rank:
            raise ProtocolBug("received a remote write for the local row")
        if write_seq <= self.last_seq[rank]:
            raise ProtocolBug(
                f"row {rank} write {write_seq} arrived after {self.last_seq[rank]}")
        self.last_seq[rank] = write_seq
        self.rows[rank] = row
        self.version += 1
