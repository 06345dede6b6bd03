"""Suspicion, leader selection, two-phase membership change and view install."""

from __future__ import annotations

from .errors import ProtocolBug, TotalFailure
from .events import VIEW_INSTALLED
from .sst import LEAVE, SST, MembershipChange, View, reduce_logical_or, reduce_min


def first_unsuspected(suspected) -> int:
    for rank, flag in enumerate(suspected):
        if not flag:
            return rank
    raise TotalFailure("every member is suspected")


class ViewChangeMixin:

    def reset_leader_state(self):
        self.agreement_pending = False
        self.all_others_agree = True
        self.leader_eval_version = -1

    # suspicion

    def notify_crash(self, node: int):
        """Failure-detector input: ``node`` is known to have crashed."""
        if node == self.id:
            return
        self.known_failed.add(node)
        rank = self.view.rank_of(node)
        if rank is not None:
            self.suspect(rank)

    def suspect(self, rank: int) -> bool:
        own = self.sst.own
        if rank == self.view.my_rank or own.suspected[rank]:
            return False
        self.sst.set("suspected", True, index=rank)
        self.sst.set("wedged", True)
        self.publish()
        return True

    def _contagious_ranks(self):
        own = self.sst.own
        trusted = [row for row, s in zip(self.sst.rows, own.suspected) if not s]
        return [r for r in range(self.view.num_members)
                if r != self.view.my_rank and not own.suspected[r]
                and reduce_logical_or(lambda row, r=r: row.suspected[r], trusted)]

    def spread_suspicion(self) -> bool:
        ranks = self._contagious_ranks()
        for r in ranks:
            self.suspect(r)
        return bool(ranks)

    # leader selection

    def find_new_leader(self, suspected=None) -> int:
        if suspected is None:
            suspected = self.sst.own.suspected
        return first_unsuspected(suspected)

    def _can_select_leader(self) -> bool:
        if self.sst.version == self.leader_eval_version:
            return False
        return self.agreement_pending or self.find_new_leader() != self.view.leader_rank

    def leader_selection(self) -> bool:
        """One scheduler turn of the always-running leader selection.

        When this node is the new leader it waits, one iteration per turn,
        until every unsuspected member's row names it as leader. With
        ``reset_agreement`` the flag is reset at the top of every iteration,
        and with ``follow_new_leader`` non-leaders adopt the new leader; turning
        either off restores the deadlocking variant.
        """
        if not self._can_select_leader():
            return False
        self.leader_eval_version = self.sst.version
        me = self.view.my_rank
        if not self.agreement_pending:
            new_leader = self.find_new_leader()
            if new_leader == self.view.leader_rank:
                return False
            if new_leader != me:
                if self.follow_new_leader:
                    self.view.leader_rank = new_leader
                    return True
                return False
            self.agreement_pending = True
            if not self.reset_agreement:
                self.all_others_agree = True
        if self.reset_agreement:
            self.all_others_agree = True
        own = self.sst.own
        for r, row in enumerate(self.sst.rows):
            if r == me or own.suspected[r]:
                continue
            self.all_others_agree = (self.all_others_agree
                                     and self.find_new_leader(row.suspected) == me)
        if not self.all_others_agree:
            return False
        self.agreement_pending = False
        self.view.leader_rank = me
        self._adopt_ledger()
        return True

    def is_leader(self) -> bool:
        return self.view.leader_rank == self.view.my_rank and not self.agreement_pending

    def _adopt_ledger(self):
        # a new leader continues the longest acknowledged ledger among survivors
        own = self.sst.own
        best = own.changes[:own.num_acked]
        for row, s in zip(self.sst.rows, own.suspected):
            if not s and row.num_acked > len(best):
                best = row.changes[:row.num_acked]
        if len(best) > own.num_changes:
            self.sst.set("changes", list(best))
            self.sst.set("num_changes", len(best))
            self.publish()

    # two-phase membership change

    def _unproposed_leaves(self):
        own = self.sst.own
        listed = {c.node for c in own.changes}
        return [MembershipChange(self.view.members[r], LEAVE)
                for r, s in enumerate(own.suspected) if s and self.view.members[r] not in listed]

    def _can_propose(self) -> bool:
        return self.is_leader() and bool(self._unproposed_leaves())

    def propose_changes(self) -> bool:
        if not self._can_propose():
            return False
        own = self.sst.own
        changes = own.changes + self._unproposed_leaves()
        self.sst.set("changes", changes)
        self.sst.set("num_changes", len(changes))
        self.sst.set("wedged", True)
        self.publish()
        return True

    def _leader_row(self):
        return self.sst.rows[self.view.leader_rank]

    def _can_ack(self) -> bool:
        if self.agreement_pending:
            return False
        return self._leader_row().num_changes > self.sst.own.num_acked

    def ack_changes(self) -> bool:
        if not self._can_ack():
            return False
        leader = self._leader_row()
        own = self.sst.own
        mine = own.changes[:own.num_acked]
        if leader.changes[:len(mine)] != mine:
            raise ProtocolBug(
                f"node {self.id}: acked ledger {mine} is not a prefix of {leader.changes}")
        proposed = list(leader.changes[:leader.num_changes])
        for change in proposed:
            rank = self.view.rank_of(change.node)
            if change.kind == LEAVE and rank is not None and rank != self.view.my_rank:
                own.suspected[rank] = True
        self.sst.set("changes", proposed)
        self.sst.set("num_changes", len(proposed))
        self.sst.set("num_acked", len(proposed))
        self.sst.set("wedged", True)
        self.publish()
        return True

    def _survivor_mask(self):
        return [not s for s in self.sst.own.suspected]

    def _can_commit(self) -> bool:
        own = self.sst.own
        if not self.is_leader() or own.num_changes == 0:
            return False
        if own.num_committed >= own.num_changes or self._unproposed_leaves():
            return False
        mask = self._survivor_mask()
        acked = reduce_min("num_acked", self.sst.rows, mask)
        if acked is None or acked < own.num_changes:
            return False
        return all(row.wedged for row, keep in zip(self.sst.rows, mask) if keep)

    def commit_changes(self) -> bool:
        """Commit the ledger and announce the ragged-edge trim in one write.

        Survivors stop receiving once wedged, so after they have acked the
        leader's copies of their global_index are final and their minimum is
        an index every survivor can deliver through.
        """
        if not self._can_commit():
            return False
        trim = reduce_min("global_index", self.sst.rows, self._survivor_mask())
        self.sst.set("num_committed", self.sst.own.num_changes)
        self.sst.set("ragged_trim", trim)
        self.publish()
        return True

    def _can_install(self) -> bool:
        leader = self._leader_row()
        own = self.sst.own
        return (not self.agreement_pending and leader.ragged_trim is not None
                and leader.num_committed > 0 and own.num_acked >= leader.num_committed)

    def ragged_edge_trim(self) -> int:
        """Deliver the ending view through the leader's trim; drop the rest."""
        trim = self._leader_row().ragged_trim
        self.deliver_through(trim)
        discarded = {g: p for g, p in self.pending.items() if g > trim}
        me, n = self.view.my_rank, self.view.num_members
        for g, payload in discarded.items():
            # own multicasts lost to the trim may be resent by their client
            if payload is not None and g % n == me:
                self.seen_requests.discard(payload.key)
        self.pending = {}
        return trim

    def install_view(self) -> bool:
        if not self._can_install():
            return False
        leader = self._leader_row()
        committed = leader.changes[:leader.num_committed]
        if self.sst.own.changes[:len(committed)] != committed:
            raise ProtocolBug(f"node {self.id}: ledger diverges from leader at install")
        self.ragged_edge_trim()
        self.sst.set("num_committed", len(committed))
        self.sst.set("num_installed", len(committed))
        self.sst.own.check_counters()
        self.publish()
        self.enter_view(self.view.with_changes(committed))
        return True

    def enter_view(self, view: View):
        if view.owner not in view.members:
            self.removed = True
            self.view = view
            return
        self.view = view
        self.sst = SST(view, self.window_size)
        self.reset_sender_state()
        self.reset_leader_state()
        self.emit(VIEW_INSTALLED, members=view.members)
        for node in sorted(self.known_failed):
            rank = view.rank_of(node)
            if rank is not None:
                self.suspect(rank)
        for update in self.future.pop(view.vid, []):
            self.on_row_update(update)

    def _can_change_view(self) -> bool:
        return (bool(self._contagious_ranks()) or self._can_propose() or self._can_ack()
                or self._can_commit() or self._can_install())

    def view_change_step(self) -> bool:
        progressed = self.spread_suspicion()
        progressed |= self.propose_changes()
        progressed |= self.ack_changes()
        progressed |= self.commit_changes()
        progressed |= self.install_view()
        return progressed
