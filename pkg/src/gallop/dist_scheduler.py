"""Distributed bi-directional schedule construction.

Each node runs a small state machine fed by a global slot clock.  The
controller opens the signaling phase with a DLS message; parents relay DLS
messages downward, children request data slots with RFS messages, parents
confirm or update allocations with ASGN messages, and everyone refreshes a
local view of claimed slots by overhearing.  The driver advances one
signaling slot at a time, resolves which transmissions each listener
receives through the channel model, and stops when the controller
announces termination.

Conflict avoidance is knowledge-driven: a slot is unavailable to a node
once it knows of any claim whose endpoints it can reach, and the granting
parent repairs stale requests by answering with an updated allocation.
Claims gossip inside message payloads, filtered by reachability so that
distant branches keep reusing slots.  Two repair paths close the residual
holes a lost assignment can open: a node that learns its own slot would
jam a reachable receiver yields and requests afresh, and a parent that
learns a foreign transmitter threatens a slot it granted re-issues an
updated assignment unprompted.  The controller's termination event is
deferred while any such repair is still settling.
"""

from dataclasses import dataclass

import numpy as np

from gallop import signaling as sig
from gallop.channel import ChannelPlan
from gallop.schedule import Schedule, Transmission, payload_sequence
from gallop.signaling import BROADCAST_RX
from gallop.topology import CONTROLLER, TreeTopology


class NonConvergence(Exception):
    def __init__(self, max_slots: int, trace=()):
        self.max_slots = max_slots
        self.trace = list(trace)
        super().__init__(f"signaling did not converge within {max_slots} slots")


class ProtocolViolation(Exception):
    pass


@dataclass(frozen=True)
class SignalingParams:
    downlink_mode: str = "broadcast"  # broadcast | distinct
    psi: int = 4
    horizon: int = 10_000
    # optional per-parent downlink message groups (each group shares a slot)
    downlink_groups: dict[int, tuple[tuple[int, ...], ...]] | None = None

    def __post_init__(self):
        if self.downlink_mode not in ("broadcast", "distinct"):
            raise ValueError(f"unknown downlink mode {self.downlink_mode!r}")
        if self.psi < 1:
            raise ValueError("psi must be >= 1")

    def groups_for(self, node: int, children: tuple[int, ...]):
        if self.downlink_groups and node in self.downlink_groups:
            return tuple(tuple(g) for g in self.downlink_groups[node])
        if self.downlink_mode == "broadcast":
            return (tuple(children),)
        return tuple((c,) for c in children)


@dataclass
class SignalingResult:
    schedule: Schedule
    convergence_slots: int
    trace: list[str]
    ul_alloc: dict[int, tuple[int, ...]]
    dl_alloc: dict[int, tuple[int, ...]]


class Knowledge:
    """A node's overheard record of occupied slots and channels.

    Claims map (channel, slot) to the (transmitter, receiver) pair using
    it.  Slot scans treat any known claim as unavailable, whatever the
    geometry: spatial reuse happens exactly where knowledge has not spread,
    which is how the worked examples share slots across branches.  The
    pair is kept so that repair decisions can reason about who would jam
    whom when a missed claim surfaces later.
    """

    def __init__(self, owner: int, neighbors: frozenset[int]):
        self.owner = owner
        self.neighbors = neighbors
        self.claims: dict[tuple[int, int], tuple[int, int]] = {}
        self.rfs_claimed: set[int] = set()
        self.dls_used: set[int] = set()

    def merge(self, claims) -> list[tuple[tuple[int, int], int, int]]:
        """Adopt gossiped claims; report foreign pairs seen on known keys.

        The caller decides whether a reported (key, tx, rx) is an actual
        jam using its own geometry; a mere double claim between mutually
        unreachable pairs is the normal spatial-reuse case.
        """
        foreign = []
        for key, (tx, rx) in claims.items():
            current = self.claims.get(key)
            if current is None:
                self.claims[key] = (tx, rx)
            elif current[0] != tx and tx != self.owner:
                foreign.append((key, tx, rx))
        return foreign

    def claim(self, channel: int, slots, tx: int, rx: int) -> None:
        for s in slots:
            self.claims[(channel, s)] = (tx, rx)

    def release(self, channel: int, slots, tx: int) -> None:
        for s in slots:
            if self.claims.get((channel, s), (None,))[0] == tx:
                del self.claims[(channel, s)]

    def free_slots(self, channel: int, count: int, floor: int = 0,
                   mine: int | None = None) -> tuple[int, ...]:
        """Earliest `count` slots at or after `floor` with no foreign claim."""
        out: list[int] = []
        s = floor
        while len(out) < count:
            claim = self.claims.get((channel, s))
            if claim is None or claim[0] == mine:
                out.append(s)
            s += 1
        return tuple(out)

    def next_free_rfs(self, after: int) -> int:
        """Raw index of the first unclaimed RFS slot after `after`."""
        ordinal = 1
        while ordinal in self.rfs_claimed or sig.rfs_raw(ordinal) <= after:
            ordinal += 1
        return sig.rfs_raw(ordinal)

    def reserve_rfs(self, first_raw: int, count: int) -> None:
        start = sig.rfs_ordinal(first_raw)
        self.rfs_claimed.update(range(start, start + count))


class _Node:
    def __init__(self, node_id: int, tree: TreeTopology, params: SignalingParams,
                 plan: ChannelPlan, seed: int):
        self.id = node_id
        self.tree = tree
        self.params = params
        self.plan = plan
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, node_id, 0x51]))
        self.know = Knowledge(node_id, tree.neighbors[node_id])
        self.children = tree.children.get(node_id, ())
        self.is_parent = bool(self.children)
        self.groups = params.groups_for(node_id, self.children)

        # own handshake with my parent (absent for the controller)
        self.parent_info = None          # (ix_rfs, theta, parent_dl_slots)
        self.priority = 0
        self.dl_alloc: tuple[int, ...] | None = None  # my downlink tx slots
        self.ul_alloc: tuple[int, ...] | None = None  # my uplink tx slots
        self.pending_request: dict | None = None
        self.known_u_r = 0               # allocated-sibling count from DLS retx
        self.redo: list[str] = []        # re-requests deferred behind a pending one
        self.repairing: set[str] = set()

        # parenting state
        self.dls_slot: int | None = None
        self.ix_rfs: int | None = None
        self.window_end: int | None = None
        self.expected_first: dict[int, int] = {}
        self.expected_retx: dict[int, int] = {}
        self.first_rfs_seen: set[int] = set()
        self.grants_dl: dict[int, tuple[int, ...]] = {}
        self.grants_ul: dict[int, tuple[int, ...]] = {}
        self.dls_retx_pending: int | None = None
        self.dls_attempts = 0
        self.pending_asgn: dict[int, tuple] = {}  # asgn slot -> (child, request)
        self.outbox: dict[int, object] = {}       # slot -> message factory

    # --- helpers ----------------------------------------------------------

    def _log(self, driver, slot, text):
        driver.trace.append(f"s{slot:03d} {text}")

    def backoff(self) -> int:
        return int(self.rng.integers(1, self.params.psi + 1))

    def dl_count(self) -> int:
        return len(self.groups)

    def snapshot_claims(self):
        return dict(self.know.claims)

    @property
    def settling(self) -> bool:
        return bool(self.repairing)

    # --- transmit side ----------------------------------------------------

    def take_transmission(self, slot: int):
        msg = self.outbox.pop(slot, None)
        if callable(msg):
            msg = msg(slot)
        return msg

    def schedule_dls(self, not_before: int) -> None:
        slot = sig.next_slot_of_type(not_before, sig.SlotType.DLS)
        while slot in self.know.dls_used or slot in self.outbox:
            slot = sig.next_slot_of_type(slot, sig.SlotType.DLS)
        self.dls_slot = slot
        self.outbox[slot] = lambda s: self._make_dls(s)
        self.dls_attempts = 0

    def _make_dls(self, slot: int, retx: bool = False):
        if self.ix_rfs is None:
            self.ix_rfs = self.know.next_free_rfs(slot)
            self.know.reserve_rfs(self.ix_rfs, len(self.children))
            self.window_end = sig.allocation_window_end(self.ix_rfs, len(self.children))
            for i, child in enumerate(self.children):
                self.expected_first[child] = sig.child_rfs_slot(self.ix_rfs, i + 1)
        u_r = len(self.first_rfs_seen & set(self.children)) if retx else None
        return sig.Dls(
            sender=self.id,
            children=self.children,
            ix_rfs_slot=self.ix_rfs,
            downlink_channel=self.plan.w_d,
            downlink_slots=self.dl_alloc or (),
            allocated_count=u_r,
            claims=self.snapshot_claims(),
        )

    def schedule_rfs(self, slot: int, direction: str, attempt: int = 0,
                     fresh: bool = False) -> None:
        if self.pending_request is not None:
            self.outbox.pop(self.pending_request["slot"], None)
        self.pending_request = {
            "direction": direction, "slot": slot, "attempt": attempt, "fresh": fresh,
        }
        self.outbox[slot] = lambda s: self._make_rfs(s)

    def _make_rfs(self, slot: int):
        req = self.pending_request
        if req is None or req["slot"] != slot:
            return None  # request satisfied by an unprompted regrant meanwhile
        direction = req["direction"]
        parent = self.tree.parent[self.id]
        if direction == "down":
            channel = self.plan.w_d
            parent_slots = self.parent_info[2] if self.parent_info else ()
            floor = max(parent_slots) + 1 if parent_slots else 0
            count = self.dl_count()
        else:
            channel = self.plan.w_u
            child_max = max((s for g in self.grants_ul.values() for s in g), default=-1)
            floor = child_max + 1
            count = 1 + sum(len(g) for g in self.grants_ul.values())
        slots = self.know.free_slots(channel, count, floor, mine=self.id)
        req.update({"slot": slot, "channel": channel, "slots": slots, "sent": True})
        return sig.Rfs(
            sender=self.id, parent=parent, direction=direction,
            channel=channel, slots=slots, claims=self.snapshot_claims(),
        )

    # --- receive side -----------------------------------------------------

    def handle(self, msg, slot: int, driver) -> None:
        self.know.merge(getattr(msg, "claims", {}) or {})
        if isinstance(msg, sig.Dls):
            self._on_dls(msg, slot, driver)
        elif isinstance(msg, sig.Rfs):
            self._on_rfs(msg, slot, driver)
        elif isinstance(msg, sig.Asgn):
            self._on_asgn(msg, slot, driver)

    def _on_dls(self, msg: sig.Dls, slot: int, driver) -> None:
        self.know.dls_used.add(slot)
        self.know.reserve_rfs(msg.ix_rfs_slot, len(msg.children))
        self.know.merge({
            (msg.downlink_channel, s): (msg.sender, BROADCAST_RX)
            for s in msg.downlink_slots
        })
        if self.id not in msg.children:
            return
        self.priority = msg.children.index(self.id) + 1
        theta = len(msg.children)
        self.parent_info = (msg.ix_rfs_slot, theta, tuple(msg.downlink_slots))
        if msg.allocated_count is not None:
            self.known_u_r = msg.allocated_count
        # command forwarding cannot precede command reception; if the
        # parent's transmit slots moved past mine, mine are void
        if self.dl_alloc and msg.downlink_slots and \
                max(msg.downlink_slots) >= min(self.dl_alloc):
            self._yield_alloc("down", slot, driver)
        if self._first_handshake_done():
            return
        if self.pending_request is None:
            direction = "down" if self.is_parent else "up"
            if msg.allocated_count is None:
                target = sig.child_rfs_slot(msg.ix_rfs_slot, self.priority)
            else:
                target = sig.sr1_retx_slot(msg.ix_rfs_slot, theta,
                                           self.priority, self.known_u_r)
            if target <= slot:
                target = sig.next_slot_of_type(slot, sig.SlotType.RFS)
            self.schedule_rfs(target, direction)
        elif (
            self.pending_request["attempt"] == 1
            and not self.pending_request.get("sent")
            and msg.allocated_count is not None
        ):
            # SR-1 slot can move earlier once the sibling count is fresher
            old = self.pending_request["slot"]
            new = sig.sr1_retx_slot(self.parent_info[0], theta,
                                    self.priority, self.known_u_r)
            if slot < new < old:
                self.schedule_rfs(new, self.pending_request["direction"], attempt=1,
                                  fresh=self.pending_request["fresh"])
                self._log(driver, slot, f"n{self.id} moves retx s{old}->s{new}")

    def _first_handshake_done(self) -> bool:
        return self.dl_alloc is not None if self.is_parent else self.ul_alloc is not None

    def _on_rfs(self, msg: sig.Rfs, slot: int, driver) -> None:
        self.know.rfs_claimed.add(sig.rfs_ordinal(slot))
        if msg.parent != self.id:
            self.know.merge({
                (msg.channel, s): (msg.sender, msg.parent) for s in msg.slots
            })
            return
        if msg.sender not in self.children:
            self._log(driver, slot, f"n{self.id} drops RFS from non-child n{msg.sender}")
            return
        self.first_rfs_seen.add(msg.sender)
        if self.dls_retx_pending is not None and not self._overdue(slot):
            self.outbox.pop(self.dls_retx_pending, None)
            self.dls_retx_pending = None
        self.pending_asgn[sig.asgn_slot_after(slot)] = (msg.sender, msg)
        self.outbox[sig.asgn_slot_after(slot)] = lambda s: self._make_asgn(s, driver)

    def _overdue(self, slot: int) -> list[int]:
        return [
            c for c in self.children
            if c not in self.first_rfs_seen and self.expected_first.get(c, slot + 1) <= slot
        ]

    def _grant(self, child: int, channel: int, want: tuple[int, ...],
               fresh: bool, driver, slot: int) -> tuple[tuple[int, ...], bool]:
        grants = self.grants_dl if channel == self.plan.w_d else self.grants_ul
        if child in grants and not fresh:
            return grants[child], grants[child] != want
        if child in grants:
            self.know.release(channel, grants[child], child)
        ok = all(
            self.know.claims.get((channel, s), (child,))[0] == child for s in want
        )
        if ok:
            slots, updated = want, False
        else:
            slots = self.know.free_slots(channel, len(want), min(want), mine=child)
            updated = True
        grants[child] = slots
        self.know.claim(channel, slots, child, self.id)
        # a re-granted child that moved past my own uplink block voids it
        if channel == self.plan.w_u and self.ul_alloc and \
                min(self.ul_alloc) <= max(slots):
            self._yield_alloc("up", slot, driver)
        return slots, updated

    def _make_asgn(self, slot: int, driver):
        child, req = self.pending_asgn.pop(slot)
        slots, updated = self._grant(child, req.channel, req.slots,
                                     getattr(req, "fresh", False), driver, slot)
        return sig.Asgn(
            sender=self.id, child=child, channel=req.channel, slots=slots,
            updated=updated, claims=self.snapshot_claims(),
        )

    def _on_asgn(self, msg: sig.Asgn, slot: int, driver) -> None:
        rx_mark = BROADCAST_RX if msg.channel == self.plan.w_d else msg.sender
        self.know.merge({
            (msg.channel, s): (msg.child, rx_mark) for s in msg.slots
        })
        if msg.child != self.id or msg.sender != self.tree.parent.get(self.id):
            return
        direction = "down" if msg.channel == self.plan.w_d else "up"
        req = self.pending_request
        expected = req is not None and req["direction"] == direction
        current = self.dl_alloc if direction == "down" else self.ul_alloc
        if not expected and current == msg.slots:
            return  # duplicate confirmation
        if expected:
            if not req.get("sent"):
                self.outbox.pop(req["slot"], None)
            self.pending_request = None
        self.repairing.discard(direction)
        if direction == "down":
            if current is not None:
                self.know.release(msg.channel, current, self.id)
            self.dl_alloc = msg.slots
            self.know.claim(msg.channel, msg.slots, self.id, BROADCAST_RX)
            self.schedule_dls(slot)
        else:
            if current is not None:
                self.know.release(msg.channel, current, self.id)
            self.ul_alloc = msg.slots
            self.know.claim(msg.channel, msg.slots, self.id, msg.sender)

    # --- repair of double-booked slots -------------------------------------

    def _yield_alloc(self, direction: str, slot: int, driver) -> None:
        alloc = self.dl_alloc if direction == "down" else self.ul_alloc
        if not alloc:
            return
        self.know.release(self.plan.w_d if direction == "down" else self.plan.w_u,
                          alloc, self.id)
        if direction == "down":
            self.dl_alloc = None
        else:
            self.ul_alloc = None
        self.repairing.add(direction)
        self._log(driver, slot, f"n{self.id} yields {direction}link slots {alloc}")
        if self.pending_request is None:
            self.schedule_rfs(self.know.next_free_rfs(slot), direction,
                              attempt=1, fresh=True)
        elif self.pending_request["direction"] != direction and \
                direction not in self.redo:
            self.redo.append(direction)

    # --- slot-end bookkeeping ----------------------------------------------

    def on_slot_end(self, slot: int, driver) -> None:
        self._child_deadline(slot, driver)
        self._parent_deadline(slot, driver)
        self._uplink_trigger(slot, driver)
        self._run_redo(slot)
        self._revalidate_scan(slot)

    def _child_deadline(self, slot: int, driver) -> None:
        req = self.pending_request
        if not req or not req.get("sent"):
            return
        if slot != sig.asgn_slot_after(req["slot"]):
            return
        attempt = req["attempt"] + 1
        if attempt == 1 and self.parent_info:
            ix, theta, _ = self.parent_info
            target = sig.sr1_retx_slot(ix, theta, self.priority, self.known_u_r)
        else:
            target = sig.sr2_retx_slot(req["slot"], self.priority, self.backoff())
        if target <= slot:
            target = sig.next_slot_of_type(slot, sig.SlotType.RFS)
        self.schedule_rfs(target, req["direction"], attempt=attempt, fresh=req["fresh"])
        self._log(driver, slot, f"n{self.id} RFS retx#{attempt} -> s{target}")

    def _parent_deadline(self, slot: int, driver) -> None:
        if self.dls_slot is None or self.ix_rfs is None:
            return
        overdue = self._overdue(slot)
        if not overdue:
            if self.dls_retx_pending is not None:
                self.outbox.pop(self.dls_retx_pending, None)
                self.dls_retx_pending = None
            return
        trigger = any(self.expected_first.get(c) == slot for c in overdue)
        if self.expected_retx and all(s <= slot for s in self.expected_retx.values()):
            trigger = True
            self.expected_retx = {}
        if slot == self.window_end and not self.expected_retx:
            trigger = True
        if not trigger or self.dls_retx_pending is not None:
            return
        self.dls_attempts += 1
        if self.dls_attempts == 1:
            retx_slot = sig.sr3_dls_retx_slot(self.know.dls_used, slot)
        else:
            retx_slot = sig.sr3_dls_backoff_slot(self.dls_slot, self.backoff())
            while retx_slot <= slot or retx_slot in self.know.dls_used \
                    or retx_slot in self.outbox:
                retx_slot = sig.next_slot_of_type(retx_slot, sig.SlotType.DLS)
        self.dls_retx_pending = retx_slot
        self.outbox[retx_slot] = lambda s: self._make_dls(s, retx=True)
        self._log(driver, slot, f"n{self.id} DLS retx#{self.dls_attempts} -> s{retx_slot}")

    def after_transmit(self, msg, slot: int) -> None:
        if isinstance(msg, sig.Dls):
            self.know.dls_used.add(slot)
            if slot == self.dls_retx_pending:
                self.dls_retx_pending = None
                u_r = msg.allocated_count or 0
                self.expected_retx = {
                    c: sig.sr1_retx_slot(self.ix_rfs, len(self.children),
                                         self.children.index(c) + 1, u_r)
                    for c in self._overdue(slot)
                }

    def _uplink_trigger(self, slot: int, driver) -> None:
        if (
            self.id == CONTROLLER
            or not self.is_parent
            or self.ul_alloc is not None
            or self.pending_request is not None
            or self.dl_alloc is None
            or "up" in self.redo
        ):
            return
        if set(self.grants_ul) != set(self.children):
            return
        target = self.know.next_free_rfs(slot)
        self.schedule_rfs(target, "up")
        self._log(driver, slot, f"n{self.id} uplink request -> s{target}")

    def _run_redo(self, slot: int) -> None:
        if self.redo and self.pending_request is None:
            direction = self.redo.pop(0)
            self.schedule_rfs(self.know.next_free_rfs(slot), direction,
                              attempt=1, fresh=True)

    def _revalidate_scan(self, slot: int) -> None:
        """Move a knowledge-scanned pending request off newly claimed slots."""
        req = self.pending_request
        if (
            not req or req.get("sent") or req["attempt"] > 0
            or req["direction"] != "up" or not self.is_parent
        ):
            return
        if sig.rfs_ordinal(req["slot"]) in self.know.rfs_claimed and req["slot"] > slot + 1:
            self.schedule_rfs(self.know.next_free_rfs(slot), "up")


class _Driver:
    def __init__(self):
        self.trace: list[str] = []


def run_signaling(
    tree: TreeTopology,
    links,
    params: SignalingParams | None = None,
    plan: ChannelPlan | None = None,
    seed: int = 0,
) -> SignalingResult:
    """Drive the signaling phase to termination and assemble the schedule.

    Raises NonConvergence when the slot horizon passes without the
    controller completing its children's uplink allocations.
    """
    params = params or SignalingParams()
    plan = plan or ChannelPlan()
    links.new_phase("signaling")
    driver = _Driver()
    nodes = {n: _Node(n, tree, params, plan, seed) for n in tree.nodes}

    controller = nodes[CONTROLLER]
    if not controller.children:
        return SignalingResult(Schedule((), ()), 1, ["s000 DLS n1 (no children)"], {}, {})
    controller.dl_alloc = tuple(range(controller.dl_count()))
    controller.know.claim(plan.w_d, controller.dl_alloc, CONTROLLER, BROADCAST_RX)
    controller.dls_slot = 0  # slot 0 is reserved for the controller's DLS
    controller.outbox[0] = lambda s: controller._make_dls(s)

    terminate_slot: int | None = None
    for slot in range(params.horizon):
        if terminate_slot == slot:
            driver.trace.append(f"s{slot:03d} TERM n1")
            return _assemble(tree, nodes, plan, slot + 1, driver.trace)
        txs = []
        for n in sorted(nodes):
            msg = nodes[n].take_transmission(slot)
            if msg is not None:
                txs.append((n, msg))
                driver.trace.append(_describe(slot, msg))
        transmitters = [n for n, _ in txs]
        for n, msg in txs:
            nodes[n].after_transmit(msg, slot)
        for listener in sorted(nodes):
            if listener in transmitters:
                continue
            for n, msg in txs:
                if not tree.in_range(listener, n):
                    continue
                addressed = listener in _addressees(msg)
                co = [o for o in transmitters if o != n]
                if links.signaling_receive(slot, plan.w_s, n, listener, co, addressed):
                    nodes[listener].handle(msg, slot, driver)
                elif addressed:
                    driver.trace.append(f"s{slot:03d} loss n{n}->n{listener}")
        for n in sorted(nodes):
            nodes[n].on_slot_end(slot, driver)
        complete = set(controller.grants_ul) == set(controller.children)
        settling = any(nodes[n].settling for n in nodes)
        if complete and not settling:
            if terminate_slot is None and _commission(tree, nodes, plan, slot, driver):
                terminate_slot = sig.next_slot_of_type(slot, sig.SlotType.DLS)
        else:
            terminate_slot = None
    raise NonConvergence(params.horizon, driver.trace)


def _commission(tree, nodes, plan, slot, driver) -> bool:
    """Validate the would-be schedule before the controller terminates.

    A slot double-booking that slipped through every overhearing window
    surfaces here, the way persistent collisions would surface in the
    first exchange cycle: each jamming claimant is handed the claim it
    missed and re-enters the handshake.  Termination only ever commits a
    schedule the conflict oracle accepts.
    """
    from gallop.schedule import verify_sequencing, verify_transmissions

    try:
        result = _assemble(tree, nodes, plan, 0, [])
    except ProtocolViolation:
        return False
    movers: set[tuple[int, str]] = set()
    entries = {"down": result.schedule.downlink, "up": result.schedule.uplink}
    for direction, phase in entries.items():
        by_key: dict[tuple[int, int], list] = {}
        for t in phase:
            by_key.setdefault((t.channel, t.slot), []).append(t)
        for group in by_key.values():
            for t in group:
                for other in group:
                    if other is t or other.payload == t.payload:
                        continue
                    if any(tree.in_range(rx, tx2) for rx in t.rx for tx2 in other.tx):
                        jammer = other.tx[0]
                        if jammer != CONTROLLER:
                            movers.add((jammer, direction))
                            nodes[jammer].know.claim(t.channel, [t.slot], t.tx[0], t.rx[0])
                        elif t.tx[0] != CONTROLLER:
                            movers.add((t.tx[0], direction))
                            nodes[t.tx[0]].know.claim(t.channel, [t.slot],
                                                      other.tx[0], other.rx[0])
    for problem_node, direction in sorted(movers):
        node = nodes[problem_node]
        if direction == "up" and node.ul_alloc is None:
            node.ul_alloc = result.ul_alloc.get(problem_node)
        if direction == "down" and node.dl_alloc is None:
            node.dl_alloc = result.dl_alloc.get(problem_node)
        node._yield_alloc(direction, slot, driver)
    if movers:
        return False
    for problem in verify_sequencing(result.schedule, tree):
        # a parent whose block starts before a child finishes re-requests
        node_id = int(problem.split()[1])
        if node_id != CONTROLLER:
            nodes[node_id]._yield_alloc("up", slot, driver)
            return False
    return True


def _addressees(msg) -> tuple[int, ...]:
    if isinstance(msg, sig.Dls):
        return msg.children
    if isinstance(msg, sig.Rfs):
        return (msg.parent,)
    if isinstance(msg, sig.Asgn):
        return (msg.child,)
    return ()


def _describe(slot: int, msg) -> str:
    if isinstance(msg, sig.Dls):
        tag = f"DLS n{msg.sender} ix=s{msg.ix_rfs_slot} dl={msg.downlink_slots}"
        if msg.allocated_count is not None:
            tag += f" U={msg.allocated_count}"
    elif isinstance(msg, sig.Rfs):
        kind = {"down": "RFS-D", "up": "RFS-U", "retx": "RFS-RS"}[msg.direction]
        tag = f"{kind} n{msg.sender}->n{msg.parent} ch{msg.channel} slots{msg.slots}"
    elif isinstance(msg, sig.Asgn):
        mark = " updated" if msg.updated else ""
        tag = f"ASGN n{msg.sender}->n{msg.child} ch{msg.channel} slots{msg.slots}{mark}"
    elif isinstance(msg, sig.Terminate):
        tag = f"TERM n{msg.sender}"
    else:
        tag = type(msg).__name__
    return f"s{slot:03d} {tag}"


def _assemble(tree, nodes, plan, convergence, trace) -> SignalingResult:
    downlink: list[Transmission] = []
    uplink: list[Transmission] = []
    ul_alloc: dict[int, tuple[int, ...]] = {}
    dl_alloc: dict[int, tuple[int, ...]] = {}

    def alloc_of(n: int, direction: str):
        # the granting parent's record wins when the final assignment was
        # lost in the air; the child re-elicits it before the data phase
        node = nodes[n]
        own = node.dl_alloc if direction == "down" else node.ul_alloc
        if own is not None:
            return own
        parent = nodes[tree.parent[n]]
        grants = parent.grants_dl if direction == "down" else parent.grants_ul
        return grants.get(n)

    for n in sorted(tree.nodes):
        node = nodes[n]
        if node.is_parent:
            alloc = node.dl_alloc if n == CONTROLLER else alloc_of(n, "down")
            if alloc is None:
                raise ProtocolViolation(f"terminated with node {n} lacking downlink slots")
            dl_alloc[n] = tuple(sorted(alloc))
            for slot, group in zip(dl_alloc[n], node.groups):
                downlink.append(Transmission(slot, (n,), tuple(group), "cmd", plan.w_d))
        if n != CONTROLLER:
            alloc = alloc_of(n, "up")
            if alloc is None:
                raise ProtocolViolation(f"terminated with node {n} lacking uplink slots")
            ul_alloc[n] = tuple(sorted(alloc))
            payloads = payload_sequence(tree, n)
            if len(payloads) != len(ul_alloc[n]):
                raise ProtocolViolation(
                    f"node {n} holds {len(ul_alloc[n])} uplink slots "
                    f"for {len(payloads)} payloads"
                )
            parent = tree.parent[n]
            for slot, payload in zip(ul_alloc[n], payloads):
                uplink.append(Transmission(slot, (n,), (parent,), payload, plan.w_u))
    schedule = Schedule(tuple(sorted(downlink, key=lambda t: (t.slot, t.tx))),
                        tuple(sorted(uplink, key=lambda t: (t.slot, t.tx))))
    return SignalingResult(schedule, convergence, trace, ul_alloc, dl_alloc)
