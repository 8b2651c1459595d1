"""Signaling-frame slot calculus and message formats.

The signaling frame is a repeating pattern of slot types.  Slot 0 is the
controller's DLS slot; after that the pattern repeats every three slots:
RFS slots at {1, 4, 7, ...}, ASGN slots at {2, 5, 8, ...} and DLS slots at
{3, 6, 9, ...}.

Two index spaces are used.  Raw indices count signaling slots directly
(s0, s1, s2, ...).  Ordinal indices count slots of one class: the k-th RFS
slot has raw index 1 + 3*(k-1), the k-th DLS slot has raw index 3*k.  The
slot-selection rules for RFS messages operate in RFS-ordinal space, while
the allocation window is a raw-index span; both conversions live here.
"""

from dataclasses import dataclass, field
from enum import Enum


class SlotType(Enum):
    CONTROLLER_DLS = "controller-dls"
    RFS = "rfs"
    ASGN = "asgn"
    DLS = "dls"


def classify_slot(raw: int) -> SlotType:
    """Classify a raw signaling-slot index; total over all raw >= 0."""
    if raw < 0:
        raise ValueError(f"negative slot index {raw}")
    if raw == 0:
        return SlotType.CONTROLLER_DLS
    rem = raw % 3
    if rem == 1:
        return SlotType.RFS
    if rem == 2:
        return SlotType.ASGN
    return SlotType.DLS


def rfs_ordinal(raw: int) -> int:
    """Ordinal (1-based) of an RFS slot given its raw index."""
    if classify_slot(raw) is not SlotType.RFS:
        raise ValueError(f"slot {raw} is not an RFS slot")
    return (raw - 1) // 3 + 1


def rfs_raw(ordinal: int) -> int:
    """Raw index of the k-th RFS slot (k >= 1)."""
    if ordinal < 1:
        raise ValueError(f"RFS ordinal must be >= 1, got {ordinal}")
    return 1 + 3 * (ordinal - 1)


def dls_ordinal(raw: int) -> int:
    """Ordinal (1-based) of a non-controller DLS slot given its raw index."""
    if classify_slot(raw) is not SlotType.DLS:
        raise ValueError(f"slot {raw} is not a DLS slot")
    return raw // 3


def dls_raw(ordinal: int) -> int:
    """Raw index of the k-th DLS slot (k >= 1)."""
    if ordinal < 1:
        raise ValueError(f"DLS ordinal must be >= 1, got {ordinal}")
    return 3 * ordinal


def asgn_slot_after(rfs_slot: int) -> int:
    """The ASGN slot in which a request from `rfs_slot` is answered."""
    if classify_slot(rfs_slot) is not SlotType.RFS:
        raise ValueError(f"slot {rfs_slot} is not an RFS slot")
    return rfs_slot + 1


def child_rfs_slot(ix_rfs: int, priority: int) -> int:
    """RFS slot of a child with the given priority (1 = highest).

    The parent's DLS advertises the first RFS slot available to its
    children (`ix_rfs`); the child with priority p uses the (p-1)-th RFS
    slot after it.
    """
    if priority < 1:
        raise ValueError(f"priority must be >= 1, got {priority}")
    return rfs_raw(rfs_ordinal(ix_rfs) + priority - 1)


def allocation_window_end(ix_rfs: int, theta_r: int) -> int:
    """Last raw slot of a parent's allocation window.

    A parent that advertised `ix_rfs` to `theta_r` children expects all
    their RFS messages no later than this slot (raw-index arithmetic:
    ix + 3*theta - 1).
    """
    if theta_r < 1:
        raise ValueError(f"theta_r must be >= 1, got {theta_r}")
    return ix_rfs + 3 * theta_r - 1


def sr1_retx_slot(ix_rfs: int, theta_r: int, priority: int, u_r: int) -> int:
    """First-attempt RFS retransmission slot (rule SR-1).

    Counts past the block of sibling RFS slots, discounted by the number
    of siblings already allocated (u_r), in RFS-ordinal space.
    """
    if u_r > theta_r:
        raise ValueError(f"u_r={u_r} exceeds theta_r={theta_r}")
    return rfs_raw(rfs_ordinal(ix_rfs) + theta_r + priority - 1 - u_r)


def sr2_retx_slot(ix_prev_rfs: int, priority: int, backoff: int) -> int:
    """Second-or-later RFS retransmission slot (rule SR-2).

    `backoff` is a uniform draw from [1, psi]; arithmetic is in
    RFS-ordinal space relative to the last used RFS slot.
    """
    if backoff < 1:
        raise ValueError(f"backoff must be >= 1, got {backoff}")
    return rfs_raw(rfs_ordinal(ix_prev_rfs) + backoff + priority - 1)


def sr3_dls_retx_slot(occupied_dls: set[int], after: int) -> int:
    """First-attempt DLS retransmission slot (rule SR-3).

    Earliest DLS-classified slot strictly after `after` that local
    knowledge does not mark occupied.
    """
    slot = dls_raw(max(1, after // 3 + 1))
    while slot <= after or slot in occupied_dls:
        slot = dls_raw(dls_ordinal(slot) + 1)
    return slot


def sr3_dls_backoff_slot(ix_prev_dls: int, backoff: int) -> int:
    """Second-or-later DLS retransmission slot (rule SR-3).

    DLS-ordinal arithmetic `prev + backoff - 1`; with backoff 1 this lands
    on the previous slot itself, so callers must clamp the result forward
    to the next future DLS slot (the convention pinned by the tests).
    """
    if backoff < 1:
        raise ValueError(f"backoff must be >= 1, got {backoff}")
    return dls_raw(max(1, dls_ordinal(ix_prev_dls) + backoff - 1))


def next_slot_of_type(after: int, slot_type: SlotType) -> int:
    """Earliest slot of the given class strictly after `after`."""
    slot = after + 1
    while classify_slot(slot) is not slot_type:
        slot += 1
    return slot


# --- signaling messages -----------------------------------------------------
#
# Messages are simulator-internal structures, not wire encodings.  Every
# message carries the sender's view of occupied data slots (`claims`) so a
# receiver can refresh state it missed while transmitting; this mirrors the
# schedule information piggybacked on real signaling traffic.  A claim maps
# (channel, slot) to the (transmitter, receiver) pair using it; receivers
# adopt only claims whose endpoints they can reach, so spatial reuse of a
# slot between distant branches survives the gossip.

Claims = dict[tuple[int, int], tuple[int, int]]  # (channel, slot) -> (tx, rx)
BROADCAST_RX = 0  # receiver marker for one-to-children command slots


@dataclass(frozen=True)
class Dls:
    """Downlink signaling: priorities, next RFS slot, own allocation."""

    sender: int
    children: tuple[int, ...]          # priority order (index 0 = highest)
    ix_rfs_slot: int
    downlink_channel: int
    downlink_slots: tuple[int, ...]    # sender's own downlink transmit slots
    allocated_count: int | None = None  # U_r; present on retransmissions only
    claims: Claims = field(default_factory=dict)


@dataclass(frozen=True)
class Rfs:
    """Request-for-slots; `direction` is 'down', 'up' or 'retx'."""

    sender: int
    parent: int
    direction: str
    channel: int
    slots: tuple[int, ...]
    recovers: tuple[tuple[int, int], ...] = ()  # retx only: (node, tx ordinal)
    claims: Claims = field(default_factory=dict)


@dataclass(frozen=True)
class Asgn:
    """Assignment confirming or updating a requested allocation."""

    sender: int
    child: int
    channel: int
    slots: tuple[int, ...]
    updated: bool = False
    claims: Claims = field(default_factory=dict)


@dataclass(frozen=True)
class Gnack:
    """Negative acknowledgement listing missing child transmissions.

    Entries are (child id, missing transmission ordinal, original slot);
    the original slot is None unless schedule extrapolation is in use.  An
    empty entry list tells the children their transmissions succeeded.
    """

    sender: int
    entries: tuple[tuple[int, int, int | None], ...] = ()


@dataclass(frozen=True)
class Terminate:
    """Controller's end-of-signaling announcement."""

    sender: int


@dataclass(frozen=True)
class EmptyRfs:
    """Relay-selection poll from a parent to one child."""

    sender: int
    target: int


@dataclass(frozen=True)
class EmptyAsgn:
    """Relay-selection poll response; overheard to build neighbor tables."""

    sender: int
    parent: int


SignalingMessage = Dls | Rfs | Asgn | Gnack | Terminate | EmptyRfs | EmptyAsgn
