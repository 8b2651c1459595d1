"""Transmission schedules and the independent conflict oracle.

A schedule holds the downlink and uplink phases of one exchange cycle.
Slots are phase-local; the uplink phase starts after the downlink phase
ends, so equal slot numbers in different phases never share air time.
Payload tags are "cmd" for command messages and "up:<node>" for the
response originated by <node>.
"""

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class Transmission:
    slot: int
    tx: tuple[int, ...]      # >1 entries form a cooperative pair
    rx: tuple[int, ...]
    payload: str
    channel: int

    def __post_init__(self):
        if not self.tx or not self.rx:
            raise ValueError("transmission needs at least one tx and one rx")


@dataclass(frozen=True)
class Schedule:
    downlink: tuple[Transmission, ...]
    uplink: tuple[Transmission, ...]

    @property
    def downlink_span(self) -> int:
        return max((t.slot for t in self.downlink), default=-1) + 1

    @property
    def uplink_span(self) -> int:
        return max((t.slot for t in self.uplink), default=-1) + 1

    @property
    def cycle_slots(self) -> int:
        return self.downlink_span + self.uplink_span

    def uplink_slots_of(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(t.slot for t in self.uplink if t.tx == (node,)))

    def transmit_order(self, node: int) -> tuple[str, ...]:
        """Payloads of `node`'s uplink slots in transmission order (1-based
        ordinals index into this)."""
        entries = sorted(
            (t for t in self.uplink if node in t.tx and t.tx[0] == node),
            key=lambda t: t.slot,
        )
        return tuple(t.payload for t in entries)


def cycle_time(schedule: Schedule, slot_us: float | None = None):
    """Cycle length in slots, optionally also milliseconds."""
    slots = schedule.cycle_slots
    if slot_us is None:
        return slots
    return slots, slots * slot_us / 1000.0


def payload_sequence(tree, node: int) -> list[str]:
    """Order in which `node` forwards payloads: its own first, then each
    child's block in priority order."""
    seq = [f"up:{node}"]
    for child in tree.children.get(node, ()):
        seq.extend(payload_sequence(tree, child))
    return seq


def verify_transmissions(entries, tree) -> list[str]:
    """Conflict oracle for one phase; empty result means conflict-free.

    Flags, per (channel, slot): a second transmitter in range of someone
    else's receiver (unless the payloads are identical, the cooperative
    exemption), a node both transmitting and receiving in one slot, and a
    node appearing on two channels in one slot.
    """
    conflicts: list[str] = []
    by_slot: dict[int, list[Transmission]] = {}
    for t in entries:
        by_slot.setdefault(t.slot, []).append(t)
    for slot, group in sorted(by_slot.items()):
        busy_channel: dict[int, int] = {}
        transmitting: set[int] = set()
        receiving: set[int] = set()
        for t in group:
            for node in (*t.tx, *t.rx):
                if node in busy_channel and busy_channel[node] != t.channel:
                    conflicts.append(f"slot {slot}: node {node} on two channels")
                busy_channel[node] = t.channel
            for node in t.tx:
                if node in transmitting:
                    conflicts.append(f"slot {slot}: node {node} transmits twice")
            transmitting.update(t.tx)
            receiving.update(t.rx)
        for node in transmitting & receiving:
            conflicts.append(f"slot {slot}: node {node} transmits and receives")
        for t in group:
            for rx in t.rx:
                for other in group:
                    if other is t or other.channel != t.channel:
                        continue
                    if other.payload == t.payload:
                        continue  # cooperative duplicates are compatible
                    for tx2 in other.tx:
                        if tree.in_range(rx, tx2):
                            conflicts.append(
                                f"slot {slot} ch {t.channel}: receiver {rx} of "
                                f"{t.tx} jammed by {tx2}"
                            )
        for t in group:
            for rx in t.rx:
                if not any(tree.in_range(rx, tx) for tx in t.tx):
                    conflicts.append(f"slot {slot}: receiver {rx} out of range of {t.tx}")
    return conflicts


def verify_schedule(schedule: Schedule, tree) -> list[str]:
    """Conflict oracle over both phases of a schedule."""
    out = [f"downlink: {c}" for c in verify_transmissions(schedule.downlink, tree)]
    out += [f"uplink: {c}" for c in verify_transmissions(schedule.uplink, tree)]
    return out


def verify_sequencing(schedule: Schedule, tree) -> list[str]:
    """Ordering checks: commands flow root-to-leaf, responses leaf-to-root.

    Every parent's downlink transmission toward a child precedes that
    child's own downlink slots, and every parent's uplink slots follow all
    of its children's uplink slots.
    """
    problems: list[str] = []
    dl_tx_slots: dict[int, list[int]] = {}
    dl_rx_slot: dict[int, int] = {}
    for t in schedule.downlink:
        for n in t.tx:
            dl_tx_slots.setdefault(n, []).append(t.slot)
        for r in t.rx:
            dl_rx_slot[r] = min(t.slot, dl_rx_slot.get(r, t.slot))
    for node, slots in dl_tx_slots.items():
        if node in dl_rx_slot and min(slots) <= dl_rx_slot[node]:
            problems.append(f"node {node} forwards downlink before receiving it")
    ul_slots: dict[int, list[int]] = {}
    for t in schedule.uplink:
        ul_slots.setdefault(t.tx[0], []).append(t.slot)
    for node, slots in ul_slots.items():
        for child in tree.children.get(node, ()):
            child_slots = ul_slots.get(child)
            if child_slots and min(slots) <= max(child_slots):
                problems.append(
                    f"node {node} uplink starts before child {child} finishes"
                )
    return problems


def uplink_demand(tree, node: int) -> int:
    """Uplink slots a node needs: one per payload in its subtree."""
    return tree.subtree_size(node)


def with_channel(entries, channel: int):
    return tuple(replace(t, channel=channel) for t in entries)
