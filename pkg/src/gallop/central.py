"""Centralized baseline scheduler and the greedy longest-queue-first baseline.

The centralized scheduler has global topology knowledge: it lays out the
downlink root-first and the uplink leaf-first, packing transmissions into
the earliest slot where they cause no collision at any already-scheduled
receiver.  A broadcast command must stay decodable by every in-range
neighbor of its transmitter (overhearing feeds relay buffers), so two
broadcasts sharing an audible node never go in parallel; unicast
transmissions only protect their addressed receivers.
"""

from gallop.schedule import Schedule, Transmission, payload_sequence
from gallop.topology import CONTROLLER


def _protected(t: Transmission, tree, broadcast: bool) -> frozenset[int]:
    if broadcast and len(t.rx) > 1:
        return tree.neighbors[t.tx[0]] | set(t.rx)
    return frozenset(t.rx)


def _conflicts(a: Transmission, b: Transmission, tree, bc_a: bool, bc_b: bool) -> bool:
    busy_a = set(a.tx) | set(a.rx)
    busy_b = set(b.tx) | set(b.rx)
    if busy_a & busy_b:
        return True
    if a.channel != b.channel:
        return False
    # mutual-range transmitters stay sequential so neighbors keep overhearing
    for ta in a.tx:
        if any(tree.in_range(ta, tb) for tb in b.tx):
            return True
    for rx in _protected(a, tree, bc_a):
        if any(tree.in_range(rx, tx) for tx in b.tx):
            return True
    for rx in _protected(b, tree, bc_b):
        if any(tree.in_range(rx, tx) for tx in a.tx):
            return True
    return False


def _first_fit(placed, cand: Transmission, tree, earliest: int, bc: bool) -> Transmission:
    slot = earliest
    while True:
        trial = Transmission(slot, cand.tx, cand.rx, cand.payload, cand.channel)
        if all(
            not _conflicts(trial, p, tree, bc, len(p.rx) > 1)
            for p in placed
            if p.slot == slot
        ):
            return trial
        slot += 1


def schedule_centralized(tree, mode: str = "distinct", channels=None) -> Schedule:
    """Sequential bi-directional schedule with greedy parallelization.

    `mode` selects broadcast (one downlink slot per parent) or distinct
    (one downlink slot per child) command transmissions.
    """
    if mode not in ("broadcast", "distinct"):
        raise ValueError(f"unknown downlink mode {mode!r}")
    w_d = channels.w_d if channels else 0
    w_u = channels.w_u if channels else 1
    broadcast = mode == "broadcast"

    downlink: list[Transmission] = []
    rx_slot: dict[int, int] = {CONTROLLER: -1}
    order = sorted(tree.parents, key=lambda n: (tree.depth(n), n))
    for parent in order:
        kids = tree.children[parent]
        if not kids:
            continue
        ready = rx_slot[parent] + 1
        if broadcast:
            t = _first_fit(downlink, Transmission(0, (parent,), kids, "cmd", w_d),
                           tree, ready, True)
            downlink.append(t)
            for k in kids:
                rx_slot[k] = t.slot
        else:
            for k in kids:
                t = _first_fit(downlink, Transmission(0, (parent,), (k,), "cmd", w_d),
                               tree, ready, False)
                downlink.append(t)
                rx_slot[k] = t.slot
                ready = max(ready, 0)

    uplink: list[Transmission] = []
    ready_at: dict[str, int] = {}  # payload -> first slot it can be forwarded
    for node in sorted((n for n in tree.nodes if n != CONTROLLER),
                       key=lambda n: (-tree.depth(n), n)):
        parent = tree.parent[node]
        prev = -1
        for payload in payload_sequence(tree, node):
            earliest = max(ready_at.get(payload, 0), prev + 1)
            t = _first_fit(uplink, Transmission(0, (node,), (parent,), payload, w_u),
                           tree, earliest, False)
            uplink.append(t)
            ready_at[payload] = t.slot + 1
            prev = t.slot
    return Schedule(downlink=tuple(downlink), uplink=tuple(uplink))


def tree_queue_lengths(tree) -> dict[int, int]:
    """Uplink load implied by the closed-loop traffic: one packet per node
    plus everything it forwards, i.e. its subtree size."""
    return {n: tree.subtree_size(n) for n in tree.nodes if n != CONTROLLER}


def schedule_lqf(tree, queue_lengths: dict[int, int] | None = None, channel: int = 1):
    """Greedy maximal scheduling, longest queue first.

    Per slot the node with the longest remaining queue transmits to its
    parent; further nodes join the slot in descending queue order whenever
    they conflict with nobody already allocated (shared receiver, receiver
    inside an active transmitter's range, or a busy radio).  Returns the
    drained schedule and its duration in slots.
    """
    queues = dict(queue_lengths) if queue_lengths is not None else tree_queue_lengths(tree)
    for node, q in queues.items():
        if q < 0:
            raise ValueError(f"negative queue for node {node}")
    entries: list[Transmission] = []
    slot = 0
    while any(q > 0 for q in queues.values()):
        busy: set[int] = set()
        placed: list[Transmission] = []
        for node in sorted(queues, key=lambda n: (-queues[n], n)):
            if queues[node] == 0:
                continue
            parent = tree.parent[node]
            if node in busy or parent in busy:
                continue
            if any(tree.in_range(rx, node) for t in placed for rx in t.rx):
                continue
            if any(tree.in_range(parent, tx) for t in placed for tx in t.tx):
                continue
            t = Transmission(slot, (node,), (parent,), f"pkt:{node}", channel)
            placed.append(t)
            busy.update((node, parent))
        if not placed:
            raise RuntimeError("LQF made no progress; inconsistent queue state")
        for t in placed:
            queues[t.tx[0]] -= 1
        entries.extend(placed)
        slot += 1
    return Schedule(downlink=(), uplink=tuple(entries)), slot
