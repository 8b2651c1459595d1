"""Retransmission techniques, cooperative transmissions and relay selection.

Three recovery mechanisms extend a built schedule:

* schedule duplication repeats transmissions wholesale (option 1 repeats
  the whole cycle per round on a rotated channel with one switching slot
  between rounds; option 2 pairs every slot with an adjacent duplicate);
* retransmission scheduling builds a dedicated recovery schedule on the
  retransmission channel, driven by G-NACK messages and a compact
  two-slot signaling frame (request slots even, assignments odd);
* schedule extrapolation replays the original schedule structure with
  cooperative slots for the flagged transmissions only, with no signaling.

The cycle engine in this module executes any of these plans slot by slot
against the channel model, tracking per-node payload buffers (including
relay overhearing) so that multi-hop recovery chains resolve in order.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from gallop import channel as ch
from gallop.schedule import Schedule, Transmission, payload_sequence, verify_transmissions
from gallop.topology import CONTROLLER, TreeTopology


class RetxNonConvergence(Exception):
    def __init__(self, horizon: int):
        self.horizon = horizon
        super().__init__(f"retransmission signaling exceeded {horizon} slots")


TECHNIQUES = ("none", "dup1", "dup2", "retx-sched", "extrapolate")


@dataclass(frozen=True)
class RetxParams:
    technique: str = "none"
    rounds: int = 1              # duplication rounds for dup1
    switch_slots: int = 1        # channel switching gap between dup1 rounds
    relay_budget: int = 1        # 1 or 2 relays per cooperative slot
    reliable_gnacks: bool = True
    resend_successful: bool = False  # extrapolation replays delivered slots too
    psi: int = 4
    retx_horizon: int = 600

    def __post_init__(self):
        if self.technique not in TECHNIQUES:
            raise ValueError(f"unknown technique {self.technique!r}")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")


@dataclass(frozen=True)
class Segment:
    kind: str   # downlink | uplink | switch | gnack | signaling | retx
    entries: tuple[Transmission, ...]
    span: int


@dataclass(frozen=True)
class CyclePlan:
    technique: str
    segments: tuple[Segment, ...]

    @property
    def total_slots(self) -> int:
        return sum(s.span for s in self.segments)


def verify_plan(plan: CyclePlan, tree) -> list[str]:
    out = []
    for i, seg in enumerate(plan.segments):
        for c in verify_transmissions(seg.entries, tree):
            out.append(f"segment {i} ({seg.kind}): {c}")
    return out


def base_plan(schedule: Schedule) -> CyclePlan:
    return CyclePlan("none", (
        Segment("downlink", schedule.downlink, schedule.downlink_span),
        Segment("uplink", schedule.uplink, schedule.uplink_span),
    ))


def duplicate_schedule(schedule: Schedule, option: int, rounds: int,
                       plan: ch.ChannelPlan | None = None,
                       switch_slots: int = 1) -> CyclePlan:
    """Time-domain duplication of a schedule.

    Option 1 repeats both phases per round, hopping each round to a
    different channel, with a channel-switching gap between rounds.
    Option 2 follows every transmission with an adjacent duplicate slot on
    a different channel inside the same phases.
    """
    plan = plan or ch.ChannelPlan()
    if option not in (1, 2):
        raise ValueError("duplication option must be 1 or 2")
    if rounds == 0:
        return base_plan(schedule)
    if option == 1:
        segments = list(base_plan(schedule).segments)
        for r in range(1, rounds + 1):
            segments.append(Segment("switch", (), switch_slots))
            dl = tuple(replace(t, channel=plan.round_channel(t.channel, r))
                       for t in schedule.downlink)
            ul = tuple(replace(t, channel=plan.round_channel(t.channel, r))
                       for t in schedule.uplink)
            segments.append(Segment("downlink", dl, schedule.downlink_span))
            segments.append(Segment("uplink", ul, schedule.uplink_span))
        return CyclePlan("dup1", tuple(segments))
    # option 2: adjacent duplicates inside each phase
    def _double(entries):
        out = []
        for t in entries:
            out.append(replace(t, slot=2 * t.slot))
            out.append(replace(t, slot=2 * t.slot + 1,
                               channel=plan.round_channel(t.channel, 1)))
        return tuple(out)
    return CyclePlan("dup2", (
        Segment("downlink", _double(schedule.downlink), 2 * schedule.downlink_span),
        Segment("uplink", _double(schedule.uplink), 2 * schedule.uplink_span),
    ))


def cooperative_success(snr_a_db: float | None, snr_b_db: float | None,
                        beta_db: float, mode: str = "ci",
                        a_priori_ok: bool = True) -> bool:
    """Outcome of a cooperative slot given the per-link SNR draws.

    CI sums the received powers of the tightly synchronized copies; SNC
    requires the relay's coded packet to decode and the receiver to hold
    the a-priori packet it was coded against.  A missing transmitter
    (None) degrades to a plain threshold test on the other link.
    """
    if mode == "ci":
        powers = [10 ** (s / 10.0) for s in (snr_a_db, snr_b_db) if s is not None]
        if not powers:
            return False
        return 10.0 * np.log10(sum(powers)) >= beta_db
    if mode == "snc":
        if snr_b_db is None:
            return False
        return a_priori_ok and snr_b_db >= beta_db
    raise ValueError(f"unknown cooperative mode {mode!r}")


# --- relay selection ---------------------------------------------------------


@dataclass
class RelayTable:
    relay: dict[int, int] = field(default_factory=dict)
    second: dict[int, int] = field(default_factory=dict)

    def partners(self, node: int, budget: int = 1) -> tuple[int, ...]:
        out = []
        if node in self.relay:
            out.append(self.relay[node])
        if budget >= 2 and node in self.second:
            out.append(self.second[node])
        return tuple(out)


def select_relays(tree: TreeTopology, link_ctx=None, n_b: int = 3,
                  mode: str = "polling") -> RelayTable:
    """Sibling relay assignment from link measurements.

    Polling mode walks the tree from the controller: each parent polls its
    children with empty request messages; children answer, siblings in
    range log the answer's SNR into a neighbor table capped at the `n_b`
    strongest entries, report the tables back, and the parent assigns each
    child the strongest neighbor as relay (the second strongest fills the
    two-relay budget).  Branches recurse on orthogonal channels, so the
    procedure is geometry-driven and deterministic.  The online mode uses
    the same measurements, standing in for averaged overhearing during
    data phases.

    Without a measurement context, mean SNR falls back to distances when
    the topology has geometry, else to neighbor adjacency with node-id
    tie-breaks.
    """
    if mode not in ("polling", "online"):
        raise ValueError(f"unknown relay selection mode {mode!r}")

    def snr(a: int, b: int) -> float:
        if link_ctx is not None:
            return link_ctx.mean_snr_db(a, b)
        if tree.positions is not None:
            return -_distance(tree, a, b)
        return -b  # adjacency only: prefer lower node id

    table = RelayTable()
    for parent in tree.parents:
        kids = tree.children[parent]
        for child in kids:
            heard = [
                (snr(child, sib), -sib, sib)
                for sib in kids
                if sib != child and tree.in_range(child, sib)
            ]
            heard.sort(reverse=True)
            heard = heard[:n_b]  # neighbor table keeps the n_b strongest
            if heard:
                table.relay[child] = heard[0][2]
            if len(heard) > 1:
                table.second[child] = heard[1][2]
    return table


def _distance(tree, a, b) -> float:
    import math
    return math.dist(tree.positions[a], tree.positions[b])


# --- cycle execution ---------------------------------------------------------


@dataclass
class CycleResult:
    delivered: frozenset[str]
    expected: frozenset[str]
    cycle_slots: int
    plan: CyclePlan
    gnacks: tuple = ()
    retx_nonconverged: bool = False
    buffers: dict | None = None

    @property
    def pdr_percent(self) -> float | None:
        if not self.expected:
            return None
        return 100.0 * len(self.delivered & set(self.expected)) / len(self.expected)


class _Cycle:
    """Slot-stepped execution of a cycle plan with payload buffers."""

    def __init__(self, tree, links, relays: RelayTable, params: RetxParams):
        self.tree = tree
        self.links = links
        self.relays = relays
        self.params = params
        self.buffers: dict[int, set[str]] = {n: set() for n in tree.nodes}
        self.buffers[CONTROLLER].add("cmd")
        self.received: set[tuple[int, str]] = set()  # (rx, payload) per addressed rx
        self.rx_log: set[tuple[str, int, int]] = set()  # (segment kind, slot, rx)

    def seed_responses(self) -> None:
        for n in self.tree.nodes:
            if n != CONTROLLER and "cmd" in self.buffers[n]:
                self.buffers[n].add(f"up:{n}")

    def run_segment(self, seg: Segment, offset: int, tag: str) -> None:
        self.links.new_phase(tag)
        by_slot: dict[int, list[Transmission]] = {}
        for t in seg.entries:
            by_slot.setdefault(t.slot, []).append(t)
        for slot in sorted(by_slot):
            group = by_slot[slot]
            active: list[tuple[Transmission, list[int]]] = []
            for t in group:
                holders = [x for x in t.tx if t.payload in self.buffers[x]]
                if holders:
                    active.append((t, holders))
            for t, holders in active:
                co = [
                    x
                    for other, oh in active
                    if other is not t and other.channel == t.channel
                    for x in oh
                ]
                for rx in sorted(t.rx):
                    if self.links.data_receive(offset + slot, t.channel, holders, rx, co):
                        self.buffers[rx].add(t.payload)
                        self.received.add((rx, t.payload))
                        self.rx_log.add((seg.kind, slot, rx))
                # relays overhear their principals and buffer the payload
                for principal in holders:
                    for partner in self.relays.partners(principal, self.params.relay_budget):
                        if partner in t.rx or partner in holders:
                            continue
                        if self.links.data_receive(offset + slot, t.channel,
                                                   holders, partner, co):
                            self.buffers[partner].add(t.payload)


def run_cycle(tree, schedule: Schedule, links, params: RetxParams | None = None,
              relays: RelayTable | None = None,
              plan: ch.ChannelPlan | None = None,
              cycle_index: int = 0) -> CycleResult:
    """One closed-loop exchange with the selected retransmission technique."""
    params = params or RetxParams()
    plan = plan or ch.ChannelPlan()
    relays = relays or RelayTable()
    state = _Cycle(tree, links, relays, params)
    expected = frozenset(f"up:{n}" for n in tree.nodes if n != CONTROLLER)

    if params.technique == "dup1":
        cplan = duplicate_schedule(schedule, 1, params.rounds, plan, params.switch_slots)
    elif params.technique == "dup2":
        cplan = duplicate_schedule(schedule, 2, 1, plan)
    else:
        cplan = base_plan(schedule)

    offset = cycle_index * 100_000
    segments = list(cplan.segments)
    ran: list[Segment] = []
    for i, seg in enumerate(segments):
        if seg.kind == "downlink":
            pass
        if seg.kind == "uplink":
            state.seed_responses()
        state.run_segment(seg, offset, f"cycle{cycle_index}-seg{i}-{seg.kind}")
        ran.append(seg)
        offset += seg.span

    gnacks: tuple = ()
    nonconverged = False
    if params.technique in ("retx-sched", "extrapolate"):
        gnacks = ascertain_gnacks(schedule, tree, state.buffers, state.received,
                                  with_slots=params.technique == "extrapolate")
        known = _disseminate(gnacks, tree, schedule, state, plan, params, offset)
        offset += schedule.downlink_span
        ran.append(Segment("gnack", (), schedule.downlink_span))
        if any(g.entries for g in gnacks):
            if params.technique == "extrapolate":
                seg = extrapolate_schedule(schedule, gnacks, relays, plan,
                                           resend_successful=params.resend_successful,
                                           relay_budget=params.relay_budget)
                state.seed_responses()
                state.run_segment(seg, offset, f"cycle{cycle_index}-extrapolate")
                ran.append(seg)
                offset += seg.span
            else:
                try:
                    sig_seg, retx_seg = build_retx_schedule(
                        gnacks, tree, relays, state.buffers, links, plan,
                        params, offset, known,
                    )
                except RetxNonConvergence:
                    nonconverged = True
                    sig_seg = Segment("signaling", (), params.retx_horizon)
                    retx_seg = None
                ran.append(sig_seg)
                offset += sig_seg.span
                if retx_seg is not None:
                    state.seed_responses()
                    state.run_segment(retx_seg, offset, f"cycle{cycle_index}-retx")
                    ran.append(retx_seg)
                    offset += retx_seg.span
        elif params.technique == "extrapolate":
            # the replay window is part of the deterministic cycle length
            ran.append(Segment("retx", (), schedule.uplink_span))
            offset += schedule.uplink_span

    final = CyclePlan(params.technique, tuple(ran))
    delivered = frozenset(p for p in expected if p in state.buffers[CONTROLLER])
    return CycleResult(
        delivered=delivered,
        expected=expected,
        cycle_slots=final.total_slots,
        plan=final,
        gnacks=gnacks,
        retx_nonconverged=nonconverged,
        buffers=state.buffers,
    )


# --- G-NACK construction and dissemination -----------------------------------


def ascertain_gnacks(schedule: Schedule, tree, buffers, received,
                     with_slots: bool = False):
    """Per-parent negative acknowledgements after one transmission cycle.

    The controller lists each child transmission it did not receive; every
    parent, in downlink-schedule order, translates entries it cannot serve
    from its own buffer into entries against the child that originated the
    payload.  Parents with nothing to report send empty G-NACKs.
    """
    from gallop import signaling as sig

    order = sorted(tree.parents, key=lambda n: (tree.depth(n), n))
    gnacks = {}
    flagged: dict[int, list[tuple[int, int, int | None]]] = {n: [] for n in tree.nodes}

    def slot_of(node: int, ordinal: int) -> int | None:
        if not with_slots:
            return None
        return schedule.uplink_slots_of(node)[ordinal - 1]

    for parent in order:
        entries = []
        if parent == CONTROLLER:
            for child in tree.children[CONTROLLER]:
                seq = payload_sequence(tree, child)
                for k, payload in enumerate(seq, start=1):
                    if (CONTROLLER, payload) not in received:
                        entries.append((child, k, slot_of(child, k)))
        else:
            for child, k, _ in flagged[parent]:
                payload = payload_sequence(tree, parent)[k - 1]
                if payload in buffers[parent]:
                    continue  # recoverable from own buffer
                src = next(
                    c for c in tree.children[parent]
                    if payload in payload_sequence(tree, c)
                )
                k_src = payload_sequence(tree, src).index(payload) + 1
                entries.append((src, k_src, slot_of(src, k_src)))
        for entry in entries:
            flagged[entry[0]].append(entry)
        gnacks[parent] = sig.Gnack(sender=parent, entries=tuple(entries))
    return tuple(gnacks[p] for p in order)


def _disseminate(gnacks, tree, schedule, state, plan, params, offset):
    """Deliver G-NACKs over a replay of the downlink schedule.

    Returns the per-node set of G-NACK issuers heard (addressed children
    plus idle in-range overhearers).  With reliable G-NACKs every in-range
    listener hears every issuer; in lossy mode reception rides the data
    channel draws.  In extrapolation the same replay carries the command
    for nodes that missed it, on the retransmission channel.
    """
    state.links.new_phase(f"gnack-{offset}")
    issuers = {g.sender: g for g in gnacks}
    heard: dict[int, set[int]] = {n: set() for n in tree.nodes}
    for g in gnacks:
        heard[g.sender].add(g.sender)
    channel = plan.w_r if params.technique == "extrapolate" else plan.w_d
    by_slot: dict[int, list[Transmission]] = {}
    for t in schedule.downlink:
        by_slot.setdefault(t.slot, []).append(t)
    for slot in sorted(by_slot):
        group = [t for t in by_slot[slot] if t.tx[0] in issuers]
        for t in group:
            sender = t.tx[0]
            co = [o.tx[0] for o in group if o is not t]
            listeners = sorted(tree.neighbors[sender])
            for rx in listeners:
                got = True
                if not params.reliable_gnacks:
                    got = state.links.data_receive(offset + slot, channel,
                                                   [sender], rx, co)
                if got:
                    heard[rx].add(sender)
                # command redelivery in the extrapolation replay
                if (
                    params.technique == "extrapolate"
                    and rx in t.rx
                    and "cmd" in state.buffers[sender]
                    and state.links.data_receive(offset + slot, channel,
                                                 [sender], rx, co)
                ):
                    state.buffers[rx].add("cmd")
    return heard


# --- schedule extrapolation ---------------------------------------------------


def extrapolate_schedule(schedule: Schedule, gnacks, relays: RelayTable,
                         plan: ch.ChannelPlan | None = None,
                         resend_successful: bool = False,
                         relay_budget: int = 1) -> Segment:
    """Replay of the uplink schedule with cooperative slots for the flagged
    transmissions, on the retransmission channel; no signaling is built.

    Unflagged slots stay in the replay silently by default, keeping the
    cycle length deterministic at twice the base schedule.
    """
    plan = plan or ch.ChannelPlan()
    flagged: set[tuple[int, int]] = set()  # (node, original slot)
    for g in gnacks:
        for node, ordinal, slot in g.entries:
            if slot is None:
                slot = schedule.uplink_slots_of(node)[ordinal - 1]
            flagged.add((node, slot))
    entries = []
    for t in schedule.uplink:
        node = t.tx[0]
        active = resend_successful or (node, t.slot) in flagged
        if not active:
            continue
        tx = (node, *relays.partners(node, relay_budget))
        entries.append(Transmission(t.slot, tx, t.rx, t.payload, plan.w_r))
    return Segment("retx", tuple(entries), schedule.uplink_span)


# --- retransmission scheduling -------------------------------------------------


@dataclass
class _Step:
    requester: int
    granter: int
    kind: str        # source | dlrecovery | forward
    payload: str
    n_slots: int
    chain: int
    index: int       # position within the chain
    root_entry: tuple | None  # controller entry completed by this step


def _build_chains(gnacks, tree, buffers) -> list[list[_Step]]:
    """Recovery chains implied by the G-NACKs, in controller-entry order."""
    by_issuer = {g.sender: g for g in gnacks}
    ctrl = by_issuer.get(CONTROLLER)
    chains: list[list[_Step]] = []
    if ctrl is None:
        return chains
    for entry in ctrl.entries:
        child, ordinal, _ = entry
        payload = payload_sequence(tree, child)[ordinal - 1]
        # walk down to the holder (or the origin needing命 command recovery)
        holder = child
        while payload not in buffers[holder]:
            g = by_issuer.get(holder)
            nxt = None
            if g is not None:
                for c2, k2, _s in g.entries:
                    if payload_sequence(tree, c2)[k2 - 1] == payload:
                        nxt = c2
                        break
            if nxt is None:
                break
            holder = nxt
        steps: list[_Step] = []
        if payload in buffers[holder]:
            kind, n = "source", 2
        else:
            # the origin never received the command; recover downlink first
            holder = int(payload.split(":")[1])
            kind, n = "dlrecovery", 3
        steps.append(_Step(holder, tree.parent[holder], kind, payload, n,
                           len(chains), 0, None))
        node = tree.parent[holder]
        while node != CONTROLLER:
            steps.append(_Step(node, tree.parent[node], "forward", payload, 1,
                               len(chains), len(steps), None))
            node = tree.parent[node]
        steps[-1] = replace(steps[-1], root_entry=entry)
        chains.append(steps)
    return chains


def _known_prefix(chain, known_issuers: set[int], tree):
    """Start index of the deepest chain step whose naming G-NACK was heard,
    or None when the whole chain is invisible to this node."""
    for idx, step in enumerate(chain):
        if tree.parent[step.requester] in known_issuers or \
                step.requester in known_issuers:
            return idx
    return None


def build_retx_schedule(gnacks, tree, relays: RelayTable, buffers, links,
                        plan: ch.ChannelPlan | None = None,
                        params: RetxParams | None = None,
                        offset: int = 0,
                        heard: dict[int, set[int]] | None = None):
    """Simulate the two-slot retransmission signaling frame and emit the
    recovery schedule on the retransmission channel.

    Request slots are even, assignment slots odd.  A node holding a
    flagged payload requests two slots (relay handoff plus cooperative
    slot), a node that lost the command requests three (cooperative
    downlink plus its uplink), and each ancestor requests one forwarding
    slot once it has granted the step below it.  Access order falls out of
    each node's local view of the preceding recovery steps: a request
    defers one request slot for every known earlier step still
    unallocated, which is exactly the reasoning that keeps a
    lower-priority holder out of the first slots.  Collisions and losses
    resolve through randomized retries; the controller terminates once
    every chain ending at it is fully allocated.
    """
    plan = plan or ch.ChannelPlan()
    params = params or RetxParams(technique="retx-sched")
    chains = _build_chains(gnacks, tree, buffers)
    all_steps = [s for c in chains for s in c]
    if not all_steps:
        return Segment("signaling", (), 1), Segment("retx", (), 0)
    if heard is None:
        heard = {n: {g.sender for g in gnacks} for n in tree.nodes}

    links.new_phase(f"retx-signaling-{offset}")
    rngs = {
        n: np.random.default_rng(np.random.SeedSequence([offset & 0x7FFFFFFF, n, 0xE7]))
        for n in tree.nodes
    }
    order = {(s.chain, s.index): i for i, s in enumerate(all_steps)}
    claims: dict[int, dict[int, int]] = {n: {} for n in tree.nodes}
    rfs_seen: dict[int, set[int]] = {n: set() for n in tree.nodes}
    grants: dict[tuple[int, int], tuple[int, ...]] = {}
    granted_below: dict[int, dict[str, tuple[int, ...]]] = {n: {} for n in tree.nodes}
    pending: dict[int, dict] = {}

    def preceding(step: _Step, node: int) -> int:
        count = 0
        me = order[(step.chain, step.index)]
        for chain in chains:
            start = _known_prefix(chain, heard.get(node, set()), tree)
            if start is None:
                continue
            for s in chain[start:]:
                key = (s.chain, s.index)
                if order[key] < me and key not in grants:
                    count += 1
        return count

    def pick_slot(node: int, after: int, skip: int) -> int:
        slot = after + 1
        if slot % 2:
            slot += 1
        while True:
            if slot not in rfs_seen[node]:
                if skip == 0:
                    return slot
                skip -= 1
            slot += 2

    def free_data(node: int, count: int, floor: int, mine: int) -> tuple[int, ...]:
        out, s = [], floor
        while len(out) < count:
            if claims[node].get(s) in (None, mine):
                out.append(s)
            s += 1
        return tuple(out)

    for chain in chains:
        step = chain[0]
        slot = pick_slot(step.requester, -1, preceding(step, step.requester))
        pending[step.requester] = {"step": step, "slot": slot}

    asgn_duty: dict[int, tuple] = {}  # granter -> (child, step, want, asgn slot)
    term_slot = None
    for slot in range(params.retx_horizon):
        if term_slot == slot:
            return (
                Segment("signaling", (), slot + 1),
                _retx_entries(grants, all_steps, tree, relays, plan, params),
            )
        txs: list[tuple[int, object]] = []
        if slot % 2 == 0:
            for node in sorted(pending):
                p = pending[node]
                if p["slot"] != slot:
                    continue
                step = p["step"]
                if step.kind == "forward":
                    below = granted_below[node].get(step.payload, ())
                    floor = max(below) + 1 if below else 0
                else:
                    floor = 0
                want = free_data(node, step.n_slots, floor, node)
                p["want"] = want
                txs.append((node, ("rfs", step, want)))
        else:
            for node in sorted(asgn_duty):
                child, step, want, due = asgn_duty[node]
                if due != slot:
                    continue
                ok = all(claims[node].get(s) in (None, child) for s in want)
                slots = want if ok else free_data(node, len(want), min(want), child)
                for s in slots:
                    claims[node][s] = child
                grants[(step.chain, step.index)] = slots
                granted_below[node][step.payload] = slots
                txs.append((node, ("asgn", child, step, slots)))
        transmitters = [n for n, _ in txs]
        for listener in sorted(tree.nodes):
            if listener in transmitters:
                continue
            for sender, body in txs:
                if not tree.in_range(listener, sender):
                    continue
                co = [o for o in transmitters if o != sender]
                if body[0] == "rfs":
                    _tag, step, want = body
                    addressed = listener == step.granter
                    if links.signaling_receive(offset + slot, plan.w_s, sender,
                                               listener, co, addressed):
                        rfs_seen[listener].add(slot)
                        for s in want:
                            claims[listener].setdefault(s, sender)
                        if addressed:
                            asgn_duty[listener] = (sender, step, want, slot + 1)
                else:
                    _tag, child, step, slots = body
                    addressed = listener == child
                    if links.signaling_receive(offset + slot, plan.w_s, sender,
                                               listener, co, addressed):
                        for s in slots:
                            claims[listener][s] = child
                        if addressed and child in pending:
                            del pending[child]
                            nxt = _next_step(chains, step)
                            if nxt is not None and nxt.requester not in pending:
                                granted_below[nxt.requester].setdefault(
                                    step.payload, slots)
                                lot = pick_slot(nxt.requester, slot,
                                                preceding(nxt, nxt.requester))
                                pending[nxt.requester] = {"step": nxt, "slot": lot}
        if slot % 2 == 1:
            for node in list(asgn_duty):
                if asgn_duty[node][3] == slot:
                    del asgn_duty[node]
            for node in sorted(pending):
                p = pending[node]
                if p["slot"] == slot - 1:
                    backoff = int(rngs[node].integers(1, params.psi + 1))
                    p["slot"] = pick_slot(node, slot, backoff - 1)
        if term_slot is None and all(
            (c[-1].chain, c[-1].index) in grants for c in chains
        ):
            term_slot = slot + 1
    raise RetxNonConvergence(params.retx_horizon)


def _next_step(chains, step: _Step):
    chain = chains[step.chain]
    if step.index + 1 < len(chain):
        return chain[step.index + 1]
    return None


def _retx_entries(grants, all_steps, tree, relays: RelayTable,
                  plan: ch.ChannelPlan, params: RetxParams) -> Segment:
    entries: list[Transmission] = []
    span = 0
    for step in all_steps:
        slots = grants.get((step.chain, step.index))
        if slots is None:
            continue
        span = max(span, max(slots) + 1)
        m = step.requester
        parent = tree.parent[m]
        partners = relays.partners(m, params.relay_budget)
        if step.kind == "source":
            if partners:
                entries.append(Transmission(slots[0], (m,), partners, step.payload, plan.w_r))
                entries.append(Transmission(slots[1], (m, *partners), (parent,),
                                            step.payload, plan.w_r))
            else:
                entries.append(Transmission(slots[0], (m,), (parent,), step.payload, plan.w_r))
        elif step.kind == "dlrecovery":
            if partners:
                entries.append(Transmission(slots[0], (parent,), partners, "cmd", plan.w_r))
                entries.append(Transmission(slots[1], (parent, *partners), (m,),
                                            "cmd", plan.w_r))
                entries.append(Transmission(slots[2], (m,), (parent,), step.payload, plan.w_r))
            else:
                entries.append(Transmission(slots[0], (parent,), (m,), "cmd", plan.w_r))
                entries.append(Transmission(slots[1], (m,), (parent,), step.payload, plan.w_r))
        else:
            entries.append(Transmission(slots[0], (m,), (parent,), step.payload, plan.w_r))
    return Segment("retx", tuple(entries), span)
