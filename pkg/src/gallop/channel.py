"""Link-level success model and the channel-hopping calculus.

Success of a transmission is decided by an SINR threshold test: transmit
power minus log-distance path loss, Rayleigh fading (|h|^2 drawn as a unit
exponential per slot), thermal noise over the configured bandwidth, plus
any active interferer powers summed linearly.  External Wi-Fi interference
is modeled per receiver as one or more access points, each pinned to a
channel, with exponentially distributed busy/idle periods sampled at slot
midpoints.

Reception reliability is intentionally asymmetric during the signaling
phase: the addressed parent-child reception is a stochastic draw (this is
what drives retransmissions and convergence time), while third-party
overhearing by an idle in-range listener always succeeds.  Conflict-free
schedule construction depends on overheard claims actually arriving, so
the claim substrate is modeled reliable; a node transmitting in a slot
still hears nothing that slot, and the addressed draw carries all the
loss statistics that matter.  Data-phase receptions, including the
overhearing that fills relay buffers, are always drawn.
"""

import math
import zlib
from dataclasses import dataclass, field

import numpy as np


class NonpositiveDistance(ValueError):
    pass


@dataclass(frozen=True)
class LinkModelParams:
    """Radio parameters; defaults match a 2M PHY at 9 dBm."""

    tx_power_dbm: float = 9.0
    noise_density_dbm_hz: float = -174.0
    bandwidth_hz: float = 2e6
    path_loss_exponent: float = 3.3
    pl_d0_db: float = 58.1
    d0_m: float = 8.0
    snr_threshold_db: float = 25.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0 or self.d0_m <= 0 or self.path_loss_exponent <= 0:
            raise ValueError("bandwidth, d0 and path loss exponent must be positive")

    @property
    def noise_power_dbm(self) -> float:
        return self.noise_density_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)

    def mean_snr_db(self, d: float) -> float:
        """SNR at unit fading (|h|^2 = 1)."""
        return self.tx_power_dbm - path_loss_db(d, self) - self.noise_power_dbm


@dataclass(frozen=True)
class InterferenceScenario:
    """External interferer population afflicting each receiver.

    Every receiver draws an AP count uniformly from `aps_per_link`
    (inclusive), one distance per AP from `ap_distance_range_m`, and one
    channel per AP from `ap_channels`.  Channels outside `ap_channels`
    (notably the retransmission channel) stay clean.
    """

    aps_per_link: tuple[int, int]
    ap_tx_power_dbm: float
    mu_on_ms: float
    mu_off_ms: float
    ap_distance_range_m: tuple[float, float] = (1.0, 25.0)
    ap_channels: tuple[int, ...] = (0, 1, 2, 4, 5, 6, 7)

    def __post_init__(self):
        if self.mu_on_ms <= 0 or self.mu_off_ms <= 0:
            raise ValueError("mu_on and mu_off must be positive")
        lo, hi = self.ap_distance_range_m
        if lo <= 0 or hi < lo:
            raise ValueError("AP distance range must be positive and ordered")


LOW_INTERFERENCE = InterferenceScenario(
    aps_per_link=(1, 1), ap_tx_power_dbm=14.0, mu_on_ms=0.25, mu_off_ms=0.5
)
HIGH_INTERFERENCE = InterferenceScenario(
    aps_per_link=(1, 3), ap_tx_power_dbm=20.0, mu_on_ms=1.5, mu_off_ms=0.5
)


@dataclass(frozen=True)
class ChannelPlan:
    """Channel roles and the hopping mode.

    Channel 3 (`w_r`) is reserved for retransmission phases and is kept
    out of the default interferer band; ordinary data rounds rotate over
    the remaining channels.
    """

    n_channels: int = 8
    channel_offset: int = 0
    mode: str = "none"  # none | phase_slotted | time_slotted
    w_d: int = 0
    w_u: int = 1
    w_s: int = 2
    w_r: int = 3

    def __post_init__(self):
        roles = (self.w_d, self.w_u, self.w_s, self.w_r)
        if any(r >= self.n_channels for r in roles):
            raise ValueError("role channel index out of range")
        if self.mode == "none" and len(set(roles)) != len(roles):
            raise ValueError("role channels must be distinct without hopping")
        if self.mode not in ("none", "phase_slotted", "time_slotted"):
            raise ValueError(f"unknown hopping mode {self.mode!r}")

    def round_channel(self, role_channel: int, round_no: int) -> int:
        """Channel of a duplication round; rotates but never lands on w_r."""
        if round_no == 0:
            return role_channel
        ch = (role_channel + round_no) % self.n_channels
        if ch == self.w_r:
            ch = (ch + 1) % self.n_channels
        return ch

    def channel_for(self, role_channel: int, phase_no: int, abs_slot: int) -> int:
        if self.mode == "phase_slotted":
            return hop(phase_no, self)
        if self.mode == "time_slotted":
            return hop(abs_slot, self)
        return role_channel


def hop(ap_no: int, plan: ChannelPlan) -> int:
    """Hopping sequence: (absolute phase or slot number + offset) mod N."""
    if plan.n_channels <= 0:
        raise ValueError("n_channels must be positive")
    return (ap_no + plan.channel_offset) % plan.n_channels


def path_loss_db(d: float, p: LinkModelParams) -> float:
    """Log-distance path loss referenced to d0."""
    if d <= 0:
        raise NonpositiveDistance(f"distance must be positive, got {d}")
    return p.pl_d0_db + 10.0 * p.path_loss_exponent * math.log10(d / p.d0_m)


def sample_link_snr_db(d: float, p: LinkModelParams, rng: np.random.Generator) -> float:
    """One Rayleigh-faded SNR draw; |h|^2 ~ Exponential(mean 1)."""
    fade = rng.exponential(1.0)
    return snr_db_with_fade(d, p, fade)


def snr_db_with_fade(d: float, p: LinkModelParams, fade: float) -> float:
    if fade <= 0.0:
        return -math.inf
    return p.mean_snr_db(d) + 10.0 * math.log10(fade)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        return -math.inf
    return 10.0 * math.log10(mw)


def sinr_db(signal_dbm: float, interferer_dbm: list[float], noise_dbm: float) -> float:
    denom = dbm_to_mw(noise_dbm) + sum(dbm_to_mw(i) for i in interferer_dbm)
    return signal_dbm - mw_to_dbm(denom)


def transmission_success(
    snr_db_value: float,
    beta_db: float,
    interferer_dbm: list[float] | tuple[float, ...] = (),
    noise_dbm: float | None = None,
) -> bool:
    """Threshold test, inclusive at the boundary.

    Without interferers this is a plain SNR >= beta comparison.  With
    interferers the signal power is reconstructed against `noise_dbm` and
    the test becomes SINR >= beta with interferer powers summed linearly
    on top of the noise.
    """
    if not interferer_dbm:
        return snr_db_value >= beta_db
    if noise_dbm is None:
        raise ValueError("noise_dbm required when interferers are present")
    signal = noise_dbm + snr_db_value
    return sinr_db(signal, list(interferer_dbm), noise_dbm) >= beta_db


def zeta(p: LinkModelParams, beta_db: float) -> float:
    """Rayleigh outage coefficient: P(fail at distance d) = 1 - exp(-zeta d^alpha).

    Folds the reference path loss into the linear-power form so the closed
    form agrees with the dB-domain sampler above.
    """
    exponent = (
        beta_db - p.tx_power_dbm + p.pl_d0_db + p.noise_power_dbm
    ) / 10.0
    return 10.0 ** exponent / p.d0_m ** p.path_loss_exponent


def rayleigh_outage(d: float, p: LinkModelParams, beta_db: float) -> float:
    """Closed-form outage probability at fixed distance (no interference)."""
    if d <= 0:
        raise NonpositiveDistance(f"distance must be positive, got {d}")
    return 1.0 - math.exp(-zeta(p, beta_db) * d ** p.path_loss_exponent)


class ApProcess:
    """Two-state alternating renewal process for one interfering AP.

    Busy/idle durations are exponential with means mu_on/mu_off; the state
    at time 0 is drawn from the stationary distribution.  The sample path
    extends lazily, so queries may arrive in any order and the path is a
    pure function of the seed.
    """

    def __init__(self, mu_on_ms: float, mu_off_ms: float, seed):
        self.mu_on = mu_on_ms
        self.mu_off = mu_off_ms
        self._rng = np.random.default_rng(seed)
        self._on_first = self._rng.random() < mu_on_ms / (mu_on_ms + mu_off_ms)
        self._edges = [0.0]  # segment boundaries; segment i spans edges[i]..edges[i+1]

    def _segment_on(self, i: int) -> bool:
        return self._on_first if i % 2 == 0 else not self._on_first

    def state_at(self, t_ms: float) -> bool:
        """True when the AP is busy at time t."""
        if t_ms < 0:
            raise ValueError("time must be nonnegative")
        while self._edges[-1] <= t_ms:
            i = len(self._edges) - 1
            mean = self.mu_on if self._segment_on(i) else self.mu_off
            self._edges.append(self._edges[-1] + self._rng.exponential(mean))
        lo, hi = 0, len(self._edges) - 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if self._edges[mid] <= t_ms:
                lo = mid
            else:
                hi = mid
        return self._segment_on(lo)


def interference_state(ap: ApProcess, t_ms: float) -> str:
    return "ON" if ap.state_at(t_ms) else "OFF"


def _stream(seed: int, *tags) -> np.random.Generator:
    """Named substream; identical tags reproduce identical draws."""
    ints = [seed] + [zlib.crc32(str(t).encode()) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(ints))


@dataclass
class _ReceiverAp:
    process: ApProcess
    rx_power_dbm: float
    channel: int


class PerfectLinks:
    """Deterministic channel: in-range receptions succeed, collisions fail."""

    def __init__(self, tree):
        self.tree = tree

    def new_phase(self, tag: str) -> None:
        pass

    def signaling_receive(self, slot, channel, tx, listener, co_tx, addressed) -> bool:
        if not self.tree.in_range(listener, tx):
            return False
        if not addressed:
            return True
        return not any(self.tree.in_range(listener, o) for o in co_tx)

    def data_receive(self, abs_slot, channel, txs, rx, co_tx) -> bool:
        if not all(self.tree.in_range(rx, t) for t in txs):
            return False
        return not any(self.tree.in_range(rx, o) for o in co_tx)


class ScriptedLinks:
    """Wrap another channel and force specific signaling receptions to fail.

    Losses are (slot, transmitter, listener) triples; used to replay the
    worked examples where a particular message goes missing.
    """

    def __init__(self, base, losses):
        self.base = base
        self.tree = base.tree
        self.losses = set(losses)

    def new_phase(self, tag: str) -> None:
        self.base.new_phase(tag)

    def signaling_receive(self, slot, channel, tx, listener, co_tx, addressed) -> bool:
        if (slot, tx, listener) in self.losses:
            return False
        return self.base.signaling_receive(slot, channel, tx, listener, co_tx, addressed)

    def data_receive(self, abs_slot, channel, txs, rx, co_tx) -> bool:
        return self.base.data_receive(abs_slot, channel, txs, rx, co_tx)


class BernoulliLinks:
    """Uniform per-reception loss probability; geometry still applies.

    Handy for fuzzing loss patterns on fixed topologies with no positions.
    Addressed signaling receptions and all data receptions are drawn;
    idle-listener overhearing stays reliable.
    """

    def __init__(self, tree, loss_prob: float, seed: int):
        self.tree = tree
        self.loss_prob = loss_prob
        self._seed = seed
        self._rng = _stream(seed, "init")

    def new_phase(self, tag: str) -> None:
        self._rng = _stream(self._seed, tag)

    def signaling_receive(self, slot, channel, tx, listener, co_tx, addressed) -> bool:
        if not self.tree.in_range(listener, tx):
            return False
        if not addressed:
            return True
        if any(self.tree.in_range(listener, o) for o in co_tx):
            return False
        return self._rng.random() >= self.loss_prob

    def data_receive(self, abs_slot, channel, txs, rx, co_tx) -> bool:
        if not all(self.tree.in_range(rx, t) for t in txs):
            return False
        if any(self.tree.in_range(rx, o) for o in co_tx):
            return False
        return self._rng.random() >= self.loss_prob


class StochasticLinks:
    """Fading + noise + interference channel bound to one topology draw.

    Fading is drawn fresh per reception (block fading per slot).  Each
    receiver owns its AP set; AP busy states are functions of absolute
    slot time, so runs that share a seed see identical interference no
    matter which retransmission technique extends the schedule.
    """

    def __init__(
        self,
        tree,
        params: LinkModelParams,
        seed: int,
        interference: InterferenceScenario | None = None,
        plan: ChannelPlan | None = None,
        slot_us: float = 200.0,
    ):
        if tree.positions is None:
            raise ValueError("stochastic links need node positions")
        self.tree = tree
        self.params = params
        self.plan = plan or ChannelPlan()
        self.slot_ms = slot_us / 1000.0
        self._seed = seed
        self._rng = _stream(seed, "init")
        self._aps: dict[int, list[_ReceiverAp]] = {}
        if interference is not None:
            setup = _stream(seed, "ap-setup")
            lo, hi = interference.aps_per_link
            for node in tree.nodes:
                count = int(setup.integers(lo, hi + 1))
                aps = []
                for k in range(count):
                    d = setup.uniform(*interference.ap_distance_range_m)
                    ch = int(setup.choice(interference.ap_channels))
                    power = interference.ap_tx_power_dbm - path_loss_db(d, params)
                    proc = ApProcess(
                        interference.mu_on_ms,
                        interference.mu_off_ms,
                        np.random.SeedSequence([seed, node, k, 0xA9]),
                    )
                    aps.append(_ReceiverAp(proc, power, ch))
                self._aps[node] = aps

    def new_phase(self, tag: str) -> None:
        self._rng = _stream(self._seed, tag)

    def distance(self, a: int, b: int) -> float:
        return math.dist(self.tree.positions[a], self.tree.positions[b])

    def mean_snr_db(self, a: int, b: int) -> float:
        return self.params.mean_snr_db(self.distance(a, b))

    def _ap_powers(self, rx: int, channel: int, abs_slot: int) -> list[float]:
        t_ms = (abs_slot + 0.5) * self.slot_ms
        return [
            ap.rx_power_dbm
            for ap in self._aps.get(rx, ())
            if ap.channel == channel and ap.process.state_at(t_ms)
        ]

    def _sinr_ok(self, rx, wanted_txs, other_txs, channel, abs_slot) -> bool:
        p = self.params
        signal_mw = 0.0
        for tx in wanted_txs:
            snr = sample_link_snr_db(self.distance(rx, tx), p, self._rng)
            signal_mw += dbm_to_mw(p.noise_power_dbm + snr)
        interference = []
        for tx in other_txs:
            if self.tree.in_range(rx, tx):
                snr = sample_link_snr_db(self.distance(rx, tx), p, self._rng)
                interference.append(p.noise_power_dbm + snr)
        interference += self._ap_powers(rx, channel, abs_slot)
        value = sinr_db(mw_to_dbm(signal_mw), interference, p.noise_power_dbm)
        return value >= p.snr_threshold_db

    def signaling_receive(self, slot, channel, tx, listener, co_tx, addressed) -> bool:
        if not self.tree.in_range(listener, tx):
            return False
        if not addressed:
            # overhearing is the claim substrate: reliable for an idle
            # in-range listener (addressed draws carry all loss statistics)
            return True
        return self._sinr_ok(listener, [tx], co_tx, channel, slot)

    def data_receive(self, abs_slot, channel, txs, rx, co_tx) -> bool:
        """Reception of a (possibly cooperative) data transmission.

        `txs` carry identical payloads and combine constructively: their
        received powers add before the threshold test.
        """
        txs = [t for t in txs if self.tree.in_range(rx, t)]
        if not txs:
            return False
        return self._sinr_ok(rx, txs, co_tx, channel, abs_slot)
