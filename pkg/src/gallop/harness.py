"""Monte Carlo experiment runner: scenario configs, metrics, result files.

A scenario bundles a topology source, the link and interference models,
the retransmission technique and the replication plan.  Each replication
draws one topology, runs the signaling phase to convergence, executes one
exchange cycle with the selected technique, and reports convergence time,
cycle time and packet delivery ratio.  Replications are independent and
deterministic: replication i of master seed s always sees the same draws,
no matter which technique is configured, so runs with different
techniques couple their randomness.
"""

import csv
import hashlib
import io
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from gallop import topology as topo
from gallop.channel import (
    HIGH_INTERFERENCE,
    LOW_INTERFERENCE,
    ChannelPlan,
    InterferenceScenario,
    LinkModelParams,
    StochasticLinks,
)
from gallop.dist_scheduler import NonConvergence, SignalingParams, run_signaling
from gallop.retransmission import RelayTable, RetxParams, run_cycle, select_relays

CONFIG_VERSION = 1

RETX_CHOICES = ("none", "dup1", "dup2", "retx-sched", "extrapolate")
INTERFERENCE_CHOICES = ("none", "low", "high")


class ConfigError(ValueError):
    pass


class UnsupportedRetxCount(ValueError):
    pass


@dataclass(frozen=True)
class TopologySource:
    kind: str = "poisson"            # poisson | fixed | star
    mean_nodes: float = 20.0         # poisson
    region_side_m: float = 60.0      # poisson
    comm_range_m: float = 30.0
    controller_at: str = "corner"
    name: str | None = None          # fixed: bundled topology or file path
    n_children: int = 10             # star
    star_radius_m: float | None = None  # star with disk geometry

    def __post_init__(self):
        if self.kind not in ("poisson", "fixed", "star"):
            raise ConfigError(f"unknown topology kind {self.kind!r}")
        if self.kind == "fixed" and not self.name:
            raise ConfigError("fixed topology needs a name or path")


@dataclass(frozen=True)
class ScenarioConfig:
    version: int = CONFIG_VERSION
    topology: TopologySource = field(default_factory=TopologySource)
    link: LinkModelParams = field(default_factory=LinkModelParams)
    beta_db: float = 25.0
    interference: str = "none"
    retx: str = "none"
    dup_rounds: int = 1
    relay_budget: int = 1
    hopping: str = "none"
    downlink_mode: str = "broadcast"
    replications: int = 1
    seed: int = 1
    slot_us: float = 200.0
    signaling_horizon: int = 10_000
    psi: int = 4

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.retx not in RETX_CHOICES:
            raise ConfigError(f"unknown retx technique {self.retx!r}")
        if self.interference not in INTERFERENCE_CHOICES:
            raise ConfigError(f"unknown interference scenario {self.interference!r}")

    def with_link_beta(self) -> LinkModelParams:
        return replace(self.link, snr_threshold_db=self.beta_db)

    def interference_model(self) -> InterferenceScenario | None:
        return {"none": None, "low": LOW_INTERFERENCE, "high": HIGH_INTERFERENCE}[
            self.interference
        ]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        version = data.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        if "topology" in data and isinstance(data["topology"], dict):
            data["topology"] = TopologySource(**data["topology"])
        if "link" in data and isinstance(data["link"], dict):
            data["link"] = LinkModelParams(**data["link"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


PRESETS = {
    # node populations and regions follow the evaluated deployment scenarios
    "scenario-a": ScenarioConfig(
        topology=TopologySource(kind="poisson", mean_nodes=20, region_side_m=60),
        replications=1000,
    ),
    "scenario-b": ScenarioConfig(
        topology=TopologySource(kind="poisson", mean_nodes=50, region_side_m=80),
        replications=1000,
    ),
    "low-intf": ScenarioConfig(
        topology=TopologySource(kind="poisson", mean_nodes=20, region_side_m=60),
        interference="low",
        replications=1000,
    ),
    "high-intf": ScenarioConfig(
        topology=TopologySource(kind="poisson", mean_nodes=20, region_side_m=60),
        interference="high",
        replications=1000,
    ),
}


def preset(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
    return replace(PRESETS[name], **overrides)


def replication_seed(master: int, index: int) -> int:
    """Documented seed-splitting rule: one child stream per replication."""
    return int(np.random.SeedSequence(entropy=master, spawn_key=(index,))
               .generate_state(1)[0])


def _draw_topology(source: TopologySource, seed: int):
    if source.kind == "fixed":
        if source.name in topo.bundled_names():
            return topo.load_bundled(source.name), 0
        return topo.load_fixed(source.name), 0
    if source.kind == "star":
        if source.star_radius_m:
            return topo.make_disk_star(source.n_children, source.star_radius_m, seed), 0
        return topo.make_star(source.n_children), 0
    return topo.generate_connected_tree(
        source.mean_nodes, source.region_side_m, seed,
        source.comm_range_m, source.controller_at,
    )


def run_replication(config: ScenarioConfig, seed: int) -> dict:
    """One topology draw, one signaling phase, one exchange cycle."""
    tree, rejected = _draw_topology(config.topology, seed)
    plan = ChannelPlan(mode=config.hopping)
    record = {
        "seed": seed,
        "n_nodes": len(tree.nodes),
        "max_hops": tree.max_hops() if len(tree.nodes) > 1 else 0,
        "rejected_draws": rejected,
        "nonconverged": False,
        "retx_nonconverged": False,
        "convergence_slots": None,
        "cycle_slots": None,
        "pdr_percent": None,
    }
    if len(tree.nodes) == 1:
        # a lone controller has nothing to schedule and no deliverable payloads
        record["convergence_slots"] = 1
        record["warning"] = "no non-controller nodes; delivery ratio undefined"
        return record

    if tree.positions is not None:
        links = StochasticLinks(
            tree, config.with_link_beta(), seed,
            interference=config.interference_model(),
            plan=plan, slot_us=config.slot_us,
        )
    else:
        from gallop.channel import PerfectLinks

        links = PerfectLinks(tree)
    sig_params = SignalingParams(
        downlink_mode=config.downlink_mode,
        psi=config.psi,
        horizon=config.signaling_horizon,
    )
    try:
        result = run_signaling(tree, links, sig_params, plan, seed)
    except NonConvergence:
        record["nonconverged"] = True
        return record
    record["convergence_slots"] = result.convergence_slots

    relays = RelayTable(relay=dict(tree.relays)) if tree.relays else \
        select_relays(tree, links if tree.positions is not None else None)
    retx = RetxParams(
        technique=config.retx,
        rounds=config.dup_rounds,
        relay_budget=config.relay_budget,
        psi=config.psi,
    )
    cycle = run_cycle(tree, result.schedule, links, retx, relays, plan)
    record["cycle_slots"] = cycle.cycle_slots
    record["pdr_percent"] = cycle.pdr_percent
    record["retx_nonconverged"] = cycle.retx_nonconverged
    return record


def nearest_rank(sorted_values, percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if not sorted_values:
        raise ValueError("no samples")
    rank = max(1, math.ceil(percentile / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


@dataclass(frozen=True)
class MetricStats:
    mean: float
    stddev: float
    p50: float
    p90: float
    min: float
    max: float
    n: int

    @classmethod
    def from_samples(cls, samples) -> "MetricStats | None":
        values = sorted(s for s in samples if s is not None)
        if not values:
            return None
        return cls(
            mean=statistics.fmean(values),
            stddev=statistics.pstdev(values) if len(values) > 1 else 0.0,
            p50=nearest_rank(values, 50),
            p90=nearest_rank(values, 90),
            min=values[0],
            max=values[-1],
            n=len(values),
        )


@dataclass(frozen=True)
class MetricsSummary:
    config_hash: str
    seed: int
    replications: int
    nonconvergence_count: int
    metrics: dict[str, MetricStats]
    records: tuple[dict, ...] = ()

    def metric(self, name: str) -> MetricStats:
        return self.metrics[name]


def monte_carlo(config: ScenarioConfig, keep_records: bool = False) -> MetricsSummary:
    """Aggregate per-replication records; deterministic in the master seed."""
    records = [
        run_replication(config, replication_seed(config.seed, i))
        for i in range(config.replications)
    ]
    ms = config.slot_us / 1000.0
    samples = {
        "convergence_slots": [r["convergence_slots"] for r in records],
        "convergence_ms": [
            r["convergence_slots"] * ms if r["convergence_slots"] is not None else None
            for r in records
        ],
        "cycle_slots": [r["cycle_slots"] for r in records],
        "cycle_ms": [
            r["cycle_slots"] * ms if r["cycle_slots"] is not None else None
            for r in records
        ],
        "pdr_percent": [r["pdr_percent"] for r in records],
    }
    metrics = {
        name: stats
        for name, values in samples.items()
        if (stats := MetricStats.from_samples(values)) is not None
    }
    return MetricsSummary(
        config_hash=config.config_hash(),
        seed=config.seed,
        replications=config.replications,
        nonconvergence_count=sum(r["nonconverged"] for r in records),
        metrics=metrics,
        records=tuple(records) if keep_records else (),
    )


def wisa_reference(n_nodes: int, retx_count: int) -> int:
    """Reference cycle lengths of the single-hop factory-automation
    baseline: fixed constants, not a simulation."""
    if n_nodes > 120:
        raise ValueError("reference system supports at most 120 devices")
    if retx_count == 4:
        return 160
    if retx_count == 2:
        return 96
    raise UnsupportedRetxCount(f"reference defined for 2 or 4 retransmissions, not {retx_count}")


# --- result files -------------------------------------------------------------


def _summary_rows(summary: MetricsSummary) -> list[dict]:
    rows = []
    for name in sorted(summary.metrics):
        s = summary.metrics[name]
        rows.append({
            "metric": name,
            "mean": f"{s.mean:.6f}",
            "stddev": f"{s.stddev:.6f}",
            "p50": f"{s.p50:.6f}",
            "p90": f"{s.p90:.6f}",
            "min": f"{s.min:.6f}",
            "max": f"{s.max:.6f}",
            "n": s.n,
        })
    return rows


def render_results(summary: MetricsSummary, fmt: str) -> str:
    """Stable text rendering; identical summaries give identical bytes."""
    if fmt == "json":
        payload = {
            "config_hash": summary.config_hash,
            "seed": summary.seed,
            "replications": summary.replications,
            "nonconvergence_count": summary.nonconvergence_count,
            "metrics": {
                name: asdict(stats) for name, stats in sorted(summary.metrics.items())
            },
        }
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        fields = ["metric", "mean", "stddev", "p50", "p90", "min", "max", "n"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        buf.write(f"# config={summary.config_hash} seed={summary.seed} "
                  f"reps={summary.replications} "
                  f"nonconverged={summary.nonconvergence_count}\n")
        writer.writeheader()
        writer.writerows(_summary_rows(summary))
        return buf.getvalue()
    raise ConfigError(f"unknown output format {fmt!r}")


def emit_results(summary: MetricsSummary, fmt: str, path: str) -> str:
    text = render_results(summary, fmt)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def parse_results_csv(path: str) -> dict[str, dict[str, float]]:
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    out = {}
    for row in csv.DictReader(lines):
        out[row["metric"]] = {
            k: float(row[k]) for k in ("mean", "stddev", "p50", "p90", "min", "max")
        } | {"n": int(row["n"])}
    return out


def reliability_series(records) -> list[tuple[float, float]]:
    """Empirical CDF points of per-run delivery ratio, for plotting."""
    values = sorted(r["pdr_percent"] for r in records if r["pdr_percent"] is not None)
    n = len(values)
    return [(v, (i + 1) / n) for i, v in enumerate(values)]
