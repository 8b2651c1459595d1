"""Network topologies: Poisson meshes, distance-ranked trees, fixed layouts.

The controller is always node 1.  A mesh is a set of node positions plus a
single communication/interference radius; two nodes are one-hop neighbors
iff their mutual distance is below that radius.  A tree is derived from a
mesh by giving every node a rank equal to its Euclidean distance from the
controller and attaching it to its lowest-ranked in-range neighbor, or
loaded verbatim from a fixed adjacency description.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

CONTROLLER = 1


class DisconnectedTopology(Exception):
    """Raised when some nodes cannot reach the controller."""

    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        super().__init__(f"nodes unreachable from controller: {self.unreachable}")


class InconsistentSpec(Exception):
    """Raised when a fixed-topology description contradicts itself."""


@dataclass(frozen=True)
class MeshTopology:
    positions: dict[int, tuple[float, float]]
    region_side: float
    comm_range: float

    def __post_init__(self):
        if self.comm_range <= 0:
            raise ValueError("comm_range must be positive")
        for node, (x, y) in self.positions.items():
            if not (0 <= x <= self.region_side and 0 <= y <= self.region_side):
                raise ValueError(f"node {node} at ({x}, {y}) outside region")

    def distance(self, a: int, b: int) -> float:
        return math.dist(self.positions[a], self.positions[b])

    def in_range(self, a: int, b: int) -> bool:
        return a != b and self.distance(a, b) < self.comm_range


@dataclass(frozen=True)
class TreeTopology:
    """Routing tree plus MAC-layer neighbor relation.

    `children` lists are sorted by ascending node id, which doubles as the
    priority order (lower id = higher priority).  `ranks` hold distances to
    the controller for geometric topologies and hop counts otherwise.
    """

    parent: dict[int, int]
    children: dict[int, tuple[int, ...]]
    neighbors: dict[int, frozenset[int]]
    ranks: dict[int, float]
    positions: dict[int, tuple[float, float]] | None = None
    comm_range: float | None = None
    relays: dict[int, int] = field(default_factory=dict)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.neighbors)

    @property
    def parents(self) -> list[int]:
        """Nodes with at least one child (including the controller)."""
        return sorted(n for n in self.neighbors if self.children.get(n))

    @property
    def leaves(self) -> list[int]:
        return sorted(n for n in self.neighbors if not self.children.get(n))

    def priority(self, node: int) -> int:
        """1-based priority of `node` among its siblings."""
        sibs = self.children[self.parent[node]]
        return sibs.index(node) + 1

    def depth(self, node: int) -> int:
        d = 0
        while node != CONTROLLER:
            node = self.parent[node]
            d += 1
        return d

    def max_hops(self) -> int:
        return max(self.depth(n) for n in self.neighbors)

    def subtree_size(self, node: int) -> int:
        """Number of nodes in the subtree rooted at `node`, inclusive."""
        return 1 + sum(self.subtree_size(c) for c in self.children.get(node, ()))

    def in_range(self, a: int, b: int) -> bool:
        return b in self.neighbors[a]


def generate_poisson(
    mean_count: float,
    region_side: float,
    seed: int,
    comm_range: float = 30.0,
    controller_at: str = "corner",
) -> MeshTopology:
    """Draw a Poisson-distributed mesh in a square region.

    The number of non-controller nodes is Poisson(mean_count) with
    positions i.i.d. uniform in the square.  The controller is pinned at
    the region corner (0, 0) by default, or the center.
    """
    if mean_count < 0:
        raise ValueError("mean_count must be >= 0")
    if region_side <= 0:
        raise ValueError("region_side must be positive")
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(mean_count))
    if controller_at == "corner":
        anchor = (0.0, 0.0)
    elif controller_at == "center":
        anchor = (region_side / 2, region_side / 2)
    else:
        raise ValueError(f"unknown controller placement {controller_at!r}")
    positions = {CONTROLLER: anchor}
    coords = rng.uniform(0.0, region_side, size=(count, 2))
    for i in range(count):
        positions[CONTROLLER + 1 + i] = (float(coords[i, 0]), float(coords[i, 1]))
    return MeshTopology(positions=positions, region_side=region_side, comm_range=comm_range)


def build_tree(mesh: MeshTopology) -> TreeTopology:
    """Attach every node to its lowest-ranked in-range neighbor.

    Rank is the Euclidean distance to the controller; ties break toward
    the lower node id.  Raises DisconnectedTopology when a node has no
    neighbor closer to the controller than itself or its parent chain
    never reaches the controller.
    """
    if CONTROLLER not in mesh.positions:
        raise ValueError("mesh has no controller node")
    nodes = sorted(mesh.positions)
    ranks = {n: mesh.distance(CONTROLLER, n) if n != CONTROLLER else 0.0 for n in nodes}
    neighbors = {
        n: frozenset(m for m in nodes if mesh.in_range(n, m)) for n in nodes
    }
    parent: dict[int, int] = {}
    bad: list[int] = []
    for n in nodes:
        if n == CONTROLLER:
            continue
        candidates = [(ranks[m], m) for m in neighbors[n]]
        if not candidates:
            bad.append(n)
            continue
        best_rank, best = min(candidates)
        if best_rank >= ranks[n]:
            bad.append(n)
            continue
        parent[n] = best
    if bad:
        raise DisconnectedTopology(bad)
    # strictly decreasing rank along parent chains guarantees reachability
    children: dict[int, list[int]] = {n: [] for n in nodes}
    for n, p in parent.items():
        children[p].append(n)
    return TreeTopology(
        parent=parent,
        children={n: tuple(sorted(c)) for n, c in children.items()},
        neighbors=neighbors,
        ranks=ranks,
        positions=dict(mesh.positions),
        comm_range=mesh.comm_range,
    )


def generate_connected_tree(
    mean_count: float,
    region_side: float,
    seed: int,
    comm_range: float = 30.0,
    controller_at: str = "corner",
    max_attempts: int = 1000,
) -> tuple[TreeTopology, int]:
    """Sample meshes until one yields a tree; returns (tree, rejected count).

    Disconnected draws are rejected and resampled with derived seeds so a
    fixed `seed` still produces a deterministic topology.
    """
    rejected = 0
    seq = np.random.SeedSequence(seed)
    for child_seq in seq.spawn(max_attempts):
        sub_seed = int(child_seq.generate_state(1)[0])
        mesh = generate_poisson(mean_count, region_side, sub_seed, comm_range, controller_at)
        try:
            return build_tree(mesh), rejected
        except DisconnectedTopology:
            rejected += 1
    raise DisconnectedTopology([f"no connected draw in {max_attempts} attempts"])


def load_fixed(spec: dict | str) -> TreeTopology:
    """Build a tree verbatim from a fixed adjacency description.

    `spec` is a mapping (or path to a JSON file) with keys:

      nodes      list of node ids (must include the controller, id 1)
      parents    map child id -> parent id
      neighbors  map node id -> list of neighbor ids (symmetric closure ok)
      positions  optional map node id -> [x, y] in meters
      relays     optional map node id -> sibling relay id

    Geometry is optional; without positions, ranks fall back to hop depth.
    """
    if isinstance(spec, str):
        with open(spec) as fh:
            spec = json.load(fh)
    nodes = sorted(int(n) for n in spec["nodes"])
    if CONTROLLER not in nodes:
        raise InconsistentSpec("controller (node 1) missing from node list")
    parent = {int(c): int(p) for c, p in spec["parents"].items()}
    neighbors: dict[int, set[int]] = {n: set() for n in nodes}
    for n, peers in spec["neighbors"].items():
        n = int(n)
        if n not in neighbors:
            raise InconsistentSpec(f"neighbor entry for unknown node {n}")
        for m in peers:
            m = int(m)
            if m not in neighbors:
                raise InconsistentSpec(f"unknown neighbor {m} of node {n}")
            neighbors[n].add(m)
            neighbors[m].add(n)
    for c, p in parent.items():
        if c == CONTROLLER:
            raise InconsistentSpec("controller cannot have a parent")
        if p not in neighbors[c]:
            raise InconsistentSpec(f"parent {p} of node {c} is not a neighbor")
    missing = [n for n in nodes if n != CONTROLLER and n not in parent]
    if missing:
        raise InconsistentSpec(f"nodes without parents: {missing}")
    # reachability: every parent chain must terminate at the controller
    for n in nodes:
        seen = set()
        while n != CONTROLLER:
            if n in seen:
                raise InconsistentSpec(f"parent cycle through node {n}")
            seen.add(n)
            n = parent[n]
    children: dict[int, list[int]] = {n: [] for n in nodes}
    for c, p in parent.items():
        children[p].append(c)
    positions = None
    if spec.get("positions"):
        positions = {int(n): (float(x), float(y)) for n, (x, y) in spec["positions"].items()}
    if positions:
        ranks = {n: math.dist(positions[CONTROLLER], positions[n]) for n in nodes}
    else:
        ranks = {}
        for n in nodes:
            d, m = 0, n
            while m != CONTROLLER:
                m = parent[m]
                d += 1
            ranks[n] = float(d)
    relays = {int(n): int(r) for n, r in spec.get("relays", {}).items()}
    for n, r in relays.items():
        if parent.get(n) != parent.get(r):
            raise InconsistentSpec(f"relay {r} of node {n} is not a sibling")
        if r not in neighbors[n]:
            raise InconsistentSpec(f"relay {r} of node {n} is out of range")
    return TreeTopology(
        parent=parent,
        children={n: tuple(sorted(c)) for n, c in children.items()},
        neighbors={n: frozenset(s) for n, s in neighbors.items()},
        ranks=ranks,
        positions=positions,
        comm_range=float(spec["comm_range"]) if spec.get("comm_range") else None,
        relays=relays,
    )


def make_star(n_children: int, mutual_range: bool = True) -> TreeTopology:
    """Single-hop star: controller plus `n_children` leaves.

    With `mutual_range` every pair of children overhears each other, which
    is the dense single-hop regime; otherwise children only hear the
    controller.
    """
    nodes = [CONTROLLER] + [CONTROLLER + 1 + i for i in range(n_children)]
    kids = tuple(nodes[1:])
    neighbors = {}
    for n in nodes:
        if n == CONTROLLER:
            neighbors[n] = frozenset(kids)
        elif mutual_range:
            neighbors[n] = frozenset(m for m in nodes if m != n)
        else:
            neighbors[n] = frozenset({CONTROLLER})
    return TreeTopology(
        parent={c: CONTROLLER for c in kids},
        children={CONTROLLER: kids, **{c: () for c in kids}},
        neighbors=neighbors,
        ranks={CONTROLLER: 0.0, **{c: 1.0 for c in kids}},
    )


def make_disk_star(n_children: int, radius: float, seed: int,
                   comm_range: float | None = None) -> TreeTopology:
    """Single-hop star with children uniform in the controller's coverage
    disk; mutual child adjacency follows the geometry."""
    rng = np.random.default_rng(seed)
    comm_range = radius if comm_range is None else comm_range
    positions = {CONTROLLER: (0.0, 0.0)}
    for i in range(n_children):
        r = radius * math.sqrt(rng.random())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        positions[CONTROLLER + 1 + i] = (r * math.cos(phi), r * math.sin(phi))
    nodes = sorted(positions)
    kids = tuple(n for n in nodes if n != CONTROLLER)
    neighbors = {
        n: frozenset(
            m for m in nodes
            if m != n and (
                CONTROLLER in (n, m) or math.dist(positions[n], positions[m]) < comm_range
            )
        )
        for n in nodes
    }
    return TreeTopology(
        parent={c: CONTROLLER for c in kids},
        children={CONTROLLER: kids, **{c: () for c in kids}},
        neighbors=neighbors,
        ranks={n: math.dist(positions[CONTROLLER], positions[n]) for n in nodes},
        positions=positions,
        comm_range=comm_range,
    )


def load_bundled(name: str) -> TreeTopology:
    """Load one of the topology files shipped with the package."""
    path = resources.files("gallop.data").joinpath(f"{name}.json")
    with path.open() as fh:
        return load_fixed(json.load(fh))


def bundled_names() -> list[str]:
    return sorted(
        p.name[:-5]
        for p in resources.files("gallop.data").iterdir()
        if p.name.endswith(".json")
    )
