"""Canonical protocol walkthroughs used by tests, demos and the replay CLI.

Each function reproduces one deterministic scenario on a bundled topology:
the six-node handshake with a stale child view, the two signaling-loss
retransmission scenarios, and the single-hop star.  They all run with
perfect links plus an explicit loss script, so the outcome is exact.
"""

from gallop.channel import PerfectLinks, ScriptedLinks
from gallop.dist_scheduler import SignalingParams, SignalingResult, run_signaling
from gallop.topology import load_bundled, make_star


def six_node_walkthrough() -> SignalingResult:
    """Two-branch handshake where node 3 misses the controller's first ASGN.

    The missed assignment leaves node 3 believing downlink slot 1 is free;
    the controller repairs the stale request with an updated allocation.
    Uplink lands at: 4->0, 5->0, 6->1, 3->(1,2), 2->(3,4,5).
    """
    tree = load_bundled("six_node")
    links = ScriptedLinks(PerfectLinks(tree), losses=[(2, 1, 3)])
    return run_signaling(tree, links, SignalingParams(downlink_mode="broadcast"))


def rfs_loss_scenario() -> SignalingResult:
    """Node 4's uplink request is lost; it retransmits in slot 13."""
    tree = load_bundled("six_node")
    links = ScriptedLinks(PerfectLinks(tree), losses=[(2, 1, 3), (7, 4, 2)])
    return run_signaling(tree, links, SignalingParams(downlink_mode="broadcast"))


def second_rfs_loss_scenario() -> SignalingResult:
    """Node 6's uplink request is lost; the parent's refreshed DLS in slot
    12 moves the retransmission from slot 16 up to slot 13."""
    tree = load_bundled("six_node")
    links = ScriptedLinks(PerfectLinks(tree), losses=[(2, 1, 3), (10, 6, 2)])
    return run_signaling(tree, links, SignalingParams(downlink_mode="broadcast"))


def single_hop_star(n_children: int = 4, grouped: bool = True) -> SignalingResult:
    """Star with distinct command messages; the default four-leaf layout
    groups the first two children onto one downlink slot."""
    tree = make_star(n_children)
    groups = None
    if grouped and n_children == 4:
        groups = {1: ((2, 3), (4,), (5,))}
    params = SignalingParams(downlink_mode="distinct", downlink_groups=groups)
    return run_signaling(tree, PerfectLinks(tree), params)


EXAMPLES = {
    "six-node": six_node_walkthrough,
    "rfs-loss": rfs_loss_scenario,
    "second-rfs-loss": second_rfs_loss_scenario,
    "star": single_hop_star,
}
