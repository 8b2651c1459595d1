"""Closed-form convergence-time model for a single parent with K children.

Children are uniformly distributed in the parent's coverage disk; link
outage is Rayleigh with an SNR threshold.  The model composes the average
signaling outage over the disk, the per-node allocation failure
probability, and the expected access delays of the first and later
request retransmissions into a mean convergence time.  The formulas are
implemented exactly as printed, including the small-failure regime where
the first-retransmission delay term goes negative; a side-by-side
geometric-retry variant is provided for sensitivity checks and is not
part of the printed model.
"""

import math
from dataclasses import dataclass

from scipy import integrate
from scipy.special import betaln

from gallop.channel import LinkModelParams, zeta as zeta_from_link


class DivergesAtOne(ZeroDivisionError):
    """The higher-retransmission delay has a pole at failure probability 1."""


@dataclass(frozen=True)
class ConvergenceParams:
    n_children: int          # K
    coverage_radius_m: float  # R_p
    alpha: float
    zeta: float              # linear outage coefficient
    psi: int = 4

    def __post_init__(self):
        if self.n_children < 1:
            raise ValueError("need at least one child")
        if self.coverage_radius_m <= 0:
            raise ValueError("coverage radius must be positive")
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        if self.psi < 1:
            raise ValueError("psi must be >= 1")

    @classmethod
    def from_link(cls, n_children: int, coverage_radius_m: float,
                  link: LinkModelParams, beta_db: float | None = None,
                  psi: int = 4) -> "ConvergenceParams":
        beta = link.snr_threshold_db if beta_db is None else beta_db
        return cls(n_children, coverage_radius_m, link.path_loss_exponent,
                   zeta_from_link(link, beta), psi)


def distance_pdf(d: float, k: int, n_children: int, coverage_radius_m: float) -> float:
    """Density of the distance to the k-th nearest of K uniform-in-disk
    children."""
    K, R = n_children, coverage_radius_m
    if not 1 <= k <= K:
        raise ValueError(f"order k={k} outside 1..{K}")
    if not 0 <= d <= R:
        raise ValueError(f"distance {d} outside [0, {R}]")
    u = (d / R) ** 2
    if d == 0.0:
        return 0.0
    log_num = (K - k) * math.log1p(-u) if u < 1 else (-math.inf if K > k else 0.0)
    log_num += (k - 1) * math.log(u)
    return math.exp(log_num - betaln(K - k + 1, k)) * 2.0 * d / R**2


def signaling_outage(coverage_radius_m: float, alpha: float, zeta: float,
                     tol: float = 1e-8) -> float:
    """Disk-averaged Rayleigh outage probability of one signaling message."""
    R = coverage_radius_m
    value, _err = integrate.quad(
        lambda d: d * (1.0 - math.exp(-zeta * d**alpha)), 0.0, R,
        epsabs=tol, epsrel=tol, limit=200,
    )
    return 2.0 / R**2 * value


def allocation_failure(p_rfs: float, p_asgn: float, p_dls: float) -> float:
    """Probability that one handshake round fails to allocate a node."""
    for name, p in (("p_rfs", p_rfs), ("p_asgn", p_asgn), ("p_dls", p_dls)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name}={p} outside [0, 1]")
    return (p_rfs + (1.0 - p_rfs) * p_asgn) * (1.0 - p_dls)


def mean_first_retx_delay(n_children: int, p_fail: float) -> float:
    """Expected access delay of a first request retransmission, in slots.

    As printed this goes negative for small failure probabilities; callers
    comparing against simulation should treat it as a signed correction.
    """
    K = n_children
    return 1.5 * p_fail * (1.0 - p_fail) * ((K - 1) - (K + 1) * (1.0 - p_fail))


def mean_higher_retx_delay(n_children: int, psi: int, p_fail: float) -> float:
    """Expected access delay of second-or-later request retransmissions."""
    if p_fail >= 1.0:
        raise DivergesAtOne("failure probability 1 never converges")
    K = n_children
    return (3.0 * (K + psi) / 2.0) * (2.0 * p_fail**2 - p_fail**3) / (1.0 - p_fail)


def ideal_convergence(n_children: int) -> int:
    """Loss-free convergence: one opening slot plus one handshake triple
    per child."""
    return 3 * n_children + 1


def mean_convergence(params: ConvergenceParams) -> float:
    """Mean convergence time in signaling slots for one parent."""
    p = allocation_failure_from(params)
    return (
        ideal_convergence(params.n_children)
        + mean_first_retx_delay(params.n_children, p)
        + mean_higher_retx_delay(params.n_children, params.psi, p)
    )


def allocation_failure_from(params: ConvergenceParams) -> float:
    """Allocation failure with all three message outages taken from the
    disk-averaged signaling outage."""
    p_o = signaling_outage(params.coverage_radius_m, params.alpha, params.zeta)
    return allocation_failure(p_o, p_o, p_o)


def mean_convergence_geometric(params: ConvergenceParams) -> float:
    """Geometric-retry variant (not the printed model).

    Replaces the two delay terms with mean-retry-count times mean retry
    spacing; stays nonnegative and monotone in the failure probability,
    which makes it a convenient cross-check against simulation.
    """
    p = allocation_failure_from(params)
    if p >= 1.0:
        raise DivergesAtOne("failure probability 1 never converges")
    spacing = 3.0 * (params.n_children + params.psi) / 2.0
    return ideal_convergence(params.n_children) + spacing * p / (1.0 - p)


def convergence_table(k_values, beta_values, coverage_radius_m: float,
                      link: LinkModelParams, psi: int = 4):
    """Rows of (K, beta, R_p, failure prob, printed model, geometric model)."""
    rows = []
    for beta in beta_values:
        for k in k_values:
            params = ConvergenceParams.from_link(k, coverage_radius_m, link, beta, psi)
            rows.append({
                "n_children": k,
                "beta_db": beta,
                "coverage_radius_m": coverage_radius_m,
                "allocation_failure": allocation_failure_from(params),
                "mean_convergence_slots": mean_convergence(params),
                "geometric_convergence_slots": mean_convergence_geometric(params),
            })
    return rows
