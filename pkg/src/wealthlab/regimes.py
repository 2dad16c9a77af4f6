"""Transition times between dynamical regimes and their classification.

Regimes, in order: equilibration (initial wealths relax to ``k_i/z``),
free (independent lognormal growth of variance), power-law (mean-field
inverse-gamma law holds) and synchronized (correlations saturate and
variances grow exponentially).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DomainError
from .moments import EigenPair, complete_eigenvalues
from .network import ExchangeNetwork, build_complete

REGIME_LABELS = ("equilibration", "free", "power-law", "synchronized", "frozen")


def _s2(sigma):
    return sigma * sigma


def t1(sigma) -> float:
    """Free -> power-law: ``1 / (2 (1 - sigma^2))``."""
    if sigma < 0 or sigma >= 1:
        raise DomainError(f"t1 needs 0 <= sigma < 1, got {sigma}")
    return 1.0 / (2.0 * (1.0 - _s2(sigma)))


def t2(sigma, n_agents) -> float:
    """Power-law -> synchronized from correlation growth: ``(1 - sigma^2) N``.

    At ``sigma = 0`` the value is returned but correlations never grow.
    """
    if sigma < 0 or sigma >= 1:
        raise DomainError(f"t2 needs 0 <= sigma < 1, got {sigma}")
    return (1.0 - _s2(sigma)) * n_agents


def t3(sigma, n_agents) -> float:
    """Power-law -> synchronized from variance growth: ``(1 - s2) N / (2 s2)``."""
    if sigma <= 0 or sigma >= 1:
        raise DomainError(f"t3 needs 0 < sigma < 1, got {sigma}")
    s2 = _s2(sigma)
    return (1.0 - s2) * n_agents / (2.0 * s2)


def t3_exact(sigma, n_agents) -> float:
    """``1 / lambda2`` of the complete-network moment system."""
    return 1.0 / complete_eigenvalues(sigma, n_agents).lambda2


def t1_general(sigma) -> float:
    return t1(sigma)


def t2_general(net: ExchangeNetwork, constant=1.0) -> float:
    """Network power-law -> synchronized scale ``constant * z``."""
    return constant * net.avg_degree


def t2_pair(k_i, k_j) -> float:
    """Per-pair refinement ``k_i k_j / (k_i + k_j)`` of the network scale."""
    return k_i * k_j / (k_i + k_j)


def equilibration_scale(net: ExchangeNetwork) -> float:
    """``1/|lambda|`` for the slowest decaying mode of ``du = (J - I) u dt``."""
    net.require_connected()
    n = net.n_agents
    if net.is_complete:
        return (n - 1) / n
    J = net.transfer_matrix.toarray()
    ev = np.linalg.eigvals(J - np.eye(n)).real
    nonzero = ev[np.abs(ev) > 1e-9 * max(1.0, np.abs(ev).max())]
    return float(1.0 / np.abs(nonzero.max()))


@dataclass
class RegimeInterval:
    label: str
    start: float
    end: float


@dataclass
class RegimeReport:
    sigma2: float
    n_agents: int
    network: str
    horizon: float
    t1: float | None = None
    t2: float | None = None
    t3: float | None = None
    t3_exact: float | None = None
    t1_general: float | None = None
    t2_general: float | None = None
    t_equilibration: float | None = None
    eigenpair: EigenPair | None = None
    intervals: list = field(default_factory=list)

    @property
    def power_law_window(self):
        for iv in self.intervals:
            if iv.label == "power-law":
                return iv.start, iv.end
        return None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eigenpair"] = (None if self.eigenpair is None
                          else {"lambda1": self.eigenpair.lambda1, "lambda2": self.eigenpair.lambda2})
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def classify_timeline(sigma, net_or_n, horizon, init="one", t2_constant=1.0) -> RegimeReport:
    """Predicted regime intervals on ``[0, horizon]``.

    ``net_or_n`` is an agent count (complete network) or a network.
    Complete networks use ``t1``, ``t2``, ``t3``; other networks use
    ``t1'`` and ``t2' = t2_constant * z`` as the synchronisation onset.
    ``init="stationary"`` skips the equilibration interval.
    """
    if sigma >= 1:
        raise DomainError(f"regime boundaries have no closed form for sigma >= 1 (sigma={sigma})")
    net = build_complete(net_or_n) if isinstance(net_or_n, (int, np.integer)) else net_or_n
    n = net.n_agents
    rep = RegimeReport(_s2(sigma), n, net.name, float(horizon))
    rep.t_equilibration = equilibration_scale(net)

    if sigma == 0:
        rep.t1 = t1(0.0)
        rep.t2 = t2(0.0, n) if net.is_complete else None
        rep.intervals = [RegimeInterval("frozen", 0.0, float(horizon))]
        return rep

    rep.t1 = t1(sigma)
    rep.t1_general = t1_general(sigma)
    rep.t2_general = t2_general(net, t2_constant)
    if net.is_complete:
        rep.t2 = t2(sigma, n)
        rep.t3 = t3(sigma, n)
        rep.eigenpair = complete_eigenvalues(sigma, n)
        rep.t3_exact = 1.0 / rep.eigenpair.lambda2
        sync = min(rep.t2, rep.t3)
    else:
        sync = rep.t2_general

    # a complete network started from uniform wealth is already at k_i/z
    skip_eq = init == "stationary" or (net.is_complete and init == "one")
    bounds = []
    start = 0.0
    if not skip_eq:
        bounds.append(("equilibration", 0.0, rep.t_equilibration))
        start = rep.t_equilibration
    free_end = max(start, rep.t1)
    bounds.append(("free", start, min(free_end, sync)))
    if sync > free_end:
        bounds.append(("power-law", free_end, sync))
    bounds.append(("synchronized", max(sync, start), math.inf))

    intervals = []
    for label, a, b in bounds:
        a, b = min(a, horizon), min(b, horizon)
        if b > a:
            intervals.append(RegimeInterval(label, float(a), float(b)))
    rep.intervals = intervals
    return rep


def detect_transition(times, correlations, asymptote):
    """First time the curve reaches ``(1 - 1/e) * asymptote``, linearly interpolated.

    Returns ``None`` when the threshold is never reached.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(correlations, dtype=float)
    if t.shape != c.shape or t.ndim != 1 or len(t) == 0:
        raise ValueError("times and correlations must be 1-d arrays of equal length")
    level = (1.0 - math.exp(-1.0)) * asymptote
    above = np.flatnonzero(c >= level) if asymptote >= 0 else np.flatnonzero(c <= level)
    if above.size == 0 or asymptote == 0:
        return None
    k = int(above[0])
    if k == 0:
        return float(t[0])
    t0, t1_, c0, c1 = t[k - 1], t[k], c[k - 1], c[k]
    if c1 == c0:
        return float(t1_)
    return float(t0 + (level - c0) * (t1_ - t0) / (c1 - c0))
