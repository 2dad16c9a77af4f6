"""Milstein simulation of the coupled wealth SDEs on an exchange network.

Each agent follows

    dv_i = (vhat_i - v_i) dt + r (1 - v_i) dt + sqrt(2) sigma v_i dW_i

with ``vhat_i = sum_{j in N_i} v_j / k_j`` (Ito convention). The
diffusion is diagonal, so the scalar Milstein correction applies per
agent and the scheme has strong order one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from numba import njit, prange

from ._philox import fill_normals
from .exceptions import (
    ConfigError,
    EmptyEnsembleError,
    NegativeWealthError,
    NumericalOverflowError,
)
from .network import MAX_AGENTS, CapacityError, ExchangeNetwork, stationary_wealth
from .stats import EnsembleAccumulator, PairClasses

NEG_POLICIES = ("abort", "reject-realisation", "clamp-to-epsilon")
_POLICY_CODE = {p: k for k, p in enumerate(NEG_POLICIES)}

_OK, _DISCARDED, _ABORTED, _OVERFLOW = 0, 1, 2, 3

# keeps one chunk of raw snapshots around 160 MB
_CHUNK_VALUES = 20_000_000


def geometric_times(start: float, stop: float, count: int) -> tuple:
    """``count`` geometrically spaced sample times from ``start`` to ``stop``."""
    if not 0 < start < stop or count < 2:
        raise ValueError("need 0 < start < stop and count >= 2")
    return tuple(float(t) for t in np.geomspace(start, stop, count))


@dataclass(frozen=True)
class SimConfig:
    """Full description of one Monte-Carlo experiment.

    ``init`` is ``"one"``, ``"stationary"`` (profile ``k_i/z``) or an
    explicit strictly positive vector. ``horizon`` defaults to the last
    sample time.
    """

    sigma: float
    sample_times: Sequence[float]
    dt: float = 1e-3
    horizon: float | None = None
    realisations: int = 10_000
    master_seed: int = 0
    init: object = "one"
    tax_rate: float = 0.0
    neg_policy: str = "reject-realisation"
    epsilon: float = 1e-12

    def __post_init__(self):
        times = tuple(sorted(float(t) for t in self.sample_times))
        object.__setattr__(self, "sample_times", times)
        if not times:
            raise ConfigError("at least one sample time is required")
        if times[0] < 0:
            raise ConfigError("sample times must be non-negative")
        if self.horizon is None:
            object.__setattr__(self, "horizon", times[-1])
        if not self.sigma >= 0 or not math.isfinite(self.sigma):
            raise ConfigError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.horizon < times[-1]:
            raise ConfigError("horizon must not precede the last sample time")
        if self.realisations < 1:
            raise ConfigError("realisations must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must fit in 64 bits")
        if self.tax_rate < 0:
            raise ConfigError("tax_rate must be >= 0")
        if self.neg_policy not in NEG_POLICIES:
            raise ConfigError(f"neg_policy must be one of {NEG_POLICIES}")
        if not isinstance(self.init, str):
            v = np.asarray(self.init, dtype=float)
            if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ConfigError("explicit initial wealth must be a finite, strictly positive vector")
            object.__setattr__(self, "init", tuple(v.tolist()))
        elif self.init not in ("one", "stationary"):
            raise ConfigError(f"unknown init {self.init!r}")

    @property
    def sigma2(self) -> float:
        return self.sigma ** 2

    @property
    def n_steps(self) -> int:
        return _to_step(self.horizon, self.dt)

    @property
    def sample_steps(self) -> np.ndarray:
        return np.array([_to_step(t, self.dt) for t in self.sample_times], dtype=np.int64)

    @property
    def grid_times(self) -> np.ndarray:
        """Sample times snapped to the step grid (at or after the requested time)."""
        return self.sample_steps * self.dt

    def initial_wealth(self, net: ExchangeNetwork) -> np.ndarray:
        if self.init == "one":
            return np.ones(net.n_agents)
        if self.init == "stationary":
            return stationary_wealth(net).astype(float)
        v = np.asarray(self.init, dtype=float)
        if len(v) != net.n_agents:
            raise ConfigError(f"initial wealth has {len(v)} entries, network has {net.n_agents} agents")
        return v


def _to_step(t, dt):
    return int(math.ceil(t / dt - 1e-9))


@dataclass(frozen=True)
class RealisationSnapshot:
    time: float
    wealth: np.ndarray


@dataclass
class Trajectory:
    """Snapshots of one realisation plus its negative-wealth bookkeeping."""

    snapshots: list = field(default_factory=list)
    discarded: bool = False
    clamp_events: int = 0

    def __iter__(self):
        return iter(self.snapshots)

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, k):
        return self.snapshots[k]


def drift(net: ExchangeNetwork, v, tax_rate: float = 0.0) -> np.ndarray:
    """Exchange drift ``vhat - v`` plus tax ``r (1 - v)``; ``v`` is (N,) or (R, N)."""
    v = np.asarray(v, dtype=float)
    if net.is_complete:
        received = (v.sum(axis=-1, keepdims=True) - v) / (net.n_agents - 1)
    else:
        received = (net.transfer_matrix @ v.T).T
    out = received - v
    if tax_rate:
        out = out + tax_rate * (1.0 - v)
    return out


def milstein_step(v, drift, dt, sigma, dW):
    """One Milstein step for diffusion ``sqrt(2) sigma v`` (Ito)."""
    v = np.asarray(v, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = v + drift * dt + math.sqrt(2.0) * sigma * v * dW + sigma * sigma * v * (dW * dW - dt)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("non-finite wealth after Milstein step")
    return out


def euler_step(v, drift, dt, sigma, dW):
    """Euler-Maruyama step; strong order 1/2, kept for convergence comparisons."""
    v = np.asarray(v, dtype=float)
    return v + drift * dt + math.sqrt(2.0) * sigma * v * dW


@njit(parallel=True, cache=True)
def _simulate_block(complete, indptr, indices, inv_deg, v0, sigma, dt, tax, n_steps,
                    sample_steps, seed, r_start, policy, eps, out, status, clamps):
    r_count = out.shape[0]
    n = v0.shape[0]
    n_samples = sample_steps.shape[0]
    sqdt = math.sqrt(dt)
    s2 = math.sqrt(2.0) * sigma
    sig2 = sigma * sigma
    for rr in prange(r_count):
        r = r_start + rr
        v = v0.copy()
        a = np.empty(n)
        buf = np.empty((n, 4))
        pos = np.zeros(n, dtype=np.int64)
        si = 0
        while si < n_samples and sample_steps[si] == 0:
            out[rr, si, :] = v
            si += 1
        st = 0
        nclamp = 0
        for step in range(n_steps):
            k = step & 3
            if k == 0:
                for i in range(n):
                    pos[i] = fill_normals(seed, r, i, pos[i], buf[i])
            if complete:
                tot = 0.0
                for i in range(n):
                    tot += v[i]
                for i in range(n):
                    a[i] = (tot - v[i]) / (n - 1) - v[i]
            else:
                for i in range(n):
                    acc = 0.0
                    for p in range(indptr[i], indptr[i + 1]):
                        j = indices[p]
                        acc += v[j] * inv_deg[j]
                    a[i] = acc - v[i]
            if tax != 0.0:
                for i in range(n):
                    a[i] += tax * (1.0 - v[i])
            for i in range(n):
                dw = sqdt * buf[i, k]
                vi = v[i]
                nv = vi + a[i] * dt + s2 * vi * dw + sig2 * vi * (dw * dw - dt)
                if not math.isfinite(nv):
                    st = 3
                elif nv <= 0.0:
                    if policy == 0:
                        st = max(st, 2)
                    elif policy == 1:
                        st = max(st, 1)
                    else:
                        nv = eps
                        nclamp += 1
                v[i] = nv
            if st != 0:
                break
            while si < n_samples and sample_steps[si] == step + 1:
                out[rr, si, :] = v
                si += 1
        status[rr] = st
        clamps[rr] = nclamp


def _network_arrays(net):
    if net.is_complete:
        empty = np.zeros(1, dtype=np.int64)
        return True, empty, empty, np.zeros(1)
    indptr, indices = net._csr_arrays()
    return False, indptr, indices, 1.0 / net.degrees.astype(float)


def simulate_batch(config: SimConfig, net: ExchangeNetwork, start: int, count: int):
    """Simulate realisations ``start .. start+count-1``.

    Returns ``(values, status, clamps)`` with ``values`` of shape
    (count, S, N); status codes are 0 ok, 1 discarded, 2 aborted,
    3 overflow.
    """
    if net.n_agents > MAX_AGENTS:
        raise CapacityError(f"{net.n_agents} agents exceeds the Monte-Carlo cap {MAX_AGENTS}")
    v0 = config.initial_wealth(net)
    complete, indptr, indices, inv_deg = _network_arrays(net)
    steps = config.sample_steps
    out = np.full((count, len(steps), net.n_agents), np.nan)
    status = np.zeros(count, dtype=np.int64)
    clamps = np.zeros(count, dtype=np.int64)
    _simulate_block(complete, indptr, indices, inv_deg, v0, float(config.sigma), float(config.dt),
                    float(config.tax_rate), config.n_steps, steps, np.uint64(config.master_seed),
                    int(start), _POLICY_CODE[config.neg_policy], float(config.epsilon),
                    out, status, clamps)
    return out, status, clamps


def _raise_for_status(status, start):
    bad = np.flatnonzero(status == _OVERFLOW)
    if bad.size:
        raise NumericalOverflowError(f"non-finite wealth in realisation {start + bad[0]}")
    bad = np.flatnonzero(status == _ABORTED)
    if bad.size:
        raise NegativeWealthError(f"non-positive wealth in realisation {start + bad[0]} (policy 'abort')")


def simulate_realisation(config: SimConfig, net: ExchangeNetwork, realisation_index: int) -> Trajectory:
    """Run one realisation and return its snapshots at the (grid-snapped) sample times."""
    values, status, clamps = simulate_batch(config, net, realisation_index, 1)
    _raise_for_status(status, realisation_index)
    traj = Trajectory(discarded=bool(status[0] == _DISCARDED), clamp_events=int(clamps[0]))
    if not traj.discarded:
        traj.snapshots = [RealisationSnapshot(float(t), values[0, s].copy())
                          for s, t in enumerate(config.grid_times)]
    return traj


def make_accumulator(config: SimConfig, net: ExchangeNetwork, pairs="distance", max_distance=None,
                     tracked_pair=None, n_blocks=20) -> EnsembleAccumulator:
    """Empty accumulator laid out for ``config`` on ``net``."""
    classes = PairClasses.from_network(net, max_distance) if pairs == "distance" else None
    if tracked_pair is None:
        tracked_pair = classes.representative(1) if classes is not None else (0, 1)
    return EnsembleAccumulator(net.n_agents, config.grid_times, pairs=pairs, pair_classes=classes,
                               tracked_pair=tracked_pair, n_blocks=n_blocks)


def run_ensemble(config: SimConfig, net: ExchangeNetwork, accumulator=None, threads=None,
                 chunk_size=None, progress=None) -> EnsembleAccumulator:
    """Simulate ``config.realisations`` realisations and accumulate their statistics.

    Realisations are processed in index order in chunks; the result is a
    pure function of ``(config, net)`` whatever the thread count.
    ``accumulator`` may be supplied to choose the pair layout (see
    :func:`make_accumulator`).
    """
    acc = accumulator if accumulator is not None else make_accumulator(config, net)
    if threads is not None:
        numba.set_num_threads(int(threads))
    per_real = len(config.sample_times) * net.n_agents
    if chunk_size is None:
        chunk_size = max(1, min(4096, _CHUNK_VALUES // per_real))
    total = config.realisations
    for start in range(0, total, chunk_size):
        count = min(chunk_size, total - start)
        values, status, clamps = simulate_batch(config, net, start, count)
        _raise_for_status(status, start)
        keep = status == _OK
        acc.update_batch(values[keep], np.arange(start, start + count)[keep])
        acc.discarded += int((~keep).sum())
        acc.clamp_events += int(clamps.sum())
        if progress is not None:
            progress(start + count, total)
    if acc.count == 0:
        raise EmptyEnsembleError(f"all {total} realisations were discarded")
    return acc


def strong_errors(net: ExchangeNetwork, sigma, dts, horizon=1.0, paths=2000, refine=16,
                  seed=0, scheme="milstein"):
    """Strong error ``E|X_dt(T) - X_ref(T)|`` for each coarse step in ``dts``.

    The reference path uses step ``min(dts) / refine``; coarse Brownian
    increments are sums of the fine ones, so all paths share one
    Brownian motion. Every ``dt`` must be a multiple of the fine step.
    """
    step = {"milstein": milstein_step, "euler": euler_step}[scheme]
    dts = np.asarray(dts, dtype=float)
    h = dts.min() / refine
    ratios = np.rint(dts / h).astype(int)
    if not np.allclose(ratios * h, dts):
        raise ValueError("every dt must be an integer multiple of the reference step")
    n_fine = int(round(horizon / h))
    if np.any(n_fine % ratios):
        raise ValueError("horizon must be a multiple of every dt")
    rng = np.random.default_rng(seed)
    n = net.n_agents
    ref = np.ones((paths, n))
    coarse = [np.ones((paths, n)) for _ in dts]
    acc_dw = [np.zeros((paths, n)) for _ in dts]
    for k in range(n_fine):
        dw = rng.normal(0.0, math.sqrt(h), size=(paths, n))
        ref = milstein_step(ref, drift(net, ref), h, sigma, dw)
        for c, m in enumerate(ratios):
            acc_dw[c] += dw
            if (k + 1) % m == 0:
                x = coarse[c]
                coarse[c] = step(x, drift(net, x), dts[c], sigma, acc_dw[c])
                acc_dw[c][:] = 0.0
    return np.array([np.abs(x - ref).mean() for x in coarse])
