"""Exact first- and second-moment dynamics of the wealth SDEs.

Complete network, uniform means: two variables ``x = <v_i^2>`` and
``y = <v_i v_j>`` obey a closed linear system, solved here by
eigendecomposition. General network: the full mean vector and the
symmetric matrix ``M_ij = <v_i v_j>`` are integrated with fixed-step
RK4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .exceptions import CapacityError, DomainError, NumericalOverflowError
from .network import MAX_MOMENT_AGENTS, ExchangeNetwork


@dataclass(frozen=True)
class CompleteMomentState:
    x: float
    y: float
    t: float = 0.0

    @property
    def variance(self) -> float:
        """``var[v_i] = x - 1`` (means stay at one)."""
        return self.x - 1.0

    @property
    def correlation(self) -> float:
        return (self.y - 1.0) / (self.x - 1.0)


@dataclass(frozen=True)
class GeneralMomentState:
    m: np.ndarray
    M: np.ndarray
    t: float = 0.0

    @classmethod
    def deterministic(cls, wealth, t=0.0):
        """State of a non-random initial wealth vector: ``M = m m^T``."""
        m = np.asarray(wealth, dtype=float)
        return cls(m.copy(), np.outer(m, m), t)

    @property
    def covariance(self) -> np.ndarray:
        return self.M - np.outer(self.m, self.m)

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.M) - self.m ** 2

    def correlation(self, i, j) -> float:
        cov = self.M[i, j] - self.m[i] * self.m[j]
        return cov / math.sqrt(self.variance[i] * self.variance[j])

    def correlation_matrix(self) -> np.ndarray:
        c = self.covariance
        sd = np.sqrt(np.diag(c))
        with np.errstate(invalid="ignore", divide="ignore"):
            return c / np.outer(sd, sd)


class EigenPair(NamedTuple):
    lambda1: float
    lambda2: float


def _check_n(n_agents):
    if n_agents < 2:
        raise ValueError(f"need at least two agents, got {n_agents}")


def complete_matrix(sigma, n_agents, tax_rate=0.0) -> np.ndarray:
    """Linear part of the (x, y) system; the tax adds a constant forcing."""
    _check_n(n_agents)
    s2 = sigma * sigma
    c = 2.0 / (n_agents - 1)
    return np.array([[-2.0 * (1.0 - s2 + tax_rate), 2.0],
                     [c, -c - 2.0 * tax_rate]])


def complete_rhs(state, sigma, n_agents):
    """``(dx/dt, dy/dt)`` for the complete network."""
    x, y = (state.x, state.y) if isinstance(state, CompleteMomentState) else state
    _check_n(n_agents)
    return (2.0 * (y - (1.0 - sigma * sigma) * x),
            2.0 / (n_agents - 1) * (x - y))


def taxed_complete_rhs(state, sigma, n_agents, tax_rate):
    """Complete-network moments with the tax drift ``r (1 - v_i)``."""
    if tax_rate < 0:
        raise ValueError("tax_rate must be >= 0")
    x, y = (state.x, state.y) if isinstance(state, CompleteMomentState) else state
    dx, dy = complete_rhs((x, y), sigma, n_agents)
    return (dx - 2.0 * tax_rate * (x - 1.0),
            dy + 2.0 * tax_rate * (1.0 - y))


def taxed_stationary_point(sigma, n_agents, tax_rate):
    """Fixed point ``(x, y)`` of the taxed complete-network system (r > 0)."""
    if tax_rate <= 0:
        raise DomainError("a non-trivial fixed point needs a positive tax rate")
    A = complete_matrix(sigma, n_agents, tax_rate)
    return tuple(np.linalg.solve(A, [-2.0 * tax_rate, -2.0 * tax_rate]))


def complete_eigenvalues(sigma, n_agents, tax_rate=0.0) -> EigenPair:
    """Eigenvalues of the complete-network moment system, ascending."""
    if sigma < 0 or sigma >= 1:
        raise DomainError(f"sigma={sigma} outside [0, 1): second moments diverge for sigma >= 1")
    ev = np.linalg.eigvals(complete_matrix(sigma, n_agents, tax_rate))
    ev = np.sort(ev.real)
    return EigenPair(float(ev[0]), float(ev[1]))


def solve_complete(sigma, n_agents, x0=1.0, y0=1.0, t=0.0, tax_rate=0.0) -> CompleteMomentState:
    """Closed-form ``(x, y)`` at time ``t`` (scalar) via eigendecomposition."""
    if t < 0:
        raise ValueError("t must be >= 0")
    A = complete_matrix(sigma, n_agents, tax_rate)
    z0 = np.array([x0, y0], dtype=float)
    shift = np.zeros(2)
    if tax_rate > 0:
        shift = np.array(taxed_stationary_point(sigma, n_agents, tax_rate))
    w, V = np.linalg.eig(A)
    if np.linalg.cond(V) > 1e8:
        # near-defective: fall back to the matrix exponential
        z = scipy.linalg.expm(A * t) @ (z0 - shift) + shift
    else:
        coef = np.linalg.solve(V, z0 - shift)
        z = (V @ (coef * np.exp(w * t))).real + shift
    return CompleteMomentState(float(z[0]), float(z[1]), float(t))


def complete_trajectory(sigma, n_agents, times, x0=1.0, y0=1.0, tax_rate=0.0):
    return [solve_complete(sigma, n_agents, x0, y0, t, tax_rate) for t in times]


def correlation_limit_complete(sigma, n_agents) -> float:
    """Exact ``lim C_ij(t)`` from the growing eigenvector of the (x, y) system."""
    if sigma <= 0:
        raise DomainError("the correlation limit is undefined without noise")
    lam2 = complete_eigenvalues(sigma, n_agents).lambda2
    return 1.0 / (1.0 + (n_agents - 1) * lam2 / 2.0)


def correlation_limit_expansion(sigma, n_agents) -> float:
    """Large-N expansion ``1 - s2 + s2 / ((1 - s2) N)`` of the limit."""
    s2 = sigma * sigma
    return 1.0 - s2 + s2 / ((1.0 - s2) * n_agents)


# -- general networks ---------------------------------------------------------

def _transfer(net):
    if net.n_agents > MAX_MOMENT_AGENTS:
        raise CapacityError(
            f"pair-moment ODEs are capped at {MAX_MOMENT_AGENTS} agents, network has {net.n_agents}")
    return net.transfer_matrix


def general_rhs(state: GeneralMomentState, net: ExchangeNetwork, sigma, tax_rate=0.0):
    """Time derivatives ``(dm, dM)`` of the means and pair moments."""
    n = net.n_agents
    if state.m.shape != (n,) or state.M.shape != (n, n):
        raise ValueError(f"state dimensions {state.m.shape}/{state.M.shape} do not match {n} agents")
    P = _transfer(net)
    return _rhs(P, state.m, state.M, sigma * sigma, tax_rate)


def _rhs(P, m, M, s2, tax):
    PM = np.asarray(P @ M)
    dM = PM + PM.T - 2.0 * M
    dM[np.diag_indices_from(dM)] += 2.0 * s2 * np.diag(M)
    dm = np.asarray(P @ m) - m
    if tax:
        dm = dm + tax * (1.0 - m)
        dM = dM + tax * (m[:, None] + m[None, :]) - 2.0 * tax * M
    return dm, dM


def step_bound(net: ExchangeNetwork) -> float:
    """Default RK4 step: ``min(1e-2, 0.1 / |most negative Gershgorin bound|)``.

    The operator ``M -> P M + M P^T - 2 M`` has centre -2 and radius at
    most twice the largest column sum of ``P`` (which is one).
    """
    P = _transfer(net)
    colsum = float(np.abs(P).sum(axis=0).max())
    bound = 2.0 + 2.0 * colsum
    return min(1e-2, 0.1 / bound)


def integrate_general(net: ExchangeNetwork, sigma, state0: GeneralMomentState, sample_times,
                      step=None, tax_rate=0.0, psd_tol=1e-8, check_psd=True):
    """Fixed-step RK4 integration; returns one state per sample time.

    The last step before each sample time is shortened to land on it
    exactly. ``check_psd`` verifies the covariance stays positive
    semidefinite (relative tolerance ``psd_tol``).
    """
    P = _transfer(net)
    h = step_bound(net) if step is None else float(step)
    s2 = sigma * sigma
    times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < state0.t):
        raise ValueError("sample times must be sorted and not precede the initial state")
    m, M, t = state0.m.astype(float), state0.M.astype(float), float(state0.t)
    out = []
    for target in times:
        while target - t > 1e-12 * max(1.0, target):
            dt = min(h, target - t)
            k1m, k1M = _rhs(P, m, M, s2, tax_rate)
            k2m, k2M = _rhs(P, m + 0.5 * dt * k1m, M + 0.5 * dt * k1M, s2, tax_rate)
            k3m, k3M = _rhs(P, m + 0.5 * dt * k2m, M + 0.5 * dt * k2M, s2, tax_rate)
            k4m, k4M = _rhs(P, m + dt * k3m, M + dt * k3M, s2, tax_rate)
            m = m + dt / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
            M = M + dt / 6.0 * (k1M + 2 * k2M + 2 * k3M + k4M)
            M = 0.5 * (M + M.T)
            t += dt
            if not np.isfinite(M).all() or np.abs(M).max() > 1e300:
                raise NumericalOverflowError(f"pair moments overflowed at t={t:g}")
        t = float(target)
        state = GeneralMomentState(m.copy(), M.copy(), t)
        if check_psd:
            cov = state.covariance
            scale = max(1.0, float(np.abs(cov).max()))
            if np.linalg.eigvalsh(cov).min() < -psd_tol * scale:
                raise NumericalOverflowError(f"covariance lost positive semidefiniteness at t={t:g}")
        out.append(state)
    return out


def correlation_limit_general(net: ExchangeNetwork, sigma, state0=None, chunk=5.0, tol=1e-10,
                              max_time=1e5):
    """Asymptotic correlation matrix, by integrating with renormalisation.

    Power iteration on the moment flow: once the growing mode dominates,
    ``M / |M|`` stops changing and its normalised form is the limit.
    """
    if sigma <= 0:
        raise DomainError("the correlation limit is undefined without noise")
    if state0 is None:
        state0 = GeneralMomentState.deterministic(np.ones(net.n_agents))
    state = state0
    prev = None
    t = 0.0
    while t < max_time:
        state = integrate_general(net, sigma, state, [state.t + chunk], check_psd=False)[0]
        scale = np.abs(state.M).max()
        state = GeneralMomentState(state.m / math.sqrt(scale), state.M / scale, state.t)
        t += chunk
        d = np.sqrt(np.diag(state.M))
        cur = state.M / np.outer(d, d)
        if prev is not None and np.abs(cur - prev).max() < tol:
            return cur
        prev = cur
    raise NumericalOverflowError("correlation limit did not converge")


def write_complete_csv(path, sigma, n_agents, times, x0=1.0, y0=1.0, tax_rate=0.0, header=()):
    """CSV columns: t, x, y, var, corr."""
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "var", "corr"])
        for s in complete_trajectory(sigma, n_agents, times, x0, y0, tax_rate):
            corr = s.correlation if s.variance != 0 else float("nan")
            w.writerow([repr(s.t), repr(s.x), repr(s.y), repr(s.variance), repr(corr)])


def write_general_csv(path, states, header=()):
    """CSV columns: t, m_0..m_{N-1}, then M_ij for i <= j in row-major order."""
    n = len(states[0].m)
    iu, ju = np.triu_indices(n)
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t"] + [f"m_{i}" for i in range(n)] + [f"M_{i}_{j}" for i, j in zip(iu, ju)])
        for s in states:
            w.writerow([repr(s.t)] + [repr(float(v)) for v in s.m] + [repr(float(v)) for v in s.M[iu, ju]])
