"""Ensemble and population statistics over Monte-Carlo realisations.

The :class:`EnsembleAccumulator` keeps running sums split into a fixed
number of jackknife blocks; realisation ``r`` always lands in block
``r % n_blocks``. That makes merging associative and commutative, and
gives delete-a-block jackknife error bars for any smooth statistic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats as _sps

from .exceptions import InsufficientSamplesError
from .network import ExchangeNetwork, shortest_path_lengths

#: Largest N for which every pair product is tracked (O(N^2) memory per block).
MAX_FULL_PAIR_AGENTS = 200


class PairClasses:
    """Agent pairs grouped by shortest-path distance.

    For complete graphs there is a single class (distance 1) whose
    product sums are computed in O(N) from the total wealth.
    """

    def __init__(self, n_agents, distances, pairs, complete=False):
        self.n_agents = n_agents
        self.distances = tuple(distances)
        self._pairs = pairs
        self.complete = complete

    @classmethod
    def from_network(cls, net: ExchangeNetwork, max_distance=None) -> "PairClasses":
        n = net.n_agents
        if net.is_complete:
            return cls(n, (1,), {1: None}, complete=True)
        dist = shortest_path_lengths(net)
        top = int(dist.max()) if max_distance is None else min(int(max_distance), int(dist.max()))
        iu, ju = np.triu_indices(n, k=1)
        d = dist[iu, ju]
        pairs = {k: (iu[d == k], ju[d == k]) for k in range(1, top + 1)}
        return cls(n, range(1, top + 1), pairs)

    def n_pairs(self, d: int) -> int:
        if self.complete:
            return self.n_agents * (self.n_agents - 1) // 2
        return len(self._pairs[d][0])

    def representative(self, d: int) -> tuple[int, int]:
        if self.complete:
            return 0, 1
        rows, cols = self._pairs[d]
        return int(rows[0]), int(cols[0])

    def product_sums(self, x: np.ndarray) -> np.ndarray:
        """Sum of ``x_i * x_j`` over each class; ``x`` is (..., N) -> (..., D)."""
        if self.complete:
            tot = x.sum(axis=-1)
            return ((tot * tot - (x * x).sum(axis=-1)) / 2.0)[..., None]
        out = np.empty(x.shape[:-1] + (len(self.distances),))
        for c, d in enumerate(self.distances):
            rows, cols = self._pairs[d]
            out[..., c] = (x[..., rows] * x[..., cols]).sum(axis=-1)
        return out

    def __eq__(self, other):
        if not isinstance(other, PairClasses):
            return NotImplemented
        if (self.n_agents, self.distances, self.complete) != (other.n_agents, other.distances, other.complete):
            return False
        if self.complete:
            return True
        return all(np.array_equal(self._pairs[d][0], other._pairs[d][0])
                   and np.array_equal(self._pairs[d][1], other._pairs[d][1]) for d in self.distances)


class _Sums(NamedTuple):
    count: np.ndarray
    sum_v: np.ndarray
    sum_v2: np.ndarray
    sum_abs: np.ndarray
    class_sum: np.ndarray | None
    pair_sum: np.ndarray | None


@dataclass(frozen=True)
class HistogramSpec:
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("histogram edges must be strictly increasing with at least two entries")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def log_spaced(cls, low=1e-3, high=10.0, bins=60):
        return cls(np.geomspace(low, high, bins + 1))


class Histogram(NamedTuple):
    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    underflow: int
    overflow: int


class MeanAbsDev(NamedTuple):
    value: np.ndarray
    squared: np.ndarray


@dataclass
class PopulationComparison:
    times: np.ndarray
    #: |mean over realisations of population variance - ensemble variance| / ensemble variance
    rel_difference: np.ndarray
    #: std / mean of the population variance across realisations
    rel_fluctuation: np.ndarray

    def window(self, t_min, t_max):
        sel = (self.times >= t_min) & (self.times <= t_max)
        return float(self.rel_difference[sel].mean()), float(self.rel_fluctuation[sel].mean())


class EnsembleAccumulator:
    """Merge-able running statistics for an ensemble of realisations.

    Parameters
    ----------
    n_agents : int
    times : sequence of float
        Sample times; every update carries one wealth vector per time.
    pairs : {"distance", "all", "none"}
        Which pair products to accumulate. ``"distance"`` needs
        ``pair_classes``; ``"all"`` is capped at ``MAX_FULL_PAIR_AGENTS``.
    pair_classes : PairClasses, optional
    tracked_pair : (int, int)
        Agents whose raw per-realisation values are retained for rank
        statistics and exact per-pair Pearson estimates.
    n_blocks : int
        Jackknife blocks.
    mad_target : float
        Anchor for the mean absolute deviation.
    """

    def __init__(self, n_agents, times, pairs="distance", pair_classes=None,
                 tracked_pair=(0, 1), n_blocks=20, mad_target=1.0):
        if n_agents < 1:
            raise ValueError("need at least one agent")
        self.n_agents = int(n_agents)
        self.times = np.asarray(times, dtype=float).reshape(-1)
        if pairs not in ("distance", "all", "none"):
            raise ValueError(f"unknown pair mode {pairs!r}")
        if pairs == "distance" and pair_classes is None:
            pairs = "none"
        if pairs == "all" and n_agents > MAX_FULL_PAIR_AGENTS:
            raise ValueError(f"full pair tracking is capped at {MAX_FULL_PAIR_AGENTS} agents; use 'distance'")
        self.pairs = pairs
        self.pair_classes = pair_classes if pairs == "distance" else None
        if n_agents < 2:
            tracked_pair = None
        self.tracked_pair = None if tracked_pair is None else tuple(int(i) for i in tracked_pair)
        self.n_blocks = int(n_blocks)
        self.mad_target = float(mad_target)

        B, S, N = self.n_blocks, len(self.times), self.n_agents
        self._count = np.zeros(B, dtype=np.int64)
        self._sum_v = np.zeros((B, S, N))
        self._sum_v2 = np.zeros((B, S, N))
        self._sum_abs = np.zeros((B, S, N))
        self._class_sum = (np.zeros((B, S, len(self.pair_classes.distances)))
                           if self.pair_classes is not None else None)
        self._pair_sum = np.zeros((B, S, N, N)) if pairs == "all" else None
        self._rec_index = []
        self._rec_va = []
        self._rec_popvar = []
        self._rec_tracked = []
        self._records_cache = None
        self.discarded = 0
        self.clamp_events = 0

    # -- updating ---------------------------------------------------------

    def update(self, snapshot, realisation_index=None):
        """Add one realisation. ``snapshot`` is (S, N), or (N,) when S == 1."""
        x = np.asarray(snapshot, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if realisation_index is None:
            realisation_index = self.count + self.discarded
        self.update_batch(x[None], [realisation_index])
        return self

    def update_batch(self, values, indices):
        """Add realisations ``values`` (R, S, N) with their global indices."""
        x = np.asarray(values, dtype=float)
        idx = np.asarray(indices, dtype=np.int64)
        S, N = len(self.times), self.n_agents
        if x.ndim != 3 or x.shape[1:] != (S, N):
            raise ValueError(f"expected values of shape (R, {S}, {N}), got {x.shape}")
        if len(idx) != x.shape[0]:
            raise ValueError("one realisation index per row required")
        if len(idx) == 0:
            return self
        blocks = idx % self.n_blocks
        for b in np.unique(blocks):
            sel = blocks == b
            xb = x[sel]
            self._count[b] += xb.shape[0]
            self._sum_v[b] += xb.sum(axis=0)
            self._sum_v2[b] += (xb * xb).sum(axis=0)
            self._sum_abs[b] += np.abs(xb - self.mad_target).sum(axis=0)
            if self._class_sum is not None:
                self._class_sum[b] += self.pair_classes.product_sums(xb).sum(axis=0)
            if self._pair_sum is not None:
                self._pair_sum[b] += np.einsum("rsi,rsj->sij", xb, xb)

        self._rec_index.append(idx.copy())
        self._rec_va.append(x.mean(axis=2))
        self._rec_popvar.append(x.var(axis=2, ddof=1) if N > 1 else np.zeros(x.shape[:2]))
        if self.tracked_pair is not None:
            self._rec_tracked.append(x[:, :, list(self.tracked_pair)])
        self._records_cache = None
        return self

    def _compatible(self, other):
        return (self.n_agents == other.n_agents and np.array_equal(self.times, other.times)
                and self.pairs == other.pairs and self.n_blocks == other.n_blocks
                and self.tracked_pair == other.tracked_pair and self.mad_target == other.mad_target
                and (self.pair_classes is None) == (other.pair_classes is None)
                and (self.pair_classes is None or self.pair_classes == other.pair_classes))

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        """Return a new accumulator holding both ensembles."""
        if not self._compatible(other):
            raise ValueError("cannot merge accumulators with different layouts")
        out = EnsembleAccumulator(self.n_agents, self.times, self.pairs, self.pair_classes,
                                  self.tracked_pair, self.n_blocks, self.mad_target)
        out._count = self._count + other._count
        out._sum_v = self._sum_v + other._sum_v
        out._sum_v2 = self._sum_v2 + other._sum_v2
        out._sum_abs = self._sum_abs + other._sum_abs
        if self._class_sum is not None:
            out._class_sum = self._class_sum + other._class_sum
        if self._pair_sum is not None:
            out._pair_sum = self._pair_sum + other._pair_sum
        for name in ("_rec_index", "_rec_va", "_rec_popvar", "_rec_tracked"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.discarded = self.discarded + other.discarded
        out.clamp_events = self.clamp_events + other.clamp_events
        return out

    __add__ = merge

    # -- raw access -----------------------------------------------------------

    @property
    def count(self) -> int:
        return int(self._count.sum())

    @property
    def variance_defined(self) -> bool:
        return self.count >= 2

    def _records(self):
        if self._records_cache is None:
            if not self._rec_index:
                S = len(self.times)
                empty = np.empty((0, S))
                self._records_cache = (np.empty(0, dtype=np.int64), empty, empty,
                                       np.empty((0, S, 2)))
            else:
                idx = np.concatenate(self._rec_index)
                order = np.argsort(idx, kind="stable")
                tracked = (np.concatenate(self._rec_tracked)[order] if self._rec_tracked
                           else np.empty((len(idx), len(self.times), 2)))
                self._records_cache = (idx[order], np.concatenate(self._rec_va)[order],
                                       np.concatenate(self._rec_popvar)[order], tracked)
        return self._records_cache

    @property
    def realisation_indices(self):
        return self._records()[0]

    @property
    def va_samples(self) -> np.ndarray:
        """Average wealth of every realisation, shape (R, S), sorted by realisation index."""
        return self._records()[1]

    @property
    def population_variances(self) -> np.ndarray:
        """Across-agent sample variance within each realisation, shape (R, S)."""
        return self._records()[2]

    def tracked_values(self) -> np.ndarray:
        """Raw values of the tracked pair, shape (R, S, 2)."""
        if self.tracked_pair is None:
            raise ValueError("no pair is tracked")
        return self._records()[3]

    def time_index(self, t) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def _totals(self) -> _Sums:
        return _Sums(self._count.sum(), self._sum_v.sum(0), self._sum_v2.sum(0), self._sum_abs.sum(0),
                     None if self._class_sum is None else self._class_sum.sum(0),
                     None if self._pair_sum is None else self._pair_sum.sum(0))

    def _jackknife(self, fn):
        """Delete-a-block jackknife of ``fn(_Sums)``; returns (estimate, standard error)."""
        total = self._totals()
        est = fn(total)
        live = np.flatnonzero(self._count > 0)
        g = len(live)
        if g < 2:
            return est, np.full_like(np.asarray(est, dtype=float), np.nan)
        reps = []
        for b in live:
            reps.append(fn(_Sums(
                total.count - self._count[b], total.sum_v - self._sum_v[b],
                total.sum_v2 - self._sum_v2[b], total.sum_abs - self._sum_abs[b],
                None if total.class_sum is None else total.class_sum - self._class_sum[b],
                None if total.pair_sum is None else total.pair_sum - self._pair_sum[b])))
        reps = np.asarray(reps)
        se = np.sqrt((g - 1) / g * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0))
        return est, se

    # -- derived statistics ------------------------------------------------

    @staticmethod
    def _mean(s: _Sums):
        return s.sum_v / s.count

    @staticmethod
    def _var(s: _Sums):
        if s.count < 2:
            return np.full(s.sum_v.shape, np.nan)
        return np.maximum((s.sum_v2 - s.sum_v ** 2 / s.count) / (s.count - 1), 0.0)

    def mean(self) -> np.ndarray:
        """Ensemble mean of each agent, shape (S, N)."""
        return self._mean(self._totals())

    def variance(self) -> np.ndarray:
        """Unbiased ensemble variance of each agent, (S, N); NaN when count < 2."""
        return self._var(self._totals())

    def mean_variance(self, with_se=False):
        """Agent-averaged ensemble variance per sample time."""
        fn = lambda s: self._var(s).mean(axis=1)  # noqa: E731
        return self._jackknife(fn) if with_se else fn(self._totals())

    def _class_corr(self, s: _Sums):
        pc = self.pair_classes
        m = s.sum_v / s.count
        sd = np.sqrt(self._var(s))
        num = s.class_sum - s.count * pc.product_sums(m)
        with np.errstate(invalid="ignore", divide="ignore"):
            return num / ((s.count - 1) * pc.product_sums(sd))

    def class_pearson(self, distance=None, with_se=False):
        """Class-averaged Pearson correlation at each sample time.

        Returns shape (S,) for one ``distance`` or (S, D) for all classes.
        """
        if self.pair_classes is None:
            raise ValueError("no pair classes are accumulated (pairs != 'distance')")
        col = slice(None) if distance is None else self.pair_classes.distances.index(distance)
        fn = lambda s: self._class_corr(s)[:, col]  # noqa: E731
        return self._jackknife(fn) if with_se else fn(self._totals())

    def pearson(self, i, j, with_se=False):
        """Pearson correlation of agents ``i`` and ``j`` at each sample time.

        Needs ``pairs="all"`` or ``(i, j)`` to be the tracked pair. NaN
        marks an undefined value (zero variance or fewer than two
        realisations).
        """
        if i == j:
            raise ValueError("pearson needs two distinct agents")
        if self._pair_sum is not None:
            def fn(s):
                m = s.sum_v / s.count
                var = self._var(s)
                cov = (s.pair_sum[:, i, j] - s.count * m[:, i] * m[:, j]) / (s.count - 1)
                with np.errstate(invalid="ignore", divide="ignore"):
                    return cov / np.sqrt(var[:, i] * var[:, j])
            return self._jackknife(fn) if with_se else fn(self._totals())
        if self.tracked_pair is not None and {i, j} == set(self.tracked_pair):
            vals = self.tracked_values()
            est = np.array([_pearson(vals[:, s, 0], vals[:, s, 1]) for s in range(len(self.times))])
            if not with_se:
                return est
            return est, self._record_jackknife(lambda rows: np.array(
                [_pearson(vals[rows, s, 0], vals[rows, s, 1]) for s in range(len(self.times))]))
        raise ValueError(f"pair ({i}, {j}) is not tracked")

    def _record_jackknife(self, fn):
        idx = self.realisation_indices
        blocks = idx % self.n_blocks
        live = np.unique(blocks)
        g = len(live)
        if g < 2:
            return np.nan
        reps = np.asarray([fn(blocks != b) for b in live])
        return np.sqrt((g - 1) / g * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0))

    def mean_abs_dev(self, i=None) -> MeanAbsDev:
        """Mean absolute deviation from ``mad_target`` and its square.

        ``i=None`` averages over agents. Defined for any noise level.
        """
        s = self._totals()
        mad = s.sum_abs / s.count
        mad = mad.mean(axis=1) if i is None else mad[:, i]
        return MeanAbsDev(mad, mad ** 2)

    def va_mean(self, with_se=False):
        va = self.va_samples
        est = va.mean(axis=0)
        if not with_se:
            return est
        se = va.std(axis=0, ddof=1) / np.sqrt(len(va)) if len(va) > 1 else np.full_like(est, np.nan)
        return est, se

    def va_median(self):
        return np.median(self.va_samples, axis=0)

    def prob_va_below(self, x=1.0):
        return (self.va_samples < x).mean(axis=0)


def _pearson(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    dx = x - x.mean()
    dy = y - y.mean()
    den = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if den == 0.0:
        return np.nan
    return float(np.clip((dx * dy).sum() / den, -1.0, 1.0))


def update(acc: EnsembleAccumulator, snapshot, realisation_index=None) -> EnsembleAccumulator:
    return acc.update(snapshot, realisation_index)


def pearson(acc: EnsembleAccumulator, i, j):
    return acc.pearson(i, j)


def rank_correlations(values_i, values_j):
    """Kendall's tau-b and Spearman's rho of two equal-length samples.

    Both are NaN when either input is constant.
    """
    x = np.asarray(values_i, dtype=float)
    y = np.asarray(values_j, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("rank correlations need two 1-d samples of equal length")
    if len(x) < 2:
        raise InsufficientSamplesError("rank correlations need at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return np.nan, np.nan
    tau = _sps.kendalltau(x, y, variant="b").statistic
    rho = _sps.spearmanr(x, y).statistic
    return float(tau), float(rho)


def rank_correlation_curve(acc: EnsembleAccumulator):
    """Kendall tau and Spearman rho of the tracked pair at each sample time, (S, 2)."""
    vals = acc.tracked_values()
    return np.array([rank_correlations(vals[:, s, 0], vals[:, s, 1]) for s in range(len(acc.times))])


def mean_abs_dev(acc: EnsembleAccumulator, i=None) -> MeanAbsDev:
    return acc.mean_abs_dev(i)


def population_vs_ensemble(acc: EnsembleAccumulator, population_variances=None) -> PopulationComparison:
    """Compare within-realisation (population) variance with ensemble variance."""
    pv = acc.population_variances if population_variances is None else np.asarray(population_variances)
    ens = acc.mean_variance()
    pop_mean = pv.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = np.where(ens > 0, np.abs(pop_mean - ens) / ens, np.abs(pop_mean - ens))
        fluct = np.where(pop_mean > 0, pv.std(axis=0, ddof=1) / pop_mean, 0.0)
    return PopulationComparison(acc.times.copy(), diff, fluct)


def va_histogram(acc: EnsembleAccumulator, spec: HistogramSpec, sample_time, min_samples=1000) -> Histogram:
    """Normalised density of the average wealth at the sample time closest to ``sample_time``."""
    va = acc.va_samples[:, acc.time_index(sample_time)]
    if len(va) < min_samples:
        raise InsufficientSamplesError(f"need at least {min_samples} v_A samples, have {len(va)}")
    edges = spec.edges
    counts, _ = np.histogram(va, bins=edges)
    under = int((va < edges[0]).sum())
    over = int((va > edges[-1]).sum())
    inside = counts.sum()
    density = counts / (inside * np.diff(edges)) if inside else np.zeros(len(counts))
    return Histogram(edges, density, counts, under, over)
