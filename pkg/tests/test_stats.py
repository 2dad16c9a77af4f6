import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from wealthlab.exceptions import InsufficientSamplesError
from wealthlab.network import build_complete, build_ring, build_star
from wealthlab.stats import (
    EnsembleAccumulator,
    HistogramSpec,
    PairClasses,
    mean_abs_dev,
    pearson,
    population_vs_ensemble,
    rank_correlations,
    update,
    va_histogram,
)


def filled(values, **kw):
    """Accumulator over (R, S, N) values with realisation indices 0..R-1."""
    values = np.asarray(values, dtype=float)
    R, S, N = values.shape
    acc = EnsembleAccumulator(N, np.arange(1, S + 1, dtype=float), **kw)
    acc.update_batch(values, np.arange(R))
    return acc


class TestBasics:
    def test_single_uniform_snapshot(self):
        acc = EnsembleAccumulator(4, [1.0])
        update(acc, np.ones(4))
        assert acc.count == 1 and not acc.variance_defined
        assert acc.population_variances[0, 0] == 0.0
        assert acc.va_samples[0, 0] == 1.0
        assert np.isnan(acc.variance()).all()

    def test_two_snapshots_one_agent(self):
        acc = EnsembleAccumulator(1, [1.0])
        acc.update(np.array([1.0]))
        acc.update(np.array([3.0]))
        assert acc.variance()[0, 0] == 2.0
        assert acc.mean()[0, 0] == 2.0

    def test_merge_law(self):
        a = EnsembleAccumulator(3, [1.0], pairs="all")
        b = EnsembleAccumulator(3, [1.0], pairs="all")
        both = EnsembleAccumulator(3, [1.0], pairs="all")
        a.update(np.array([1.0, 2.0, 4.0]), 0)
        b.update(np.array([0.5, 1.0, 3.0]), 1)
        both.update(np.array([1.0, 2.0, 4.0]), 0)
        both.update(np.array([0.5, 1.0, 3.0]), 1)
        merged = a + b
        assert np.array_equal(merged.variance(), both.variance())
        assert np.array_equal(merged.pearson(0, 2), both.pearson(0, 2))
        assert np.array_equal(merged.va_samples, both.va_samples)
        assert np.array_equal((b + a).variance(), both.variance())

    def test_merge_order_invariance(self):
        rng = np.random.default_rng(0)
        net = build_ring(8)
        pc = PairClasses.from_network(net)
        parts = []
        for k in range(4):
            acc = EnsembleAccumulator(8, [0.5, 1.0], pair_classes=pc)
            acc.update_batch(rng.lognormal(0, 0.5, size=(50, 2, 8)), np.arange(50 * k, 50 * k + 50))
            parts.append(acc)
        a = ((parts[0] + parts[1]) + parts[2]) + parts[3]
        b = parts[3] + (parts[2] + (parts[1] + parts[0]))
        for x, y in [(a.mean_variance(), b.mean_variance()), (a.class_pearson(), b.class_pearson())]:
            assert np.allclose(x, y, rtol=1e-12, atol=0)
        assert np.array_equal(a.va_samples, b.va_samples)
        assert np.array_equal(a.tracked_values(), b.tracked_values())

    def test_layout_mismatch(self):
        with pytest.raises(ValueError):
            EnsembleAccumulator(3, [1.0]) + EnsembleAccumulator(3, [2.0])

    def test_full_pair_cap(self):
        with pytest.raises(ValueError):
            EnsembleAccumulator(201, [1.0], pairs="all")

    def test_shape_check(self):
        with pytest.raises(ValueError):
            EnsembleAccumulator(3, [1.0, 2.0]).update_batch(np.ones((2, 1, 3)), [0, 1])


class TestPearson:
    def test_identical_values(self):
        x = np.random.default_rng(1).exponential(size=(200, 1, 1))
        acc = filled(np.concatenate([x, x, x + 1], axis=2), pairs="all")
        assert acc.pearson(0, 1)[0] == pytest.approx(1.0)
        assert acc.pearson(0, 2)[0] == pytest.approx(1.0)

    def test_independent(self):
        n = 20_000
        acc = filled(np.random.default_rng(2).normal(size=(n, 1, 2)))
        assert abs(pearson(acc, 0, 1)[0]) < 4 / math.sqrt(n)

    def test_matches_numpy(self):
        vals = np.random.default_rng(3).lognormal(size=(500, 2, 4))
        acc = filled(vals, pairs="all")
        for s in range(2):
            expected = np.corrcoef(vals[:, s, 1], vals[:, s, 3])[0, 1]
            assert acc.pearson(1, 3)[s] == pytest.approx(expected, rel=1e-10)

    def test_tracked_pair_matches_full(self):
        vals = np.random.default_rng(4).lognormal(size=(300, 1, 5))
        full = filled(vals, pairs="all", tracked_pair=(1, 4))
        tracked = filled(vals, pairs="none", tracked_pair=(1, 4))
        assert tracked.pearson(1, 4)[0] == pytest.approx(full.pearson(1, 4)[0], rel=1e-10)
        with pytest.raises(ValueError):
            tracked.pearson(0, 2)

    def test_zero_variance_is_nan(self):
        vals = np.ones((10, 1, 2))
        vals[:, 0, 1] = np.arange(10)
        assert np.isnan(filled(vals, pairs="all").pearson(0, 1)[0])

    def test_class_pearson_definition(self):
        net = build_star(5)
        pc = PairClasses.from_network(net)
        vals = np.random.default_rng(5).lognormal(0, 0.3, size=(400, 1, 5))
        acc = filled(vals, pair_classes=pc)
        cov = np.cov(vals[:, 0, :].T)
        sd = np.sqrt(np.diag(cov))
        # pooled over pairs: summed covariance over summed sd products
        for c, d in enumerate(pc.distances):
            pairs = [(i, j) for i, j in combinations(range(5), 2) if (i == 0) == (d == 1)]
            num = sum(cov[i, j] for i, j in pairs)
            den = sum(sd[i] * sd[j] for i, j in pairs)
            assert acc.class_pearson(d)[0] == pytest.approx(num / den, rel=1e-9)

    def test_complete_class_uses_all_pairs(self):
        pc = PairClasses.from_network(build_complete(6))
        vals = np.random.default_rng(6).lognormal(0, 0.3, size=(400, 1, 6))
        acc = filled(vals, pair_classes=pc)
        full = filled(vals, pairs="all")
        cov = np.cov(vals[:, 0, :].T)
        sd = np.sqrt(np.diag(cov))
        iu = np.triu_indices(6, 1)
        assert acc.class_pearson(1)[0] == pytest.approx(cov[iu].sum() / np.outer(sd, sd)[iu].sum(), rel=1e-9)
        assert full.pearson(0, 1)[0] == pytest.approx(cov[0, 1] / (sd[0] * sd[1]), rel=1e-9)

    def test_jackknife_se_tracks_sampling_error(self):
        # se of a correlation near zero is about 1/sqrt(R)
        R = 4000
        vals = np.random.default_rng(7).normal(size=(R, 1, 2))
        est, se = filled(vals, pairs="all", n_blocks=40).pearson(0, 1, with_se=True)
        assert 0.6 / math.sqrt(R) < se[0] < 1.5 / math.sqrt(R)


def kendall_tau_b(x, y):
    conc = disc = tx = ty = 0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx == dy:
                conc += 1
            else:
                disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def average_ranks(x):
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    xs = np.asarray(x)[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    return ranks


class TestRankCorrelations:
    def test_identical_and_reversed(self):
        x = np.arange(20.0)
        assert rank_correlations(x, x ** 3) == pytest.approx((1.0, 1.0))
        assert rank_correlations(x, -x) == pytest.approx((-1.0, -1.0))

    def test_independent(self):
        n = 5000
        rng = np.random.default_rng(8)
        tau, rho = rank_correlations(rng.normal(size=n), rng.normal(size=n))
        # null standard deviations: tau ~ sqrt(2(2n+5)/(9n(n-1))), rho ~ 1/sqrt(n-1)
        assert abs(tau) < 4 * math.sqrt(2 * (2 * n + 5) / (9 * n * (n - 1)))
        assert abs(rho) < 4 / math.sqrt(n - 1)

    def test_constant_input(self):
        tau, rho = rank_correlations(np.ones(5), np.arange(5.0))
        assert math.isnan(tau) and math.isnan(rho)

    def test_errors(self):
        with pytest.raises(ValueError):
            rank_correlations([1, 2], [1, 2, 3])
        with pytest.raises(InsufficientSamplesError):
            rank_correlations([1.0], [2.0])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=3, max_size=40))
    def test_against_brute_force_with_ties(self, pairs):
        x = np.array([p[0] for p in pairs], float)
        y = np.array([p[1] for p in pairs], float)
        if np.all(x == x[0]) or np.all(y == y[0]):
            return
        tau, rho = rank_correlations(x, y)
        assert tau == pytest.approx(kendall_tau_b(x, y), abs=1e-12)
        assert rho == pytest.approx(np.corrcoef(average_ranks(x), average_ranks(y))[0, 1], abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["exp", "cube", "log", "affine"]))
    def test_monotone_invariance(self, seed, kind):
        rng = np.random.default_rng(seed)
        x = rng.lognormal(size=30)
        y = x * rng.lognormal(size=30)
        f = {"exp": np.exp, "cube": lambda v: v ** 3, "log": np.log, "affine": lambda v: 3 * v - 7}[kind]
        assert rank_correlations(f(x), y) == pytest.approx(rank_correlations(x, y), abs=1e-12)


class TestMeanAbsDev:
    def test_all_ones(self):
        acc = filled(np.ones((5, 1, 3)))
        assert mean_abs_dev(acc).value[0] == 0.0

    def test_zero_and_two(self):
        acc = filled(np.array([[[0.0]], [[2.0]]]))
        mad = acc.mean_abs_dev(0)
        assert mad.value[0] == 1.0 and mad.squared[0] == 1.0

    def test_lognormal_oracle(self):
        # free-regime lognormal exp(s Z - s^2/2) with s^2 = 2 sigma^2 t has E|X - 1| = 2 (2 Phi(s/2) - 1)
        sigma2, t, R, N = 0.5, 0.05, 20_000, 3
        s = math.sqrt(2 * sigma2 * t)
        x = np.exp(s * np.random.default_rng(9).normal(size=(R, 1, N)) - s * s / 2)
        acc = filled(x)
        expected = 2 * (2 * norm.cdf(s / 2) - 1)
        se = np.abs(x - 1).mean(axis=2).std(ddof=1) / math.sqrt(R)
        assert abs(acc.mean_abs_dev().value[0] - expected) < 4 * se

    def test_defined_for_strong_noise(self):
        x = np.random.default_rng(10).lognormal(0, 3, size=(100, 1, 2))
        assert np.isfinite(filled(x).mean_abs_dev().value).all()


class TestPopulation:
    def test_deterministic_run(self):
        acc = filled(np.ones((10, 3, 5)) * np.array([1.0, 1.0, 1.0])[None, :, None])
        cmp = population_vs_ensemble(acc)
        assert np.all(cmp.rel_difference == 0) and np.all(cmp.rel_fluctuation == 0)

    def test_independent_agents_agree(self):
        # i.i.d. agents: population and ensemble variances estimate the same number
        x = np.random.default_rng(11).lognormal(0, 0.3, size=(3000, 1, 10))
        cmp = population_vs_ensemble(filled(x))
        assert cmp.rel_difference[0] < 0.05
        diff, fluct = cmp.window(0.5, 1.5)
        assert diff == cmp.rel_difference[0] and fluct == cmp.rel_fluctuation[0]


class TestHistogram:
    def test_normalised(self):
        x = np.random.default_rng(12).lognormal(0, 0.5, size=(5000, 1, 4))
        h = va_histogram(filled(x), HistogramSpec.log_spaced(1e-2, 10, 40), 1.0)
        inside = h.counts.sum()
        assert np.sum(h.density * np.diff(h.edges)) == pytest.approx(1.0)
        assert inside + h.underflow + h.overflow == 5000

    def test_concentrates_near_one(self):
        x = 1 + 1e-3 * np.random.default_rng(13).normal(size=(2000, 1, 3))
        h = va_histogram(filled(x), HistogramSpec.log_spaced(0.5, 2.0, 30), 1.0)
        k = np.argmax(h.density)
        assert h.edges[k] <= 1.0 <= h.edges[k + 1] or abs(h.edges[k] - 1) < 0.05

    def test_too_few(self):
        with pytest.raises(InsufficientSamplesError):
            va_histogram(filled(np.ones((10, 1, 2))), HistogramSpec.log_spaced(), 1.0)


def test_pair_classes_ring():
    pc = PairClasses.from_network(build_ring(10))
    assert pc.distances == (1, 2, 3, 4, 5)
    assert [pc.n_pairs(d) for d in pc.distances] == [10, 10, 10, 10, 5]
    assert PairClasses.from_network(build_ring(10), max_distance=3).distances == (1, 2, 3)
    x = np.arange(10.0)
    assert pc.product_sums(x)[0] == sum(x[i] * x[(i + 1) % 10] for i in range(10))
