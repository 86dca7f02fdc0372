"""Tests for the equivalence-testing primitives: norm estimation, flattening,
the Z statistic, and the three testers built on them."""

import math

import numpy as np
import pytest

import citest.equiv as equiv_mod
from citest.config import Constants, trial_rng
from citest.distributions import CountTensor, Dist, sample
from citest.equiv import (
    SubSupport,
    ZSplit,
    amplification_reps,
    equiv_l2,
    equiv_l2_required,
    equiv_small,
    equiv_test_z,
    estimate_l2,
    flatten_samples,
    poissonize,
    z_statistic,
    z_test_required,
)
from citest.errors import DimensionMismatch, InsufficientSamples, InvalidThreshold
from citest.harness import planted_l2_pair


def counts_1d(values, d):
    return CountTensor.from_flat(np.asarray(values, dtype=np.int64), (d,))


class TestPoissonize:
    def test_zero_mean(self, rng):
        assert poissonize(0, rng) == 0

    def test_concentration(self, rng):
        draws = np.array([poissonize(10_000, rng) for _ in range(2000)])
        se = math.sqrt(10_000 / 2000)
        assert abs(draws.mean() - 10_000) < 5 * se

    def test_per_index_count_independence(self, rng):
        # Poissonized multinomial counts of two indices are uncorrelated.
        p = np.array([0.3, 0.3, 0.4])
        c0, c1 = [], []
        for _ in range(10_000):
            m = poissonize(20, rng)
            draws = np.searchsorted(np.cumsum(p), rng.random(m), side="right")
            counts = np.bincount(draws, minlength=3)
            c0.append(counts[0])
            c1.append(counts[1])
        c0, c1 = np.array(c0), np.array(c1)
        cov = np.cov(c0, c1)[0, 1]
        se = np.std(c0) * np.std(c1) / math.sqrt(len(c0))
        assert abs(cov) < 5 * se

    def test_negative_mean_rejected(self, rng):
        with pytest.raises(ValueError):
            poissonize(-1, rng)


class TestZStatistic:
    def test_all_zero(self):
        empty = counts_1d([], 4)
        assert z_statistic(ZSplit(empty, empty, empty, empty)) == 0.0

    def test_unit_counts_cancel(self):
        one = counts_1d([2], 4)
        assert z_statistic(ZSplit(one, one, one, one)) == 0.0  # 1 - 2 + 1

    def test_arithmetic(self):
        # X=2, X'=1, Y=0, Y'=3 at a single index -> 2*1 - 0 + 0*3 = 2
        x = counts_1d([0, 0], 2)
        xp = counts_1d([0], 2)
        y = counts_1d([], 2)
        yp = counts_1d([0, 0, 0], 2)
        assert z_statistic(ZSplit(x, xp, y, yp)) == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            z_statistic(ZSplit(counts_1d([0], 2), counts_1d([0], 3),
                               counts_1d([0], 2), counts_1d([0], 2)))


class TestFlattening:
    def test_identity_on_sub_support(self, rng):
        sub = SubSupport(10, [2, 5, 7])
        out = flatten_samples(np.array([2, 5, 7, 2]), sub, 4, rng)
        assert np.array_equal(out, [0, 1, 2, 0])

    def test_complement_lands_in_dummy_block(self, rng):
        sub = SubSupport(10, [2, 5, 7])
        out = flatten_samples(np.array([0, 1, 3, 9]), sub, 4, rng)
        assert np.all((out >= 3) & (out < 7))

    def test_flattening_identity_exact(self):
        # ||P'-Q'||_2^2 = ||P^S-Q^S||_2^2 + (P[S]-Q[S])^2 / n_dummy, computed
        # at the probability level for explicit small distributions.
        p = np.array([0.5, 0.2, 0.2, 0.1])
        q = np.array([0.3, 0.4, 0.05, 0.25])
        s = [0, 2]
        n_dummy = 25
        p_flat = np.r_[p[s], np.full(n_dummy, (p[1] + p[3]) / n_dummy)]
        q_flat = np.r_[q[s], np.full(n_dummy, (q[1] + q[3]) / n_dummy)]
        lhs = np.sum((p_flat - q_flat) ** 2)
        sub_term = np.sum((p[s] - q[s]) ** 2)
        mass_term = (p[s].sum() - q[s].sum()) ** 2 / n_dummy
        assert lhs == pytest.approx(sub_term + mass_term, abs=1e-15)


class TestEstimateL2:
    def test_empty_sub_support_small(self):
        d = 50
        eps = 0.1
        hits = 0
        for t in range(60):
            rng = trial_rng(800, t)
            samples = sample(Dist.uniform(d), 2000, rng)
            c = estimate_l2(samples, SubSupport(d, []), eps, rng)
            hits += c <= 2 * eps
        assert hits >= 40

    def test_uniform_full_support(self):
        hits = 0
        for t in range(300):
            rng = trial_rng(801, t)
            samples = sample(Dist.uniform(100), 2000, rng)
            c = estimate_l2(samples, SubSupport.full(100), 0.01, rng)
            hits += 0.05 <= c <= 0.22
        assert hits >= 200

    def test_point_mass_inside(self):
        hits = 0
        eps = 0.05
        for t in range(100):
            rng = trial_rng(802, t)
            samples = np.full(2000, 7, dtype=np.int64)
            c = estimate_l2(samples, SubSupport(20, [7]), eps, rng)
            hits += 0.5 <= c <= 2 + 2 * eps
        assert hits >= 67

    def test_insufficient_samples(self, rng):
        with pytest.raises(InsufficientSamples):
            estimate_l2(np.zeros(3, dtype=np.int64), SubSupport.full(100), 0.01, rng)


class TestEquivTestZ:
    def test_same_distribution_yes_rate(self):
        d, eps, b = 100, 0.05, 0.1
        hits = 0
        for t in range(300):
            rng = trial_rng(803, t)
            need = z_test_required(b, eps)
            sp = sample(Dist.uniform(d), need, rng)
            sq = sample(Dist.uniform(d), need, rng)
            hits += equiv_test_z(sp, sq, b, eps, rng, host_size=d).outcome == "Yes"
        assert hits >= 200

    def test_planted_pair_no_rate(self):
        d, eps, b = 100, 0.05, 0.1
        p, q = planted_l2_pair(d, eps)
        hits = 0
        for t in range(300):
            rng = trial_rng(804, t)
            need = z_test_required(b, eps)
            sp = sample(p, need, rng)
            sq = sample(q, need, rng)
            hits += equiv_test_z(sp, sq, b, eps, rng, host_size=d).outcome == "No"
        assert hits >= 200

    def test_mean_identity(self):
        # E[Z] = N^2 ||P-Q||_2^2 within 3 standard errors, Monte Carlo
        d, eps = 100, 0.05
        p, q = planted_l2_pair(d, eps)
        n = z_test_required(0.1, eps) // 2
        zs = []
        rng = trial_rng(805, 0)
        for _ in range(2000):
            sp = sample(p, 2 * n, rng)
            sq = sample(q, 2 * n, rng)
            v = equiv_mod._z_core(sp, sq, d, eps, rng)
            zs.append(v.diagnostics["z"])
        zs = np.array(zs)
        expect = n**2 * eps**2
        se = zs.std(ddof=1) / math.sqrt(len(zs))
        assert abs(zs.mean() - expect) <= 3 * se

    def test_insufficient(self, rng):
        with pytest.raises(InsufficientSamples):
            equiv_test_z(np.zeros(5, dtype=np.int64), np.zeros(5, dtype=np.int64), 0.5, 0.01, rng)


class TestEquivL2:
    def run_trials(self, p, q, d, b, eps_gap, trials, seed, sub=None):
        sub = sub or SubSupport.full(d)
        need, _, _ = equiv_l2_required(d, b, eps_gap, 1 / 3)
        far = 0
        for t in range(trials):
            rng = trial_rng(seed, t)
            sp = sample(p, need, rng)
            sq = sample(q, need, rng)
            res = equiv_l2(sp, sq, sub, b, eps_gap, 1 / 3, rng)
            far += res.outcome == "Far"
        return far

    def test_type_one_rate(self):
        d = 50
        u = Dist.uniform(d)
        far = self.run_trials(u, u, d, 0.15, 0.1, 200, 810)
        assert far <= 200 / 3

    def test_type_two_rate(self):
        d = 64
        eps_gap = 0.05
        p, q = planted_l2_pair(d, 2 * eps_gap)  # ||P-Q||_2 = 2 eps_gap
        far = self.run_trials(p, q, d, 0.15, eps_gap, 200, 811)
        assert far >= 2 * 200 / 3

    def test_norm_precheck_branch(self):
        # ||P^S||_2 far above the promise must trigger Far via the pre-check.
        d = 64
        b, eps_gap = 0.05, 0.05
        probs = np.full(d, 0.6 / d)
        probs[3] += 0.4  # ||P^S||_2 >= 0.4 >> 4b + 2 eps_gap
        p = Dist(probs)
        q = Dist.uniform(d)
        need, _, _ = equiv_l2_required(d, b, eps_gap, 1 / 3)
        branch_hits = 0
        far = 0
        for t in range(60):
            rng = trial_rng(812, t)
            res = equiv_l2(sample(p, need, rng), sample(q, need, rng),
                           SubSupport.full(d), b, eps_gap, 1 / 3, rng)
            far += res.outcome == "Far"
            branch_hits += any(r.get("branch") == "norm" for r in res.diagnostics["rep_details"])
        assert far >= 40
        assert branch_hits >= 40

    def test_asymmetric_promise(self):
        # only ||Q^S||_2 <= b promised; a heavy P must still be rejected
        d = 32
        probs = np.zeros(d)
        probs[0] = 1.0
        p = Dist(probs)
        q = Dist.uniform(d)
        far = self.run_trials(p, q, d, 1.2 / math.sqrt(d), 0.1, 60, 813)
        assert far >= 40

    def test_insufficient(self, rng):
        with pytest.raises(InsufficientSamples):
            equiv_l2(np.zeros(10, dtype=np.int64), np.zeros(10, dtype=np.int64),
                     SubSupport.full(50), 0.2, 0.05, 1 / 3, rng)


class TestEquivSmall:
    def test_empty_support_close(self, rng):
        res = equiv_small(np.zeros(100, dtype=np.int64), SubSupport(10, []), 0.0, 0.5, 1 / 3, rng)
        assert res.outcome == "CloseInHellinger"

    def test_no_mass_in_sub_support(self):
        d = 64
        sub = SubSupport(d, [60, 61, 62, 63])
        eta = 0.4
        hits = 0
        for t in range(60):
            rng = trial_rng(820, t)
            samples = sample(Dist.uniform(32), 4000, rng)  # mass only on [0, 32)
            res = equiv_small(samples, sub, eta / (10 * math.sqrt(4)), eta, 1 / 3, rng)
            hits += res.outcome == "CloseInHellinger"
        assert hits >= 40

    def test_planted_mass_not_equal(self):
        d = 64
        sub = SubSupport(d, [0])
        eta = 0.4
        probs = np.full(d, 0.5 / (d - 1))
        probs[0] = 0.5  # ||P^S||_2 = 0.5 >= tau = eta / sqrt(1)
        probs /= probs.sum()
        p = Dist(probs)
        hits = 0
        for t in range(60):
            rng = trial_rng(821, t)
            samples = sample(p, 6000, rng)
            res = equiv_small(samples, sub, eta / 10, eta, 1 / 3, rng)
            hits += res.outcome == "NotEqual"
        assert hits >= 40

    def test_boundary_strict_inequality(self, rng, monkeypatch):
        # c_P exactly tau/4 must classify as Close (reject only on strict >)
        sub = SubSupport(16, [0, 1, 2, 3])
        eta = 0.4
        tau = eta / 2.0
        monkeypatch.setattr(equiv_mod, "estimate_l2", lambda *a, **k: tau / 4.0)
        res = equiv_small(np.zeros(50_000, dtype=np.int64), sub, tau / 10, eta, 1 / 3, rng)
        assert res.outcome == "CloseInHellinger"

    def test_zeta_contract_checked(self, rng):
        with pytest.raises(InvalidThreshold):
            equiv_small(np.zeros(1000, dtype=np.int64), SubSupport(16, [0, 1]), 0.5, 0.1, 1 / 3, rng)


class TestAmplification:
    def test_reps_positive_and_odd(self):
        for delta in (1 / 3, 0.01, 1e-5):
            reps = amplification_reps(delta)
            assert reps >= 1
            assert reps % 2 == 1

    def test_paper_scale(self):
        reps = amplification_reps(1e-3, Constants.paper())
        assert reps >= 6 * math.log(1000.0) - 1
