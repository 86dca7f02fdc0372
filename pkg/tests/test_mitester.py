"""Tests for bucketing, the 2-D partition grid, product-sample simulation, and
the end-to-end independence tester."""

import math

import numpy as np
import pytest

from citest.config import trial_rng
from citest.distributions import (
    Dist,
    Joint2,
    gen_hard_mi,
    hellinger_sq,
    sample,
)
from citest.errors import InsufficientSamples, OddSampleCount
from citest.mitester import (
    bucket_index,
    build_grid_2d,
    category_gamma,
    category_norm_bound,
    learn_buckets,
    mi_budgets,
    mi_test,
    simulate_product_samples,
)


class TestLearnBuckets:
    def test_point_mass(self, rng):
        samples = np.full(7000, 3, dtype=np.int64)
        est = learn_buckets(samples, 10, 0.01, 0.01)
        assert est[3] == 1.0

    def test_factor_two_guarantee(self):
        # uniform(10) at tau=0.05: all estimates in [0.05, 0.2] in >= 99% of runs
        tau, zeta = 0.05, 0.01
        n = math.ceil(8 * math.log(4 * 10 / zeta) / tau)
        good = 0
        for t in range(300):
            rng = trial_rng(900, t)
            est = learn_buckets(sample(Dist.uniform(10), n, rng), 10, tau, zeta)
            good += bool(np.all((est >= 0.05) & (est <= 0.2)))
        assert good >= 297

    def test_zero_probability_index(self, rng):
        probs = np.zeros(6)
        probs[:3] = 1 / 3
        est = learn_buckets(sample(Dist(probs), 7000, rng), 6, 0.01, 0.01)
        assert np.all(est[3:] <= 0.02)

    def test_insufficient(self, rng):
        with pytest.raises(InsufficientSamples):
            learn_buckets(np.zeros(10, dtype=np.int64), 10, 0.001, 0.01)


class TestBucketIndex:
    def test_examples(self):
        # 0.5 in [e^-1, 1) -> 0; 0.1 in [e^-3, e^-2) -> 2
        assert bucket_index(np.array([0.5]), 10)[0] == 0
        assert bucket_index(np.array([0.1]), 10)[0] == 2

    def test_one_clamps_to_zero(self):
        assert bucket_index(np.array([1.0]), 10)[0] == 0

    def test_below_last_threshold(self):
        k = 7
        assert bucket_index(np.array([math.exp(-k) * 0.99, 0.0]), k).tolist() == [k, k]

    def test_boundary_goes_up(self):
        # q = e^-i sits in bucket i-1 (half-open intervals)
        for i in (1, 2, 5):
            assert bucket_index(np.array([math.exp(-i)]), 10)[0] == i - 1


class TestGrid2D:
    def test_partition_disjoint_exhaustive(self, rng):
        for _ in range(100):
            d_a, d_c = int(rng.integers(2, 20)), int(rng.integers(2, 20))
            qa = rng.dirichlet(np.ones(d_a))
            qc = rng.dirichlet(np.ones(d_c))
            grid = build_grid_2d(qa, qc, 5000, 0.3)
            seen = np.concatenate([sub.indices for sub in grid.categories.values()])
            assert seen.size == d_a * d_c
            assert np.array_equal(np.sort(seen), np.arange(d_a * d_c))

    def test_category_hellinger_sums_to_global(self, rng):
        p = Joint2.random(6, 7, rng)
        q = p.product_of_marginals()
        grid = build_grid_2d(q.marginal_a(), q.marginal_c(), 1000, 0.3)
        total = 0.0
        pf, qf = p.probs.ravel(), q.probs.ravel()
        for sub in grid.categories.values():
            total += 0.5 * np.sum((np.sqrt(pf[sub.indices]) - np.sqrt(qf[sub.indices])) ** 2)
        assert total == pytest.approx(hellinger_sq(p.probs, q.probs), abs=1e-12)

    def test_bucket_ratio_within_e_cubed(self, rng):
        # conditioned on factor-2 estimates, true masses within a non-last
        # bucket differ by at most e^3
        true = np.array([0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.22])
        est = true * np.exp(rng.uniform(-math.log(2), math.log(2), size=true.size))
        grid = build_grid_2d(est / est.sum(), est / est.sum(), 1000, 0.3)
        buckets = grid.bucket_of_a
        for i in range(grid.k_A):
            members = true[buckets == i]
            if members.size >= 2:
                assert members.max() / members.min() <= math.e**3 + 1e-12

    def test_heavy_category_gamma_formula(self):
        grid = build_grid_2d(np.full(8, 0.125), np.full(8, 0.125), 2000, 0.4)
        (i, j), = [k for k in grid.categories if grid.is_heavy(*k)]
        expected = math.sqrt(0.4 * math.exp(-(i + j + 2)) / (math.e**6 * grid.k_AC))
        assert category_gamma(grid, i, j, 0.4) == pytest.approx(expected)

    def test_heavy_hellinger_l2_bound(self, rng):
        # D_H^2(P^T, Q^T) <= e^6 ||P^T - Q^T||_2^2 / max(q_a q_c) within a
        # heavy category (all reference masses within e^3 per axis)
        qa = np.full(8, 0.125)
        qc = np.full(8, 0.125)
        q = np.outer(qa, qc)
        p = q * (1 + 0.2 * rng.standard_normal(q.shape))
        p = np.clip(p, 1e-6, None)
        p /= p.sum()
        d_h2 = 0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)
        l2_sq = np.sum((p - q) ** 2)
        assert d_h2 <= math.e**6 * l2_sq / np.max(q) + 1e-12

    def test_norm_bound_covers_truth(self, rng):
        qa = rng.dirichlet(np.ones(12))
        qc = rng.dirichlet(np.ones(12))
        grid = build_grid_2d(qa, qc, 2000, 0.4)
        cells = np.outer(qa, qc).ravel()
        for (i, j), sub in grid.categories.items():
            truth = math.sqrt(float(np.sum(cells[sub.indices] ** 2)))
            assert truth <= category_norm_bound(grid, i, j) * math.e**2 + 1e-9


class TestSimulateProduct:
    def test_definition(self):
        out = simulate_product_samples(np.array([[1, 1], [2, 2]]))
        assert out.tolist() == [[1, 2]]

    def test_point_mass(self):
        arr = np.tile([3, 4], (10, 1))
        out = simulate_product_samples(arr)
        assert np.all(out == [3, 4])

    def test_odd_count(self):
        with pytest.raises(OddSampleCount):
            simulate_product_samples(np.array([[1, 1], [2, 2], [3, 3]]))

    def test_empirical_matches_exact_product(self, rng):
        joint = Joint2.random(4, 5, rng)
        n = 1_000_000
        pairs = sample(joint, 2 * n, rng)
        out = simulate_product_samples(pairs)
        counts = np.zeros((4, 5))
        np.add.at(counts, tuple(out.T), 1)
        freqs = counts / n
        exact = joint.product_of_marginals().probs
        sigma = np.sqrt(exact * (1 - exact) / n)
        assert np.all(np.abs(freqs - exact) <= 5 * sigma + 1e-9)


class TestMITest:
    def _pools(self, inst, pool, rng):
        sp = sample(inst.joint, pool, rng)
        sq = simulate_product_samples(sample(inst.joint, 2 * pool, rng))
        return sp, sq

    def test_product_accepts(self):
        hits = 0
        for t in range(10):
            rng = trial_rng(910, t)
            inst = gen_hard_mi(16, 16, 8, 0.4, 0, rng)
            sp, sq = self._pools(inst, 750_000, rng)
            hits += mi_test(sp, sq, 16, 16, 0.4, rng).outcome == "Yes"
        assert hits >= 8

    def test_far_instance_rejects(self):
        hits = 0
        for t in range(10):
            rng = trial_rng(911, t)
            inst = gen_hard_mi(16, 16, 8, 0.4, 1, rng)
            sp, sq = self._pools(inst, 750_000, rng)
            hits += mi_test(sp, sq, 16, 16, 0.4, rng).outcome == "No"
        assert hits >= 8

    def test_insufficient_samples(self, rng):
        with pytest.raises(InsufficientSamples):
            mi_test(np.zeros((100, 2), dtype=np.int64), np.zeros((100, 2), dtype=np.int64),
                    16, 16, 0.4, rng)

    def test_diagnostics_record_categories(self):
        rng = trial_rng(912, 0)
        inst = gen_hard_mi(16, 16, 8, 0.4, 0, rng)
        sp, sq = self._pools(inst, 750_000, rng)
        verdict = mi_test(sp, sq, 16, 16, 0.4, rng)
        cats = verdict.diagnostics["categories"]
        assert len(cats) >= 1
        assert all("result" in c for c in cats)
        assert "samples_used" in verdict.diagnostics

    def test_budget_shapes(self):
        b = mi_budgets(16, 16, 0.4)
        assert b["k_AC"] == (math.ceil(math.log(256 / 0.4)) + 1) ** 2
        assert b["m"] == max(b["n_heavy"], b["n_mixed"])

    def test_zero_sample_category_is_same(self):
        # a zero-mass row creates a last-bucket category that receives no
        # samples; empty counts must read as Same, not fire
        rng = trial_rng(913, 0)
        probs = np.zeros((8, 8))
        probs[:6, :] = 1.0 / 48
        inst = Joint2(probs)  # rows 6, 7 carry no mass
        sp = sample(inst, 600_000, rng)
        sq = simulate_product_samples(sample(inst, 1_200_000, rng))
        verdict = mi_test(sp, sq, 8, 8, 0.4, rng)
        assert verdict.outcome == "Yes"
        # the zero-mass rows' category exists and reported Same
        cats = {c["cat"]: c["result"] for c in verdict.diagnostics["categories"]}
        assert any(i > 2 for (i, j) in cats)  # a last-bucket category was tested
        assert all(r in ("Same", "empty") for r in cats.values())
