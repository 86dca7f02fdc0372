"""Independence / MI tester: bucketing grid plus per-category l2 dispatch.

The tester receives samples of an unknown P over A x C and of a product
distribution Q = Q_A Q_C and decides P = Q versus D_H^2(P, Q) >= eps.  It
learns the marginals of Q, groups indices of comparable mass into buckets
(half-open e-folding intervals, with a last bucket catching everything below
resolution), and tests each category S_ij = A_i x C_j separately with the
sub-support l2 equivalence tester.  By the pigeonhole principle, a Hellinger
gap of eps forces at least one category to carry eps / k_AC of it, and within
a non-last bucket all reference masses agree up to e^3, which converts the
per-category Hellinger gap into an l2 gap gamma(i, j).

Per-category l2 thresholds keep the derived shapes

    heavy (i < k_A and j < k_C):  sqrt(eps * e^-(i+j+2) / (e^6 k_AC))
    mixed (last bucket on A or C): eps / (4 k_AC sqrt(|S_ij|))

times a calibration multiplier `mi_gamma_scale` that absorbs the worst-case
constants (including the Hellinger 1/2-normalization ambiguity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import Constants, DEFAULT_CONSTANTS
from .equiv import (
    SubSupport,
    amplification_reps,
    equiv_l2,
    equiv_l2_required,
    third_moment_budget,
)
from .errors import InsufficientSamples, InvalidThreshold, OddSampleCount
from .verdict import FAR, NO, YES, Verdict


def learn_buckets(samples: np.ndarray, d: int, tau: float, zeta: float) -> np.ndarray:
    """Empirical frequencies with the factor-2 guarantee at resolution tau.

    With |samples| >= 8 ln(4 d / zeta) / tau, every p_i >= tau is estimated
    within a factor 2 and every p_i <= tau is estimated below 2 tau, with
    probability >= 1 - zeta.
    """
    samples = np.asarray(samples, dtype=np.int64)
    required = int(math.ceil(8.0 * math.log(4.0 * d / zeta) / tau))
    if samples.size < required:
        raise InsufficientSamples(f"need {required} samples for tau={tau:.3g}, got {samples.size}")
    return np.bincount(samples, minlength=d) / samples.size


def bucket_index(q_hat: np.ndarray, k_last: int) -> np.ndarray:
    """Bucket of each estimate: i with e^-(i+1) <= q < e^-i for i < k_last,
    bucket k_last for anything below e^-k_last; q = 1 clamps to bucket 0."""
    q = np.asarray(q_hat, dtype=np.float64)
    out = np.full(q.shape, k_last, dtype=np.int64)
    pos = q >= math.exp(-k_last)
    with np.errstate(divide="ignore"):
        t = -np.log(q[pos])
    out[pos] = np.maximum(0, np.ceil(t - 1e-12).astype(np.int64) - 1)
    return out


@dataclass(frozen=True)
class PartitionGrid2D:
    """Bucket structure over A x C used for piecewise equivalence testing."""

    d_A: int
    d_C: int
    k_A: int
    k_C: int
    k_AC: int
    bucket_of_a: np.ndarray
    bucket_of_c: np.ndarray
    categories: dict = field(default_factory=dict)  # (i, j) -> SubSupport over A x C

    def is_heavy(self, i: int, j: int) -> bool:
        return i < self.k_A and j < self.k_C


def build_grid_2d(
    q_hat_a: np.ndarray,
    q_hat_c: np.ndarray,
    m: int,
    eps: float,
) -> PartitionGrid2D:
    """Partition A x C into categories of comparable reference mass.

    k_A = k_C = ceil(ln m) where m is the (calibrated) mixed-regime budget;
    k_AC = (ceil(ln(d_A d_C / eps)) + 1)^2.  Categories are disjoint and
    exhaustive; only non-empty ones are materialized.
    """
    d_A, d_C = len(q_hat_a), len(q_hat_c)
    k_a = max(1, math.ceil(math.log(max(m, 2))))
    k_ac = (math.ceil(math.log(d_A * d_C / eps)) + 1) ** 2
    ba = bucket_index(q_hat_a, k_a)
    bc = bucket_index(q_hat_c, k_a)
    categories: dict = {}
    host = d_A * d_C
    for i in np.unique(ba):
        a_idx = np.where(ba == i)[0]
        for j in np.unique(bc):
            c_idx = np.where(bc == j)[0]
            flat = (a_idx[:, None] * d_C + c_idx[None, :]).ravel()
            categories[(int(i), int(j))] = SubSupport(host, flat)
    return PartitionGrid2D(
        d_A=d_A, d_C=d_C, k_A=k_a, k_C=k_a, k_AC=k_ac,
        bucket_of_a=ba, bucket_of_c=bc, categories=categories,
    )


def category_gamma(grid: PartitionGrid2D, i: int, j: int, eps: float) -> float:
    """Unscaled l2 testing precision for category (i, j)."""
    size = grid.categories[(i, j)].size
    if grid.is_heavy(i, j):
        return math.sqrt(eps * math.exp(-(i + j + 2)) / (math.e**6 * grid.k_AC))
    return eps / (4.0 * grid.k_AC * math.sqrt(max(size, 1)))


def category_norm_bound(grid: PartitionGrid2D, i: int, j: int) -> float:
    """Worst-case bound on ||Q^S_ij||_2 from the bucket intervals."""
    size = grid.categories[(i, j)].size
    base = math.exp(-(i + j) + 2)
    return min(math.sqrt(max(size, 1)) * base, math.sqrt(base), 1.0)


def simulate_product_samples(samples: np.ndarray) -> np.ndarray:
    """Turn 2m paired samples from P_AC into m i.i.d. samples from P_A x P_C.

    Consumes consecutive pairs (a1, c1), (a2, c2) -> (a1, c2); output is
    i.i.d. from the product of marginals whenever the input is i.i.d.
    """
    arr = np.asarray(samples, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise OddSampleCount("expected an (n, 2) array of (a, c) pairs")
    if arr.shape[0] % 2 != 0:
        raise OddSampleCount(f"need an even number of samples, got {arr.shape[0]}")
    return np.column_stack([arr[0::2, 0], arr[1::2, 1]])


def _as_flat(samples: np.ndarray, d_A: int, d_C: int) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.int64)
    if arr.ndim == 2:
        return arr[:, 0] * d_C + arr[:, 1]
    return arr


def mi_budgets(d_A: int, d_C: int, eps: float, constants: Constants = DEFAULT_CONSTANTS) -> dict:
    """Budget scaffold: k_AC, heavy/mixed budgets, learning multiset size."""
    k_ac = (math.ceil(math.log(d_A * d_C / eps)) + 1) ** 2
    n_heavy = math.ceil(constants.c_mi_heavy * k_ac * math.sqrt(d_A * d_C) / eps)
    n_mixed = math.ceil(
        constants.c_mi_mixed
        * k_ac**2
        * min(d_A**0.75 * d_C**0.25 / eps, d_A ** (2 / 3) * d_C ** (1 / 3) / eps ** (4 / 3))
    )
    m = max(n_heavy, n_mixed)
    learn_n = math.ceil(8.0 * constants.c_mi_learn * m * math.log(1000.0 * d_A * d_C))
    return {
        "k_AC": k_ac,
        "n_heavy": int(n_heavy),
        "n_mixed": int(n_mixed),
        "m": int(m),
        "learn_n": int(learn_n),
        "delta": 1.0 / (1000.0 * k_ac),
    }


def mi_test(
    samples_p: np.ndarray,
    samples_q: np.ndarray,
    d_A: int,
    d_C: int,
    eps: float,
    seed_or_rng,
    constants: Constants = DEFAULT_CONSTANTS,
) -> Verdict:
    """Equivalence test of P_AC against a promised-product Q over A x C.

    Yes is consistent with P = Q, No with D_H^2(P, Q) >= eps; error
    probability <= 1/3 on both sides at the calibrated budgets.  Learning
    samples are removed from the Q pool before any category is tested, and
    every category gets fresh disjoint chunks (no reuse).
    """
    if not (0 < eps < 1):
        raise InvalidThreshold(f"eps must be in (0,1), got {eps}")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    pool_p = _as_flat(samples_p, d_A, d_C)
    pool_q = _as_flat(samples_q, d_A, d_C)
    pool_p = pool_p[rng.permutation(pool_p.size)]
    pool_q = pool_q[rng.permutation(pool_q.size)]

    budget = mi_budgets(d_A, d_C, eps, constants)
    learn_n, delta = budget["learn_n"], budget["delta"]
    if pool_q.size < 2 * learn_n:
        raise InsufficientSamples(f"Q pool too small for learning: need {2 * learn_n}")
    tau = 8.0 * math.log(4000.0 * max(d_A, d_C)) / learn_n
    q_hat_a = learn_buckets(pool_q[:learn_n] // d_C, d_A, tau, 1e-3)
    q_hat_c = learn_buckets(pool_q[learn_n : 2 * learn_n] % d_C, d_C, tau, 1e-3)
    ptr_q = 2 * learn_n
    ptr_p = 0

    grid = build_grid_2d(q_hat_a, q_hat_c, budget["n_mixed"], eps)
    cells_q_hat = np.outer(q_hat_a, q_hat_c)

    diagnostics = {"budget": budget, "categories": []}
    for (i, j), sub in sorted(grid.categories.items()):
        if sub.size == 0:
            diagnostics["categories"].append({"cat": (i, j), "result": "empty"})
            continue
        gamma = category_gamma(grid, i, j, eps) * constants.mi_gamma_scale
        cells = cells_q_hat.ravel()[sub.indices]
        norm_hat = float(np.sqrt(np.sum(cells**2)))
        b_cat = min(category_norm_bound(grid, i, j), max(2.0 * norm_hat, gamma))
        need, n_norm, _ = equiv_l2_required(sub.host_size, b_cat, gamma, delta, constants)
        # dense cells need extra samples for the cubic-moment noise floor
        budget_gamma = max(gamma, 0.3 * norm_hat)
        n_third = third_moment_budget(float(np.sum(cells**3)), budget_gamma, constants)
        reps = amplification_reps(delta, constants)
        need = max(need, reps * (n_norm + 2 * n_third))
        if ptr_p + need > pool_p.size or ptr_q + need > pool_q.size:
            raise InsufficientSamples(
                f"category {(i, j)} needs {need} samples per side; "
                f"P remaining {pool_p.size - ptr_p}, Q remaining {pool_q.size - ptr_q}",
                needed=max(ptr_p, ptr_q) + need,
            )
        chunk_p = pool_p[ptr_p : ptr_p + need]
        chunk_q = pool_q[ptr_q : ptr_q + need]
        ptr_p += need
        ptr_q += need
        res = equiv_l2(chunk_p, chunk_q, sub, b_cat, gamma, delta, rng, constants)
        diagnostics["categories"].append(
            {"cat": (i, j), "gamma": gamma, "b": b_cat, "consumed": need, "result": res.outcome}
        )
        if res.outcome == FAR:
            diagnostics["samples_used"] = (ptr_p, ptr_q)
            diagnostics["fired"] = (i, j)
            return Verdict(NO, diagnostics)
    diagnostics["samples_used"] = (ptr_p, ptr_q)
    return Verdict(YES, diagnostics)
