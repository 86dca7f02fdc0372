"""Conditional-independence tester over A x B x C.

The conditioning alphabet is split at nu = 1/(2 N_S) by empirical mass into a
small regime B_S (rare b, handled by collision statistics) and a large regime
B_L (common b, handled by exact queue-based simulation of the reference
distribution P_AB P_BC / P_B).  The two regimes are tested independently at
eps/2 each.

Small regime.  Collisions in the B coordinate are the only way to fake
conditionally independent samples for rare b.  Two pairing simulators process
a Poissonized multiset in random order: one keeps the first triplet of each
same-b pair (mimicking P itself), the other splices the first triplet's A
with the second's C (mimicking the conditionally independent reference).
Four independent runs feed the Z statistic, whose mean is exactly
sum (E[X_abc] - E[Y_abc])^2 = sum (p_ac|b - p_a|b p_c|b)^2 E[X_b]^2,
zero precisely under Markovianity on B_S.

Large regime.  A 4/5 : 1/5 split fills per-b FIFO queues of A coordinates and
then rewrites the A coordinate of fresh samples from the queues, which
reproduces p_ab p_bc / p_b exactly.  The rewritten samples feed the same
bucket-grid machinery as the MI tester, now on a three-axis partition of
(p_ab, p_bc, p_b) with heavy / mixed / light category dispatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import Constants, DEFAULT_CONSTANTS
from .distributions import CountTensor
from .equiv import (
    SubSupport,
    ZSplit,
    amplification_reps,
    equiv_l2,
    equiv_l2_required,
    equiv_small,
    equiv_small_required,
    third_moment_budget,
    z_statistic,
)
from .errors import InsufficientSamples, InvalidThreshold
from .mitester import bucket_index, learn_buckets
from .verdict import ABORT, FAR, NO, NOT_EQUAL, YES, Verdict


@dataclass(frozen=True)
class RegimeSplit:
    """B split at nu = 1/(2 N_S) by empirical mass (ties go to the large side)."""

    nu: float
    b_small: np.ndarray  # boolean mask over B
    b_large: np.ndarray

    def __post_init__(self):
        if np.any(self.b_small & self.b_large) or not np.all(self.b_small | self.b_large):
            raise InvalidThreshold("B_S and B_L must partition B")


def split_regimes(p_hat_b: np.ndarray, nu: float) -> RegimeSplit:
    small = np.asarray(p_hat_b) < nu
    return RegimeSplit(nu=nu, b_small=small, b_large=~small)


# ---------------------------------------------------------------------------
# Small regime


@dataclass(frozen=True)
class PairingMoments:
    """Closed-form mean and second moment of the per-b pairing output count."""

    x_b: float
    e1: float
    e2: float

    def __post_init__(self):
        if not (-1e-12 <= self.e1 <= self.e2 + 1e-12 <= 0.75 * self.x_b**2 + 1e-9):
            raise InvalidThreshold(f"moment ordering violated: {self}")


def pairing_moments(x_b: float) -> PairingMoments:
    """Moments of the number of pairs formed from Poi(x_b) same-b samples.

    e1 = x/2 - e^-x sinh(x)/2 and e2 = x^2/4 - x e^-2x / 4 + e^-x sinh(x)/4.
    """
    if x_b < 0:
        raise InvalidThreshold("x_b must be non-negative")
    x = float(x_b)
    e1 = x / 2.0 - math.exp(-x) * math.sinh(x) / 2.0
    e2 = x**2 / 4.0 - x * math.exp(-2.0 * x) / 4.0 + math.exp(-x) * math.sinh(x) / 4.0
    return PairingMoments(x_b=x, e1=e1, e2=e2)


def _pair_by_b(samples: np.ndarray, b_small: np.ndarray, rng: np.random.Generator):
    """Shuffle, group by b in B_S, and pair consecutively within each group.

    Returns (first, second) triplet arrays, one row per completed pair;
    exactly floor(m_b / 2) pairs form for m_b stored samples at b.
    """
    arr = np.asarray(samples, dtype=np.int64)
    keep = b_small[arr[:, 1]]
    arr = arr[keep]
    if arr.shape[0] < 2:
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty
    arr = arr[rng.permutation(arr.shape[0])]
    order = np.argsort(arr[:, 1], kind="stable")
    arr = arr[order]
    b = arr[:, 1]
    n = arr.shape[0]
    new_group = np.r_[True, b[1:] != b[:-1]]
    group_start = np.maximum.accumulate(np.where(new_group, np.arange(n), 0))
    pos = np.arange(n) - group_start
    next_same = np.r_[~new_group[1:], False]
    is_first = (pos % 2 == 0) & next_same
    return arr[is_first], arr[np.where(is_first)[0] + 1]


def sim_abc(
    samples: np.ndarray,
    b_small: np.ndarray,
    shape: tuple,
    rng: np.random.Generator,
) -> CountTensor:
    """Pair same-b samples (b in B_S) and count the first triplet of each pair."""
    first, _ = _pair_by_b(samples, b_small, rng)
    return CountTensor.from_samples(first, shape)


def sim_abc_ci(
    samples: np.ndarray,
    b_small: np.ndarray,
    shape: tuple,
    rng: np.random.Generator,
) -> CountTensor:
    """Pair same-b samples and count (a_first, b, c_second): the spliced,
    conditionally independent version of sim_abc."""
    first, second = _pair_by_b(samples, b_small, rng)
    spliced = np.column_stack([first[:, 0], first[:, 1], second[:, 2]])
    return CountTensor.from_samples(spliced, shape)


def small_regime_threshold(n_tilde: float, eps_s: float, d_A: int, d_B: int, d_C: int) -> float:
    return n_tilde**4 * eps_s**4 / (2.0 * 4**7 * d_A * d_B**3 * d_C)


def cmi_small_test(
    samples: np.ndarray,
    b_small: np.ndarray,
    eps_s: float,
    n_s: int,
    seed_or_rng,
    dims: tuple,
) -> Verdict:
    """Collision Z-test of the small regime; requires p_b <= 1/n_s on B_S.

    Draws four Poi(n_s / 8) multiset sizes (Abort if they exceed the pool),
    runs two pairing simulators twice each on disjoint multisets, and accepts
    exactly when Z stays below n_tilde^4 eps_s^4 / (2 * 4^7 d_A d_B^3 d_C).
    """
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    arr = np.asarray(samples, dtype=np.int64)
    if arr.shape[0] < n_s:
        raise InsufficientSamples(f"need {n_s} samples, got {arr.shape[0]}")
    n_tilde = n_s / 8.0
    sizes = [int(rng.poisson(n_tilde)) for _ in range(4)]
    diag = {"n_tilde": n_tilde, "poisson_sizes": sizes}
    if sum(sizes) > n_s:
        return Verdict(ABORT, diag)
    arr = arr[rng.permutation(arr.shape[0])]
    bounds = np.cumsum([0] + sizes)
    chunks = [arr[bounds[k] : bounds[k + 1]] for k in range(4)]
    split = ZSplit(
        x=sim_abc(chunks[0], b_small, dims, rng),
        x_prime=sim_abc(chunks[1], b_small, dims, rng),
        y=sim_abc_ci(chunks[2], b_small, dims, rng),
        y_prime=sim_abc_ci(chunks[3], b_small, dims, rng),
    )
    z = z_statistic(split)
    threshold = small_regime_threshold(n_tilde, eps_s, *dims)
    diag.update({"z": z, "threshold": threshold, "samples_used": sum(sizes)})
    return Verdict(YES if z < threshold else NO, diag)


# ---------------------------------------------------------------------------
# Large regime: queue-based reference simulation


def sim_abc_ci_large(
    samples: np.ndarray,
    b_large: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray | None, bool]:
    """Simulate samples from P_AB P_BC / P_B on the large regime.

    4/5 of the (shuffled) input fills per-b FIFO queues with A coordinates;
    each remaining sample (a, b, c) with b in B_L is emitted as (a', b, c)
    with a' dequeued from queue b, unchanged otherwise.  Returns
    (emissions, aborted); aborted is True when some queue runs empty, in
    which case emissions is None.
    """
    arr = np.asarray(samples, dtype=np.int64)
    n = arr.shape[0]
    arr = arr[rng.permutation(n)]
    n_fill = (4 * n) // 5
    fill, emit = arr[:n_fill], arr[n_fill:]

    d_b = b_large.size
    queue_len = np.bincount(fill[:, 1], minlength=d_b)
    offsets = np.r_[0, np.cumsum(queue_len)[:-1]]
    order = np.argsort(fill[:, 1], kind="stable")
    queued_a = fill[order, 0]  # per-b FIFO blocks in arrival order

    out = emit.copy()
    hits = b_large[emit[:, 1]]
    if np.any(hits):
        hit_b = emit[hits, 1]
        # occurrence index of each b within the emission stream (arrival order)
        sort_idx = np.argsort(hit_b, kind="stable")
        sorted_b = hit_b[sort_idx]
        new_grp = np.r_[True, sorted_b[1:] != sorted_b[:-1]]
        grp_start = np.maximum.accumulate(np.where(new_grp, np.arange(sorted_b.size), 0))
        occurrence = np.empty(sorted_b.size, dtype=np.int64)
        occurrence[sort_idx] = np.arange(sorted_b.size) - grp_start
        if np.any(occurrence >= queue_len[hit_b]):
            return None, True
        out[hits, 0] = queued_a[offsets[hit_b] + occurrence]
    return out, False


# ---------------------------------------------------------------------------
# Large regime: three-axis partition grid


@dataclass(frozen=True)
class PartitionGrid3D:
    """Bucket structure over {(a, b, c) : b in B_L} from p_ab, p_bc, p_b."""

    dims: tuple
    k_A: int
    k_B: int
    k_C: int
    k_ABC: float
    bucket_of_ab: np.ndarray  # (d_A, d_B)
    bucket_of_bc: np.ndarray  # (d_B, d_C)
    bucket_of_b: np.ndarray  # (d_B,)
    b_large: np.ndarray
    categories: dict = field(default_factory=dict)  # (i, j, k) -> SubSupport
    b_in_bucket: dict = field(default_factory=dict)  # k -> count of large b

    def is_heavy(self, i: int, j: int) -> bool:
        return i < self.k_A and j < self.k_C

    def is_light(self, i: int, j: int) -> bool:
        return i == self.k_A and j == self.k_C


def build_grid_3d(
    p_hat_ab: np.ndarray,
    p_hat_bc: np.ndarray,
    p_hat_b: np.ndarray,
    m: int,
    nu: float,
    eps_l: float,
    b_large: np.ndarray,
) -> PartitionGrid3D:
    """Three-axis e-folding partition of the large regime.

    k_A = k_C = ceil(ln m) catch pair masses below e^-k_A in last buckets;
    the b axis runs down to nu with k_B = ceil(ln(1/nu)).  Categories
    partition {(a, b, c) : b in B_L}.
    """
    d_A, d_B = p_hat_ab.shape
    d_C = p_hat_bc.shape[1]
    k_a = max(1, math.ceil(math.log(max(m, 2))))
    k_b = max(1, math.ceil(math.log(1.0 / nu)))
    k_abc = math.log(d_A * d_B * d_C / eps_l) ** 3
    bab = bucket_index(p_hat_ab.ravel(), k_a).reshape(d_A, d_B)
    bbc = bucket_index(p_hat_bc.ravel(), k_a).reshape(d_B, d_C)
    bb = bucket_index(p_hat_b, k_b)

    host = d_A * d_B * d_C
    categories: dict = {}
    b_in_bucket: dict = {}
    large_bs = np.where(b_large)[0]
    for k in np.unique(bb[large_bs]):
        bs_k = large_bs[bb[large_bs] == k]
        b_in_bucket[int(k)] = int(bs_k.size)
        # all (a, b, c) cells with b in this bucket, grouped by (i, j)
        for b in bs_k:
            i_of_a = bab[:, b]
            j_of_c = bbc[b, :]
            for i in np.unique(i_of_a):
                a_idx = np.where(i_of_a == i)[0]
                for j in np.unique(j_of_c):
                    c_idx = np.where(j_of_c == j)[0]
                    flat = (
                        a_idx[:, None] * (d_B * d_C) + b * d_C + c_idx[None, :]
                    ).ravel()
                    key = (int(i), int(j), int(k))
                    if key in categories:
                        categories[key] = np.concatenate([categories[key], flat])
                    else:
                        categories[key] = flat
    cat_subs = {key: SubSupport(host, idx) for key, idx in categories.items()}
    return PartitionGrid3D(
        dims=(d_A, d_B, d_C), k_A=k_a, k_B=k_b, k_C=k_a, k_ABC=k_abc,
        bucket_of_ab=bab, bucket_of_bc=bbc, bucket_of_b=bb,
        b_large=b_large, categories=cat_subs, b_in_bucket=b_in_bucket,
    )


def category_gamma_3d(
    grid: PartitionGrid3D, i: int, j: int, k: int, eps_l: float
) -> float:
    """Unscaled l2 testing precision for category L_ij^k."""
    size = grid.categories[(i, j, k)].size
    if grid.is_light(i, j):
        b_k = max(grid.b_in_bucket.get(k, 1), 1)
        return math.exp(k + 1) * eps_l / (2.0 * b_k * math.sqrt(max(size, 1)))
    if grid.is_heavy(i, j):
        return math.sqrt(eps_l * math.exp(k - (i + j + 3)) / (math.e**9 * grid.k_ABC))
    return eps_l / (4.0 * grid.k_ABC * math.sqrt(max(size, 1)))


def category_norm_bound_3d(grid: PartitionGrid3D, i: int, j: int, k: int) -> float:
    size = grid.categories[(i, j, k)].size
    base = math.exp(k + 4 - (i + j))
    return min(math.e**9 * min(math.sqrt(max(size, 1)) * base, math.sqrt(base)), 1.0)


def cmi_budgets(
    d_A: int, d_B: int, d_C: int, eps: float, constants: Constants = DEFAULT_CONSTANTS
) -> dict:
    """Budget scaffold for the top-level split and both regimes (eps halved)."""
    eps_s = eps / 2.0
    eps_l = eps / 2.0
    n_s = math.ceil(
        constants.c_ns
        * min(
            d_A**0.25 * d_B**0.875 * d_C**0.25 / eps_s,
            d_A ** (2 / 7) * d_B ** (6 / 7) * d_C ** (2 / 7) / eps_s ** (8 / 7),
        )
    )
    k_abc = math.log(d_A * d_B * d_C / eps_l) ** 3
    n_heavy = math.ceil(constants.c_cmi_heavy * k_abc * math.sqrt(d_A * d_B * d_C) / eps_l)
    n_mixed = math.ceil(
        constants.c_cmi_mixed
        * k_abc**2
        * min(
            (d_A * d_B) ** 0.75 * d_C**0.25 / eps_l,
            (d_A * d_B) ** (2 / 3) * d_C ** (1 / 3) / eps_l ** (4 / 3),
        )
    )
    nu = 1.0 / (2.0 * n_s)
    n_light = math.ceil(
        10.0
        * max(
            constants.c_cmi_light * k_abc * d_A**0.5 * d_B**0.75 * d_C**0.5 / eps_l / 10.0,
            math.log(1000.0 * k_abc) / nu / 10.0,
        )
    )
    m = max(n_heavy, n_mixed, n_light)
    learn_n = math.ceil(8.0 * constants.c_cmi_learn * m * k_abc)
    nu_learn_n = math.ceil(32.0 * math.log(1000.0 * d_B) * n_s)
    return {
        "eps_s": eps_s,
        "eps_l": eps_l,
        "n_s": int(n_s),
        "nu": nu,
        "k_ABC": k_abc,
        "n_heavy": int(n_heavy),
        "n_mixed": int(n_mixed),
        "n_light": int(n_light),
        "m": int(m),
        "learn_n": int(learn_n),
        "nu_learn_n": int(nu_learn_n),
        "delta": 1.0 / (1000.0 * k_abc),
    }


def cmi_large_test(
    samples: np.ndarray,
    b_large: np.ndarray,
    eps_l: float,
    nu: float,
    seed_or_rng,
    dims: tuple,
    constants: Constants = DEFAULT_CONSTANTS,
    budget: dict | None = None,
) -> Verdict:
    """Test the large regime for conditional independence; needs p_b >= nu/2 on B_L.

    Learns p_ab, p_bc, p_b; partitions the large regime into categories;
    simulates reference samples with sim_abc_ci_large; then per category runs
    either the small-norm shortcut (heavy categories with a tiny estimated
    reference norm) or sub-support l2 equivalence at the category's gamma.
    Light categories (both last buckets) are first restricted to b in B_L on
    both streams; streams shorter than 8 ln(1000 k_ABC) report a vacuous Yes
    with a diagnostic flag.
    """
    d_A, d_B, d_C = dims
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    if not np.any(b_large):
        return Verdict(YES, {"categories": [], "reason": "empty large regime"})
    arr = np.asarray(samples, dtype=np.int64)
    arr = arr[rng.permutation(arr.shape[0])]
    if budget is None:
        budget = cmi_budgets(d_A, d_B, d_C, 2.0 * eps_l, constants)
    learn_n, delta = budget["learn_n"], budget["delta"]
    if arr.shape[0] < 3 * learn_n:
        raise InsufficientSamples(f"need {3 * learn_n} samples for learning")

    flat_ab = arr[:learn_n, 0] * d_B + arr[:learn_n, 1]
    flat_bc = arr[learn_n : 2 * learn_n, 1] * d_C + arr[learn_n : 2 * learn_n, 2]
    tau_ab = 8.0 * math.log(4000.0 * d_A * d_B) / learn_n
    p_hat_ab = learn_buckets(flat_ab, d_A * d_B, tau_ab, 1e-3).reshape(d_A, d_B)
    p_hat_bc = learn_buckets(flat_bc, d_B * d_C, tau_ab, 1e-3).reshape(d_B, d_C)
    p_hat_b = learn_buckets(arr[2 * learn_n : 3 * learn_n, 1], d_B, tau_ab, 1e-3)
    ptr = 3 * learn_n

    grid = build_grid_3d(p_hat_ab, p_hat_bc, p_hat_b, budget["m"], nu, eps_l, b_large)
    safe_b = np.where(p_hat_b > 0, p_hat_b, 1.0)
    q_hat = p_hat_ab[:, :, None] * p_hat_bc[None, :, :] / safe_b[None, :, None]
    q_hat_flat = q_hat.ravel()

    diagnostics = {"budget": budget, "categories": []}
    host = d_A * d_B * d_C
    min_light = math.ceil(8.0 * math.log(1000.0 * budget["k_ABC"]))

    # Plan per-category consumption, then simulate the reference pool in one go.
    ell_hat = float(np.sum(p_hat_b[b_large]))  # mass the light conditioning keeps
    inflate = 1.0 / max(ell_hat, 0.02)
    plan = []
    for key, sub in sorted(grid.categories.items()):
        i, j, k = key
        gamma = category_gamma_3d(grid, i, j, k, eps_l) * constants.cmi_gamma_scale
        eps_ijk = eps_l / math.sqrt(max(sub.size, 1))
        norm_hat = float(np.sqrt(np.sum(q_hat_flat[sub.indices] ** 2)))
        shortcut = (
            grid.is_heavy(i, j)
            and norm_hat < eps_ijk / (10.0 * math.e**9 * math.sqrt(max(sub.size, 1)))
        )
        if shortcut:
            need_p = equiv_small_required(host, sub.size, eps_ijk, delta, constants)
            need_q = 0
            b_cat = None
        else:
            b_cat = min(category_norm_bound_3d(grid, i, j, k), max(2.0 * norm_hat, gamma))
            need_p, n_norm, _ = equiv_l2_required(host, b_cat, gamma, delta, constants)
            budget_gamma = max(gamma, 0.3 * norm_hat)
            n_third = third_moment_budget(
                float(np.sum(q_hat_flat[sub.indices] ** 3)), budget_gamma, constants
            )
            reps = amplification_reps(delta, constants)
            need_p = max(need_p, reps * (n_norm + 2 * n_third))
            if grid.is_light(i, j):
                need_p = math.ceil(need_p * inflate)
            need_q = need_p
        plan.append(
            {"key": key, "gamma": gamma, "eps_ijk": eps_ijk, "norm_hat": norm_hat,
             "shortcut": shortcut, "need_p": need_p, "need_q": need_q, "b_cat": b_cat}
        )

    total_q = sum(p["need_q"] for p in plan)
    sim_in = 5 * total_q + 50
    total_p = sum(p["need_p"] for p in plan)
    if ptr + total_p + sim_in > arr.shape[0]:
        raise InsufficientSamples(
            f"need {ptr + total_p + sim_in} samples total, got {arr.shape[0]}",
            needed=ptr + total_p + sim_in,
        )
    sim_out, aborted = sim_abc_ci_large(arr[ptr : ptr + sim_in], b_large, rng)
    if aborted:
        return Verdict(ABORT, {"stage": "sim_abc_ci_large", **diagnostics})
    ptr += sim_in
    q_pool = sim_out[:, 0] * (d_B * d_C) + sim_out[:, 1] * d_C + sim_out[:, 2]
    q_ptr = 0

    for p in plan:
        i, j, k = p["key"]
        sub = grid.categories[p["key"]]
        chunk_p3 = arr[ptr : ptr + p["need_p"]]
        ptr += p["need_p"]
        chunk_p = chunk_p3[:, 0] * (d_B * d_C) + chunk_p3[:, 1] * d_C + chunk_p3[:, 2]
        entry = {"cat": p["key"], "gamma": p["gamma"], "shortcut": p["shortcut"],
                 "consumed": p["need_p"]}
        if p["shortcut"]:
            res = equiv_small(
                chunk_p, sub, math.e**9 * p["norm_hat"], p["eps_ijk"], delta, rng, constants
            )
            entry["result"] = res.outcome
            diagnostics["categories"].append(entry)
            if res.outcome == NOT_EQUAL:
                diagnostics["fired"] = p["key"]
                return Verdict(NO, diagnostics)
            continue
        chunk_q = q_pool[q_ptr : q_ptr + p["need_q"]]
        q_ptr += p["need_q"]
        light = grid.is_light(i, j)
        if light:
            chunk_p = chunk_p[b_large[chunk_p3[:, 1]]]
            chunk_q = chunk_q[b_large[(chunk_q // d_C) % d_B]]
            if min(chunk_p.size, chunk_q.size) < min_light:
                entry["result"] = "vacuous-light"
                diagnostics["categories"].append(entry)
                continue
        res = equiv_l2(
            chunk_p, chunk_q, sub, p["b_cat"], p["gamma"], delta, rng, constants,
            allow_short=light,
        )
        entry["result"] = res.outcome
        diagnostics["categories"].append(entry)
        if res.outcome == FAR:
            diagnostics["fired"] = p["key"]
            diagnostics["samples_used"] = (ptr, q_ptr)
            return Verdict(NO, diagnostics)
    diagnostics["samples_used"] = (ptr, q_ptr)
    return Verdict(YES, diagnostics)


def cmi_test(
    samples: np.ndarray,
    d_A: int,
    d_B: int,
    d_C: int,
    eps: float,
    seed_or_rng,
    constants: Constants = DEFAULT_CONSTANTS,
) -> Verdict:
    """Full conditional-independence test of P_ABC in squared Hellinger distance.

    Yes is consistent with an exact Markov chain A - B - C, No with
    D_H^2(P_ABC, P_AB P_BC / P_B) >= eps.  Removes disjoint multisets for the
    regime split, learns p_b, splits B at nu = 1/(2 N_S) (ties large), and
    runs the small- and large-regime testers at eps/2 each; Yes only if both
    accept, Abort if either aborts.
    """
    if not (0 < eps < 1):
        raise InvalidThreshold(f"eps must be in (0,1), got {eps}")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    arr = np.asarray(samples, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidThreshold("expected an (n, 3) array of (a, b, c) triplets")
    arr = arr[rng.permutation(arr.shape[0])]

    budget = cmi_budgets(d_A, d_B, d_C, eps, constants)
    n_s, nu = budget["n_s"], budget["nu"]
    nu_learn_n = budget["nu_learn_n"]
    if arr.shape[0] < nu_learn_n + n_s:
        raise InsufficientSamples(
            f"need at least {nu_learn_n + n_s} samples before the large regime"
        )
    p_hat_b = np.bincount(arr[:nu_learn_n, 1], minlength=d_B) / nu_learn_n
    regimes = split_regimes(p_hat_b, nu)
    ptr = nu_learn_n

    res_small = cmi_small_test(
        arr[ptr : ptr + n_s], regimes.b_small, budget["eps_s"], n_s, rng, (d_A, d_B, d_C)
    )
    ptr += n_s
    if res_small.is_abort:
        return Verdict(ABORT, {"stage": "small", "small": res_small.diagnostics})

    res_large = cmi_large_test(
        arr[ptr:], regimes.b_large, budget["eps_l"], nu, rng, (d_A, d_B, d_C),
        constants, budget,
    )
    if res_large.is_abort:
        return Verdict(ABORT, {"stage": "large", "large": res_large.diagnostics})

    diagnostics = {
        "budget": budget,
        "b_small_count": int(regimes.b_small.sum()),
        "small": res_small.diagnostics,
        "large": res_large.diagnostics,
    }
    outcome = YES if (res_small.outcome == YES and res_large.outcome == YES) else NO
    return Verdict(outcome, diagnostics)
