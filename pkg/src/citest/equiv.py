"""Equivalence-testing primitives.

Everything here works on 1-D arrays of flat outcome indices over a host
support [d].  Three building blocks:

* collision-based l2-norm estimation on a sub-support (with dummy-index
  flattening of the complement),
* a Z-statistic tester Z = sum_i X_i X_i' - 2 X_i Y_i + Y_i Y_i' whose mean
  is sum_i (E[X_i] - E[Y_i])^2 regardless of correlations within each count
  set, used both standalone and as the l2-equivalence engine, and
* the small-norm shortcut that certifies Hellinger closeness from a norm
  estimate alone.

Sub-support equivalence reduces to whole-support testing by flattening: a
sample outside S is remapped to one of ceil(4/eps^2) dummy indices chosen
uniformly, which changes the squared l2 distance by exactly
(P[S]-Q[S])^2 / n_dummy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import Constants, DEFAULT_CONSTANTS
from .distributions import CountTensor
from .errors import DimensionMismatch, InsufficientSamples, InvalidThreshold
from .verdict import CLOSE_IN_HELLINGER, FAR, NOT_EQUAL, NO, SAME, YES, Verdict


@dataclass(frozen=True)
class SubSupport:
    """A subset of outcome indices within a host support [host_size]."""

    host_size: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.host_size):
            raise DimensionMismatch("sub-support index out of host bounds")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    @classmethod
    def full(cls, host_size: int) -> "SubSupport":
        return cls(host_size, np.arange(host_size))

    def position_map(self) -> np.ndarray:
        """host index -> position within S, or -1 outside S."""
        pos = np.full(self.host_size, -1, dtype=np.int64)
        pos[self.indices] = np.arange(self.size)
        return pos


@dataclass(frozen=True)
class ZSplit:
    """Four count sets from disjoint sample multisets feeding the Z statistic."""

    x: CountTensor
    x_prime: CountTensor
    y: CountTensor
    y_prime: CountTensor


def poissonize(n_target: float, rng: np.random.Generator) -> int:
    """One draw from Poi(n_target); exact for all means, deterministic per seed."""
    if n_target < 0:
        raise ValueError("Poisson mean must be non-negative")
    if n_target == 0:
        return 0
    return int(rng.poisson(n_target))


def _sparse_dot(a: CountTensor, b: CountTensor) -> float:
    common, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
    if common.size == 0:
        return 0.0
    return float(np.dot(a.counts[ia].astype(np.float64), b.counts[ib].astype(np.float64)))


def z_statistic(split: ZSplit) -> float:
    """Z = sum_i X_i X_i' - 2 X_i Y_i + Y_i Y_i' over matching shapes."""
    shapes = {split.x.shape, split.x_prime.shape, split.y.shape, split.y_prime.shape}
    if len(shapes) != 1:
        raise DimensionMismatch(f"count tensors disagree on shape: {shapes}")
    return (
        _sparse_dot(split.x, split.x_prime)
        - 2.0 * _sparse_dot(split.x, split.y)
        + _sparse_dot(split.y, split.y_prime)
    )


def flatten_samples(
    samples: np.ndarray,
    sub: SubSupport,
    n_dummy: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Map samples into [|S| + n_dummy]: S keeps its order, the rest is spread
    uniformly over the dummy block."""
    pos = sub.position_map()
    mapped = pos[np.asarray(samples, dtype=np.int64)]
    outside = mapped < 0
    n_out = int(outside.sum())
    if n_out:
        mapped[outside] = sub.size + rng.integers(0, n_dummy, size=n_out)
    return mapped


# ---------------------------------------------------------------------------
# l2-norm estimation


def _collision_norm_sq(samples: np.ndarray) -> float:
    """Unbiased collision estimate of ||P||_2^2 from i.i.d. samples."""
    m = samples.size
    if m < 2:
        return 0.0
    _, cnt = np.unique(samples, return_counts=True)
    pairs = float(np.sum(cnt.astype(np.float64) * (cnt - 1.0)))
    return pairs / (m * (m - 1.0))


def estimate_l2_required(host_size: int, eps: float, constants: Constants = DEFAULT_CONSTANTS) -> int:
    return int(math.ceil(constants.c_norm * (math.sqrt(host_size) + 1.0 / eps)))


def estimate_l2(
    samples: np.ndarray,
    sub: SubSupport,
    eps: float,
    rng: np.random.Generator,
    constants: Constants = DEFAULT_CONSTANTS,
) -> float:
    """Estimate c with ||P^S||_2 / 2 <= c <= 2(||P^S||_2 + eps), w.p. >= 2/3.

    The complement of S is flattened onto ceil(1/eps^2) dummy indices, which
    raises the norm by at most eps, then the norm of the flattened
    distribution is estimated from collision counts.
    """
    if not (0 < eps < 1):
        raise InvalidThreshold(f"eps must be in (0,1), got {eps}")
    samples = np.asarray(samples, dtype=np.int64)
    required = estimate_l2_required(sub.host_size, eps, constants)
    if samples.size < required:
        raise InsufficientSamples(f"need {required} samples, got {samples.size}")
    n_dummy = int(math.ceil(1.0 / eps**2))
    flat = flatten_samples(samples, sub, n_dummy, rng)
    return float(math.sqrt(max(_collision_norm_sq(flat), 0.0)))


# ---------------------------------------------------------------------------
# Z equivalence tester (whole support)


def z_test_required(b: float, eps: float, constants: Constants = DEFAULT_CONSTANTS) -> int:
    """Per-side sample requirement 2N, N = ceil(c_z * b / eps^2)."""
    return 2 * int(math.ceil(constants.c_z * max(b, 1e-12) / eps**2))


def _null_noise_scale(split: ZSplit) -> float:
    """Estimated standard deviation of Z under the null from pooled counts.

    For independent counts with common per-cell intensity lambda_i the exact
    null variance of Z_i is 6 lambda_i^2 + 4 lambda_i^3; pooled cell means
    estimate lambda_i.  Dense cells push Z's noise far above the sparse-regime
    bound 8 N^2 (||P||^2 + ||Q||^2), so thresholds must track this scale.
    """
    all_idx = np.union1d(
        np.union1d(split.x.indices, split.x_prime.indices),
        np.union1d(split.y.indices, split.y_prime.indices),
    )
    if all_idx.size == 0:
        return 0.0
    pooled = np.zeros(all_idx.size)
    for tensor in (split.x, split.x_prime, split.y, split.y_prime):
        pos = np.searchsorted(all_idx, tensor.indices)
        pooled[pos] += tensor.counts
    lam = pooled / 4.0
    return float(math.sqrt(np.sum(6.0 * lam**2 + 4.0 * lam**3)))


def _z_core(
    samples_p: np.ndarray,
    samples_q: np.ndarray,
    host_size: int,
    eps: float,
    rng: np.random.Generator,
    noise_guard: float = 0.0,
) -> Verdict:
    """Split each side into random halves, count, compare Z to eps^2 N^2 / 2.

    N is the half size (the smaller across sides); with equal-size halves the
    identity E[Z] = N^2 ||P - Q||_2^2 is exact, and the verdict is `No`
    exactly when Z exceeds the threshold (strict).  A positive noise_guard
    floors the threshold at noise_guard standard deviations of Z's estimated
    null noise, which dense cells require (their cubic-moment term is not
    covered by the sparse-regime variance bound the nominal threshold
    assumes).
    """
    n = min(samples_p.size, samples_q.size) // 2
    if n < 1:
        raise InsufficientSamples("need at least 2 samples per side")
    perm_p = rng.permutation(samples_p.size)[: 2 * n]
    perm_q = rng.permutation(samples_q.size)[: 2 * n]
    sp = samples_p[perm_p]
    sq = samples_q[perm_q]
    shape = (host_size,)
    split = ZSplit(
        x=CountTensor.from_flat(sp[:n], shape),
        x_prime=CountTensor.from_flat(sp[n:], shape),
        y=CountTensor.from_flat(sq[:n], shape),
        y_prime=CountTensor.from_flat(sq[n:], shape),
    )
    z = z_statistic(split)
    threshold = eps**2 * n**2 / 2.0
    if noise_guard > 0:
        threshold = max(threshold, noise_guard * _null_noise_scale(split))
    outcome = NO if z > threshold else YES
    return Verdict(outcome, {"z": z, "threshold": threshold, "n_half": n})


def equiv_test_z(
    samples_p: np.ndarray,
    samples_q: np.ndarray,
    b: float,
    eps: float,
    seed_or_rng,
    constants: Constants = DEFAULT_CONSTANTS,
    host_size: int | None = None,
) -> Verdict:
    """Equivalence test P = Q vs ||P - Q||_2 >= eps given ||P||_2, ||Q||_2 <= b.

    Needs 2N samples per side with N = ceil(c_z * b / eps^2); error
    probability <= 1/3 on each side of the promise.
    """
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    samples_p = np.asarray(samples_p, dtype=np.int64)
    samples_q = np.asarray(samples_q, dtype=np.int64)
    required = z_test_required(b, eps, constants)
    if samples_p.size < required or samples_q.size < required:
        raise InsufficientSamples(
            f"need {required} samples per side, got {samples_p.size} and {samples_q.size}"
        )
    if host_size is None:
        host_size = int(max(samples_p.max(initial=0), samples_q.max(initial=0))) + 1
    return _z_core(samples_p, samples_q, host_size, eps, rng)


# ---------------------------------------------------------------------------
# Sub-support l2 equivalence with flattening, norm pre-check, amplification


def amplification_reps(delta: float, constants: Constants = DEFAULT_CONSTANTS) -> int:
    """Majority-vote repetition count: ceil(6 ln(1/delta)), calibration-scaled, odd."""
    reps = max(1, math.ceil(6.0 * math.log(1.0 / delta) * constants.amp_scale))
    return reps + 1 if reps % 2 == 0 else reps


def equiv_l2_required(
    host_size: int,
    b: float,
    eps_gap: float,
    delta: float,
    constants: Constants = DEFAULT_CONSTANTS,
) -> tuple[int, int, int]:
    """(total per side, per-rep norm-phase, per-rep z-phase half) sample counts.

    The learning phase and the testing phase are budgeted separately and
    summed; the per-repetition cost is multiplied by the majority-vote count.
    The norm-check error parameter is floored at 0.02 so that near-massless
    sub-supports do not blow up the learning phase; the check still catches
    any ||P^S||_2 above 3b + 0.02.
    """
    eps_norm = max(eps_gap, b, 0.02)
    n_norm = estimate_l2_required(host_size, min(eps_norm, 0.999), constants)
    gamma = eps_gap / 2.0
    b_eff = 6.0 * max(b, eps_gap) + 3.0 * eps_gap
    n_dummy = int(math.ceil(4.0 / eps_gap**2))
    d_flat = host_size + n_dummy
    n_z_half = int(
        math.ceil(constants.c_eq * max(b_eff / gamma**2, 1.0 / gamma, math.sqrt(d_flat)))
    )
    reps = amplification_reps(delta, constants)
    return reps * (n_norm + 2 * n_z_half), n_norm, n_z_half


def equiv_l2(
    samples_p: np.ndarray,
    samples_q: np.ndarray,
    sub: SubSupport,
    b: float,
    eps_gap: float,
    delta: float,
    rng: np.random.Generator,
    constants: Constants = DEFAULT_CONSTANTS,
    allow_short: bool = False,
) -> Verdict:
    """Decide P^S = Q^S vs ||P^S - Q^S||_2 >= eps_gap, promised ||Q^S||_2 <= b.

    Each repetition first estimates ||P^S||_2 and returns Far when the lower
    bound implied by the estimate exceeds b (the asymmetric-promise guard),
    then flattens the complement of S onto ceil(4/eps_gap^2) dummy indices on
    both sides and runs the Z tester at precision eps_gap/2.  Majority vote
    over ceil(6 ln(1/delta)) repetitions with fresh disjoint samples.

    With allow_short=True a shortfall does not raise; the test runs on what
    is available (skipping the norm pre-check when the chunk cannot fit it),
    trading error probability for feasibility.  Callers use this only where a
    conditioning step shrank the stream by a data-dependent factor.
    """
    samples_p = np.asarray(samples_p, dtype=np.int64)
    samples_q = np.asarray(samples_q, dtype=np.int64)
    required, n_norm, n_z_half = equiv_l2_required(sub.host_size, b, eps_gap, delta, constants)
    available = min(samples_p.size, samples_q.size)
    if available < required and not allow_short:
        raise InsufficientSamples(
            f"need {required} samples per side, got {samples_p.size} and {samples_q.size}"
        )
    reps = amplification_reps(delta, constants)
    chunk = available // reps  # surplus beyond `required` buys extra power
    if chunk < n_norm + 2:
        n_norm = 0  # depleted chunk: spend everything on the Z phase
    n_z_half = (chunk - n_norm) // 2
    if n_z_half < 1:
        raise InsufficientSamples("not enough samples for a single Z repetition")
    eps_norm = max(eps_gap, b, 0.02)
    n_dummy = int(math.ceil(4.0 / eps_gap**2))
    gamma = eps_gap / 2.0
    votes_far = 0
    details = []
    for r in range(reps):
        cp = samples_p[r * chunk : (r + 1) * chunk]
        cq = samples_q[r * chunk : (r + 1) * chunk]
        if n_norm > 0:
            c_p = estimate_l2(cp[:n_norm], sub, min(eps_norm, 0.999), rng, constants)
            if (c_p - (b + eps_norm)) / 2.0 > b:
                votes_far += 1
                details.append({"rep": r, "branch": "norm", "c_p": c_p})
                continue
        fp = flatten_samples(cp[n_norm : n_norm + 2 * n_z_half], sub, n_dummy, rng)
        fq = flatten_samples(cq[n_norm : n_norm + 2 * n_z_half], sub, n_dummy, rng)
        res = _z_core(fp, fq, sub.size + n_dummy, gamma, rng, noise_guard=constants.z_guard)
        if res.outcome == NO:
            votes_far += 1
        details.append({"rep": r, "branch": "z", **res.diagnostics})
    outcome = FAR if 2 * votes_far > reps else SAME
    return Verdict(outcome, {"votes_far": votes_far, "reps": reps, "rep_details": details})


def third_moment_budget(
    sum_q3: float, gamma: float, constants: Constants = DEFAULT_CONSTANTS
) -> int:
    """Samples per half needed so an l2 gap of gamma clears the noise floor.

    Z's null noise scales like sqrt(4 n^3 sum q^3); requiring
    n^2 gamma^2 >= (z_guard + 1.5) * that noise gives
    n >= 4 (z_guard + 1.5)^2 sum(q^3) / gamma^4.  Dense sub-supports are
    governed by this term rather than by the sparse-regime b / gamma^2 rule.
    Callers floor gamma at a fraction of the block norm: gaps much smaller
    than the norm of a dense block are beyond desk-scale power, and the
    adaptive threshold keeps the verdict sound there regardless.
    """
    k = constants.z_guard + 1.5
    return int(math.ceil(4.0 * k**2 * max(sum_q3, 0.0) / gamma**4))


# ---------------------------------------------------------------------------
# Small-norm shortcut


def equiv_small_required(
    host_size: int,
    sub_size: int,
    eta: float,
    delta: float,
    constants: Constants = DEFAULT_CONSTANTS,
) -> int:
    reps = amplification_reps(delta, constants)
    tau = eta / math.sqrt(max(sub_size, 1))
    per_rep = max(
        int(math.ceil(constants.c_l2 * (math.sqrt(host_size) + math.sqrt(max(sub_size, 1)) / eta))),
        estimate_l2_required(host_size, min(tau / 20.0, 0.999), constants),
    )
    return reps * per_rep


def equiv_small(
    samples_p: np.ndarray,
    sub: SubSupport,
    zeta: float,
    eta: float,
    delta: float,
    rng: np.random.Generator,
    constants: Constants = DEFAULT_CONSTANTS,
) -> Verdict:
    """Certify D_H^2(P^S, Q^S) <= eta or assert P^S != Q^S, promised ||Q^S||_2 <= zeta.

    Valid when zeta <= eta / (10 sqrt(|S|)).  Estimates c_P = ||P^S||_2 to
    additive error tau/20 with tau = eta / sqrt(|S|) and splits on c_P > tau/4
    (strict inequality rejects).  Majority vote as in equiv_l2.
    """
    if sub.size == 0:
        return Verdict(CLOSE_IN_HELLINGER, {"reason": "empty sub-support"})
    tau = eta / math.sqrt(sub.size)
    if zeta > tau / 10.0 + 1e-12:
        raise InvalidThreshold(f"needs zeta <= eta/(10 sqrt|S|) = {tau / 10.0:.3g}, got {zeta:.3g}")
    samples_p = np.asarray(samples_p, dtype=np.int64)
    required = equiv_small_required(sub.host_size, sub.size, eta, delta, constants)
    if samples_p.size < required:
        raise InsufficientSamples(f"need {required} samples, got {samples_p.size}")
    reps = amplification_reps(delta, constants)
    chunk = required // reps
    votes_neq = 0
    estimates = []
    for r in range(reps):
        cp = samples_p[r * chunk : (r + 1) * chunk]
        c_p = estimate_l2(cp, sub, min(tau / 20.0, 0.999), rng, constants)
        estimates.append(c_p)
        if c_p > tau / 4.0:
            votes_neq += 1
    outcome = NOT_EQUAL if 2 * votes_neq > reps else CLOSE_IN_HELLINGER
    return Verdict(outcome, {"tau": tau, "estimates": estimates, "votes_neq": votes_neq, "reps": reps})
