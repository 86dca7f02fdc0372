"""Exact discrete distributions, divergences, samplers, and hard instances.

This is the oracle layer: every quantity here is computed exactly from the
probability tables, so the sample-based testers in the other modules can be
checked against it.  All logarithms are natural.

Conventions
-----------
* ``Dist`` holds a probability vector over ``[n]``, ``Joint2`` a d_A x d_C
  matrix, ``Joint3`` a d_A x d_B x d_C tensor.
* Squared Hellinger distance carries the 1/2 normalization,
  ``(1/2) * sum (sqrt p - sqrt q)^2``; tester thresholds elsewhere absorb the
  constant-factor ambiguity this choice introduces.
* Inputs are renormalized when their total is within 1e-9 of one and rejected
  otherwise.
* All types are immutable after construction; sampling takes a caller-owned
  ``numpy.random.Generator`` so parallel trials use independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InfeasibleParameters,
    InvalidDistribution,
    SupportViolation,
)

PROB_TOL = 1e-9


def _validated_probs(probs, shape_rank: int) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != shape_rank:
        raise DimensionMismatch(f"expected rank-{shape_rank} table, got rank {arr.ndim}")
    if np.any(arr < 0):
        raise InvalidDistribution("negative probability entry")
    total = float(arr.sum())
    if abs(total - 1.0) > PROB_TOL:
        raise InvalidDistribution(f"probabilities sum to {total!r}, not 1 within {PROB_TOL}")
    arr = arr / total
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dist:
    """Probability vector over [n]."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _validated_probs(self.probs, 1))

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def uniform(cls, n: int) -> "Dist":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Dist":
        return cls(rng.dirichlet(np.ones(n)))


@dataclass(frozen=True)
class Joint2:
    """Joint distribution of a pair (A, C) as a d_A x d_C matrix."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _validated_probs(self.probs, 2))

    @property
    def d_A(self) -> int:
        return self.probs.shape[0]

    @property
    def d_C(self) -> int:
        return self.probs.shape[1]

    def marginal_a(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_c(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def product_of_marginals(self) -> "Joint2":
        return Joint2(np.outer(self.marginal_a(), self.marginal_c()))

    @classmethod
    def random(cls, d_A: int, d_C: int, rng: np.random.Generator) -> "Joint2":
        return cls(rng.dirichlet(np.ones(d_A * d_C)).reshape(d_A, d_C))


@dataclass(frozen=True)
class Joint3:
    """Joint distribution of a triplet (A, B, C) as a d_A x d_B x d_C tensor."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _validated_probs(self.probs, 3))

    @property
    def d_A(self) -> int:
        return self.probs.shape[0]

    @property
    def d_B(self) -> int:
        return self.probs.shape[1]

    @property
    def d_C(self) -> int:
        return self.probs.shape[2]

    def marginal_b(self) -> np.ndarray:
        return self.probs.sum(axis=(0, 2))

    def marginal_ab(self) -> np.ndarray:
        return self.probs.sum(axis=2)

    def marginal_bc(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def slice_ac(self, b: int) -> np.ndarray:
        """Conditional P_{AC|B=b}; zero-mass slices raise."""
        p_b = float(self.probs[:, b, :].sum())
        if p_b == 0.0:
            raise InvalidDistribution(f"conditioning on zero-probability b={b}")
        return self.probs[:, b, :] / p_b

    def markov_closure(self) -> "Joint3":
        """The Markov chain P_AB * P_BC / P_B with the same pair marginals."""
        return Joint3(_markov_reference(self.probs))

    @classmethod
    def random(cls, d_A: int, d_B: int, d_C: int, rng: np.random.Generator) -> "Joint3":
        return cls(rng.dirichlet(np.ones(d_A * d_B * d_C)).reshape(d_A, d_B, d_C))

    @classmethod
    def random_markov(cls, d_A: int, d_B: int, d_C: int, rng: np.random.Generator) -> "Joint3":
        """A random exact Markov chain A - B - C."""
        p_b = rng.dirichlet(np.ones(d_B))
        p_a_given_b = rng.dirichlet(np.ones(d_A), size=d_B)  # (d_B, d_A)
        p_c_given_b = rng.dirichlet(np.ones(d_C), size=d_B)  # (d_B, d_C)
        probs = np.einsum("b,ba,bc->abc", p_b, p_a_given_b, p_c_given_b)
        return cls(probs)


def _markov_reference(probs: np.ndarray) -> np.ndarray:
    """P_AB * P_BC / P_B cellwise; zero-mass b slices stay zero."""
    p_ab = probs.sum(axis=2)
    p_bc = probs.sum(axis=0)
    p_b = probs.sum(axis=(0, 2))
    safe_b = np.where(p_b > 0, p_b, 1.0)
    return p_ab[:, :, None] * p_bc[None, :, :] / safe_b[None, :, None]


@dataclass(frozen=True)
class CountTensor:
    """Occurrence counts of outcomes in a multiset of samples.

    Stored sparsely as aligned (flat index, count) arrays so that large,
    mostly-empty tensors stay cheap.  ``total`` always equals ``counts.sum()``.
    """

    shape: tuple
    indices: np.ndarray  # sorted unique flat indices
    counts: np.ndarray  # positive counts aligned with `indices`
    total: int

    @classmethod
    def from_flat(cls, flat: np.ndarray, shape: tuple) -> "CountTensor":
        idx, cnt = np.unique(np.asarray(flat, dtype=np.int64), return_counts=True)
        return cls(tuple(shape), idx, cnt, int(cnt.sum()))

    @classmethod
    def from_samples(cls, samples: np.ndarray, shape: tuple) -> "CountTensor":
        """Counts of (row-encoded) outcome tuples; `samples` is (n, rank) or (n,)."""
        samples = np.asarray(samples)
        if samples.ndim == 1:
            flat = samples
        else:
            if samples.shape[1] != len(shape):
                raise DimensionMismatch("sample tuples do not match tensor rank")
            flat = np.ravel_multi_index(tuple(samples.T), shape)
        return cls.from_flat(flat, shape)

    @classmethod
    def empty(cls, shape: tuple) -> "CountTensor":
        return cls(tuple(shape), np.empty(0, np.int64), np.empty(0, np.int64), 0)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(int(np.prod(self.shape)), dtype=np.int64)
        dense[self.indices] = self.counts
        return dense.reshape(self.shape)


@dataclass(frozen=True)
class HardInstanceMI:
    """A planted independence-testing instance (label 0: exact product)."""

    joint: Joint2
    label: int
    s1_mask: np.ndarray  # per-a membership in the uninformative row class
    alpha: float


@dataclass(frozen=True)
class HardInstanceCMI:
    """A planted conditional-independence instance (label 0: exact Markov)."""

    joint: Joint3
    label: int
    alpha: float


# ---------------------------------------------------------------------------
# Divergences


def _aligned(p, q):
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise DimensionMismatch(f"support sizes differ: {p.shape} vs {q.shape}")
    return p, q


def _table(d) -> np.ndarray:
    return d.probs if isinstance(d, (Dist, Joint2, Joint3)) else np.asarray(d, dtype=np.float64)


def kl(p, q) -> float:
    """KL divergence D(P||Q) in nats, with the 0*log(0)=0 convention.

    Raises SupportViolation if P puts mass outside the support of Q.
    """
    p, q = _aligned(_table(p), _table(q))
    bad = (p > 0) & (q == 0)
    if np.any(bad):
        raise SupportViolation("P has mass where Q is zero; D(P||Q) is infinite")
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def hellinger_sq(p, q) -> float:
    """Squared Hellinger distance (1/2) * sum (sqrt p - sqrt q)^2, in [0, 1]."""
    p, q = _aligned(_table(p), _table(q))
    return float(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))


def lp_dist(p, q, ord: int = 1) -> float:
    """l_p distance between probability tables, p in {1, 2}."""
    if ord not in (1, 2):
        raise ValueError(f"only p=1 and p=2 supported, got {ord}")
    p_, q_ = _aligned(_table(p), _table(q))
    diff = p_ - q_
    if ord == 1:
        return float(np.abs(diff).sum())
    return float(np.sqrt(np.sum(diff * diff)))


def mi_exact(joint: Joint2) -> float:
    """Mutual information I(A:C) = D(P_AC || P_A P_C), in nats."""
    p = joint.probs
    prod = np.outer(joint.marginal_a(), joint.marginal_c())
    mask = p > 0
    # marginals dominate the joint, so prod > 0 wherever p > 0
    return max(0.0, float(np.sum(p[mask] * np.log(p[mask] / prod[mask]))))


def cmi_exact(joint: Joint3) -> float:
    """Conditional mutual information I(A:C|B), in nats.

    Computed as sum_b p_b * D(P_{AC|b} || P_{A|b} P_{C|b}); zero-probability
    b slices contribute zero.
    """
    p = joint.probs
    p_b = joint.marginal_b()
    total = 0.0
    for b in range(joint.d_B):
        if p_b[b] <= 0.0:
            continue
        cond = p[:, b, :] / p_b[b]
        prod = np.outer(cond.sum(axis=1), cond.sum(axis=0))
        mask = cond > 0
        total += p_b[b] * float(np.sum(cond[mask] * np.log(cond[mask] / prod[mask])))
    return max(0.0, total)


def hellinger_sq_to_markov(joint: Joint3) -> float:
    """Exact D_H^2(P_ABC, P_AB P_BC / P_B)."""
    return hellinger_sq(joint.probs, _markov_reference(joint.probs))


# ---------------------------------------------------------------------------
# Sampling


def sample(dist, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """n_samples i.i.d. draws; outcome indices for Dist, index tuples otherwise.

    Inverse-CDF sampling on the flattened table; deterministic given the
    generator state.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    table = _table(dist)
    flat = table.ravel()
    if n_samples == 0:
        draws = np.empty(0, dtype=np.int64)
    else:
        cdf = np.cumsum(flat)
        cdf[-1] = 1.0
        draws = np.searchsorted(cdf, rng.random(n_samples), side="right").astype(np.int64)
    if table.ndim == 1:
        return draws
    return np.column_stack(np.unravel_index(draws, table.shape)).astype(np.int64)


# ---------------------------------------------------------------------------
# Hard-instance generators


def gen_hard_mi(
    d_A: int,
    d_C: int,
    n: int,
    eps: float,
    label: int,
    seed_or_rng,
) -> HardInstanceMI:
    """Planted instance over d_A x d_C: exact product when label=0, far otherwise.

    Row a=0 is reserved for the residual mass.  Every other row is assigned
    (with probability alpha = min(n/d_A, 1/2)) to an uninformative class whose
    cells all equal 1/(2 n d_C); the remaining rows carry eps/(d_A d_C) per
    cell when label=0 and a uniformly random choice of eps/2 or 3 eps/2 times
    1/(d_A d_C) per cell when label=1.  The C-marginal is uniform by
    construction, so label=0 gives an exact product distribution.
    """
    if not (0 < eps < 1):
        raise InfeasibleParameters(f"eps must be in (0,1), got {eps}")
    if n * eps / d_A > 1 + PROB_TOL:
        raise InfeasibleParameters(f"requires n*eps/d_A <= 1, got {n * eps / d_A:.3g}")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)

    alpha = min(n / d_A, 0.5)
    s1_mask = np.zeros(d_A, dtype=bool)
    s1_mask[1:] = rng.random(d_A - 1) < alpha

    probs = np.empty((d_A, d_C))
    probs[s1_mask, :] = 1.0 / (2 * n * d_C)
    s2 = ~s1_mask
    s2[0] = False
    base = eps / (d_A * d_C)
    if label == 0:
        probs[s2, :] = base
    else:
        low_high = rng.random((int(s2.sum()), d_C)) < 0.5
        probs[s2, :] = np.where(low_high, 0.5 * base, 1.5 * base)

    residual = 1.0 - probs[1:, :].sum()
    if residual < -PROB_TOL:
        raise InfeasibleParameters(
            f"reserved-row mass would be negative ({residual:.3g}); shrink n or eps"
        )
    probs[0, :] = max(residual, 0.0) / d_C
    return HardInstanceMI(Joint2(probs), int(label), s1_mask, alpha)


def gen_hard_cmi(
    d_A: int,
    d_B: int,
    d_C: int,
    n: int,
    eps: float,
    label: int,
    seed_or_rng,
) -> HardInstanceCMI:
    """Planted instance over d_A x d_B x d_C: exact Markov A-B-C when label=0.

    Same construction as gen_hard_mi with the row index ranging over (a, b)
    pairs; the reserved residual cell block is (a, b) = (0, 0).  Under label=0
    every (a, b) row is constant over c, so p_abc = p_ab * (1/d_C) and the
    chain is exactly Markov.
    """
    if not (0 < eps < 1):
        raise InfeasibleParameters(f"eps must be in (0,1), got {eps}")
    if n * eps / (d_A * d_B) > 1 + PROB_TOL:
        raise InfeasibleParameters(
            f"requires n*eps/(d_A d_B) <= 1, got {n * eps / (d_A * d_B):.3g}"
        )
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)

    n_rows = d_A * d_B
    alpha = min(n / n_rows, 0.5)
    s1_mask = np.zeros(n_rows, dtype=bool)
    s1_mask[1:] = rng.random(n_rows - 1) < alpha  # row 0 == (a,b)=(0,0) reserved

    rows = np.empty((n_rows, d_C))
    rows[s1_mask, :] = 1.0 / (2 * n * d_C)
    s2 = ~s1_mask
    s2[0] = False
    base = eps / (n_rows * d_C)
    if label == 0:
        rows[s2, :] = base
    else:
        low_high = rng.random((int(s2.sum()), d_C)) < 0.5
        rows[s2, :] = np.where(low_high, 0.5 * base, 1.5 * base)

    residual = 1.0 - rows[1:, :].sum()
    if residual < -PROB_TOL:
        raise InfeasibleParameters(
            f"reserved-cell mass would be negative ({residual:.3g}); shrink n or eps"
        )
    rows[0, :] = max(residual, 0.0) / d_C
    return HardInstanceCMI(Joint3(rows.reshape(d_A, d_B, d_C)), int(label), alpha)


# ---------------------------------------------------------------------------
# Plain-text tensor serialization and CSV export


def save_tensor(path, dist) -> None:
    """Write a Dist/Joint2/Joint3 as `dims: ...` header plus row-major entries."""
    table = _table(dist)
    dims = " ".join(str(s) for s in table.shape)
    with open(path, "w") as fh:
        fh.write(f"dims: {dims}\n")
        for value in table.ravel():
            fh.write(f"{float(value)!r}\n")


def load_tensor(path):
    """Read a tensor written by save_tensor; returns Dist, Joint2, or Joint3."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("dims:"):
            raise InvalidDistribution(f"bad tensor header: {header!r}")
        shape = tuple(int(tok) for tok in header[len("dims:"):].split())
        values = np.array([float(line) for line in fh if line.strip()])
    if values.size != int(np.prod(shape)):
        raise DimensionMismatch(f"expected {np.prod(shape)} entries, got {values.size}")
    table = values.reshape(shape)
    return {1: Dist, 2: Joint2, 3: Joint3}[len(shape)](table)


def divergence_table_csv(path, pairs) -> None:
    """CSV of (name, kl, hellinger_sq, l1, l2) rows for (name, P, Q) inputs."""
    with open(path, "w") as fh:
        fh.write("name,kl,hellinger_sq,l1,l2\n")
        for name, p, q in pairs:
            fh.write(
                f"{name},{kl(p, q)!r},{hellinger_sq(p, q)!r},"
                f"{lp_dist(p, q, 1)!r},{lp_dist(p, q, 2)!r}\n"
            )
