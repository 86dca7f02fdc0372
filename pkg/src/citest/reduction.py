"""Preprocessing that turns MI/CMI testing into squared-Hellinger testing.

The only transformation is a weak uniform mixing applied independently to the
A and C coordinates of each sample.  Mixing preserves Markovianity (it is a
stochastic map acting on A and C separately) while guaranteeing a minimum
conditional product mass of eta^2/(d_A d_C), which converts a KL gap of eps
into a squared-Hellinger gap of nu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Joint3
from .errors import InvalidThreshold


@dataclass(frozen=True)
class ReductionParams:
    """Mixing weight eta and the Hellinger threshold nu handed downstream."""

    eta: float
    nu: float
    eps: float

    def __post_init__(self):
        if not (0 < self.eta < 1):
            raise InvalidThreshold(f"eta must be in (0,1), got {self.eta}")
        if not (0 < self.nu <= self.eps):
            raise InvalidThreshold(f"nu must be in (0, eps], got {self.nu}")


def reduction_params(eps: float, d_A: int, d_C: int) -> ReductionParams:
    """Admissible (eta, nu) for converting an eps KL gap at sizes d_A, d_C.

    eta is the largest mixing weight with a proven continuity guarantee,
    (eps / (48 d_A d_C ln(d_A d_C / eps)))^2; nu = eps / (8 ln(d_A d_C / eta^2)).
    The logs are clamped at 1 so degenerate tiny instances stay defined.
    """
    if not (0 < eps < 1):
        raise InvalidThreshold(f"eps must be in (0,1), got {eps}")
    if d_A < 2 or d_C < 2:
        raise InvalidThreshold("d_A and d_C must be at least 2")
    d = d_A * d_C
    eta = (eps / (48.0 * d * max(1.0, math.log(d / eps)))) ** 2
    nu = eps / (8.0 * max(1.0, math.log(d / eta**2)))
    return ReductionParams(eta=eta, nu=nu, eps=eps)


def mix_sample(
    triplets: np.ndarray,
    d_A: int,
    d_C: int,
    eta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mix the A and C coordinates of (n, 3) triplets with the uniform distribution.

    Each coordinate is independently replaced by a uniform draw with
    probability eta; b is never modified.  Accepts a single (3,) triplet too.
    """
    arr = np.asarray(triplets, dtype=np.int64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    out = arr.copy()
    n = out.shape[0]
    hit_a = rng.random(n) < eta
    hit_c = rng.random(n) < eta
    out[hit_a, 0] = rng.integers(0, d_A, size=int(hit_a.sum()))
    out[hit_c, 2] = rng.integers(0, d_C, size=int(hit_c.sum()))
    return out[0] if single else out


def pushforward_exact(joint: Joint3, eta: float) -> Joint3:
    """Exact distribution of mix_sample output applied to draws from `joint`.

    Per b slice (conditionals): (1-eta)^2 P + eta(1-eta)(P_C/d_A + P_A/d_C)
    + eta^2/(d_A d_C), rescaled by p_b.
    """
    p = joint.probs
    d_A, d_C = joint.d_A, joint.d_C
    p_a_b = p.sum(axis=2)  # (d_A, d_B): joint of (A, B)
    p_b_c = p.sum(axis=0)  # (d_B, d_C): joint of (B, C)
    p_b = p.sum(axis=(0, 2))
    out = (
        (1 - eta) ** 2 * p
        + eta * (1 - eta) * (p_b_c[None, :, :] / d_A + p_a_b[:, :, None] / d_C)
        + eta**2 * p_b[None, :, None] / (d_A * d_C)
    )
    return Joint3(out)
