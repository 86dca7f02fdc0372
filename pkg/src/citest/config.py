"""Calibration constants and reproducible RNG streams.

The testers' sample-budget formulas keep the exponent structure of their
worst-case derivations, but the leading absolute constants there are far too
large to run at desk scale.  Every such constant is a field of
:class:`Constants`; the defaults were fitted once with the Monte Carlo
calibration suite (see tests/test_acceptance.py) and `paper()` returns the
literal worst-case values for documentation fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace, fields

import numpy as np


@dataclass(frozen=True)
class Constants:
    """Tunable leading constants for sample budgets and thresholds.

    ``*_gamma_scale`` multiply per-category l2 thresholds; the budget scales
    (``c_*``) multiply sample-count formulas; ``amp_scale`` scales the
    majority-vote repetition count ceil(6*ln(1/delta)).
    """

    # Z equivalence tester (whole-distribution l2 test)
    c_z: float = 12.0
    # per-repetition budget multiplier for sub-support l2 equivalence
    c_eq: float = 0.5
    # noise-floor multiplier for category-level Z thresholds
    z_guard: float = 3.0
    # l2-norm estimation budget multiplier
    c_norm: float = 16.0
    # small-norm shortcut budget multiplier
    c_l2: float = 16.0
    # majority-vote amplification scale
    amp_scale: float = 0.006

    # MI tester budgets and threshold scale
    c_mi_heavy: float = 10.0
    c_mi_mixed: float = 0.30
    c_mi_learn: float = 0.02
    mi_gamma_scale: float = 60.0

    # CMI tester budgets and threshold scale
    c_ns: float = 1.0
    c_cmi_heavy: float = 0.05
    c_cmi_mixed: float = 3e-4
    c_cmi_light: float = 0.05
    c_cmi_learn: float = 0.001
    cmi_gamma_scale: float = 2400.0

    @classmethod
    def paper(cls) -> "Constants":
        """The paper's literal worst-case constants (not runnable at desk scale)."""
        return cls(
            c_z=100.0,
            c_eq=1.0,
            z_guard=0.0,
            c_norm=1.0,
            c_l2=1.0,
            amp_scale=1.0,
            c_mi_heavy=1e5,
            c_mi_mixed=10.0,
            c_mi_learn=1.0,
            mi_gamma_scale=1.0,
            c_ns=1e10,
            c_cmi_heavy=1e7,
            c_cmi_mixed=1e3,
            c_cmi_light=10.0,
            c_cmi_learn=1.0,
            cmi_gamma_scale=1.0,
        )

    def override(self, **kwargs) -> "Constants":
        return replace(self, **kwargs)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_CONSTANTS = Constants()


def trial_rng(master_seed: int, trial_index: int = 0) -> np.random.Generator:
    """Counter-based generator for trial `trial_index` of a seeded experiment.

    Streams for distinct (seed, index) pairs are independent, and parallel
    callers can derive them without coordination.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.Philox(ss))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """n independent child generators of `rng` (consumes one spawn)."""
    return [np.random.Generator(np.random.Philox(ss)) for ss in rng.bit_generator.seed_seq.spawn(n)]
