"""Testers for independence and conditional independence of discrete
distributions in squared Hellinger distance, with exact oracles and a Monte
Carlo verification harness."""

from .config import Constants, DEFAULT_CONSTANTS, trial_rng
from .distributions import (
    CountTensor,
    Dist,
    HardInstanceCMI,
    HardInstanceMI,
    Joint2,
    Joint3,
    cmi_exact,
    gen_hard_cmi,
    gen_hard_mi,
    hellinger_sq,
    hellinger_sq_to_markov,
    kl,
    lp_dist,
    mi_exact,
    sample,
)
from .errors import (
    CitestError,
    DimensionMismatch,
    InfeasibleParameters,
    InsufficientSamples,
    InvalidDistribution,
    InvalidThreshold,
    OddSampleCount,
    SupportViolation,
)
from .reduction import ReductionParams, mix_sample, pushforward_exact, reduction_params
from .equiv import (
    SubSupport,
    ZSplit,
    equiv_l2,
    equiv_small,
    equiv_test_z,
    estimate_l2,
    poissonize,
    z_statistic,
)
from .mitester import (
    PartitionGrid2D,
    build_grid_2d,
    learn_buckets,
    mi_test,
    simulate_product_samples,
)
from .cmitester import (
    PairingMoments,
    PartitionGrid3D,
    RegimeSplit,
    build_grid_3d,
    cmi_large_test,
    cmi_small_test,
    cmi_test,
    pairing_moments,
    sim_abc,
    sim_abc_ci,
    sim_abc_ci_large,
)
from .harness import (
    ExperimentConfig,
    TrialReport,
    cli_dispatch,
    power_curve,
    run_trials,
    verify_lemmas,
    wilson_interval,
)
from .verdict import Verdict

__all__ = [
    "Constants",
    "DEFAULT_CONSTANTS",
    "trial_rng",
    "CountTensor",
    "Dist",
    "Joint2",
    "Joint3",
    "HardInstanceMI",
    "HardInstanceCMI",
    "kl",
    "hellinger_sq",
    "lp_dist",
    "mi_exact",
    "cmi_exact",
    "hellinger_sq_to_markov",
    "sample",
    "gen_hard_mi",
    "gen_hard_cmi",
    "ReductionParams",
    "reduction_params",
    "mix_sample",
    "pushforward_exact",
    "SubSupport",
    "ZSplit",
    "poissonize",
    "z_statistic",
    "estimate_l2",
    "equiv_l2",
    "equiv_small",
    "equiv_test_z",
    "PartitionGrid2D",
    "learn_buckets",
    "build_grid_2d",
    "mi_test",
    "simulate_product_samples",
    "PairingMoments",
    "PartitionGrid3D",
    "RegimeSplit",
    "pairing_moments",
    "sim_abc",
    "sim_abc_ci",
    "sim_abc_ci_large",
    "build_grid_3d",
    "cmi_small_test",
    "cmi_large_test",
    "cmi_test",
    "ExperimentConfig",
    "TrialReport",
    "verify_lemmas",
    "power_curve",
    "run_trials",
    "cli_dispatch",
    "wilson_interval",
    "Verdict",
    "CitestError",
    "SupportViolation",
    "DimensionMismatch",
    "InvalidDistribution",
    "InvalidThreshold",
    "InfeasibleParameters",
    "InsufficientSamples",
    "OddSampleCount",
]

__version__ = "0.1.0"
