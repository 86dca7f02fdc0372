"""Experiment orchestration: seeded trials, lemma verification, power curves,
CSV emission, and the command-line interface.

Determinism contract: every subcommand with a fixed seed and config
reproduces identical CSV bytes (timing columns are left empty unless
explicitly requested).  Per-trial RNG streams derive from
(master seed, trial index) through a counter-based generator, so trial
results do not depend on execution order.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .config import Constants, DEFAULT_CONSTANTS, split_rng, trial_rng
from .distributions import (
    Dist,
    Joint2,
    Joint3,
    gen_hard_cmi,
    gen_hard_mi,
    hellinger_sq,
    kl,
    load_tensor,
    lp_dist,
    mi_exact,
    sample,
)
from .cmitester import cmi_budgets, cmi_test, pairing_moments, sim_abc
from .equiv import equiv_test_z, z_test_required
from .errors import InsufficientSamples
from .mitester import mi_budgets, mi_test, simulate_product_samples
from .verdict import ABORT, NO, YES, Verdict


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a tester, its dimensions, and trial bookkeeping."""

    tester: str  # mi | cmi | equiv-z
    d_A: int = 2
    d_B: int = 1
    d_C: int = 2
    eps: float = 0.4
    trials: int = 1
    seed: int = 0
    instance: str = "null"  # null | far
    inst_n: int = 0  # hard-instance parameter (0: derived from dims)
    budget_override: int = 0  # 0: tester-determined
    constants: Constants = field(default_factory=lambda: DEFAULT_CONSTANTS)

    def config_hash(self) -> str:
        blob = repr(
            (
                self.tester, self.d_A, self.d_B, self.d_C, self.eps, self.trials,
                self.seed, self.instance, self.inst_n, self.budget_override,
                tuple(sorted(self.constants.as_dict().items())),
            )
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class TrialReport:
    """Per-trial record for power-curve CSV emission."""

    trial: int
    seed: int
    verdict: str
    statistic: float
    samples_used: int
    budget: int
    wall_ms: float

    def __post_init__(self):
        assert self.samples_used <= self.budget, "consumed more than the configured budget"


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial rate (95% by default)."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# Trial runners


def _statistic_of(verdict: Verdict) -> float:
    diag = verdict.diagnostics
    if "z" in diag:
        return float(diag["z"])
    cats = diag.get("categories") or diag.get("large", {}).get("categories") or []
    return float(len([c for c in cats if c.get("result") not in (None, "empty")]))


def run_mi_trial(config: ExperimentConfig, trial: int) -> TrialReport:
    """One seeded MI-tester trial; pools grow on demand up to 2^6 doublings.

    null: X=0 hard instance (exact product), P = Q; far: X=1 instance with Q
    the product of its marginals, simulated by sample splicing.
    """
    rng = trial_rng(config.seed, trial)
    rng_inst, *attempt_rngs = split_rng(rng, 8)
    d_A, d_C, eps = config.d_A, config.d_C, config.eps
    n_inst = config.inst_n or max(2, min(d_A // 2, int(d_A / eps)))
    label = 0 if config.instance == "null" else 1
    inst = gen_hard_mi(d_A, d_C, n_inst, eps, label, rng_inst)
    budgets = mi_budgets(d_A, d_C, eps, config.constants)
    pool = config.budget_override or 4 * budgets["learn_n"] + 50_000
    start = time.perf_counter()
    for attempt in range(7):
        rng_run = attempt_rngs[attempt]
        samples_p = sample(inst.joint, pool, rng_run)
        samples_q = simulate_product_samples(sample(inst.joint, 2 * pool, rng_run))
        try:
            verdict = mi_test(samples_p, samples_q, d_A, d_C, eps, rng_run, config.constants)
            break
        except InsufficientSamples as exc:
            if config.budget_override or attempt == 6:
                verdict = Verdict(ABORT, {"reason": "insufficient samples", "pool": pool})
                break
            pool = max(2 * pool, int(1.25 * exc.needed) if exc.needed else 2 * pool)
    used = verdict.diagnostics.get("samples_used", (pool, pool))
    wall_ms = (time.perf_counter() - start) * 1000.0
    return TrialReport(
        trial=trial, seed=config.seed, verdict=verdict.outcome,
        statistic=_statistic_of(verdict),
        samples_used=int(max(used)) if isinstance(used, tuple) else pool,
        budget=pool, wall_ms=wall_ms,
    )


def run_cmi_trial(config: ExperimentConfig, trial: int) -> TrialReport:
    """One seeded CMI-tester trial on a Markov (null) or planted-far instance."""
    rng = trial_rng(config.seed, trial)
    rng_inst, *attempt_rngs = split_rng(rng, 8)
    d_A, d_B, d_C, eps = config.d_A, config.d_B, config.d_C, config.eps
    n_inst = config.inst_n or max(2, min(d_A * d_B // 2, int(d_A * d_B / eps)))
    label = 0 if config.instance == "null" else 1
    inst = gen_hard_cmi(d_A, d_B, d_C, n_inst, eps, label, rng_inst)
    budgets = cmi_budgets(d_A, d_B, d_C, eps, config.constants)
    pool = config.budget_override or (
        budgets["nu_learn_n"] + budgets["n_s"] + 3 * budgets["learn_n"]
        + 60 * budgets["m"] + 500_000
    )
    start = time.perf_counter()
    for attempt in range(7):
        rng_run = attempt_rngs[attempt]
        samples = sample(inst.joint, pool, rng_run)
        try:
            verdict = cmi_test(samples, d_A, d_B, d_C, eps, rng_run, config.constants)
            break
        except InsufficientSamples as exc:
            if config.budget_override or attempt == 6:
                verdict = Verdict(ABORT, {"reason": "insufficient samples", "pool": pool})
                break
            pool = max(2 * pool, int(1.05 * exc.needed) if exc.needed else 2 * pool)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return TrialReport(
        trial=trial, seed=config.seed, verdict=verdict.outcome,
        statistic=_statistic_of(verdict), samples_used=pool, budget=pool, wall_ms=wall_ms,
    )


def planted_l2_pair(d: int, eps: float) -> tuple[Dist, Dist]:
    """Q uniform(d) and P with paired +/- perturbations at ||P - Q||_2 = eps."""
    delta = eps / math.sqrt(d)
    if delta >= 1.0 / d:
        raise ValueError("perturbation exceeds the uniform mass; lower eps or raise d")
    probs = np.full(d, 1.0 / d)
    probs[0::2] += delta
    probs[1::2] -= delta
    if d % 2 == 1:
        probs[-1] = 1.0 / d  # unpaired cell stays put
        probs[0] -= 0.0
    return Dist(probs), Dist.uniform(d)


def run_equiv_z_trial(config: ExperimentConfig, trial: int) -> TrialReport:
    """One seeded Z-tester trial on uniform(d) vs an l2-planted perturbation."""
    rng = trial_rng(config.seed, trial)
    d, eps = config.d_A, config.eps
    q = Dist.uniform(d)
    p = q if config.instance == "null" else planted_l2_pair(d, eps)[0]
    b = 1.2 / math.sqrt(d)
    need = z_test_required(b, eps, config.constants)
    pool = config.budget_override or need
    start = time.perf_counter()
    samples_p = sample(p, pool, rng)
    samples_q = sample(q, pool, rng)
    try:
        verdict = equiv_test_z(samples_p, samples_q, b, eps, rng, config.constants, host_size=d)
    except InsufficientSamples:
        verdict = Verdict(ABORT, {"reason": "insufficient samples", "pool": pool})
    wall_ms = (time.perf_counter() - start) * 1000.0
    return TrialReport(
        trial=trial, seed=config.seed, verdict=verdict.outcome,
        statistic=_statistic_of(verdict), samples_used=2 * pool, budget=2 * pool,
        wall_ms=wall_ms,
    )


def run_cmi_small_trial(config: ExperimentConfig, trial: int) -> TrialReport:
    """Isolated small-regime trial: a rare-b world with 2x2 AC slices.

    B is uniform over d_B rare values (p_b = 1/d_B = 1/N_S, the contract
    boundary); the far instance makes A and C perfectly correlated per b.
    """
    rng = trial_rng(config.seed, trial)
    from .cmitester import cmi_small_test

    d_b = config.d_B
    n_s = config.budget_override or d_b
    b = rng.integers(0, d_b, n_s)
    a = rng.integers(0, 2, n_s)
    c = a.copy() if config.instance == "far" else rng.integers(0, 2, n_s)
    samples = np.column_stack([a, b, c])
    start = time.perf_counter()
    verdict = cmi_small_test(samples, np.ones(d_b, dtype=bool), config.eps / 2,
                             n_s, rng, (2, d_b, 2))
    wall_ms = (time.perf_counter() - start) * 1000.0
    return TrialReport(
        trial=trial, seed=config.seed, verdict=verdict.outcome,
        statistic=_statistic_of(verdict),
        samples_used=int(verdict.diagnostics.get("samples_used", n_s)),
        budget=n_s, wall_ms=wall_ms,
    )


def run_cmi_large_trial(config: ExperimentConfig, trial: int) -> TrialReport:
    """Isolated large-regime trial on a hard instance with B_L = B."""
    rng = trial_rng(config.seed, trial)
    rng_inst, *attempt_rngs = split_rng(rng, 8)
    from .cmitester import cmi_large_test

    d_A, d_B, d_C, eps = config.d_A, config.d_B, config.d_C, config.eps
    n_inst = config.inst_n or max(2, d_A * d_B // 2)
    label = 0 if config.instance == "null" else 1
    inst = gen_hard_cmi(d_A, d_B, d_C, n_inst, eps, label, rng_inst)
    budgets = cmi_budgets(d_A, d_B, d_C, eps, config.constants)
    pool = config.budget_override or (3 * budgets["learn_n"] + 60 * budgets["m"] + 500_000)
    start = time.perf_counter()
    for attempt in range(7):
        rng_run = attempt_rngs[attempt]
        samples = sample(inst.joint, pool, rng_run)
        try:
            verdict = cmi_large_test(samples, np.ones(d_B, dtype=bool), eps / 2,
                                     budgets["nu"], rng_run, (d_A, d_B, d_C),
                                     config.constants)
            break
        except InsufficientSamples as exc:
            if config.budget_override or attempt == 6:
                verdict = Verdict(ABORT, {"reason": "insufficient samples", "pool": pool})
                break
            pool = max(2 * pool, int(1.05 * exc.needed) if exc.needed else 2 * pool)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return TrialReport(
        trial=trial, seed=config.seed, verdict=verdict.outcome,
        statistic=_statistic_of(verdict), samples_used=pool, budget=pool,
        wall_ms=wall_ms,
    )


_RUNNERS = {
    "mi": run_mi_trial,
    "cmi": run_cmi_trial,
    "cmi-small": run_cmi_small_trial,
    "cmi-large": run_cmi_large_trial,
    "equiv-z": run_equiv_z_trial,
}


def run_trials(config: ExperimentConfig) -> list[TrialReport]:
    runner = _RUNNERS[config.tester]
    return [runner(config, t) for t in range(config.trials)]


def summarize(reports: list[TrialReport], expect: str) -> dict:
    """Empirical correct-rate with Wilson 95% interval; Abort counts as error."""
    n = len(reports)
    good = sum(1 for r in reports if r.verdict == expect)
    lo, hi = wilson_interval(good, n)
    return {"n": n, "correct": good, "rate": good / n if n else 0.0, "wilson_lo": lo, "wilson_hi": hi}


def trials_csv(reports: list[TrialReport], config: ExperimentConfig, include_timing: bool = False) -> str:
    lines = [f"# config_hash={config.config_hash()}"]
    for key, value in sorted(config.constants.as_dict().items()):
        lines.append(f"# const.{key}={value!r}")
    for key in ("tester", "d_A", "d_B", "d_C", "eps", "trials", "seed", "instance",
                "inst_n", "budget_override"):
        lines.append(f"# {key}={getattr(config, key)!r}")
    lines.append("config_hash,trial,seed,verdict,statistic,samples,ms")
    for r in reports:
        ms = f"{r.wall_ms:.0f}" if include_timing else ""
        lines.append(
            f"{config.config_hash()},{r.trial},{r.seed},{r.verdict},{r.statistic!r},{r.samples_used},{ms}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Lemma verification


def _sandwich_sides(cond: np.ndarray) -> tuple[float, float]:
    """(mutual information, chi-squared sum) for a 2 x k conditional table."""
    marg = cond.mean(axis=0)
    mi = 0.0
    for x in range(2):
        mask = cond[x] > 0
        mi += 0.5 * float(np.sum(cond[x][mask] * np.log(cond[x][mask] / marg[mask])))
    denom = cond[0] + cond[1]
    mask = denom > 0
    chi = float(np.sum((cond[0][mask] - cond[1][mask]) ** 2 / denom[mask]))
    return mi, chi


def verify_lemmas(seed: int) -> list[dict]:
    """Numeric checks of the closed-form lemmas; entries carry measured margins.

    Covers the exponential bounds, the mutual-information sandwich
    2 I <= chi-sum <= 12 I, the scalar log inequality behind it, the pairing
    moment formulas (Monte Carlo against closed forms), and the Z-statistic
    mean/variance identities under Poissonized counts.
    """
    rng = trial_rng(seed, 0)
    report: list[dict] = []

    # Exponential bounds: 1 - x + x^2/4 <= e^-x <= 1 - x/2 on [0, 1).
    xs = np.linspace(0.0, 0.999999, 4001)
    lower = 1 - xs + xs**2 / 4
    upper = 1 - xs / 2
    ex = np.exp(-xs)
    report.append({
        "lemma": "exp_bounds_unit_interval",
        "passed": bool(np.all(lower <= ex + 1e-15) and np.all(ex <= upper + 1e-15)),
        "margin": float(min((ex - lower).min(), (upper - ex).min())),
    })
    xs2 = np.linspace(0.0, 20.0, 4001)
    lo2 = 1 - xs2 + xs2**2 / 2 - xs2**3 / 6
    up2 = 1 - xs2 + xs2**2 / 2
    ex2 = np.exp(-xs2)
    report.append({
        "lemma": "exp_bounds_cubic",
        "passed": bool(np.all(lo2 <= ex2 + 1e-12) and np.all(ex2 <= up2 + 1e-12)),
        "margin": float(min((ex2 - lo2).min(), (up2 - ex2).min())),
    })

    # Scalar inequality: a ln(2a/(a+b)) + b ln(2b/(a+b)) >= (a-b)^2 / (6(a+b)).
    grid = np.linspace(0.0, 5.0, 61)
    worst = np.inf
    ok = True
    for a in grid:
        for b in grid:
            if a + b == 0:
                continue
            lhs = 0.0
            if a > 0:
                lhs += a * math.log(2 * a / (a + b))
            if b > 0:
                lhs += b * math.log(2 * b / (a + b))
            rhs = (a - b) ** 2 / (6 * (a + b))
            worst = min(worst, lhs - rhs)
            ok &= lhs >= rhs - 1e-12
    report.append({"lemma": "log_chi_squared_scalar", "passed": bool(ok), "margin": float(worst)})

    # Sandwich: 2 I(X:A) <= chi-sum <= 12 I(X:A) on random conditional tables.
    viol = 0
    margins = []
    for _ in range(1000):
        k = int(rng.integers(2, 17))
        cond = rng.dirichlet(np.ones(k), size=2)
        mi, chi = _sandwich_sides(cond)
        lo_ok = 2 * mi <= chi + 1e-12
        hi_ok = chi <= 12 * mi + 1e-12
        if not (lo_ok and hi_ok):
            viol += 1
        margins.append(min(chi - 2 * mi, 12 * mi - chi))
    ind = np.array([[0.25, 0.75], [0.25, 0.75]])
    mi0, chi0 = _sandwich_sides(ind)
    report.append({
        "lemma": "mi_chi_squared_sandwich",
        "passed": viol == 0 and abs(mi0) < 1e-12 and abs(chi0) < 1e-12,
        "margin": float(min(margins)),
        "violations": viol,
    })

    # Pairing moments: SimABC Monte Carlo vs closed forms, batching the
    # repetitions as parallel b values so one simulator call covers them all.
    reps = 30_000
    for x_b in (0.1, 0.5, 1.0):
        moments = pairing_moments(x_b)
        counts = simulate_pairing_counts(x_b, reps, rng)
        m1 = float(counts.mean())
        m2 = float((counts.astype(np.float64) ** 2).mean())
        se1 = float(counts.std(ddof=1)) / math.sqrt(reps)
        se2 = float((counts.astype(np.float64) ** 2).std(ddof=1)) / math.sqrt(reps)
        ok = abs(m1 - moments.e1) <= 3 * se1 and abs(m2 - moments.e2) <= 3 * se2
        report.append({
            "lemma": f"pairing_moments_x={x_b}",
            "passed": bool(ok),
            "margin": float(min(3 * se1 - abs(m1 - moments.e1), 3 * se2 - abs(m2 - moments.e2))),
        })

    # Z-statistic mean identity and the sparse-regime variance bound under
    # Poissonized counts (per-cell counts are then independent Poissons).
    d = 400
    n_mean = 150.0
    p = np.asarray(rng.dirichlet(np.ones(d)))
    q = np.asarray(rng.dirichlet(np.ones(d)))
    reps_z = 10_000
    x = rng.poisson(n_mean * p, size=(reps_z, d)).astype(np.float64)
    x2 = rng.poisson(n_mean * p, size=(reps_z, d)).astype(np.float64)
    y = rng.poisson(n_mean * q, size=(reps_z, d)).astype(np.float64)
    y2 = rng.poisson(n_mean * q, size=(reps_z, d)).astype(np.float64)
    zs = np.einsum("ri,ri->r", x, x2) - 2 * np.einsum("ri,ri->r", x, y) + np.einsum("ri,ri->r", y, y2)
    expect_mean = n_mean**2 * float(np.sum((p - q) ** 2))
    se = float(zs.std(ddof=1)) / math.sqrt(reps_z)
    mean_ok = abs(float(zs.mean()) - expect_mean) <= 3 * se
    var_bound = 8 * n_mean**2 * float(np.sum(p**2) + np.sum(q**2))
    var_ok = float(zs.var(ddof=1)) <= var_bound
    report.append({
        "lemma": "z_mean_identity",
        "passed": bool(mean_ok),
        "margin": float(3 * se - abs(float(zs.mean()) - expect_mean)),
    })
    report.append({
        "lemma": "z_variance_bound",
        "passed": bool(var_ok),
        "margin": float(var_bound - float(zs.var(ddof=1))),
    })
    return report


def simulate_pairing_counts(
    x_b: float,
    reps: int,
    rng: np.random.Generator,
    cond: np.ndarray | None = None,
) -> np.ndarray:
    """Per-repetition output counts of sim_abc at a single b with Poi(x_b) input.

    Repetitions are encoded as parallel b values (trivial A and C unless a
    conditional table is given), so one simulator call covers all of them.
    """
    sizes = rng.poisson(x_b, size=reps)
    b_col = np.repeat(np.arange(reps), sizes)
    n = b_col.size
    if cond is None:
        d_A = d_C = 1
        a_col = np.zeros(n, dtype=np.int64)
        c_col = np.zeros(n, dtype=np.int64)
    else:
        d_A, d_C = cond.shape
        flat = np.searchsorted(np.cumsum(cond.ravel()), rng.random(n), side="right")
        a_col, c_col = np.divmod(flat, d_C)
    samples = np.column_stack([a_col, b_col, c_col])
    counts = sim_abc(samples, np.ones(reps, dtype=bool), (d_A, reps, d_C), rng)
    per_b = np.zeros(reps, dtype=np.int64)
    b_of = (counts.indices // d_C) % reps
    np.add.at(per_b, b_of, counts.counts)
    return per_b


def lemmas_csv(report: list[dict], seed: int) -> str:
    lines = [f"# verify-lemmas seed={seed}", "lemma,passed,margin"]
    for entry in report:
        lines.append(f"{entry['lemma']},{int(entry['passed'])},{entry['margin']!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Power curves


def both_sides_pass(config: ExperimentConfig, n: int, trials: int) -> tuple[bool, dict]:
    """Do both error rates stay <= 1/3 at a per-side budget of n samples?"""
    null_cfg = ExperimentConfig(
        **{**config.__dict__, "instance": "null", "trials": trials, "budget_override": n}
    )
    far_cfg = ExperimentConfig(
        **{**config.__dict__, "instance": "far", "trials": trials, "budget_override": n}
    )
    yes = summarize(run_trials(null_cfg), expect=YES)
    far_expect = NO if config.tester in ("mi", "cmi") else NO
    no = summarize(run_trials(far_cfg), expect=far_expect)
    ok = yes["rate"] >= 2 / 3 and no["rate"] >= 2 / 3
    return ok, {"yes_rate": yes["rate"], "no_rate": no["rate"]}


def bisect_min_n(
    config: ExperimentConfig,
    n_low: int,
    n_high: int,
    trials: int,
    rounds: int = 8,
) -> int:
    """Minimal per-side budget with both empirical error rates <= 1/3.

    Doubles n_high until it passes, then bisects; returns n_high if nothing
    below it passes.
    """
    while not both_sides_pass(config, n_high, trials)[0]:
        n_low = n_high
        n_high *= 2
        if n_high > 1 << 26:
            return n_high
    for _ in range(rounds):
        if n_high <= n_low + max(1, n_low // 20):
            break
        mid = (n_low + n_high) // 2
        if both_sides_pass(config, mid, trials)[0]:
            n_high = mid
        else:
            n_low = mid
    return n_high


def power_curve(
    config: ExperimentConfig,
    sweep_values: list[int],
    sweep_var: str = "d_A",
    trials: int = 20,
    bisect: bool = False,
    n_grid: list[int] | None = None,
) -> dict:
    """Sweep a dimension (or budget) and emit empirical rates per grid point.

    With bisect=True, finds the minimal budget N* per grid point and fits a
    log-log slope of N* against the swept variable.
    """
    rows = []
    for value in sweep_values:
        cfg = ExperimentConfig(**{**config.__dict__, sweep_var: value})
        if bisect:
            hint = max(1000, 30 * mi_budgets(cfg.d_A, cfg.d_C, cfg.eps, cfg.constants)["learn_n"])
            n_star = bisect_min_n(cfg, hint // 4, hint, trials)
            _, rates = both_sides_pass(cfg, n_star, trials)
            rows.append({sweep_var: value, "n_star": n_star, **rates})
        else:
            for n in n_grid or [0]:
                cfg_n = ExperimentConfig(**{**cfg.__dict__, "budget_override": n})
                null_rep = summarize(
                    run_trials(ExperimentConfig(**{**cfg_n.__dict__, "instance": "null", "trials": trials})),
                    expect=YES,
                )
                far_rep = summarize(
                    run_trials(ExperimentConfig(**{**cfg_n.__dict__, "instance": "far", "trials": trials})),
                    expect=NO,
                )
                rows.append({
                    sweep_var: value, "n": n,
                    "yes_rate": null_rep["rate"],
                    "yes_lo": null_rep["wilson_lo"], "yes_hi": null_rep["wilson_hi"],
                    "no_rate": far_rep["rate"],
                    "no_lo": far_rep["wilson_lo"], "no_hi": far_rep["wilson_hi"],
                })
    out: dict = {"rows": rows}
    if bisect and len(rows) >= 2:
        xs = np.log([r[sweep_var] for r in rows])
        ys = np.log([r["n_star"] for r in rows])
        slope, intercept = np.polyfit(xs, ys, 1)
        out["slope"] = float(slope)
        out["intercept"] = float(intercept)
    return out


def power_csv(result: dict, config: ExperimentConfig) -> str:
    rows = result["rows"]
    if not rows:
        return "# empty sweep\n"
    keys = list(rows[0].keys())
    lines = [f"# config_hash={config.config_hash()}"]
    if "slope" in result:
        lines.append(f"# loglog_slope={result['slope']!r}")
    lines.append(",".join(keys))
    for row in rows:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in keys))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CLI


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 64+
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(64)


def _read_config_file(path: str) -> dict:
    """Flat `key = value` config file; values parsed as int/float/str."""
    overrides = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            for cast in (int, float):
                try:
                    value = cast(value)
                    break
                except ValueError:
                    continue
            overrides[key] = value
    return overrides


def _constants_from(args) -> Constants:
    base = Constants.paper() if getattr(args, "paper_constants", False) else DEFAULT_CONSTANTS
    overrides = {}
    for item in getattr(args, "const", None) or []:
        key, _, value = item.partition("=")
        overrides[key] = float(value)
    return base.override(**overrides) if overrides else base


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--trials", type=int, default=1)
    sub.add_argument("--eps", type=float, default=0.4)
    sub.add_argument("--csv", type=str, default="", help="write per-trial CSV here")
    sub.add_argument("--timing", action="store_true", help="include wall-time ms in CSV")
    sub.add_argument("--samples", type=int, default=0, help="per-side sample budget override")
    sub.add_argument("--const", action="append", metavar="NAME=VALUE",
                     help="override a calibration constant")
    sub.add_argument("--paper-constants", action="store_true",
                     help="use the literal worst-case constants (not desk-runnable)")
    sub.add_argument("--config", type=str, default="", help="flat key=value config file")


def _apply_file_overrides(args):
    if getattr(args, "config", ""):
        for key, value in _read_config_file(args.config).items():
            if hasattr(args, key):
                setattr(args, key, value)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="citest", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    mi = subs.add_parser("mi-test", parents=[], help="independence tester trials")
    _add_common(mi)
    mi.add_argument("--d-a", type=int, default=16)
    mi.add_argument("--d-c", type=int, default=16)
    mi.add_argument("--instance", choices=["null", "far"], default="null")
    mi.add_argument("--inst-n", type=int, default=0)
    mi.add_argument("--samples-p", type=str, default="", help="file of `a c` sample rows")
    mi.add_argument("--samples-q", type=str, default="", help="file of `a c` sample rows")

    cmi = subs.add_parser("cmi-test", help="conditional-independence tester trials")
    _add_common(cmi)
    cmi.add_argument("--d-a", type=int, default=8)
    cmi.add_argument("--d-b", type=int, default=12)
    cmi.add_argument("--d-c", type=int, default=8)
    cmi.add_argument("--instance", choices=["null", "far"], default="null")
    cmi.add_argument("--inst-n", type=int, default=0)
    cmi.add_argument("--regime", choices=["small", "large", "both"], default="both")

    eq = subs.add_parser("equiv-test", help="Z equivalence tester trials")
    _add_common(eq)
    eq.add_argument("--d", type=int, default=100)
    eq.add_argument("--b", type=float, default=0.0, help="l2-norm promise (0: derive)")
    eq.add_argument("--instance", choices=["null", "far"], default="null")

    sim = subs.add_parser("simulate", help="emit simulator outputs for inspection")
    _add_common(sim)
    sim.add_argument("--sim", choices=["mix", "product", "simabc", "simabc-ci", "simabc-ci-large"],
                     required=True)
    sim.add_argument("--d-a", type=int, default=4)
    sim.add_argument("--d-b", type=int, default=6)
    sim.add_argument("--d-c", type=int, default=4)
    sim.add_argument("--n", type=int, default=24)
    sim.add_argument("--eta", type=float, default=0.5)

    vl = subs.add_parser("verify-lemmas", help="closed-form lemma verification report")
    _add_common(vl)

    pc = subs.add_parser("power-curve", help="rate sweeps and N* bisection")
    _add_common(pc)
    pc.add_argument("--tester", choices=["mi", "cmi", "equiv-z"], default="mi")
    pc.add_argument("--d-a", type=int, default=16)
    pc.add_argument("--d-b", type=int, default=1)
    pc.add_argument("--d-c", type=int, default=4)
    pc.add_argument("--sweep", type=str, default="", help="comma list of swept values")
    pc.add_argument("--sweep-var", type=str, default="d_A")
    pc.add_argument("--bisect", action="store_true")
    pc.add_argument("--n-grid", type=str, default="", help="comma list of budgets")
    pc.add_argument("--inst-n", type=int, default=0)
    return parser


def _load_samples_file(path: str) -> np.ndarray:
    return np.loadtxt(path, dtype=np.int64, ndmin=2)


def _emit(text: str, path: str):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cli_dispatch(argv: list[str]) -> int:
    """Run a subcommand; exit code 0 = Yes, 1 = No, 2 = Abort, 64+ = usage."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_file_overrides(args)
    constants = _constants_from(args)

    if args.command == "verify-lemmas":
        report = verify_lemmas(args.seed)
        _emit(lemmas_csv(report, args.seed), args.csv)
        return 0 if all(e["passed"] for e in report) else 1

    if args.command == "simulate":
        return _run_simulate(args)

    if args.command == "power-curve":
        config = ExperimentConfig(
            tester=args.tester, d_A=args.d_a, d_B=args.d_b, d_C=args.d_c,
            eps=args.eps, trials=args.trials, seed=args.seed, inst_n=args.inst_n,
            constants=constants,
        )
        sweep = [int(tok) for tok in args.sweep.split(",") if tok]
        n_grid = [int(tok) for tok in args.n_grid.split(",") if tok] or None
        result = power_curve(config, sweep or [config.d_A], args.sweep_var,
                             trials=args.trials, bisect=args.bisect, n_grid=n_grid)
        _emit(power_csv(result, config), args.csv)
        return 0

    if args.command == "mi-test":
        if args.samples_p and args.samples_q:
            rng = trial_rng(args.seed, 0)
            verdict = mi_test(
                _load_samples_file(args.samples_p), _load_samples_file(args.samples_q),
                args.d_a, args.d_c, args.eps, rng, constants,
            )
            sys.stdout.write(f"{verdict.outcome}\n")
            return verdict.exit_code()
        config = ExperimentConfig(
            tester="mi", d_A=args.d_a, d_C=args.d_c, eps=args.eps, trials=args.trials,
            seed=args.seed, instance=args.instance, inst_n=args.inst_n,
            budget_override=args.samples, constants=constants,
        )
    elif args.command == "cmi-test":
        tester = {"both": "cmi", "small": "cmi-small", "large": "cmi-large"}[args.regime]
        config = ExperimentConfig(
            tester=tester, d_A=args.d_a, d_B=args.d_b, d_C=args.d_c, eps=args.eps,
            trials=args.trials, seed=args.seed, instance=args.instance,
            inst_n=args.inst_n, budget_override=args.samples, constants=constants,
        )
    else:
        config = ExperimentConfig(
            tester="equiv-z", d_A=args.d, eps=args.eps, trials=args.trials,
            seed=args.seed, instance=args.instance, budget_override=args.samples,
            constants=constants,
        )

    reports = run_trials(config)
    if args.csv:
        _emit(trials_csv(reports, config, include_timing=args.timing), args.csv)
    else:
        for r in reports:
            sys.stdout.write(f"trial={r.trial} verdict={r.verdict} samples={r.samples_used}\n")
    if config.trials == 1:
        return {YES: 0, NO: 1}.get(reports[0].verdict, 2)
    return 0


def _run_simulate(args) -> int:
    from .cmitester import sim_abc_ci, sim_abc_ci_large
    from .reduction import mix_sample

    rng = trial_rng(args.seed, 0)
    dims = (args.d_a, args.d_b, args.d_c)
    joint = Joint3.random(*dims, rng)
    triplets = sample(joint, args.n, rng)
    if args.sim == "mix":
        out = mix_sample(triplets, args.d_a, args.d_c, args.eta, rng)
        for row in out:
            sys.stdout.write(" ".join(map(str, row)) + "\n")
        return 0
    if args.sim == "product":
        pairs = sample(Joint2.random(args.d_a, args.d_c, rng), 2 * args.n, rng)
        out = simulate_product_samples(pairs)
        for row in out:
            sys.stdout.write(" ".join(map(str, row)) + "\n")
        return 0
    b_small = np.ones(args.d_b, dtype=bool)
    if args.sim == "simabc":
        counts = sim_abc(triplets, b_small, dims, rng)
    elif args.sim == "simabc-ci":
        counts = sim_abc_ci(triplets, b_small, dims, rng)
    else:
        out, aborted = sim_abc_ci_large(triplets, np.ones(args.d_b, dtype=bool), rng)
        if aborted:
            sys.stdout.write("Abort\n")
            return 2
        for row in out:
            sys.stdout.write(" ".join(map(str, row)) + "\n")
        return 0
    for idx, cnt in zip(counts.indices, counts.counts):
        a, b, c = np.unravel_index(idx, dims)
        sys.stdout.write(f"{a} {b} {c} {cnt}\n")
    return 0


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
