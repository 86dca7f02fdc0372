"""Tests for trial orchestration, lemma verification, CSV determinism, and the
command-line interface."""

import math
import subprocess
import sys

import numpy as np
import pytest

from citest.config import Constants, trial_rng
from citest.distributions import Dist, lp_dist, gen_hard_mi, sample, save_tensor
from citest.harness import (
    ExperimentConfig,
    TrialReport,
    cli_dispatch,
    lemmas_csv,
    planted_l2_pair,
    power_csv,
    power_curve,
    run_trials,
    summarize,
    trials_csv,
    verify_lemmas,
    wilson_interval,
)
from citest.mitester import simulate_product_samples
from citest.verdict import NO, YES


class TestWilson:
    def test_full_range_on_empty(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_contains_point_estimate(self):
        lo, hi = wilson_interval(70, 100)
        assert lo < 0.7 < hi

    def test_narrower_with_more_data(self):
        lo1, hi1 = wilson_interval(70, 100)
        lo2, hi2 = wilson_interval(700, 1000)
        assert hi2 - lo2 < hi1 - lo1

    def test_known_value(self):
        # k=30/n=100 at 95%: upper bound just below 0.40
        _, hi = wilson_interval(30, 100)
        assert hi == pytest.approx(0.3958, abs=1e-3)


class TestPlantedPair:
    def test_exact_l2_distance(self):
        p, q = planted_l2_pair(100, 0.05)
        assert lp_dist(p, q, 2) == pytest.approx(0.05, abs=1e-12)

    def test_rejects_oversized_perturbation(self):
        with pytest.raises(ValueError):
            planted_l2_pair(400, 0.5)


class TestVerifyLemmas:
    def test_all_pass(self):
        report = verify_lemmas(7)
        assert all(entry["passed"] for entry in report)
        names = {entry["lemma"] for entry in report}
        assert {"exp_bounds_unit_interval", "mi_chi_squared_sandwich",
                "z_mean_identity", "z_variance_bound"} <= names

    def test_byte_identical_reports(self):
        a = lemmas_csv(verify_lemmas(7), 7)
        b = lemmas_csv(verify_lemmas(7), 7)
        assert a == b

    def test_different_seed_differs_in_margins(self):
        a = lemmas_csv(verify_lemmas(1), 1)
        b = lemmas_csv(verify_lemmas(2), 2)
        assert a != b

    def test_exp_bound_tight_at_zero(self):
        # x=0 gives equality in both exponential bounds
        assert (1 - 0 + 0 / 4) == math.exp(0.0)

    def test_independent_pair_trivial_sandwich(self):
        # independent X, A: I = 0 and chi-sum = 0 (asserted inside the check)
        report = verify_lemmas(3)
        entry = next(e for e in report if e["lemma"] == "mi_chi_squared_sandwich")
        assert entry["passed"] and entry["violations"] == 0


class TestTrialCSV:
    def test_deterministic_bytes(self):
        cfg = ExperimentConfig(tester="equiv-z", d_A=64, eps=0.1, trials=5, seed=9,
                               instance="null")
        a = trials_csv(run_trials(cfg), cfg)
        b = trials_csv(run_trials(cfg), cfg)
        assert a == b
        assert "config_hash" in a.splitlines()[-6]

    def test_timing_column_opt_in(self):
        cfg = ExperimentConfig(tester="equiv-z", d_A=64, eps=0.1, trials=2, seed=9)
        reports = run_trials(cfg)
        bare = trials_csv(reports, cfg)
        timed = trials_csv(reports, cfg, include_timing=True)
        assert bare.splitlines()[-1].endswith(",")
        assert not timed.splitlines()[-1].endswith(",")

    def test_budget_assertion(self):
        with pytest.raises(AssertionError):
            TrialReport(trial=0, seed=0, verdict=YES, statistic=0.0,
                        samples_used=100, budget=50, wall_ms=0.0)


class TestRunners:
    def test_equiv_z_both_sides(self):
        null = summarize(run_trials(ExperimentConfig(
            tester="equiv-z", d_A=100, eps=0.05, trials=30, seed=5, instance="null")),
            expect=YES)
        far = summarize(run_trials(ExperimentConfig(
            tester="equiv-z", d_A=100, eps=0.05, trials=30, seed=6, instance="far")),
            expect=NO)
        assert null["rate"] >= 2 / 3
        assert far["rate"] >= 2 / 3

    def test_mi_runner_smoke(self):
        rep = run_trials(ExperimentConfig(tester="mi", d_A=16, d_C=16, eps=0.4,
                                          trials=2, seed=11, instance="null"))
        assert all(r.verdict == YES for r in rep)
        assert all(r.samples_used <= r.budget for r in rep)


class TestPowerCurve:
    def test_zero_signal_rows(self):
        cfg = ExperimentConfig(tester="equiv-z", d_A=100, eps=0.05, seed=3)
        result = power_curve(cfg, [100], sweep_var="d_A", trials=15,
                             n_grid=[0])
        row = result["rows"][0]
        assert row["yes_rate"] >= 2 / 3
        assert row["no_rate"] >= 2 / 3

    def test_far_rate_monotone_in_budget(self):
        # doubling the budget cannot hurt detection (within interval noise)
        cfg = ExperimentConfig(tester="equiv-z", d_A=256, eps=0.03, seed=4)
        result = power_curve(cfg, [256], sweep_var="d_A", trials=40,
                             n_grid=[300, 1200, 20000])
        rates = [r["no_rate"] for r in result["rows"]]
        assert rates[-1] >= rates[0] - 0.25
        assert rates[-1] >= 2 / 3

    def test_power_csv_shape(self):
        cfg = ExperimentConfig(tester="equiv-z", d_A=100, eps=0.05, seed=3)
        result = power_curve(cfg, [100], sweep_var="d_A", trials=5, n_grid=[0])
        text = power_csv(result, cfg)
        assert text.splitlines()[1].startswith("d_A,")


class TestCLI:
    def test_verify_lemmas_exit_zero(self, capsys):
        assert cli_dispatch(["verify-lemmas", "--seed", "7"]) == 0
        out = capsys.readouterr().out
        assert "lemma,passed,margin" in out

    def test_verify_lemmas_deterministic_file(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        cli_dispatch(["verify-lemmas", "--seed", "7", "--csv", str(p1)])
        cli_dispatch(["verify-lemmas", "--seed", "7", "--csv", str(p2)])
        assert p1.read_bytes() == p2.read_bytes()

    def test_unknown_flag_exits_64(self):
        with pytest.raises(SystemExit) as exc:
            cli_dispatch(["mi-test", "--no-such-flag"])
        assert exc.value.code >= 64

    def test_unknown_command_exits_64(self):
        with pytest.raises(SystemExit) as exc:
            cli_dispatch(["frobnicate"])
        assert exc.value.code >= 64

    def test_equiv_null_exit_codes(self, capsys):
        assert cli_dispatch(["equiv-test", "--d", "100", "--eps", "0.05",
                             "--seed", "1", "--instance", "null"]) == 0
        assert cli_dispatch(["equiv-test", "--d", "100", "--eps", "0.05",
                             "--seed", "1", "--instance", "far"]) == 1

    def test_mi_test_on_sample_files(self, tmp_path, capsys):
        rng = trial_rng(42, 0)
        inst = gen_hard_mi(16, 16, 8, 0.4, 0, rng)
        sp = sample(inst.joint, 750_000, rng)
        sq = simulate_product_samples(sample(inst.joint, 1_500_000, rng))
        fp, fq = tmp_path / "p.txt", tmp_path / "q.txt"
        np.savetxt(fp, sp, fmt="%d")
        np.savetxt(fq, sq, fmt="%d")
        code = cli_dispatch([
            "mi-test", "--samples-p", str(fp), "--samples-q", str(fq),
            "--d-a", "16", "--d-c", "16", "--eps", "0.4", "--seed", "0",
        ])
        assert code == 0

    def test_simulate_deterministic(self, capsys):
        cli_dispatch(["simulate", "--sim", "simabc", "--seed", "3", "--n", "40"])
        first = capsys.readouterr().out
        cli_dispatch(["simulate", "--sim", "simabc", "--seed", "3", "--n", "40"])
        second = capsys.readouterr().out
        assert first == second and first.strip()

    def test_trials_csv_output(self, tmp_path):
        out = tmp_path / "trials.csv"
        code = cli_dispatch(["equiv-test", "--d", "64", "--eps", "0.1",
                             "--trials", "3", "--seed", "2", "--csv", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[-4] == "config_hash,trial,seed,verdict,statistic,samples,ms"
        assert len(lines[-3].split(",")) == 7

    def test_config_file_overrides(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("eps = 0.05\nseed = 1\n")
        assert cli_dispatch(["equiv-test", "--d", "100", "--eps", "0.3",
                             "--instance", "null", "--config", str(cfg)]) == 0

    def test_constant_override_flag(self):
        code = cli_dispatch(["equiv-test", "--d", "100", "--eps", "0.05", "--seed", "1",
                             "--instance", "null", "--const", "c_z=20"])
        assert code == 0

    def test_entry_point_subprocess(self):
        proc = subprocess.run(
            [sys.executable, "-m", "citest.harness", "verify-lemmas", "--seed", "3"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "lemma,passed,margin" in proc.stdout
