import json
import math

import numpy as np
import pytest

from gainclass.core import AllCensored, MembershipMatrix, MixtureParams, OptimizerConfig, SoftMembership, seeded_rng
from gainclass.experiments import (
    ExperimentPlan,
    PlanError,
    aligned_errors,
    bayes_rate,
    bundled_plans,
    load_plan,
    misclassification_rate,
    outlier_event_rate,
    parse_plan,
    plot_csv,
    records_csv,
    run_consistency,
    run_exponent,
    run_theorem4,
    run_trials,
    sample_mixture,
    summary_json,
)
from gainclass.types_method import RegionSpec, build_grid

SEP = MixtureParams.of(0.5, -3, 3, 1, 1)
OVERLAP = MixtureParams.of(0.5, -1, 1, 1, 1)


class TestSampling:
    def test_clt_oracle(self):
        n = 100_000
        s, lab = sample_mixture(SEP, n, seeded_rng(1, 0))
        x = s.values
        assert abs(x.mean()) <= 3 * x.std() / math.sqrt(n)
        assert abs(lab.mean() - 0.5) <= 3 * 0.5 / math.sqrt(n)

    def test_component_moments(self):
        th = MixtureParams.of(0.3, -2, 4, 0.5, 2.0)
        s, lab = sample_mixture(th, 50_000, seeded_rng(2, 0))
        x = s.values
        assert x[lab == 0].mean() == pytest.approx(-2, abs=0.05)
        assert x[lab == 1].var() == pytest.approx(2.0, rel=0.05)

    def test_deterministic(self):
        a = sample_mixture(SEP, 100, seeded_rng(5, (1, 2)))
        b = sample_mixture(SEP, 100, seeded_rng(5, (1, 2)))
        assert np.array_equal(a[0].values, b[0].values) and np.array_equal(a[1], b[1])


class TestMisclassification:
    lab = np.array([0, 0, 1, 1, 0, 1, 0, 1, 1, 0])

    def test_perfect(self):
        assert misclassification_rate(self.lab, MembershipMatrix.from_labels(self.lab)) == 0.0

    def test_inverted(self):
        assert misclassification_rate(self.lab, MembershipMatrix.from_labels(1 - self.lab)) == 0.0

    def test_one_wrong(self):
        pred = self.lab.copy()
        pred[3] = 0
        assert misclassification_rate(self.lab, MembershipMatrix.from_labels(pred)) == pytest.approx(0.1)

    def test_soft(self):
        with pytest.raises(SoftMembership):
            misclassification_rate([0, 1], MembershipMatrix.from_m1([0.3, 0.6]))

    def test_bayes_rate_closed_form(self):
        from scipy.stats import norm

        assert bayes_rate(SEP) == pytest.approx(norm.cdf(-3), abs=1e-9)


def test_aligned_errors_swapped_labels():
    th = MixtureParams.of(0.4, -2.9, 3.2, 1.1, 0.8)
    a, ea = aligned_errors(th, SEP)
    b, eb = aligned_errors(th.swapped(), SEP)
    assert a == b and ea == eb


class TestPlan:
    def test_not_increasing(self):
        with pytest.raises(PlanError) as exc:
            ExperimentPlan(SEP, (100, 50), 3)
        assert exc.value.key == "n_values"

    def test_trials(self):
        with pytest.raises(PlanError, match="trials_per_n"):
            ExperimentPlan(SEP, (100,), 0)

    def test_region_must_exclude_truth(self):
        with pytest.raises(PlanError, match="region"):
            ExperimentPlan(SEP, (100,), 1, region=RegionSpec(mu1=(-4, 4)), mode="exponent")

    def test_parse_names_key(self):
        text = "theta_star.alpha = 0.5,0.5\ntheta_star.mu = -3,3\ntheta_star.var = 1,1\nn_values = 10\ntrials_per_n = x\n"
        with pytest.raises(PlanError) as exc:
            parse_plan(text)
        assert exc.value.key == "trials_per_n"

    def test_unknown_key(self):
        text = "theta_star.alpha = 0.5,0.5\ntheta_star.mu = -3,3\ntheta_star.var = 1,1\nn_values = 10\ntrials_per_n = 1\nbogus = 1\n"
        with pytest.raises(PlanError, match="bogus"):
            parse_plan(text)

    def test_missing_key(self):
        with pytest.raises(PlanError, match="theta_star.alpha"):
            parse_plan("n_values = 10\ntrials_per_n = 1\n")

    def test_bundled(self):
        assert {"theorem4_default", "consistency_default", "exponent_default"} <= set(bundled_plans())
        p = load_plan("exponent_default")
        assert p.mode == "exponent" and p.region.mu1 == (1.9, 2.1)
        assert p.optimizer.variance_floor == 1e-3 and p.region.var_floor == 1e-3
        assert load_plan("theorem4_default").n_values == (4000,)


def small_plan(**kw):
    base = dict(theta_star=SEP, n_values=(60, 120), trials_per_n=4, seed=3, optimizer=OptimizerConfig(restarts=3))
    base.update(kw)
    return ExperimentPlan(**base)


class TestRuns:
    def test_worker_count_invariance(self):
        p = small_plan()
        a = records_csv(run_trials(p, workers=1))
        b = records_csv(run_trials(p, workers=2))
        assert a == b

    def test_rerun_identical(self):
        p = small_plan()
        r1, s1 = run_consistency(p)
        r2, s2 = run_consistency(p)
        assert records_csv(r1) == records_csv(r2) and summary_json(s1) == summary_json(s2)

    def test_summary_json_strict(self):
        _, s = run_consistency(small_plan())
        json.loads(summary_json(s), parse_constant=lambda c: pytest.fail(f"non-standard constant {c}"))

    def test_csv_shape(self):
        recs = run_trials(small_plan())
        lines = records_csv(recs).splitlines()
        assert len(lines) == 1 + 8
        assert all(len(l.split(",")) == len(lines[0].split(",")) for l in lines)

    def test_divergence_fraction_infinite_epsilon(self):
        fr, _, _ = run_theorem4(small_plan(), math.inf)
        assert all(v == 1.0 for v in fr.values())

    def test_divergence_bound_constant(self):
        _, _, s = run_theorem4(small_plan(), 0.1)
        assert s["bound"] == pytest.approx(math.log(2) + 0.1)

    def test_identical_components_recorded(self):
        recs, s = run_consistency(small_plan(theta_star=MixtureParams.of(0.5, 0, 0, 1, 1)))
        assert len(recs) == 8 and len(s["rows"]) == 2

    def test_exponent_censored(self):
        p = small_plan(region=RegionSpec(mu1=(50, 51)), mode="exponent")
        with pytest.raises(AllCensored):
            run_exponent(p)

    def test_exponent_rows(self):
        p = ExperimentPlan(OVERLAP, (40, 80), 60, seed=1, optimizer=OptimizerConfig(restarts=2, variance_floor=1e-3),
                           region=RegionSpec(mu1=(1.3, 3.0), var_floor=1e-3), mode="exponent")
        s, _ = run_exponent(p, with_scan=False)
        for row in s["rows"]:
            assert row["wilson_lo"] <= row["p_hat"] <= row["wilson_hi"]
            if not row["censored"]:
                assert row["neg_log_rate"] >= 0
        assert "n,median_error,p_hat,neg_log_rate" == plot_csv(s, "exponent").splitlines()[0]

    def test_consistency_errors_shrink(self):
        p = ExperimentPlan(SEP, (250, 1000, 4000), 50, seed=2025)
        _, s = run_consistency(p)
        for k in ("mu1", "mu2"):
            med = [r[f"median_err_{k}"] for r in s["rows"]]
            assert med[0] > med[1] > med[2]

    def test_misclassification_near_bayes(self):
        p = ExperimentPlan(SEP, (2000,), 20, seed=8)
        _, s = run_consistency(p)
        assert s["rows"][0]["median_misclassification"] < bayes_rate(SEP) + 0.02


def test_outlier_event_rate_zero():
    g = build_grid(100)
    ev, t = outlier_event_rate(SEP, 100, 1000, seeded_rng(0, 0), g.m_bound)
    assert ev == 0 and t == 1000
    ev, _ = outlier_event_rate(SEP, 100, 200, seeded_rng(0, 0), 3.0)
    assert ev > 0


def test_wilson_contains_estimate():
    from gainclass.experiments import wilson_interval

    for hits in (0, 1, 1000, 2000):
        lo, hi = wilson_interval(hits, 2000)
        assert 0 <= lo <= hits / 2000 <= hi <= 1
    assert wilson_interval(0, 2000)[0] == 0.0
