"""Seeded synthetic data and Monte Carlo studies of the estimator."""
from __future__ import annotations

import configparser
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    AllCensored,
    AllRestartsCollapsed,
    ClassCollapse,
    GainClassError,
    MembershipMatrix,
    MixtureParams,
    OptimizerConfig,
    SampleSet,
    SoftMembership,
    derive_seed,
    entropy2,
    seeded_rng,
)
from .optimizer import certify, multi_start
from .types_method import (
    RegionSpec,
    build_grid,
    exponent_lower_bound_grid,
    histogram_type,
    kl_density_quadrature,
    lemma2_sides,
    mixture_support,
)

PARAM_NAMES = ("alpha1", "alpha2", "mu1", "mu2", "var1", "var2")
MODES = ("consistency", "theorem4", "exponent")
CERT_TOL = 1e-7


class PlanError(GainClassError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def sample_mixture(theta_star: MixtureParams, n: int, rng: np.random.Generator):
    """Draw ``n`` samples; returns ``(SampleSet, labels)`` with 0-based latent labels."""
    labels = (rng.random(n) >= theta_star.alpha[0]).astype(np.int64)
    mu = np.asarray(theta_star.mu)[labels]
    sd = np.sqrt(np.asarray(theta_star.var))[labels]
    return SampleSet(rng.normal(mu, sd)), labels


def misclassification_rate(labels, m: MembershipMatrix) -> float:
    """Fraction of mislabeled samples under the better of the two label permutations."""
    if m.kind != "hard":
        raise SoftMembership("misclassification needs hard memberships; round first")
    pred = m.labels()
    wrong = float(np.mean(pred != np.asarray(labels)))
    return min(wrong, 1.0 - wrong)


def bayes_rate(theta: MixtureParams, n_points: int = 200_000) -> float:
    """Error of the MAP rule under the true model, ``int min(a1 f1, a2 f2)``, by midpoint quadrature."""
    lo, hi = mixture_support(theta)
    h = (hi - lo) / n_points
    x = lo + h * (np.arange(n_points) + 0.5)
    comp = np.exp(theta.component_logpdf(x))
    return float(np.minimum(comp[0], comp[1]).sum() * h)


def outlier_event_rate(theta_star: MixtureParams, n: int, trials: int, rng: np.random.Generator,
                       m_bound: float, chunk: int = 2_000_000) -> tuple[int, int]:
    """Monte Carlo count of trials in which some ``|x_n| >= m_bound``; returns ``(events, trials)``."""
    per = max(1, chunk // n)
    events = 0
    done = 0
    while done < trials:
        t = min(per, trials - done)
        x = sample_mixture(theta_star, n * t, rng)[0].values.reshape(t, n)
        events += int(np.any(np.abs(x) >= m_bound, axis=1).sum())
        done += t
    return events, trials


def aligned_errors(theta_hat: MixtureParams, theta_star: MixtureParams):
    """Resolve the label permutation minimizing summed absolute error.

    Returns ``(aligned theta_hat, {param: abs error})``; the identity wins ties.
    """
    def errs(t):
        a = (t.alpha[0], t.alpha[1], t.mu[0], t.mu[1], t.var[0], t.var[1])
        b = (theta_star.alpha[0], theta_star.alpha[1], theta_star.mu[0], theta_star.mu[1],
             theta_star.var[0], theta_star.var[1])
        return {k: abs(u - v) for k, u, v in zip(PARAM_NAMES, a, b)}

    e0, sw = errs(theta_hat), theta_hat.swapped()
    e1 = errs(sw)
    if sum(e1.values()) < sum(e0.values()):
        return sw, e1
    return theta_hat, e0


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    n: int
    theta_hat: MixtureParams | None
    log_gain: float
    kl_star_to_hat: float
    param_errors: dict
    certificate_passed: bool
    in_region: bool
    collapsed: bool = False
    misclassification: float = math.nan
    outliers: int = 0
    lemma2_lhs: float = math.nan
    lemma2_rhs: float = math.nan

    CSV_FIELDS = (
        ["trial_id", "n", "collapsed"] + list(PARAM_NAMES) + ["log_gain", "kl_star_to_hat"]
        + [f"err_{k}" for k in PARAM_NAMES]
        + ["certificate_passed", "in_region", "misclassification", "outliers", "lemma2_lhs", "lemma2_rhs"]
    )

    def csv_row(self) -> list:
        th = self.theta_hat
        vals = [math.nan] * 6 if th is None else [*th.alpha, *th.mu, *th.var]
        errs = [self.param_errors.get(k, math.nan) for k in PARAM_NAMES]
        return (
            [self.trial_id, self.n, int(self.collapsed)] + vals + [self.log_gain, self.kl_star_to_hat] + errs
            + [int(self.certificate_passed), int(self.in_region), self.misclassification, self.outliers,
               self.lemma2_lhs, self.lemma2_rhs]
        )


@dataclass(frozen=True)
class ExperimentPlan:
    theta_star: MixtureParams
    n_values: tuple
    trials_per_n: int
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    c: float = 1.0
    zeta: float = 0.1
    eta: float = 0.2
    region: RegionSpec | None = None
    mode: str = "consistency"
    epsilon: float = 0.1
    method: str = "fixed_point"
    scan_resolution: int = 3
    quad_points: int = 100_000

    def __post_init__(self):
        nv = tuple(int(v) for v in self.n_values)
        if not nv:
            raise PlanError("n_values", "must not be empty")
        if any(b <= a for a, b in zip(nv, nv[1:])):
            raise PlanError("n_values", f"must be strictly increasing, got {list(nv)}")
        if min(nv) < 2:
            raise PlanError("n_values", "every N must be at least 2")
        object.__setattr__(self, "n_values", nv)
        if self.trials_per_n < 1:
            raise PlanError("trials_per_n", "must be >= 1")
        if self.mode not in MODES:
            raise PlanError("mode", f"must be one of {MODES}")
        if self.mode == "exponent":
            if self.region is None:
                raise PlanError("region", "exponent plans need a region")
            if self.region.contains_unlabeled(self.theta_star):
                raise PlanError("region", "region must exclude the true parameters")
        # fail early on bad grid constants
        try:
            build_grid(nv[0], self.c, self.zeta, self.eta)
        except GainClassError as exc:
            raise PlanError("grid", str(exc)) from None


def run_trial(plan: ExperimentPlan, n: int, trial_id: int) -> TrialRecord:
    """One trial: sample, optimize, certify and score. Pure function of ``(plan, n, trial_id)``."""
    rng = seeded_rng(plan.seed, (n, trial_id))
    samples, labels = sample_mixture(plan.theta_star, n, rng)
    cfg = replace(plan.optimizer, seed=derive_seed(plan.seed, (n, trial_id, 1)))
    grid = build_grid(n, plan.c, plan.zeta, plan.eta)
    hist = histogram_type(samples, grid)
    try:
        sol = multi_start(samples, cfg, plan.method)
    except (AllRestartsCollapsed, ClassCollapse):
        return TrialRecord(trial_id, n, None, math.nan, math.inf, {}, False, False, collapsed=True,
                           outliers=hist.outliers)
    theta_hat, errors = aligned_errors(sol.params, plan.theta_star)
    kl = kl_density_quadrature(plan.theta_star, sol.params, mixture_support(plan.theta_star), plan.quad_points)
    cert = certify(samples, sol, CERT_TOL)
    mis = misclassification_rate(labels, sol.memberships) if sol.memberships.kind == "hard" else math.nan
    in_region = plan.region.contains_unlabeled(sol.params) if plan.region is not None else False
    lhs = rhs = math.nan
    if hist.outliers == 0:
        lhs, rhs = lemma2_sides(hist, sol.params, grid)
    return TrialRecord(trial_id, n, theta_hat, sol.log_gain, kl, errors, cert.passed, in_region,
                       misclassification=mis, outliers=hist.outliers, lemma2_lhs=lhs, lemma2_rhs=rhs)


def _run_one(args):
    plan, n, t = args
    return run_trial(plan, n, t)


def run_trials(plan: ExperimentPlan, workers: int = 1, progress=None) -> list[TrialRecord]:
    """All trials of the plan in ``(n, trial_id)`` order, regardless of worker count."""
    records = []
    for n in plan.n_values:
        jobs = [(plan, n, t) for t in range(plan.trials_per_n)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                batch = list(ex.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
        else:
            batch = [_run_one(j) for j in jobs]
        records.extend(batch)
        if progress is not None:
            progress(n, batch)
    return records


def _by_n(records):
    out = {}
    for r in records:
        out.setdefault(r.n, []).append(r)
    return out


def summarize_consistency(records: list[TrialRecord]) -> dict:
    rows = []
    for n, recs in sorted(_by_n(records).items()):
        ok = [r for r in recs if not r.collapsed]
        row = {"n": n, "trials": len(recs), "collapsed": len(recs) - len(ok)}
        for k in PARAM_NAMES:
            e = np.array([r.param_errors[k] for r in ok]) if ok else np.array([math.nan])
            row[f"median_err_{k}"] = float(np.median(e))
            row[f"p90_err_{k}"] = float(np.percentile(e, 90))
        mu = np.array([max(r.param_errors["mu1"], r.param_errors["mu2"]) for r in ok]) if ok else np.array([math.nan])
        row["median_error"] = float(np.median(mu))
        row["certificate_pass_rate"] = float(np.mean([r.certificate_passed for r in ok])) if ok else 0.0
        mis = [r.misclassification for r in ok if not math.isnan(r.misclassification)]
        row["median_misclassification"] = float(np.median(mis)) if mis else math.nan
        row["median_kl_star_to_hat"] = float(np.median([r.kl_star_to_hat for r in ok])) if ok else math.inf
        rows.append(row)
    return {"rows": rows}


def run_consistency(plan: ExperimentPlan, workers: int = 1, progress=None):
    """Returns ``(records, summary)`` with per-N median and 90th-percentile errors."""
    records = run_trials(plan, workers, progress)
    summary = summarize_consistency(records)
    summary["bayes_rate"] = bayes_rate(plan.theta_star)
    return records, summary


def theorem4_fractions(records, theta_star: MixtureParams, epsilon: float) -> dict:
    bound = entropy2(theta_star.alpha[0]) + epsilon
    out = {}
    for n, recs in sorted(_by_n(records).items()):
        out[n] = float(np.mean([r.kl_star_to_hat <= bound for r in recs]))
    return out


def run_theorem4(plan: ExperimentPlan, epsilon: float | None = None, workers: int = 1, progress=None):
    """Fraction of trials per N whose divergence from the truth is at most ``H(alpha*) + epsilon``.

    Returns ``(fractions, records, summary)``; collapsed trials count as failures.
    """
    eps = plan.epsilon if epsilon is None else epsilon
    records = run_trials(plan, workers, progress)
    fr = theorem4_fractions(records, plan.theta_star, eps)
    summary = summarize_consistency(records)
    summary.update({
        "epsilon": eps,
        "bound": entropy2(plan.theta_star.alpha[0]) + eps,
        "fractions": {str(n): f for n, f in fr.items()},
    })
    return fr, records, summary


def wilson_interval(hits: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    from statsmodels.stats.proportion import proportion_confint

    lo, hi = proportion_confint(hits, trials, alpha=alpha, method="wilson")
    # the closed form leaves ~1e-19 residue at zero hits
    p = hits / trials
    return float(min(lo, p)), float(max(hi, p))


def exponent_rows(records, plan: ExperimentPlan) -> list[dict]:
    rows = []
    for n, recs in sorted(_by_n(records).items()):
        hits = sum(r.in_region for r in recs)
        t = len(recs)
        lo, hi = wilson_interval(hits, t)
        row = {"n": n, "trials": t, "hits": hits, "p_hat": hits / t, "wilson_lo": lo, "wilson_hi": hi,
               "censored": hits == 0, "collapsed": sum(r.collapsed for r in recs)}
        if hits:
            row["neg_log_rate"] = -math.log(hits / t) / n
        else:
            # rule of three: one-sided 95% upper bound on p when no success is seen
            row["p_upper"] = 3.0 / t
            row["neg_log_rate"] = None
            row["neg_log_rate_lower"] = -math.log(min(1.0, 3.0 / t)) / n
        rows.append(row)
    return rows


def fit_slope(rows) -> float | None:
    """Least-squares slope of ``-ln p_hat`` against N over uncensored rows."""
    pts = [(r["n"], -math.log(r["p_hat"])) for r in rows if not r["censored"]]
    if len(pts) < 2:
        return None
    n, y = np.array(pts, dtype=float).T
    return float(np.polyfit(n, y, 1)[0])


def run_exponent(plan: ExperimentPlan, workers: int = 1, progress=None, with_scan: bool = True):
    """Empirical probability that the estimate lands in ``plan.region``, per N.

    Returns ``(summary, records)``; the summary carries per-N rows, the fitted
    slope and, informationally, the parametric-family divergence scan.
    """
    records = run_trials(plan, workers, progress)
    rows = exponent_rows(records, plan)
    if all(r["censored"] for r in rows):
        raise AllCensored("no trial landed in the region at any N")
    summary = {"rows": rows, "slope": fit_slope(rows), "region": plan.region.to_dict()}
    if with_scan:
        region = plan.region if plan.region.is_bounded() else plan.region.bounded_around(plan.theta_star)
        try:
            summary["scan_divergence"] = exponent_lower_bound_grid(region, plan.theta_star, plan.scan_resolution,
                                                                   n_points=20_000)
        except GainClassError as exc:
            summary["scan_divergence"] = None
            summary["scan_error"] = str(exc)
    return summary, records


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_csv(records) -> str:
    buf = io.StringIO()
    buf.write(",".join(TrialRecord.CSV_FIELDS) + "\n")
    for r in records:
        buf.write(",".join(_fmt(v) for v in r.csv_row()) + "\n")
    return buf.getvalue()


def plot_csv(summary: dict, mode: str) -> str:
    lines = ["n,median_error,p_hat,neg_log_rate"]
    for row in summary["rows"]:
        p = row.get("p_hat", "")
        nl = row.get("neg_log_rate", "")
        lines.append(",".join(_fmt(v) for v in (row["n"], row.get("median_error", ""), p, "" if nl is None else nl)))
    return "\n".join(lines) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _finite(o):
    # strict JSON has no inf/nan; encode them as strings / null
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def summary_json(summary: dict) -> str:
    return json.dumps(_finite(summary), sort_keys=True, indent=2, default=_json_default, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# plan files


def _pair(key, val):
    parts = [p.strip() for p in val.split(",")]
    if len(parts) != 2:
        raise PlanError(key, f"expected two comma-separated numbers, got {val!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise PlanError(key, f"not a number in {val!r}") from None


def parse_plan(text: str) -> ExperimentPlan:
    """Parse a flat ``key = value`` plan (dotted keys group related settings)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string("[plan]\n" + text)
    except configparser.Error as exc:
        raise PlanError("plan", str(exc)) from None
    items = dict(cp["plan"])

    def take(key, conv, default=None, required=False):
        if key not in items:
            if required:
                raise PlanError(key, "missing")
            return default
        raw = items.pop(key)
        try:
            return conv(raw)
        except PlanError:
            raise
        except (ValueError, TypeError) as exc:
            raise PlanError(key, str(exc)) from None

    def boolean(v):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")

    try:
        theta = MixtureParams(
            take("theta_star.alpha", lambda v: _pair("theta_star.alpha", v), required=True),
            take("theta_star.mu", lambda v: _pair("theta_star.mu", v), required=True),
            take("theta_star.var", lambda v: _pair("theta_star.var", v), required=True),
        )
    except GainClassError as exc:
        if isinstance(exc, PlanError):
            raise
        raise PlanError("theta_star", str(exc)) from None

    opt_kw = {}
    for key, conv in (("max_iters", int), ("tol_objective", float), ("restarts", int), ("variance_floor", float),
                      ("step_size", float), ("tie_rule", str), ("polish", boolean), ("interval_start", boolean)):
        v = take(f"optimizer.{key}", conv)
        if v is not None:
            opt_kw[key] = v
    try:
        opt = OptimizerConfig(**opt_kw)
    except ValueError as exc:
        raise PlanError("optimizer", str(exc)) from None

    region_items = {k.split(".", 1)[1]: items.pop(k) for k in list(items) if k.startswith("region.")}
    region = None
    if region_items:
        region_items.setdefault("var_floor", str(opt.variance_floor))
        try:
            region = RegionSpec.from_mapping(region_items)
        except ValueError as exc:
            raise PlanError("region", str(exc)) from None

    kw = dict(
        theta_star=theta,
        n_values=take("n_values", lambda v: tuple(int(s) for s in v.split(",")), required=True),
        trials_per_n=take("trials_per_n", int, required=True),
        seed=take("seed", int, 0),
        optimizer=opt,
        c=take("grid.c", float, 1.0),
        zeta=take("grid.zeta", float, 0.1),
        eta=take("grid.eta", float, 0.2),
        region=region,
        mode=take("mode", str, "consistency"),
        epsilon=take("epsilon", float, 0.1),
        method=take("optimizer.method", str, "fixed_point"),
        scan_resolution=take("scan.resolution", int, 3),
        quad_points=take("quad.points", int, 100_000),
    )
    if items:
        raise PlanError(sorted(items)[0], "unknown key")
    if kw["method"] not in ("fixed_point", "soft_descent"):
        raise PlanError("optimizer.method", f"unknown method {kw['method']!r}")
    return ExperimentPlan(**kw)


def bundled_plans() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("gainclass").joinpath("plans").iterdir()
                  if p.name.endswith(".cfg"))


def load_plan(path_or_name) -> ExperimentPlan:
    """Read a plan file, or a bundled plan by name (e.g. ``theorem4_default``)."""
    p = Path(path_or_name)
    if p.is_file():
        return parse_plan(p.read_text())
    name = str(path_or_name)
    res = resources.files("gainclass").joinpath("plans", f"{name}.cfg")
    if res.is_file():
        return parse_plan(res.read_text())
    raise PlanError("plan", f"no plan file or bundled plan named {name!r}")


def progress_printer(stream=None):
    stream = stream or sys.stderr

    def report(n, batch):
        collapsed = sum(r.collapsed for r in batch)
        print(f"N={n}: {len(batch)} trials done ({collapsed} collapsed)", file=stream, flush=True)

    return report
