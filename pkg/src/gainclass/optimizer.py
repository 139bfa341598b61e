"""Minimization of ln G over memberships, exhaustive ground truth and optimality certificates."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .core import (
    AllRestartsCollapsed,
    ClampActive,
    ClassCollapse,
    EmptyClass,
    MembershipMatrix,
    MixtureParams,
    OptimizerConfig,
    TooLarge,
    as_samples,
    seeded_rng,
)
from .objective import estimate_params, grad_log_gain, log_gain, log_ratio

ORACLE_MAX_N = 20
SADDLE_PERTURBATION = 1e-6

_TIE_WEIGHT = {"assign_to_class1": 1.0, "assign_to_class2": 0.0, "split_half": 0.5}


@dataclass(frozen=True, eq=False)
class Solution:
    memberships: MembershipMatrix
    params: MixtureParams
    log_gain: float
    iterations: int
    converged: bool
    trace: np.ndarray | None = None
    variance_floor: float = 1e-6
    method: str = ""

    def to_dict(self, include_memberships: bool = True) -> dict:
        d = {
            "method": self.method,
            "log_gain": self.log_gain,
            "params": self.params.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "variance_floor": self.variance_floor,
            "kind": self.memberships.kind,
        }
        if include_memberships:
            d["memberships"] = self.memberships.weights.tolist()
        if self.trace is not None:
            d["trace"] = self.trace.tolist()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Solution":
        w = np.asarray(d["memberships"], dtype=np.float64)
        kind = d.get("kind", "soft")
        trace = d.get("trace")
        return cls(
            MembershipMatrix(w, kind),
            MixtureParams.from_dict(d["params"]),
            float(d["log_gain"]),
            int(d.get("iterations", 0)),
            bool(d.get("converged", False)),
            None if trace is None else np.asarray(trace, dtype=np.float64),
            float(d.get("variance_floor", 1e-6)),
            d.get("method", ""),
        )

    def memberships_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,m1,m2\n")
        for n, (a, b) in enumerate(self.memberships.weights.tolist()):
            buf.write(f"{n},{a!r},{b!r}\n")
        return buf.getvalue()

    def trace_csv(self) -> str:
        rows = [] if self.trace is None else self.trace.tolist()
        return "iteration,log_gain\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(rows))


def _solution(x, m1, floor, iterations, converged, trace, method) -> Solution:
    m = MembershipMatrix.from_m1(m1)
    rep = log_gain(x, m, floor)
    return Solution(m, rep.params, rep.log_gain, int(iterations), bool(converged), trace, floor, method)


def fixed_point(samples, init: MembershipMatrix, cfg: OptimizerConfig = OptimizerConfig()) -> Solution:
    """Alternate re-estimation of the class parameters with MAP reassignment.

    Stops at a fixed point of the MAP rule, when ln G decreases by less than
    ``cfg.tol_objective``, or after ``cfg.max_iters`` reassignments. Raises
    :class:`ClassCollapse` if a reassignment empties a class.
    """
    s = as_samples(samples)
    x = s.values
    # rejects empty initial classes with EmptyClass
    estimate_params(s, init, cfg.variance_floor)
    m1, it, trace, status = kernels.fixed_point(
        x, init.m1, cfg.variance_floor, cfg.max_iters, cfg.tol_objective, _TIE_WEIGHT[cfg.tie_rule]
    )
    if status == kernels.COLLAPSE:
        raise ClassCollapse(f"a class emptied after {it} iteration(s)")
    return _solution(s, m1, cfg.variance_floor, it, status == kernels.FIXED, trace, "fixed_point")


def polish(samples, sol: Solution, cfg: OptimizerConfig = OptimizerConfig()) -> Solution:
    """Escape poor fixed points by single-sample flips, re-running the fixed point after each.

    Each accepted flip strictly lowers ln G, so the loop terminates; the
    result is again a fixed point of the MAP rule.
    """
    s = as_samples(samples)
    x = s.values
    if sol.memberships.kind != "hard":
        return sol
    best = sol
    iters = sol.iterations
    trace = [] if sol.trace is None else list(sol.trace)
    for _ in range(cfg.max_iters):
        j, val = kernels.best_flip(x, best.memberships.m1, cfg.variance_floor)
        if j < 0 or not (val < best.log_gain - cfg.tol_objective):
            break
        m1 = best.memberships.m1.copy()
        m1[j] = 1.0 - m1[j]
        flipped = MembershipMatrix.from_m1(m1)
        if not (log_gain(s, flipped, cfg.variance_floor).log_gain < best.log_gain):
            break
        try:
            cand = fixed_point(s, flipped, cfg)
        except ClassCollapse:
            break
        if not (cand.log_gain < best.log_gain):
            break
        iters += cand.iterations
        trace.extend(cand.trace.tolist())
        best = cand
    if best is sol:
        return sol
    return replace(best, iterations=iters, trace=np.asarray(trace))


def _project(m1: np.ndarray) -> np.ndarray:
    # the two-class simplex row {(m, 1-m)} projects to clipping m into [0, 1]
    return np.clip(m1, 0.0, 1.0)


def _lg_or_inf(s, m1, floor) -> float:
    try:
        return log_gain(s, MembershipMatrix.from_m1(m1), floor).log_gain
    except EmptyClass:
        return np.inf


def soft_descent(samples, init: MembershipMatrix, cfg: OptimizerConfig = OptimizerConfig()) -> Solution:
    """Projected gradient descent of ln G over soft memberships.

    Steps along ``-N * grad`` with step doubling on success and halving
    (backtracking) while ln G would not decrease. A deterministic ``+-1e-6``
    perturbation alternating by sample index is applied first to leave the
    symmetric saddle. If a variance hits the floor at the start, memberships
    are mixed toward uniform until the clamp releases; if it happens later,
    descent stops there. With ``cfg.polish`` the rounded hard assignment
    replaces the soft end point when it is lower. The returned ln G never
    exceeds that of ``init``.
    """
    s = as_samples(samples)
    x = s.values
    n = x.size
    floor = cfg.variance_floor
    init_lg = log_gain(s, init, floor).log_gain

    pert = np.where(np.arange(n) % 2 == 0, SADDLE_PERTURBATION, -SADDLE_PERTURBATION)
    m = _project(init.m1 + pert)
    mix = 1e-3
    while True:
        try:
            grad_log_gain(s, MembershipMatrix.from_m1(m), floor)
            break
        except ClampActive:
            if mix > 0.5:
                raise
            m = (1.0 - mix) * m + 0.5 * mix
            mix *= 4.0
    lg = _lg_or_inf(s, m, floor)
    trace = [lg]
    step = cfg.step_size
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        try:
            g = n * grad_log_gain(s, MembershipMatrix.from_m1(m), floor)
        except ClampActive:
            break
        accepted = False
        while step > 1e-14:
            cand = _project(m - step * g)
            if np.array_equal(cand, m):
                break
            lg_c = _lg_or_inf(s, cand, floor)
            if lg_c < lg:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        decrease = lg - lg_c
        m, lg = cand, lg_c
        trace.append(lg)
        step *= 2.0
        if decrease < cfg.tol_objective:
            converged = True
            break
    if cfg.polish:
        # minimizers are hard, so finish by rounding when that helps
        r1 = (m >= 0.5).astype(np.float64)
        lg_r = _lg_or_inf(s, r1, floor)
        if lg_r < lg:
            m, lg = r1, lg_r
            trace.append(lg)
    if not (lg < init_lg):
        return _solution(s, init.m1, floor, it, converged, np.asarray([init_lg]), "soft_descent")
    return _solution(s, m, floor, it, converged, np.asarray(trace), "soft_descent")


def distance_seed(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Pick two distinct sample values as provisional means and split by proximity.

    Returns class-1 weights (hard). Raises :class:`ClassCollapse` if all samples
    are identical.
    """
    i = int(rng.integers(x.size))
    others = np.flatnonzero(x != x[i])
    if others.size == 0:
        raise ClassCollapse("all samples are identical; no two distinct seeds")
    j = int(others[rng.integers(others.size)])
    return (np.abs(x - x[i]) <= np.abs(x - x[j])).astype(np.float64)


def _single_run(s, cfg: OptimizerConfig, method: str, r: int) -> Solution:
    rng = seeded_rng(cfg.seed, r)
    m1 = distance_seed(s.values, rng)
    if method == "fixed_point":
        sol = fixed_point(s, MembershipMatrix.from_m1(m1), cfg)
        return polish(s, sol, cfg) if cfg.polish else sol
    if method == "soft_descent":
        return soft_descent(s, MembershipMatrix.from_m1(0.1 + 0.8 * m1), cfg)
    raise ValueError(f"unknown method {method!r}")


def interval_start(x: np.ndarray, floor: float) -> np.ndarray:
    """Class-1 weights of the best split into a sorted-order block and its complement.

    Any MAP-consistent hard partition has this shape: the log-ratio of the two
    weighted Gaussian densities is quadratic in x, so one class occupies an
    interval of the real line.
    """
    order = np.argsort(x, kind="stable")
    l, r, _ = kernels.interval_scan(x[order], floor)
    m1 = np.zeros(x.size)
    m1[order[l:r + 1]] = 1.0
    return m1


def multi_start(samples, cfg: OptimizerConfig = OptimizerConfig(), method: str = "fixed_point") -> Solution:
    """Best of ``cfg.restarts`` seeded runs; ties go to the lowest restart index.

    With ``cfg.interval_start`` one more run starts from the best
    sorted-interval split; that candidate ranks after every seeded restart
    on ties.
    """
    s = as_samples(samples)
    best = None
    for r in range(cfg.restarts):
        try:
            sol = _single_run(s, cfg, method, r)
        except ClassCollapse:
            continue
        if best is None or sol.log_gain < best.log_gain:
            best = sol
    if cfg.interval_start and s.n_samples >= 2:
        m1 = interval_start(s.values, cfg.variance_floor)
        try:
            if method == "fixed_point":
                sol = fixed_point(s, MembershipMatrix.from_m1(m1), cfg)
                sol = polish(s, sol, cfg) if cfg.polish else sol
            else:
                sol = soft_descent(s, MembershipMatrix.from_m1(0.1 + 0.8 * m1), cfg)
        except (ClassCollapse, EmptyClass, ClampActive):
            sol = None
        if sol is not None and (best is None or sol.log_gain < best.log_gain):
            best = sol
    if best is None:
        raise AllRestartsCollapsed(f"all {cfg.restarts} restarts collapsed to a single class")
    return best


def exhaustive_oracle(samples, floor: float = 1e-6) -> Solution:
    """Global minimum of ln G over all hard assignments with both classes nonempty.

    Ties go to the lexicographically smallest label sequence (class 1 before
    class 2), which always places sample 0 in class 1.
    """
    s = as_samples(samples)
    n = s.n_samples
    if n > ORACLE_MAX_N:
        raise TooLarge(f"exhaustive oracle is capped at N = {ORACLE_MAX_N} samples, got {n}")
    if n < 2:
        raise TooLarge("exhaustive oracle needs at least 2 samples")
    code, _ = kernels.exhaustive_search(s.values, floor)
    labels = (code >> np.arange(n - 1, -1, -1)) & 1
    return _solution(s, (labels == 0).astype(np.float64), floor, (1 << (n - 1)) - 1, True, None, "exhaustive_oracle")


@dataclass(frozen=True)
class CertificateReport:
    theorem1_violations: list = field(default_factory=list)
    partition_counts: dict = field(default_factory=dict)
    corollary_residuals: dict = field(default_factory=dict)
    passed: bool = False

    def to_dict(self) -> dict:
        return {
            "theorem1_violations": [[int(i), float(mg)] for i, mg in self.theorem1_violations],
            "partition_counts": dict(self.partition_counts),
            "corollary_residuals": dict(self.corollary_residuals),
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def certify(samples, sol: Solution, tol: float = 1e-9) -> CertificateReport:
    """Check the MAP optimality condition and the parameter consistency identities.

    Samples are split into A (class 1 strictly dominant), B (log-ratio within
    ``tol`` of zero) and C (class 2 dominant). Every sample in A must carry
    ``m_n1 = 1`` and every sample in C ``m_n1 = 0``; violations are reported
    with their log-likelihood ratio as margin. The six parameters are then
    recomputed from the partition and compared with ``sol.params``.
    """
    s = as_samples(samples)
    x = s.values
    n = x.size
    th = sol.params
    m1 = sol.memberships.m1
    r = log_ratio(x, th)
    in_a, in_c = r > tol, r < -tol
    in_b = ~(in_a | in_c)

    violations = [(int(i), float(r[i])) for i in np.flatnonzero(in_a & (np.abs(m1 - 1.0) > tol))]
    violations += [(int(i), float(r[i])) for i in np.flatnonzero(in_c & (m1 > tol))]
    violations.sort()

    w1 = np.where(in_a, 1.0, np.where(in_b, m1, 0.0))
    w2 = np.where(in_c, 1.0, np.where(in_b, 1.0 - m1, 0.0))
    a1, a2 = th.alpha
    mu1, mu2 = th.mu
    floor = sol.variance_floor
    with np.errstate(divide="ignore", invalid="ignore"):
        rec = {
            "alpha1": w1.sum() / n,
            "alpha2": w2.sum() / n,
            "mu1": (w1 * x).sum() / (a1 * n),
            "mu2": (w2 * x).sum() / (a2 * n),
            "var1": max((w1 * (x - mu1) ** 2).sum() / (a1 * n), floor),
            "var2": max((w2 * (x - mu2) ** 2).sum() / (a2 * n), floor),
        }
    reported = {"alpha1": a1, "alpha2": a2, "mu1": mu1, "mu2": mu2, "var1": th.var[0], "var2": th.var[1]}
    residuals = {k: float(abs(rec[k] - reported[k])) for k in rec}
    passed = not violations and all(np.isfinite(v) and v < tol for v in residuals.values())
    counts = {"A": int(in_a.sum()), "B": int(in_b.sum()), "C": int(in_c.sum())}
    return CertificateReport(violations, counts, residuals, bool(passed))
