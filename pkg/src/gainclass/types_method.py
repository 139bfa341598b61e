"""Grids, empirical types, discretized mixtures and the bounds built on them."""
from __future__ import annotations

import configparser
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .core import (
    EmptyRegionGrid,
    GridSpec,
    MixtureParams,
    NotADistribution,
    OutliersPresent,
    TypeHistogram,
    as_samples,
    entropy2,
)
from .objective import entropy_discrete

QUAD_POINTS_PER_BIN = 32
_LOG_2PI_E = math.log(2.0 * math.pi * math.e)


def build_grid(n: int, c: float = 1.0, zeta: float = 0.1, eta: float = 0.2) -> GridSpec:
    """Grid with ``M_N = c N^(1/2+zeta)``, ``L_N = 2 floor(N^(1-eta)/ln N) + 1``, ``W_N = 2 M_N / L_N``."""
    return GridSpec.from_constants(n, c, zeta, eta)


def histogram_type(samples, grid: GridSpec) -> TypeHistogram:
    """Count samples per half-open bin ``[(k-1/2)W, (k+1/2)W)``; ``|x| >= M_N`` are outliers."""
    x = as_samples(samples).values
    out = np.abs(x) >= grid.m_bound
    k = np.floor(x[~out] / grid.bin_width + 0.5).astype(np.int64)
    k = np.clip(k, -grid.half, grid.half)
    counts = np.bincount(k + grid.half, minlength=grid.n_bins)
    return TypeHistogram(counts, int(out.sum()), grid)


def _log_interval_mass(lo: np.ndarray, hi: np.ndarray, mu: float, sd: float) -> np.ndarray:
    """``ln(Phi(b) - Phi(a))`` for standardized bounds, evaluated on the tail side."""
    a = (lo - mu) / sd
    b = (hi - mu) / sd
    upper = a > 0
    # reflect right-tail bins so both log-CDFs are taken away from 1
    big = np.where(upper, -a, b)
    small = np.where(upper, -b, a)
    lb, ls = log_ndtr(big), log_ndtr(small)
    with np.errstate(divide="ignore"):
        return lb + np.log1p(-np.exp(ls - lb))


@dataclass(frozen=True, eq=False)
class DiscretizedModel:
    masses: np.ndarray
    c_p: float
    grid: GridSpec
    theta: MixtureParams
    log_masses: np.ndarray = field(repr=False, default=None)

    def to_csv(self) -> str:
        header = json.dumps(
            {"grid": self.grid.to_dict(), "c_p": self.c_p, "theta": self.theta.to_dict()}, sort_keys=True
        )
        rows = "".join(f"{k},{p!r}\n" for k, p in zip(self.grid.bin_indices.tolist(), self.masses.tolist()))
        return f"# {header}\nk,mass\n{rows}"


def discretize_model(theta: MixtureParams, grid: GridSpec) -> DiscretizedModel:
    """Per-bin mixture mass normalized over the ``L_N`` bins by ``c_P``."""
    if min(theta.var) <= 0:
        raise ValueError("discretize_model needs positive variances")
    edges = grid.edges
    lo, hi = edges[:-1], edges[1:]
    parts = []
    for a, m, v in zip(theta.alpha, theta.mu, theta.var):
        if a == 0:
            continue
        parts.append(math.log(a) + _log_interval_mass(lo, hi, m, math.sqrt(v)))
    raw = np.logaddexp.reduce(np.stack(parts), axis=0)
    log_total = logsumexp(raw)
    log_masses = raw - log_total
    masses = np.exp(log_masses)
    masses = masses / masses.sum()
    return DiscretizedModel(masses, float(math.exp(-log_total)), grid, theta, log_masses)


def log_outlier_bound(theta_star: MixtureParams, grid: GridSpec, n: int) -> float:
    """Natural log of the four-term union/Chernoff bound on ``P(max |x_n| >= M_N)``."""
    terms = []
    for m, v in zip(theta_star.mu, theta_star.var):
        for shift in (m, -m):
            terms.append(-((grid.m_bound + shift) ** 2) / (2.0 * v) + math.log(n))
    return float(logsumexp(terms))


def outlier_bound(theta_star: MixtureParams, grid: GridSpec, n: int) -> float:
    return min(1.0, math.exp(min(0.0, log_outlier_bound(theta_star, grid, n))))


def lemma2_rhs(theta_hat: MixtureParams, grid: GridSpec, c_p: float) -> float:
    a1, a2 = theta_hat.alpha
    v1, v2 = theta_hat.var
    return (
        0.5 * a1 * (_LOG_2PI_E + math.log(v1))
        + 0.5 * a2 * (_LOG_2PI_E + math.log(v2))
        + entropy2(a1)
        + (a1 / (2.0 * v1) + a2 / (2.0 * v2)) * grid.bin_width**2
        - math.log(grid.bin_width)
        - math.log(c_p)
    )


def lemma2_sides(hist: TypeHistogram, theta_hat: MixtureParams, grid: GridSpec) -> tuple[float, float]:
    """Both sides of the type-class inequality for estimated parameters ``theta_hat``.

    ``lhs = sum_k (a_k/N) (-ln P_N(k; theta_hat))``, which equals the type's
    divergence from the discretized model plus its entropy.
    """
    if hist.outliers:
        raise OutliersPresent(f"{hist.outliers} sample(s) with |x| >= M_N")
    model = discretize_model(theta_hat, grid)
    p = hist.counts / hist.counts.sum()
    nz = p > 0
    lhs = float(-(p[nz] * model.log_masses[nz]).sum())
    return lhs, lemma2_rhs(theta_hat, grid, model.c_p)


def kl_discrete(p, q) -> float:
    """``sum p ln(p/q)``; +inf when ``p`` puts mass where ``q`` has none."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise NotADistribution("p and q must have equal length")
    for v in (p, q):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise NotADistribution("entries must be nonnegative and sum to 1")
    nz = p > 0
    if np.any(q[nz] == 0):
        return math.inf
    return float((p[nz] * (np.log(p[nz]) - np.log(q[nz]))).sum())


def _logpdf(f, x):
    if hasattr(f, "logpdf"):
        return np.asarray(f.logpdf(x), dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(f(x), dtype=np.float64))


def _midpoints(support, n_points):
    lo, hi = map(float, support)
    h = (hi - lo) / n_points
    return lo + h * (np.arange(n_points) + 0.5), h


def kl_density_quadrature(p_eval, q_eval, support=(-10.0, 10.0), n_points: int = 100_000) -> float:
    """Midpoint-rule ``int p ln(p/q)`` over ``support``.

    Evaluators may be plain callables returning densities or objects with a
    ``logpdf`` method (used for accuracy in the tails). Points where
    ``p < 1e-300`` contribute nothing.
    """
    if n_points < 1000:
        raise ValueError("n_points must be at least 1000")
    x, h = _midpoints(support, n_points)
    lp = _logpdf(p_eval, x)
    keep = lp > math.log(1e-300)
    if not keep.any():
        return 0.0
    lq = _logpdf(q_eval, x[keep])
    if np.any(np.isneginf(lq)):
        return math.inf
    lp = lp[keep]
    return float((np.exp(lp) * (lp - lq)).sum() * h)


def differential_entropy(p_eval, support, n_points: int = 100_000) -> float:
    x, h = _midpoints(support, n_points)
    lp = _logpdf(p_eval, x)
    keep = lp > math.log(1e-300)
    return float(-(np.exp(lp[keep]) * lp[keep]).sum() * h)


def cross_entropy(p_eval, q_eval, support, n_points: int = 100_000) -> float:
    return differential_entropy(p_eval, support, n_points) + kl_density_quadrature(p_eval, q_eval, support, n_points)


@dataclass(frozen=True, eq=False)
class StepDensity:
    """Piecewise-constant density with height ``a_k / (W_N N)`` on bin ``k``."""

    grid: GridSpec
    heights: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        k = np.floor(x / self.grid.bin_width + 0.5).astype(np.int64) + self.grid.half
        inside = (np.abs(x) < self.grid.m_bound) & (k >= 0) & (k < self.grid.n_bins)
        out = np.zeros(x.shape)
        out[inside] = self.heights[k[inside]]
        return out

    pdf = __call__

    def logpdf(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self(x))

    @property
    def support(self) -> tuple[float, float]:
        return (-self.grid.m_bound, self.grid.m_bound)

    def quadrature_points(self) -> int:
        return max(1000, QUAD_POINTS_PER_BIN * self.grid.n_bins)

    def integral(self) -> float:
        return float(self.heights.sum() * self.grid.bin_width)


def step_density(hist: TypeHistogram, grid: GridSpec) -> StepDensity:
    if hist.outliers:
        raise OutliersPresent(f"{hist.outliers} sample(s) with |x| >= M_N")
    n = hist.counts.sum()
    return StepDensity(grid, hist.counts / (grid.bin_width * n))


def mixture_support(theta: MixtureParams, width: float = 12.0) -> tuple[float, float]:
    sd = [math.sqrt(v) for v in theta.var]
    return (min(m - width * s for m, s in zip(theta.mu, sd)), max(m + width * s for m, s in zip(theta.mu, sd)))


def mixture_entropy_bound(theta: MixtureParams) -> float:
    """``sum_i (alpha_i/2) ln(2 pi e var_i) + H(alpha)``."""
    return sum(0.5 * a * (_LOG_2PI_E + math.log(v)) for a, v in zip(theta.alpha, theta.var) if a > 0) + entropy2(
        theta.alpha[0]
    )


def f_membership(p, theta_tilde: MixtureParams, epsilon: float = 0.0, support=None, n_points=None) -> bool:
    """Whether ``D(p || P(.; theta_tilde)) + H(p)`` is at most the mixture entropy bound plus ``epsilon``.

    ``p`` is a :class:`StepDensity`, a :class:`MixtureParams` or any density
    callable (then ``support`` is required).
    """
    if math.isinf(epsilon) and epsilon > 0:
        return True
    if support is None:
        if isinstance(p, StepDensity):
            support = p.support
        elif isinstance(p, MixtureParams):
            support = mixture_support(p)
        else:
            raise ValueError("support is required for a generic density")
    if n_points is None:
        n_points = p.quadrature_points() if isinstance(p, StepDensity) else 100_000
    lhs = kl_density_quadrature(p, theta_tilde, support, n_points) + differential_entropy(p, support, n_points)
    return bool(lhs <= mixture_entropy_bound(theta_tilde) + epsilon)


# ---------------------------------------------------------------------------
# regions of parameter space

_REGION_KEYS = ("alpha1", "mu1", "mu2", "var1", "var2")


@dataclass(frozen=True)
class RegionSpec:
    """Box constraints on ``(alpha1, mu1, mu2, var1, var2)``; variances never below ``var_floor``."""

    alpha1: tuple[float, float] = (0.0, 1.0)
    mu1: tuple[float, float] = (-math.inf, math.inf)
    mu2: tuple[float, float] = (-math.inf, math.inf)
    var1: tuple[float, float] = (0.0, math.inf)
    var2: tuple[float, float] = (0.0, math.inf)
    var_floor: float = 1e-6

    def __post_init__(self):
        for k in _REGION_KEYS:
            lo, hi = (float(t) for t in getattr(self, k))
            if k.startswith("var"):
                lo = max(lo, self.var_floor)
            if not lo <= hi:
                raise ValueError(f"empty interval for {k}: [{lo}, {hi}]")
            object.__setattr__(self, k, (lo, hi))

    def contains(self, theta: MixtureParams) -> bool:
        vals = (theta.alpha[0], theta.mu[0], theta.mu[1], theta.var[0], theta.var[1])
        return all(lo <= v <= hi for v, (lo, hi) in zip(vals, (getattr(self, k) for k in _REGION_KEYS)))

    def contains_unlabeled(self, theta: MixtureParams) -> bool:
        """Membership up to relabeling of the two classes."""
        return self.contains(theta) or self.contains(theta.swapped())

    def is_bounded(self) -> bool:
        return all(math.isfinite(v) for k in _REGION_KEYS for v in getattr(self, k))

    def bounded_around(self, theta: MixtureParams, width: float = 5.0) -> "RegionSpec":
        """Clip infinite sides to a box of ``width`` standard deviations around ``theta``."""
        sd = max(math.sqrt(v) for v in theta.var)
        mu_lo, mu_hi = min(theta.mu) - width * sd, max(theta.mu) + width * sd
        var_hi = (width * sd) ** 2

        def clip(iv, lo, hi):
            return (iv[0] if math.isfinite(iv[0]) else lo, iv[1] if math.isfinite(iv[1]) else hi)

        return RegionSpec(
            alpha1=(max(self.alpha1[0], 0.01), min(self.alpha1[1], 0.99)),
            mu1=clip(self.mu1, mu_lo, mu_hi),
            mu2=clip(self.mu2, mu_lo, mu_hi),
            var1=clip(self.var1, self.var_floor, var_hi),
            var2=clip(self.var2, self.var_floor, var_hi),
            var_floor=self.var_floor,
        )

    def to_dict(self) -> dict:
        d = {k: list(getattr(self, k)) for k in _REGION_KEYS}
        d["var_floor"] = self.var_floor
        return d

    @classmethod
    def from_mapping(cls, items: dict) -> "RegionSpec":
        kw = {}
        for key, val in items.items():
            if key == "var_floor":
                kw[key] = float(val)
            elif key in _REGION_KEYS:
                parts = [s.strip() for s in str(val).split(",")]
                if len(parts) != 2:
                    raise ValueError(f"{key}: expected 'lo,hi', got {val!r}")
                kw[key] = tuple(float(s) for s in parts)
            else:
                raise ValueError(f"unknown region key {key!r}")
        return cls(**kw)

    @classmethod
    def from_config_text(cls, text: str) -> "RegionSpec":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        cp.read_string("[region]\n" + text)
        return cls.from_mapping(dict(cp["region"]))


def _axis(iv, res):
    lo, hi = iv
    return np.array([lo]) if lo == hi or res == 1 else np.linspace(lo, hi, res)


def exponent_lower_bound_grid(region: RegionSpec, theta_star: MixtureParams, grid_resolution: int = 3,
                              n_points: int = 20_000) -> float:
    """Smallest divergence from ``theta_star`` among gridded mixtures of the region passing ``f_membership``.

    Only the parametric family is scanned, so the value is an upper estimate
    of the restricted minimum rather than a certified exponent.
    """
    if grid_resolution < 1:
        raise EmptyRegionGrid("grid_resolution must be >= 1")
    if not region.is_bounded():
        raise EmptyRegionGrid("region must be bounded to be scanned; see RegionSpec.bounded_around")
    axes = [_axis(getattr(region, k), grid_resolution) for k in _REGION_KEYS]
    best = math.inf
    for a1, m1, m2, v1, v2 in itertools.product(*axes):
        if not (0.0 < a1 < 1.0):
            continue
        cand = MixtureParams.of(a1, m1, m2, v1, v2)
        support = _joint_support(cand, theta_star)
        if not f_membership(cand, cand, 0.0, support, n_points):
            continue
        best = min(best, kl_density_quadrature(cand, theta_star, support, n_points))
    if math.isinf(best):
        raise EmptyRegionGrid("no grid point of the region passed the membership test")
    return best


def _joint_support(a: MixtureParams, b: MixtureParams) -> tuple[float, float]:
    sa, sb = mixture_support(a), mixture_support(b)
    return (min(sa[0], sb[0]), max(sa[1], sb[1]))


def num_types_log_exponent(grid: GridSpec) -> float:
    """``(L_N / N) ln(N + 1)``: normalized log of the type-count bound ``(N+1)^(L_N)``."""
    return grid.n_bins / grid.n * math.log(grid.n + 1)


def decompose_type_cost(hist: TypeHistogram, model: DiscretizedModel) -> tuple[float, float]:
    """``(D(type || P_N), H(type))`` computed separately."""
    p = hist.type_pmf()
    return kl_discrete(p, model.masses), entropy_discrete(p)


def step_vs_density_kl(hist: TypeHistogram, theta: MixtureParams) -> tuple[float, float]:
    """Discrete divergence of the type from ``P_N(.; theta)`` and continuous divergence of its step density."""
    grid = hist.grid
    model = discretize_model(theta, grid)
    q = step_density(hist, grid)
    p = hist.type_pmf()
    nz = p > 0
    discrete = float((p[nz] * (np.log(p[nz]) - model.log_masses[nz])).sum())
    return discrete, kl_density_quadrature(q, theta, q.support, q.quadrature_points())

