"""Classification-gain objective, its gradient and the MAP decision rule."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .core import (
    ClampActive,
    EmptyClass,
    MembershipMatrix,
    MixtureParams,
    NotADistribution,
    as_samples,
    entropy2,
)


@dataclass(frozen=True)
class ObjectiveReport:
    log_gain: float
    params: MixtureParams
    per_class_entropy_term: float
    per_class_variance_terms: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "log_gain": self.log_gain,
            "params": self.params.to_dict(),
            "per_class_entropy_term": self.per_class_entropy_term,
            "per_class_variance_terms": list(self.per_class_variance_terms),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _weights(m) -> np.ndarray:
    if isinstance(m, MembershipMatrix):
        return m.weights
    return MembershipMatrix(m).weights


def _moments(x: np.ndarray, w: np.ndarray):
    """Weighted class moments; returns (alpha, mu, raw_var) as length-2 arrays."""
    n = x.size
    mass = w.sum(axis=0)
    for i in range(2):
        if mass[i] <= 0:
            raise EmptyClass(i + 1)
    mu = (w * x[:, None]).sum(axis=0) / mass
    raw = (w * (x[:, None] - mu) ** 2).sum(axis=0) / mass
    return mass / n, mu, raw


def estimate_params(samples, m, floor: float = 1e-6) -> MixtureParams:
    """Weighted proportions, means and variances of both classes.

    Variances are clamped from below at ``floor``. Raises :class:`EmptyClass`
    when a class carries no membership mass.
    """
    x = as_samples(samples).values
    alpha, mu, raw = _moments(x, _weights(m))
    var = np.maximum(raw, floor)
    a1 = float(alpha[0])
    return MixtureParams((a1, 1.0 - a1), tuple(mu.tolist()), tuple(var.tolist()))


def _log_gain_of(theta: MixtureParams) -> tuple[float, float, tuple[float, float]]:
    h = entropy2(theta.alpha[0])
    terms = tuple(float(xlogy(a, v)) if a > 0 else 0.0 for a, v in zip(theta.alpha, theta.var))
    return 2.0 * h + terms[0] + terms[1], h, terms


def log_gain(samples, m, floor: float = 1e-6) -> ObjectiveReport:
    """``ln G = 2 H(alpha) + sum_i alpha_i ln var_i`` for memberships ``m``."""
    theta = estimate_params(samples, m, floor)
    value, h, terms = _log_gain_of(theta)
    return ObjectiveReport(value, theta, h, terms)


def log_gain_value(samples, m, floor: float = 1e-6) -> float:
    return log_gain(samples, m, floor).log_gain


def grad_log_gain(samples, m, floor: float = 1e-6) -> np.ndarray:
    """Partial derivatives of ``ln G`` with respect to each ``m_n1`` (with ``m_n2 = 1 - m_n1``).

    Refuses states where a variance sits at the floor, since the clamped
    objective has no valid derivative there.
    """
    x = as_samples(samples).values
    alpha, mu, raw = _moments(x, _weights(m))
    for i in range(2):
        if raw[i] <= floor:
            raise ClampActive(i + 1)
    n = x.size
    per_class = np.log(raw) - 2.0 * np.log(alpha) + (x[:, None] - mu) ** 2 / raw
    return (per_class[:, 0] - per_class[:, 1]) / n


def log_ratio(x, theta: MixtureParams) -> np.ndarray:
    """``ln(alpha_1 f_1(x)) - ln(alpha_2 f_2(x))``."""
    lp = theta.component_logpdf(x)
    return lp[0] - lp[1]


def map_rule(x: float, theta: MixtureParams, tie_rule: str = "assign_to_class1") -> int:
    """Class (1 or 2) with the larger weighted density at ``x``.

    On an exact tie the ``tie_rule`` decides; ``split_half`` returns 0 to mark
    a sample shared equally between both classes.
    """
    if min(theta.var) <= 0:
        raise ValueError("map_rule needs positive variances")
    r = float(log_ratio(x, theta))
    if r > 0:
        return 1
    if r < 0:
        return 2
    return {"assign_to_class1": 1, "assign_to_class2": 2, "split_half": 0}[tie_rule]


def map_memberships(x, theta: MixtureParams, tie_rule: str = "assign_to_class1") -> np.ndarray:
    """Vectorized MAP assignment; returns class-1 weights (0, 1, or 0.5 on split ties)."""
    r = log_ratio(np.asarray(x, dtype=np.float64), theta)
    tie = {"assign_to_class1": 1.0, "assign_to_class2": 0.0, "split_half": 0.5}[tie_rule]
    return np.where(r > 0, 1.0, np.where(r < 0, 0.0, tie))


def entropy_discrete(p) -> float:
    """Shannon entropy in nats with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise NotADistribution("entries must be nonnegative and sum to 1")
    return float(-xlogy(p, p).sum())
