"""Domain types, validation and seeded randomness shared across the package."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import xlogy

TIE_RULES = ("assign_to_class1", "assign_to_class2", "split_half")


class GainClassError(Exception):
    """Base class for all package errors."""


class EmptySampleSet(GainClassError):
    pass


class NonFiniteSample(GainClassError):
    def __init__(self, index: int):
        super().__init__(f"non-finite sample at index {index}")
        self.index = index


class SampleParseError(GainClassError):
    def __init__(self, line: int, text: str):
        super().__init__(f"line {line}: cannot parse {text!r} as a real number")
        self.line = line


class InvalidMembership(GainClassError):
    pass


class InvalidParams(GainClassError):
    pass


class EmptyClass(GainClassError):
    def __init__(self, cls: int):
        super().__init__(f"class {cls} has zero total membership")
        self.cls = cls


class ClampActive(GainClassError):
    def __init__(self, cls: int):
        super().__init__(f"variance of class {cls} is clamped at the floor")
        self.cls = cls


class ClassCollapse(GainClassError):
    pass


class AllRestartsCollapsed(GainClassError):
    pass


class TooLarge(GainClassError):
    pass


class BadConstants(GainClassError):
    pass


class OutliersPresent(GainClassError):
    pass


class NotADistribution(GainClassError):
    pass


class EmptyRegionGrid(GainClassError):
    pass


class AllCensored(GainClassError):
    pass


class SoftMembership(GainClassError):
    pass


# ---------------------------------------------------------------------------
# samples


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Observed real-valued signal samples ``x_1..x_N``."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.ravel(self.values)))
        validate(self)

    @property
    def n_samples(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.n_samples

    @classmethod
    def from_text(cls, text: str) -> "SampleSet":
        """Parse one decimal real per line; blank lines and ``#`` comments are skipped."""
        values = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise SampleParseError(lineno, line) from None
            if not math.isfinite(values[-1]):
                raise SampleParseError(lineno, line)
        return cls(np.asarray(values, dtype=np.float64))

    @classmethod
    def read(cls, path) -> "SampleSet":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        return "".join(f"{v!r}\n" for v in self.values.tolist())

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def validate(samples) -> None:
    """Raise unless ``samples`` is nonempty and entirely finite."""
    values = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EmptySampleSet("sample set is empty")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteSample(int(bad[0]))


def as_samples(samples) -> SampleSet:
    return samples if isinstance(samples, SampleSet) else SampleSet(samples)


# ---------------------------------------------------------------------------
# memberships


@dataclass(frozen=True, eq=False)
class MembershipMatrix:
    """N x 2 membership weights; each row lies on the probability simplex."""

    weights: np.ndarray
    kind: str = "soft"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != 2:
            raise InvalidMembership(f"expected shape (N, 2), got {w.shape}")
        if np.any(~np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise InvalidMembership("weights must lie in [0, 1]")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidMembership("rows must sum to 1")
        if self.kind not in ("hard", "soft"):
            raise InvalidMembership(f"unknown kind {self.kind!r}")
        if self.kind == "hard" and not np.all((w == 0) | (w == 1)):
            raise InvalidMembership("hard memberships must be 0 or 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_m1(cls, m1) -> "MembershipMatrix":
        """Build from class-1 weights; the kind is inferred."""
        m1 = np.clip(np.asarray(m1, dtype=np.float64), 0.0, 1.0)
        kind = "hard" if np.all((m1 == 0) | (m1 == 1)) else "soft"
        return cls(np.column_stack([m1, 1.0 - m1]), kind)

    @classmethod
    def from_labels(cls, labels) -> "MembershipMatrix":
        """Hard memberships from 0-based labels (0 -> class 1, 1 -> class 2)."""
        labels = np.asarray(labels)
        if not np.all((labels == 0) | (labels == 1)):
            raise InvalidMembership("labels must be 0 or 1")
        return cls.from_m1((labels == 0).astype(np.float64))

    @property
    def m1(self) -> np.ndarray:
        return self.weights[:, 0]

    @property
    def n_samples(self) -> int:
        return self.weights.shape[0]

    def labels(self) -> np.ndarray:
        """0-based hard labels; raises for soft memberships."""
        if self.kind != "hard":
            raise SoftMembership("memberships are soft; round them first")
        return (self.weights[:, 0] == 0).astype(np.int64)

    def rounded(self) -> "MembershipMatrix":
        return MembershipMatrix.from_m1((self.m1 >= 0.5).astype(np.float64))

    def swapped(self) -> "MembershipMatrix":
        return MembershipMatrix(self.weights[:, ::-1], self.kind)


# ---------------------------------------------------------------------------
# mixture parameters

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MixtureParams:
    """Two-component Gaussian mixture ``(alpha, mu, var)``."""

    alpha: tuple[float, float]
    mu: tuple[float, float]
    var: tuple[float, float]

    def __post_init__(self):
        for name in ("alpha", "mu", "var"):
            v = tuple(float(t) for t in getattr(self, name))
            if len(v) != 2:
                raise InvalidParams(f"{name} must have two entries")
            if not all(math.isfinite(t) for t in v):
                raise InvalidParams(f"{name} must be finite")
            object.__setattr__(self, name, v)
        a1, a2 = self.alpha
        if a1 < 0 or a2 < 0 or abs(a1 + a2 - 1.0) > 1e-12:
            raise InvalidParams(f"alpha must be a probability pair, got {self.alpha}")
        if min(self.var) < 0:
            raise InvalidParams("variances must be nonnegative")

    @classmethod
    def of(cls, a1, mu1, mu2, v1, v2) -> "MixtureParams":
        return cls((a1, 1.0 - a1), (mu1, mu2), (v1, v2))

    def swapped(self) -> "MixtureParams":
        return MixtureParams(self.alpha[::-1], self.mu[::-1], self.var[::-1])

    def component_logpdf(self, x) -> np.ndarray:
        """``ln(alpha_i * phi(x; mu_i, var_i))`` stacked as shape (2, ...)."""
        x = np.asarray(x, dtype=np.float64)
        out = []
        for a, m, v in zip(self.alpha, self.mu, self.var):
            if a == 0 or v == 0:
                out.append(np.full(x.shape, -np.inf))
                continue
            out.append(math.log(a) - _LOG_SQRT_2PI - 0.5 * math.log(v) - (x - m) ** 2 / (2.0 * v))
        return np.stack(out)

    def logpdf(self, x) -> np.ndarray:
        return np.logaddexp(*self.component_logpdf(x))

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    __call__ = pdf

    def to_dict(self) -> dict:
        return {"alpha": list(self.alpha), "mu": list(self.mu), "var": list(self.var)}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureParams":
        try:
            return cls(tuple(d["alpha"]), tuple(d["mu"]), tuple(d["var"]))
        except KeyError as exc:
            raise InvalidParams(f"missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise InvalidParams(str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MixtureParams":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"malformed JSON: {exc}") from None
        if not isinstance(d, dict):
            raise InvalidParams("expected a JSON object")
        return cls.from_dict(d)


def entropy2(a1: float) -> float:
    """Binary entropy ``H(a1, 1 - a1)`` in nats."""
    return float(-xlogy(a1, a1) - xlogy(1.0 - a1, 1.0 - a1))


# ---------------------------------------------------------------------------
# grid and types


@dataclass(frozen=True)
class GridSpec:
    """Discretization grid: bound ``M_N``, odd bin count ``L_N``, bin width ``W_N``."""

    c: float
    zeta: float
    eta: float
    n: int
    m_bound: float
    n_bins: int
    bin_width: float

    @classmethod
    def from_constants(cls, n: int, c: float = 1.0, zeta: float = 0.1, eta: float = 0.2) -> "GridSpec":
        if not (c > 0 and zeta > 0 and eta > 0) or zeta + eta >= 0.5:
            raise BadConstants(f"need c, zeta, eta > 0 and zeta + eta < 1/2; got c={c}, zeta={zeta}, eta={eta}")
        n = int(n)
        if n < 2:
            raise BadConstants("grid needs N >= 2 (ln N appears in the bin count)")
        m_bound = c * n ** (0.5 + zeta)
        n_bins = 2 * math.floor(n ** (1.0 - eta) / math.log(n)) + 1
        return cls(float(c), float(zeta), float(eta), n, m_bound, n_bins, 2.0 * m_bound / n_bins)

    @property
    def half(self) -> int:
        return (self.n_bins - 1) // 2

    @property
    def bin_indices(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1)

    @property
    def edges(self) -> np.ndarray:
        """Bin edges ``(k - 1/2) W_N`` for every bin plus the last right edge."""
        return (np.arange(-self.half, self.half + 2) - 0.5) * self.bin_width

    def to_dict(self) -> dict:
        return {
            "c": self.c, "zeta": self.zeta, "eta": self.eta, "n": self.n,
            "m_n": self.m_bound, "l_n": self.n_bins, "w_n": self.bin_width,
        }


@dataclass(frozen=True, eq=False)
class TypeHistogram:
    """Bin counts ``a_k`` over the grid plus the number of samples with ``|x| >= M_N``."""

    counts: np.ndarray
    outliers: int
    grid: GridSpec

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (self.grid.n_bins,):
            raise ValueError(f"expected {self.grid.n_bins} counts, got shape {counts.shape}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum()) + int(self.outliers)

    @property
    def outlier_event(self) -> bool:
        return self.outliers > 0

    def type_pmf(self) -> np.ndarray:
        if self.outliers:
            raise OutliersPresent(f"{self.outliers} sample(s) fall outside [-M_N, M_N]")
        return self.counts / self.counts.sum()

    def to_csv(self) -> str:
        header = json.dumps({"grid": self.grid.to_dict(), "outliers": int(self.outliers)}, sort_keys=True)
        rows = "".join(f"{k},{a}\n" for k, a in zip(self.grid.bin_indices.tolist(), self.counts.tolist()))
        return f"# {header}\nk,count\n{rows}"


# ---------------------------------------------------------------------------
# optimizer config and rng


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 500
    tol_objective: float = 1e-12
    restarts: int = 8
    seed: int = 0
    variance_floor: float = 1e-6
    step_size: float = 1.0
    tie_rule: str = "assign_to_class1"
    polish: bool = True
    interval_start: bool = True

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if not (self.tol_objective > 0 and self.variance_floor > 0 and self.step_size > 0):
            raise ValueError("tolerances, floor and step size must be positive")
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"tie_rule must be one of {TIE_RULES}")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")


def seeded_rng(seed: int, stream_id: int | Sequence[int] = 0) -> np.random.Generator:
    """Deterministic PCG64 stream keyed by ``(seed, stream_id)``.

    ``stream_id`` may be a tuple to address nested streams (e.g. ``(n, trial)``).
    """
    key = (int(stream_id),) if np.isscalar(stream_id) else tuple(int(s) for s in stream_id)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, stream_id: Iterable[int]) -> int:
    """A 64-bit seed derived from ``(seed, stream_id)``, for handing to nested runs."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream_id))
    lo, hi = ss.generate_state(2, dtype=np.uint32).tolist()
    return (hi << 32) | lo
