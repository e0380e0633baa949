"""Gaussian scale mixtures N_theta ~ N(0, V_n^2(theta)) and their distance to N(0, 1).

When the variances b_k^2 = E d_k^2 are not all equal, the Gaussian reference
for S_n(theta) depends on theta through V_n^2(theta) = sum theta_k^2 b_k^2.
Concentration of V_n^2 around 1 on the sphere controls how far the mixture is
from the standard normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.special import ndtr

from .distance import DistanceEstimate
from .sphere import sample_sphere_batch

MapFn = Callable[..., Iterable]
SCALE_CONSTANT = 3.0 / 8.0
CONCENTRATION_CONSTANT = 2.0 * math.sqrt(5.0)
REMARK_CONSTANT = 35.0 * math.sqrt(5.0) / 4.0
MIXTURE_CONSTANT = 35.0 / 8.0
_LOG_RATIO_EPS = 1e-12
_ROUNDING = 1e-12  # V^2 of a unit profile is 1 only up to float rounding


@dataclass(frozen=True)
class VarianceProfile:
    b_sq: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b_sq, dtype=np.float64).ravel()
        if b.size < 1 or np.any(b < 0) or not np.all(np.isfinite(b)):
            raise ValueError("b_sq must be a nonempty array of finite nonnegative values")
        if abs(b.sum() - b.size) > 1e-9:
            raise ValueError(f"sum of b_sq must equal n = {b.size}, got {b.sum()!r}")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "b_sq", b)

    @property
    def n(self) -> int:
        return self.b_sq.size

    @property
    def sum_sq_dev(self) -> float:
        """(sum_k (b_k^2 - 1)^2)^{1/2}."""
        return float(np.sqrt(np.sum((self.b_sq - 1.0) ** 2)))

    @classmethod
    def normalized(cls, weights) -> "VarianceProfile":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w * (w.size / w.sum()))


def mixture_variance(profile: VarianceProfile, theta) -> float:
    th = np.asarray(getattr(theta, "coords", theta), dtype=np.float64)
    if th.size != profile.n:
        raise ValueError(f"theta has length {th.size}, profile has n = {profile.n}")
    return float(th * th @ profile.b_sq)


def _two_scale_exact(alpha, beta):
    """Vectorized sup_t |Phi(t/alpha) - Phi(t/beta)|."""
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    lr = np.log(b / a)
    near = np.abs(lr) < _LOG_RATIO_EPS
    a2, b2 = a * a, b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        tstar = np.sqrt(np.where(near, 0.0, 2.0 * a2 * b2 * lr / (b2 - a2)))
    out = np.abs(ndtr(tstar / a) - ndtr(tstar / b))
    return np.where(near, 0.0, out)


def gauss_two_scale_distance(alpha: float, beta: float) -> tuple[float, float | None]:
    """Exact Kolmogorov distance between N(0, alpha^2) and N(0, beta^2), and the (3/8) scale bound.

    The two CDFs differ most where the densities cross, at
    t*^2 = 2 alpha^2 beta^2 ln(beta/alpha) / (beta^2 - alpha^2). The bound
    (3/8)|alpha^2 - beta^2| / alpha^2 is returned only when beta/alpha > 1/2.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError("scales must be positive")
    exact = float(_two_scale_exact(alpha, beta))
    bound = SCALE_CONSTANT * abs(alpha ** 2 - beta ** 2) / alpha ** 2 if beta / alpha > 0.5 else None
    return exact, bound


def concentration_bound(profile: VarianceProfile) -> float:
    """Upper bound on ||V_n^2(theta) - 1||_2 from second-order concentration."""
    n = _need_n2(profile)
    return CONCENTRATION_CONSTANT * profile.sum_sq_dev / (n - 1)


def remark_bound(profile: VarianceProfile) -> float:
    """Upper bound on E sup_t |P(N_theta <= t | theta) - Phi(t)|."""
    n = _need_n2(profile)
    return REMARK_CONSTANT * profile.sum_sq_dev / (n - 1)


def _need_n2(profile: VarianceProfile) -> int:
    if profile.n < 2:
        raise ValueError("the bound is degenerate for n = 1")
    return profile.n


def _v2_draws(profile: VarianceProfile, M: int, stream: np.random.Generator,
              chunk: int = 4096) -> np.ndarray:
    chunk = max(1, min(chunk, (1 << 22) // profile.n))
    out = np.empty(M)
    for s in range(0, M, chunk):
        b = min(chunk, M - s)
        th = sample_sphere_batch(profile.n, b, stream)
        out[s:s + b] = (th * th) @ profile.b_sq
    return out


@dataclass(frozen=True)
class ConcentrationReport:
    n: int
    draws: int
    l1: float
    l1_stderr: float
    l2: float
    l2_stderr: float
    bound: float
    mean_v2: float
    mean_v2_stderr: float

    @property
    def ok(self) -> bool:
        return (self.l1 <= self.bound + 3 * self.l1_stderr + _ROUNDING
                and self.l2 <= self.bound + 3 * self.l2_stderr + _ROUNDING)


def concentration_check(profile: VarianceProfile, M: int,
                        stream: np.random.Generator) -> ConcentrationReport:
    """MC estimates of E|V_n^2 - 1| and ||V_n^2 - 1||_2 against the concentration bound."""
    n = _need_n2(profile)
    if M < 10_000:
        raise ValueError("concentration_check needs M >= 10^4")
    v = _v2_draws(profile, M, stream) - 1.0
    a = np.abs(v)
    sq = v * v
    l2 = math.sqrt(sq.mean())
    # delta method for the square root of a mean
    l2_se = float(sq.std(ddof=1) / math.sqrt(M) / (2 * l2)) if l2 > 0 else 0.0
    return ConcentrationReport(n, M, float(a.mean()), float(a.std(ddof=1) / math.sqrt(M)),
                               l2, l2_se, concentration_bound(profile), float(v.mean() + 1.0),
                               float(v.std(ddof=1) / math.sqrt(M)))


@dataclass(frozen=True)
class MixtureReport:
    estimate: DistanceEstimate
    remark_bound: float
    l1: float
    l1_stderr: float

    @property
    def ok(self) -> bool:
        return self.estimate.value <= self.remark_bound

    @property
    def chain_ok(self) -> bool:
        """Mixture distance against (35/8) E|V^2 - 1|, with 3 combined stderrs."""
        slack = 3 * math.hypot(self.estimate.stderr_outer, MIXTURE_CONSTANT * self.l1_stderr)
        return self.estimate.value <= MIXTURE_CONSTANT * self.l1 + slack


def kappa_mixture_vs_standard(profile: VarianceProfile, M: int,
                              stream: np.random.Generator) -> MixtureReport:
    """Average over theta of the exact distance between N(0, V_n^2(theta)) and N(0, 1)."""
    _need_n2(profile)
    if M < 2:
        raise ValueError("need M >= 2 theta draws")
    v2 = _v2_draws(profile, M, stream)
    vals = _two_scale_exact(1.0, np.sqrt(np.maximum(v2, 1e-300)))
    se = float(vals.std(ddof=1) / math.sqrt(M))
    est = DistanceEstimate(float(vals.mean()), 0, M, 0.0, se, 0.05)
    dev = np.abs(v2 - 1.0)
    return MixtureReport(est, remark_bound(profile), float(dev.mean()),
                         float(dev.std(ddof=1) / math.sqrt(M)))


@dataclass(frozen=True)
class DampingReport:
    t_grid: np.ndarray
    lhs: np.ndarray
    lhs_stderr: np.ndarray
    rhs: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs + 3 * self.lhs_stderr + _ROUNDING))


def damping_check(profile: VarianceProfile, t_grid, M: int,
                       stream: np.random.Generator) -> DampingReport:
    """|E exp(-t^2 V_n^2(theta)/2) - exp(-t^2/2)| against (5 t^4/2) sum(b^2-1)^2/(n-1)^2."""
    n = _need_n2(profile)
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    v2 = _v2_draws(profile, M, stream)
    # difference taken per theta so the common-mode noise cancels
    diff = np.exp(-0.5 * np.outer(v2, t * t)) - np.exp(-0.5 * t * t)
    lhs = np.abs(diff.mean(0))
    se = diff.std(0, ddof=1) / math.sqrt(M)
    rhs = 2.5 * t ** 4 * profile.sum_sq_dev ** 2 / (n - 1) ** 2
    return DampingReport(t, lhs, se, rhs)
