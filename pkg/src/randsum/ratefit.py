"""Decay exponents from (n, value) series: value ~ C (log n)^q n^{-p} with q fixed."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RatePoint:
    n: int
    value: float
    stderr: float = 0.0


@dataclass(frozen=True)
class RateSeries:
    points: tuple[RatePoint, ...]
    label: str = ""

    def __post_init__(self):
        pts = tuple(p if isinstance(p, RatePoint) else RatePoint(*p) for p in self.points)
        if len(pts) < 3:
            raise ValueError("a rate series needs at least 3 points")
        ns = [p.n for p in pts]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n values must be strictly increasing")
        if ns[0] < 2:
            raise ValueError("n must be at least 2 so that log log n is defined")
        for p in pts:
            if not p.value > 0:
                raise ValueError(f"value at n={p.n} must be positive, got {p.value!r}")
            if p.stderr < 0:
                raise ValueError("stderr must be nonnegative")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_arrays(cls, n, value, stderr=None, label: str = "") -> "RateSeries":
        se = np.zeros(len(n)) if stderr is None else stderr
        return cls(tuple(RatePoint(int(a), float(b), float(c)) for a, b, c in zip(n, value, se)),
                   label)

    @property
    def n(self) -> np.ndarray:
        return np.array([p.n for p in self.points], dtype=np.float64)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([p.stderr for p in self.points])


@dataclass(frozen=True)
class RateFit:
    p: float
    q: float
    logC: float
    r_squared: float
    p_stderr: float
    label: str = ""

    def predict(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        return np.exp(self.logC) * np.log(n) ** self.q * n ** (-self.p)

    def to_dict(self) -> dict:
        return {"label": self.label, "p": self.p, "q": self.q, "logC": self.logC,
                "r_squared": self.r_squared, "p_stderr": self.p_stderr}


def fit_rate(series: RateSeries, q: float) -> RateFit:
    """Weighted least squares of ln(value) - q ln ln n on -ln n.

    Weights are (value / stderr)^2, the delta-method inverse variances on the
    log scale, when every point has a positive stderr; otherwise the fit is
    unweighted. p_stderr comes from the weighted-model covariance treating
    the weights as absolute, or from the residual variance when unweighted.
    """
    if not math.isfinite(q):
        raise ValueError("q must be finite")
    n = series.n
    y = np.log(series.values) - q * np.log(np.log(n))
    x = -np.log(n)
    se = series.stderrs
    weighted = bool(np.all(se > 0))
    w = (series.values / se) ** 2 if weighted else np.ones_like(y)
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    logC, p = cov @ (XtW @ y)
    resid = y - (logC + p * x)
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * resid ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    if weighted:
        p_se = math.sqrt(cov[1, 1])
    else:
        dof = len(y) - 2
        p_se = math.sqrt(cov[1, 1] * ss_res / dof) if dof > 0 else math.nan
    return RateFit(float(p), float(q), float(logC), r2, float(p_se), series.label)


@dataclass(frozen=True)
class RateComparison:
    gap: float
    stderr: float
    separated: bool


def compare_rates(a: RateFit, b: RateFit, z: float = 3.0) -> RateComparison:
    gap = a.p - b.p
    se = math.hypot(a.p_stderr, b.p_stderr)
    return RateComparison(gap, se, abs(gap) > z * se)
