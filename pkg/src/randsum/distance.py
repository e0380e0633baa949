"""Kolmogorov distance between S_n(theta) and its Gaussian reference.

The target is E kappa_theta where, for fixed theta,

    kappa_theta = sup_t |P(S_n(theta) <= t | theta) - P(N_theta <= t | theta)|

and N_theta is centered Gaussian with variance V_n^2(theta) = sum theta_k^2 E d_k^2.
The estimator draws m independent paths per theta and takes the one-sample
empirical-CDF sup; its upward bias per theta is controlled by the DKW radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.special import ndtr

from .martingales import GeneratorSpec, iid_cf, variance_profile, weighted_sums
from .sphere import UnitVector, sample_sphere

MapFn = Callable[..., Iterable]


class SizingError(ValueError):
    """Inner sample too small for the estimate to carry information."""


def normal_cdf(x):
    """Standard normal CDF (scalar or array)."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("normal_cdf needs finite input")
    out = ndtr(arr)
    return float(out) if out.ndim == 0 else out


def dkw_radius(m: int, delta: float) -> float:
    """Half-width eps with P(sup |F_m - F| > eps) <= delta."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * m))


def ks_sup(samples, sigma: float = 1.0) -> float:
    """sup_t |F_m(t) - Phi(t / sigma)| for the empirical CDF F_m of ``samples``.

    Both sides of every jump are checked, which is where the sup of a
    right-continuous step function against a continuous CDF is attained.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    m = x.size
    if m == 0:
        raise ValueError("ks_sup needs at least one sample")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    x = np.sort(x)
    F = ndtr(x / sigma)
    upper = np.arange(1, m + 1) / m - F
    lower = F - np.arange(0, m) / m
    return float(max(np.abs(upper).max(), np.abs(lower).max()))


@dataclass(frozen=True)
class DistanceEstimate:
    """Average Kolmogorov distance over ``outer_samples`` theta draws.

    ``inner_samples == 0`` marks an exact per-theta evaluation (no DKW term).
    """

    value: float
    inner_samples: int
    outer_samples: int
    dkw_radius: float
    stderr_outer: float
    delta: float
    per_theta: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not -1e-15 <= self.value <= 1.0 + 1e-15:
            raise ValueError(f"distance {self.value!r} outside [0, 1]")


def _reference_sigma(spec: GeneratorSpec, theta: np.ndarray) -> float:
    v2 = float(theta ** 2 @ variance_profile(spec))
    # every built-in generator has unit variances, so N_theta ~ N(0, 1) exactly
    if abs(v2 - 1.0) > 1e-12:
        raise AssertionError(f"V_n^2(theta) = {v2!r} for a unit-variance generator")
    return 1.0


def _validate(spec: GeneratorSpec, n: int, m: int, delta: float, min_m: int) -> float:
    if spec.n != n:
        raise ValueError(f"spec.n = {spec.n} but n = {n}")
    r = dkw_radius(m, delta)
    if r > 0.5:
        raise SizingError(f"m={m} gives DKW radius {r:.3f} > 0.5")
    if m < min_m:
        raise ValueError(f"need m >= {min_m} inner paths, got {m}")
    return r


def _kappa_one_theta(spec: GeneratorSpec, m: int, stream: np.random.Generator) -> float:
    theta = sample_sphere(spec.n, stream).coords
    sigma = _reference_sigma(spec, theta)
    return ks_sup(weighted_sums(spec, theta, m, stream), sigma)


def expected_kappa_randomized(spec: GeneratorSpec, n: int, M: int, m: int, delta: float,
                              stream: np.random.Generator,
                              map_fn: MapFn = map) -> DistanceEstimate:
    """Estimate E kappa_theta(P_{S_n(theta)}, P_{N_theta}) over theta ~ uniform(S^{n-1}).

    Each of the M theta draws gets its own child stream, so the result does not
    depend on how ``map_fn`` schedules the work.
    """
    if M < 10:
        raise ValueError("need M >= 10 theta draws")
    r = _validate(spec, n, m, delta, 10_000)
    children = stream.spawn(M)
    vals = np.fromiter(map_fn(_kappa_one_theta, [spec] * M, [m] * M, children),
                       dtype=np.float64, count=M)
    return DistanceEstimate(float(vals.mean()), m, M, r,
                            float(vals.std(ddof=1) / math.sqrt(M)), delta, tuple(vals))


def kappa_classical(spec: GeneratorSpec, n: int, m: int, delta: float,
                    stream: np.random.Generator) -> DistanceEstimate:
    """Kolmogorov distance of n^{-1/2} sum d_j to N(0, 1) (equal weights)."""
    r = _validate(spec, n, m, delta, 10_000)
    theta = np.full(n, 1.0 / math.sqrt(n))
    v = ks_sup(weighted_sums(spec, theta, m, stream), 1.0)
    return DistanceEstimate(v, m, 1, r, 0.0, delta, (v,))


# --- characteristic-function inversion (independent summands) ---------------

def _require_iid(spec: GeneratorSpec):
    if spec.kind != "iid":
        raise ValueError("CF inversion needs independent summands with a closed-form CF")


def cdf_by_inversion(cf: Callable[[np.ndarray], np.ndarray], x: np.ndarray, *,
                     step: float, t_max: float) -> np.ndarray:
    """CDF of a symmetric law from its real CF by trapezoidal Gil-Pelaez inversion.

    F(x) = 1/2 + (1/pi) int_0^inf sin(t x) phi(t) / t dt. The trapezoid rule with
    spacing ``step`` is exact for the law wrapped onto a circle of length
    2 pi / step, so the error is the mass beyond 2 pi / step - |x| plus the
    truncation at ``t_max``.
    """
    t = step * np.arange(1, int(math.ceil(t_max / step)) + 1)
    w = cf(t) / (math.pi * np.arange(1, t.size + 1))
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 + x * step / (2 * math.pi)
    for lo in range(0, x.size, 256):
        xs = x[lo:lo + 256]
        out[lo:lo + 256] += np.sin(np.outer(xs, t)) @ w
    return out


def kappa_theta_inversion(spec: GeneratorSpec, theta, *, smoothing: float = 1e-2,
                          x_max: float = 7.0, x_step: float = 2e-3) -> float:
    """sup_x |F_theta - Phi| for independent summands, from the exact CF.

    The law of S_n(theta) and the Gaussian are both convolved with N(0, h^2),
    h = ``smoothing``, which makes the CF integrable without moving the sup by
    more than O(h^2). No Monte-Carlo error is involved.
    """
    _require_iid(spec)
    theta = np.asarray(theta, dtype=np.float64)
    h = smoothing
    radius = max(float(np.abs(theta).sum()), 12.0)
    step = 2 * math.pi / (2 * radius + 2 * x_max)
    t_max = math.sqrt(2 * 40.0) / h

    def cf(t):
        out = np.exp(-0.5 * (h * t) ** 2)
        for lo in range(0, theta.size, 64):
            out = out * np.prod(iid_cf(spec.iid_dist, np.outer(t, theta[lo:lo + 64]), spec.a),
                                axis=1)
        return out

    x = np.arange(-x_max, x_max + x_step / 2, x_step)
    F = cdf_by_inversion(cf, x, step=step, t_max=t_max)
    return float(np.abs(F - ndtr(x / math.sqrt(1 + h * h))).max())


def expected_kappa_inversion(spec: GeneratorSpec, n: int, M: int,
                             stream: np.random.Generator, map_fn: MapFn = map,
                             **kw) -> DistanceEstimate:
    """E kappa_theta for independent summands with the exact per-theta distance."""
    _require_iid(spec)
    if spec.n != n:
        raise ValueError(f"spec.n = {spec.n} but n = {n}")
    children = stream.spawn(M)

    def one(child):
        return kappa_theta_inversion(spec, sample_sphere(n, child).coords, **kw)

    vals = np.fromiter(map_fn(one, children), dtype=np.float64, count=M)
    se = float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return DistanceEstimate(float(vals.mean()), 0, M, 0.0, se, 0.05, tuple(vals))


def kappa_rademacher_exact(theta) -> float:
    """Exact sup |F - Phi| by enumerating all 2^n sign patterns (n <= 20)."""
    theta = np.asarray(theta, dtype=np.float64)
    n = theta.size
    if n > 20:
        raise ValueError("enumeration is limited to n <= 20")
    signs = np.unpackbits(np.arange(1 << n, dtype=np.uint32).view(np.uint8).reshape(-1, 4),
                          axis=1, bitorder="little")[:, :n] * 2.0 - 1.0
    return ks_sup(signs @ theta, 1.0)


def as_theta(theta) -> np.ndarray:
    return theta.coords if isinstance(theta, UnitVector) else np.asarray(theta, dtype=np.float64)
