"""Characteristic-function diagnostics for randomized martingale sums.

Everything here is built on the one-step conditional CFs exposed by the
generators. Their product along a path, f_{n,theta}(t), is the object the
smoothing argument controls, and the T-functionals measure how far it can move
from exp(-t^2 V^2 / 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from .martingales import (GeneratorSpec, MdsPath, PathBatch, _uniform_pool, arch_tables,
                          gen_paths, iid_cf, iid_moments, variance_profile)
from .sphere import sample_sphere

MapFn = Callable[..., Iterable]
TRUNCATION_LEVEL = 0.5 / math.sqrt(math.e)
DEFAULT_THRESHOLD = 20.0


class UnsupportedGeneratorError(ValueError):
    """The generator has no closed-form one-step conditional CF."""


def _theta(theta) -> np.ndarray:
    return np.asarray(getattr(theta, "coords", theta), dtype=np.float64)


def _grid(t) -> np.ndarray:
    return np.atleast_1d(np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class TFunctionals:
    t2sq: float
    t3cube: float
    t4quad: float

    def __post_init__(self):
        if self.t2sq < 0 or self.t4quad < 0:
            raise ValueError("T_2^2 and T_4^4 must be nonnegative")


@dataclass(frozen=True)
class CfCurve:
    t_grid: np.ndarray
    values: np.ndarray
    kind: str  # "empirical", "conditional-product" or "gaussian-reference"


def _check_lengths(path: MdsPath, th: np.ndarray):
    if th.size != len(path):
        raise ValueError(f"theta has length {th.size}, path has length {len(path)}")


def _factors(path: MdsPath, th: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(G, n) array of one-step conditional CFs at s = t * theta_j."""
    if path.spec.kind not in ("iid", "arch"):
        raise UnsupportedGeneratorError(path.spec.kind)
    return np.asarray(path.one_step_cf(np.outer(t, th)), dtype=np.float64)


def conditional_cf_product(path: MdsPath, theta, t_grid) -> CfCurve:
    """f_{n,theta}(t) = prod_j E(exp(i t theta_j d_j) | F_{j-1}) along one path."""
    th = _theta(theta)
    _check_lengths(path, th)
    t = _grid(t_grid)
    vals = np.prod(_factors(path, th, t), axis=1)
    return CfCurve(t, vals.astype(np.complex128), "conditional-product")


def gaussian_reference(t_grid, v2: float = 1.0) -> CfCurve:
    t = _grid(t_grid)
    return CfCurve(t, np.exp(-0.5 * t * t * v2).astype(np.complex128), "gaussian-reference")


def t_functionals(path: MdsPath, theta) -> TFunctionals:
    th = _theta(theta)
    _check_lengths(path, th)
    th2 = th * th
    return TFunctionals(float(th2 @ path.cond_var), float((th2 * th) @ path.cond_m3),
                        float((th2 * th2) @ path.cond_m4))


@dataclass(frozen=True)
class Truncation:
    flags: np.ndarray
    original: TFunctionals
    truncated: TFunctionals


def truncation_flags(path: MdsPath, theta, t: float) -> Truncation:
    """Membership of A_j = {|f_{j,theta}(t)| > e^{-t^2 V^2/2} / (2 sqrt(e))}.

    Once the running product drops to the threshold every later flag is false,
    so the flags are nonincreasing in j. A_j is F_{j-1}-measurable, which makes
    the truncated differences d_j 1{A_j} again a martingale difference sequence
    whose conditional moments are the originals times the flag.
    """
    th = _theta(theta)
    _check_lengths(path, th)
    v2 = float(th * th @ variance_profile(path.spec))
    level = TRUNCATION_LEVEL * math.exp(-0.5 * t * t * v2)
    running = np.abs(np.cumprod(_factors(path, th, np.array([float(t)]))[0]))
    flags = np.logical_and.accumulate(running > level)
    th2 = th * th
    f = flags.astype(np.float64)
    trunc = TFunctionals(float((th2 * f) @ path.cond_var),
                         float((th2 * th * f) @ path.cond_m3),
                         float((th2 * th2 * f) @ path.cond_m4))
    return Truncation(flags, t_functionals(path, th), trunc)


def _batch_factors(paths: PathBatch, th: np.ndarray, t: float) -> np.ndarray:
    """(R, n) one-step conditional CFs at s = t theta_j for every path in a batch."""
    spec = paths.spec
    if spec.kind == "arch":
        tabs = arch_tables(spec.n, spec.arch_gamma)
        j = slice(1, spec.n + 1)
        return tabs.q0[j] + 2.0 * tabs.p[j] * np.cos(t * th * tabs.a[j] * np.sqrt(paths.aux_eta2))
    if spec.kind == "iid":
        return np.broadcast_to(iid_cf(spec.iid_dist, t * th, spec.a), paths.d.shape)
    raise UnsupportedGeneratorError(spec.kind)


def a_n_miss_fraction(paths: PathBatch, theta, t: float) -> float:
    """Fraction of paths outside A_n, i.e. whose running product hits the threshold."""
    th = _theta(theta)
    v2 = float(th * th @ variance_profile(paths.spec))
    level = TRUNCATION_LEVEL * math.exp(-0.5 * t * t * v2)
    running = np.abs(np.cumprod(_batch_factors(paths, th, float(t)), axis=1))
    return float(np.mean(running.min(axis=1) <= level))


# --- B_n(theta, t) and the CF gap -----------------------------------------

@dataclass(frozen=True)
class BnParts:
    """Path-ensemble means entering B_n(theta, t)."""

    abs_t3: float
    t4: float
    drift: float  # E|sum theta_k^2 (E_{k-1} d_k^2 - E d_k^2)|

    def at(self, t) -> np.ndarray:
        t = np.abs(_grid(t))
        return t ** 3 * self.abs_t3 + t ** 4 * self.t4 + t ** 2 * self.drift


def bn_parts(paths: PathBatch, theta) -> BnParts:
    th = _theta(theta)
    th2 = th * th
    t3 = paths.cond_m3 @ (th2 * th)
    t4 = paths.cond_m4 @ (th2 * th2)
    drift = (paths.cond_var - variance_profile(paths.spec)) @ th2
    return BnParts(float(np.mean(np.abs(t3))), float(np.mean(t4)), float(np.mean(np.abs(drift))))


def bn_bound(paths: PathBatch, theta, t) -> np.ndarray:
    """|t|^3 E|T_3^3| + t^4 E T_4^4 + t^2 E|sum theta^2 (E_{k-1} d_k^2 - E d_k^2)|."""
    return bn_parts(paths, theta).at(t)


@dataclass(frozen=True)
class CfGap:
    t_grid: np.ndarray
    cf: np.ndarray       # estimate of E_theta exp(i t S_n(theta))
    cf_stderr: np.ndarray
    gap: np.ndarray      # |cf - exp(-t^2 V^2 / 2)|
    exact: bool


def _arch_signfree(spec: GeneratorSpec, th: np.ndarray, t: np.ndarray, m: int,
                   stream: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Mean and stderr of prod_k cos(t theta_k a_k eta_{k-1}) over m zero patterns."""
    tabs = arch_tables(spec.n, spec.arch_gamma)
    theta_a = th * tabs.a[1:]
    acc = np.zeros(t.size)
    acc2 = np.zeros(t.size)
    left = m
    while left > 0:
        V = _uniform_pool(stream, left, spec.n)
        done, _ = _kernels.arch_signfree_cf(V, left, theta_a, t, tabs.q0, tabs.u, tabs.a2,
                                            tabs.inv_alpha, tabs.base, acc, acc2)
        left -= done
    mean = acc / m
    var = np.maximum(acc2 / m - mean * mean, 0.0) * m / (m - 1)
    return mean, np.sqrt(var / m)


def cf_of_sum(spec: GeneratorSpec, theta, t_grid, m: int,
              stream: np.random.Generator | None) -> tuple[np.ndarray, np.ndarray, bool]:
    """E_theta exp(i t S_n(theta)) on a grid, with stderr and an exactness flag.

    Independent summands give the exact product of one-dimensional CFs. For the
    ARCH array the signs are integrated out analytically and only the zero
    pattern is sampled, which removes most of the Monte-Carlo variance.
    """
    th = _theta(theta)
    t = _grid(t_grid)
    if spec.kind == "iid":
        cf = np.ones(t.size)
        for lo in range(0, th.size, 64):
            cf *= np.prod(iid_cf(spec.iid_dist, np.outer(t, th[lo:lo + 64]), spec.a), axis=1)
        return cf, np.zeros(t.size), True
    if spec.kind == "arch":
        mean, se = _arch_signfree(spec, th, t, m, stream)
        return mean, se, False
    raise UnsupportedGeneratorError(spec.kind)


def cf_gap(spec: GeneratorSpec, theta, t, m: int, stream: np.random.Generator) -> CfGap:
    """|E_theta exp(i t S_n(theta)) - exp(-t^2 V_n^2(theta)/2)| over a t-grid."""
    if m < 10_000:
        raise ValueError("cf_gap needs m >= 10^4")
    th = _theta(theta)
    t_arr = _grid(t)
    v2 = float(th * th @ variance_profile(spec))
    cf, se, exact = cf_of_sum(spec, th, t_arr, m, stream)
    gap = np.abs(cf - np.exp(-0.5 * t_arr ** 2 * v2))
    gap[t_arr == 0] = 0.0
    return CfGap(t_arr, cf, se, gap, exact)


@dataclass(frozen=True)
class RatioReport:
    t_grid: np.ndarray
    gap: np.ndarray
    gap_stderr: np.ndarray
    bn: np.ndarray
    ratio: np.ndarray           # gap / B_n, NaN where B_n = 0
    adjusted_ratio: np.ndarray  # max(gap - 3 stderr, 0) / B_n
    flags_false_fraction: np.ndarray
    threshold: float

    @property
    def max_ratio(self) -> float:
        r = self.adjusted_ratio[np.isfinite(self.adjusted_ratio)]
        return float(r.max()) if r.size else 0.0

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.threshold


def cf_ratio_report(spec: GeneratorSpec, theta, t_grid, m: int, reps: int,
                    stream: np.random.Generator, threshold: float = DEFAULT_THRESHOLD
                    ) -> RatioReport:
    """Ratio cf_gap / B_n(theta, t) on a grid, plus the frequency of A_n^c.

    The pass test uses the gap minus three standard errors: for the ARCH array
    the raw gap at small t is dominated by Monte-Carlo noise while B_n is
    exact, so the raw ratio there measures the estimator, not the inequality.
    """
    th = _theta(theta)
    t = _grid(t_grid)
    s_gap, s_paths = stream.spawn(2)
    g = cf_gap(spec, th, t, m, s_gap)
    paths = gen_paths(spec, reps, s_paths)
    bn = bn_bound(paths, th, t)
    miss = np.array([a_n_miss_fraction(paths, th, tt) for tt in t])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bn > 0, g.gap / bn, np.nan)
        adj = np.where(bn > 0, np.maximum(g.gap - 3 * g.cf_stderr, 0.0) / bn, np.nan)
    return RatioReport(t, g.gap, g.cf_stderr, bn, ratio, adj, miss, threshold)


# --- Taylor lemma for independent summands -------------------------------

@dataclass(frozen=True)
class TaylorReport:
    t_used: np.ndarray
    lhs: np.ndarray
    ratio: np.ndarray
    excluded: np.ndarray
    r: TFunctionals
    threshold: float

    @property
    def max_ratio(self) -> float:
        finite = self.ratio[np.isfinite(self.ratio)]
        return float(finite.max()) if finite.size else 0.0

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.threshold


def taylor_lemma_check(moments, theta, t_grid, cf: Callable[[np.ndarray], np.ndarray] | None = None,
                       *, spec: GeneratorSpec | None = None,
                       threshold: float = DEFAULT_THRESHOLD) -> TaylorReport:
    """Check |prod f_j(theta_j t) - e^{-R_2^2 t^2/2}| against e^{-R_2^2 t^2/2}(|R_3^3||t|^3 + R_4^4 t^4).

    ``moments`` is a per-summand list of (E Y^2, E Y^3, E Y^4); the CFs come
    either from ``cf`` (called with an (G, n) array of arguments, returning
    per-summand CF values) or from an iid ``spec``. Grid points beyond
    min(1/R_4, 1/|R_3|) lie outside the lemma and are excluded.
    """
    th = _theta(theta)
    mom = np.asarray(moments, dtype=np.float64).reshape(-1, 3)
    if mom.shape[0] != th.size:
        raise ValueError("need one moment triple per summand")
    if cf is None:
        if spec is None or spec.kind != "iid":
            raise UnsupportedGeneratorError("taylor_lemma_check needs independent summands")
        cf = lambda s: iid_cf(spec.iid_dist, s, spec.a)  # noqa: E731
    th2 = th * th
    r = TFunctionals(float(th2 @ mom[:, 0]), float((th2 * th) @ mom[:, 1]),
                     float((th2 * th2) @ mom[:, 2]))
    limit = math.inf
    if r.t4quad > 0:
        limit = min(limit, r.t4quad ** -0.25)
    if r.t3cube != 0:
        limit = min(limit, abs(r.t3cube) ** (-1.0 / 3.0))
    t = np.abs(_grid(t_grid))
    keep = t <= limit
    tu = t[keep]
    prod = np.prod(cf(np.outer(tu, th)), axis=1)
    ref = np.exp(-0.5 * r.t2sq * tu * tu)
    lhs = np.abs(prod - ref)
    rhs = ref * (abs(r.t3cube) * tu ** 3 + r.t4quad * tu ** 4)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, np.nan))
    return TaylorReport(tu, lhs, ratio, t[~keep], r, threshold)


def iid_moment_table(spec: GeneratorSpec) -> np.ndarray:
    return np.tile(np.array(iid_moments(spec.iid_dist, spec.a)), (spec.n, 1))


# --- Esseen smoothing integral --------------------------------------------

@dataclass(frozen=True)
class EsseenResult:
    value: float
    stderr: float
    T0: float
    t_grid: np.ndarray
    mean_gap: np.ndarray
    per_theta: np.ndarray
    exact_inner: bool


def default_T0(n: int) -> float:
    return 4.0 * math.sqrt(math.log(n))


def _log_trapezoid(t: np.ndarray, g: np.ndarray) -> float:
    """int_0^{t[-1]} g(t) dt / t with g ~ c t^2 below t[0]."""
    x = np.log(t)
    return float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(x)) + 0.5 * g[0])


def esseen_integral(spec: GeneratorSpec, n: int, T0: float, t_points: int, M: int, m: int,
                    stream: np.random.Generator, map_fn: MapFn = map) -> EsseenResult:
    """E int_0^{T0} |E_theta exp(i t S_n(theta)) - exp(-t^2 V_n^2(theta)/2)| dt / t.

    The grid is log-spaced on [T0 1e-4, T0]. Below the first node the integrand
    behaves like c t (matched second moments), contributing g(t_min)/2.
    """
    if T0 <= 1:
        raise ValueError("T0 must exceed 1")
    if t_points < 16:
        raise ValueError("need at least 16 grid points")
    if spec.n != n:
        raise ValueError(f"spec.n = {spec.n} but n = {n}")
    t = np.geomspace(T0 * 1e-4, T0, t_points)
    children = stream.spawn(M)

    def one(child):
        th = sample_sphere(n, child).coords
        v2 = float(th * th @ variance_profile(spec))
        cf, _, _ = cf_of_sum(spec, th, t, m, child)
        return np.abs(cf - np.exp(-0.5 * t * t * v2))

    gaps = np.array(list(map_fn(one, children)))
    per = np.array([_log_trapezoid(t, g) for g in gaps])
    se = float(per.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return EsseenResult(float(per.mean()), se, T0, t, gaps.mean(0), per, spec.kind == "iid")
