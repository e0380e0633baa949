"""Triangular arrays of martingale differences with exact conditional moments.

Two generator kinds are available:

* ``iid``: independent centered unit-variance summands (Rademacher, standard
  Gaussian, or a symmetric sparse law on {-a, 0, a}).
* ``arch``: the nonstationary ARCH array d_i = eta_{i-1} eps_i where eps_k is
  0 with probability 1/(k+1) and +/-a_k otherwise, with a_k^2 = (k+1)/k and
  eta_k^2 a normalized convolution of past eps^2 against u_l = (l+1)^-gamma.

Every generator satisfies E d_j = 0 and E d_j^2 = 1, so sum_j E d_j^2 = n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels

IID_DISTS = ("rademacher", "gaussian", "two-point")
KINDS = ("iid", "arch")
DEFAULT_ARCH_GAMMA = 3.0


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int
    iid_dist: str | None = None
    a: float | None = None
    arch_gamma: float = DEFAULT_ARCH_GAMMA

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"row length n must be a positive integer, got {self.n!r}")
        if self.kind == "iid":
            if self.iid_dist not in IID_DISTS:
                raise ValueError(f"iid_dist must be one of {IID_DISTS}, got {self.iid_dist!r}")
            if self.iid_dist == "two-point":
                if self.a is None or not self.a >= 1.0:
                    raise ValueError("two-point law needs a >= 1 (mass 1/a^2 on +/-a)")
        elif not self.arch_gamma > 2:
            raise ValueError(f"ARCH needs gamma > 2, got {self.arch_gamma!r}")

    def with_n(self, n: int) -> "GeneratorSpec":
        return GeneratorSpec(self.kind, n, self.iid_dist, self.a, self.arch_gamma)

    @property
    def label(self) -> str:
        if self.kind == "arch":
            return f"arch(gamma={self.arch_gamma:g})"
        if self.iid_dist == "two-point":
            return f"iid-two-point(a={self.a:g})"
        return f"iid-{self.iid_dist}"

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "iid":
            out["iid_dist"] = self.iid_dist
            if self.a is not None:
                out["a"] = self.a
        else:
            out["arch_gamma"] = self.arch_gamma
        return out

    @classmethod
    def from_dict(cls, d: dict, n: int) -> "GeneratorSpec":
        return cls(kind=d["kind"], n=n, iid_dist=d.get("iid_dist"), a=d.get("a"),
                   arch_gamma=d.get("arch_gamma", DEFAULT_ARCH_GAMMA))


def rademacher(n: int) -> GeneratorSpec:
    return GeneratorSpec("iid", n, "rademacher")


def gaussian(n: int) -> GeneratorSpec:
    return GeneratorSpec("iid", n, "gaussian")


def two_point(n: int, a: float) -> GeneratorSpec:
    return GeneratorSpec("iid", n, "two-point", a=a)


def arch(n: int, gamma: float = DEFAULT_ARCH_GAMMA) -> GeneratorSpec:
    return GeneratorSpec("arch", n, arch_gamma=gamma)


# --- independent laws -------------------------------------------------------

def iid_moments(dist: str, a: float | None = None) -> tuple[float, float, float]:
    """(E Y^2, E Y^3, E Y^4) of a unit-variance iid law."""
    if dist == "rademacher":
        return 1.0, 0.0, 1.0
    if dist == "gaussian":
        return 1.0, 0.0, 3.0
    if dist == "two-point":
        return 1.0, 0.0, float(a) ** 2
    raise ValueError(f"unknown iid law {dist!r}")


def iid_cf(dist: str, s, a: float | None = None) -> np.ndarray:
    """Characteristic function E exp(i s Y); real because every law is symmetric."""
    s = np.asarray(s, dtype=np.float64)
    if dist == "rademacher":
        return np.cos(s)
    if dist == "gaussian":
        return np.exp(-0.5 * s * s)
    if dist == "two-point":
        w = 1.0 / a ** 2
        return (1.0 - w) + w * np.cos(a * s)
    raise ValueError(f"unknown iid law {dist!r}")


# --- ARCH constants ---------------------------------------------------------

@dataclass(frozen=True)
class ArchTables:
    """1-based coefficient tables for the ARCH array (index 0 unused)."""

    n: int
    gamma: float
    q0: np.ndarray = field(repr=False)     # P(eps_k = 0) = 1 - 2 p_k
    p: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    a2: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)  # partial sums of u (not the bound quantity)
    base: np.ndarray = field(repr=False)   # sum_{i<=k} u_{k+1-i} a_i^2
    inv_alpha: np.ndarray = field(repr=False)

    def kernel_args(self):
        return self.q0, self.p, self.a, self.a2, self.u, self.inv_alpha, self.base

    def abs_dev_bound(self, ell: int, k: int | None = None) -> float:
        """Closed-form L1 bound on E_k(d_ell^2) - 1; k defaults to ell - 1."""
        if k is None:
            k = ell - 1
        if ell == 1 or k <= 0:
            return 0.0
        j = np.arange(ell - k, ell)
        return float(2.0 / self.alpha[ell - 1] * np.sum(self.u[j] * self.q0[ell - j]))


@lru_cache(maxsize=32)
def arch_tables(n: int, gamma: float = DEFAULT_ARCH_GAMMA) -> ArchTables:
    k = np.arange(n + 1, dtype=np.float64)
    k[0] = 1.0  # placeholder slot
    q0 = 1.0 / (k + 1.0)
    p = 0.5 * (1.0 - q0)
    a2 = 1.0 / (2.0 * p)
    a = np.sqrt(a2)
    u = (k + 1.0) ** (-gamma)
    for arr in (q0, p, a2, a, u):
        arr[0] = np.nan
    u_cum = np.concatenate(([0.0], np.cumsum(u[1:])))
    base = np.zeros(n + 1)
    for kk in range(1, n + 1):
        i = np.arange(1, kk + 1)
        base[kk] = np.sum(u[kk + 1 - i] * a2[i])
    alpha = u_cum.copy()
    alpha[0] = np.nan
    inv_alpha = 1.0 / alpha
    tabs = ArchTables(n, float(gamma), q0, p, a, a2, u, alpha, base, inv_alpha)
    for arr in (q0, p, a, a2, u, alpha, base, inv_alpha):
        arr.setflags(write=False)
    return tabs


# --- paths ------------------------------------------------------------------

@dataclass(frozen=True)
class PathBatch:
    """R realized rows of the array with their exact one-step conditional moments.

    All arrays have shape (R, n); column j holds step j + 1. ``aux_eta2`` is
    eta^2_{j-1} for ARCH and None for iid generators.
    """

    spec: GeneratorSpec
    d: np.ndarray
    cond_var: np.ndarray
    cond_m3: np.ndarray
    cond_m4: np.ndarray
    aux_eta2: np.ndarray | None = None

    def __post_init__(self):
        for arr in (self.d, self.cond_var, self.cond_m3, self.cond_m4, self.aux_eta2):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return self.d.shape[0]

    def __getitem__(self, r: int) -> "MdsPath":
        eta = None if self.aux_eta2 is None else self.aux_eta2[r]
        return MdsPath(self.spec, self.d[r], self.cond_var[r], self.cond_m3[r],
                       self.cond_m4[r], eta)


@dataclass(frozen=True)
class MdsPath:
    spec: GeneratorSpec
    d: np.ndarray
    cond_var: np.ndarray
    cond_m3: np.ndarray
    cond_m4: np.ndarray
    aux_eta2: np.ndarray | None = None

    def __len__(self):
        return self.d.size

    def one_step_cf(self, s) -> np.ndarray:
        """E(exp(i s_j d_j) | F_{j-1}) for a vector s of per-step frequencies."""
        s = np.asarray(s, dtype=np.float64)
        spec = self.spec
        if spec.kind == "arch":
            tabs = arch_tables(spec.n, spec.arch_gamma)
            j = np.arange(1, spec.n + 1)
            eta = np.sqrt(self.aux_eta2)
            return tabs.q0[j] + 2.0 * tabs.p[j] * np.cos(s * eta * tabs.a[j])
        return iid_cf(spec.iid_dist, s, spec.a)


def _sign_bytes(stream: np.random.Generator, rows: int, n: int) -> np.ndarray:
    nbytes = (n + 7) // 8
    return np.frombuffer(stream.bytes(rows * nbytes), dtype=np.uint8).reshape(rows, nbytes)


def _iid_batch(spec: GeneratorSpec, reps: int, stream: np.random.Generator) -> PathBatch:
    n = spec.n
    if spec.iid_dist == "rademacher":
        bits = np.unpackbits(_sign_bytes(stream, reps, n), axis=1, bitorder="little")[:, :n]
        d = 2.0 * bits - 1.0
    elif spec.iid_dist == "gaussian":
        d = stream.standard_normal((reps, n))
    else:
        a = spec.a
        U = stream.random((reps, n))
        w = 1.0 / a ** 2
        d = np.where(U < w / 2, a, np.where(U < w, -a, 0.0))
    m2, m3, m4 = iid_moments(spec.iid_dist, spec.a)
    full = lambda v: np.full((reps, n), v)  # noqa: E731
    return PathBatch(spec, d, full(m2), full(m3), full(m4))


def _uniform_pool(stream: np.random.Generator, rows: int, n: int) -> np.ndarray:
    """Uniforms on (0, 1] for placing ARCH zeros; sized for ``rows`` rows plus slack."""
    per_row = 1.0 + float(np.sum(1.0 / np.arange(2, n + 2)))
    size = int(rows * per_row + 6.0 * math.sqrt(rows * per_row) + 32)
    return 1.0 - stream.random(size)


def _run_arch(kernel, rows: int, n: int, stream: np.random.Generator, *args):
    """Drive an ARCH kernel that takes (V, bits, start, ...) to completion."""
    bits = _sign_bytes(stream, rows, n)
    start = 0
    while start < rows:
        V = _uniform_pool(stream, rows - start, n)
        start, _ = kernel(V, bits, start, *args)


def _arch_batch(spec: GeneratorSpec, reps: int, stream: np.random.Generator) -> PathBatch:
    tabs = arch_tables(spec.n, spec.arch_gamma)
    d = np.empty((reps, spec.n))
    eta2 = np.empty((reps, spec.n))
    _run_arch(_kernels.arch_paths, reps, spec.n, stream, *tabs.kernel_args(), d, eta2)
    a2 = tabs.a2[1:]
    return PathBatch(spec, d, eta2.copy(), np.zeros_like(d), eta2 * eta2 * a2, eta2)


def gen_paths(spec: GeneratorSpec, reps: int, stream: np.random.Generator) -> PathBatch:
    """Draw ``reps`` independent rows of the array described by ``spec``."""
    if reps < 1:
        raise ValueError("reps must be positive")
    if spec.kind == "arch":
        return _arch_batch(spec, reps, stream)
    return _iid_batch(spec, reps, stream)


def gen_path(spec: GeneratorSpec, stream: np.random.Generator) -> MdsPath:
    return gen_paths(spec, 1, stream)[0]


def iter_path_blocks(spec: GeneratorSpec, reps: int, stream: np.random.Generator,
                     block: int | None = None):
    """Yield PathBatch blocks totalling ``reps`` rows, bounded in memory."""
    if block is None:
        block = max(256, (1 << 22) // max(spec.n, 1))
    done = 0
    while done < reps:
        b = min(block, reps - done)
        yield gen_paths(spec, b, stream)
        done += b


def weighted_sums(spec: GeneratorSpec, theta: np.ndarray, m: int,
                  stream: np.random.Generator, block: int | None = None) -> np.ndarray:
    """m independent draws of S_n(theta) = sum_j theta_j d_j, without storing paths."""
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    n = theta.size
    if n != spec.n:
        raise ValueError(f"theta has length {n}, spec.n = {spec.n}")
    if block is None:
        block = max(1024, (1 << 21) // n)
    out = np.empty(m)
    if spec.kind == "iid" and spec.iid_dist == "rademacher":
        lut = _kernels.rademacher_lut(theta)
        for s in range(0, m, block):
            b = min(block, m - s)
            _kernels.lut_sums(_sign_bytes(stream, b, n), lut, out[s:s + b])
    elif spec.kind == "arch":
        tabs = arch_tables(n, spec.arch_gamma)
        theta_a = theta * tabs.a[1:]
        for s in range(0, m, block):
            b = min(block, m - s)
            _run_arch(_kernels.arch_sums, b, n, stream, theta_a, tabs.q0, tabs.u, tabs.a2,
                      tabs.inv_alpha, tabs.base, out[s:s + b])
    else:
        for s in range(0, m, block):
            b = min(block, m - s)
            out[s:s + b] = gen_paths(spec, b, stream).d @ theta
    return out


def variance_profile(spec: GeneratorSpec) -> np.ndarray:
    """b_k^2 = E d_k^2, which is identically 1 for every built-in generator."""
    return np.ones(spec.n)


# --- diagnostics ------------------------------------------------------------

def arch_exact_abs_dev(ell: int, gamma: float = DEFAULT_ARCH_GAMMA) -> float:
    """E|eta^2_{ell-1} - 1| by enumerating the zero pattern of eps_1..eps_{ell-1}.

    Feasible for ell up to about 20 (2^(ell-1) patterns).
    """
    if ell == 1:
        return 0.0
    k = ell - 1
    tabs = arch_tables(max(k, 1), gamma)
    idx = np.arange(1, k + 1)
    total = 0.0
    for mask in range(1 << k):
        zero = np.array([(mask >> (i - 1)) & 1 for i in idx], dtype=bool)
        prob = np.prod(np.where(zero, tabs.q0[idx], 1.0 - tabs.q0[idx]))
        eps2 = np.where(zero, 0.0, tabs.a2[idx])
        eta2 = np.sum(tabs.u[k + 1 - idx] * eps2) / tabs.alpha[k]
        total += prob * abs(eta2 - 1.0)
    return float(total)


@dataclass(frozen=True)
class DeviationEstimate:
    ell: int
    value: float
    stderr: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.value <= self.bound + 5.0 * self.stderr


def arch_cond_var_deviation(spec: GeneratorSpec, ell: int, reps: int,
                            stream: np.random.Generator) -> DeviationEstimate:
    """Monte-Carlo E|E_{ell-1}(d_ell^2) - 1| = E|eta^2_{ell-1} - 1| with its closed bound."""
    if spec.kind != "arch":
        raise ValueError("arch_cond_var_deviation needs an ARCH generator")
    if not 1 <= ell <= spec.n:
        raise ValueError(f"ell must lie in [1, {spec.n}]")
    tabs = arch_tables(spec.n, spec.arch_gamma)
    if ell == 1:
        return DeviationEstimate(1, 0.0, 0.0, 0.0)
    sub = spec.with_n(ell)
    s1 = s2 = 0.0
    for batch in iter_path_blocks(sub, reps, stream):
        x = np.abs(batch.aux_eta2[:, ell - 1] - 1.0)
        s1 += x.sum()
        s2 += (x * x).sum()
    mean = s1 / reps
    var = max(s2 / reps - mean * mean, 0.0) * reps / max(reps - 1, 1)
    return DeviationEstimate(ell, mean, math.sqrt(var / reps), tabs.abs_dev_bound(ell))


@dataclass(frozen=True)
class MartingaleReport:
    spec: GeneratorSpec
    reps: int
    max_exact_cond_mean: float
    sample_mean: np.ndarray
    sample_se: np.ndarray
    max_abs_z: float
    max_abs_d: float

    @property
    def ok(self) -> bool:
        bounded = self.spec.kind != "arch" or self.max_abs_d <= 2.0
        return self.max_exact_cond_mean == 0.0 and self.max_abs_z < 5.0 and bounded


def exact_cond_mean(path: MdsPath) -> np.ndarray:
    """E(d_j | F_{j-1}) from the one-step law along a realized history."""
    spec = path.spec
    if spec.kind == "arch":
        tabs = arch_tables(spec.n, spec.arch_gamma)
        j = np.arange(1, spec.n + 1)
        # eta_{j-1} * (p_j a_j - p_j a_j); written out so the symmetry is explicit
        eta = np.sqrt(path.aux_eta2)
        return eta * (tabs.p[j] * tabs.a[j] - tabs.p[j] * tabs.a[j])
    if spec.iid_dist == "two-point":
        w = 1.0 / spec.a ** 2
        return np.full(spec.n, (w / 2) * spec.a - (w / 2) * spec.a)
    return np.zeros(spec.n)


def check_martingale_property(spec: GeneratorSpec, reps: int,
                              stream: np.random.Generator,
                              histories: int = 32) -> MartingaleReport:
    """Exact conditional means on sampled histories plus a per-step sample-mean z test."""
    if reps < 1:
        raise ValueError("reps must be positive")
    s1 = np.zeros(spec.n)
    s2 = np.zeros(spec.n)
    worst = 0.0
    max_d = 0.0
    seen = 0
    for batch in iter_path_blocks(spec, reps, stream):
        s1 += batch.d.sum(axis=0)
        s2 += (batch.d ** 2).sum(axis=0)
        max_d = max(max_d, float(np.abs(batch.d).max()))
        for r in range(min(histories - seen, len(batch))):
            worst = max(worst, float(np.abs(exact_cond_mean(batch[r])).max()))
            seen += 1
    mean = s1 / reps
    var = np.maximum(s2 / reps - mean ** 2, 0.0) * reps / max(reps - 1, 1)
    se = np.sqrt(var / reps)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(mean) / se, np.where(mean == 0, 0.0, np.inf))
    return MartingaleReport(spec, reps, worst, mean, se, float(z.max()), max_d)
