"""Uniform sampling on the unit sphere S^{n-1} and its low-order moments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12
_ZERO_GUARD = 1e-300


@dataclass(frozen=True)
class UnitVector:
    """A point theta on S^{n-1}; used as the randomization weights."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("UnitVector needs a nonempty 1-d coordinate array")
        if abs(float(c @ c) - 1.0) > NORM_TOL:
            raise ValueError(f"coordinates are not unit norm: |theta|^2 = {float(c @ c)!r}")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.size

    def __len__(self) -> int:
        return self.coords.size

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)


def _check_dim(n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"invalid dimension n={n!r}; need a positive integer")
    return int(n)


def sample_sphere(n: int, stream: np.random.Generator) -> UnitVector:
    """Draw theta ~ uniform on S^{n-1} by normalizing a standard Gaussian vector."""
    n = _check_dim(n)
    while True:
        z = stream.standard_normal(n)
        r = np.sqrt(z @ z)
        if r >= _ZERO_GUARD:
            return UnitVector(z / r)


def sample_sphere_batch(n: int, count: int, stream: np.random.Generator) -> np.ndarray:
    """Return a (count, n) array whose rows are independent uniform points on S^{n-1}."""
    n = _check_dim(n)
    z = stream.standard_normal((count, n))
    r = np.sqrt(np.einsum("ij,ij->i", z, z))
    bad = r < _ZERO_GUARD
    while bad.any():
        z[bad] = stream.standard_normal((int(bad.sum()), n))
        r[bad] = np.sqrt(np.einsum("ij,ij->i", z[bad], z[bad]))
        bad = r < _ZERO_GUARD
    return z / r[:, None]


def sphere_moment(n: int, power: int) -> float:
    """Exact E theta_k^power for power in {2, 4}."""
    n = _check_dim(n)
    if power == 2:
        return 1.0 / n
    if power == 4:
        return 3.0 / (n * (n + 2))
    raise ValueError(f"unsupported power {power!r}; only 2 and 4 are available")


@dataclass(frozen=True)
class MomentCheck:
    power: int
    empirical: float
    exact: float
    z: float

    @property
    def ok(self) -> bool:
        return abs(self.z) <= 5.0


@dataclass(frozen=True)
class SphereMomentReport:
    n: int
    draws: int
    checks: tuple[MomentCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)


def check_sphere_moments(n: int, draws: int, stream: np.random.Generator,
                         chunk: int = 1 << 16) -> SphereMomentReport:
    """Compare empirical moments of theta_1 against the exact values.

    The standardized deviation uses the sample standard deviation of theta_1^p,
    so a zero-variance case (n = 1) gives z = 0 when the match is exact.
    """
    n = _check_dim(n)
    if draws < 1000:
        raise ValueError("check_sphere_moments needs at least 1000 draws")
    s = {2: [0.0, 0.0], 4: [0.0, 0.0]}
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        th1 = sample_sphere_batch(n, b, stream)[:, 0]
        sq = th1 * th1
        for p, x in ((2, sq), (4, sq * sq)):
            s[p][0] += x.sum()
            s[p][1] += (x * x).sum()
        done += b
    checks = []
    for p in (2, 4):
        mean = s[p][0] / draws
        var = max(s[p][1] / draws - mean * mean, 0.0) * draws / (draws - 1)
        exact = sphere_moment(n, p)
        se = np.sqrt(var / draws)
        if se > 0:
            z = (mean - exact) / se
        else:
            z = 0.0 if abs(mean - exact) <= 1e-12 else np.inf
        checks.append(MomentCheck(p, float(mean), exact, float(z)))
    return SphereMomentReport(n, draws, tuple(checks))
