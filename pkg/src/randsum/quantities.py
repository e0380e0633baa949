"""The moment quantities that drive the randomized Berry-Esseen bounds.

For a row d_1..d_n of the array:

* alpha_n   = max_k E d_k^4
* beta_n    = E sqrt((1/n) sum_j E_{j-1}(d_j^3)^2)
* gamma_sum = sum_j E|E_{j-1}(d_j^2) - E d_j^2|, gamma_mean = gamma_sum / n
* sigma4sq  = Var(sum_k d_k^2) / n
* c2sq      = (1/n) sum_{k,l} |Cov(d_k^2, d_l^2)|

sigma4sq and c2sq are read off the same sample covariance matrix of (d_k^2)_k,
so sigma4sq <= c2sq holds on every estimate, not just in expectation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import numpy as np

from .martingales import GeneratorSpec, gen_paths, variance_profile

MapFn = Callable[..., Iterable]
ARCH_ALPHA_BOUND = 16.0
_JACKKNIFE_GROUPS = 16


@dataclass(frozen=True)
class BoundQuantities:
    n: int
    reps: int
    alpha_n: float
    beta_n: float
    gamma_sum_n: float
    gamma_mean_n: float
    sigma4sq_n: float
    c2sq_n: float
    alpha_n_stderr: float = 0.0
    beta_n_stderr: float = 0.0
    gamma_sum_n_stderr: float = 0.0
    gamma_mean_n_stderr: float = 0.0
    sigma4sq_n_stderr: float = 0.0
    c2sq_n_stderr: float = 0.0
    alpha_bound: float | None = None
    c2sq_warning: bool = False

    def __post_init__(self):
        for name in ("alpha_n", "beta_n", "gamma_sum_n", "gamma_mean_n", "sigma4sq_n", "c2sq_n"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def zeros(cls, n: int) -> "BoundQuantities":
        return cls(n, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class _Acc:
    """Per-task sums; merged in task order."""

    rows: int
    d4: np.ndarray        # column sums of d^4
    d4sq: np.ndarray      # column sums of d^8
    beta: float
    beta_sq: float
    gam: float            # row sums of |cond_var - E d^2|, summed over rows
    gam_sq: float
    x: np.ndarray         # column sums of d^2
    xx: np.ndarray        # (d^2)^T (d^2)

    def merge(self, o: "_Acc") -> "_Acc":
        return _Acc(self.rows + o.rows, self.d4 + o.d4, self.d4sq + o.d4sq,
                    self.beta + o.beta, self.beta_sq + o.beta_sq,
                    self.gam + o.gam, self.gam_sq + o.gam_sq, self.x + o.x, self.xx + o.xx)


def _block_acc(spec: GeneratorSpec, rows: int, stream: np.random.Generator) -> _Acc:
    b = gen_paths(spec, rows, stream)
    d2 = b.d * b.d
    d4 = d2 * d2
    beta_row = np.sqrt(np.mean(b.cond_m3 ** 2, axis=1))
    gam_row = np.abs(b.cond_var - variance_profile(spec)).sum(axis=1)
    return _Acc(rows, d4.sum(0), (d4 * d4).sum(0), float(beta_row.sum()),
                float(beta_row @ beta_row), float(gam_row.sum()), float(gam_row @ gam_row),
                d2.sum(0), d2.T @ d2)


def _cov_stats(acc: _Acc) -> tuple[float, float]:
    r = acc.rows
    mean = acc.x / r
    cov = (acc.xx - r * np.outer(mean, mean)) / (r - 1)
    n = mean.size
    return float(cov.sum()) / n, float(np.abs(cov).sum()) / n


def _mean_se(total: float, total_sq: float, r: int) -> tuple[float, float]:
    m = total / r
    var = max(total_sq / r - m * m, 0.0) * r / (r - 1)
    return m, math.sqrt(var / r)


def estimate_quantities(spec: GeneratorSpec, reps: int, stream: np.random.Generator,
                        map_fn: MapFn = map, block: int | None = None) -> BoundQuantities:
    """Monte-Carlo estimates of the bound quantities over ``reps`` rows.

    Conditional moments come from the generator's exact one-step law, so
    beta_n and gamma are exact per path and only averaged over paths. Standard
    errors of the covariance-based pair come from a grouped jackknife.
    """
    if reps < 100:
        raise ValueError("estimate_quantities needs reps >= 100")
    n = spec.n
    if block is None:
        block = max(100, min(4096, (1 << 22) // max(n, 1)))
    sizes = [min(block, reps - s) for s in range(0, reps, block)]
    children = stream.spawn(len(sizes))
    accs = list(map_fn(_block_acc, [spec] * len(sizes), sizes, children))

    total = accs[0]
    for a in accs[1:]:
        total = total.merge(a)
    r = total.rows

    m4 = total.d4 / r
    k = int(np.argmax(m4))
    alpha, alpha_se = _mean_se(total.d4[k], total.d4sq[k], r)
    beta, beta_se = _mean_se(total.beta, total.beta_sq, r)
    gam, gam_se = _mean_se(total.gam, total.gam_sq, r)

    s4, c2 = _cov_stats(total)
    s4_se = c2_se = 0.0
    groups = min(_JACKKNIFE_GROUPS, len(accs))
    if groups >= 2:
        parts = []
        for g in range(groups):
            acc = accs[g]
            for a in accs[g + groups::groups]:
                acc = acc.merge(a)
            parts.append(acc)
        loo = []
        for g in range(groups):
            rest = None
            for h, p in enumerate(parts):
                if h != g:
                    rest = p if rest is None else rest.merge(p)
            loo.append(_cov_stats(rest))
        loo = np.array(loo)
        c = (groups - 1) / groups
        s4_se, c2_se = np.sqrt(c * ((loo - loo.mean(0)) ** 2).sum(0))

    return BoundQuantities(
        n=n, reps=r,
        alpha_n=alpha, beta_n=beta, gamma_sum_n=gam, gamma_mean_n=gam / n,
        sigma4sq_n=max(s4, 0.0), c2sq_n=c2,
        alpha_n_stderr=alpha_se, beta_n_stderr=beta_se, gamma_sum_n_stderr=gam_se,
        gamma_mean_n_stderr=gam_se / n, sigma4sq_n_stderr=float(s4_se),
        c2sq_n_stderr=float(c2_se),
        alpha_bound=ARCH_ALPHA_BOUND if spec.kind == "arch" else None,
        c2sq_warning=reps < n,
    )


def theorem_bound(q: BoundQuantities, n: int, which: str = "2.1", *,
                  gamma: str = "sum", v2_form: str = "product") -> float:
    """Bracketed bound with universal constants set to 1.

    ``which="2.1"`` gives (1 + v_n)/n and ``"2.2"`` gives (1 + v'_n)/sqrt(n).
    ``gamma`` picks the summed or averaged drift term; ``v2_form`` picks how
    c_2 and sigma_4^2 combine in v'_n.
    """
    if n < 2:
        raise ValueError("theorem_bound needs n >= 2")
    L = math.log(n)
    tail = q.beta_n * L ** 1.5 + q.alpha_n * L * L
    if which in ("2.1", "Thm2.1"):
        if gamma not in ("sum", "mean"):
            raise ValueError("gamma must be 'sum' or 'mean'")
        g = q.gamma_sum_n if gamma == "sum" else q.gamma_mean_n
        v = g * L + tail + q.sigma4sq_n * L
        return (1.0 + v) / n
    if which in ("2.2", "Thm2.2"):
        c2 = math.sqrt(q.c2sq_n)
        if v2_form == "product":
            lead = c2 * q.sigma4sq_n
        elif v2_form == "sum":
            lead = c2 + q.sigma4sq_n
        else:
            raise ValueError("v2_form must be 'product' or 'sum'")
        return (1.0 + lead * L + tail) / math.sqrt(n)
    raise ValueError(f"unknown theorem {which!r}")
