"""Built-in experiment recipes.

A recipe takes the config and a ``map_fn`` (the harness's ordered parallel
map) and returns tables, a JSON summary and a list of named pass/fail checks.
Every random quantity is drawn from ``derive_stream(seed, [recipe, n-index, ...])``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

from .. import charfn, distance, gaussmix, quantities, sphere
from ..ratefit import RateSeries, fit_rate
from .config import ExperimentConfig
from .streams import cross_correlation, derive_stream

RECIPE_CODES = {name: i for i, name in enumerate(
    ("sphere-selftest", "quantities", "randomized-rate", "classical-rate",
     "cf-diagnostics", "gaussmix-check"))}


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.header):
            raise ValueError("row width does not match header")
        self.rows.append(list(row))


@dataclass
class RecipeOutput:
    tables: dict[str, Table]
    summary: dict
    checks: list[tuple[str, bool]]
    rate_table: str | None = None  # name of the (n, value, stderr) table, if any


def _stream(cfg: ExperimentConfig, *path: int) -> np.random.Generator:
    return derive_stream(cfg.master_seed, (RECIPE_CODES[cfg.experiment],) + path)


def _fit_summary(cfg, table: Table, label: str) -> tuple[dict, list]:
    if len(table.rows) < 3:
        return {"fit": None, "notice": "fewer than 3 n values; no rate fit"}, []
    n = [r[0] for r in table.rows]
    v = [r[1] for r in table.rows]
    se = [r[2] for r in table.rows]
    if min(v) <= 0:
        return {"fit": None, "notice": "nonpositive value; no rate fit"}, []
    fit = fit_rate(RateSeries.from_arrays(n, v, se, label), cfg.fit_q())
    return {"fit": fit.to_dict()}, []


def sphere_selftest(cfg: ExperimentConfig, map_fn) -> RecipeOutput:
    draws = max(1000, cfg.reps)
    t = Table(["n", "power", "empirical", "exact", "z", "ok"])
    checks = []
    for i, n in enumerate(cfg.n_list):
        rep = sphere.check_sphere_moments(n, draws, _stream(cfg, i, 0))
        for c in rep.checks:
            t.add(n, c.power, c.empirical, c.exact, c.z, int(c.ok))
        checks.append((f"sphere moments n={n}", rep.ok))
        if n >= 2:
            th = sphere.sample_sphere_batch(n, min(draws, 100_000), _stream(cfg, i, 1))
            p = ks_2samp(th[:, 0], th[:, -1]).pvalue
            checks.append((f"coordinate symmetry n={n} (KS p={p:.3g})", p > 1e-3))
    rho = cross_correlation(derive_stream(cfg.master_seed, [0]),
                            derive_stream(cfg.master_seed, [1]), 1_000_000)
    checks.append((f"stream cross-correlation rho={rho:.2e}", abs(rho) < 5e-3))
    return RecipeOutput({"sphere": t}, {"draws": draws, "stream_rho": rho}, checks)


def quantities_recipe(cfg: ExperimentConfig, map_fn) -> RecipeOutput:
    cols = ["n", "reps", "alpha_n", "alpha_n_stderr", "beta_n", "beta_n_stderr",
            "gamma_sum_n", "gamma_sum_n_stderr", "gamma_mean_n", "gamma_mean_n_stderr",
            "sigma4sq_n", "sigma4sq_n_stderr", "c2sq_n", "c2sq_n_stderr",
            "bound_thm21", "bound_thm22", "c2sq_warning"]
    t = Table(cols)
    checks, records = [], []
    for i, n in enumerate(cfg.n_list):
        q = quantities.estimate_quantities(cfg.spec(n), cfg.reps, _stream(cfg, i), map_fn)
        b1 = quantities.theorem_bound(q, n, "2.1") if n >= 2 else math.nan
        b2 = quantities.theorem_bound(q, n, "2.2") if n >= 2 else math.nan
        d = q.to_dict()
        t.add(*[d[c] for c in cols[:14]], b1, b2, int(q.c2sq_warning))
        records.append({**d, "seed": cfg.master_seed})
        checks.append((f"sigma4sq <= c2sq n={n}", q.sigma4sq_n <= q.c2sq_n))
        if q.alpha_bound is not None:
            checks.append((f"alpha_n <= {q.alpha_bound:g} n={n}", q.alpha_n <= q.alpha_bound))
    return RecipeOutput({"quantities": t}, {"records": records}, checks)


def _rate_recipe(cfg: ExperimentConfig, map_fn, classical: bool) -> RecipeOutput:
    t = Table(["n", "kappa_mean", "stderr_outer", "generator", "gamma", "M", "m", "delta",
               "dkw_radius", "estimator"])
    checks = []
    gamma = cfg.generator.get("arch_gamma", math.nan) if cfg.generator["kind"] == "arch" \
        else math.nan
    for i, n in enumerate(cfg.n_list):
        spec = cfg.spec(n)
        s = _stream(cfg, i)
        if classical:
            est = distance.kappa_classical(spec, n, cfg.m, cfg.delta, s)
        elif cfg.estimator == "inversion":
            est = distance.expected_kappa_inversion(spec, n, cfg.M, s, map_fn)
        else:
            est = distance.expected_kappa_randomized(spec, n, cfg.M, cfg.m, cfg.delta, s, map_fn)
            if est.dkw_radius > cfg.expected_signal(n):
                raise distance.SizingError(
                    f"DKW radius {est.dkw_radius:.2e} exceeds expected signal at n={n}")
        t.add(n, est.value, est.stderr_outer, spec.label, gamma, est.outer_samples,
              est.inner_samples, cfg.delta, est.dkw_radius, cfg.estimator)
        checks.append((f"0 <= kappa <= 1 n={n}", 0.0 <= est.value <= 1.0))
    summary, extra = _fit_summary(cfg, t, cfg.experiment_id)
    return RecipeOutput({"rate": t}, summary, checks + extra, rate_table="rate")


def randomized_rate(cfg, map_fn):
    return _rate_recipe(cfg, map_fn, classical=False)


def classical_rate(cfg, map_fn):
    return _rate_recipe(cfg, map_fn, classical=True)


def cf_diagnostics(cfg: ExperimentConfig, map_fn) -> RecipeOutput:
    inner = max(cfg.m, 10_000) if cfg.generator["kind"] == "arch" else 10_000
    inner = min(inner, 20_000)
    curves = Table(["n", "theta_index", "t", "cf_gap", "cf_gap_stderr", "bn_bound", "ratio",
                    "adjusted_ratio", "flags_false_fraction"])
    ess = Table(["n", "T0", "esseen_integral", "stderr", "scale_logsq_over_n"])
    taylor = Table(["n", "theta_index", "t", "lhs", "ratio"])
    checks = []
    t_grid = np.linspace(0.1, 3.0, 30)
    n_theta = min(cfg.M, 16)
    for i, n in enumerate(cfg.n_list):
        spec = cfg.spec(n)
        e = charfn.esseen_integral(spec, n, cfg.T0(n), cfg.t_points, n_theta, inner,
                                   _stream(cfg, i, 0), map_fn)
        ess.add(n, e.T0, e.value, e.stderr, math.log(n) ** 2 / n)
        worst = 0.0
        for k in range(n_theta):
            s = _stream(cfg, i, 1, k)
            th = sphere.sample_sphere(n, s).coords
            rep = charfn.cf_ratio_report(spec, th, t_grid, inner, min(cfg.reps, 2000), s)
            worst = max(worst, rep.max_ratio)
            for j, tt in enumerate(t_grid):
                curves.add(n, k, tt, rep.gap[j], rep.gap_stderr[j], rep.bn[j], rep.ratio[j],
                           rep.adjusted_ratio[j], rep.flags_false_fraction[j])
            if spec.kind == "iid":
                tr = charfn.taylor_lemma_check(charfn.iid_moment_table(spec), th, t_grid,
                                               spec=spec)
                for tt, lhs, r in zip(tr.t_used, tr.lhs, tr.ratio):
                    taylor.add(n, k, tt, lhs, r)
                checks.append((f"Taylor ratio <= {tr.threshold:g} n={n} theta={k}", tr.ok))
        checks.append((f"B_n ratio <= {charfn.DEFAULT_THRESHOLD:g} n={n} (max {worst:.3g})",
                       worst <= charfn.DEFAULT_THRESHOLD))
    tables = {"cf_curves": curves, "esseen": ess}
    if taylor.rows:
        tables["taylor"] = taylor
    return RecipeOutput(tables, {"t_grid": t_grid.tolist(), "theta_draws": n_theta}, checks)


def default_profiles(n: int) -> list[tuple[str, gaussmix.VarianceProfile]]:
    k = np.arange(n)
    out = [("unit", gaussmix.VarianceProfile(np.ones(n)))]
    if n >= 2:
        out += [
            ("cosine", gaussmix.VarianceProfile.normalized(1.0 + 0.5 * np.cos(2 * np.pi * k / n))),
            ("linear", gaussmix.VarianceProfile.normalized(1.0 + k / n)),
            ("half-zero", gaussmix.VarianceProfile.normalized((k % 2).astype(float))),
            ("spike", gaussmix.VarianceProfile.normalized(np.where(k == 0, n / 2.0, 1.0))),
            ("power", gaussmix.VarianceProfile.normalized((k + 1.0) ** -0.5)),
        ]
    return out


def gaussmix_check(cfg: ExperimentConfig, map_fn) -> RecipeOutput:
    t = Table(["n", "profile", "sum_sq_dev", "remark_bound", "mc_mean", "mc_stderr",
               "concentration_bound", "l1_estimate", "l2_estimate", "l2_stderr", "mean_v2", "damping_ok"])
    checks = []
    scales = np.linspace(0.5, 3.0, 50)
    A, B = np.meshgrid(scales, scales, indexing="ij")
    viol = 0
    for a, b in zip(A.ravel(), B.ravel()):
        exact, bound = gaussmix.gauss_two_scale_distance(float(a), float(b))
        if bound is not None and exact > bound + 1e-15:
            viol += 1
    checks.append((f"two-scale bound on 50x50 grid ({viol} violations)", viol == 0))
    M = max(cfg.reps, 10_000)
    records = []
    for i, n in enumerate(cfg.n_list):
        if n < 2:
            continue
        for j, (name, prof) in enumerate(default_profiles(n)):
            s = _stream(cfg, i, j)
            c = gaussmix.concentration_check(prof, M, s)
            mx = gaussmix.kappa_mixture_vs_standard(prof, M, s)
            damp = gaussmix.damping_check(prof, np.linspace(0.1, 4.0, 40), M, s)
            t.add(n, name, prof.sum_sq_dev, mx.remark_bound, mx.estimate.value,
                  mx.estimate.stderr_outer, c.bound, c.l1, c.l2, c.l2_stderr, c.mean_v2, int(damp.ok))
            records.append({"n": n, "profile": name, "sum_sq_dev": prof.sum_sq_dev,
                            "remark_bound": mx.remark_bound, "mc_mean": mx.estimate.value,
                            "mc_stderr": mx.estimate.stderr_outer, "concentration_bound": c.bound,
                            "l2_estimate": c.l2})
            checks.append((f"V^2 concentration n={n} {name}", c.ok))
            checks.append((f"remark bound n={n} {name}", mx.ok))
            checks.append((f"mixture chain n={n} {name}", mx.chain_ok))
            checks.append((f"damping integrand n={n} {name}", damp.ok))
            checks.append((f"E V^2 = 1 n={n} {name}",
                           abs(c.mean_v2 - 1) <= 5 * c.mean_v2_stderr + 1e-12))
    return RecipeOutput({"gaussmix": t}, {"profiles": records}, checks)


RECIPES = {
    "sphere-selftest": sphere_selftest,
    "quantities": quantities_recipe,
    "randomized-rate": randomized_rate,
    "classical-rate": classical_rate,
    "cf-diagnostics": cf_diagnostics,
    "gaussmix-check": gaussmix_check,
}
