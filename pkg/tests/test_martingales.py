import itertools
import math

import numpy as np
import pytest

from randsum import martingales as mg
from randsum.sphere import sample_sphere


def _arch_abs_dev_direct(ell, gamma=3.0):
    """E|eta^2_{ell-1} - 1| straight from the recursion, over the 3-point laws of eps."""
    k = ell - 1
    if k == 0:
        return 0.0
    u = [(i + 1.0) ** -gamma for i in range(k + 1)]
    alpha = sum(u[1:k + 1])
    total = 0.0
    for eps_zero in itertools.product([True, False], repeat=k):
        prob = 1.0
        s = 0.0
        for i, z in enumerate(eps_zero, start=1):
            q = 1.0 / (i + 1)
            prob *= q if z else 1 - q
            if not z:
                s += u[k + 1 - i] * (i + 1.0) / i
        total += prob * abs(s / alpha - 1.0)
    return total


def test_spec_validation():
    with pytest.raises(ValueError):
        mg.arch(8, gamma=2.0)
    with pytest.raises(ValueError):
        mg.two_point(8, 0.5)
    with pytest.raises(ValueError):
        mg.GeneratorSpec("iid", 8, "cauchy")
    with pytest.raises(ValueError):
        mg.GeneratorSpec("garch", 8)
    s = mg.arch(16)
    assert mg.GeneratorSpec.from_dict(s.to_dict(), 16) == s


def test_arch_first_step_law(rng):
    b = mg.gen_paths(mg.arch(4), 200_000, rng)
    d1 = b.d[:, 0]
    r2 = math.sqrt(2)
    assert np.all(np.isclose(np.abs(d1), 0) | np.isclose(np.abs(d1), r2))
    se = math.sqrt(0.25 / d1.size)
    assert abs(np.mean(d1 == 0) - 0.5) < 5 * se
    assert abs(np.mean(np.isclose(d1, r2)) - 0.25) < 5 * se
    assert np.all(b.cond_var[:, 0] == 1.0)
    assert np.allclose(b.cond_m4[:, 0], 2.0)


def test_rademacher_path(rng):
    p = mg.gen_path(mg.rademacher(50), rng)
    assert set(np.unique(p.d)) <= {-1.0, 1.0}
    assert np.all(p.cond_var == 1) and np.all(p.cond_m3 == 0) and np.all(p.cond_m4 == 1)


@pytest.mark.parametrize("spec", [mg.rademacher(40), mg.gaussian(40), mg.two_point(40, 2.0),
                                  mg.arch(40)])
def test_unit_variance_and_moment_invariants(rng, spec):
    b = mg.gen_paths(spec, 100_000, rng)
    ed2 = (b.d ** 2).mean(0)
    se = (b.d ** 2).std(0) / math.sqrt(len(b))
    assert np.all(np.abs(ed2 - 1) < 5 * se + 1e-12)
    assert np.all(b.cond_var >= 0)
    assert np.all(b.cond_m4 >= b.cond_var ** 2 - 1e-12)
    assert np.all(np.abs(b.cond_m3) <= np.sqrt(b.cond_var * b.cond_m4) + 1e-12)


def test_arch_exact_deviation_values():
    assert mg.arch_exact_abs_dev(1) == 0.0
    assert mg.arch_exact_abs_dev(2) == pytest.approx(1.0, abs=1e-14)
    for ell, val in [(3, 0.5143), (5, 0.2890), (10, 0.1509), (15, 0.1047)]:
        assert mg.arch_exact_abs_dev(ell) == pytest.approx(val, abs=5e-4)


@pytest.mark.parametrize("ell", [2, 3, 4, 6, 9])
def test_arch_exact_deviation_matches_direct_recursion(ell):
    assert mg.arch_exact_abs_dev(ell) == pytest.approx(_arch_abs_dev_direct(ell), rel=1e-12)


def test_abs_dev_bound_dominates_exact():
    tabs = mg.arch_tables(20)
    assert tabs.abs_dev_bound(2) == pytest.approx(1.0, abs=1e-14)
    for ell in range(2, 16):
        assert mg.arch_exact_abs_dev(ell) <= tabs.abs_dev_bound(ell) + 1e-12


def test_arch_eta_recursion_consistent_with_path(rng):
    """Recover eps^2 along each path, check it sits on an atom, rebuild eta^2."""
    n = 60
    spec = mg.arch(n)
    tabs = mg.arch_tables(n)
    b = mg.gen_paths(spec, 300, rng)
    for r in range(len(b)):
        eta2 = b.aux_eta2[r]
        assert eta2[0] == 1.0
        # recover eps_k^2 from d_k when eta_{k-1} > 0, else from eta_k itself
        eps2 = np.zeros(n)
        for k in range(1, n + 1):
            if eta2[k - 1] > 0:
                eps2[k - 1] = b.d[r, k - 1] ** 2 / eta2[k - 1]
            elif k < n:
                i = np.arange(1, k)
                past = np.sum(tabs.u[k + 1 - i] * eps2[i - 1])
                eps2[k - 1] = (tabs.alpha[k] * eta2[k] - past) / tabs.u[1]
            else:
                continue
            on_atom = min(abs(eps2[k - 1]), abs(eps2[k - 1] - tabs.a2[k]))
            assert on_atom < 1e-9
            eps2[k - 1] = 0.0 if abs(eps2[k - 1]) < 1e-9 else tabs.a2[k]
        for k in range(1, n):
            i = np.arange(1, k + 1)
            expect = np.sum(tabs.u[k + 1 - i] * eps2[i - 1]) / tabs.alpha[k]
            assert eta2[k] == pytest.approx(expect, rel=1e-12, abs=1e-14)


def test_arch_zero_events_independent_with_right_rates(rng):
    """d_k = 0 identifies eps_k = 0 only where eta_{k-1} > 0."""
    n = 200
    b = mg.gen_paths(mg.arch(n), 200_000, rng)
    zero = b.d == 0
    for k in (1, 2, 5, 50, 199):
        seen = b.aux_eta2[:, k - 1] > 0
        R = int(seen.sum())
        p = 1 / (k + 1)
        assert abs(zero[seen, k - 1].mean() - p) < 5 * math.sqrt(p * (1 - p) / R)
    # given eps_1 != 0, eta_1 and eta_2 are positive, so d_2, d_3 reveal eps_2, eps_3
    live = ~zero[:, 0]
    R = int(live.sum())
    both = (zero[live, 1] & zero[live, 2]).mean()
    p = 1 / 12
    assert abs(both - p) < 5 * math.sqrt(p * (1 - p) / R)


def test_arch_boundedness_and_eta_mean(rng):
    b = mg.gen_paths(mg.arch(128), 100_000, rng)
    assert np.abs(b.d).max() <= 2.0
    assert b.aux_eta2.max() <= 2.0
    m = b.aux_eta2.mean(0)
    se = b.aux_eta2.std(0) / math.sqrt(len(b))
    assert np.all(np.abs(m - 1) <= 5 * se + 1e-12)


@pytest.mark.parametrize("spec", [mg.rademacher(37), mg.arch(37), mg.gaussian(37)])
def test_weighted_sums_match_paths(spec):
    th = sample_sphere(37, np.random.default_rng(0)).coords
    s = mg.weighted_sums(spec, th, 500, np.random.default_rng(11))
    d = mg.gen_paths(spec, 500, np.random.default_rng(11)).d
    np.testing.assert_allclose(s, d @ th, rtol=1e-12, atol=1e-12)


def test_weighted_sums_pool_topup_is_seamless():
    """Small blocks force repeated pool refills; the law must be unchanged."""
    spec = mg.arch(64)
    th = np.full(64, 1 / 8)
    s = mg.weighted_sums(spec, th, 40_000, np.random.default_rng(3), block=7)
    assert abs(s.mean()) < 5 * s.std() / 200
    assert abs((s ** 2).mean() - 1) < 0.03


def test_reproducible(rng):
    a = mg.gen_path(mg.arch(30), np.random.default_rng(9))
    b = mg.gen_path(mg.arch(30), np.random.default_rng(9))
    assert a.d.tobytes() == b.d.tobytes()


def test_cond_var_deviation(rng):
    spec = mg.arch(20)
    assert mg.arch_cond_var_deviation(spec, 1, 10, rng).value == 0.0
    e2 = mg.arch_cond_var_deviation(spec, 2, 100_000, rng)
    assert abs(e2.value - 1.0) <= 5 * e2.stderr + 1e-12
    e10 = mg.arch_cond_var_deviation(spec, 10, 200_000, rng)
    assert abs(e10.value - mg.arch_exact_abs_dev(10)) < 5 * e10.stderr
    assert e10.within_bound
    with pytest.raises(ValueError):
        mg.arch_cond_var_deviation(mg.rademacher(5), 2, 10, rng)
    with pytest.raises(ValueError):
        mg.arch_cond_var_deviation(spec, 21, 10, rng)


def test_cond_var_deviation_decays_like_inverse_ell(rng):
    from randsum.ratefit import RateSeries, fit_rate
    ells = [8, 16, 32, 64, 128]
    spec = mg.arch(128)
    est = [mg.arch_cond_var_deviation(spec, ell, 40_000, rng) for ell in ells]
    fit = fit_rate(RateSeries.from_arrays(ells, [e.value for e in est],
                                          [e.stderr for e in est]), 0.0)
    assert 0.8 < fit.p < 1.2


@pytest.mark.parametrize("spec", [mg.arch(256), mg.gaussian(64), mg.two_point(64, 3.0)])
def test_martingale_property(rng, spec):
    rep = mg.check_martingale_property(spec, 100_000, rng)
    assert rep.max_exact_cond_mean == 0.0
    assert rep.ok


def test_one_step_cf_at_zero_is_one(rng):
    p = mg.gen_path(mg.arch(10), rng)
    assert np.all(p.one_step_cf(np.zeros(10)) == 1.0)
