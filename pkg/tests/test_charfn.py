import math

import numpy as np
import pytest
from scipy import integrate

from randsum import charfn as C
from randsum import martingales as mg
from randsum.sphere import sample_sphere


def test_rademacher_product_is_cosine_product(rng):
    th = sample_sphere(30, rng).coords
    p = mg.gen_path(mg.rademacher(30), rng)
    t = np.linspace(0, 5, 41)
    c = C.conditional_cf_product(p, th, t)
    np.testing.assert_allclose(c.values.real, np.prod(np.cos(np.outer(t, th)), axis=1),
                               rtol=1e-13, atol=1e-15)
    assert c.values[0] == 1.0
    assert np.all(np.abs(c.values) <= 1.0)
    assert np.all(np.abs(c.values.imag) <= 1e-12)


def test_arch_two_step_product_by_enumeration(rng):
    """Enumerate the three-point laws of eps_1 and eps_2 along the realized eta_1."""
    spec = mg.arch(2)
    tabs = mg.arch_tables(2)
    th = np.array([0.6, 0.8])
    t = np.array([0.0, 0.7, 1.9, 4.0])
    for _ in range(10):
        p = mg.gen_path(spec, rng)
        eta = [1.0, math.sqrt(p.aux_eta2[1])]
        expect = np.ones_like(t)
        for j in (1, 2):
            a = tabs.a[j]
            atoms = [(0.0, tabs.q0[j]), (a, tabs.p[j]), (-a, tabs.p[j])]
            fac = sum(w * np.exp(1j * t * th[j - 1] * eta[j - 1] * e) for e, w in atoms)
            expect = expect * fac
        got = C.conditional_cf_product(p, th, t).values
        np.testing.assert_allclose(got, expect, atol=1e-14)


def test_t_functionals(rng):
    th = sample_sphere(25, rng).coords
    tf = C.t_functionals(mg.gen_path(mg.rademacher(25), rng), th)
    assert tf.t2sq == pytest.approx(1.0, abs=1e-12)
    assert tf.t3cube == 0.0
    assert tf.t4quad == pytest.approx(np.sum(th ** 4))
    p = mg.gen_path(mg.arch(25), rng)
    tf = C.t_functionals(p, th)
    assert tf.t3cube == 0.0
    assert tf.t4quad <= np.max(th ** 2) * np.max(p.cond_m4) * 1.0 + 1e-12
    with pytest.raises(ValueError):
        C.t_functionals(p, th[:-1])


def test_mean_t2sq_is_one(rng):
    n = 32
    spec = mg.arch(n)
    vals = []
    b = mg.gen_paths(spec, 20_000, rng)
    for r in range(len(b)):
        th = sample_sphere(n, rng).coords
        vals.append(C.t_functionals(b[r], th).t2sq)
    vals = np.array(vals)
    assert abs(vals.mean() - 1) < 5 * vals.std() / math.sqrt(vals.size)


def test_truncation_flags(rng):
    th = sample_sphere(40, rng).coords
    p = mg.gen_path(mg.rademacher(40), rng)
    tr = C.truncation_flags(p, th, 0.0)
    assert tr.flags.all()
    tr = C.truncation_flags(p, th, 0.2)
    assert tr.flags.all() and tr.truncated == tr.original
    for _ in range(50):
        q = mg.gen_path(mg.arch(40), rng)
        for t in (0.5, 2.0, 5.0, 12.0):
            tr = C.truncation_flags(q, th, t)
            assert np.all(np.diff(tr.flags.astype(int)) <= 0)
            assert tr.truncated.t4quad <= tr.original.t4quad + 1e-15
            if tr.flags.all():
                assert tr.truncated == tr.original


def test_miss_fraction_vectorized_matches_per_path(rng):
    n = 48
    b = mg.gen_paths(mg.arch(n), 300, rng)
    th = sample_sphere(n, rng).coords
    for t in (1.0, 3.0, 6.0):
        slow = np.mean([not C.truncation_flags(b[r], th, t).flags[-1] for r in range(len(b))])
        assert C.a_n_miss_fraction(b, th, t) == slow


def test_miss_fraction_bounded_by_bn(rng):
    n = 64
    b = mg.gen_paths(mg.arch(n), 5000, rng)
    for _ in range(4):
        th = sample_sphere(n, rng).coords
        for t in np.linspace(0.25, 3.0, 12):
            miss = C.a_n_miss_fraction(b, th, t)
            assert miss <= C.DEFAULT_THRESHOLD * C.bn_bound(b, th, t)[0] + 3 / math.sqrt(len(b))


def test_cf_gap_closed_forms(rng):
    g = C.cf_gap(mg.rademacher(1), [1.0], [0.0, 1.0], 10_000, rng)
    assert g.gap[0] == 0.0
    assert g.gap[1] == pytest.approx(abs(math.cos(1) - math.exp(-0.5)), abs=1e-15)
    assert g.gap[1] == pytest.approx(0.0662, abs=1e-4)
    b = mg.gen_paths(mg.rademacher(1), 10, rng)
    assert C.bn_bound(b, [1.0], 1.0)[0] == 1.0
    th = sample_sphere(40, rng).coords
    assert np.all(C.cf_gap(mg.gaussian(40), th, np.linspace(0, 5, 11), 10_000, rng).gap < 1e-14)
    with pytest.raises(ValueError):
        C.cf_gap(mg.gaussian(40), th, [1.0], 100, rng)


def test_arch_signfree_cf_matches_direct_mc(rng):
    n = 32
    spec = mg.arch(n)
    th = sample_sphere(n, rng).coords
    t = np.array([0.5, 1.0, 2.0, 3.0])
    cf, se, exact = C.cf_of_sum(spec, th, t, 200_000, rng)
    assert not exact
    s = mg.weighted_sums(spec, th, 400_000, rng)
    direct = np.cos(np.outer(t, s)).mean(1)
    direct_se = np.cos(np.outer(t, s)).std(1) / math.sqrt(s.size)
    assert np.all(np.abs(cf - direct) < 5 * np.hypot(se, direct_se))
    # integrating out the signs must reduce the variance
    assert np.all(se * math.sqrt(200_000) <= direct_se * math.sqrt(400_000) + 1e-12)


def test_ratio_report_arch(rng):
    n = 64
    th = sample_sphere(n, rng).coords
    rep = C.cf_ratio_report(mg.arch(n), th, np.linspace(0.1, 3, 15), 10_000, 1000, rng)
    assert rep.ok
    assert np.all(rep.adjusted_ratio <= rep.ratio + 1e-15)
    assert np.all((rep.flags_false_fraction >= 0) & (rep.flags_false_fraction <= 1))


def test_taylor_lemma_examples(rng):
    th = sample_sphere(12, rng).coords
    g = mg.gaussian(12)
    rep = C.taylor_lemma_check(C.iid_moment_table(g), th, np.linspace(0.05, 0.5, 10), spec=g)
    assert np.all(rep.lhs < 1e-15)
    r = mg.rademacher(1)
    rep = C.taylor_lemma_check(C.iid_moment_table(r), [1.0], [0.5, 1.0, 1.5], spec=r)
    assert list(rep.excluded) == [1.5]
    assert rep.ratio[-1] == pytest.approx(0.0662 / math.exp(-0.5), abs=2e-4)
    assert rep.ratio[-1] == pytest.approx(0.109, abs=1e-3)


def test_taylor_two_point(rng):
    s = mg.two_point(8, 2.0)
    for _ in range(5):
        th = sample_sphere(8, rng).coords
        rep = C.taylor_lemma_check(C.iid_moment_table(s), th, np.linspace(0.01, 3, 300), spec=s)
        assert rep.t_used.size > 0
        assert rep.max_ratio <= 10


def test_taylor_scale_covariance(rng):
    th = sample_sphere(6, rng).coords
    mom = np.tile([1.0, 0.3, 2.0], (6, 1))
    cf = lambda s: np.cos(s)  # noqa: E731  (only the R-functionals are compared)
    a = C.taylor_lemma_check(mom, th, [0.1], cf)
    mom2 = mom.copy()
    mom2[:, 2] *= 2
    b = C.taylor_lemma_check(mom2, th, [0.1], cf)
    assert b.r.t4quad == 2 * a.r.t4quad


def test_log_trapezoid_against_quad():
    g = lambda t: t * t * np.exp(-t)  # noqa: E731
    t = np.geomspace(8e-4, 8.0, 64)
    ref = integrate.quad(lambda s: g(s) / s, 0, 8.0)[0]
    assert C._log_trapezoid(t, g(t)) == pytest.approx(ref, rel=1e-2)


def test_esseen_validation_and_null(rng):
    with pytest.raises(ValueError):
        C.esseen_integral(mg.gaussian(8), 8, 1.0, 32, 2, 10_000, rng)
    with pytest.raises(ValueError):
        C.esseen_integral(mg.gaussian(8), 8, 3.0, 15, 2, 10_000, rng)
    e = C.esseen_integral(mg.gaussian(64), 64, C.default_T0(64), 32, 4, 10_000, rng)
    assert e.value < 1e-12


def test_esseen_rademacher_scale(rng):
    n = 64
    e = C.esseen_integral(mg.rademacher(n), n, C.default_T0(n), 64, 16, 10_000, rng)
    assert 0 < e.value <= math.log(n) ** 2 / n


def test_esseen_arch_two_point_scaling(rng):
    vals = {}
    for n in (64, 256):
        vals[n] = C.esseen_integral(mg.arch(n), n, C.default_T0(n), 48, 8, 10_000, rng).value
    predicted = (256 / 64) ** -1 * (math.log(256) / math.log(64)) ** 2
    assert 0.5 * predicted <= vals[256] / vals[64] <= 2 * predicted
