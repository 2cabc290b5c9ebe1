import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmwcov.analytic.coverage import (CoverageCurve, CoverageEngine, engine_for, rate_coverage,
                                      rate_curve, sinr_coverage, sinr_curve, snr_coverage,
                                      snr_coverage_avg)
from mmwcov.analytic.laplace import (interference_laplace_bounds,
                                     interference_laplace_single_path, lower_bound_components,
                                     single_path_components, upper_bound_components)
from mmwcov.analytic.load import kappa_interfering, kappa_serving, load_pmfs, n_terms
from mmwcov.analytic.measures import build_measures
from mmwcov.analytic.zf import mutual_exclusion_prob, zf_success_monte_carlo, zf_success_prob
from mmwcov.netgeom import NetworkParams, draw_link_states, interference_config, sample_ppp

DB = np.arange(-10.0, 40.5, 2.0)


# propagation measures ---------------------------------------------------

def test_los_existence_probability(base):
    m = build_measures(base)
    expected = 1 - math.exp(-60e-6 * math.pi * 0.11 * 200 ** 2)
    assert m.B_L(base.lambda_bs) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.5636, abs=1e-4)


def test_los_measure_limits(base):
    m = build_measures(base)
    total = math.pi * 0.11 * 200 ** 2
    assert m.M_L(1e-3) < 1e-12 * total
    assert m.M_L(1e40) == pytest.approx(math.pi * 0.11 * 200 ** 2, rel=1e-9)


def test_measures_match_simulated_loss_process(base):
    """Counts of BSs with loss below t against lambda * M(t)."""
    lam, reps = base.lambda_bs, 150
    rng = np.random.default_rng(21)
    t_db = np.arange(70.0, 131.0, 10.0)   # six decades of linear loss
    counts = {True: np.zeros(t_db.size), False: np.zeros(t_db.size)}
    for _ in range(reps):
        pts = sample_ppp(lam, 4000.0, rng)
        _, los, _, pl = draw_link_states(np.hypot(*pts.T), base, rng)
        for state in (True, False):
            counts[state] += (pl[los == state][:, None] < t_db[None, :]).sum(axis=0)
    m = build_measures(base)
    t = 10 ** (t_db / 10)
    for state, M in ((True, m.M_L), (False, m.M_N)):
        mean = reps * lam * M(t)
        assert np.all(np.abs(counts[state] - mean) <= 3 * np.sqrt(np.maximum(mean, 1.0)))


def test_serving_state_probabilities(base):
    m = build_measures(base)
    lam = base.lambda_bs
    assert m.A_L(lam) + m.A_N(lam) == pytest.approx(1.0, abs=1e-4)
    from mmwcov.numerics import integrate_semi_infinite
    scale = m.typical_loss(lam)
    for f in (m.f_L, m.f_N):
        assert integrate_semi_infinite(lambda t: f(t, lam), 0.0, scale=scale) == \
            pytest.approx(1.0, abs=1e-4)


# ZF penalty ---------------------------------------------------------------

def test_mutual_exclusion_small_cases():
    assert mutual_exclusion_prob(4, 1, 1) == pytest.approx(0.75)
    assert mutual_exclusion_prob(7, 3, 0) == 1.0


@given(st.integers(1, 5), st.integers(0, 3), st.integers(0, 3))
def test_mutual_exclusion_brute_force(n, u1, u2):
    hits = sum(not set(c[u1:]) & set(c[:u1])
               for c in itertools.product(range(n), repeat=u1 + u2))
    assert mutual_exclusion_prob(n, u1, u2) == pytest.approx(hits / n ** (u1 + u2), abs=1e-15)


def test_zf_trivial_case(base):
    assert zf_success_prob(1, 1, base) == 1.0


@pytest.mark.parametrize("nb, nu, eta, U", [(16, 8, 2, 2), (64, 16, 3, 4)])
def test_zf_matches_event_monte_carlo(nb, nu, eta, U):
    p = NetworkParams(n_bs=nb, n_ue=nu)
    est, se = zf_success_monte_carlo(eta, U, p, 10 ** 6, np.random.default_rng(nb))
    assert abs(zf_success_prob(eta, U, p) - est) <= 3 * se


def test_zf_arcsine_pmf_matches_monte_carlo():
    p = NetworkParams(n_bs=16, n_ue=8, equiprobable_angles=False)
    est, se = zf_success_monte_carlo(2, 2, p, 4 * 10 ** 5, np.random.default_rng(3))
    assert abs(zf_success_prob(2, 2, p) - est) <= 3 * se


def test_zf_penalty_vanishes_with_large_arrays():
    z = [zf_success_prob(3, 4, NetworkParams(n_bs=n, n_ue=n)) for n in (16, 64, 256, 1024)]
    assert all(a < b for a, b in zip(z, z[1:]))
    assert z[-1] > 0.98


# load ---------------------------------------------------------------------

def test_serving_load_pmf():
    rho = 500 / 60
    assert kappa_serving(0, rho) == 0.0
    direct = 3.5 ** 3.5 * math.gamma(4.5) / math.gamma(3.5) * (3.5 + rho) ** -4.5
    assert kappa_serving(1, rho) == pytest.approx(direct, rel=1e-12)
    assert kappa_serving(1, rho) == pytest.approx(4.15e-3, rel=5e-3)
    n = np.arange(0, 2000)
    assert kappa_serving(n, rho).sum() == pytest.approx(1.0, abs=1e-12)
    assert kappa_interfering(n, rho).sum() == pytest.approx(1.0, abs=1e-12)


def test_scheduled_user_pmfs():
    m = load_pmfs(500 / 60, 4)
    assert m.u_pmf.sum() == 1.0 or abs(m.u_pmf.sum() - 1.0) < 1e-15
    assert m.serving_u_pmf[0] == 0.0
    assert abs(m.serving_u_pmf.sum() - 1.0) < 1e-15
    assert n_terms(500 / 60) == 100


# coverage -------------------------------------------------------------------

def test_coverage_at_zero_threshold_single_path():
    p = NetworkParams(eta_nlos=1)
    assert snr_coverage(1e-12, 1, p) == pytest.approx(1.0, abs=1e-6)


def test_grid_engine_matches_adaptive_quadrature(base):
    tau = 10 ** (np.array([-5.0, 5.0, 15.0, 30.0]) / 10)
    for U in (1, 4):
        p = base.with_(u_max=U)
        assert np.allclose(snr_coverage(tau, U, p), snr_coverage(tau, U, p, method="quad"),
                           atol=1e-5)


def test_coverage_monotone_in_threshold_and_users(base):
    tau = 10 ** (DB / 10)
    p = base.with_(u_max=4)
    eng = engine_for(p)
    curves = [eng.coverage(tau, U) for U in (1, 2, 4)]
    for c in curves:
        assert np.all(np.diff(c) <= 1e-12)
    assert np.all(curves[0] >= curves[1] - 1e-12) and np.all(curves[1] >= curves[2] - 1e-12)


def test_interference_free_sinr_equals_snr(base):
    tau = 10 ** (DB / 10)
    p = base.with_(u_max=2)
    assert np.allclose(sinr_coverage(tau, p, laplace="none"), snr_coverage_avg(tau, p),
                       atol=1e-12)


def test_interference_lowers_coverage():
    p = interference_config(eta_nlos=1)
    tau = 10 ** (DB / 10)
    assert np.all(sinr_coverage(tau, p) <= snr_coverage_avg(tau, p) + 1e-12)


def test_rate_coverage_at_zero(base):
    p = base.with_(eta_nlos=1)
    assert rate_coverage(0.0, p) == pytest.approx(1.0, abs=1e-6)


def test_zero_threshold_mass_is_zf_weighted(base):
    # with several paths the user's own beams can collide, even alone
    m = build_measures(base)
    lam = base.lambda_bs
    for U in (1, 2):
        expected = (m.A_L(lam) * zf_success_prob(1, U, base)
                    + m.A_N(lam) * zf_success_prob(3, U, base))
        assert snr_coverage(0.0, U, base.with_(u_max=2)) == pytest.approx(expected, abs=1e-5)


def test_rate_threshold_scales_with_efficiency(base):
    tau = np.logspace(6, 10, 9)
    half = base.with_(omega=0.5)
    assert np.allclose(rate_coverage(tau, half), rate_coverage(2 * tau, base), atol=1e-12)


@pytest.mark.parametrize("U", [1, 2, 4])
def test_rate_series_truncation_stable(base, U):
    p = base.with_(u_max=U)
    tau = np.logspace(6, 10.5, 10)
    nt = n_terms(p.load_ratio)
    a = rate_coverage(tau, p, terms=nt)
    b = rate_coverage(tau, p, terms=2 * nt)
    assert np.max(np.abs(a - b)) < 1e-3


def test_curves_are_valid(base):
    c = sinr_curve(base.with_(u_max=2), DB)
    assert isinstance(c, CoverageCurve) and c.is_monotone()
    r = rate_curve(base.with_(u_max=2), np.logspace(6, 10.5, 40))
    assert r.is_monotone() and r.meta["threshold_unit"] == "bps"


def test_coverage_rejects_bad_thresholds(base):
    with pytest.raises(ValueError):
        engine_for(base).coverage(-1.0, 1)
    with pytest.raises(ValueError):
        engine_for(base).coverage(1.0, 1, laplace="exact")


# interference functionals -----------------------------------------------------

@pytest.fixture(scope="module")
def itf_single():
    return interference_config(eta_nlos=1, u_max=2)


@pytest.fixture(scope="module")
def itf_multi():
    return interference_config(eta_los=2, eta_nlos=3, u_max=4, n_ue=64)


def test_laplace_at_zero(itf_single, itf_multi):
    assert interference_laplace_single_path(0.0, 1e10, itf_single) == 1.0
    assert interference_laplace_bounds(0.0, 1e10, itf_multi) == (1.0, 1.0)


def test_single_path_laplace_monotone(itf_single):
    p = itf_single
    s_vals = [1e9, 1e10, 1e11, 1e12]
    l = 10 ** 10.5
    vals = [interference_laplace_single_path(s, l, p) for s in s_vals]
    assert all(0 < v <= 1 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    ls = [1e9, 1e10, 1e11]
    vals = [interference_laplace_single_path(1e11, x, p) for x in ls]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_bounds_ordered(itf_multi):
    for s, l in itertools.product([1e9, 1e11, 1e13], [1e9, 1e11, 1e13]):
        lo, hi = interference_laplace_bounds(s, l, itf_multi)
        assert 0 < lo <= hi <= 1


def test_bounds_reduce_to_single_path(itf_single):
    for s, l in itertools.product([1e10, 1e12], [1e10, 1e12]):
        exact = interference_laplace_single_path(s, l, itf_single)
        lo, hi = interference_laplace_bounds(s, l, itf_single)
        assert lo <= exact * (1 + 1e-5) and exact <= hi * (1 + 1e-5)
        assert lo == pytest.approx(exact, rel=1e-5)


def test_bound_coverage_ordered(itf_multi):
    tau = 10 ** (DB / 10)
    lo, hi = sinr_coverage(tau, itf_multi)
    assert np.all(lo <= hi + 1e-12)
    assert np.all(hi <= snr_coverage_avg(tau, itf_multi) + 1e-12)


def test_engine_exponent_matches_direct_quadrature(itf_multi):
    eng = CoverageEngine(itf_multi)
    from mmwcov.analytic.laplace import _exponent_direct
    for comps in (upper_bound_components(itf_multi, itf_multi.lambda_bs),
                  lower_bound_components(itf_multi, itf_multi.lambda_bs)):
        kappa = np.array([1e-3, 1.0, 1e3]) / 1e3
        grid = eng.exponent(kappa, comps)
        for j in (len(eng.l) // 4, len(eng.l) // 2):
            for i, k in enumerate(kappa):
                direct = _exponent_direct(eng.meas, comps, eng.l[j], k, None)
                lam = itf_multi.lambda_bs
                assert math.exp(-lam * grid[i, j]) == pytest.approx(math.exp(-lam * direct),
                                                                    abs=1e-7)
                if lam * direct > 1e-4:
                    assert grid[i, j] == pytest.approx(direct, rel=1e-4)


def test_component_weights_are_probabilities(itf_single, itf_multi):
    for comps in (single_path_components(itf_single, itf_single.lambda_bs),
                  upper_bound_components(itf_multi, itf_multi.lambda_bs)):
        assert all(c.weight >= 0 for c in comps)
        assert sum(c.weight for c in comps) <= 1 + 1e-12
