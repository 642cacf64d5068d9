import numpy as np
import pytest
from conftest import make_dataset
from hypothesis import given, settings, strategies as st
from oracles import saturated_oracle, sfe_oracle

from carinf.core import BalanceProfile, Dataset, TargetProportions, VarianceKind
from carinf.dgp import ModelSpec, PopulationMoments, population_moments
from carinf.estimators import fit_saturated, fit_sfe
from carinf.randomizers import assign
from carinf.rng import RngSeed
from carinf.variance import (CovarianceEstimate, estimate, estimate_all, hc_sfe_limit_scalar,
                             limit_hc_sfe, v_a_hat, v_a_population, v_analytic_sat,
                             v_analytic_sfe, v_h_hat, v_hc_saturated, v_hc_sfe, v_ho_saturated,
                             v_ho_sfe, v_new_saturated, v_new_sfe, varsigma_a2, varsigma_h2,
                             varsigma_y2, v_y_population)


@pytest.mark.parametrize("seed", range(8))
def test_sample_estimators_match_dense_sandwiches(seed):
    d = make_dataset(seed, K=2, S=3, n=150)
    sat, sfe = fit_saturated(d), fit_sfe(d)
    _, ho, hc, beta, p = saturated_oracle(d)
    assert np.allclose(v_ho_saturated(sat).matrix, ho, rtol=1e-9)
    assert np.allclose(v_hc_saturated(sat).matrix, hc, rtol=1e-9)
    _, ho_f, hc_f, _ = sfe_oracle(d)
    assert np.allclose(v_ho_sfe(sfe).matrix, ho_f, rtol=1e-9)
    assert np.allclose(v_hc_sfe(sfe).matrix, hc_f, rtol=1e-9)
    theta = beta @ p
    vh = sum(p[s] * np.outer(beta[:, s] - theta, beta[:, s] - theta) for s in range(3))
    assert np.allclose(v_h_hat(sat), vh, rtol=1e-9, atol=1e-14)


@given(st.integers(0, 5000), st.sampled_from(["SRS", "SBR"]))
@settings(max_examples=30, deadline=None)
def test_decomposition_identities(seed, scheme):
    d = make_dataset(seed, K=2, S=3, n=90, scheme=scheme)
    sat, sfe = fit_saturated(d), fit_sfe(d)
    hc = v_hc_saturated(sat).matrix
    vh = v_h_hat(sat)
    new = v_new_saturated(sat).matrix
    assert np.allclose(new, hc + vh, rtol=1e-12, atol=1e-14)
    assert np.allclose(v_new_sfe(sfe, sat).matrix, hc + vh, rtol=1e-12, atol=1e-14)
    bal = BalanceProfile.uniform(1.0, 3)
    with_a = v_new_sfe(sfe, sat, bal)
    assert np.allclose(with_a.matrix, hc + vh + v_a_hat(sat, bal), rtol=1e-12, atol=1e-14)
    for m in (new, with_a.matrix, v_hc_sfe(sfe).matrix, v_ho_sfe(sfe).matrix):
        assert np.linalg.eigvalsh(m).min() > -1e-10 * np.abs(m).max()


def test_dispatch_and_shared_computation_agree(dataset):
    sat, sfe = fit_saturated(dataset), fit_sfe(dataset)
    bal = BalanceProfile.uniform(1.0, dataset.num_strata)
    allm = estimate_all(sat, sfe, balance=bal)
    for k in VarianceKind:
        assert np.allclose(allm[k], estimate(k, sat, sfe, bal).matrix, rtol=1e-12)


def test_new_sfe_rejects_mismatched_fits():
    a, b = make_dataset(1), make_dataset(2)
    with pytest.raises(ValueError):
        v_new_sfe(fit_sfe(a), fit_saturated(b))


def test_covariance_estimate_checks_symmetry():
    with pytest.raises(ValueError):
        CovarianceEstimate(np.array([[1.0, 2.0], [0.0, 1.0]]), VarianceKind.HC_SAT)


def test_scalar_formulas_match_matrix_forms():
    mom = population_moments(ModelSpec(4), budget=200_000)
    for pi1 in (0.3, 0.5, 0.7):
        pi = [1 - pi1, pi1]
        assert np.isclose(varsigma_y2(mom, pi1), v_y_population(mom, pi)[0, 0])
        assert np.isclose(hc_sfe_limit_scalar(mom, pi1), limit_hc_sfe(mom, pi)[0, 0], rtol=1e-10)
        assert np.isclose(varsigma_a2(mom, pi1, 1.0), v_a_population(mom, pi, 1.0)[0, 0], rtol=1e-10)
    assert np.isclose(varsigma_a2(mom, 0.5, 1.0), 0.0)
    assert varsigma_h2(mom) > 0.1


# ---- three-arm design with exact moments: Z ~ U(0, 1), four equal strata,
#      m = (2Z, 6Z^2, -4Z), standard normal noise

S3 = 4
PI3 = TargetProportions.constant([0.3, 0.3, 0.4], S3)


def three_arm_moments():
    e = np.linspace(0, 1, S3 + 1)
    lo, hi = e[:-1], e[1:]
    h = hi - lo
    ez = (lo + hi) / 2
    ez2 = (hi ** 3 - lo ** 3) / (3 * h)
    ez4 = (hi ** 5 - lo ** 5) / (5 * h)
    cm = np.vstack([2 * ez, 6 * ez2, -4 * ez])
    var = np.vstack([4 * (ez2 - ez ** 2), 36 * (ez4 - ez2 ** 2), 16 * (ez2 - ez ** 2)]) + 1.0
    big_m = np.array([1.0, 2.0, -2.0])
    return PopulationMoments(np.full(S3, 1 / S3), cm - big_m[:, None], var, big_m)


def draw_three_arm(rng, n, scheme, seed):
    z = rng.random(n)
    s = np.minimum((z * S3).astype(int) + 1, S3)
    y = np.vstack([2 * z, 6 * z * z, -4 * z]) + rng.standard_normal((3, n))
    a = assign(scheme, s, PI3, seed)
    return Dataset(y[a, np.arange(n)], a, s, 2, S3)


@pytest.mark.slow
@pytest.mark.parametrize("scheme", ["SRS", "SBR"])
def test_asymptotic_variances_by_simulation(scheme):
    mom = three_arm_moments()
    theta = mom.big_m[1:] - mom.big_m[0]
    n, reps = 1000, 3000
    rng = np.random.default_rng(11)
    sfe, sat, va_hat = [], [], []
    bal = BalanceProfile.for_scheme(scheme, S3)
    for r in range(reps):
        d = draw_three_arm(rng, n, scheme, RngSeed(r, 3))
        fs, ft = fit_sfe(d), fit_saturated(d)
        sfe.append(np.sqrt(n) * (fs.theta - theta))
        sat.append(np.sqrt(n) * (ft.theta - theta))
        va_hat.append(v_a_hat(ft, BalanceProfile.uniform(1.0, S3)))

    def check(emp, ana):
        se = np.sqrt((np.outer(np.diag(ana), np.diag(ana)) + ana ** 2) / reps)
        assert np.all(np.abs(emp - ana) < 4 * se), (emp, ana)

    v_sfe = v_analytic_sfe(mom, PI3, bal)
    check(np.cov(np.array(sfe).T), v_sfe)
    check(np.cov(np.array(sat).T), v_analytic_sat(mom, PI3))
    va = v_a_population(mom, PI3, 1.0)
    # the imbalance term matters here, so omitting it would be detected
    assert va[0, 0] > 10 * np.sqrt(2 / reps) * v_sfe[0, 0]
    assert np.allclose(np.mean(va_hat, axis=0), va, rtol=0.05, atol=0.05)
    if scheme == "SBR":
        assert np.allclose(v_sfe, v_analytic_sat(mom, PI3))
