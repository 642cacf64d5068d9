import numpy as np
import pytest
from conftest import make_dataset
from hypothesis import given, settings, strategies as st
from scipy import stats

from carinf.core import (AteEstimate, Dataset, EstimatorKind, LinearHypothesis,
                         SingularStudentizerError, TargetProportions, VarianceKind)
from carinf.dgp import ModelSpec, simulate_dataset
from carinf.estimators import fit_saturated
from carinf.hypothesis import coefficient_report, two_sample_ttest, wald_test
from carinf.rng import RngSeed
from carinf.special import chi2_quantile
from carinf.variance import CovarianceEstimate, v_new_saturated


def test_scalar_wald_equals_squared_t():
    th = AteEstimate([0.3], EstimatorKind.SAT, 400)
    v = np.array([[2.0]])
    res = wald_test(th, v, LinearHypothesis.single(1, 1))
    z = 0.3 / np.sqrt(2.0 / 400)
    assert res.statistic == pytest.approx(z * z)
    assert res.reject == (z * z > chi2_quantile(1, 0.95))
    rep = coefficient_report(th, v, 1)
    assert rep.z_stat == pytest.approx(z)
    assert rep.std_error == pytest.approx(np.sqrt(2.0 / 400))
    assert rep.p_value == pytest.approx(res.p_value, rel=1e-10)
    assert rep.ci_low == pytest.approx(0.3 - 1.959963984540054 * rep.std_error)


def test_joint_wald_hand_computed():
    theta = np.array([0.2, -0.1])
    v = np.array([[2.0, 0.5], [0.5, 1.0]])
    res = wald_test(theta, v, LinearHypothesis.identity(2), n=100)
    want = 100 * theta @ np.linalg.solve(v, theta)
    assert res.statistic == pytest.approx(want) and res.df == 2
    assert res.critical_value == pytest.approx(5.991464547107979)


@given(st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_wald_invariant_to_reparametrization(seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=3)
    b = rng.normal(size=(3, 3))
    v = b @ b.T + 0.5 * np.eye(3)
    psi = rng.normal(size=(2, 3))
    c = rng.normal(size=2)
    a = rng.normal(size=(2, 2)) + 3 * np.eye(2)
    t1 = wald_test(theta, v, LinearHypothesis(psi, c), n=50).statistic
    t2 = wald_test(theta, v, LinearHypothesis(a @ psi, a @ c), n=50).statistic
    assert t1 == pytest.approx(t2, rel=1e-8)


def test_singular_studentizer():
    with pytest.raises(SingularStudentizerError):
        wald_test([0.1, 0.2], np.ones((2, 2)), LinearHypothesis.identity(2), n=10)
    with pytest.raises(SingularStudentizerError):
        wald_test([0.1], np.zeros((1, 1)), LinearHypothesis.identity(1), n=10)
    with pytest.raises(ValueError):
        wald_test([0.1], np.eye(1), LinearHypothesis.identity(1))


def test_works_with_covariance_estimate(dataset):
    fit = fit_saturated(dataset)
    v = v_new_saturated(fit)
    assert isinstance(v, CovarianceEstimate)
    res = wald_test(AteEstimate(fit.theta, EstimatorKind.SAT, fit.n), v, LinearHypothesis.identity(2))
    assert res.statistic > 0 and 0 <= res.p_value <= 1
    assert v.kind is VarianceKind.NEW_SAT


def test_two_sample_ttest_hand_values():
    d = Dataset([1.0, 2.0, 3.0, 5.0, 7.0, 9.0], [0, 0, 0, 1, 1, 1], [1] * 6, 1, 1)
    pooled = two_sample_ttest(d, flavor="pooled")
    assert pooled.estimate == pytest.approx(5.0)
    # variances 1 and 4, pooled 2.5, se = sqrt(2.5 * 2/3)
    assert pooled.std_error == pytest.approx(np.sqrt(2.5 * 2 / 3))
    assert two_sample_ttest(d, flavor="unequal").std_error == pytest.approx(np.sqrt(1 / 3 + 4 / 3))
    with pytest.raises(ValueError):
        two_sample_ttest(d, flavor="other")


@pytest.mark.slow
def test_two_sample_ttest_conservative_under_blocking():
    spec = ModelSpec(1, pi=TargetProportions.binary(0.5, 10))
    reps = 2000
    rej = 0
    for r in range(reps):
        d = simulate_dataset(spec, "SBR", RngSeed(r, 17))
        rej += two_sample_ttest(d).p_value < 0.05
    assert rej / reps < 0.03


def test_p_values_roughly_uniform_under_null():
    ps = []
    for seed in range(300):
        d = make_dataset(seed, n=400, K=1, S=2, hetero=False)
        d = d.with_outcomes(np.random.default_rng(seed).standard_normal(d.n))
        fit = fit_saturated(d)
        ps.append(wald_test(fit.theta, v_new_saturated(fit), LinearHypothesis.identity(1), n=d.n).p_value)
    ps = np.array(ps)
    assert stats.kstest(ps, "uniform").pvalue > 1e-3
    assert 0.01 < np.mean(ps < 0.05) < 0.11


def test_application_standard_errors_from_displayed_matrices():
    # displayed components of the school video application, n = 215
    vh = np.array([[0.0630, 0.0385], [0.0385, 0.291]])
    vhc = np.array([[9.101, 4.503], [4.503, 8.879]])
    theta = np.array([-0.051, 0.409])
    new = [coefficient_report(theta, vh + vhc, a, n=215) for a in (1, 2)]
    hc = coefficient_report(theta, vhc, 2, n=215)
    # the displayed matrices are themselves rounded, so allow one unit in the last digit
    assert [r.std_error for r in new] == pytest.approx([0.206, 0.206], abs=1e-3)
    assert hc.std_error == pytest.approx(0.203, abs=1e-3)
    assert new[1].z_stat == pytest.approx(1.981, abs=2e-3)
    assert new[0].z_stat == pytest.approx(-0.248, abs=2e-3)
    # normal reference: 0.0476 against the printed 0.049
    assert new[1].p_value == pytest.approx(0.049, abs=2e-3)
    assert new[0].p_value == pytest.approx(0.805, abs=2e-3)
