import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special as sp, stats

from carinf.special import (Z975, chi2_cdf, chi2_quantile, chi2_sf, gammainc_lower,
                            gammainc_upper, noncentral_chi2_sf, norm_cdf, norm_sf)


@given(st.floats(0.1, 60), st.floats(0, 200))
@settings(max_examples=200, deadline=None)
def test_incomplete_gamma_against_scipy(a, x):
    assert gammainc_lower(a, x) == pytest.approx(sp.gammainc(a, x), abs=1e-12, rel=1e-10)
    assert gammainc_upper(a, x) == pytest.approx(sp.gammaincc(a, x), abs=1e-12, rel=1e-9)


@pytest.mark.parametrize("df", [1, 2, 3, 5, 10, 30])
@pytest.mark.parametrize("q", [0.5, 0.9, 0.95, 0.99, 0.999])
def test_chi2_quantile(df, q):
    x = chi2_quantile(df, q)
    assert x == pytest.approx(stats.chi2.ppf(q, df), rel=1e-10)
    assert chi2_cdf(x, df) == pytest.approx(q, abs=1e-12)


def test_reference_values():
    assert chi2_quantile(1, 0.95) == pytest.approx(3.841458820694124, rel=1e-12)
    assert Z975 == pytest.approx(1.959963984540054, rel=1e-12)
    assert chi2_sf(0.0, 3) == 1.0
    assert norm_cdf(0.0) == 0.5
    assert norm_sf(1.959963984540054) == pytest.approx(0.025, rel=1e-12)


@given(st.integers(1, 6), st.floats(0, 40), st.floats(0.01, 60))
@settings(max_examples=100, deadline=None)
def test_noncentral_tail_against_scipy(df, nc, x):
    want = stats.ncx2.sf(x, df, nc) if nc > 0 else stats.chi2.sf(x, df)
    assert noncentral_chi2_sf(x, df, nc) == pytest.approx(want, abs=1e-10)


def test_noncentral_one_df_has_normal_form():
    # P(|N(sqrt(mu), 1)| > z) written via two normal tails
    z = Z975
    for mu in (0.5, 4.0, 9.0):
        r = np.sqrt(mu)
        want = norm_sf(z - r) + norm_sf(z + r)
        assert noncentral_chi2_sf(z * z, 1, mu) == pytest.approx(want, abs=1e-12)


def test_domain_errors():
    with pytest.raises(ValueError):
        chi2_quantile(0, 0.5)
    with pytest.raises(ValueError):
        chi2_quantile(1, 1.0)
