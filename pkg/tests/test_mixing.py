import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import batch_var_ref, chain_autocov
from ttarecovery.mixing import (MixingProcess, autocov_exact, b_eff, batch_mean_variance_exact,
                                c_phi, check_batch_variance, covariance_bound,
                                empirical_phi_report, sample_correlated_batch, stay_prob_for)


def test_c_phi_values():
    assert c_phi(0.0) == 1.0
    assert c_phi(0.25) == pytest.approx(5.0)
    assert c_phi(0.999999) > 1e6


@pytest.mark.parametrize("bad", [-0.1, 1.0, 1.5])
def test_c_phi_range(bad):
    with pytest.raises(ValueError):
        c_phi(bad)


def test_b_eff_values():
    assert b_eff(16, 0.0) == 16
    assert b_eff(16, 0.25) == pytest.approx(3.2)
    assert b_eff(1, 0.7) <= 1
    with pytest.raises(ValueError):
        b_eff(0, 0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 0.98), st.floats(0, 0.98), st.integers(1, 200))
def test_monotonicity(r1, r2, B):
    lo, hi = sorted((r1, r2))
    assert c_phi(lo) <= c_phi(hi)
    assert b_eff(B, lo) >= b_eff(B, hi)
    assert b_eff(B + 1, lo) > b_eff(B, lo)


@pytest.mark.parametrize("p", [0.5, 0.75, 0.9])
@pytest.mark.parametrize("lag", [0, 1, 2, 7])
def test_autocov_closed_form_matches_matrix_power(p, lag):
    assert autocov_exact(p, 2.0, lag) == pytest.approx(chain_autocov(p, 2.0, lag), abs=1e-12)


@pytest.mark.parametrize("p", [0.5, 0.75, 0.9])
@pytest.mark.parametrize("B", [1, 4, 16])
def test_batch_variance_closed_form(p, B):
    assert batch_mean_variance_exact(p, 1.5, B) == pytest.approx(batch_var_ref(p, 1.5, B),
                                                                 rel=1e-12)


def test_exact_batch_variance_respects_bound():
    for p in np.linspace(0.5, 0.99, 25):
        rho = 2 * p - 1
        for B in (1, 2, 16, 64, 256):
            assert batch_mean_variance_exact(p, 1.0, B) <= c_phi(rho) / B + 1e-12


def test_deterministic_replay():
    a = MixingProcess(0.8, 1.0, 42).batch_means(100, 8)
    b = MixingProcess(0.8, 1.0, 42).batch_means(100, 8)
    assert np.array_equal(a, b)


def test_state_continues_between_calls():
    whole = MixingProcess(0.9, 1.0, 5)
    parts = MixingProcess(0.9, 1.0, 5)
    # one call draws n uniforms; splitting the call must give the same stream
    assert np.array_equal(whole.sample(10), np.concatenate([parts.sample(4), parts.sample(6)]))


def test_emissions_bounded():
    x = MixingProcess(0.7, 2.5, 1).sample(1000)
    assert set(np.unique(x)) <= {-2.5, 2.5}
    assert sample_correlated_batch(MixingProcess(0.7, 1.0, 1), 16).shape == (16,)
    with pytest.raises(ValueError):
        sample_correlated_batch(MixingProcess(0.7, 1.0, 1), 0)


@pytest.mark.parametrize("bad", [0.4, 1.0])
def test_stay_prob_range(bad):
    with pytest.raises(ValueError):
        MixingProcess(bad, 1.0)


def test_rho_roundtrip():
    assert MixingProcess.from_rho(0.6, 1.0).rho_mix == pytest.approx(0.6)
    assert stay_prob_for(0.0) == 0.5


def test_independent_chain_lag1_zero():
    rows = empirical_phi_report(MixingProcess(0.5, 1.0, 3), 1, 1_000_000)
    r = rows[0]
    assert abs(r.cov) <= 3 * r.stderr
    assert r.bound == 0.0 and r.ok


def test_sample_variance_matches_sigma():
    x = MixingProcess(0.9, 2.0, 11).sample(1_000_000)
    sq = (x - x.mean()) ** 2
    blocks = sq.reshape(100, -1).mean(axis=1)
    se = blocks.std(ddof=1) / 10
    assert abs(sq.mean() - 4.0) <= 3 * se + 1e-12


def test_geometric_decay_at_p09():
    rows = empirical_phi_report(MixingProcess(0.9, 1.0, 8), 6, 1_000_000)
    for r in rows:
        assert abs(r.cov - 0.8 ** r.lag) <= 3 * r.stderr + 1e-3
        assert r.ok
        assert r.ratio <= 1


def test_phi_report_requires_samples():
    with pytest.raises(ValueError):
        empirical_phi_report(MixingProcess(0.9, 1.0), 10, 500)
    with pytest.raises(ValueError):
        empirical_phi_report(MixingProcess(0.9, 1.0), 0, 5000)


def test_batch_variance_check_p09():
    chk = check_batch_variance(MixingProcess(0.9, 1.0, 2), 16, 100_000)
    assert chk.ok
    assert chk.bound == pytest.approx(c_phi(0.8) / 16)
    assert abs(chk.variance - chk.exact) <= 3 * chk.stderr


def test_covariance_bound_formula():
    assert covariance_bound(3.0, 0.25, 2) == pytest.approx(2 * 9 * 0.25)
    assert math.isclose(covariance_bound(1.0, 0.0, 1), 0.0)
