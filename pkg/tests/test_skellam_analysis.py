import math

import numpy as np
import pytest
from scipy.special import ive
from scipy.stats import skellam

from dp_mechanisms import PrivacyParams, sample_skellam, skellam_variance
from errors import CalibrationError, ParameterError
from skellam_analysis import (
    bessel_ratio_bound, log_bessel_i, privacy_ratio_profile, skellam_mgf, skellam_pmf,
    skellam_tail_bound, tail_exponent_factor,
)


def test_pmf_reference_value():
    assert skellam_pmf(0, 2) == pytest.approx(0.30851, abs=1e-5)


def test_pmf_symmetry():
    for mu in (0.5, 7.0, 300.0):
        for k in range(0, 40):
            assert skellam_pmf(k, mu) == skellam_pmf(-k, mu)


@pytest.mark.parametrize('mu', [0.5, 10.0, 300.0, 1400.0])
def test_pmf_matches_scaled_bessel(mu):
    # ive(k, mu) = I_k(mu) * exp(-mu)
    for k in (0, 1, 2, 5, 17, 40):
        assert skellam_pmf(k, mu) == pytest.approx(ive(k, mu), rel=1e-9)


@pytest.mark.parametrize('mu', [1.0, 10.0, 1400.0])
def test_pmf_normalizes(mu):
    reach = int(mu + 40 * math.sqrt(mu))
    total = skellam_pmf(0, mu) + 2 * sum(skellam_pmf(k, mu) for k in range(1, reach + 1))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_pmf_underflow_returns_zero():
    assert skellam_pmf(5000, 1.0) == 0.0


def test_asymmetric_pmf():
    for k in range(-5, 11):
        assert skellam_pmf(k, 3.0, 1.0) == pytest.approx(skellam.pmf(k, 3.0, 1.0), rel=1e-6)
    for k in range(-5, 6):
        assert skellam_pmf(k, 2.5, 2.5) == pytest.approx(skellam_pmf(k, 5.0), rel=1e-12)


def test_pmf_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        skellam_pmf(0, 0.0)
    with pytest.raises(ParameterError):
        skellam_pmf(0, 1.0, -1.0)
    with pytest.raises(ParameterError):
        log_bessel_i(0, 0.0)


def test_bessel_ratio_bound_holds():
    for mu in (1.0, 10.0, 100.0):
        for k in range(0, 51):
            ratio = math.exp(log_bessel_i(k, mu) - log_bessel_i(k + 1, mu))
            bound = bessel_ratio_bound(k, mu)
            assert ratio < bound
            assert bound > 1


def test_bessel_ratio_bound_limit():
    previous = None
    for mu in (1e2, 1e4, 1e6):
        excess = bessel_ratio_bound(0, mu) - 1
        assert excess > 0
        if previous is not None:
            assert excess < previous
        previous = excess
    assert previous < 1e-5


def test_tail_exponent_factor_positive():
    for sigma in (1e-3, 0.1, 0.5, 1.0, 5.0):
        assert tail_exponent_factor(sigma) > 0


def _tail_check(sigma, tau, mu, draws, rng):
    samples = sample_skellam(mu, rng, size=draws)
    freq = float((samples > sigma * mu + tau).mean())
    bound = skellam_tail_bound(sigma, tau, mu)
    return freq <= bound + 3 * math.sqrt(max(bound, 1e-12) * (1 - min(bound, 1)) / draws)


TAIL_GRID = [(0.5, 0.0, 10.0), (0.2, 1.0, 50.0), (1.0, -2.0, 5.0), (0.1, 0.0, 400.0)]


@pytest.mark.parametrize('sigma, tau, mu', TAIL_GRID)
def test_tail_bound_monte_carlo(rng, sigma, tau, mu):
    assert _tail_check(sigma, tau, mu, 100_000, rng)


@pytest.mark.slow
@pytest.mark.parametrize('sigma, tau, mu', TAIL_GRID)
def test_tail_bound_monte_carlo_million(rng, sigma, tau, mu):
    assert _tail_check(sigma, tau, mu, 1_000_000, rng)


def test_tail_bound_precondition():
    with pytest.raises(ParameterError):
        skellam_tail_bound(0.5, -6.0, 10.0)
    with pytest.raises(ParameterError):
        skellam_tail_bound(0.0, 1.0, 10.0)


def test_tail_bound_at_privacy_threshold():
    # sigma = sinh(eps/S), tau = -S leaves exactly delta * e^eps of mass
    eps, delta, sens = 0.5, 1e-3, 2
    mu = skellam_variance(eps, delta, sens)
    bound = skellam_tail_bound(math.sinh(eps / sens), -sens, mu)
    assert bound == pytest.approx(delta * math.exp(eps), rel=1e-9)


@pytest.mark.parametrize('t', [0.05, 0.1])
def test_mgf_monte_carlo(rng, t):
    mu = 50.0
    samples = sample_skellam(mu, rng, size=100_000)
    empirical = math.log(np.exp(t * samples).mean())
    assert empirical == pytest.approx(-mu * (1 - math.cosh(t)), abs=0.02)
    assert math.log(skellam_mgf(t, mu)) == pytest.approx(-mu * (1 - math.cosh(t)))


@pytest.mark.parametrize('eps', [0.25, 0.5, 1.0])
@pytest.mark.parametrize('delta', [1e-2, 1e-3])
@pytest.mark.parametrize('sens', [1, 2])
def test_privacy_ratio_profile(eps, delta, sens):
    profile = privacy_ratio_profile(PrivacyParams(eps, delta, sens))
    mu = skellam_variance(eps, delta, sens)
    assert len(profile) == math.floor(math.sinh(eps / sens) * mu - sens) + 1
    assert profile['holds'].all()
    assert (profile['log_ratio'] <= profile['log_bessel_bound'] + 1e-9).all()
    assert (profile['log_bessel_bound'] <= eps + 1e-9).all()


def test_privacy_ratio_profile_empty_range():
    profile = privacy_ratio_profile(PrivacyParams(10.0, 0.5, 1))
    assert len(profile) == 0
    assert list(profile.columns) == ['k', 'log_ratio', 'log_bessel_bound', 'holds']


def test_privacy_ratio_profile_needs_delta():
    with pytest.raises(CalibrationError):
        privacy_ratio_profile(PrivacyParams(1.0, 0.0, 1))
