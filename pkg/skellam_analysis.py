"""
Skellam Analysis
Closed-form oracles for the Skellam mechanism.

Features:
- Skellam pmf (symmetric and asymmetric) from the ascending Bessel series in log-space
- Upper bound on consecutive Bessel ratios I_k / I_{k+1}
- Tail bound Pr[X > sigma*mu + tau] and the moment generating function
- Privacy-ratio profile: psi(k)/psi(k+S) over the range the privacy argument covers
"""

import logging
import math

import numpy as np
import pandas as pd
from scipy.special import gammaln, logsumexp

from dp_mechanisms import skellam_variance
from errors import CalibrationError, ParameterError

logger = logging.getLogger(__name__)

SERIES_CHUNK = 256
# terms below this fraction of the running sum are dropped
SERIES_REL_TOL = 1e-16
_LOG_REL_TOL = math.log(SERIES_REL_TOL)


def log_bessel_i(k, x):
    """
    log I_k(x) for integer k and x > 0.

    I_k(x) = sum_j (x/2)^(2j+k) / (j! (j+k)!), accumulated in log-space chunk
    by chunk until the terms are decreasing and negligible.
    """
    k = abs(int(k))
    if not x > 0:
        raise ParameterError(f"bessel argument must be positive, got {x}")
    log_half = math.log(x / 2.0)
    quarter_sq = (x / 2.0) ** 2
    total = -np.inf
    start = 0
    while True:
        j = np.arange(start, start + SERIES_CHUNK, dtype=np.float64)
        terms = (2.0 * j + k) * log_half - gammaln(j + 1.0) - gammaln(j + k + 1.0)
        total = np.logaddexp(total, logsumexp(terms))
        last = start + SERIES_CHUNK - 1
        past_peak = (last + 1) * (last + k + 1) > quarter_sq
        if past_peak and terms[-1] < total + _LOG_REL_TOL:
            return float(total)
        start += SERIES_CHUNK


def log_skellam_pmf(k, mu, mu2=None):
    """
    log Pr[X = k].

    With mu2 omitted: symmetric Sk(mu), psi(k) = e^-mu * I_|k|(mu).
    Otherwise Sk(mu, mu2): e^-(mu+mu2) * (mu/mu2)^(k/2) * I_|k|(2*sqrt(mu*mu2)).
    """
    if not mu > 0:
        raise ParameterError(f"skellam parameter must be positive, got {mu}")
    if mu2 is None:
        return -mu + log_bessel_i(k, mu)
    if not mu2 > 0:
        raise ParameterError(f"skellam parameter must be positive, got {mu2}")
    return (-(mu + mu2) + 0.5 * k * math.log(mu / mu2)
            + log_bessel_i(k, 2.0 * math.sqrt(mu * mu2)))


def skellam_pmf(k, mu, mu2=None):
    """Pr[X = k]; underflow returns 0.0"""
    return math.exp(log_skellam_pmf(k, mu, mu2))


def bessel_ratio_bound(k, mu):
    """Upper bound on I_k(mu) / I_{k+1}(mu): mu / (-(k+1) + sqrt((k+1)^2 + mu^2))"""
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    if k < 0:
        raise ParameterError(f"k must be nonnegative, got {k}")
    a = k + 1.0
    # -a + sqrt(a^2 + mu^2) = mu^2 / (a + sqrt(a^2 + mu^2)), no cancellation
    return (a + math.hypot(a, mu)) / mu


def tail_exponent_factor(sigma):
    """1 - sqrt(1 + sigma^2) + sigma * ln(sigma + sqrt(1 + sigma^2)); positive for sigma > 0"""
    return 1.0 - math.sqrt(1.0 + sigma * sigma) + sigma * math.asinh(sigma)


def skellam_tail_bound(sigma, tau, mu):
    """
    Bound on Pr[X > sigma*mu + tau] for X ~ Sk(mu).

    Raises:
        ParameterError: sigma <= 0, mu <= 0 or tau < -sigma*mu
    """
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    if tau < -sigma * mu:
        raise ParameterError(f"tau={tau} below -sigma*mu={-sigma * mu}")
    return math.exp(-mu * tail_exponent_factor(sigma) - tau * math.asinh(sigma))


def skellam_mgf(t, mu):
    """E[e^(tX)] for X ~ Sk(mu): exp(-mu * (1 - cosh t))"""
    return math.exp(2.0 * mu * math.sinh(t / 2.0) ** 2)


def privacy_ratio_profile(pp):
    """
    psi(k) / psi(k+S) for k in [0, sinh(eps/S)*mu - S], psi = Sk(mu) pmf at the
    calibrated mu.

    Columns:
        k, log_ratio, log_bessel_bound (sum of bessel_ratio_bound logs over the
        S consecutive steps), holds (log_ratio <= eps)

    Raises:
        CalibrationError: delta = 0
    """
    if pp.delta == 0:
        raise CalibrationError("the privacy-ratio profile needs delta > 0")
    eps, sens = pp.epsilon, pp.sensitivity
    mu = skellam_variance(eps, pp.delta, sens)
    k_max = math.floor(math.sinh(eps / sens) * mu - sens)
    columns = ['k', 'log_ratio', 'log_bessel_bound', 'holds']
    if k_max < 0:
        logger.debug(f"Empty ratio range for eps={eps}, S={sens}, mu={mu:.3f}")
        return pd.DataFrame(columns=columns)

    log_psi = [log_skellam_pmf(k, mu) for k in range(k_max + sens + 1)]
    log_bound = [math.log(bessel_ratio_bound(k, mu)) for k in range(k_max + sens)]
    rows = []
    for k in range(k_max + 1):
        log_ratio = log_psi[k] - log_psi[k + sens]
        rows.append({
            'k': k,
            'log_ratio': log_ratio,
            'log_bessel_bound': sum(log_bound[k:k + sens]),
            'holds': log_ratio <= eps + 1e-12,
        })
    profile = pd.DataFrame(rows, columns=columns)
    if not profile['holds'].all():
        logger.warning(f"⚠️  Privacy ratio exceeds e^eps at eps={eps}, delta={pp.delta}, S={sens}")
    return profile
