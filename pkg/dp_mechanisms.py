"""
Discrete DP Mechanisms
Geometric, Binomial and Skellam noise for distributed (per-user) perturbation.

Features:
- Calibration of the central noise parameter from (epsilon, delta, S(f))
- Per-user split under the honest fraction gamma
- Exact integer samplers (seedable numpy Generators)
- Accuracy bounds alpha(beta) and their inversion for epsilon
- Flat key=value calibration reports

All logarithms are natural.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from errors import CalibrationError, ParameterError

logger = logging.getLogger(__name__)


class Mechanism:
    GEOMETRIC = "geometric"
    BINOMIAL = "binomial"
    SKELLAM = "skellam"
    NONE = "none"
    ALL = (GEOMETRIC, BINOMIAL, SKELLAM)


class AccuracyBound:
    # closed forms as stated for the three mechanisms
    PAPER = "paper"
    # Skellam only: the bound before simplifying (cosh(eps/S) - 1) * mu <= log(1/delta)
    TIGHT = "tight"


# Poisson means above this are split into equal parts
POISSON_SPLIT = 30.0


# ============================================
# DOMAIN TYPES
# ============================================

@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float
    sensitivity: int = 1
    gamma: float = 1.0
    beta: float = 0.05

    def __post_init__(self):
        if not self.epsilon > 0:
            raise CalibrationError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise CalibrationError(f"delta must lie in [0, 1), got {self.delta}")
        if int(self.sensitivity) != self.sensitivity or self.sensitivity < 1:
            raise CalibrationError(f"sensitivity must be a positive integer, got {self.sensitivity}")
        if not 0 < self.gamma <= 1:
            raise CalibrationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0 < self.beta < 1:
            raise CalibrationError(f"beta must lie in (0, 1), got {self.beta}")

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class NoiseSpec:
    """Calibrated mechanism: central parameter plus the per-user share"""
    mechanism: str
    n_users: int
    gamma: float
    lam: float = None
    bernoulli_prob: float = None
    n_prime: int = None
    n_prime_user: int = None
    mu: float = None
    mu_user: float = None

    @property
    def is_zero(self):
        return self.mechanism == Mechanism.NONE


def zero_noise_spec(n_users):
    """No perturbation at all (exactness checks)"""
    return NoiseSpec(Mechanism.NONE, n_users, 1.0)


# ============================================
# CALIBRATION
# ============================================

def even_ceil(x):
    """Smallest even integer >= x (and >= 2)"""
    k = math.ceil(x)
    if k % 2:
        k += 1
    return max(2, k)


def skellam_variance(epsilon, delta, sensitivity=1):
    """
    Smallest Skellam variance mu giving (epsilon, delta)-DP:
        mu = log(1/delta) / (1 - cosh(e) + e*sinh(e)),  e = epsilon/S
    """
    x = epsilon / sensitivity
    # 1 - cosh(x) = -2 sinh(x/2)^2 keeps precision for small x
    denom = x * math.sinh(x) - 2.0 * math.sinh(x / 2.0) ** 2
    return math.log(1.0 / delta) / denom


def binomial_trials(epsilon, delta, sensitivity=1):
    """n' = 64 * S^2 * log(2/delta) / epsilon^2 (before rounding)"""
    return 64.0 * sensitivity ** 2 * math.log(2.0 / delta) / epsilon ** 2


def calibrate(pp, mechanism, n):
    """
    Central noise parameter and per-user split.

    Args:
        pp: PrivacyParams
        mechanism: Mechanism.GEOMETRIC / BINOMIAL / SKELLAM
        n: number of users

    Raises:
        CalibrationError: delta = 0 for binomial/skellam, unknown mechanism, n < 1
    """
    if n < 1:
        raise CalibrationError(f"need at least one user, got n={n}")
    honest_share = pp.gamma * n
    eps, delta, sens = pp.epsilon, pp.delta, pp.sensitivity

    if mechanism == Mechanism.GEOMETRIC:
        lam = math.exp(eps / sens)
        prob = 1.0 if delta == 0 else min(1.0, math.log(1.0 / delta) / honest_share)
        spec = NoiseSpec(mechanism, n, pp.gamma, lam=lam, bernoulli_prob=prob)

    elif mechanism == Mechanism.BINOMIAL:
        if delta == 0:
            raise CalibrationError("the binomial mechanism needs delta > 0")
        raw = binomial_trials(eps, delta, sens)
        spec = NoiseSpec(mechanism, n, pp.gamma, n_prime=even_ceil(raw),
                         n_prime_user=even_ceil(raw / honest_share))

    elif mechanism == Mechanism.SKELLAM:
        if delta == 0:
            raise CalibrationError("the skellam mechanism needs delta > 0")
        mu = skellam_variance(eps, delta, sens)
        spec = NoiseSpec(mechanism, n, pp.gamma, mu=mu, mu_user=mu / honest_share)

    else:
        raise CalibrationError(f"unknown mechanism {mechanism!r}")

    logger.debug(f"Calibrated {mechanism}: {spec}")
    return spec


def central_noise_std(spec):
    """Standard deviation of the central noise Y"""
    if spec.mechanism == Mechanism.GEOMETRIC:
        return math.sqrt(2.0 * spec.lam) / (spec.lam - 1.0)
    if spec.mechanism == Mechanism.BINOMIAL:
        return math.sqrt(spec.n_prime) / 2.0
    if spec.mechanism == Mechanism.SKELLAM:
        return math.sqrt(spec.mu)
    return 0.0


def user_noise_std(spec):
    """
    Standard deviation of one honest user's share.

    A geometric user either adds nothing or the full central noise; the
    nonzero case is what bounds the plaintext.
    """
    if spec.mechanism == Mechanism.GEOMETRIC:
        return central_noise_std(spec)
    if spec.mechanism == Mechanism.BINOMIAL:
        return math.sqrt(spec.n_prime_user) / 2.0
    if spec.mechanism == Mechanism.SKELLAM:
        return math.sqrt(spec.mu_user)
    return 0.0


# ============================================
# SAMPLERS
# ============================================

def _finish(values, size):
    return int(values[0]) if size is None else values


def sample_symmetric_geometric(lam, rng, size=None):
    """
    Two-sided geometric: Pr[k] = (lam-1)/(lam+1) * lam^-|k|.

    |k| is drawn by inverse CDF, the sign by a fair coin.
    """
    if not lam > 1:
        raise ParameterError(f"geometric parameter must exceed 1, got {lam}")
    count = 1 if size is None else size
    a = 1.0 / lam
    zero_mass = (lam - 1.0) / (lam + 1.0)
    is_zero = rng.random(count) < zero_mass
    # |k| - 1 ~ Geom(1 - a) on {0, 1, ...}
    magnitude = 1 + np.floor(np.log1p(-rng.random(count)) / math.log(a)).astype(np.int64)
    sign = 2 * rng.integers(0, 2, size=count, dtype=np.int64) - 1
    return _finish(np.where(is_zero, 0, sign * magnitude), size)


def sample_binomial_centered(n_prime, rng, size=None):
    """B - n'/2 with B ~ Bin(n', 1/2), i.e. the centered sum of n' fair bits"""
    if n_prime < 2 or n_prime % 2:
        raise ParameterError(f"binomial trials must be even and >= 2, got {n_prime}")
    count = 1 if size is None else size
    draws = rng.binomial(n_prime, 0.5, size=count).astype(np.int64) - n_prime // 2
    return _finish(draws, size)


def _poisson_small(mean, rng, count):
    """Multiplication of uniforms, vectorised over `count` draws"""
    limit = math.exp(-mean)
    counts = np.zeros(count, dtype=np.int64)
    product = rng.random(count)
    active = np.nonzero(product > limit)[0]
    while active.size:
        counts[active] += 1
        product[active] *= rng.random(active.size)
        active = active[product[active] > limit]
    return counts


def sample_poisson(mean, rng, size=None):
    """
    Exact Poisson(mean).

    Means above POISSON_SPLIT are split into k equal parts and the k draws
    summed (Poisson additivity keeps this exact).
    """
    if not mean > 0:
        raise ParameterError(f"poisson mean must be positive, got {mean}")
    count = 1 if size is None else size
    parts = max(1, math.ceil(mean / POISSON_SPLIT))
    draws = _poisson_small(mean / parts, rng, count * parts)
    return _finish(draws.reshape(count, parts).sum(axis=1), size)


def sample_skellam(mu, rng, size=None):
    """Symmetric Skellam Sk(mu) = Poisson(mu/2) - Poisson(mu/2)"""
    return sample_skellam_asymmetric(mu / 2.0, mu / 2.0, rng, size)


def sample_skellam_asymmetric(mu1, mu2, rng, size=None):
    """Sk(mu1, mu2) = Poisson(mu1) - Poisson(mu2)"""
    if not (mu1 > 0 and mu2 > 0):
        raise ParameterError(f"skellam parameters must be positive, got {mu1}, {mu2}")
    count = 1 if size is None else size
    diff = sample_poisson(mu1, rng, count) - sample_poisson(mu2, rng, count)
    return _finish(diff, size)


# ============================================
# DISTRIBUTED NOISE
# ============================================

def user_noise(spec, honest, rng):
    """
    One user's perturbation r_i.

    Compromised users add nothing. An honest geometric user adds the full
    geometric noise with probability bernoulli_prob; honest binomial and
    skellam users always add their small share.
    """
    if not honest or spec.is_zero:
        return 0
    if spec.mechanism == Mechanism.GEOMETRIC:
        if rng.random() < spec.bernoulli_prob:
            return sample_symmetric_geometric(spec.lam, rng)
        return 0
    if spec.mechanism == Mechanism.BINOMIAL:
        return sample_binomial_centered(spec.n_prime_user, rng)
    if spec.mechanism == Mechanism.SKELLAM:
        return sample_skellam(spec.mu_user, rng)
    raise ParameterError(f"unknown mechanism {spec.mechanism!r}")


def draw_population_noise(spec, honest_count, rng):
    """Vectorised user_noise for `honest_count` honest users (int64 array)"""
    if honest_count < 1 or spec.is_zero:
        return np.zeros(max(honest_count, 0), dtype=np.int64)
    if spec.mechanism == Mechanism.GEOMETRIC:
        fires = rng.random(honest_count) < spec.bernoulli_prob
        draws = sample_symmetric_geometric(spec.lam, rng, size=honest_count)
        return np.where(fires, draws, 0)
    if spec.mechanism == Mechanism.BINOMIAL:
        return sample_binomial_centered(spec.n_prime_user, rng, size=honest_count)
    if spec.mechanism == Mechanism.SKELLAM:
        return sample_skellam(spec.mu_user, rng, size=honest_count)
    raise ParameterError(f"unknown mechanism {spec.mechanism!r}")


# ============================================
# ACCURACY
# ============================================

def accuracy_alpha(pp, mechanism, bound=AccuracyBound.PAPER):
    """
    alpha such that |noisy sum - sum| <= alpha with probability >= 1 - beta.

    Raises:
        CalibrationError: delta = 0 (every formula needs log(1/delta))
    """
    if pp.delta == 0:
        raise CalibrationError("accuracy bounds need delta > 0")
    eps, delta, sens, gamma, beta = pp.epsilon, pp.delta, pp.sensitivity, pp.gamma, pp.beta
    log_beta = math.log(2.0 / beta)

    if mechanism == Mechanism.GEOMETRIC:
        return 4.0 * sens / eps * math.sqrt(math.log(1.0 / delta) / gamma * log_beta)

    if mechanism == Mechanism.BINOMIAL:
        return 8.0 * math.sqrt(2.0) * sens / eps * math.sqrt(math.log(2.0 / delta) / gamma * log_beta)

    if mechanism == Mechanism.SKELLAM:
        if bound == AccuracyBound.TIGHT:
            x = eps / sens
            mu = skellam_variance(eps, delta, sens)
            return sens / eps * (log_beta + 2.0 * math.sinh(x / 2.0) ** 2 * mu / gamma)
        return sens / eps * (math.log(1.0 / delta) / gamma + log_beta)

    raise CalibrationError(f"unknown mechanism {mechanism!r}")


def solve_epsilon(alpha, mechanism, delta, beta, sensitivity=1, gamma=1.0,
                  bound=AccuracyBound.PAPER, lo=1e-9, hi=1e3):
    """
    The epsilon > 0 at which accuracy_alpha equals `alpha`.

    Raises:
        CalibrationError: no positive root in (lo, hi)
    """
    if not alpha > 0:
        raise CalibrationError(f"alpha must be positive, got {alpha}")
    base = PrivacyParams(1.0, delta, sensitivity, gamma, beta)

    def gap(eps):
        return accuracy_alpha(base.with_epsilon(eps), mechanism, bound) - alpha

    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise CalibrationError(
            f"no positive epsilon gives alpha={alpha} for {mechanism} in ({lo}, {hi})")
    return brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12)


# ============================================
# CALIBRATION REPORT
# ============================================

def calibration_report(spec, pp):
    """Ordered key/value pairs describing a calibration"""
    report = {
        'mechanism': spec.mechanism,
        'epsilon': pp.epsilon,
        'delta': pp.delta,
        'gamma': pp.gamma,
        'sensitivity': pp.sensitivity,
        'users': spec.n_users,
    }
    if spec.mechanism == Mechanism.GEOMETRIC:
        report.update(**{'lambda': spec.lam, 'bernoulli_prob': spec.bernoulli_prob})
    elif spec.mechanism == Mechanism.BINOMIAL:
        report.update(n_prime=spec.n_prime, n_prime_user=spec.n_prime_user)
    elif spec.mechanism == Mechanism.SKELLAM:
        report.update(mu=spec.mu, mu_user=spec.mu_user)
    report['central_std'] = central_noise_std(spec)
    report['beta'] = pp.beta
    report['alpha'] = accuracy_alpha(pp, spec.mechanism) if pp.delta > 0 else float('inf')
    return report


def format_calibration_report(spec, pp):
    return ''.join(f"{key}={value}\n" for key, value in calibration_report(spec, pp).items())


def write_calibration_report(path, spec, pp):
    with open(path, 'w') as f:
        f.write(format_calibration_report(spec, pp))
    return path


def read_calibration_report(path):
    """Parse a key=value report back into a dict of strings"""
    report = {}
    with open(path, 'r') as f:
        for line in f:
            line = line.strip()
            if line and '=' in line:
                key, value = line.split('=', 1)
                report[key] = value
    return report
