"""
Aggregation Simulator
End-to-end distributed-noise experiments over the PSA schemes.

Features:
- Populations with a gamma-fraction of honest users and pluggable data models
- Pipelines: paper scheme, baseline scheme, or plaintext-only (noise isolation)
- Margin policy keeping every noisy plaintext inside {-m, ..., m}
- Seed-derived streams per run; identical results for any worker count
- Mechanism comparison sweeps (delta and gamma grids) and CSV export
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from discrete_log import BRUTE, STRATEGIES
from dp_mechanisms import (
    Mechanism, PrivacyParams, accuracy_alpha, calibrate, draw_population_noise,
    user_noise_std, zero_noise_spec,
)
from errors import AggregateOverflowError, DiscreteLogNotFoundError, ParameterError
from psa_protocol import Scheme, aggregate_decrypt, derive_timestep, encrypt, prf_eval, setup

logger = logging.getLogger(__name__)


class Pipeline:
    PAPER = Scheme.PAPER
    BASELINE = Scheme.BASELINE
    PLAINTEXT = "plaintext"
    ALL = (PAPER, BASELINE, PLAINTEXT)


class DataModel:
    CONSTANT = "constant"
    UNIFORM = "uniform"
    EXPLICIT = "explicit"
    ALL = (CONSTANT, UNIFORM, EXPLICIT)


# per-user geometric noise stays below the margin except with probability < 2^-40
GEOMETRIC_TAIL_BITS = 40

PHASES = ('setup', 'noise', 'encrypt', 'decrypt')


# ============================================
# POPULATION
# ============================================

@dataclass(frozen=True)
class Population:
    """
    n users; the last floor((1-gamma)*n) indices are compromised and add no noise.

    Data models:
        constant: every user holds `value`
        uniform:  integers uniform in [low, high]
        explicit: values[timestep] is the list of the n users' values
    """
    n: int
    gamma: float = 1.0
    data_model: str = DataModel.CONSTANT
    value: int = 1
    low: int = 0
    high: int = 1
    values: tuple = None

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"population needs at least one user, got n={self.n}")
        if not 0 < self.gamma <= 1:
            raise ParameterError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.data_model not in DataModel.ALL:
            raise ParameterError(f"unknown data model {self.data_model!r}")
        if self.data_model == DataModel.UNIFORM and self.low > self.high:
            raise ParameterError(f"empty data range [{self.low}, {self.high}]")
        if self.data_model == DataModel.EXPLICIT:
            if not self.values:
                raise ParameterError("explicit data model needs per-timestep values")
            for row in self.values:
                if len(row) != self.n:
                    raise ParameterError(f"explicit row has {len(row)} values for {self.n} users")
        if self.honest_count < 1:
            raise ParameterError(f"gamma={self.gamma} leaves no honest user among {self.n}")

    @property
    def compromised_count(self):
        # tolerance keeps e.g. (1 - 0.7) * 10 from flooring to 2
        return math.floor((1.0 - self.gamma) * self.n + 1e-9)

    @property
    def honest_count(self):
        return self.n - self.compromised_count

    def is_honest(self, index):
        """index is 1-based"""
        return index <= self.honest_count

    @property
    def d_max(self):
        if self.data_model == DataModel.CONSTANT:
            return abs(self.value)
        if self.data_model == DataModel.UNIFORM:
            return max(abs(self.low), abs(self.high))
        return max(abs(int(v)) for row in self.values for v in row)

    def data(self, timestep, rng):
        """The n users' values d_1..d_n at a timestep (int64 array)"""
        if self.data_model == DataModel.CONSTANT:
            return np.full(self.n, self.value, dtype=np.int64)
        if self.data_model == DataModel.UNIFORM:
            return rng.integers(self.low, self.high, size=self.n, endpoint=True, dtype=np.int64)
        if timestep >= len(self.values):
            raise ParameterError(f"no explicit values for timestep {timestep}")
        return np.asarray(self.values[timestep], dtype=np.int64)


# ============================================
# RUN CONFIGURATION
# ============================================

@dataclass(frozen=True)
class RunConfig:
    scheme: str = Pipeline.PAPER
    mechanism: str = Mechanism.SKELLAM
    privacy: PrivacyParams = None
    num_timesteps: int = 1
    runs: int = 1
    seed: int = 0
    security_bits: int = 64
    margin_sigmas: float = 10
    workers: int = 1
    strategy: str = BRUTE
    standard_prime: bool = False

    def __post_init__(self):
        if self.scheme not in Pipeline.ALL:
            raise ParameterError(f"unknown pipeline {self.scheme!r}")
        if self.mechanism not in Mechanism.ALL + (Mechanism.NONE,):
            raise ParameterError(f"unknown mechanism {self.mechanism!r}")
        if self.mechanism != Mechanism.NONE and self.privacy is None:
            raise ParameterError(f"the {self.mechanism} mechanism needs privacy parameters")
        if self.runs < 1 or self.num_timesteps < 1:
            raise ParameterError("runs and num_timesteps must be >= 1")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown discrete-log strategy {self.strategy!r}")

    @property
    def uses_crypto(self):
        return self.scheme != Pipeline.PLAINTEXT


def noise_spec_for(config, population):
    if config.mechanism == Mechanism.NONE:
        return zero_noise_spec(population.n)
    return calibrate(config.privacy, config.mechanism, population.n)


def noise_margin(spec, margin_sigmas=10):
    """
    How far one user's noise may push a value past d_max.

    Geometric users emit the full noise, whose tail is exact:
    Pr[|Y| > t] <= lam^-t, so t = ceil(40 ln 2 / ln lam).
    Binomial and skellam shares use margin_sigmas standard deviations.
    """
    if spec.is_zero:
        return 0
    if spec.mechanism == Mechanism.GEOMETRIC:
        return math.ceil(GEOMETRIC_TAIL_BITS * math.log(2.0) / math.log(spec.lam))
    margin = math.ceil(margin_sigmas * user_noise_std(spec) + 10)
    if spec.mechanism == Mechanism.BINOMIAL:
        margin = min(margin, spec.n_prime_user // 2)
    return margin


def plaintext_bound(spec, population, margin_sigmas=10):
    """m = d_max + noise margin (at least 1)"""
    return max(1, population.d_max + noise_margin(spec, margin_sigmas))


# ============================================
# ERROR STATISTICS
# ============================================

@dataclass
class ErrorStats:
    """errors[run, timestep] = decrypted noisy sum - true sum"""
    errors: np.ndarray
    overflow_count: int = 0
    decrypt_failures: int = 0
    phase_seconds: dict = field(default_factory=dict)
    plaintext_bound: int = 0

    @property
    def samples(self):
        return int(self.errors.size)

    @property
    def mean_abs(self):
        return float(np.abs(self.errors).mean())

    @property
    def max_abs(self):
        return int(np.abs(self.errors).max())

    def quantiles(self, levels=(0.5, 0.9, 0.99)):
        """Quantiles of |error|"""
        abs_errors = np.abs(self.errors)
        return {level: float(np.quantile(abs_errors, level)) for level in levels}

    def empirical_beta(self, alpha):
        """Observed Pr[|error| > alpha]"""
        return float((np.abs(self.errors) > alpha).mean())

    def to_frame(self):
        runs, steps = self.errors.shape
        return pd.DataFrame({
            'run': np.repeat(np.arange(runs), steps),
            'timestep': np.tile(np.arange(steps), runs),
            'error': self.errors.ravel(),
        })

    def summary(self):
        row = {
            'samples': self.samples,
            'mean_abs_error': self.mean_abs,
            'max_abs_error': self.max_abs,
            'overflow_count': self.overflow_count,
            'decrypt_failures': self.decrypt_failures,
        }
        for level, value in self.quantiles().items():
            row[f"q{int(round(level * 100))}_abs_error"] = value
        return row


# ============================================
# SIMULATION
# ============================================

class _CryptoContext:
    """Keys and per-timestep masks shared (read-only) by every run"""

    def __init__(self, config, population, m, rng):
        self.strategy = config.strategy
        self.params, self.agg_key, self.user_keys = setup(
            config.security_bits, population.n, m, config.num_timesteps, rng,
            scheme=config.scheme, standard_prime=config.standard_prime,
        )
        self.timesteps = [derive_timestep(self.params, t) for t in range(config.num_timesteps)]
        self.masks = [
            [prf_eval(key.secret, ts, self.params) for key in self.user_keys]
            for ts in self.timesteps
        ]

    def encrypt_all(self, timestep, values):
        ts = self.timesteps[timestep]
        return [
            encrypt(key, ts, int(x), self.params, mask=mask)
            for key, x, mask in zip(self.user_keys, values, self.masks[timestep])
        ]

    def decrypt(self, timestep, cts):
        return aggregate_decrypt(self.agg_key, self.timesteps[timestep], cts, self.params,
                                 self.strategy)


def _perturb(data, spec, population, m, rng):
    """
    Add honest users' noise; values landing outside [-m, m] are redrawn.

    Returns:
        (noisy values, number of redraws)
    """
    honest = population.honest_count
    noise = np.zeros(population.n, dtype=np.int64)
    noise[:honest] = draw_population_noise(spec, honest, rng)
    noisy = data + noise
    redraws = 0
    out = np.nonzero(np.abs(noisy[:honest]) > m)[0]
    while out.size:
        redraws += int(out.size)
        noise[out] = draw_population_noise(spec, int(out.size), rng)
        noisy[out] = data[out] + noise[out]
        out = out[np.abs(noisy[out]) > m]
    return noisy, redraws


def _run_once(config, population, spec, m, crypto, seed_seq):
    data_ss, noise_ss = seed_seq.spawn(2)
    data_rng = np.random.default_rng(data_ss)
    noise_rng = np.random.default_rng(noise_ss)
    errors = np.zeros(config.num_timesteps, dtype=np.int64)
    timings = dict.fromkeys(PHASES, 0.0)
    redraws = failures = 0

    for t in range(config.num_timesteps):
        started = time.perf_counter()
        data = population.data(t, data_rng)
        noisy, extra = _perturb(data, spec, population, m, noise_rng)
        redraws += extra
        timings['noise'] += time.perf_counter() - started

        if crypto is None:
            total = int(noisy.sum())
        else:
            started = time.perf_counter()
            cts = crypto.encrypt_all(t, noisy)
            timings['encrypt'] += time.perf_counter() - started
            started = time.perf_counter()
            try:
                total = crypto.decrypt(t, cts)
            except (AggregateOverflowError, DiscreteLogNotFoundError) as e:
                logger.warning(f"⚠️  Decryption failed at timestep {t}: {e}")
                failures += 1
                # counted above; the error row keeps the plaintext noisy sum
                total = int(noisy.sum())
            timings['decrypt'] += time.perf_counter() - started

        errors[t] = total - int(data.sum())
    return errors, redraws, failures, timings


def run(config, population):
    """
    Simulate config.runs repetitions of the perturb / encrypt / aggregate pipeline.

    Keys come from a setup stream independent of the per-run data and noise
    streams, so the plaintext pipeline sees exactly the noise the encrypted
    pipelines see.

    Returns:
        ErrorStats
    """
    spec = noise_spec_for(config, population)
    m = plaintext_bound(spec, population, config.margin_sigmas)
    root = np.random.SeedSequence(config.seed)
    setup_ss, *run_seqs = root.spawn(config.runs + 1)

    started = time.perf_counter()
    crypto = None
    if config.uses_crypto:
        crypto = _CryptoContext(config, population, m, np.random.default_rng(setup_ss))
    setup_seconds = time.perf_counter() - started

    def one(seed_seq):
        return _run_once(config, population, spec, m, crypto, seed_seq)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one, run_seqs))
    else:
        results = [one(seq) for seq in run_seqs]

    phase_seconds = dict.fromkeys(PHASES, 0.0)
    phase_seconds['setup'] = setup_seconds
    for _, _, _, timings in results:
        for phase, seconds in timings.items():
            phase_seconds[phase] += seconds

    stats = ErrorStats(
        errors=np.vstack([errors for errors, _, _, _ in results]),
        overflow_count=sum(r[1] for r in results),
        decrypt_failures=sum(r[2] for r in results),
        phase_seconds=phase_seconds,
        plaintext_bound=m,
    )
    if stats.overflow_count:
        logger.info(f"Redrew {stats.overflow_count} noise values that left [-{m}, {m}]")
    if stats.decrypt_failures:
        logger.warning(f"❌ {stats.decrypt_failures} aggregate decryptions failed")
    logger.debug(f"✅ {config.runs} runs of {config.mechanism}/{config.scheme}: "
                 f"mean |error| {stats.mean_abs:.2f}")
    return stats


# ============================================
# MECHANISM COMPARISON SWEEP
# ============================================

SWEEP_COLUMNS = [
    'sweep', 'mechanism', 'delta', 'gamma', 'mean_abs_error', 'max_abs_error',
    'predicted_alpha', 'empirical_beta', 'overflow_count',
]


def figure1_sweep(base, users=1000, data_value=1,
                  delta_grid=(0.1, 0.01, 0.001, 0.0001),
                  gamma_grid=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                  fixed_delta=0.001, mechanisms=Mechanism.ALL):
    """
    Mean absolute error of each mechanism over a delta sweep (gamma = 1)
    and a gamma sweep (delta = fixed_delta).

    base fixes epsilon, sensitivity and beta through base.privacy, plus
    runs / seed / pipeline. Every grid point reuses base.seed.

    Returns:
        DataFrame with SWEEP_COLUMNS
    """
    if base.privacy is None:
        raise ParameterError("figure1_sweep needs base privacy parameters")
    points = [('delta', d, 1.0) for d in delta_grid] + [('gamma', fixed_delta, g) for g in gamma_grid]
    rows = []
    for sweep, delta, gamma in points:
        pp = replace(base.privacy, delta=delta, gamma=gamma)
        population = Population(users, gamma, DataModel.CONSTANT, value=data_value)
        for mechanism in mechanisms:
            config = replace(base, mechanism=mechanism, privacy=pp)
            stats = run(config, population)
            alpha = accuracy_alpha(pp, mechanism)
            rows.append({
                'sweep': sweep,
                'mechanism': mechanism,
                'delta': delta,
                'gamma': gamma,
                'mean_abs_error': stats.mean_abs,
                'max_abs_error': stats.max_abs,
                'predicted_alpha': alpha,
                'empirical_beta': stats.empirical_beta(alpha),
                'overflow_count': stats.overflow_count,
            })
        logger.info(f"✅ Sweep point {sweep}: delta={delta}, gamma={gamma}")
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def write_csv(frame, path, **fixed):
    """CSV with one `# key=value` header line per fixed parameter"""
    with open(path, 'w', newline='') as f:
        for key, value in fixed.items():
            f.write(f"# {key}={value}\n")
        frame.to_csv(f, index=False)
    return path


def read_csv(path):
    """Inverse of write_csv: (frame, fixed-parameter dict of strings)"""
    fixed = {}
    with open(path, 'r') as f:
        for line in f:
            if not line.startswith('# '):
                break
            key, value = line[2:].rstrip('\n').split('=', 1)
            fixed[key] = value
    return pd.read_csv(path, comment='#'), fixed
