"""Shared fixtures: toy safe-prime groups, seeded generators, chi-square helper"""

import os
import sys

import numpy as np
import pytest
from scipy.stats import chisquare

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from group_algebra import SafePrimePair
from psa_protocol import Scheme, setup

# p = 23, q = 11: q > m*n for n = 3, m = 2
TOY_PAIR = (23, 11)
# p = 47, q = 23: q > 2*m*n, what the baseline needs at n = 3, m = 2
BASELINE_PAIR = (47, 23)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def toy_pair():
    return SafePrimePair(*TOY_PAIR)


@pytest.fixture
def baseline_pair():
    return SafePrimePair(*BASELINE_PAIR)


@pytest.fixture
def toy_setup(toy_pair):
    """(params, agg_key, user_keys) for the paper scheme, n=3, m=2, 4 time-steps"""
    return setup(5, 3, 2, 4, np.random.default_rng(7), pair=toy_pair)


@pytest.fixture
def baseline_setup(baseline_pair):
    return setup(6, 3, 2, 4, np.random.default_rng(7), scheme=Scheme.BASELINE, pair=baseline_pair)


def binned_chi_square_pvalue(samples, pmf, lo, hi, min_expected=5.0):
    """
    Chi-square p-value of integer samples against pmf on [lo, hi].

    Samples outside the range are folded into the edge bins; adjacent
    values are merged until each bin expects at least min_expected hits.
    """
    samples = np.clip(np.asarray(samples, dtype=np.int64), lo, hi)
    total = samples.size
    ks = np.arange(lo, hi + 1)
    probs = np.array([pmf(int(k)) for k in ks], dtype=np.float64)
    probs /= probs.sum()
    counts = np.bincount(samples - lo, minlength=ks.size)

    observed, expected = [], []
    obs_acc = exp_acc = 0.0
    for count, prob in zip(counts, probs):
        obs_acc += count
        exp_acc += prob * total
        if exp_acc >= min_expected:
            observed.append(obs_acc)
            expected.append(exp_acc)
            obs_acc = exp_acc = 0.0
    observed[-1] += obs_acc
    expected[-1] += exp_acc
    return chisquare(observed, expected).pvalue


@pytest.fixture
def chi_square():
    return binned_chi_square_pvalue
