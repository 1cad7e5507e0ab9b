"""
PSA Benchmarks
Median wall-clock and group-operation counts for encryption and decryption.

Features:
- Encryption cells per (scheme, bits) including the PRF exponentiation, over a bits grid
- Decryption cells per plaintext bound m (the baseline's cost grows with m*n)
- Brute-force or kangaroo discrete log for the baseline
- Timing tables as pandas frames / CSV
"""

import logging
import statistics
import time
from dataclasses import replace

import numpy as np
import pandas as pd

from discrete_log import BRUTE
from errors import ParameterError
from group_algebra import count_group_ops
from psa_protocol import Scheme, aggregate_decrypt, derive_timestep, encrypt, prf_eval, setup

logger = logging.getLogger(__name__)

ENC = "enc"
DEC = "dec"
OPS = (ENC, DEC)

BENCH_COLUMNS = ['scheme', 'op', 'bits', 'n', 'm', 'median_ms', 'group_ops']


def format_ms(seconds):
    return str(round(seconds * 1000.0, 3))


def _median_seconds(fn, iterations):
    samples = []
    for _ in range(iterations):
        started = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - started)
    return statistics.median(samples)


def _count_ops(fn):
    with count_group_ops() as tally:
        fn()
    return tally.total


def _bits_grid(bits):
    if isinstance(bits, (int, np.integer)):
        return [bits]
    grid = sorted(set(int(b) for b in bits))
    if not grid:
        raise ParameterError("bits grid is empty")
    return grid


def bench(scheme, op, bits, n, m_grid, iterations=20, strategy=BRUTE, seed=0,
          standard_prime=True):
    """
    Timing table for one (scheme, op, n) over bit lengths and plaintext bounds.

    bits is one bit length or a list of them (the encryption table runs over
    1024 and 2048). For each bit length keys are generated once for
    max(m_grid) and every cell reuses them with its own m. For dec, every
    user's value is uniform in [0, m] and the ciphertexts are built once per
    cell; only aggregate_decrypt is timed.

    Returns:
        DataFrame with BENCH_COLUMNS, one row per (bits, m)
    """
    if scheme not in Scheme.ALL:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if op not in OPS:
        raise ParameterError(f"unknown benchmark op {op!r}")
    if iterations < 1:
        raise ParameterError(f"iterations must be >= 1, got {iterations}")
    m_grid = sorted(set(int(m) for m in m_grid))
    if not m_grid or m_grid[0] < 1:
        raise ParameterError("m_grid needs positive plaintext bounds")

    rng = np.random.default_rng(seed)
    rows = []
    for size in _bits_grid(bits):
        rows.extend(_bench_rows(scheme, op, size, n, m_grid, iterations, strategy, rng,
                                standard_prime))
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def _bench_rows(scheme, op, bits, n, m_grid, iterations, strategy, rng, standard_prime):
    base, agg_key, user_keys = setup(bits, n, m_grid[-1], 1, rng, scheme=scheme,
                                     standard_prime=standard_prime)
    ts = derive_timestep(base, 0)
    masks = None

    rows = []
    for m in m_grid:
        params = replace(base, m=m)
        if op == ENC:
            key = user_keys[0]
            x = int(rng.integers(0, m, endpoint=True))

            def cell():
                encrypt(key, ts, x, params)
        else:
            if masks is None:
                masks = [prf_eval(key.secret, ts, base) for key in user_keys]
            values = rng.integers(0, m, size=n, endpoint=True)
            cts = [encrypt(key, ts, int(x), params, mask=mask)
                   for key, x, mask in zip(user_keys, values, masks)]

            def cell():
                aggregate_decrypt(agg_key, ts, cts, params, strategy)

        group_ops = _count_ops(cell)
        seconds = _median_seconds(cell, iterations)
        rows.append({
            'scheme': scheme,
            'op': op,
            'bits': params.security_bits,
            'n': n,
            'm': m,
            'median_ms': seconds * 1000.0,
            'group_ops': group_ops,
        })
        logger.info(f"✅ {scheme} {op} bits={params.security_bits} n={n} m={m}: "
                    f"{format_ms(seconds)} ms, {group_ops} group ops")
    return rows


def write_bench_csv(frame, path):
    frame.to_csv(path, index=False)
    return path
