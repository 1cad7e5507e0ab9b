"""
Range Discrete Logarithm
Decryption helper for the baseline scheme: find x with g^x = h and |x| <= bound.

Strategies:
- brute:  scan x = 0, +1, -1, +2, -2, ... (group ops linear in |x|)
- lambda: Pollard's kangaroo over [-bound, bound] (expected O(sqrt(bound)) ops)
"""

import logging
from math import isqrt

import gmpy2

from errors import DiscreteLogNotFoundError, ParameterError
from group_algebra import record_group_ops

logger = logging.getLogger(__name__)

BRUTE = 'brute'
LAMBDA = 'lambda'
STRATEGIES = (BRUTE, LAMBDA)

# Below this interval width the kangaroo walk is not worth setting up
LAMBDA_MIN_WIDTH = 64
LAMBDA_ATTEMPTS = 8

_LOW_64 = (1 << 64) - 1


def discrete_log_range(h, g, bound, strategy=BRUTE):
    """
    Solve g^x = h for x in [-bound, bound].

    Raises:
        DiscreteLogNotFoundError: no solution in range (aggregate overflow or
            inconsistent inputs)
    """
    if h.modulus != g.modulus:
        raise ParameterError("h and g live in different groups")
    if bound < 0:
        raise ParameterError(f"bound must be nonnegative, got {bound}")
    if strategy == BRUTE:
        return _brute_force(h, g, bound)
    if strategy == LAMBDA:
        return _kangaroo(h, g, bound)
    raise ParameterError(f"unknown discrete-log strategy {strategy!r}")


def _brute_force(h, g, bound):
    modulus = gmpy2.mpz(g.modulus)
    target = gmpy2.mpz(h.value)
    if target == 1:
        return 0

    step_up = gmpy2.mpz(g.value)
    step_down = gmpy2.invert(step_up, modulus)
    up = down = gmpy2.mpz(1)
    mults = 0
    try:
        for x in range(1, bound + 1):
            up = up * step_up % modulus
            down = down * step_down % modulus
            mults += 2
            if up == target:
                return x
            if down == target:
                return -x
    finally:
        record_group_ops(multiplications=mults, exponentiations=1)

    raise DiscreteLogNotFoundError(f"no discrete log in [-{bound}, {bound}]")


def _jump_count(width):
    """Smallest k such that the mean jump (2^k - 1)/k reaches sqrt(width)/2"""
    target = max(1, isqrt(width) // 2)
    k = 2
    while ((1 << k) - 1) // k < target:
        k += 1
    return k


def _kangaroo(h, g, bound):
    width = 2 * bound
    if width < LAMBDA_MIN_WIDTH:
        return _brute_force(h, g, bound)

    modulus = gmpy2.mpz(g.modulus)
    base = gmpy2.mpz(g.value)
    # shift so the unknown exponent lies in [0, width]
    target = gmpy2.mpz(h.value) * gmpy2.powmod(base, bound, modulus) % modulus
    k = _jump_count(width)
    jumps = [gmpy2.powmod(base, 1 << i, modulus) for i in range(k)]
    mean_jump = ((1 << k) - 1) // k
    tame_steps = 4 * mean_jump
    mults = 0
    exps = 2 + k

    try:
        for salt in range(LAMBDA_ATTEMPTS):
            def jump(y):
                return hash((int(y) & _LOW_64, salt)) % k

            tame = gmpy2.powmod(base, width, modulus)
            exps += 1
            tame_dist = 0
            for _ in range(tame_steps):
                i = jump(tame)
                tame_dist += 1 << i
                tame = tame * jumps[i] % modulus
            mults += tame_steps

            wild = target
            wild_dist = 0
            limit = width + tame_dist
            while wild_dist <= limit:
                if wild == tame:
                    x = width + tame_dist - wild_dist
                    exps += 1
                    if 0 <= x <= width and gmpy2.powmod(base, x, modulus) == target:
                        return x - bound
                    break
                i = jump(wild)
                wild_dist += 1 << i
                wild = wild * jumps[i] % modulus
                mults += 1
            logger.debug(f"kangaroo walk {salt} missed, retrying with a new jump map")
    finally:
        record_group_ops(multiplications=mults, exponentiations=exps)

    logger.warning(f"⚠️  Kangaroo walks failed for bound {bound}, falling back to a full scan")
    return _brute_force(h, g, bound)
