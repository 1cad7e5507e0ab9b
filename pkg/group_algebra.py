"""
Group Algebra
Big-integer modular arithmetic for the PSA schemes.

Features:
- Safe-prime search (p = 2q+1, both prime at error <= 2^-80)
- Generator search for QR_{p^2} (order pq) and for the order-q subgroup of Z_p*
- Square-and-multiply exponentiation (gmpy2) with instrumented op counters
- The mn-isomorphic embedding x -> 1 + p*x mod p^2 and its centered inverse
"""

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache

import gmpy2

from errors import AggregateOverflowError, ParameterError, PlaintextRangeError, PrimeSearchError

logger = logging.getLogger(__name__)

# 40 Miller-Rabin rounds: error <= 4^-40 = 2^-80
MR_ROUNDS = 40

# ============================================
# WELL-KNOWN SAFE PRIMES
# ============================================

# Oakley group 2 (RFC 2409) and MODP group 14 (RFC 3526). Both are safe primes.
STANDARD_SAFE_PRIMES_HEX = {
    1024: """
        FFFFFFFF FFFFFFFF C90FDAA2 2168C234 C4C6628B 80DC1CD1
        29024E08 8A67CC74 020BBEA6 3B139B22 514A0879 8E3404DD
        EF9519B3 CD3A431B 302B0A6D F25F1437 4FE1356D 6D51C245
        E485B576 625E7EC6 F44C42E9 A637ED6B 0BFF5CB6 F406B7ED
        EE386BFB 5A899FA5 AE9F2411 7C4B1FE6 49286651 ECE65381
        FFFFFFFF FFFFFFFF
    """,
    2048: """
        FFFFFFFF FFFFFFFF C90FDAA2 2168C234 C4C6628B 80DC1CD1
        29024E08 8A67CC74 020BBEA6 3B139B22 514A0879 8E3404DD
        EF9519B3 CD3A431B 302B0A6D F25F1437 4FE1356D 6D51C245
        E485B576 625E7EC6 F44C42E9 A637ED6B 0BFF5CB6 F406B7ED
        EE386BFB 5A899FA5 AE9F2411 7C4B1FE6 49286651 ECE45B3D
        C2007CB8 A163BF05 98DA4836 1C55D39A 69163FA8 FD24CF5F
        83655D23 DCA3AD96 1C62F356 208552BB 9ED52907 7096966D
        670C354E 4ABC9804 F1746C08 CA18217C 32905E46 2E36CE3B
        E39E772C 180E8603 9B2783A2 EC07A28F B5C55DF0 6F4C52C9
        DE2BCBF6 95581718 3995497C EA956AE5 15D22618 98FA0510
        15728E5A 8AACAA68 FFFFFFFF FFFFFFFF
    """,
}


# ============================================
# GROUP-OPERATION COUNTERS
# ============================================

class GroupOpTally:
    """Counts of group operations performed inside a count_group_ops() block"""

    def __init__(self):
        self.multiplications = 0
        self.exponentiations = 0

    @property
    def total(self):
        return self.multiplications + self.exponentiations

    def as_dict(self):
        return {
            'multiplications': self.multiplications,
            'exponentiations': self.exponentiations,
            'total': self.total,
        }


_active_tallies = threading.local()


@contextmanager
def count_group_ops():
    """
    Count group multiplications/exponentiations done by this thread.

    Usage:
        with count_group_ops() as tally:
            aggregate_decrypt(...)
        tally.total
    """
    stack = getattr(_active_tallies, 'stack', None)
    if stack is None:
        stack = []
        _active_tallies.stack = stack
    tally = GroupOpTally()
    stack.append(tally)
    try:
        yield tally
    finally:
        stack.remove(tally)


def record_group_ops(multiplications=0, exponentiations=0):
    """Add to every tally active on this thread"""
    for tally in getattr(_active_tallies, 'stack', ()):
        tally.multiplications += multiplications
        tally.exponentiations += exponentiations


# ============================================
# DOMAIN TYPES
# ============================================

@dataclass(frozen=True)
class SafePrimePair:
    p: int
    q: int

    def __post_init__(self):
        if self.p != 2 * self.q + 1:
            raise ParameterError(f"not a safe-prime pair: p={self.p} != 2*{self.q}+1")

    @property
    def bits(self):
        return self.p.bit_length()

    def verify(self):
        """Re-run the primality test on both members"""
        return is_probable_prime(self.q) and is_probable_prime(self.p)


@dataclass(frozen=True)
class GroupElement:
    """Residue coprime to its modulus (p^2 for the paper scheme, p for the baseline)"""
    value: int
    modulus: int

    def __post_init__(self):
        if not 0 < self.value < self.modulus:
            raise ParameterError(f"residue {self.value} outside [1, {self.modulus - 1}]")
        if gmpy2.gcd(self.value, self.modulus) != 1:
            raise ParameterError(f"residue {self.value} is not a unit mod {self.modulus}")

    def __mul__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        if other.modulus != self.modulus:
            raise ParameterError("cannot multiply elements of different groups")
        record_group_ops(multiplications=1)
        return GroupElement(self.value * other.value % self.modulus, self.modulus)

    def __pow__(self, exp):
        return mod_pow(self, exp)

    def inverse(self):
        record_group_ops(exponentiations=1)
        return GroupElement(int(gmpy2.invert(self.value, self.modulus)), self.modulus)

    def is_identity(self):
        return self.value == 1


@dataclass(frozen=True)
class Exponent:
    """Residue in [0, order): user keys, the aggregator key and time-step exponents"""
    value: int
    order: int

    def __post_init__(self):
        if not 0 <= self.value < self.order:
            raise ParameterError(f"exponent {self.value} outside [0, {self.order - 1}]")

    def __int__(self):
        return self.value


def identity(modulus):
    return GroupElement(1, modulus)


# ============================================
# RANDOMNESS
# ============================================

def random_below(rng, bound):
    """
    Uniform integer in [0, bound) drawn from a numpy Generator.

    Rejection sampling over rng.bytes() keeps the draw exact for big bounds.
    """
    if bound < 1:
        raise ParameterError(f"random_below needs a positive bound, got {bound}")
    if bound == 1:
        return 0
    nbits = (bound - 1).bit_length()
    nbytes = (nbits + 7) // 8
    mask = (1 << nbits) - 1
    while True:
        value = int.from_bytes(rng.bytes(nbytes), 'big') & mask
        if value < bound:
            return value


# ============================================
# PRIMES AND GENERATORS
# ============================================

def is_probable_prime(n):
    """Miller-Rabin with MR_ROUNDS rounds (gmpy2)"""
    if n < 2:
        return False
    return bool(gmpy2.is_prime(n, MR_ROUNDS))


def gen_safe_prime(bits, q_min, rng, max_attempts=None):
    """
    Find a safe-prime pair (p, q) with p of exactly `bits` bits and q > q_min.

    q is drawn uniformly among (bits-1)-bit integers above q_min, then q and
    2q+1 are tested.

    Raises:
        ParameterError: infeasible bits/q_min combination
        PrimeSearchError: retry budget exhausted (reports attempts)
    """
    if bits < 3:
        raise ParameterError(f"safe primes need at least 3 bits, got {bits}")
    if q_min < 1:
        q_min = 1
    q_hi = 1 << (bits - 1)
    if q_min >= q_hi:
        raise ParameterError(f"q_min={q_min} does not fit below 2^{bits - 1}")
    q_lo = max(q_min + 1, 1 << (bits - 2))
    if q_lo >= q_hi:
        raise ParameterError(f"no {bits}-bit safe prime can have q > {q_min}")

    budget = max_attempts or 64 * bits * bits
    for attempt in range(1, budget + 1):
        q = (q_lo + random_below(rng, q_hi - q_lo)) | 1
        if q >= q_hi or q <= q_min:
            continue
        # q = 1 mod 3 makes 3 | 2q+1
        if q > 3 and q % 3 == 1:
            continue
        if not is_probable_prime(q):
            continue
        p = 2 * q + 1
        if is_probable_prime(p):
            logger.debug(f"✅ {bits}-bit safe prime found after {attempt} attempts")
            return SafePrimePair(p, q)

    logger.warning(f"⚠️  No {bits}-bit safe prime with q > {q_min} after {budget} attempts")
    raise PrimeSearchError(
        f"no {bits}-bit safe prime with q > {q_min} found in {budget} attempts",
        attempts=budget,
    )


@lru_cache(maxsize=None)
def standard_safe_prime(bits):
    """
    Well-known MODP safe prime of the given size, or None.

    The primality of p and q is re-checked the first time each size is used.
    """
    raw = STANDARD_SAFE_PRIMES_HEX.get(bits)
    if raw is None:
        return None
    p = int(''.join(raw.split()), 16)
    pair = SafePrimePair(p, (p - 1) // 2)
    if pair.bits != bits or not pair.verify():
        logger.warning(f"⚠️  Built-in {bits}-bit MODP prime failed verification, ignoring it")
        return None
    return pair


def square_to_generator(h, pair):
    """
    g = h^2 mod p^2 if it has order exactly p*q, else None.

    Squares lie in QR_{p^2} (order pq); g != 1, g^p != 1 and g^q != 1 force
    the full order.
    """
    p, q = pair.p, pair.q
    p2 = p * p
    if h % p == 0:
        return None
    g = h * h % p2
    record_group_ops(multiplications=1, exponentiations=2)
    if g == 1 or gmpy2.powmod(g, p, p2) == 1 or gmpy2.powmod(g, q, p2) == 1:
        return None
    return GroupElement(g, p2)


def find_generator(pair, rng, max_attempts=64):
    """Random generator of QR_{p^2} (multiplicative order p*q)"""
    p2 = pair.p * pair.p
    for _ in range(max_attempts):
        g = square_to_generator(2 + random_below(rng, p2 - 2), pair)
        if g is not None:
            return g
    raise PrimeSearchError(f"no generator of QR_p^2 found in {max_attempts} attempts",
                           attempts=max_attempts)


def find_subgroup_generator(pair, rng, max_attempts=64):
    """Random generator of the order-q subgroup of Z_p* (baseline group)"""
    p = pair.p
    for _ in range(max_attempts):
        h = 2 + random_below(rng, p - 3)
        g = h * h % p
        if g != 1:
            return GroupElement(g, p)
    raise PrimeSearchError(f"no generator of the order-q subgroup found in {max_attempts} attempts",
                           attempts=max_attempts)


# ============================================
# ARITHMETIC
# ============================================

def mod_pow(base, exp):
    """base^exp in base's group; negative exponents go through the inverse"""
    e = int(exp)
    if e < 0:
        return mod_pow(base.inverse(), -e)
    record_group_ops(exponentiations=1)
    return GroupElement(int(gmpy2.powmod(base.value, e, base.modulus)), base.modulus)


def embed(x, params):
    """phi(x) = 1 + p*x mod p^2, defined for |x| <= m*n"""
    bound = params.decode_bound
    if abs(x) > bound:
        raise PlaintextRangeError(f"value {x} outside embedding range [-{bound}, {bound}]")
    p = params.p
    p2 = p * p
    return GroupElement((1 + p * x) % p2, p2)


def unembed(X, params):
    """
    Inverse of embed: recover S from X = 1 + p*S mod p^2 (centered decode).

    Raises:
        AggregateOverflowError: X is not in the embedding image or |S| > m*n
    """
    p = params.p
    p2 = p * p
    value = X.value if isinstance(X, GroupElement) else int(X)
    value %= p2
    if value == 0:
        value = p2
    u, rem = divmod(value - 1, p)
    if rem != 0:
        raise AggregateOverflowError("aggregate is not in the image of the embedding")
    total = u if u <= (p - 1) // 2 else u - p
    bound = params.decode_bound
    if abs(total) > bound:
        raise AggregateOverflowError(f"decoded aggregate {total} exceeds m*n = {bound}")
    return total
