"""
Private Stream Aggregation Protocol
Setup / encryption / aggregate decryption for sum queries.

Two schemes share one interface:
- paper:    c = t^{s_i} * (1 + p*x) mod p^2, decryption is (X - 1)/p
- baseline: c = t^{s_i} * g^x mod p, decryption is a range discrete log

Setup is a trusted-dealer simulation: it draws s_1..s_n and the canceling
aggregator key s = -sum(s_i). Time-steps are derived from a public seed so
every party agrees on t without talking to each other.
"""

import hashlib
import logging
import os
from dataclasses import dataclass
from functools import reduce

from discrete_log import BRUTE, discrete_log_range
from errors import (
    DuplicateCiphertextError, MissingCiphertextError, ParameterError, ParseError,
    PlaintextRangeError, TimestepMismatchError,
)
from group_algebra import (
    Exponent, GroupElement, SafePrimePair, embed, find_generator, find_subgroup_generator,
    gen_safe_prime, mod_pow, random_below, standard_safe_prime, unembed,
)
from wire_format import (
    RECORD_AGGREGATOR_KEY, RECORD_CIPHERTEXT, RECORD_PARAMS, RECORD_USER_KEY,
    WireReader, WireWriter, load_record,
)

logger = logging.getLogger(__name__)


class Scheme:
    PAPER = "paper"
    BASELINE = "baseline"
    ALL = (PAPER, BASELINE)


SEED_BYTES = 32

# File names used by keygen / encrypt / aggregate
PARAMS_FILE = 'params.psa'
AGG_KEY_FILE = 'agg.key'


def user_key_filename(index):
    return f"user_{index}.key"


def ciphertext_filename(user, timestep):
    return f"ct_{user}_{timestep}.bin"


# ============================================
# DOMAIN TYPES
# ============================================

@dataclass(frozen=True)
class SchemeParams:
    """Public parameters shared by all parties"""
    scheme: str
    pair: SafePrimePair
    g: GroupElement
    n: int
    m: int
    timestep_seed: bytes
    num_timesteps: int
    security_bits: int

    def __post_init__(self):
        if self.scheme not in Scheme.ALL:
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.n < 1 or self.m < 1 or self.num_timesteps < 1:
            raise ParameterError("n, m and num_timesteps must all be >= 1")
        if len(self.timestep_seed) != SEED_BYTES:
            raise ParameterError(f"timestep seed must be {SEED_BYTES} bytes")
        if self.g.modulus != self.modulus:
            raise ParameterError("generator does not belong to the scheme's group")
        q_min = required_q_min(self.scheme, self.n, self.m)
        if self.pair.q <= q_min:
            raise ParameterError(
                f"q = {self.pair.q} must exceed {q_min} for the {self.scheme} scheme "
                f"(n={self.n}, m={self.m})")

    @property
    def p(self):
        return self.pair.p

    @property
    def q(self):
        return self.pair.q

    @property
    def modulus(self):
        return self.p * self.p if self.scheme == Scheme.PAPER else self.p

    @property
    def key_order(self):
        """Order of the exponent group: pq (paper) or q (baseline)"""
        return self.p * self.q if self.scheme == Scheme.PAPER else self.q

    @property
    def decode_bound(self):
        return self.m * self.n


@dataclass(frozen=True)
class UserKey:
    index: int
    secret: Exponent


@dataclass(frozen=True)
class AggregatorKey:
    secret: Exponent


@dataclass(frozen=True)
class TimeStep:
    index: int
    t: GroupElement


@dataclass(frozen=True)
class Ciphertext:
    user: int
    timestep: int
    c: GroupElement


def required_q_min(scheme, n, m):
    """
    q must exceed this value.

    The baseline decodes by discrete log in an order-q group, so [-mn, mn]
    must not wrap around modulo q.
    """
    return m * n if scheme == Scheme.PAPER else 2 * m * n


# ============================================
# SETUP
# ============================================

def setup(security_bits, n, m, num_timesteps, rng, scheme=Scheme.PAPER, pair=None,
          standard_prime=False):
    """
    Trusted-dealer key ceremony.

    Args:
        security_bits: bit length of p
        n: number of users
        m: plaintext bound (values in {-m, ..., m})
        num_timesteps: number of derivable time-steps
        rng: numpy Generator (all randomness comes from it)
        scheme: Scheme.PAPER or Scheme.BASELINE
        pair: optional fixed SafePrimePair (test fixtures)
        standard_prime: use a well-known MODP safe prime when one has this size

    Returns:
        (SchemeParams, AggregatorKey, [UserKey for users 1..n])
    """
    if scheme not in Scheme.ALL:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if n < 1 or m < 1 or num_timesteps < 1:
        raise ParameterError("n, m and num_timesteps must all be >= 1")
    q_min = required_q_min(scheme, n, m)

    if pair is None and standard_prime:
        pair = standard_safe_prime(security_bits)
        if pair is not None and pair.q <= q_min:
            pair = None
        if pair is not None:
            logger.info(f"✅ Using built-in {security_bits}-bit MODP safe prime")
    if pair is None:
        pair = gen_safe_prime(security_bits, q_min, rng)
    elif pair.q <= q_min:
        raise ParameterError(f"q = {pair.q} must exceed {q_min} (n={n}, m={m})")

    if scheme == Scheme.PAPER:
        g = find_generator(pair, rng)
        order = pair.p * pair.q
    else:
        g = find_subgroup_generator(pair, rng)
        order = pair.q

    user_keys = []
    total = 0
    for index in range(1, n + 1):
        s_i = random_below(rng, order)
        total += s_i
        user_keys.append(UserKey(index, Exponent(s_i, order)))
    agg_key = AggregatorKey(Exponent((-total) % order, order))

    params = SchemeParams(
        scheme=scheme,
        pair=pair,
        g=g,
        n=n,
        m=m,
        timestep_seed=bytes(rng.bytes(SEED_BYTES)),
        num_timesteps=num_timesteps,
        security_bits=pair.bits,
    )
    logger.info(f"✅ Setup complete: {scheme} scheme, {pair.bits}-bit p, n={n}, m={m}, "
                f"q > {q_min} holds")
    return params, agg_key, user_keys


def verify_params(params):
    """
    Re-check public parameters loaded from elsewhere.

    Returns:
        list of problems (empty when p, q are prime and g has the right order)
    """
    problems = []
    if not params.pair.verify():
        problems.append("p or q failed the primality test")
    g = params.g.value
    if params.scheme == Scheme.PAPER:
        p2 = params.modulus
        if g == 1 or pow(g, params.p, p2) == 1 or pow(g, params.q, p2) == 1:
            problems.append("g does not have order p*q")
        elif pow(g, params.p * params.q, p2) != 1:
            problems.append("g is not a quadratic residue mod p^2")
    elif g == 1 or pow(g, params.q, params.p) != 1:
        problems.append("g does not generate the order-q subgroup")
    return problems


# ============================================
# TIME-STEPS AND PRF
# ============================================

def _drbg_exponent(seed, index, order):
    """index-th draw of a counter-mode SHA-256 DRBG, mapped into [1, order-1]"""
    blocks = (order.bit_length() + 128 + 255) // 256
    stream = b''.join(
        hashlib.sha256(b'psa-timestep' + seed + index.to_bytes(8, 'big') + ctr.to_bytes(4, 'big')).digest()
        for ctr in range(blocks)
    )
    return int.from_bytes(stream, 'big') % (order - 1) + 1


def derive_timestep(params, index):
    """t_index = g^(r_index), r_index drawn from the seeded DRBG"""
    if not 0 <= index < params.num_timesteps:
        raise ParameterError(f"time-step {index} outside [0, {params.num_timesteps})")
    r = _drbg_exponent(params.timestep_seed, index, params.key_order)
    return TimeStep(index, mod_pow(params.g, r))


def prf_eval(key, t, params):
    """F_key(t) = t^key mod p^2 (paper) or mod p (baseline)"""
    element = t.t if isinstance(t, TimeStep) else t
    if element.modulus != params.modulus:
        raise ParameterError("time-step element does not belong to the scheme's group")
    return mod_pow(element, int(key))


def _encode_plaintext(x, params):
    if params.scheme == Scheme.PAPER:
        return embed(x, params)
    return mod_pow(params.g, x)


def encrypt(key, t, x, params, mask=None):
    """
    Encrypt one user's value for one time-step.

    Args:
        key: UserKey
        t: TimeStep
        x: integer with |x| <= m
        params: SchemeParams
        mask: optional precomputed prf_eval(key.secret, t, params)

    Raises:
        PlaintextRangeError: |x| > m
    """
    x = int(x)
    if abs(x) > params.m:
        raise PlaintextRangeError(f"plaintext {x} outside [-{params.m}, {params.m}]")
    if mask is None:
        mask = prf_eval(key.secret, t, params)
    return Ciphertext(key.index, t.index, mask * _encode_plaintext(x, params))


# ============================================
# AGGREGATION
# ============================================

def fold_ciphertexts(key, t, cts, params):
    """F_s(t) * prod(c_i) with no completeness checks"""
    start = prf_eval(key.secret, t, params)
    return reduce(lambda acc, ct: acc * ct.c, cts, start)


def decode_aggregate(X, params, strategy=BRUTE):
    """Recover the integer sum from the folded group element"""
    if params.scheme == Scheme.PAPER:
        return unembed(X, params)
    return discrete_log_range(X, params.g, params.decode_bound, strategy)


def check_ciphertext_set(t, cts, params):
    """Exactly one ciphertext per user 1..n, all for time-step t"""
    wrong_step = sorted({ct.timestep for ct in cts if ct.timestep != t.index})
    if wrong_step:
        raise TimestepMismatchError(
            f"ciphertexts for time-step(s) {wrong_step} mixed into time-step {t.index}")

    seen = set()
    duplicates = set()
    for ct in cts:
        if not 1 <= ct.user <= params.n:
            raise ParameterError(f"unknown user index {ct.user} (n={params.n})")
        if ct.user in seen:
            duplicates.add(ct.user)
        seen.add(ct.user)
    if duplicates:
        raise DuplicateCiphertextError(duplicates)
    missing = set(range(1, params.n + 1)) - seen
    if missing:
        raise MissingCiphertextError(missing)


def aggregate_decrypt(key, t, cts, params, strategy=BRUTE):
    """
    Decrypt the sum of all users' values for time-step t.

    Raises:
        MissingCiphertextError / DuplicateCiphertextError / TimestepMismatchError
        AggregateOverflowError: paper-scheme decode out of range
        DiscreteLogNotFoundError: baseline decode out of range
    """
    cts = list(cts)
    check_ciphertext_set(t, cts, params)
    return decode_aggregate(fold_ciphertexts(key, t, cts, params), params, strategy)


# ============================================
# SERIALIZATION
# ============================================

_SCHEME_CODES = {Scheme.PAPER: 0, Scheme.BASELINE: 1}
_SCHEME_NAMES = {code: name for name, code in _SCHEME_CODES.items()}


def serialize_params(params):
    return (WireWriter(RECORD_PARAMS)
            .int(_SCHEME_CODES[params.scheme])
            .int(params.p)
            .int(params.q)
            .int(params.g.value)
            .int(params.n)
            .int(params.m)
            .bytes(params.timestep_seed)
            .int(params.num_timesteps)
            .int(params.security_bits)
            .getvalue())


def parse_params(data):
    reader = WireReader(load_record(data), RECORD_PARAMS)
    scheme_code = reader.int('scheme')
    if scheme_code not in _SCHEME_NAMES:
        raise ParseError(f"unknown scheme code {scheme_code}", reader.offset)
    p = reader.int('p')
    q = reader.int('q')
    g = reader.int('g')
    n = reader.int('n')
    m = reader.int('m')
    seed = reader.bytes('timestep seed')
    num_timesteps = reader.int('num_timesteps')
    security_bits = reader.int('security_bits')
    reader.finish()
    scheme = _SCHEME_NAMES[scheme_code]
    try:
        modulus = p * p if scheme == Scheme.PAPER else p
        return SchemeParams(scheme, SafePrimePair(p, q), GroupElement(g, modulus),
                            n, m, seed, num_timesteps, security_bits)
    except ParameterError as e:
        raise ParseError(f"inconsistent params record: {e}", reader.offset)


def serialize_user_key(key):
    return (WireWriter(RECORD_USER_KEY)
            .int(key.index)
            .int(key.secret.order)
            .int(key.secret.value)
            .getvalue())


def parse_user_key(data):
    reader = WireReader(load_record(data), RECORD_USER_KEY)
    index = reader.int('user index')
    order = reader.int('key order')
    value = reader.int('key')
    reader.finish()
    try:
        return UserKey(index, Exponent(value, order))
    except ParameterError as e:
        raise ParseError(f"inconsistent user key: {e}", reader.offset)


def serialize_aggregator_key(key):
    return (WireWriter(RECORD_AGGREGATOR_KEY)
            .int(key.secret.order)
            .int(key.secret.value)
            .getvalue())


def parse_aggregator_key(data):
    reader = WireReader(load_record(data), RECORD_AGGREGATOR_KEY)
    order = reader.int('key order')
    value = reader.int('key')
    reader.finish()
    try:
        return AggregatorKey(Exponent(value, order))
    except ParameterError as e:
        raise ParseError(f"inconsistent aggregator key: {e}", reader.offset)


def serialize_ciphertext(ct):
    return (WireWriter(RECORD_CIPHERTEXT)
            .int(ct.user)
            .int(ct.timestep)
            .int(ct.c.modulus)
            .int(ct.c.value)
            .getvalue())


def parse_ciphertext(data):
    reader = WireReader(load_record(data), RECORD_CIPHERTEXT)
    user = reader.int('user index')
    timestep = reader.int('time-step')
    modulus = reader.int('modulus')
    value = reader.int('ciphertext')
    reader.finish()
    try:
        return Ciphertext(user, timestep, GroupElement(value, modulus))
    except ParameterError as e:
        raise ParseError(f"inconsistent ciphertext: {e}", reader.offset)


_SERIALIZERS = {
    SchemeParams: serialize_params,
    UserKey: serialize_user_key,
    AggregatorKey: serialize_aggregator_key,
    Ciphertext: serialize_ciphertext,
}


def serialize(obj):
    """Serialize any protocol object"""
    try:
        return _SERIALIZERS[type(obj)](obj)
    except KeyError:
        raise ParameterError(f"cannot serialize {type(obj).__name__}")


# ============================================
# FILES
# ============================================

def _write(path, data):
    with open(path, 'wb') as f:
        f.write(data)
    return path


def _read(path):
    with open(path, 'rb') as f:
        return f.read()


def write_keygen_files(out_dir, params, agg_key, user_keys):
    """Write params.psa, agg.key and user_<i>.key; returns the paths"""
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        _write(os.path.join(out_dir, PARAMS_FILE), serialize_params(params)),
        _write(os.path.join(out_dir, AGG_KEY_FILE), serialize_aggregator_key(agg_key)),
    ]
    for key in user_keys:
        paths.append(_write(os.path.join(out_dir, user_key_filename(key.index)),
                            serialize_user_key(key)))
    return paths


def write_ciphertext(out_dir, ct):
    os.makedirs(out_dir, exist_ok=True)
    return _write(os.path.join(out_dir, ciphertext_filename(ct.user, ct.timestep)),
                  serialize_ciphertext(ct))


def read_params(path):
    return parse_params(_read(path))


def read_user_key(path):
    return parse_user_key(_read(path))


def read_aggregator_key(path):
    return parse_aggregator_key(_read(path))


def read_ciphertext(path):
    return parse_ciphertext(_read(path))
