import itertools
import os

import numpy as np
import pytest

from discrete_log import LAMBDA
from errors import (
    AggregateOverflowError, DiscreteLogNotFoundError, DuplicateCiphertextError,
    MissingCiphertextError, ParameterError, ParseError, PlaintextRangeError, TimestepMismatchError,
)
from group_algebra import GroupElement, SafePrimePair, count_group_ops, standard_safe_prime
from psa_protocol import (
    AGG_KEY_FILE, PARAMS_FILE, Scheme, SchemeParams, aggregate_decrypt, ciphertext_filename, decode_aggregate,
    derive_timestep, encrypt, fold_ciphertexts, parse_aggregator_key, parse_ciphertext,
    parse_params, parse_user_key, prf_eval, read_aggregator_key, read_ciphertext, read_params,
    read_user_key, serialize, serialize_ciphertext, serialize_params, setup, user_key_filename,
    verify_params, write_ciphertext, write_keygen_files,
)
from wire_format import RECORD_PARAMS, WireWriter


def _encrypt_all(user_keys, ts, values, params):
    return [encrypt(key, ts, x, params) for key, x in zip(user_keys, values)]


@pytest.mark.parametrize('fixture', ['toy_setup', 'baseline_setup'])
def test_exhaustive_toy_round_trip(fixture, request):
    params, agg_key, user_keys = request.getfixturevalue(fixture)
    ts = derive_timestep(params, 0)
    for values in itertools.product(range(-2, 3), repeat=3):
        cts = _encrypt_all(user_keys, ts, values, params)
        assert aggregate_decrypt(agg_key, ts, cts, params) == sum(values)


def test_keys_cancel(toy_setup):
    params, agg_key, user_keys = toy_setup
    total = int(agg_key.secret) + sum(int(k.secret) for k in user_keys)
    assert total % params.key_order == 0
    assert params.key_order == 23 * 11


@pytest.mark.parametrize('fixture', ['toy_setup', 'baseline_setup'])
def test_prf_masks_cancel_at_every_timestep(fixture, request):
    params, agg_key, user_keys = request.getfixturevalue(fixture)
    for index in range(params.num_timesteps):
        ts = derive_timestep(params, index)
        product = prf_eval(agg_key.secret, ts, params)
        for key in user_keys:
            product = product * prf_eval(key.secret, ts, params)
        assert product.is_identity()


@pytest.mark.parametrize('scheme', Scheme.ALL)
def test_dropping_any_ciphertext_breaks_the_sum(scheme):
    rng = np.random.default_rng(31)
    n, m = 20, 5
    params, agg_key, user_keys = setup(64, n, m, 1, rng, scheme=scheme)
    ts = derive_timestep(params, 0)
    values = [int(x) for x in rng.integers(-m, m, size=n, endpoint=True)]
    cts = _encrypt_all(user_keys, ts, values, params)
    for dropped in range(n):
        rest = cts[:dropped] + cts[dropped + 1:]
        X = fold_ciphertexts(agg_key, ts, rest, params)
        try:
            decoded = decode_aggregate(X, params)
        except (AggregateOverflowError, DiscreteLogNotFoundError):
            continue
        assert decoded != sum(values)


def test_setup_refuses_small_q(toy_pair, rng):
    # m*n = 12 > q = 11
    with pytest.raises(ParameterError):
        setup(5, 3, 4, 1, rng, pair=toy_pair)
    # the baseline needs q > 2*m*n = 12
    with pytest.raises(ParameterError):
        setup(5, 3, 2, 1, rng, scheme=Scheme.BASELINE, pair=toy_pair)


def test_setup_rejects_bad_counts(rng):
    with pytest.raises(ParameterError):
        setup(64, 0, 2, 1, rng)
    with pytest.raises(ParameterError):
        setup(64, 3, 2, 1, rng, scheme='paillier')


def test_setup_is_seed_deterministic():
    a = setup(64, 4, 10, 2, np.random.default_rng(11))
    b = setup(64, 4, 10, 2, np.random.default_rng(11))
    assert serialize_params(a[0]) == serialize_params(b[0])
    assert a[1] == b[1]
    assert a[2] == b[2]


def test_derive_timestep(toy_setup):
    params = toy_setup[0]
    assert derive_timestep(params, 1) == derive_timestep(params, 1)
    assert derive_timestep(params, 3).index == 3
    with pytest.raises(ParameterError):
        derive_timestep(params, 4)
    with pytest.raises(ParameterError):
        derive_timestep(params, -1)


def test_encrypt_rejects_out_of_range(toy_setup):
    params, _, user_keys = toy_setup
    ts = derive_timestep(params, 0)
    with pytest.raises(PlaintextRangeError):
        encrypt(user_keys[0], ts, 3, params)
    with pytest.raises(PlaintextRangeError):
        encrypt(user_keys[0], ts, -3, params)


def test_precomputed_mask_matches(toy_setup):
    params, _, user_keys = toy_setup
    ts = derive_timestep(params, 2)
    mask = prf_eval(user_keys[1].secret, ts, params)
    assert encrypt(user_keys[1], ts, -1, params, mask=mask) == encrypt(user_keys[1], ts, -1, params)


def test_paper_decryption_is_a_single_exponentiation():
    params, agg_key, user_keys = setup(64, 50, 1000, 1, np.random.default_rng(5))
    ts = derive_timestep(params, 0)
    cts = _encrypt_all(user_keys, ts, [1000] * 50, params)
    with count_group_ops() as tally:
        assert aggregate_decrypt(agg_key, ts, cts, params) == 50000
    assert tally.exponentiations == 1
    assert tally.multiplications == 50


def test_missing_ciphertext(toy_setup):
    params, agg_key, user_keys = toy_setup
    ts = derive_timestep(params, 0)
    cts = _encrypt_all(user_keys, ts, [1, 1, 1], params)
    with pytest.raises(MissingCiphertextError) as exc:
        aggregate_decrypt(agg_key, ts, [cts[0], cts[2]], params)
    assert exc.value.missing == [2]
    assert 'missing user index 2' in str(exc.value)
    assert exc.value.code == 'missing-user-index'


def test_duplicate_ciphertext(toy_setup):
    params, agg_key, user_keys = toy_setup
    ts = derive_timestep(params, 0)
    cts = _encrypt_all(user_keys, ts, [1, 1, 1], params)
    with pytest.raises(DuplicateCiphertextError):
        aggregate_decrypt(agg_key, ts, cts + [cts[1]], params)


def test_timestep_mismatch(toy_setup):
    params, agg_key, user_keys = toy_setup
    ts0 = derive_timestep(params, 0)
    ts1 = derive_timestep(params, 1)
    cts = _encrypt_all(user_keys, ts0, [1, 1, 1], params)
    cts[2] = encrypt(user_keys[2], ts1, 1, params)
    with pytest.raises(TimestepMismatchError):
        aggregate_decrypt(agg_key, ts0, cts, params)


def test_fold_then_decode(toy_setup):
    params, agg_key, user_keys = toy_setup
    ts = derive_timestep(params, 3)
    cts = _encrypt_all(user_keys, ts, [2, 2, -1], params)
    assert decode_aggregate(fold_ciphertexts(agg_key, ts, cts, params), params) == 3


@pytest.mark.parametrize('scheme', Scheme.ALL)
def test_random_correctness_64_bits(scheme):
    rng = np.random.default_rng(99)
    params, agg_key, user_keys = setup(64, 40, 500, 3, rng, scheme=scheme)
    for t in range(3):
        ts = derive_timestep(params, t)
        values = [int(v) for v in rng.integers(-500, 500, size=40, endpoint=True)]
        cts = _encrypt_all(user_keys, ts, values, params)
        assert aggregate_decrypt(agg_key, ts, cts, params) == sum(values)
        assert aggregate_decrypt(agg_key, ts, cts, params, strategy=LAMBDA) == sum(values)


@pytest.mark.slow
@pytest.mark.parametrize('bits', [1024, 2048])
def test_random_correctness_standard_primes(bits):
    rng = np.random.default_rng(bits)
    n, m = 1000, 1000
    params, agg_key, user_keys = setup(bits, n, m, 1, rng, standard_prime=True)
    assert params.pair == standard_safe_prime(bits)
    ts = derive_timestep(params, 0)
    masks = [prf_eval(key.secret, ts, params) for key in user_keys]
    for _ in range(50):
        values = [int(v) for v in rng.integers(-m, m, size=n, endpoint=True)]
        cts = [encrypt(key, ts, x, params, mask=mask)
               for key, x, mask in zip(user_keys, values, masks)]
        assert aggregate_decrypt(agg_key, ts, cts, params) == sum(values)


def test_serialization_round_trip(toy_setup):
    params, agg_key, user_keys = toy_setup
    ts = derive_timestep(params, 0)
    ct = encrypt(user_keys[0], ts, -2, params)
    assert parse_params(serialize(params)) == params
    assert parse_aggregator_key(serialize(agg_key)) == agg_key
    assert parse_user_key(serialize(user_keys[2])) == user_keys[2]
    assert parse_ciphertext(serialize(ct)) == ct
    with pytest.raises(ParameterError):
        serialize(object())


def test_parse_rejects_wrong_record_and_truncation(toy_setup):
    params, _, user_keys = toy_setup
    ct = encrypt(user_keys[0], derive_timestep(params, 0), 1, params)
    with pytest.raises(ParseError) as exc:
        parse_user_key(serialize_ciphertext(ct))
    assert exc.value.offset == 4
    with pytest.raises(ParseError):
        parse_params(serialize_params(params)[:-3])


def test_parse_rejects_inconsistent_params(toy_setup):
    params = toy_setup[0]
    # n = 100 breaks q > m*n for q = 11
    forged = (WireWriter(RECORD_PARAMS)
              .int(0).int(params.p).int(params.q).int(params.g.value)
              .int(100).int(params.m).bytes(params.timestep_seed)
              .int(params.num_timesteps).int(params.security_bits)
              .getvalue())
    with pytest.raises(ParseError):
        parse_params(forged)


def test_keygen_files_round_trip(toy_setup, tmp_path):
    params, agg_key, user_keys = toy_setup
    paths = write_keygen_files(str(tmp_path), params, agg_key, user_keys)
    assert len(paths) == 5
    assert sorted(os.listdir(tmp_path)) == sorted(
        [PARAMS_FILE, AGG_KEY_FILE] + [user_key_filename(i) for i in (1, 2, 3)])
    assert read_params(str(tmp_path / PARAMS_FILE)) == params
    assert read_aggregator_key(str(tmp_path / AGG_KEY_FILE)) == agg_key
    assert read_user_key(str(tmp_path / user_key_filename(2))) == user_keys[1]

    ct = encrypt(user_keys[0], derive_timestep(params, 1), 2, params)
    path = write_ciphertext(str(tmp_path), ct)
    assert os.path.basename(path) == ciphertext_filename(1, 1)
    assert read_ciphertext(path) == ct


def test_verify_params(toy_setup, baseline_setup):
    assert verify_params(toy_setup[0]) == []
    assert verify_params(baseline_setup[0]) == []


def test_verify_params_flags_composite_modulus():
    # 15 = 2*7 + 1 has the right shape but neither member is prime
    bad = SafePrimePair(15, 7)
    assert not bad.verify()
    params = SchemeParams(Scheme.PAPER, bad, GroupElement(4, 225), 3, 2, b'\x00' * 32, 1, 4)
    assert verify_params(params)
