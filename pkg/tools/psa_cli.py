"""
PSA Toolkit CLI
Key ceremony, encryption and aggregation of files, calibration, experiments and benchmarks.

Subcommands:
    params      show public parameters of a params file
    keygen      dealer-simulated setup, writes params.psa / agg.key / user_<i>.key
    encrypt     encrypt one value or a values file under a user key
    aggregate   decrypt the sum of a complete ciphertext set
    calibrate   noise parameters and predicted accuracy for a mechanism
    experiment  mechanism comparison sweep or a single simulated configuration
    bench       encryption / decryption timing tables

Usage:
    python tools/psa_cli.py keygen --bits 64 --users 3 --plaintext-bound 2 --out keys
    python tools/psa_cli.py encrypt --params keys/params.psa --key keys/user_1.key --t 0 --value 2 --out cts
    python tools/psa_cli.py aggregate --params keys/params.psa --agg-key keys/agg.key --t 0 cts/ct_*_0.bin
"""

import argparse
import logging
import os
import sys

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from benchmarks import ENC, OPS, bench, write_bench_csv
from discrete_log import BRUTE, STRATEGIES
from dp_mechanisms import (
    Mechanism, PrivacyParams, calibrate, format_calibration_report, write_calibration_report,
)
from errors import ParameterError, PlaintextRangeError, PSAError
from psa_protocol import (
    Scheme, aggregate_decrypt, derive_timestep, encrypt, read_aggregator_key, read_ciphertext,
    read_params, read_user_key, required_q_min, serialize_params, setup, verify_params,
    write_ciphertext, write_keygen_files,
)
from settings import load_settings
from simulator import DataModel, Pipeline, Population, RunConfig, figure1_sweep, run, write_csv
from wire_format import armor

logger = logging.getLogger(__name__)

# Key size for simulated experiments (runs only need q > m*n)
EXPERIMENT_BITS = 64


def _resolve_seed(args):
    """--seed, or a fresh one echoed to stderr so the run can be repeated"""
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (1 << 63))
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def read_values_file(path):
    """Newline-separated decimal integers (blank lines ignored)"""
    values = []
    with open(path, 'r') as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise ParameterError(f"{path}:{lineno}: not an integer: {line!r}")
    return values


def _privacy_from_args(args):
    return PrivacyParams(
        epsilon=args.eps,
        delta=args.delta,
        sensitivity=args.sensitivity,
        gamma=args.gamma,
        beta=args.beta,
    )


def _parse_grid(raw, cast, flag):
    """Comma-separated flag value as a list, or None when the flag is absent"""
    if raw is None:
        return None
    try:
        grid = [cast(item) for item in raw.split(',') if item.strip()]
    except ValueError:
        raise ParameterError(f"{flag} must be a comma-separated list, got {raw!r}")
    if not grid:
        raise ParameterError(f"{flag} is empty")
    return grid


# ============================================
# SUBCOMMANDS
# ============================================

def cmd_params(args, settings):
    params = read_params(args.path)
    print(f"scheme:        {params.scheme}")
    print(f"bits:          {params.security_bits}")
    print(f"p:             {params.p}")
    print(f"q:             {params.q}")
    print(f"g:             {params.g.value}")
    print(f"users (n):     {params.n}")
    print(f"bound (m):     {params.m}")
    print(f"timesteps:     {params.num_timesteps}")
    print(f"timestep seed: {params.timestep_seed.hex()}")
    if args.armor:
        print(armor(serialize_params(params)), end='')
    if args.check:
        problems = verify_params(params)
        if problems:
            raise ParameterError("; ".join(problems))
        print("check:         ✅ primes and generator order verified")
    return 0


def cmd_keygen(args, settings):
    seed = _resolve_seed(args)
    bits = args.bits or settings['default_bits']
    standard = args.standard_prime or settings['prefer_standard_primes']
    params, agg_key, user_keys = setup(
        bits, args.users, args.plaintext_bound, args.timesteps, np.random.default_rng(seed),
        scheme=args.scheme, standard_prime=standard,
    )
    q_min = required_q_min(params.scheme, params.n, params.m)
    label = "m*n" if params.scheme == Scheme.PAPER else "2*m*n"
    print(f"✅ q > {label}: {params.q} > {q_min}")
    for path in write_keygen_files(args.out, params, agg_key, user_keys):
        print(path)
    return 0


def cmd_encrypt(args, settings):
    if (args.value is None) == (args.values is None):
        raise ParameterError("give exactly one of --value or --values")
    params = read_params(args.params)
    key = read_user_key(args.key)
    values = [args.value] if args.values is None else read_values_file(args.values)

    # every value and time-step is checked before the first file is written
    timesteps = [derive_timestep(params, args.t + offset) for offset in range(len(values))]
    out_of_range = [x for x in values if abs(x) > params.m]
    if out_of_range:
        raise PlaintextRangeError(
            f"plaintext {out_of_range[0]} outside [-{params.m}, {params.m}]")
    cts = [encrypt(key, ts, x, params) for ts, x in zip(timesteps, values)]

    for ct in cts:
        print(write_ciphertext(args.out, ct))
    return 0


def cmd_aggregate(args, settings):
    params = read_params(args.params)
    agg_key = read_aggregator_key(args.agg_key)
    cts = [read_ciphertext(path) for path in args.ciphertexts]
    ts = derive_timestep(params, args.t)
    print(aggregate_decrypt(agg_key, ts, cts, params, args.strategy))
    return 0


def cmd_calibrate(args, settings):
    pp = _privacy_from_args(args)
    spec = calibrate(pp, args.mechanism, args.users)
    print(format_calibration_report(spec, pp), end='')
    if args.out:
        write_calibration_report(args.out, spec, pp)
        logger.info(f"✅ Calibration report written to {args.out}")
    return 0


def cmd_experiment(args, settings):
    seed = _resolve_seed(args)
    workers = args.workers or settings['workers']

    delta_grid = _parse_grid(args.delta_grid, float, '--delta-grid')
    gamma_grid = _parse_grid(args.gamma_grid, float, '--gamma-grid')
    sweep_flags = (delta_grid, gamma_grid, args.fixed_delta)
    if args.figure1 or any(flag is not None for flag in sweep_flags):
        fig = settings['figure1']
        delta_grid = delta_grid or fig['delta_grid']
        gamma_grid = gamma_grid or fig['gamma_grid']
        fixed_delta = fig['fixed_delta'] if args.fixed_delta is None else args.fixed_delta
        base = RunConfig(
            scheme=args.scheme,
            privacy=PrivacyParams(fig['epsilon'], fixed_delta, fig['sensitivity'],
                                  1.0, fig['beta']),
            num_timesteps=args.timesteps or fig['timesteps'],
            runs=args.runs or fig['runs'],
            seed=seed,
            security_bits=args.bits,
            margin_sigmas=settings['margin_sigmas'],
            workers=workers,
            strategy=args.strategy,
        )
        users = args.users or fig['users']
        data_value = fig['data_value'] if args.data_value is None else args.data_value
        frame = figure1_sweep(base, users=users, data_value=data_value, delta_grid=delta_grid,
                              gamma_grid=gamma_grid, fixed_delta=fixed_delta)
        print(frame.to_string(index=False))
        if args.csv:
            write_csv(frame, args.csv, epsilon=fig['epsilon'], sensitivity=fig['sensitivity'],
                      beta=fig['beta'], users=users, runs=base.runs, seed=seed,
                      scheme=args.scheme, data_value=data_value,
                      delta_grid=','.join(str(d) for d in delta_grid),
                      gamma_grid=','.join(str(g) for g in gamma_grid),
                      fixed_delta=fixed_delta)
        return 0

    privacy = None
    if args.mechanism != Mechanism.NONE:
        if args.eps is None or args.delta is None:
            raise ParameterError("--eps and --delta are required unless --mechanism none")
        privacy = _privacy_from_args(args)
    config = RunConfig(
        scheme=args.scheme,
        mechanism=args.mechanism,
        privacy=privacy,
        num_timesteps=args.timesteps or 1,
        runs=args.runs or 1,
        seed=seed,
        security_bits=args.bits,
        margin_sigmas=settings['margin_sigmas'],
        workers=workers,
        strategy=args.strategy,
    )
    population = Population(args.users or 1000, args.gamma, DataModel.CONSTANT,
                            value=1 if args.data_value is None else args.data_value)
    stats = run(config, population)
    for key, value in stats.summary().items():
        print(f"{key}: {value}")
    if args.csv:
        write_csv(stats.to_frame(), args.csv, scheme=config.scheme, mechanism=config.mechanism,
                  epsilon=args.eps, delta=args.delta, gamma=args.gamma,
                  sensitivity=args.sensitivity, users=population.n, runs=config.runs,
                  seed=seed, plaintext_bound=stats.plaintext_bound)
    return 0


def cmd_bench(args, settings):
    seed = _resolve_seed(args)
    defaults = settings['bench']
    bits = _parse_grid(args.bits, int, '--bits')
    m_grid = _parse_grid(args.m_grid, int, '--m-grid')
    if args.op == ENC:
        # encryption table: bits grid at m = 1
        bits = bits or defaults['enc_bits']
        m_grid = m_grid or [1]
    else:
        bits = bits or [settings['default_bits']]
        m_grid = m_grid or defaults['m_grid']
    frame = bench(
        args.scheme, args.op, bits, args.n or defaults['users'], m_grid,
        iterations=args.iterations or defaults['iterations'],
        strategy=args.strategy, seed=seed,
        standard_prime=settings['prefer_standard_primes'],
    )
    print(frame.to_string(index=False))
    if args.csv:
        write_bench_csv(frame, args.csv)
    return 0


# ============================================
# ARGUMENT PARSING
# ============================================

def _add_privacy_flags(parser, required):
    parser.add_argument('--eps', type=float, required=required, help='epsilon')
    parser.add_argument('--delta', type=float, required=required, help='delta')
    parser.add_argument('--gamma', type=float, default=1.0, help='honest user fraction')
    parser.add_argument('--sensitivity', type=int, default=1, help='S(f)')
    parser.add_argument('--beta', type=float, default=0.05, help='accuracy failure probability')


def build_parser():
    parser = argparse.ArgumentParser(prog='psa_cli', description='Private stream aggregation toolkit')
    parser.add_argument('--seed', type=int, default=None, help='seed for all randomness')
    parser.add_argument('--verbose', '-v', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('params', help='show public parameters')
    p.add_argument('path')
    p.add_argument('--armor', action='store_true', help='also print the hex-armored record')
    p.add_argument('--check', action='store_true', help='re-verify primes and generator order')
    p.set_defaults(handler=cmd_params)

    p = sub.add_parser('keygen', help='dealer-simulated key ceremony')
    p.add_argument('--bits', type=int, default=None, help='bit length of p')
    p.add_argument('--users', type=int, required=True)
    p.add_argument('--plaintext-bound', type=int, required=True, help='m')
    p.add_argument('--timesteps', type=int, default=1)
    p.add_argument('--scheme', choices=Scheme.ALL, default=Scheme.PAPER)
    p.add_argument('--standard-prime', action='store_true', help='use a well-known MODP prime if one fits')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_keygen)

    p = sub.add_parser('encrypt', help='encrypt values under a user key')
    p.add_argument('--params', required=True)
    p.add_argument('--key', required=True)
    p.add_argument('--t', type=int, required=True, help='time-step index')
    p.add_argument('--value', type=int, default=None)
    p.add_argument('--values', default=None, help='file of integers; line j goes to time-step t+j')
    p.add_argument('--out', default='.')
    p.set_defaults(handler=cmd_encrypt)

    p = sub.add_parser('aggregate', help='decrypt the sum of a ciphertext set')
    p.add_argument('--params', required=True)
    p.add_argument('--agg-key', required=True)
    p.add_argument('--t', type=int, required=True)
    p.add_argument('--strategy', choices=STRATEGIES, default=BRUTE)
    p.add_argument('ciphertexts', nargs='+')
    p.set_defaults(handler=cmd_aggregate)

    p = sub.add_parser('calibrate', help='noise parameters for a mechanism')
    p.add_argument('--mechanism', choices=Mechanism.ALL, required=True)
    _add_privacy_flags(p, required=True)
    p.add_argument('--users', type=int, required=True)
    p.add_argument('--out', default=None, help='write the key=value report here')
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser('experiment', help='simulated aggregation experiments')
    p.add_argument('--figure1', action='store_true', help='delta and gamma sweeps of all mechanisms')
    p.add_argument('--delta-grid', default=None, help='comma-separated deltas for the delta sweep (implies a sweep)')
    p.add_argument('--gamma-grid', default=None, help='comma-separated honest fractions for the gamma sweep')
    p.add_argument('--fixed-delta', type=float, default=None, help='delta held fixed during the gamma sweep')
    p.add_argument('--mechanism', choices=Mechanism.ALL + (Mechanism.NONE,), default=Mechanism.SKELLAM)
    _add_privacy_flags(p, required=False)
    p.add_argument('--users', type=int, default=None)
    p.add_argument('--data-value', type=int, default=None)
    p.add_argument('--timesteps', type=int, default=None)
    p.add_argument('--runs', type=int, default=None)
    p.add_argument('--scheme', choices=Pipeline.ALL, default=Pipeline.PAPER)
    p.add_argument('--bits', type=int, default=EXPERIMENT_BITS)
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--strategy', choices=STRATEGIES, default=BRUTE)
    p.add_argument('--csv', default=None)
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser('bench', help='timing tables')
    p.add_argument('--scheme', choices=Scheme.ALL, default=Scheme.PAPER)
    p.add_argument('--op', choices=OPS, required=True)
    p.add_argument('--bits', default=None, help='comma-separated bit lengths of p')
    p.add_argument('--n', type=int, default=None)
    p.add_argument('--m-grid', default=None, help='comma-separated plaintext bounds')
    p.add_argument('--iterations', type=int, default=None)
    p.add_argument('--strategy', choices=STRATEGIES, default=BRUTE)
    p.add_argument('--csv', default=None)
    p.set_defaults(handler=cmd_bench)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(message)s',
        stream=sys.stderr,
    )
    try:
        return args.handler(args, load_settings())
    except PSAError as e:
        print(f"error: {e.code}: {e.message}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io-error: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
