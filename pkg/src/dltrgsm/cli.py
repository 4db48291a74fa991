"""Command-line front end.

Every subcommand reads an optional config file; flags named after config keys
override it. Sweep results are written as CSV (``--out``) or printed.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .analysis import (EnumerationTooLarge, bep_union_bound, complexity_dl, complexity_mu,
                       receive_power, user_scaling_configs)
from .channel import noise_density_from_snr
from .config import (DL, MU, MU_DETECTORS, SCHEMES, SNR_REFERENCES, ConfigError,
                     data_rate, parse_config_text, split_config_values)
from .simulate import records_to_csv, sweep, write_results

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive), a comma list, or a single value."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            start, stop, step = parts
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [float(round(start + j * step, 10)) for j in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; use a:b:step, a comma list or one value") from None


def _alpha(text: str):
    return "auto" if text.lower() == "auto" else float(text)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--n-t", type=int)
    p.add_argument("--n-tact", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--n-r", type=int)
    p.add_argument("--n-ract", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=_alpha)
    p.add_argument("--snr-reference", choices=SNR_REFERENCES)
    p.add_argument("--scaling", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--mu-detector", choices=MU_DETECTORS)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-bit-errors", type=int)
    p.add_argument("--max-frames", type=int)


_CONFIG_FLAGS = ("scheme", "n_t", "n_tact", "k", "n_r", "n_ract", "m", "alpha", "snr_reference",
                 "scaling", "mu_detector", "seed", "min_bit_errors", "max_frames")


def resolve(args: argparse.Namespace):
    """Config file values, then flag overrides, validated."""
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for key in _CONFIG_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return split_config_values(values)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _schemes(args, config) -> list[str]:
    if not args.schemes:
        return [config.scheme]
    names = [s.strip() for s in args.schemes.split(",") if s.strip()]
    for s in names:
        if s not in SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}")
    return names


def _single_snr(args, config) -> float:
    grid = parse_grid(args.snr_db) if args.snr_db else [config.snr_db]
    if len(grid) != 1:
        raise ConfigError("this subcommand takes a single --snr-db value")
    return grid[0]


def _run_sweep(args, axis: str, grid) -> int:
    config, stop = resolve(args)
    if axis != "snr":
        config = config.with_(snr_db=_single_snr(args, config))
    records = sweep(config, axis, grid, stop, schemes=_schemes(args, config), workers=args.workers)
    if args.out:
        write_results(records, args.out)
    else:
        sys.stdout.write(records_to_csv(records))
    return EXIT_OK


def cmd_ber(args) -> int:
    config, _ = resolve(args)
    grid = parse_grid(args.snr_db) if args.snr_db else [config.snr_db]
    return _run_sweep(args, "snr", grid)


def cmd_alpha(args) -> int:
    grid = parse_grid(args.alpha_grid)
    if min(grid) <= 1:
        raise ConfigError("alpha grid values must exceed 1")
    return _run_sweep(args, "alpha", grid)


def cmd_users(args) -> int:
    return _run_sweep(args, "users", [int(k) for k in parse_grid(args.users)])


def cmd_bound(args) -> int:
    config, _ = resolve(args)
    if config.scheme != DL:
        raise ConfigError("the union bound is available for DL_TR_GSM only")
    grid = parse_grid(args.snr_db) if args.snr_db else [config.snr_db]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", "n0", "bound", "exceeds_one", "channels"])
    try:
        for snr in grid:
            n0 = noise_density_from_snr(snr, config).n0
            ub = bep_union_bound(config, n0, channels=args.channels)
            w.writerow([repr(snr), repr(n0), repr(ub.bound), int(ub.exceeds_one), ub.n_channels])
    except EnumerationTooLarge as exc:
        raise ConfigError(str(exc)) from exc
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_complexity(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "C_DL", "C_MU", "ratio"])
    if args.users:
        pairs = [user_scaling_configs(int(k)) for k in parse_grid(args.users)]
    else:
        config, _ = resolve(args)
        from .simulate import counterpart
        pairs = [(counterpart(config, DL), counterpart(config, MU))]
    for dl, mu in pairs:
        c_dl, c_mu = complexity_dl(dl).total, complexity_mu(mu).total
        w.writerow([dl.k, c_dl, c_mu, repr(c_mu / c_dl)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_power(args) -> int:
    if not args.p_ref > 0:
        raise ConfigError("--p-ref must be positive")
    dl, mu = receive_power(args.n_r_dl, args.p_ref), receive_power(args.n_r_mu, args.p_ref)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "n_r", "total_mw"])
    w.writerow([DL, dl.n_r, repr(dl.total)])
    w.writerow([MU, mu.n_r, repr(mu.total)])
    w.writerow(["reduction_percent", "", repr(100.0 * (1.0 - dl.total / mu.total))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_rate(args) -> int:
    config, _ = resolve(args)
    _emit(f"{config.scheme} eta={data_rate(config)} bits/user/channel-use\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dltrgsm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _add_config_flags(p)
        p.add_argument("--out", help="output path (stdout if omitted)")
        p.set_defaults(func=func)
        return p

    for name, func, help_ in (("ber", cmd_ber, "BER versus SNR"),
                              ("alpha", cmd_alpha, "BER versus power ratio"),
                              ("users", cmd_users, "BER versus number of users")):
        p = add(name, func, help_)
        p.add_argument("--snr-db", help="SNR grid a:b:step or list (single value for alpha/users)")
        p.add_argument("--schemes", help="comma list of schemes (default: config scheme)")
        p.add_argument("--workers", type=int, default=1)
        if name == "alpha":
            p.add_argument("--alpha-grid", required=True, help="grid a:b:step or list")
        if name == "users":
            p.add_argument("--users", default="2,4,8")

    p = add("bound", cmd_bound, "union bound on the BEP versus SNR")
    p.add_argument("--snr-db")
    p.add_argument("--channels", type=int, default=100)
    p = add("complexity", cmd_complexity, "SVD and scaling-coefficient operation counts")
    p.add_argument("--users", help="K grid; uses the user-scaling configurations")
    p = sub.add_parser("power", help="receiver power consumption")
    p.add_argument("--p-ref", type=float, default=20.0)
    p.add_argument("--n-r-dl", type=int, default=2)
    p.add_argument("--n-r-mu", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_power)
    add("rate", cmd_rate, "bits per user per channel use")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
