"""Command-line interface.

Exit status is 0 on success, 2 for configuration or input errors and 3 for numerical
failures. Errors are reported on stderr as a JSON object.
"""
import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, load_yaml, parse_config
from .couplings import SingularGeometry
from .fitting import FitError, fit_t2
from .hamiltonian import DegeneracyError
from .oracle import DimensionError
from .runner import config_from_manifest, run_job, run_scan, write_bath
from .spinops import InvalidArgument
from .structure import GeometryError, ParseError
from .tables import atomic_write, read_columns

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (DegeneracyError, FitError, SingularGeometry, DimensionError, FloatingPointError,
                    np.linalg.LinAlgError, ArithmeticError)
CONFIG_ERRORS = (ConfigError, ParseError, GeometryError, InvalidArgument, FileNotFoundError,
                 IsADirectoryError, KeyError, ValueError)


def load_config(path, overrides=()):
    """Config from a YAML file or from a run manifest written by a previous job."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    base = os.path.dirname(os.path.abspath(path))
    data = load_yaml(text)
    if isinstance(data, dict) and "format" in data and "config" in data:
        if overrides:
            raise ConfigError("overrides cannot be applied when re-running a manifest")
        return config_from_manifest(data)
    return parse_config(text, base, overrides=overrides)


def _warn(messages):
    for m in messages:
        print(f"warning: {m}", file=sys.stderr)


def _summary(res):
    print(json.dumps({"out_dir": res.out_dir, "files": res.files, "fits": res.fits}, sort_keys=True))


def cmd_generate_bath(args):
    cfg = load_config(args.config, args.set)
    res = write_bath(cfg, args.out, args.member)
    _warn(res.warnings)
    _summary(res)


def cmd_run(args):
    cfg = load_config(args.config, args.set)
    res = run_job(cfg, args.out)
    _warn(res.warnings)
    _summary(res)


def cmd_autocorr(args):
    cfg = load_config(args.config, args.set)
    res = run_job(cfg, args.out, coherence=False, autocorr=True)
    _warn(res.warnings)
    _summary(res)


def cmd_scan(args):
    cfg = load_config(args.config, args.set)
    values = None
    if args.values is not None:
        values = [load_yaml(v) for v in args.values]
        if args.parameter is None:
            raise ConfigError("--values requires --parameter")
    res = run_scan(cfg, args.parameter, values, args.out)
    _warn(res.warnings)
    _summary(res)


def cmd_fit_t2(args):
    try:
        with open(args.csv) as fh:
            cols = read_columns(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc.strerror}") from None
    column = args.column
    if column is None:
        column = "abs_L_mean" if "abs_L_mean" in cols and args.use_abs_mean else "abs_L"
        if column not in cols and "re_L" in cols and "im_L" in cols:
            cols[column] = np.abs(cols["re_L"] + 1j * cols["im_L"])
    for name in ("t_ms", column):
        if name not in cols:
            raise ConfigError(f"column {name!r} not found in {args.csv}")
    fit = fit_t2(cols["t_ms"], cols[column], tuple(args.window) if args.window else None)
    text = json.dumps({"status": "ok", "column": column, **fit.to_dict()}, indent=2, sort_keys=True) + "\n"
    if args.output:
        atomic_write(args.output, text)
    sys.stdout.write(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="spincce", description="Cluster-correlation expansion of central-spin decoherence.")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, help_text, func):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML configuration or run manifest")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. method.order=3 (repeatable)")
        p.set_defaults(func=func)
        return p

    gb = with_config("generate-bath", "write one bath realization with its hyperfine tensors", cmd_generate_bath)
    gb.add_argument("--member", type=int, default=0, help="ensemble member index (default 0)")
    with_config("run", "compute the coherence function", cmd_run)
    with_config("autocorr", "compute the Overhauser-field autocorrelation", cmd_autocorr)
    sc = with_config("scan", "convergence scan over one config key", cmd_scan)
    sc.add_argument("--parameter", help="dotted config key (overrides scan.parameter)")
    sc.add_argument("--values", nargs="+", help="values to scan (overrides scan.values)")

    ft = sub.add_parser("fit-t2", help="fit exp[-(t/T2)^p] to a coherence CSV")
    ft.add_argument("csv")
    ft.add_argument("--window", nargs=2, type=float, metavar=("T_MIN", "T_MAX"))
    ft.add_argument("--column", help="column to fit (default abs_L)")
    ft.add_argument("--use-abs-mean", action="store_true", help="fit the ensemble mean of |L| instead")
    ft.add_argument("-o", "--output", help="also write the fit JSON here")
    ft.set_defaults(func=cmd_fit_t2)
    return parser


def _error(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "path", ""):
        payload["key"] = exc.path
    if getattr(exc, "line", None) is not None:
        payload["line"] = exc.line
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NUMERICAL_ERRORS as exc:
        return _error(exc, EXIT_NUMERICAL)
    except CONFIG_ERRORS as exc:
        return _error(exc, EXIT_CONFIG)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
