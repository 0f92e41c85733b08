"""Command-line front end.

Subcommands::

    mrdtest simulate CONFIG.json [--seed S] [--iterations N] [--workers W]
                                 [--format {csv,md}] [--out PATH]
    mrdtest test-data DATA.csv --model intraclass --rho 0.5 --schedule 3,2,1
    mrdtest calibrate --k-max 100 --rho 0.5 --alpha 0.05 [--out PATH]
    mrdtest verify

Exit status is 0 on success, 1 when a computation or check fails and 2 for
bad input (config, data file or arguments).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .covariance import CovarianceModel, read_matrix_csv
from .critical_values import CriticalSchedule, DunnettCalibration
from .exceptions import MRDError
from .simulation import build_procedure, compare_procedures

EXIT_FAIL = 1
EXIT_INPUT = 2


class InputError(Exception):
    pass


def _write(text, out):
    """Write ``text`` to ``out`` (a path) or stdout."""
    if out is None:
        sys.stdout.write(text)
        return
    folder = os.path.dirname(os.path.abspath(out))
    os.makedirs(folder, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    overrides = {"seed": args.seed, "iterations": args.iterations, "workers": args.workers,
                 "format": args.format, "out": args.out}
    cfg = load_config(args.config, overrides)
    print(f"{len(cfg.rows)} rows, {cfg.iterations} iterations, seed {cfg.seed}, "
          f"{cfg.workers} workers", file=sys.stderr)
    table = compare_procedures(cfg.grid(), workers=cfg.workers, progress=True)
    text = table.to_csv() if cfg.format == "csv" else table.to_markdown()
    _write(text, cfg.out)
    if cfg.out:
        print(f"wrote {cfg.out}", file=sys.stderr)
    return 0


# --------------------------------------------------------------------------
# test-data


def read_data_csv(path):
    """Read one value per line, with an optional ``s2=<v>,nu=<n>`` header.

    Returns
    -------
    x : ndarray
    variance : (s2, nu) or None
    """
    values, variance = [], None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if not values and variance is None and "=" in line:
                variance = _parse_header(line, lineno)
                continue
            try:
                v = float(line)
            except ValueError:
                raise InputError(f"{path}: line {lineno}: cannot parse {line!r} as a number")
            if not np.isfinite(v):
                raise InputError(f"{path}: line {lineno}: value {line!r} is not finite")
            values.append(v)
    if not values:
        raise InputError(f"{path}: no data values")
    return np.array(values), variance


def _parse_header(line, lineno):
    fields = {}
    for part in line.split(","):
        key, _, val = part.partition("=")
        fields[key.strip()] = val.strip()
    if set(fields) != {"s2", "nu"}:
        raise InputError(f"line {lineno}: header must be 's2=<v>,nu=<n>', got {line!r}")
    try:
        s2, nu = float(fields["s2"]), int(fields["nu"])
    except ValueError:
        raise InputError(f"line {lineno}: cannot parse header {line!r}")
    if not (s2 > 0 and nu >= 1):
        raise InputError(f"line {lineno}: need s2 > 0 and nu >= 1")
    return s2, nu


def _model_from_args(args, size):
    kind = args.model
    if kind == "dense":
        if args.matrix is None:
            raise InputError("--model dense needs --matrix PATH")
        return CovarianceModel.dense(read_matrix_csv(args.matrix), args.scale)
    if kind == "identity":
        return CovarianceModel.identity(size, args.scale)
    if kind == "changepoint":
        return CovarianceModel.changepoint(size, args.scale)
    if args.rho is None:
        raise InputError(f"--model {kind} needs --rho")
    if kind == "intraclass":
        return CovarianceModel.intraclass(size, args.rho, args.scale)
    return CovarianceModel.successive(size, args.rho, args.scale)


def _schedule_from_arg(text):
    if text is None or text == "auto":
        return "auto"
    if os.path.exists(text):
        return CriticalSchedule.from_csv(text)
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"--schedule: cannot parse {text!r} as comma-separated numbers")
    return CriticalSchedule(values)


def cmd_test_data(args):
    x, variance = read_data_csv(args.data)
    size = args.size if args.size is not None else x.size
    model = _model_from_args(args, size)
    if x.size != model.size:
        raise InputError(f"{args.data}: {x.size} values but the model has size {model.size}")
    spec = {"method": args.procedure, "sided": args.sided}
    if args.procedure in ("mrd", "lrsd"):
        spec["schedule"] = _schedule_from_arg(args.schedule)
        spec["alpha"] = args.alpha
    if args.procedure == "mrd" and args.factor is not None:
        spec["factor"] = args.factor
    if args.procedure in ("holm", "dunnett"):
        spec["alpha"] = args.alpha
    if args.procedure == "bh":
        spec["q"] = args.alpha
    if args.procedure == "dunnett":
        spec.update(draws=args.draws, seed=args.seed)
    est = build_procedure(spec, model)
    dec = est.decide(x, variance)
    rank = {j: k + 1 for k, j in enumerate(dec.order)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "statistic", "threshold", "rejected", "order"])
    for j, stat, thr, rej in dec.rows():
        w.writerow([j + 1, repr(stat), repr(thr), str(rej).lower(), rank.get(j, "")])
    _write(buf.getvalue(), args.out)
    return 0


# --------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args):
    cal = DunnettCalibration.compute(args.k_max, args.rho, args.alpha, args.draws, args.seed,
                                     args.two_sided, args.workers, args.cache)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "threshold", "se"])
    for k in range(1, cal.k_max + 1):
        w.writerow([k, repr(float(cal.thresholds[k - 1])), repr(float(cal.se[k - 1]))])
    _write(buf.getvalue(), args.out)
    return 0


# --------------------------------------------------------------------------
# verify


def cmd_verify(args, closed_form=None):
    from . import verify

    kw = {} if closed_form is None else {"closed_form": closed_form}
    results = verify.run_checks(**kw)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAIL if failed else 0


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="mrdtest", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--format", choices=("csv", "md"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("test-data", help="apply a procedure to one observation vector")
    t.add_argument("data", help="one value per line, optional 's2=<v>,nu=<n>' header")
    t.add_argument("--model", default="identity",
                   choices=("identity", "intraclass", "changepoint", "successive", "dense"))
    t.add_argument("--rho", type=float)
    t.add_argument("--scale", type=float, default=1.0)
    t.add_argument("--matrix", help="CSV covariance for --model dense")
    t.add_argument("--size", type=int, help="declared number of hypotheses")
    t.add_argument("--procedure", default="mrd", choices=("mrd", "lrsd", "bh", "holm", "dunnett"))
    t.add_argument("--sided", default="two", choices=("one", "two"))
    t.add_argument("--schedule", help="comma-separated constants, a schedule CSV, or 'auto'")
    t.add_argument("--alpha", type=float, default=0.05, help="level (FDR level for bh)")
    t.add_argument("--factor", type=float)
    t.add_argument("--draws", type=int, default=200_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out")
    t.set_defaults(func=cmd_test_data)

    c = sub.add_parser("calibrate", help="Monte Carlo Dunnett step-down constants")
    c.add_argument("--k-max", type=int, required=True)
    c.add_argument("--rho", type=float, required=True)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--draws", type=int, default=200_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--two-sided", action="store_true")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--cache", help="JSON sidecar cache path")
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    v = sub.add_parser("verify", help="run the closed-form and property self-checks")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MRDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT if args.command == "test-data" else EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
