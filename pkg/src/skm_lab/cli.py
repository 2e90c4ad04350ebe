"""``skm-lab`` command line: run, rates, verify, enumerate.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numeric
failure, 4 enumeration budget exceeded.

Options may also come from a ``--config`` file of ``key=value`` lines
(``#`` starts a comment); command-line flags take precedence. The default
base seed is read from ``SKMLAB_SEED`` when ``--seed`` is not given.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__, catalog
from .exceptions import BudgetExceeded, InvalidInputError, NumericalError, OracleFailure
from .operators import residual
from .rng import mix_seed
from .skm import (
    Constant,
    ConstantHorizon,
    PowerDecay,
    random_index_distribution,
    run_skm,
    sample_output,
    theoretical_residual_bound,
)
from .suites import SUITES, run_suite
from .verify import DEFAULT_BUDGET, enumerate_expectations, fit_rate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC, EXIT_BUDGET = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def fmt(v: float) -> str:
    """Locale-independent float text with 17 significant digits."""
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _scalar(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_problem(text: str):
    """``name[:key=value[:key=value...]]``; comma-separated values become tuples."""
    name, *pairs = text.split(":")
    if not name.strip():
        raise UsageError("problem name is empty")
    params = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"problem parameter {pair!r} is not key=value")
        try:
            params[key.strip()] = (
                tuple(float(v) for v in value.split(",")) if "," in value else _scalar(value)
            )
        except ValueError:
            raise UsageError(f"problem parameter {key!r} has a non-numeric value {value!r}") from None
    return name.strip(), params


def parse_schedule(text: str, K: int | None):
    """``const:<lam0>`` (lam0/sqrt(K)), ``power:<lam0>:<a>`` or ``fixed:<lam>``."""
    kind, *args = text.split(":")
    try:
        vals = [float(a) for a in args]
    except ValueError:
        raise UsageError(f"bad schedule {text!r}") from None
    if kind == "const" and len(vals) == 1:
        if K is None:
            raise UsageError("const schedule needs a horizon")
        return ConstantHorizon(vals[0], K)
    if kind == "power" and len(vals) == 2:
        return PowerDecay(*vals)
    if kind == "fixed" and len(vals) == 1:
        return Constant(vals[0])
    raise UsageError(f"bad schedule {text!r}; use const:<lam0>, power:<lam0>:<a> or fixed:<lam>")


def parse_ints(text: str):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def read_config(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


DEFAULTS = {
    "problem": "sgd1d",
    "schedule": "const:0.5",
    "K": None,
    "Ks": None,
    "reps": 30,
    "seed": None,
    "out": None,
    "record_residual": False,
    "budget": DEFAULT_BUDGET,
    "x0": None,
    "suite": "all",
}


def resolve(args) -> argparse.Namespace:
    """Merge flags over config-file values over defaults."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) in (None, False) and key in conf:
            raw = conf[key]
            if key in ("K", "reps", "seed", "budget"):
                raw = int(raw)
            elif key == "record_residual":
                raw = raw.lower() in ("1", "true", "yes", "on")
            setattr(args, key, raw)
        if getattr(args, key) is None:
            setattr(args, key, default)
    if hasattr(args, "seed") and args.seed is None:
        env = os.environ.get("SKMLAB_SEED")
        try:
            args.seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"SKMLAB_SEED must be an integer, got {env!r}") from None
    return args


def load_instance(args):
    name, params = parse_problem(args.problem)
    inst = catalog.build(name, **params)
    if args.x0 is not None:
        x0 = np.array([float(v) for v in str(args.x0).split(",")])
        if x0.size != inst.op.dim:
            raise InvalidInputError(f"x0 has {x0.size} coordinates, problem has {inst.op.dim}")
        inst = catalog.Instance(inst.name, inst.op, x0, inst.p, inst.sigma_star_sq, inst.problem, inst.x_star)
    return inst


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def trajectory_csv(traj, with_residual: bool) -> str:
    n = traj.iterates.shape[1]
    cols = ["k"] + [f"x_{j}" for j in range(n)] + ["lambda"] + (["residual"] if with_residual else [])
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for k, x in enumerate(traj.iterates):
        row = [str(k)] + [fmt(v) for v in x]
        # the last iterate has no relaxation step after it
        row.append(fmt(traj.lambdas[k]) if k < traj.K else "")
        if with_residual:
            row.append(fmt(traj.residuals[k]))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def cmd_run(args) -> int:
    if args.K is None or args.K < 1:
        raise UsageError("run needs --K >= 1")
    inst = load_instance(args)
    sch = parse_schedule(args.schedule, args.K)
    traj = run_skm(inst.op, sch, inst.x0, args.K, args.seed, record_residual=args.record_residual)
    _emit(trajectory_csv(traj, args.record_residual), args.out)
    return EXIT_OK


def rate_sweep(inst, lam0: float, Ks, reps: int, base_seed: int):
    """Per horizon: mean and standard error of ``||T x_{N_K} - x_{N_K}||`` and its bound.

    The bound is the square root of the squared-residual bound (Jensen).
    Replication ``i`` uses ``mix_seed(base_seed, i)``; results are stored by
    replication index before aggregation.
    """
    rows = []
    for K in Ks:
        sch = ConstantHorizon(lam0, K)
        dist = random_index_distribution(sch, K)
        vals = np.empty(reps)
        for i in range(reps):
            s = mix_seed(base_seed, i)
            traj = run_skm(inst.op, sch, inst.x0, K, s)
            _, x = sample_output(traj, dist, s)
            vals[i] = residual(inst.op, x)
        bound = math.sqrt(theoretical_residual_bound(sch, K, inst.dist0_sq, inst.sigma_star_sq))
        rows.append((K, float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(reps)), bound))
    return rows


def rates_csv(rows) -> str:
    lines = ["K,mean_residual,stderr,bound"]
    lines += [f"{K},{fmt(m)},{fmt(se)},{fmt(b)}" for K, m, se, b in rows]
    return "\n".join(lines) + "\n"


def cmd_rates(args) -> int:
    Ks = parse_ints(args.Ks) if args.Ks is not None else []
    if len(Ks) < 3 or min(Ks) < 1:
        raise UsageError("rates needs --Ks with at least three horizons >= 1")
    if args.reps < 30:
        raise UsageError("rates needs --reps >= 30")
    kind, *vals = args.schedule.split(":")
    if kind != "const" or len(vals) != 1:
        raise UsageError("rates uses the horizon-dependent schedule const:<lam0>")
    inst = load_instance(args)
    rows = rate_sweep(inst, float(vals[0]), Ks, args.reps, args.seed)
    _emit(rates_csv(rows), args.out)
    fit = fit_rate([r[0] for r in rows], [r[1] for r in rows])
    print(f"slope={fmt(fit.slope)}", file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def report_document(checks, spec: dict) -> dict:
    records = [c.to_record() for c in checks]
    return {
        "tool": "skm-lab",
        "version": __version__,
        "spec": spec,
        "checks": records,
        "pass": all(r["pass"] for r in records),
    }


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    doc = report_document(run_suite(args.suite, args.seed), {"suite": args.suite, "seed": args.seed})
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK if doc["pass"] else EXIT_FAIL


def cmd_enumerate(args) -> int:
    if args.K is None or args.K < 1:
        raise UsageError("enumerate needs --K >= 1")
    inst = load_instance(args)
    sch = parse_schedule(args.schedule, args.K)
    enum = enumerate_expectations(
        inst.op, sch, inst.x0, args.K, inst.p, budget=args.budget, sigma_star_sq=inst.sigma_star_sq
    )
    bound = theoretical_residual_bound(sch, args.K, inst.dist0_sq, inst.sigma_star_sq)
    doc = {
        "tool": "skm-lab",
        "version": __version__,
        "spec": {"problem": args.problem, "schedule": args.schedule, "K": args.K, "budget": args.budget},
        "dist0_sq": inst.dist0_sq,
        "sigma_star_sq": inst.sigma_star_sq,
        "expectations": enum.to_dict(),
        "bound": bound,
        "bound_margin": bound - enum.output_residual_sq,
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skm-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"skm-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, horizon=True):
        p.add_argument("--config", help="key=value file; flags override it")
        p.add_argument("--problem", help="catalog problem, e.g. sgd1d or lsq:n=3:m=5:seed=1")
        p.add_argument("--schedule", help="const:<lam0> | power:<lam0>:<a> | fixed:<lam>")
        p.add_argument("--x0", help="comma-separated starting point")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if horizon:
            p.add_argument("--K", type=int)

    p = sub.add_parser("run", help="one seeded SKM trajectory as CSV")
    common(p)
    p.add_argument("--record-residual", action="store_true", default=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rates", help="expected residual at N_K across horizons")
    common(p, horizon=False)
    p.add_argument("--Ks", help="comma-separated horizons")
    p.add_argument("--reps", type=int)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("verify", help="run a verification suite, JSON report")
    p.add_argument("--config")
    p.add_argument("--suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("enumerate", help="exact scenario-tree expectations, JSON")
    common(p)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    try:
        args = resolve(build_parser().parse_args(argv))
        return args.func(args)
    except (UsageError, InvalidInputError, OSError) as exc:
        print(f"skm-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"skm-lab: {exc}; pass --budget {exc.required} or more", file=sys.stderr)
        return EXIT_BUDGET
    except (NumericalError, OracleFailure, FloatingPointError) as exc:
        print(f"skm-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
