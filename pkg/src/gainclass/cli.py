"""Command-line front end: ``gainclass {classify,oracle,certify,grid,bounds,experiment}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .core import (
    AllCensored,
    AllRestartsCollapsed,
    BadConstants,
    GainClassError,
    InvalidParams,
    MixtureParams,
    OptimizerConfig,
    SampleSet,
    TooLarge,
)
from . import experiments as ex
from .optimizer import Solution, certify, exhaustive_oracle, multi_start
from .types_method import build_grid, discretize_model, histogram_type, lemma2_rhs, outlier_bound

EXIT_OK = 0
EXIT_CERT_FAILED = 1
EXIT_INPUT = 2
EXIT_COLLAPSED = 3
EXIT_TOO_LARGE = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _constants(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected c,zeta,eta")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not numeric: {text!r}") from None


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, path: Path | None):
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _out_path(args, suffix: str) -> Path | None:
    if args.out is None:
        return None
    return Path(f"{args.out}{suffix}")


def _read_samples(path) -> SampleSet:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{path}: no such file")
    return SampleSet.read(p)


def _optimizer_cfg(args) -> OptimizerConfig:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.restarts is not None:
        kw["restarts"] = args.restarts
    if args.floor is not None:
        kw["variance_floor"] = args.floor
    try:
        return OptimizerConfig(**kw)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


def cmd_classify(args) -> int:
    s = _read_samples(args.input)
    cfg = _optimizer_cfg(args)
    sol = multi_start(s, cfg, args.method)
    cert = certify(s, sol, args.tol)
    d = sol.to_dict(include_memberships=False)
    d["certificate"] = cert.to_dict()
    _emit(_dump(d), _out_path(args, ".solution.json"))
    if args.out is not None:
        _emit(sol.memberships_csv(), _out_path(args, ".memberships.csv"))
    return EXIT_OK


def cmd_oracle(args) -> int:
    s = _read_samples(args.input)
    floor = args.floor if args.floor is not None else OptimizerConfig().variance_floor
    sol = exhaustive_oracle(s, floor)
    _emit(_dump(sol.to_dict()), _out_path(args, ".oracle.json"))
    return EXIT_OK


def cmd_certify(args) -> int:
    s = _read_samples(args.input)
    p = Path(args.solution)
    if not p.is_file():
        raise CliError(f"{p}: no such file")
    try:
        sol = Solution.from_dict(json.loads(p.read_text()))
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"{p}: not a solution file ({exc})") from None
    if sol.memberships.n_samples != s.n_samples:
        raise CliError(f"{p}: {sol.memberships.n_samples} memberships for {s.n_samples} samples")
    cert = certify(s, sol, args.tol)
    _emit(_dump(cert.to_dict()), _out_path(args, ".certificate.json"))
    return EXIT_OK if cert.passed else EXIT_CERT_FAILED


def cmd_grid(args) -> int:
    c, zeta, eta = args.constants
    grid = build_grid(args.n, c, zeta, eta)
    _emit(_dump(grid.to_dict()), _out_path(args, ".grid.json"))
    if args.input is not None:
        hist = histogram_type(_read_samples(args.input), grid)
        p = _out_path(args, ".type.csv")
        if p is None:
            sys.stdout.write(hist.to_csv())
        else:
            _emit(hist.to_csv(), p)
    return EXIT_OK


def cmd_bounds(args) -> int:
    theta_star = MixtureParams.from_json(args.theta)
    theta_hat = MixtureParams.from_json(args.theta_hat) if args.theta_hat else theta_star
    c, zeta, eta = args.constants
    grid = build_grid(args.n, c, zeta, eta)
    model = discretize_model(theta_hat, grid)
    out = {
        "m_n": grid.m_bound,
        "l_n": grid.n_bins,
        "w_n": grid.bin_width,
        "lemma1_bound": outlier_bound(theta_star, grid, args.n),
        "lemma2_rhs": lemma2_rhs(theta_hat, grid, model.c_p),
    }
    _emit(_dump(out), _out_path(args, ".bounds.json"))
    return EXIT_OK


def _apply_overrides(plan: ex.ExperimentPlan, args) -> ex.ExperimentPlan:
    opt = plan.optimizer
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    okw = {}
    if args.restarts is not None:
        okw["restarts"] = args.restarts
    if args.floor is not None:
        okw["variance_floor"] = args.floor
    if okw:
        try:
            kw["optimizer"] = replace(opt, **okw)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        if args.floor is not None and plan.region is not None:
            kw["region"] = replace(plan.region, var_floor=args.floor)
    if args.constants is not None:
        kw["c"], kw["zeta"], kw["eta"] = args.constants
    return replace(plan, **kw) if kw else plan


def cmd_experiment(args) -> int:
    if args.list:
        sys.stdout.write("\n".join(ex.bundled_plans()) + "\n")
        return EXIT_OK
    if args.plan is None:
        raise CliError("experiment needs a plan file or bundled plan name (see --list)")
    plan = _apply_overrides(ex.load_plan(args.plan), args)
    workers = max(1, args.threads or 1)
    progress = ex.progress_printer(sys.stderr)
    if plan.mode == "consistency":
        records, summary = ex.run_consistency(plan, workers, progress)
    elif plan.mode == "theorem4":
        _, records, summary = ex.run_theorem4(plan, None, workers, progress)
    else:
        summary, records = ex.run_exponent(plan, workers, progress)
    summary["mode"] = plan.mode
    prefix = args.out if args.out is not None else Path(args.plan).stem
    base = argparse.Namespace(out=prefix)
    _emit(ex.records_csv(records), _out_path(base, ".trials.csv"))
    _emit(ex.summary_json(summary), _out_path(base, ".summary.json"))
    _emit(ex.plot_csv(summary, plan.mode), _out_path(base, ".plot.csv"))
    _progress(f"wrote {prefix}.trials.csv, {prefix}.summary.json, {prefix}.plot.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--restarts", type=int, default=None, help="optimizer restarts")
    common.add_argument("--floor", type=float, default=None, help="variance floor B_sigma")
    common.add_argument("--out", default=None, help="output path prefix; stdout when omitted")
    common.add_argument("--threads", type=int, default=None, help="cap on concurrent trial workers")

    consts = argparse.ArgumentParser(add_help=False)
    consts.add_argument("--constants", type=_constants, default=None, metavar="c,zeta,eta",
                        help="grid constants (default 1,0.1,0.2)")

    p = argparse.ArgumentParser(prog="gainclass", description="Two-class blind classification by gain minimization.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common], help="partition a sample file")
    c.add_argument("input")
    c.add_argument("--method", choices=("fixed_point", "soft_descent"), default="fixed_point")
    c.add_argument("--tol", type=float, default=1e-7, help="certificate tolerance")
    c.set_defaults(func=cmd_classify)

    o = sub.add_parser("oracle", parents=[common], help="exhaustive global optimum (N <= 20)")
    o.add_argument("input")
    o.set_defaults(func=cmd_oracle)

    ce = sub.add_parser("certify", parents=[common], help="check a solution against the MAP condition")
    ce.add_argument("input")
    ce.add_argument("solution", help="solution JSON from classify or oracle")
    ce.add_argument("--tol", type=float, default=1e-7)
    ce.set_defaults(func=cmd_certify)

    g = sub.add_parser("grid", parents=[common, consts], help="grid numbers, optionally a sample type")
    g.add_argument("n", type=int)
    g.add_argument("--input", default=None, help="sample file to histogram")
    g.set_defaults(func=cmd_grid)

    b = sub.add_parser("bounds", parents=[common, consts], help="outlier bound and type-class inequality terms")
    b.add_argument("--theta", required=True, help='true parameters as JSON {"alpha":[..],"mu":[..],"var":[..]}')
    b.add_argument("--theta-hat", default=None, help="estimate for the right-hand side (defaults to --theta)")
    b.add_argument("--n", type=int, required=True)
    b.set_defaults(func=cmd_bounds)

    e = sub.add_parser("experiment", parents=[common, consts], help="run a Monte Carlo plan")
    e.add_argument("plan", nargs="?", default=None, help="plan file or bundled plan name")
    e.add_argument("--list", action="store_true", help="list bundled plans")
    e.set_defaults(func=cmd_experiment)
    return p


_DEFAULT_CONSTANTS = (1.0, 0.1, 0.2)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "constants", None) is None and args.command in ("grid", "bounds"):
        args.constants = _DEFAULT_CONSTANTS
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except AllRestartsCollapsed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COLLAPSED
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except AllCensored as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GainClassError, InvalidParams, BadConstants, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
