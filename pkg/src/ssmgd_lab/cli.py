"""Command-line interface.

Exit status is 0 on success, 1 when an asserted check fails (coverage
below ``1 - delta`` or a violated conservative inequality) and 2 on usage
or configuration errors.
"""

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import bounds as bd
from .chains import build_chain, chain_to_json, sample_stationary_path, trial_seed
from .exceptions import ConfigError, FitError, SSMGDError
from .lab import (
    MONTE_CARLO_COLUMNS,
    ExperimentConfig,
    LemmaGrid,
    run_experiment,
    sweep,
    theoretical_bounds,
    verify_lemmas,
)
from .mixing import fit_exponential_envelope, mixing_profile
from .oracle import certify, minimizer
from .ssmgd import Schedule, run_decomposed

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_USAGE = 2

RUN_COLUMNS = ("t", "total_err", "init_err", "samp_err", "step_size")
MIXING_COLUMNS = ("t", "phi", "beta", "phi_envelope", "beta_envelope")
BOUND_COLUMNS = ("t", "init_bound", "samp_bound")
LEMMA_COLUMNS = ("lemma", "variant", "theta", "alpha", "i", "t", "exact", "bound", "holds")
SWEEP_COLUMNS = ("sweep", "theta", "k", "predicted_exponent", "log_factor", "fitted_slope", "intercept", "r_squared")

log = logging.getLogger("ssmgd_lab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(rows, columns, out, header=None):
    buf = io.StringIO()
    if header is not None:
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    _emit(buf.getvalue(), out)


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _json_arg(text, name):
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--{name} is not valid JSON: {exc}") from None
    if not isinstance(value, dict):
        raise ConfigError(f"--{name} must be a JSON object")
    return value


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_config(args):
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.from_json(args.config)
    overrides = {k: getattr(args, k, None) for k in ("theta", "trials", "seed", "delta", "horizon")}
    variant = getattr(args, "variant", None)
    if variant is not None:
        overrides["variant"] = variant
    try:
        return cfg.with_overrides(**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _chain_from_args(args):
    if args.config is not None:
        cfg = ExperimentConfig.from_json(args.config)
        kind, params = cfg.chain["kind"], cfg.chain.get("params", {})
    elif args.kind is not None:
        kind, params = args.kind, _json_arg(args.params, "params")
    else:
        raise ConfigError("give --config or --kind")
    try:
        return build_chain(kind, params)
    except (SSMGDError, TypeError) as exc:
        raise ConfigError(f"cannot build chain: {exc}") from None


def cmd_chains(args):
    chain = _chain_from_args(args)
    doc = json.loads(chain_to_json(chain))
    doc["support"] = chain.support.tolist()
    doc["stationarity_residual"] = chain.residual()
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _envelope_or_none(seq):
    try:
        return fit_exponential_envelope(seq)
    except FitError as exc:
        log.warning("no exponential envelope: %s", exc)
        return None


def cmd_mixing(args):
    chain = _chain_from_args(args)
    prof = mixing_profile(chain, args.horizon)
    env_phi = _envelope_or_none(prof.phi)
    env_beta = _envelope_or_none(prof.beta)
    t = prof.t
    phi_env = env_phi(t) if env_phi else np.full(t.size, np.nan)
    beta_env = env_beta(t) if env_beta else np.full(t.size, np.nan)
    header = {
        "phi_envelope": None if env_phi is None else {"D": env_phi.D, "r": env_phi.r},
        "beta_envelope": None if env_beta is None else {"D": env_beta.D, "r": env_beta.r},
    }
    rows = (
        {"t": int(t[j]), "phi": prof.phi[j], "beta": prof.beta[j], "phi_envelope": phi_env[j], "beta_envelope": beta_env[j]}
        for j in range(t.size)
    )
    _write_csv(rows, MIXING_COLUMNS, args.out, header)
    return EXIT_OK


def cmd_certify(args):
    cfg = _load_config(args)
    chain, family = cfg.build()
    try:
        cert = certify(family, chain)
    except SSMGDError as exc:
        raise ConfigError(f"cannot certify family: {exc}") from None
    _emit(json.dumps(cert.to_dict(), sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_bounds(args):
    cfg = _load_config(args)
    chain, family = cfg.build()
    try:
        cert = certify(family, chain)
        w_star = minimizer(family, chain)
        r1 = family.norm(cfg.initial_point(family, w_star) - w_star)
        report, _ = theoretical_bounds(cfg, chain, cert, r1, args.formula)
    except (SSMGDError, ValueError) as exc:
        raise ConfigError(f"cannot evaluate bounds: {exc}") from None
    rows = (
        {"t": int(t), "init_bound": report.init_bound[j], "samp_bound": report.samp_bound_sq[j]}
        for j, t in enumerate(report.checkpoints)
    )
    _write_csv(rows, BOUND_COLUMNS, args.out)
    return EXIT_OK


def cmd_run(args):
    cfg = _load_config(args)
    chain, family = cfg.build()
    try:
        cert = certify(family, chain)
    except SSMGDError as exc:
        raise ConfigError(f"cannot certify family: {exc}") from None
    w_star = minimizer(family, chain)
    w1 = cfg.initial_point(family, w_star)
    path = sample_stationary_path(chain, cfg.horizon, trial_seed(cfg.seed, 0))
    traj = run_decomposed(family, path, Schedule(cfg.theta, cert.eta), w1, cfg.checkpoints, w_star)
    rows = (
        {
            "t": int(t),
            "total_err": traj.total_err[j],
            "init_err": traj.init_err[j],
            "samp_err": traj.samp_err[j],
            "step_size": traj.step_size[j],
        }
        for j, t in enumerate(traj.checkpoints)
    )
    _write_csv(rows, RUN_COLUMNS, args.out)
    return EXIT_OK


def cmd_monte_carlo(args):
    cfg = _load_config(args)
    try:
        result = run_experiment(cfg, formula=args.formula)
    except (FitError, bd.DomainError) as exc:
        raise ConfigError(f"cannot evaluate bounds: {exc}") from None
    _write_csv(result.csv_rows(), MONTE_CARLO_COLUMNS, args.out)
    cov = result.coverage
    if not cov.holds:
        bad = [int(t) for t, f in zip(cov.checkpoints, cov.fraction) if f < cov.target]
        print(f"coverage below {cov.target:g} at t = {bad}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    if not args.thetas and not args.ks:
        raise ConfigError("give --thetas and/or --ks")
    rows = sweep(cfg, thetas=args.thetas or (), ks=args.ks or (), renewal_states=args.renewal_states)
    _write_csv(rows, SWEEP_COLUMNS, args.out)
    return EXIT_OK


def cmd_verify_lemmas(args):
    grid = LemmaGrid()
    kw = {}
    if args.thetas:
        kw["thetas"] = args.thetas
    if args.alphas:
        kw["alphas"] = args.alphas
    if args.t_max is not None:
        if args.t_max < 1:
            raise ConfigError("--t-max must be >= 1")
        kw["t_max"] = args.t_max
    try:
        grid = LemmaGrid(**{**grid.__dict__, **kw})
        audit = verify_lemmas(grid)
    except SSMGDError as exc:
        raise ConfigError(str(exc)) from None
    _write_csv(audit.rows, LEMMA_COLUMNS, args.out)
    for s in audit.summaries:
        tag = "asserted" if s.asserted else "reported"
        print(
            f"{s.lemma:7s} {s.variant:12s} {tag:8s} checked={s.checked} violations={s.violations} "
            f"max_excess={s.max_excess:.3g} worst={s.worst}",
            file=sys.stderr,
        )
    return EXIT_OK if audit.asserted_ok else EXIT_ASSERT


def _add_experiment_options(p, formula=False):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--theta", type=float, help="step-size exponent in (1/2, 1]")
    p.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--delta", type=float, help="confidence parameter in (0, 1)")
    p.add_argument("--horizon", type=int, help="number of iterations T")
    p.add_argument("--variant", choices=bd.VARIANTS)
    if formula:
        p.add_argument("--formula", choices=bd.FORMULAS)


def build_parser():
    parser = _Parser(prog="ssmgd-lab", description="Markov chain gradient descent experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--out", default=None, help="output file (default stdout)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")
        return p

    for name, func, help in (
        ("chains", cmd_chains, "build a chain and print it as JSON"),
        ("mixing", cmd_mixing, "phi/beta coefficients and fitted envelopes as CSV"),
    ):
        p = add(name, func, help)
        p.add_argument("--config")
        p.add_argument("--kind", help="chain constructor name")
        p.add_argument("--params", default="{}", help="constructor parameters as JSON")
        if name == "mixing":
            p.add_argument("--horizon", type=int, default=50)

    _add_experiment_options(add("certify", cmd_certify, "assumption certificate of the configured family"))
    _add_experiment_options(add("bounds", cmd_bounds, "theoretical bound curves at the checkpoints"), formula=True)
    _add_experiment_options(add("run", cmd_run, "one trajectory with the error decomposition"))
    _add_experiment_options(add("monte-carlo", cmd_monte_carlo, "quantile curves, bounds and coverage"), formula=True)
    p = add("sweep", cmd_sweep, "fitted rates over theta and polynomial-mixing grids")
    _add_experiment_options(p)
    p.add_argument("--thetas", type=_floats)
    p.add_argument("--ks", type=_floats)
    p.add_argument("--renewal-states", type=int, default=50)
    p = add("verify-lemmas", cmd_verify_lemmas, "audit the coefficient inequalities over a grid")
    p.add_argument("--thetas", type=_floats)
    p.add_argument("--alphas", type=_floats)
    p.add_argument("--t-max", type=int)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SSMGDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
