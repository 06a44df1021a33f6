"""Command-line interface: ``regddm {fit,simulate,twostep,experiment}``.

Exit codes: 0 success, 1 error, 2 fit completed but maximum R-hat exceeded
the convergence threshold. Defaults can come from a JSON config file whose
keys are the long option names (``--config``); explicit flags win. The
default thread count comes from ``REGDDM_THREADS``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import pandas as pd

from .diagnostics import RHAT_GATE
from .experiment import ExperimentConfig, run_experiment
from .fit import fit_model
from .formula import parse_model_spec
from .io import read_tables, subjects_with_trials, write_results
from .sampler import SamplerConfig
from .simulate import SCENARIOS, SimConfig, generate, write_simulation

EXIT_OK, EXIT_ERROR, EXIT_CONVERGENCE = 0, 1, 2
THREADS_ENV = "REGDDM_THREADS"

log = logging.getLogger("regddm")


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _add_sampler_args(p):
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=500)
    p.add_argument("--iter", type=int, default=1000, help="total iterations per chain, warmup included")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--max-tree-depth", type=int, default=10)
    p.add_argument("--threads", type=int, default=_default_threads())


def _add_data_args(p):
    p.add_argument("subjects", help="subject-level CSV (id plus covariates/outcome)")
    p.add_argument("trials", help="trial-level CSV (id, response, rt, covariates)")
    p.add_argument("--formula", action="append", required=True,
                   help="model formula; repeat for each DDM formula and the regression formula")
    p.add_argument("--family", default="gaussian", choices=["gaussian", "bernoulli", "poisson"])
    p.add_argument("--rt-window", type=float, nargs=2, metavar=("LO", "HI"),
                   help="drop trials with rt outside [LO, HI] seconds")
    p.add_argument("--factor", action="append", default=[],
                   help="treat this subject column as a factor")
    p.add_argument("--out-dir", default="regddm_out")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 keeps meaning "not converged"."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"error[usage]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regddm", description="Bayesian hierarchical regression drift-diffusion models.")
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a regression DDM")
    _add_data_args(p)
    _add_sampler_args(p)
    p.add_argument("--rhat-threshold", type=float, default=RHAT_GATE)
    p.add_argument("--save-draws", action="store_true", help="also write draws.csv")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--scenario", choices=SCENARIOS, default="sim1-outcome")
    p.add_argument("--subjects", type=int, default=50)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="sim_out")

    p = sub.add_parser("twostep", help="run the two-step baseline next to the joint fit")
    _add_data_args(p)
    _add_sampler_args(p)
    p.add_argument("--test", choices=["ols", "ttest"], default="ols")
    p.add_argument("--pooled", action="store_true", help="Student's pooled-variance t-test")
    p.add_argument("--no-joint", action="store_true", help="skip the joint RegDDM fit")

    p = sub.add_parser("experiment", help="replicated simulation experiment")
    p.add_argument("--name", choices=SCENARIOS, default="sim1-outcome")
    p.add_argument("--replications", type=int, default=30)
    p.add_argument("--subjects", type=_int_list, default=[50], help="comma-separated N values")
    p.add_argument("--trials", type=_int_list, default=[50, 100, 150], help="comma-separated n values")
    p.add_argument("--q", type=_int_list, default=[0], help="comma-separated q values (sim2)")
    p.add_argument("--no-twostep", action="store_true")
    p.add_argument("--out-dir", default="experiment_out")
    _add_sampler_args(p)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when given."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    data = json.loads(Path(known.config).read_text())
    data = {k.replace("-", "_"): v for k, v in data.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in data.items() if k in dests})
    return parser.parse_args(argv)


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(chains=args.chains, warmup=args.warmup, iterations=args.iter,
                         target_accept=args.target_accept, max_tree_depth=args.max_tree_depth,
                         seed=args.seed, threads=args.threads)


def _load(args):
    types = {c: "factor" for c in args.factor}
    window = tuple(args.rt_window) if args.rt_window else None
    subjects, trials = read_tables(args.subjects, args.trials, rt_window=window, types=types)
    spec = parse_model_spec(args.formula, args.family)
    return spec, subjects, trials


def cmd_fit(args) -> int:
    spec, subjects, trials = _load(args)
    res = fit_model(spec, subjects, trials, _sampler_config(args))
    write_results(res.summary, res.draws, args.out_dir, write_all_draws=args.save_draws)
    sys.stdout.write(res.summary.render())
    if not res.summary.converged(args.rhat_threshold):
        sys.stderr.write(f"warning[convergence]: maximum R-hat {res.summary.max_rhat:.3f} "
                         f"exceeds {args.rhat_threshold}\n")
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = SimConfig(args.scenario, args.subjects, args.trials, args.q, args.seed)
    subjects, trials, truth = generate(cfg)
    paths = write_simulation(subjects, trials, truth, args.out_dir)
    (Path(args.out_dir) / "model.txt").write_text("\n".join(truth.formulas) + "\n")
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_twostep(args) -> int:
    from .twostep import fit_ddm_only, second_step_ols, second_step_ttest

    spec, subjects, trials = _load(args)
    cfg = _sampler_config(args)
    subjects = subjects_with_trials(subjects, trials)
    stage = fit_ddm_only(spec, subjects, trials, cfg)
    reg = spec.regression
    rows = []
    if args.test == "ols":
        ols = second_step_ols(reg, stage, subjects)
        for j, name in enumerate(ols.names):
            label = "beta_0" if j == 0 else f"beta_{name}"
            rows.append({"method": "twostep", "variable": label, "estimate": ols.coef[j],
                         "se_or_sd": ols.se[j], "lower": ols.coef[j] - _tq(ols.df) * ols.se[j],
                         "upper": ols.coef[j] + _tq(ols.df) * ols.se[j], "statistic": ols.t[j],
                         "df": ols.df, "p": ols.p[j]})
    else:
        if spec.case != "B" or len(reg.rhs) != 1:
            raise ValueError("--test ttest needs a regression formula '<derived term> ~ <group>'")
        group = reg.rhs[0]
        tt = second_step_ttest(reg.lhs, group, stage, subjects, pooled=args.pooled)
        levels = sorted(subjects.frame[group].dropna().astype(str).unique())
        rows.append({"method": "twostep", "variable": f"beta_{group}{levels[-1]}",
                     "estimate": tt.difference, "se_or_sd": abs(tt.difference / tt.t) if tt.t else float("nan"),
                     "lower": float("nan"), "upper": float("nan"), "statistic": tt.t,
                     "df": tt.df, "p": tt.p})
    if not args.no_joint:
        res = fit_model(spec, subjects, trials, cfg)
        tab = res.summary.table.set_index("variable")
        for name in res.summary.regression:
            r = tab.loc[name]
            rows.append({"method": "regddm", "variable": name, "estimate": r["mean"],
                         "se_or_sd": r["sd"], "lower": r["q2.5"], "upper": r["q97.5"],
                         "statistic": float("nan"), "df": float("nan"), "p": float("nan")})
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = pd.DataFrame(rows)
    table.to_csv(out / "comparison.csv", index=False, float_format="%.10g")
    stage.estimates.to_csv(out / "first_stage.csv", index=False, float_format="%.10g")
    sys.stdout.write(table.to_string(index=False) + "\n")
    return EXIT_OK


def _tq(df):
    from scipy import stats
    return stats.t.ppf(0.975, df)


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        name=args.name, replications=args.replications, subjects=args.subjects,
        trials=args.trials, q=args.q, chains=args.chains, warmup=args.warmup,
        iterations=args.iter, seed=args.seed, threads=args.threads,
        twostep=False if args.no_twostep else None, out_dir=args.out_dir)
    run_experiment(cfg, progress=lambda p: log.info("finished %s", p))
    print(Path(args.out_dir) / "aggregate.csv")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "twostep": cmd_twostep,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error[config]: {exc}\n")
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 1
        reason = " ".join(str(exc).split())
        sys.stderr.write(f"error[{type(exc).__name__}]: {reason}\n")
        if args.verbose:
            log.exception("details")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
