"""Command-line entry point: simulate / infer / evaluate / sweep / elicit.

Configuration comes from an optional key=value file plus flags; flags win.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical degeneracy.
The default worker count can be set with the POPNETS_WORKERS environment
variable.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import elicitation, evaluation
from .data import (
    DatasetFormatError,
    GenerationRegime,
    contaminate,
    generate_population,
    load_dataset,
    load_ground_truth,
    save_dataset,
    save_ground_truth,
)
from .engine import (
    Hyperparameters,
    load_posterior_json,
    save_posterior_csv,
    save_posterior_json,
)
from .estimators import EstimatorKind, run_estimator
from .evaluation import RegimeSweep, UndefinedAurError, task_aur
from .graphs import enumerate_parent_space, load_network, save_network
from .likelihood import NumericalDegeneracyError, PhiPolicy, build_score_table

USAGE_ERROR = 1
DATA_ERROR = 2
DEGENERACY_ERROR = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _default_workers() -> int:
    raw = os.environ.get("POPNETS_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _temperature(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


def read_config(path) -> dict[str, str]:
    """Parse a key = value configuration file ('#' starts a comment)."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _UsageError(f"{path}: line {lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _apply_config(args: argparse.Namespace, keys: dict[str, type]) -> None:
    """Fill argparse fields that the user left at None from the config file."""
    if not getattr(args, "config", None):
        return
    config = read_config(args.config)
    for key, value in config.items():
        if key not in keys:
            raise _UsageError(f"{args.config}: unknown configuration key {key!r}")
        if getattr(args, key, None) is None:
            caster = keys[key]
            if caster is bool:
                parsed = value.lower() in ("1", "true", "yes", "on")
            else:
                parsed = caster(value)
            setattr(args, key, parsed)


def _fill_defaults(args: argparse.Namespace, defaults: dict) -> None:
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


_REGIME_KEYS = {
    "J": int, "n": int, "E": int, "P": int,
    "sigma": float, "rho": float, "h_eta": float, "h_lambda": float,
    "interventions": bool, "seed": int,
}
_REGIME_DEFAULTS = {
    "J": 10, "n": 5, "E": 1, "P": 10,
    "sigma": 0.2, "rho": 1.0, "h_eta": 0.73, "h_lambda": 0.98,
    "interventions": True, "seed": 0,
}


def _add_regime_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file (flags win)")
    parser.add_argument("-J", "--individuals", dest="J", type=int)
    parser.add_argument("-n", "--timepoints", dest="n", type=int)
    parser.add_argument("-E", "--courses", dest="E", type=int)
    parser.add_argument("-P", "--variables", dest="P", type=int)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--rho", type=float)
    parser.add_argument("--h-eta", dest="h_eta", type=float)
    parser.add_argument("--h-lambda", dest="h_lambda", type=float)
    parser.add_argument("--no-interventions", dest="interventions", action="store_false", default=None)
    parser.add_argument("--seed", type=int)


def _regime_from_args(args: argparse.Namespace) -> GenerationRegime:
    _apply_config(args, _REGIME_KEYS | getattr(args, "_extra_keys", {}))
    _fill_defaults(args, _REGIME_DEFAULTS)
    return GenerationRegime(
        J=args.J, n=args.n, E=args.E, P=args.P,
        sigma=args.sigma, rho=args.rho,
        h_eta=args.h_eta, h_lambda=args.h_lambda,
        interventions=args.interventions, seed=args.seed,
    )


def _cmd_simulate(args: argparse.Namespace) -> int:
    regime = _regime_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data, truth = generate_population(regime)
    if args.contaminate:
        data = contaminate(data, seed=regime.seed + 1 if args.contaminate_seed is None else args.contaminate_seed)
    save_dataset(data, out_dir / "dataset.csv")
    save_ground_truth(truth, out_dir / "truth.json")
    save_network(truth.prior, out_dir / "prior.json")
    counts = ", ".join(str(ind.num_samples) for ind in data.individuals)
    print(f"wrote {out_dir}/dataset.csv, truth.json, prior.json")
    print(
        f"J={regime.J} P={regime.P} samples per individual: {counts}; "
        f"latent edges={truth.latent.num_edges} prior edges={truth.prior.num_edges}"
    )
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    data = load_dataset(args.data)
    prior = load_network(args.prior)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.phi_mode == "fixed":
        policy = PhiPolicy(mode="fixed", fixed_value=args.phi_value)
    else:
        policy = PhiPolicy()
    hp = Hyperparameters(eta=args.eta, lam=args.lam, c=args.c, phi_policy=policy)
    kinds = [EstimatorKind(k.strip()) for k in args.estimator.split(",")]

    needs_scores = any(
        k in (EstimatorKind.JNI, EstimatorKind.ANI, EstimatorKind.INI, EstimatorKind.ENI)
        for k in kinds
    )
    space = scores = None
    if needs_scores:
        t0 = time.perf_counter()
        space = enumerate_parent_space(data.num_variables, hp.c)
        scores = build_score_table(data, space, policy, workers=args.workers)
        print(f"[timing] score table: {time.perf_counter() - t0:.4g} s", file=sys.stderr)

    ids = [ind.individual_id for ind in data.individuals]
    for kind in kinds:
        if kind in (EstimatorKind.CORRELATION,) and (args.eta_set or args.lam_set):
            print(
                f"warning: {kind.value} ignores eta/lambda; parameters dropped",
                file=sys.stderr,
            )
        t0 = time.perf_counter()
        posterior = run_estimator(
            kind, data, prior, hp,
            threshold=args.threshold, space=space, scores=scores, workers=args.workers,
        )
        print(f"[timing] {kind.value} inference: {time.perf_counter() - t0:.4g} s", file=sys.stderr)
        cache_hash = scores.table_hash if scores is not None else None
        save_posterior_json(
            posterior, out_dir / f"posterior_{kind.value}.json",
            hp=hp, estimator=kind.value, score_cache_hash=cache_hash, individual_ids=ids,
        )
        save_posterior_csv(posterior, out_dir / f"posterior_{kind.value}.csv", individual_ids=ids)
        print(f"wrote {out_dir}/posterior_{kind.value}.json and .csv")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    truth = load_ground_truth(args.truth)
    rows = []
    for path in args.posterior:
        posterior, meta = load_posterior_json(path)
        estimator = meta.get("estimator") or Path(path).stem
        for task in evaluation.TASKS:
            try:
                value = task_aur(posterior, truth, task)
                rows.append((estimator, task, value))
                print(f"{estimator:>12s}  {task:<10s} AUR = {value:.4f}")
            except UndefinedAurError as exc:
                rows.append((estimator, task, None))
                print(f"{estimator:>12s}  {task:<10s} AUR undefined ({exc})")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("estimator,task,aur\n")
            for estimator, task, value in rows:
                fh.write(f"{estimator},{task},{'' if value is None else '%.17g' % value}\n")
        print(f"wrote {args.out}")
    return 0


_SWEEP_KEYS = {
    "estimators": str, "replicates": int, "master_seed": int,
    "eta": float, "lam": float, "c": int, "threshold": float, "contaminate": bool,
}
_SWEEP_DEFAULTS = {
    "estimators": "jni,ani,ini,eni,monolithic,correlation,prior",
    "replicates": 50, "master_seed": 0,
    "eta": 1.0, "lam": 4.0, "c": 3, "threshold": 0.5, "contaminate": False,
}


def _cmd_sweep(args: argparse.Namespace) -> int:
    args._extra_keys = _SWEEP_KEYS
    regime = _regime_from_args(args)
    _fill_defaults(args, _SWEEP_DEFAULTS)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.grid:
        etas = [_temperature(x) for x in args.eta_grid.split(",")]
        lams = [_temperature(x) for x in args.lambda_grid.split(",")]
        values = evaluation.sensitivity_grid(
            regime, etas, lams, args.replicates, args.master_seed,
            c=args.c, task=args.grid_task, workers=args.workers,
        )
        evaluation.write_grid_gnuplot(etas, lams, values, out_dir / "sensitivity.dat")
        print(f"wrote {out_dir}/sensitivity.dat")
        return 0

    sweep = RegimeSweep(
        regimes=(regime,),
        estimators=tuple(EstimatorKind(k.strip()) for k in args.estimators.split(",")),
        replicates=args.replicates,
        master_seed=args.master_seed,
        eta=args.eta,
        lam=args.lam,
        c=args.c,
        eni_threshold=args.threshold,
        contaminate=bool(args.contaminate),
    )
    reports = evaluation.run_sweep(
        sweep,
        workers=args.workers,
        ledger_path=out_dir / "ledger.csv",
        summary_path=out_dir / "summary.csv",
        verbose=True,
    )
    print(f"wrote {out_dir}/ledger.csv and summary.csv")
    for report in reports:
        print(
            f"{report.estimator.value:>12s}  {report.task:<10s} "
            f"AUR = {report.mean_aur:.4f} +- {report.std_error:.4f} "
            f"({report.replicates} replicates)"
        )
    return 0


def _cmd_elicit(args: argparse.Namespace) -> int:
    if args.s1 is not None or args.s2 is not None:
        if args.s1 is None or args.s2 is None:
            raise _UsageError("--s1 and --s2 must be given together")
        two_step = elicitation.two_step_elicitation(args.s1, args.s2)
        h_eta, eta = two_step.h_eta, two_step.eta
        h_lambda, lam = two_step.h_lambda, two_step.lam
    else:
        h_lambda, lam = _resolve_layer(args.lam, args.h_lambda, args.expected_shd_lambda, args.P, "lambda")
        h_eta, eta = _resolve_layer(args.eta, args.h_eta, args.expected_shd_eta, args.P, "eta")
        if h_lambda is None and h_eta is None:
            raise _UsageError(
                "give one of --lam/--h-lambda/--expected-shd-lambda, "
                "one of --eta/--h-eta/--expected-shd-eta, or --s1 with --s2"
            )
    result = elicitation.ElicitationResult(
        h_eta=h_eta,
        h_lambda=h_lambda,
        eta=eta,
        lam=lam,
        expected_shd_latent=None if (h_eta is None or args.P is None) else elicitation.expected_shd(args.P, h_eta),
        expected_shd_individual=None if (h_lambda is None or args.P is None) else elicitation.expected_shd(args.P, h_lambda),
    )
    print(json.dumps(result.to_json_dict(), indent=1))
    return 0


def _resolve_layer(tau, h, shd_value, P, which) -> tuple[float | None, float | None]:
    """One prior layer's (h, temperature), from whichever input was given."""
    given = [x is not None for x in (tau, h, shd_value)]
    if sum(given) > 1:
        raise _UsageError(f"give at most one of the {which} inputs")
    if tau is not None:
        return elicitation.h_from_temperature(tau), tau
    if shd_value is not None:
        if P is None:
            raise _UsageError(f"--expected-shd-{which} needs --p")
        h = 1.0 - shd_value / (P * P)
        if not 0.5 <= h <= 1.0:
            raise _UsageError(
                f"expected SHD {shd_value} is outside the representable range for P={P}"
            )
    if h is None:
        return None, None
    if not 0.5 <= h <= 1.0:
        raise _UsageError(f"--h-{which} must lie in [0.5, 1]")
    tau = math.inf if h == 1.0 else elicitation.temperature_from_h(h)
    return h, tau


def build_parser() -> _Parser:
    parser = _Parser(prog="popnets", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic population dataset")
    _add_regime_flags(sim)
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--contaminate", action="store_true")
    sim.add_argument("--contaminate-seed", type=int, default=None)
    sim.set_defaults(func=_cmd_simulate)

    inf = sub.add_parser("infer", help="run estimators on a dataset")
    inf.add_argument("--data", required=True)
    inf.add_argument("--prior", required=True)
    inf.add_argument("--out-dir", required=True)
    inf.add_argument("--estimator", default="jni",
                     help="comma-separated estimator kinds (jni,ani,ini,eni,monolithic,correlation,prior)")
    inf.add_argument("--eta", type=_temperature, default=1.0)
    inf.add_argument("--lam", "--lambda", dest="lam", type=_temperature, default=4.0)
    inf.add_argument("--c", type=int, default=3)
    inf.add_argument("--threshold", type=float, default=0.5)
    inf.add_argument("--phi-mode", choices=("empirical_bayes", "fixed"), default="empirical_bayes")
    inf.add_argument("--phi-value", type=float, default=None)
    inf.add_argument("--workers", type=int, default=None)
    inf.set_defaults(func=_cmd_infer)

    ev = sub.add_parser("evaluate", help="score posterior files against ground truth")
    ev.add_argument("--posterior", nargs="+", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=_cmd_evaluate)

    sw = sub.add_parser("sweep", help="replicate experiments over a regime")
    _add_regime_flags(sw)
    sw.add_argument("--out-dir", required=True)
    sw.add_argument("--estimators", default=None)
    sw.add_argument("--replicates", type=int, default=None)
    sw.add_argument("--master-seed", dest="master_seed", type=int, default=None)
    sw.add_argument("--eta", type=_temperature, default=None)
    sw.add_argument("--lam", "--lambda", dest="lam", type=_temperature, default=None)
    sw.add_argument("--c", type=int, default=None)
    sw.add_argument("--threshold", type=float, default=None)
    sw.add_argument("--contaminate", action="store_true", default=None)
    sw.add_argument("--workers", type=int, default=None)
    sw.add_argument("--grid", action="store_true", help="lambda x eta sensitivity surface")
    sw.add_argument("--eta-grid", default="0,0.5,1,2,4")
    sw.add_argument("--lambda-grid", default="0,1,2,4,8")
    sw.add_argument("--grid-task", default="latent", choices=evaluation.TASKS)
    sw.set_defaults(func=_cmd_sweep)

    el = sub.add_parser("elicit", help="translate hyperparameters to probabilities and back")
    el.add_argument("--lam", "--lambda", dest="lam", type=_temperature, default=None)
    el.add_argument("--h-lambda", dest="h_lambda", type=float, default=None)
    el.add_argument("--expected-shd-lambda", type=float, default=None)
    el.add_argument("--eta", type=_temperature, default=None)
    el.add_argument("--h-eta", dest="h_eta", type=float, default=None)
    el.add_argument("--expected-shd-eta", type=float, default=None)
    el.add_argument("--s1", type=float, default=None)
    el.add_argument("--s2", type=float, default=None)
    el.add_argument("--p", dest="P", type=int, default=None)
    el.set_defaults(func=_cmd_elicit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "workers"):
            args.eta_set = "--eta" in (argv or sys.argv)
            args.lam_set = any(f in (argv or sys.argv) for f in ("--lam", "--lambda"))
            if args.workers is None:
                args.workers = _default_workers()
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ValueError, NumericalDegeneracyError) as exc:
        if isinstance(exc, NumericalDegeneracyError):
            print(f"numerical degeneracy: {exc}", file=sys.stderr)
            return DEGENERACY_ERROR
        if isinstance(exc, (DatasetFormatError,)):
            print(f"data error: {exc}", file=sys.stderr)
            return DATA_ERROR
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FileNotFoundError, PermissionError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
