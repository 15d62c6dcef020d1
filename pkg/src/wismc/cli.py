"""Command-line entry point: analyze, estimate, simulate, fpt and optimize
subcommands with deterministic outputs and a run manifest per invocation."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    AlignmentError,
    ContractViolation,
    DegenerateTableError,
    EstimationError,
    InsufficientDataError,
    OrderingError,
    ParameterError,
    ParseError,
    ResourceLimitError,
    UndefinedConditionalError,
    UndefinedStatisticError,
    WismcError,
)
from .finfunc import FptQuery, fpt_survival_mc, fpt_survival_recursive
from .market_data import align, compute_returns, load_bars, run_battery
from .optimize import GridSpec, grid_search
from .serialize import dumps, load_model, save_model
from .simulate import SimConfig, simulate_path
from .triplet import TripletFitConfig, fit_triplet_kernel

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RESOURCE = 4

_USAGE_ERRORS = (ParameterError, ContractViolation)
_DATA_ERRORS = (ParseError, OrderingError, InsufficientDataError, AlignmentError,
                DegenerateTableError, UndefinedStatisticError, EstimationError,
                UndefinedConditionalError, FileNotFoundError)
_RESOURCE_ERRORS = (ResourceLimitError, MemoryError)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, subcommand: str, config: dict,
                    inputs: list, outputs: list, seed,
                    name: str = "manifest.json") -> Path:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = out_dir / name
    path.write_text(dumps(manifest))
    return path


def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bars = load_bars(args.input, session=args.session)
    r = compute_returns(bars, "price-return")
    v = compute_returns(bars, "volume-return")
    battery = run_battery(r, v, max_lag=args.max_lag, alpha=args.alpha)
    outputs = []
    p = out / "battery.json"
    p.write_text(dumps(battery))
    outputs.append(p)
    p = out / "acf.csv"
    _write_csv(p, ["lag", "acf_abs_r", "acf_abs_v", "acf_r"],
               zip(range(battery["acf"]["max_lag"] + 1), battery["acf"]["abs_r"],
                   battery["acf"]["abs_v"], battery["acf"]["r"]))
    outputs.append(p)
    p = out / "cross_correlation.csv"
    _write_csv(p, ["pair", "rho", "p_value"],
               [(row["pair"], row["rho"], row["p_value"])
                for row in battery["cross_correlation"]])
    outputs.append(p)
    p = out / "descriptive.csv"
    _write_csv(p, ["series", "mean", "median", "standard_deviation", "skewness",
                   "kurtosis", "kurtosis_is_excess", "n"],
               [(k, d["mean"], d["median"], d["standard_deviation"], d["skewness"],
                 d["kurtosis"], d["kurtosis_is_excess"], d["n"])
                for k, d in battery["descriptive"].items()])
    outputs.append(p)
    for name, table in battery["contingency"].items():
        p = out / f"contingency_{name}.csv"
        rows = []
        for ri, row in enumerate(table["observed"]):
            for ci, obs in enumerate(row):
                rows.append((ri, ci, obs, table["expected"][ri][ci]))
        _write_csv(p, ["wait_bin", "value_bin", "observed", "expected"], rows)
        outputs.append(p)
    _write_manifest(out, "analyze",
                    {"input": args.input, "session": args.session,
                     "max_lag": args.max_lag, "alpha": args.alpha},
                    [args.input], outputs, seed=None)
    return 0


def _cmd_estimate(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bars = load_bars(args.input, session=args.session)
    r = compute_returns(bars, "price-return")
    v = compute_returns(bars, "volume-return")
    ra, va = align(r, v)
    cfg = TripletFitConfig(
        n_states_r=args.states_r, n_states_v=args.states_v,
        lam_r=args.lambda_r, lam_v=args.lambda_v,
        n_index_bins=args.index_bins, copula_family=args.copula,
        t_max=args.t_max)
    tk = fit_triplet_kernel(ra, va, cfg)
    save_model(tk, out)
    _write_manifest(out.parent, "estimate",
                    {"input": args.input, "session": args.session,
                     "states_r": args.states_r, "states_v": args.states_v,
                     "lambda_r": args.lambda_r, "lambda_v": args.lambda_v,
                     "index_bins": args.index_bins, "copula": args.copula,
                     "t_max": args.t_max, "out": out.name},
                    [args.input], [out], seed=None,
                    name=out.stem + ".manifest.json")
    return 0


def _cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tk = load_model(args.model)
    outputs = []

    def one(rep: int):
        child = int(np.random.SeedSequence([args.seed, rep]).generate_state(1)[0])
        cfg = SimConfig(length_minutes=args.minutes, seed=child,
                        backtransform=args.backtransform, s0=args.s0, v0=args.v0)
        return rep, simulate_path(tk, cfg)

    with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as pool:
        results = list(pool.map(one, range(args.reps)))
    for rep, path in sorted(results):
        p = out / f"rep_{rep:03d}.csv"
        _write_csv(p, ["minute", "r", "v", "S", "V"],
                   zip(range(args.minutes), path.r, path.v,
                       path.S[1:], path.V[1:]))
        outputs.append(p)
        p = out / f"events_{rep:03d}.csv"
        ev = path.events
        _write_csv(p, ["n", "T", "J_state", "V_state", "bJ", "bV", "xbin", "wbin"],
                   zip(ev["n"], ev["time"], ev["j_state"], ev["v_state"],
                       ev["b_j"], ev["b_v"], ev["x_bin"], ev["w_bin"]))
        outputs.append(p)
    _write_manifest(out, "simulate",
                    {"model": args.model, "minutes": args.minutes,
                     "reps": args.reps, "backtransform": args.backtransform,
                     "s0": args.s0, "v0": args.v0},
                    [args.model], outputs, seed=args.seed)
    return 0


def _cmd_fpt(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tk = load_model(args.model)
    i0 = args.i0 if args.i0 is not None else float(
        tk.kernel_j.grid.representatives[int(np.argmax(tk.kernel_j.counts.sum(axis=(1, 2, 3))))])
    v0 = args.v0 if args.v0 is not None else float(
        tk.kernel_v.grid.representatives[int(np.argmax(tk.kernel_v.counts.sum(axis=(1, 2, 3))))])
    query = FptQuery(rho=args.rho, psi=args.psi, horizon=args.horizon,
                     history_j=[i0], history_v=[v0], history_t=[0], u=args.u)
    if args.method == "recursion":
        res = fpt_survival_recursive(tk, query)
    else:
        res = fpt_survival_mc(tk, query, n_paths=args.paths, seed=args.seed)
    outputs = []
    p = out / "fpt.csv"
    lower = res.lower if res.lower is not None else res.survival
    upper = res.upper if res.upper is not None else res.survival
    _write_csv(p, ["t", "survival", "lower", "upper"],
               zip(range(args.horizon + 1), res.survival, lower, upper))
    outputs.append(p)
    p = out / "fpt.json"
    p.write_text(dumps({"query": {"rho": args.rho, "psi": args.psi,
                                  "horizon": args.horizon, "i0": i0, "v0": v0,
                                  "u": args.u},
                        **res.as_dict()}))
    outputs.append(p)
    _write_manifest(out, "fpt",
                    {"model": args.model, "rho": args.rho, "psi": args.psi,
                     "horizon": args.horizon, "method": args.method,
                     "paths": args.paths, "i0": i0, "v0": v0, "u": args.u},
                    [args.model], outputs, seed=args.seed)
    return 0


def _parse_lambdas(text: str) -> tuple:
    if ":" in text:
        lo, hi, step = (float(p) for p in text.split(":"))
        vals = np.arange(lo, hi + step / 2, step)
        return tuple(float(round(v, 10)) for v in vals)
    return tuple(float(p) for p in text.split(","))


def _cmd_optimize(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bars = load_bars(args.input, session=args.session)
    series = compute_returns(bars, "price-return" if args.variable == "r"
                             else "volume-return")
    spec = GridSpec(state_counts=tuple(int(s) for s in args.states.split(",")),
                    lambdas=_parse_lambdas(args.lambdas),
                    max_lag=args.max_lag, reps_per_point=args.reps,
                    n_index_bins=args.index_bins, epsilon=args.epsilon)
    result = grid_search(series.values, spec, seed=args.seed)
    out.write_text(dumps({"variable": args.variable, **result.as_dict()}))
    _write_manifest(out.parent, "optimize",
                    {"input": args.input, "variable": args.variable,
                     "states": args.states, "lambdas": args.lambdas,
                     "max_lag": args.max_lag, "reps": args.reps,
                     "epsilon": args.epsilon, "out": out.name},
                    [args.input], [out], seed=args.seed,
                    name=out.stem + ".manifest.json")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="wismc",
        description="Indexed semi-Markov modelling of minute returns, volumes "
                    "and waiting times")
    ap.add_argument("--version", action="version", version=f"wismc {__version__}")
    ap.add_argument("--config", default=None,
                    help="JSON file of flag defaults; explicit flags win")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="statistics battery over a minute-bar CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--session", default="09:00-17:30")
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("estimate", help="fit the joint model from a minute-bar CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--session", default="09:00-17:30")
    p.add_argument("--states-r", type=int, default=5)
    p.add_argument("--states-v", type=int, default=5)
    p.add_argument("--lambda-r", type=float, default=0.97)
    p.add_argument("--lambda-v", type=float, default=0.97)
    p.add_argument("--index-bins", type=int, default=5)
    p.add_argument("--copula", default="gaussian",
                   choices=["independence", "gaussian", "clayton", "gumbel", "t"])
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="generate synthetic paths from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--minutes", type=int, required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backtransform", default="empirical",
                   choices=["empirical", "representative"])
    p.add_argument("--s0", type=float, default=1.0)
    p.add_argument("--v0", type=float, default=1.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fpt", help="joint first-passage-time survival")
    p.add_argument("--model", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--psi", type=float, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--method", default="mc", choices=["mc", "recursion"])
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--i0", type=float, default=None)
    p.add_argument("--v0", type=float, default=None)
    p.add_argument("--u", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fpt)

    p = sub.add_parser("optimize", help="grid search over states and memory")
    p.add_argument("--input", required=True)
    p.add_argument("--session", default="09:00-17:30")
    p.add_argument("--variable", default="r", choices=["r", "v"])
    p.add_argument("--states", default="3,5,7,9")
    p.add_argument("--lambdas", default="0.95:0.99:0.01")
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--index-bins", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_optimize)
    return ap


def _apply_config_file(parser, argv):
    """Precedence flags > config file > built-in defaults: values from the
    JSON file become parser defaults before the real parse."""
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    if "--config" not in argv:
        return argv
    pos = argv.index("--config")
    with open(argv[pos + 1]) as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise ParameterError("config file must hold a JSON object")
    parser.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
    for action in parser._subparsers._group_actions[0].choices.values():
        action.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()
                               if any(k.replace("-", "_") == a.dest
                                      for a in action._actions)})
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
    except (OSError, json.JSONDecodeError) as exc:
        _emit_error(exc)
        return EXIT_DATA
    except ParameterError as exc:
        _emit_error(exc)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        _emit_error(exc)
        return EXIT_USAGE
    except _RESOURCE_ERRORS as exc:
        _emit_error(exc)
        return EXIT_RESOURCE
    except _DATA_ERRORS as exc:
        _emit_error(exc)
        return EXIT_DATA
    except WismcError as exc:
        _emit_error(exc)
        return EXIT_DATA


def _emit_error(exc) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__,
                                 "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
