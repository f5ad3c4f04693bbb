"""Command-line entry point.

Subcommands: ``train``, ``verify``, ``example``, ``ratefit``, ``solve``.
Exit codes: 0 success, 1 property failure, 2 usage/config error,
3 runtime/solver error.  All outputs are pure functions of (flags, seed):
rerunning a command reproduces its CSV/JSON/SVG bytes exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data as data_mod
from . import harness, verify
from .errors import BnmlError, ConfigInvalid, Diverged
from .linalg import Rng
from .serialize import dump17
from .solvers import solve_max_margin, solve_uniform_margin, span_spectrum
from .svgplot import line_chart
from .training import TrainConfig, TrainTrace, train

USAGE_ERROR = 2
RUNTIME_ERROR = 3

TRAIN_KEYS = {
    "model": "bn-linear", "data": "gaussian", "n": 50, "d": 1000, "P": 4,
    "eta": 0.05, "steps": 200_000, "init_scale": 0.01, "gamma0": 1.0,
    "seed": 0, "log_every": 100, "sigma": None, "center": False,
    "probes": True, "plot": False, "out": None, "tail": 0.5,
}

MODEL_KIND = {"bn-linear": "bn_linear", "bn-cnn": "bn_cnn", "plain": "plain_logistic"}


def _merge_config(defaults: dict, args: argparse.Namespace, keys) -> dict:
    """defaults <- JSON config file <- explicitly passed flags."""
    merged = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _build_dataset(cfg: dict, rng: Rng):
    """Returns (dataset, test_sampler_or_None)."""
    source = cfg["data"]
    if source == "gaussian":
        return data_mod.gen_gaussian_experiment(rng, cfg["n"], cfg["d"]), None
    if source == "example1":
        excfg = data_mod.Example1Config.theorem_scaled(
            n=cfg["n"], p_patches=cfg["P"],
            d=cfg["d"] if cfg["d"] else None,
            sigma=cfg["sigma"])
        return data_mod.gen_example1(rng, excfg, force_center=cfg["center"])
    if source == "example2":
        excfg = data_mod.Example2Config.paper_scaled(cfg["n"])
        return data_mod.gen_example2(rng, excfg, force_center=cfg["center"])
    if source.startswith("file:"):
        return data_mod.load_dataset(source[len("file:"):]), None
    raise ConfigInvalid(f"unknown data source {source!r} "
                        "(want gaussian, example1, example2, or file:<path>)")


def _compute_probes(dataset, want: bool):
    wstar = wmax = None
    if not want:
        return wstar, wmax
    try:
        wstar = solve_uniform_margin(dataset).solution
    except BnmlError as exc:
        print(f"note: uniform-margin probe unavailable ({exc})", file=sys.stderr)
    try:
        wmax = solve_max_margin(dataset).solution
    except BnmlError as exc:
        print(f"note: max-margin probe unavailable ({exc})", file=sys.stderr)
    return wstar, wmax


def _run_training(cfg: dict):
    if cfg["model"] not in MODEL_KIND:
        raise ConfigInvalid(f"unknown model {cfg['model']!r}")
    dataset, _ = _build_dataset(cfg, Rng(cfg["seed"]))
    if cfg["model"] == "bn-linear" and dataset.patch_count != 1:
        raise ConfigInvalid("bn-linear expects single-patch data; use bn-cnn")
    tcfg = TrainConfig(eta=cfg["eta"], steps=cfg["steps"], init_scale=cfg["init_scale"],
                       gamma0=cfg["gamma0"], seed=cfg["seed"], log_every=cfg["log_every"],
                       model_kind=MODEL_KIND[cfg["model"]])
    wstar, wmax = _compute_probes(dataset, cfg["probes"])
    trace = train(dataset, tcfg, wstar=wstar, wmax=wmax, collect_margins=cfg["plot"])
    return dataset, trace


def _write_train_outputs(cfg: dict, trace: TrainTrace, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    trace.to_csv(os.path.join(out_dir, "trace.csv"))
    dump17(cfg, os.path.join(out_dir, "effective_config.json"))
    final = trace.rows[-1]
    state = {
        "model": cfg["model"],
        "steps": final.t,
        "gamma": trace.final_state.gamma if trace.final_state else final.gamma,
        "w": trace.final_state.w if trace.final_state else [],
        "final_metrics": {
            "loss": final.loss, "discrepancy": final.discrepancy,
            "w_norm2": final.w_norm2, "w_sigma_norm": final.w_sigma_norm,
            "min_margin": final.min_margin, "max_margin": final.max_margin,
        },
    }
    dump17(state, os.path.join(out_dir, "final_state.json"))
    if cfg["plot"] and trace.margin_history:
        ts = trace.ts
        hist = np.stack(trace.margin_history)  # (rows, n)
        series = [("", ts, hist[:, i]) for i in range(hist.shape[1])]
        svg = line_chart(series, title=f"per-sample margins ({cfg['model']})",
                         xlabel="iteration t", ylabel="y_i <w, x_i>")
        with open(os.path.join(out_dir, "margins.svg"), "w", encoding="utf-8") as fh:
            fh.write(svg)


def cmd_train(args) -> int:
    cfg = _merge_config(TRAIN_KEYS, args, TRAIN_KEYS.keys())
    if cfg["out"] is None:
        raise ConfigInvalid("train requires --out <dir>")
    try:
        _, trace = _run_training(cfg)
    except Diverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.trace is not None and exc.trace.rows and cfg["out"]:
            os.makedirs(cfg["out"], exist_ok=True)
            exc.trace.to_csv(os.path.join(cfg["out"], "trace_partial.csv"))
        return RUNTIME_ERROR
    _write_train_outputs(cfg, trace, cfg["out"])
    last = trace.rows[-1]
    print(f"trained {cfg['model']} for {last.t} steps: loss={last.loss:.6g} "
          f"discrepancy={last.discrepancy:.6g} gamma={last.gamma:.6g}")
    return 0


def cmd_verify(args) -> int:
    suite = args.suite or "all"
    trials = args.trials if args.trials is not None else 100
    seed = args.seed if args.seed is not None else 0
    if trials == 0:
        print("warning: --trials 0 requested; nothing to check (vacuous pass)")
        return 0
    results = verify.run_suite(suite, trials, seed, corrupt_gradients=args.corrupt_gradients)
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    if failed:
        out = args.out or "."
        os.makedirs(out, exist_ok=True)
        payload = {r.name: r.failing_instance for r in failed if r.failing_instance}
        path = os.path.join(out, "verify_failures.json")
        dump17(payload, path)
        print(f"{len(failed)} check(s) failed; first failing instances -> {path}",
              file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_example(args) -> int:
    which = args.which
    n = args.n if args.n is not None else (20 if which == 1 else 50)
    mc = args.mc if args.mc is not None else 10_000
    seeds = args.seeds if args.seeds is not None else 5
    seed = args.seed if args.seed is not None else 4
    if which == 1:
        cfg = data_mod.Example1Config.theorem_scaled(
            n=n, p_patches=args.P if args.P is not None else 4,
            d=args.d, sigma=args.sigma)
    else:
        cfg = data_mod.Example2Config.paper_scaled(n)
    results = harness.run_example_seeds(which, cfg, mc, seed, seeds)
    reports = [r for r in results if r is not None]
    infeasible = len(results) - len(reports)
    if infeasible > seeds // 2:
        print(f"error: uniform-margin system infeasible in {infeasible} of {seeds} seeds",
              file=sys.stderr)
        return RUNTIME_ERROR
    errs_u = [r.error_uniform for r in reports]
    errs_m = [r.error_max for r in reports]
    print(f"example {which}: n={n} mc={mc} seeds={seeds} (master seed {seed})")
    print("seed_idx  error_uniform  wilson_hw   error_max   wilson_hw   valid")
    for i, r in enumerate(reports):
        print(f"{i:8d}  {r.error_uniform:13.5f}  {r.wilson_halfwidth_uniform:9.5f}  "
              f"{r.error_max:10.5f}  {r.wilson_halfwidth_max:9.5f}   {r.valid}")
    print(f"mean: uniform={np.mean(errs_u):.5f}  max={np.mean(errs_m):.5f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        payload = {
            "which": which, "n": n, "mc_samples": mc, "seeds": seeds, "master_seed": seed,
            "reports": [r.to_dict() for r in reports],
            "summary": {"mean_error_uniform": float(np.mean(errs_u)),
                        "mean_error_max": float(np.mean(errs_m))},
        }
        dump17(payload, os.path.join(args.out, f"example{which}_report.json"))
    return 0


def cmd_ratefit(args) -> int:
    tail = args.tail if args.tail is not None else 0.5
    if args.trace:
        trace = TrainTrace.from_csv(args.trace)
    else:
        cfg = _merge_config(TRAIN_KEYS, args, TRAIN_KEYS.keys())
        _, trace = _run_training(cfg)
    fit = harness.fit_rate(trace, tail_fraction=tail)
    print(f"slope={fit.slope:.6g} intercept={fit.intercept:.6g} r2={fit.r_squared:.6g} "
          f"window=[{fit.window[0]}, {fit.window[1]}] loss_band_ratio={fit.loss_band_ratio:.6g}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        dump17(fit.to_dict(), os.path.join(args.out, "ratefit.json"))
        pts = [(r.t, r.discrepancy) for r in trace.rows
               if r.t >= 1 and r.discrepancy > 0 and fit.window[0] <= r.t <= fit.window[1]]
        xs = np.log([p[0] for p in pts]) ** 2
        ys = np.log([p[1] for p in pts])
        fitline = fit.intercept + fit.slope * xs
        svg = line_chart(
            [("log D (measured)", xs, ys), ("fitted line", xs, fitline)],
            title="margin discrepancy decay", xlabel="log^2 t", ylabel="log D")
        with open(os.path.join(args.out, "ratefit.svg"), "w", encoding="utf-8") as fh:
            fh.write(svg)
    return 0


def cmd_solve(args) -> int:
    dataset = data_mod.load_dataset(args.dataset)
    which = args.which or "all"
    out = {}
    if which in ("uniform", "all"):
        out["uniform_margin"] = solve_uniform_margin(dataset).to_dict()
    if which in ("max", "all"):
        out["max_margin"] = solve_max_margin(dataset).to_dict()
    if which in ("spectrum", "all"):
        spec = span_spectrum(dataset)
        out["spectrum"] = {"lambda_min": spec.lambda_min,
                           "lambda_max": spec.lambda_max, "rank": spec.rank}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        dump17(out, os.path.join(args.out, "solve_report.json"))
    for key, val in out.items():
        if key == "spectrum":
            print(f"{key}: lambda_min={val['lambda_min']:.6g} "
                  f"lambda_max={val['lambda_max']:.6g} rank={val['rank']}")
        else:
            print(f"{key}: residual={val['residual']:.3e} iterations={val['iterations']}")
    return 0


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--model", choices=sorted(MODEL_KIND))
    p.add_argument("--data", help="gaussian | example1 | example2 | file:<path>")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--P", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--init-scale", dest="init_scale", type=float)
    p.add_argument("--gamma0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--center", action="store_const", const=True, default=None,
                   help="force empirical centering of generated example data")
    p.add_argument("--no-probes", dest="probes", action="store_const", const=False,
                   default=None, help="skip computing w*/w_max reference probes")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnml",
        description="margin-uniformity dynamics of batch-normalized linear models")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run gradient descent and write a metric trace")
    _add_train_flags(p_train)
    p_train.add_argument("--plot", action="store_const", const=True, default=None,
                         help="write an SVG of per-sample margins vs t")
    p_train.set_defaults(func=cmd_train)

    p_verify = sub.add_parser("verify", help="run randomized identity/inequality suites")
    p_verify.add_argument("--suite", choices=["identities", "inequalities", "gradients", "all"])
    p_verify.add_argument("--trials", type=int)
    p_verify.add_argument("--seed", type=int)
    p_verify.add_argument("--out")
    p_verify.add_argument("--corrupt-gradients", action="store_true",
                          help=argparse.SUPPRESS)  # negative-control debug flag
    p_verify.set_defaults(func=cmd_verify)

    p_example = sub.add_parser("example", help="generalization comparison on a synthetic law")
    p_example.add_argument("--which", type=int, choices=[1, 2], required=True)
    p_example.add_argument("--n", type=int)
    p_example.add_argument("--d", type=int)
    p_example.add_argument("--P", type=int)
    p_example.add_argument("--sigma", type=float)
    p_example.add_argument("--mc", type=int)
    p_example.add_argument("--seeds", type=int)
    p_example.add_argument("--seed", type=int, help="master seed for worker splitting")
    p_example.add_argument("--out")
    p_example.set_defaults(func=cmd_example)

    p_rate = sub.add_parser("ratefit", help="fit log D against log^2 t over a tail window")
    p_rate.add_argument("--trace", help="trace CSV from a previous train run")
    p_rate.add_argument("--tail", type=float)
    _add_train_flags(p_rate)
    p_rate.set_defaults(func=cmd_ratefit)

    p_solve = sub.add_parser("solve", help="reference solvers on a dataset file")
    p_solve.add_argument("dataset", help="dataset CSV path")
    p_solve.add_argument("--which", choices=["uniform", "max", "spectrum", "all"])
    p_solve.add_argument("--out")
    p_solve.set_defaults(func=cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Diverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except BnmlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
