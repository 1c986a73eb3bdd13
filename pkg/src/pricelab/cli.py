"""Command-line front end.

    pricelab sweep    --config run.ini --out out/
    pricelab simulate --policy dip --beta 2 --horizons 1000,2000 --trials 4
    pricelab report   --input out/curves.csv
    pricelab calibrate
    pricelab compare

Every command writes ``config.resolved`` and ``summary.json`` into the output
directory (``PRICELAB_OUT`` overrides ``--out``), plus CSV tables and SVG plots.
Errors exit nonzero after printing a JSON error report on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import analytics, calibrate
from .config import ConfigError, RunConfig, emit_config, parse_config
from .demand_env import EnvConfig
from .sim_harness import (
    RegretCurve,
    TrialConfig,
    TrialFailure,
    read_curves_csv,
    regret_matrix,
    run_sweep,
    sweep_trials,
    write_curves_csv,
)

log = logging.getLogger("pricelab")

COMMANDS = ("simulate", "sweep", "calibrate", "compare", "report")


class CommandError(RuntimeError):
    pass


def _list(conv):
    def parse(text: str):
        try:
            return tuple(conv(v) for v in text.replace(",", " ").split())
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pricelab", description="Contextual dynamic-pricing simulation lab.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI run configuration (defaults apply to missing keys)")
    ap.add_argument("--out", help="output directory (PRICELAB_OUT wins if set)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--parallelism", type=int)
    ap.add_argument("--policy", help="policy name; for compare, a comma list")
    ap.add_argument("--beta", type=_list(float), help="comma list of smoothness levels")
    ap.add_argument("--horizons", type=_list(int), help="comma list of horizons")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--known-utility", dest="known_utility", choices=("true", "false"))
    ap.add_argument("--input", help="curves CSV for report, product CSV or directory for calibrate, "
                                    "model directory for compare")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> RunConfig:
    ov: dict = {}
    if args.seed is not None:
        ov["run.seed"] = args.seed
    if args.parallelism is not None:
        ov["run.parallelism"] = args.parallelism
    if args.trials is not None:
        ov["run.n_trials"] = args.trials
    if args.horizons is not None:
        ov["run.horizons"] = args.horizons
    if args.known_utility is not None:
        ov["run.known_utility" if args.command != "compare" else "compare.known_utility"] = \
            args.known_utility == "true"
    if args.command == "compare":
        if args.policy:
            ov["compare.policies"] = tuple(p for p in args.policy.replace(",", " ").split())
        if args.beta:
            ov["compare.beta"] = args.beta[0]
        if args.horizons:
            ov["compare.horizon"] = args.horizons[-1]
        if args.input:
            ov["compare.models"] = args.input
    else:
        if args.policy:
            ov["run.policy"] = args.policy
        if args.beta is not None:
            ov["run.betas"] = args.beta
    if args.command == "calibrate" and args.input:
        ov["calibrate.data"] = args.input
    out = os.environ.get("PRICELAB_OUT") or args.out
    if out:
        ov["run.out"] = out
    return parse_config(args.config, ov)


# ---------------------------------------------------------------------- helpers


def _policy_params(cfg: RunConfig, policy: str, known_utility: bool) -> dict:
    p = cfg.policy_params(policy)
    if policy in ("ilpr", "kernel", "dip"):
        p["known_utility"] = known_utility
    return p


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _failures(results) -> list[dict]:
    return [{"trial_id": r.trial_id, "policy": r.policy, "horizon": r.horizon, "error_type": r.error_type,
             "message": r.message} for r in results if isinstance(r, TrialFailure)]


def _slope_reports(rows, policy: str, betas, cfg: RunConfig, known_utility: bool) -> list:
    reports = []
    for beta in betas:
        _, h, mat = regret_matrix(rows, policy, beta)
        if mat.shape[0] < 2 or h.size < 2:
            log.warning("beta=%g: not enough trials or horizons for a slope", beta)
            continue
        reports.append(analytics.cluster_bootstrap(mat, h, cfg.run.n_boot, cfg.run.seed, beta, known_utility,
                                                   policy))
    return reports


def _mean_band(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = mat.mean(axis=0)
    se = mat.std(axis=0, ddof=1) / math.sqrt(mat.shape[0]) if mat.shape[0] > 1 else np.zeros_like(mean)
    return mean, 1.96 * se


def _plot_rows(path, rows, policies_betas, title):
    series = {}
    for policy, beta in policies_betas:
        _, h, mat = regret_matrix(rows, policy, beta)
        if mat.size == 0 or np.any(mat.mean(axis=0) <= 0):
            continue
        mean, band = _mean_band(mat)
        series[f"{policy} beta={beta:g}"] = (h, mean, band)
    if series:
        analytics.svg_loglog(path, series, title=title)


def _slopes_summary(reports) -> list[dict]:
    return [analytics.report_dict(r) for r in reports]


# ---------------------------------------------------------------------- commands


def cmd_sweep(cfg: RunConfig, out: str) -> dict:
    """One independent trial per (beta, horizon, replicate)."""
    r = cfg.run
    trials = sweep_trials(cfg.env, r.policy, r.betas, r.horizons, r.n_trials, r.seed,
                          _policy_params(cfg, r.policy, r.known_utility))
    results = run_sweep(trials, r.parallelism)
    return _finish_curves(cfg, out, results, r.policy, r.betas, r.known_utility, "sweep")


def cmd_simulate(cfg: RunConfig, out: str) -> dict:
    """One trial per (beta, replicate) run to the largest horizon, recorded at every horizon."""
    r = cfg.run
    params = _policy_params(cfg, r.policy, r.known_utility)
    trials = []
    for beta in r.betas:
        env = replace(cfg.env, beta=float(beta))
        p = tuple(sorted(dict(params, beta=float(beta)).items()))
        for i in range(r.n_trials):
            trials.append(TrialConfig(env, r.policy, p, r.horizons[-1], tuple(r.horizons), r.seed, i))
    results = run_sweep(trials, r.parallelism)
    return _finish_curves(cfg, out, results, r.policy, r.betas, r.known_utility, "simulate")


def _finish_curves(cfg, out, results, policy, betas, known_utility, name) -> dict:
    curves_path = os.path.join(out, "curves.csv")
    n_rows = write_curves_csv(curves_path, results)
    rows = read_curves_csv(curves_path)
    reports = _slope_reports(rows, policy, betas, cfg, known_utility)
    analytics.write_slopes_csv(os.path.join(out, "slopes.csv"), reports)
    _plot_rows(os.path.join(out, "plots", f"{name}.svg"), rows, [(policy, b) for b in betas],
               f"{policy}: cumulative regret")
    events = sum(len(x.events) for x in results if isinstance(x, RegretCurve))
    return {"command": name, "curve_rows": n_rows, "slopes": _slopes_summary(reports),
            "failures": _failures(results), "policy_events": events}


def cmd_report(cfg: RunConfig, out: str, source: str | None) -> dict:
    source = source or os.path.join(out, "curves.csv")
    if not os.path.exists(source):
        raise CommandError(f"no curves file at {source}")
    rows = read_curves_csv(source)
    if not rows:
        raise CommandError(f"{source} has no curve rows")
    known = cfg.run.known_utility
    pairs = sorted({(row["policy"], row["beta"]) for row in rows})
    reports = []
    for policy, beta in pairs:
        reports.extend(_slope_reports(rows, policy, [beta], cfg, known))
    analytics.write_slopes_csv(os.path.join(out, "slopes.csv"), reports)
    _plot_rows(os.path.join(out, "plots", "report.svg"), rows, pairs, "cumulative regret")
    if os.path.abspath(source) != os.path.abspath(os.path.join(out, "curves.csv")):
        # copy through so the output tree is self-contained; the input is never modified
        with open(source) as src, open(os.path.join(out, "curves.csv"), "w") as dst:
            dst.write(src.read())
    return {"command": "report", "source": source, "slopes": _slopes_summary(reports)}


def _calibrate_one(args):
    ds, c = args
    try:
        return calibrate.calibrate_product(ds, c.ridge, c.sigma, c.grid_n)
    except (calibrate.ConvergenceError, calibrate.DataError, np.linalg.LinAlgError) as exc:
        return f"{type(exc).__name__}: {exc}"


def cmd_calibrate(cfg: RunConfig, out: str) -> dict:
    c = cfg.calibrate
    datasets = calibrate.load_products_csv(c.data)
    usable = calibrate.screen_products(datasets, c.min_obs, (c.fraction_lo, c.fraction_hi))
    work = [(d, c) for d in usable]
    if cfg.run.parallelism > 1 and len(work) > 1:
        with ProcessPoolExecutor(cfg.run.parallelism) as pool:
            fits = list(pool.map(_calibrate_one, work))
    else:
        fits = [_calibrate_one(w) for w in work]
    models_dir = os.path.join(out, "models")
    os.makedirs(models_dir, exist_ok=True)
    table, errors = [], []
    for d, fit in zip(usable, fits):
        if isinstance(fit, str):
            errors.append({"product_id": d.product_id, "error": fit})
            continue
        calibrate.save_model(fit, os.path.join(models_dir, f"{d.product_id}.json"))
        table.append({"product_id": d.product_id, "n": d.n, "purchase_fraction": round(d.purchase_fraction, 6),
                      "intercept": round(fit.intercept, 8), "price_lo": fit.price_bounds[0],
                      "price_hi": fit.price_bounds[1]})
    with open(os.path.join(out, "calibration.csv"), "w") as fh:
        cols = ["product_id", "n", "purchase_fraction", "intercept", "price_lo", "price_hi"]
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(str(row[k]) for k in cols) + "\n")
    return {"command": "calibrate", "products_read": len(datasets), "products_usable": len(usable),
            "screened_out": sorted({d.product_id for d in datasets} - {d.product_id for d in usable}),
            "calibrated": [row["product_id"] for row in table], "errors": errors}


def _checkpoints(T: int, n: int) -> tuple[int, ...]:
    pts = np.unique(np.round(np.geomspace(max(1, T / 2**(n - 1)), T, n)).astype(int))
    return tuple(int(v) for v in pts[pts >= 1])


def _compare_on(cfg: RunConfig, env: EnvConfig, known: bool, semireal: bool):
    cm = cfg.compare
    cps = _checkpoints(cm.horizon, cm.n_checkpoints)
    trials = []
    for pol in cm.policies:
        params = _policy_params(cfg, pol, known)
        if pol in ("ilpr", "kernel", "dip"):
            params["beta"] = float(env.beta)
        if semireal and pol == "ilpr":
            params["utility_model"] = "semireal_single_index"
        for i in range(cfg.run.n_trials):
            trials.append(TrialConfig(env, pol, tuple(sorted(params.items())), cm.horizon, cps, cfg.run.seed, i))
    return run_sweep(trials, cfg.run.parallelism)


def _final_by_policy(results, policies) -> dict:
    return {p: np.array([r.cumulative_regret[-1] for r in results
                         if isinstance(r, RegretCurve) and r.policy == p]) for p in policies}


def cmd_compare(cfg: RunConfig, out: str) -> dict:
    cm = cfg.compare
    if cm.models:
        return _compare_models(cfg, out)
    env = replace(cfg.env, beta=float(cm.beta))
    results = _compare_on(cfg, env, cm.known_utility, False)
    write_curves_csv(os.path.join(out, "curves.csv"), results)
    rows = read_curves_csv(os.path.join(out, "curves.csv"))
    _plot_rows(os.path.join(out, "plots", "compare.svg"), rows, [(p, float(cm.beta)) for p in cm.policies],
               f"policy comparison, T={cm.horizon}")
    finals = _final_by_policy(results, cm.policies)
    summary = {"command": "compare", "horizon": cm.horizon, "beta": cm.beta, "known_utility": cm.known_utility,
               "mean_final_regret": {p: float(v.mean()) if v.size else None for p, v in finals.items()},
               "failures": _failures(results), "differences": {}}
    ref = cm.policies[0]
    for p in cm.policies[1:]:
        if finals[ref].size > 1 and finals[p].size > 1:
            summary["differences"][f"{p}-{ref}"] = analytics.difference_summary(finals[ref], finals[p])
    # slopes of the mean curve over checkpoints, per policy
    reports = []
    for p in cm.policies:
        _, h, mat = regret_matrix(rows, p, float(cm.beta))
        if mat.shape[0] >= 2 and h.size >= 2 and np.all(mat.mean(axis=0) > 0):
            reports.append(analytics.cluster_bootstrap(mat, h, cfg.run.n_boot, cfg.run.seed, cm.beta,
                                                       cm.known_utility, p))
    analytics.write_slopes_csv(os.path.join(out, "slopes.csv"), reports)
    summary["slopes"] = _slopes_summary(reports)
    return summary


def _compare_models(cfg: RunConfig, out: str) -> dict:
    cm = cfg.compare
    names = sorted(n for n in os.listdir(cm.models) if n.endswith(".json"))
    if not names:
        raise CommandError(f"no calibrated model files in {cm.models}")
    all_results, per_product = [], {}
    for name in names:
        env = EnvConfig(kind="semireal", model_path=os.path.join(cm.models, name))
        results = _compare_on(cfg, env, False, True)
        pid = name[:-5]
        all_results.extend(results)
        finals = _final_by_policy(results, cm.policies)
        per_product[pid] = {p: float(v.mean()) if v.size else None for p, v in finals.items()}
        pdir = os.path.join(out, "products", pid)
        os.makedirs(pdir, exist_ok=True)
        write_curves_csv(os.path.join(pdir, "curves.csv"), results)
    # the top-level curves file pools products; trial ids are per product
    write_curves_csv(os.path.join(out, "curves.csv"), all_results)
    ref = cm.policies[0]
    improvements = {}
    for p in cm.policies[1:]:
        vals = [1 - v[ref] / v[p] for v in per_product.values() if v.get(p) and v.get(ref) is not None]
        improvements[p] = {"mean_relative_improvement": float(np.mean(vals)) if vals else None,
                           "products": len(vals)}
    analytics.write_slopes_csv(os.path.join(out, "slopes.csv"), [])
    return {"command": "compare", "mode": "semireal", "horizon": cm.horizon, "per_product": per_product,
            "improvement_of_" + ref: improvements, "failures": _failures(all_results)}


# ---------------------------------------------------------------------- entry


def run_command(command: str, cfg: RunConfig, source: str | None = None) -> dict:
    out = cfg.run.out
    os.makedirs(os.path.join(out, "plots"), exist_ok=True)
    with open(os.path.join(out, "config.resolved"), "w") as fh:
        fh.write(emit_config(cfg))
    if command == "sweep":
        summary = cmd_sweep(cfg, out)
    elif command == "simulate":
        summary = cmd_simulate(cfg, out)
    elif command == "report":
        summary = cmd_report(cfg, out, source)
    elif command == "calibrate":
        summary = cmd_calibrate(cfg, out)
        analytics.write_slopes_csv(os.path.join(out, "slopes.csv"), [])
        write_curves_csv(os.path.join(out, "curves.csv"), [])
    elif command == "compare":
        summary = cmd_compare(cfg, out)
    else:
        raise CommandError(f"unknown command {command!r}")
    summary["status"] = "ok" if not summary.get("failures") and not summary.get("errors") else "partial"
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def _error_report(command: str, exc: BaseException, out: str | None) -> dict:
    rep = {"status": "error", "command": command, "error_type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        rep["key"] = exc.key
    else:
        rep["traceback"] = traceback.format_exc()
    if out and os.path.isdir(out):
        try:
            _write_json(os.path.join(out, "error.json"), rep)
        except OSError:
            pass
    return rep


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = None
    try:
        cfg = resolve_config(args)
        out = cfg.run.out
        summary = run_command(args.command, cfg, args.input if args.command == "report" else None)
    except ConfigError as exc:
        print(json.dumps(_error_report(args.command, exc, out)), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as structured JSON
        print(json.dumps(_error_report(args.command, exc, out)), file=sys.stderr)
        return 1
    print(json.dumps({k: summary[k] for k in ("command", "status") if k in summary}))
    return 0 if summary["status"] == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
