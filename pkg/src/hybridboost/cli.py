"""Command-line front end: ``hybridboost <command> [options]``.

Commands: fit, predict, explain, weights, simulate, evaluate. Every command
writes its CSV or JSON outputs plus a JSON manifest holding the full
effective configuration, so a rerun with the same manifest reproduces the
outputs byte for byte.

Exit codes: 0 success, 2 configuration fault, 3 data fault, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields, replace

import numpy as np

from . import __version__
from .booster import (
    PARAMS,
    AlternatingParams,
    CompetitionParams,
    Ensemble,
    dumps,
    fit,
    fit_ensemble,
    load_model,
    members_of,
    predict,
    predict_decomposed,
)
from .data import DataError, Dataset, load_csv, load_features, read_groups

log = logging.getLogger("hybridboost")

EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 2, 3, 4
VARIANTS = {"plus": "competition", "alt": "alternating"}


class ConfigError(ValueError):
    pass


# -- shared helpers -----------------------------------------------------------

HYPER_FLAGS = {
    # name: (type, help)
    "M": (int, "boosting steps (competition) or cycles (alternating)"),
    "T": (int, "tree steps per cycle (alternating)"),
    "eta": (float, "learning rate (competition)"),
    "eta_tree": (float, "tree learning rate (alternating)"),
    "eta_lin": (float, "linear learning rate (alternating); 0 disables the linear channel"),
    "q": (float, "row subsample fraction per step (competition)"),
    "rho": (float, "column fraction screened by the linear candidate (competition)"),
    "max_depth": (int, "tree depth"),
    "min_leaf": (int, "minimum rows per leaf"),
    "patience": (int, "early-stopping patience on the validation set"),
}


def _add_hyper(p):
    g = p.add_argument_group("hyperparameters (defaults per variant)")
    for name, (typ, help_) in HYPER_FLAGS.items():
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        g.add_argument(*flags, dest=name, type=typ, default=None, help=help_)
    g.add_argument("--judge", choices=("oob", "validation", "training"), default=None,
                   help="judge set for the competition variant (default oob)")
    g.add_argument("--no-calibrate", dest="calibrate", action="store_false", default=None,
                   help="skip the post-fit scale calibration (competition)")


def _hyper(variant: str, args) -> CompetitionParams | AlternatingParams:
    """Variant defaults overridden by whichever flags were given."""
    cls = PARAMS[variant]
    names = {f.name for f in fields(cls)}
    given = {k: getattr(args, k) for k in list(HYPER_FLAGS) + ["judge", "calibrate"]
             if getattr(args, k, None) is not None}
    stray = sorted(set(given) - names)
    if stray:
        raise ConfigError(f"options not used by the {variant} variant: " + ", ".join("--" + s for s in stray))
    hyper = cls(**given)
    try:
        hyper.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return hyper


def _variant(args) -> str:
    return VARIANTS[args.variant]


def _write_csv(frame, path):
    frame.to_csv(path, index=False, lineterminator="\n")


def _write_manifest(args, config: dict, outputs: dict, results: dict | None = None):
    path = args.manifest or (str(next(iter(outputs.values()))) + ".manifest.json")
    doc = {"command": args.command, "version": __version__, "config": config, "outputs": outputs}
    if results is not None:
        doc["results"] = results
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _base_config(args, skip=()) -> dict:
    skip = set(skip) | {"command", "func", "manifest"} | set(HYPER_FLAGS) | {"judge", "calibrate"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"malformed model file {path}: {exc}") from exc


def _model_data(path, target, columns) -> Dataset:
    """Rows of ``path`` restricted to the model's columns, with targets."""
    x = load_features(path, columns)
    y = load_features(path, [target])[:, 0]
    return Dataset(x, y, tuple(columns))


def _groups(args, columns):
    return read_groups(args.groups, columns) if args.groups else None


# -- commands ------------------------------------------------------------------

def cmd_fit(args):
    import pandas as pd

    variant = _variant(args)
    hyper = _hyper(variant, args)
    if args.ensemble < 1:
        raise ConfigError("--ensemble must be >= 1")
    if isinstance(hyper, CompetitionParams) and hyper.judge == "validation" and not args.validation:
        raise ConfigError("--judge validation needs --validation")
    data = load_csv(args.data, args.target)
    val = _model_data(args.validation, args.target, data.column_names) if args.validation else None
    if args.ensemble > 1:
        model = fit_ensemble(data, variant, hyper, args.ensemble, args.seed, val)
    else:
        model = fit(data, variant, hyper, args.seed, 0, val)
    with open(args.model, "w") as fh:
        fh.write(dumps(model))

    rows = []
    for m in members_of(model):
        counts = m.step_counts()
        n_steps = counts["tree"] + counts["linear"]
        resid = data.y - predict(m, data.x)
        rows.append({
            "member": str(m.member), "steps": n_steps, "tree_steps": counts["tree"],
            "linear_steps": counts["linear"], "linear_share": counts["linear"] / n_steps if n_steps else 0.0,
            "trivial_steps": sum(_trivial(s) for s in m.steps),
            "calibration_beta": m.calibration_beta, "in_sample_mse": float(np.mean(resid * resid)),
        })
    if isinstance(model, Ensemble):
        resid = data.y - predict(model, data.x)
        rows.append({"member": "ensemble", "steps": sum(r["steps"] for r in rows),
                     "tree_steps": sum(r["tree_steps"] for r in rows),
                     "linear_steps": sum(r["linear_steps"] for r in rows),
                     "linear_share": float(np.mean([r["linear_share"] for r in rows])),
                     "trivial_steps": sum(r["trivial_steps"] for r in rows), "calibration_beta": None,
                     "in_sample_mse": float(np.mean(resid * resid))})
    summary = args.summary or args.model + ".summary.csv"
    _write_csv(pd.DataFrame(rows), summary)
    config = _base_config(args)
    config.update(variant=variant, hyper=asdict(hyper))
    _write_manifest(args, config, {"model": args.model, "summary": summary},
                    {"in_sample_mse": rows[-1]["in_sample_mse"]})


def _trivial(step) -> bool:
    """A step whose learner predicts exactly zero everywhere."""
    lr = step.learner
    if step.kind == "tree":
        return lr.n_leaves == 1 and lr.value[0] == 0.0
    return lr.alpha == 0.0 and (lr.column is None or lr.beta == 0.0)


def cmd_predict(args):
    import pandas as pd

    model = _load_model(args.model)
    x = load_features(args.data, model.column_names)
    out = {"row": np.arange(x.shape[0]), "forecast": predict(model, x)}
    if args.decompose:
        dec = predict_decomposed(model, x)
        out.update(base=dec.base, linear=dec.linear, tree=dec.tree)
        gap = float(np.max(np.abs(dec.total - out["forecast"]), initial=0.0))
        if not gap < 1e-10:
            raise ArithmeticError(f"decomposition identity violated: max gap {gap:.3e}")
    _write_csv(pd.DataFrame(out), args.out)
    _write_manifest(args, _base_config(args), {"predictions": args.out})


def cmd_explain(args):
    from .interpret import variable_importance

    model = _load_model(args.model)
    data = _model_data(args.data, args.target, model.column_names)
    groups = _groups(args, model.column_names)
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    report = variable_importance(model, data, groups, args.repeats, args.seed)
    cols = ["group", "vi_total_mean", "vi_total_std", "vi_linear_mean", "vi_trees_mean", "cross_mean", "n_repeats"]
    _write_csv(report.to_frame()[cols], args.out)
    _write_manifest(args, _base_config(args), {"importance": args.out},
                    {"mse_baseline": report.mse_baseline})


def cmd_weights(args):
    import pandas as pd

    from .dual import UnsupportedModel, centered_moving_average, check_identity, test_weights, top_weighted_windows

    model = _load_model(args.model)
    if isinstance(model, Ensemble) or model.variant != "alternating":
        raise UnsupportedModel(
            "observation weights need a single alternating-variant model; for the competition "
            "variant they are feasible but not implemented")
    train = _model_data(args.data, args.target, model.column_names)
    x_query = load_features(args.query, model.column_names) if args.query else train.x
    attr = test_weights(model, train, x_query)
    gap = check_identity(model, attr, train.y, x_query, tol=1e-8)

    nq, n = attr.w_total.shape
    frame = pd.DataFrame({
        "query": np.repeat(np.arange(nq), n), "train_index": np.tile(np.arange(n), nq),
        "w_base": attr.w_base.ravel(), "w_linear": attr.w_linear.ravel(),
        "w_tree": attr.w_tree.ravel(), "w_total": attr.w_total.ravel(),
    })
    if args.smooth:
        frame["w_total_cma"] = np.concatenate([centered_moving_average(r, args.smooth) for r in attr.w_total])
    _write_csv(frame, args.out)
    outputs = {"weights": args.out}
    if args.window:
        if args.window > n:
            raise ConfigError(f"--window {args.window} exceeds the {n} training rows")
        ranked = []
        for i in range(nq):
            for rank, entry in enumerate(top_weighted_windows(attr, i, args.window)[: args.top]):
                ranked.append({"query": i, "rank": rank + 1, **entry})
        windows_out = args.windows_out or args.out + ".windows.csv"
        _write_csv(pd.DataFrame(ranked, columns=["query", "rank", "start", "total", "base", "linear", "tree"]),
                   windows_out)
        outputs["windows"] = windows_out
    _write_manifest(args, _base_config(args), outputs, {"max_identity_gap": gap})


def cmd_simulate(args):
    from .simulate import DGPS, METHODS, BenchConfig, run_bench, table_grid

    dgps = tuple(args.dgps.split(",")) if args.dgps else DGPS
    methods = tuple(args.methods.split(",")) if args.methods else METHODS
    bad = [d for d in dgps if d not in DGPS] + [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError("unknown DGP or method: " + ", ".join(bad))
    try:
        snrs = tuple(float(s) for s in args.snrs.split(","))
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --snrs/--sizes list: {exc}") from exc
    if args.ensemble < 1:
        raise ConfigError("--ensemble must be >= 1")
    # --M, --max-depth, --min-leaf apply to both variants; the rest to the one that has them
    comp_args = argparse.Namespace(**{k: getattr(args, k) for k in ("M", "eta", "q", "rho", "max_depth",
                                                                       "min_leaf", "judge", "calibrate")})
    alt_args = argparse.Namespace(**{k: getattr(args, k) for k in ("M", "T", "eta_tree", "eta_lin",
                                                                      "max_depth", "min_leaf")})
    comp = _hyper("competition", comp_args)
    if args.calibrate is None:
        comp = replace(comp, calibrate=False)
    config = BenchConfig(comp, _hyper("alternating", alt_args), args.ensemble)
    try:
        grid = table_grid(dgps, snrs, sizes, args.n_test, args.reps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = run_bench(grid, methods, args.seed, config)
    _write_csv(result.to_frame(), args.out)
    cfg = _base_config(args)
    cfg["bench"] = config.to_dict()
    _write_manifest(args, cfg, {"table": args.out}, {"failures": result.failures})


def cmd_evaluate(args):
    from .evaluate import MethodConfig, WindowPlan, expanding_eval

    if args.baseline:
        method, hyper = args.baseline, None
    else:
        method = _variant(args)
        hyper = _hyper(method, args)
    if args.first_train_end is None:
        raise ConfigError("--first-train-end is required")
    exclude = (args.benchmark_col,) if args.benchmark_col else ()
    data = load_csv(args.data, args.target, exclude=exclude)
    bench = load_features(args.data, [args.benchmark_col])[:, 0] if args.benchmark_col else None
    plan = WindowPlan(args.first_train_end, args.refit_every, args.horizon, args.last_target)
    try:
        plan.windows(data.n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = expanding_eval(data, plan, MethodConfig(method, hyper, args.seed, args.ensemble), bench)
    _write_csv(res.to_frame(), args.out)
    cfg = _base_config(args)
    cfg.update(method=method, hyper=None if hyper is None else asdict(hyper))
    _write_manifest(args, cfg, {"forecasts": args.out},
                    {"rmse": res.rmse, "benchmark_rmse": res.benchmark_rmse, "rmse_ratio": res.rmse_ratio,
                     "windows": [[e, r[0], r[-1]] for e, r in res.windows]})


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridboost", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        p.add_argument("--manifest", default=None, help="manifest path (default: <first output>.manifest.json)")
        return p

    p = command("fit", cmd_fit, "fit a model on a CSV and write it as JSON")
    p.add_argument("--data", required=True, help="training CSV with a header row")
    p.add_argument("--target", required=True, help="target column")
    p.add_argument("--model", required=True, help="output model file (JSON)")
    p.add_argument("--summary", default=None, help="training summary CSV (default: <model>.summary.csv)")
    p.add_argument("--variant", choices=tuple(VARIANTS), default="plus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ensemble", type=int, default=1, help="number of independently seeded members")
    p.add_argument("--validation", default=None, help="validation CSV for --judge validation / --patience")
    _add_hyper(p)

    p = command("predict", cmd_predict, "forecast new rows with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV holding the model's feature columns")
    p.add_argument("--out", required=True, help="forecast CSV")
    p.add_argument("--decompose", action="store_true", help="add base, linear and tree columns")

    p = command("explain", cmd_explain, "permutation importance split by channel")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="evaluation CSV with features and target")
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--groups", default=None, help="group file: one 'name: col, col' line per group")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)

    p = command("weights", cmd_weights, "observation weights for an alternating-variant model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="the model's training CSV")
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="weights CSV, one row per (query, training row)")
    p.add_argument("--query", default=None, help="CSV of query rows (default: the training rows)")
    p.add_argument("--window", type=int, default=None, help="rank windows of this many consecutive rows")
    p.add_argument("--top", type=int, default=10, help="windows kept per query row")
    p.add_argument("--windows-out", dest="windows_out", default=None)
    p.add_argument("--smooth", type=int, default=None, help="add a centered moving average of w_total")

    p = command("simulate", cmd_simulate, "Monte Carlo benchmark over synthetic signals")
    p.add_argument("--out", required=True)
    p.add_argument("--dgps", default=None, help="comma-separated DGP names (default: all eight)")
    p.add_argument("--snrs", default="0.5,1,2")
    p.add_argument("--sizes", default="250,500,1000")
    p.add_argument("--methods", default=None, help="comma-separated subset of ols,lgb_trees_only,lgb_plus,lgb_alt")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--n-test", dest="n_test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ensemble", type=int, default=1)
    _add_hyper(p)

    p = command("evaluate", cmd_evaluate, "expanding-window out-of-sample evaluation")
    p.add_argument("--data", required=True, help="time-ordered CSV; the target is already horizon-shifted")
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=tuple(VARIANTS), default="alt")
    p.add_argument("--baseline", choices=("mean", "ols"), default=None, help="evaluate a baseline instead")
    p.add_argument("--first-train-end", dest="first_train_end", type=int, default=None)
    p.add_argument("--refit-every", dest="refit_every", type=int, default=8)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--last-target", dest="last_target", type=int, default=None)
    p.add_argument("--benchmark-col", dest="benchmark_col", default=None,
                   help="column of competing forecasts for the RMSE ratio (excluded from the features)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ensemble", type=int, default=1)
    _add_hyper(p)
    return parser


def main(argv=None) -> int:
    from .dual import UnsupportedModel

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ConfigError, UnsupportedModel) as exc:
        print(f"hybridboost {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"hybridboost {args.command}: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, OSError, ValueError) as exc:
        print(f"hybridboost {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
