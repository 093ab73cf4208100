"""Command-line front end.

Four subcommands: analyze (threshold selection on real data files),
simulate (synthetic factor grids), grid-dump (the full decision
surface for plotting), preprocess (count-matrix preparation). All
outputs are plain text written atomically; exit codes are 0 on
success, 1 for validation problems, 2 for runtime failures.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import engine, io, preprocess, sim, stats

_ANALYZE_DEFAULTS = {
    "stat": "glm:gaussian",
    "sampler": "residual-perm",
    "b": 100,
    "q": 0.05,
    "method": "mf2d-fdr",
    "pi0_lambda": None,
    "spline_df": None,
    "epsilon": 0.001,
    "grid": "quantile:100",
    "bin_col": 0,
    "bin_edges": None,
    "nb_size": 3.0,
    "path_steps": 100,
    "seed": 0,
}

_SIMULATE_DEFAULTS = {
    "dgp": 1,
    "n": 100,
    "m": 1000,
    "rho": "1.0",
    "pi": "0.1",
    "l": "0.3",
    "reps": 100,
    "ar1": None,
    "pi_alpha": None,
    "pi_beta": None,
    "global_null": False,
    "stat": None,
    "sampler": None,
    "b": 100,
    "q": 0.05,
    "method": "mf2d-fdr",
    "pi0_lambda": None,
    "spline_df": None,
    "epsilon": 0.001,
    "grid": "quantile:100",
    "nb_size": 3.0,
    "path_steps": 100,
    "seed": 0,
}

_PREPROCESS_DEFAULTS = {
    "prevalence_min": 0.0,
    "rarefy": False,
    "clr": False,
    "binarize": False,
    "pseudocount": 0.5,
    "seed": 0,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fdr2d",
        description="Joint marginal/conditional threshold selection with FDR control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_data=True):
        if with_data:
            p.add_argument("--x", help="exposure matrix file")
            p.add_argument("--y", help="outcome/feature matrix file")
            p.add_argument("--z", help="confounder matrix file")
        p.add_argument("--stat", help="glm:<family>|rv|hsic|categorical|basis-wald")
        p.add_argument(
            "--sampler",
            help="residual-perm|residual-boot|parametric-logistic|binned-perm",
        )
        p.add_argument("--b", type=int, help="number of resampling draws")
        p.add_argument("--q", type=float, help="target error level")
        p.add_argument("--method", help="|".join(engine.METHODS))
        p.add_argument("--pi0-lambda", dest="pi0_lambda", help="'auto' or a threshold")
        p.add_argument("--spline-df", dest="spline_df", type=int)
        p.add_argument("--epsilon", type=float, help="conditional-kernel ridge")
        p.add_argument("--grid", help="quantile:<G>|observed")
        p.add_argument("--bin-col", dest="bin_col", type=int,
                       help="confounder column index for binned-perm")
        p.add_argument("--bin-edges", dest="bin_edges",
                       help="comma-separated bin edges for binned-perm")
        p.add_argument("--nb-size", dest="nb_size", type=float,
                       help="negative binomial size parameter")
        p.add_argument("--path-steps", dest="path_steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", required=True, help="output file path")

    add_common(sub.add_parser("analyze", help="threshold selection on data files"))
    add_common(sub.add_parser("grid-dump", help="decision surface as a long table"))

    psim = sub.add_parser("simulate", help="synthetic factor-grid experiments")
    add_common(psim, with_data=False)
    psim.add_argument("--dgp", type=int)
    psim.add_argument("--n", type=int)
    psim.add_argument("--m", type=int)
    psim.add_argument("--rho", help="comma-separated confounding degrees")
    psim.add_argument("--pi", help="comma-separated signal densities")
    psim.add_argument("--l", help="comma-separated effect sizes")
    psim.add_argument("--reps", type=int)
    psim.add_argument("--ar1", type=float, help="AR(1) error coefficient")
    psim.add_argument("--pi-alpha", dest="pi_alpha", type=float)
    psim.add_argument("--pi-beta", dest="pi_beta", type=float)
    psim.add_argument("--global-null", dest="global_null", action="store_true",
                      default=None)

    pprep = sub.add_parser("preprocess", help="count-matrix preparation")
    pprep.add_argument("--y", help="count matrix file")
    pprep.add_argument("--prevalence-min", dest="prevalence_min", type=float)
    pprep.add_argument("--rarefy", action="store_true", default=None)
    pprep.add_argument("--clr", action="store_true", default=None)
    pprep.add_argument("--binarize", action="store_true", default=None)
    pprep.add_argument("--pseudocount", type=float)
    pprep.add_argument("--seed", type=int)
    pprep.add_argument("--config", help="JSON config file; flags override it")
    pprep.add_argument("--out", required=True)
    return parser


def _merge_config(args, defaults):
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        path = args.config
        if not os.path.exists(path):
            raise ValueError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                fromfile = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"config file {path}: {exc}") from None
        if not isinstance(fromfile, dict):
            raise ValueError(f"config file {path}: expected a JSON object")
        known = set(defaults) | {"x", "y", "z"}
        unknown = sorted(set(fromfile) - known)
        if unknown:
            raise ValueError(f"config file {path}: unknown keys {', '.join(unknown)}")
        merged.update(fromfile)
    for key in list(defaults) + ["x", "y", "z", "out"]:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _require_files(cfg, keys):
    for key in keys:
        path = cfg.get(key)
        if not path:
            raise ValueError(f"--{key} is required for this command")
        if not os.path.exists(path):
            raise ValueError(f"{key} file not found: {path}")


def _parse_pi0(raw):
    if raw is None or raw == "auto":
        return raw
    return float(raw)


def _statistic_from(cfg):
    token = cfg["stat"]
    spline_df = cfg["spline_df"] if cfg["spline_df"] is not None else 5
    spec = engine.StatisticSpec.from_token(
        token, spline_df=spline_df, epsilon=cfg["epsilon"]
    )
    if spec.kind == "glm" and spec.family == "negbinom":
        spec = engine.StatisticSpec(
            kind="glm", family="negbinom", size=cfg["nb_size"],
            spline_df=spline_df, epsilon=cfg["epsilon"],
        )
    return spec


def _plan_from(cfg, dataset=None):
    edges = None
    column = None
    if cfg["sampler"] == "binned-perm":
        if not cfg["bin_edges"]:
            raise ValueError("binned-perm sampler needs --bin-edges")
        edges = np.array([float(v) for v in str(cfg["bin_edges"]).split(",")])
        column = int(cfg["bin_col"])
        if dataset is not None and not 0 <= column < dataset.d:
            raise ValueError(f"bin-col {column} out of range for {dataset.d} confounders")
    return engine.ResamplePlan(
        cfg["sampler"],
        b_count=cfg["b"],
        seed=cfg["seed"],
        spline_df=cfg["spline_df"],
        bin_column=column,
        bin_edges=edges,
    )


_KIND_FOR_FAMILY = {
    "gaussian": "continuous",
    "binomial": "binary",
    "poisson": "count",
    "negbinom": "count",
}


def _load_analysis_dataset(cfg):
    _require_files(cfg, ("x", "y", "z"))
    spec = _statistic_from(cfg)
    y_kind = _KIND_FOR_FAMILY.get(spec.family) if spec.kind == "glm" else None
    dataset = io.load_dataset(cfg["x"], cfg["y"], cfg["z"], y_kind=y_kind)
    return dataset, spec


def _echo_config(cfg):
    keys = (
        "x", "y", "z", "stat", "sampler", "b", "q", "method", "pi0_lambda",
        "spline_df", "epsilon", "grid", "seed",
    )
    return {k: cfg.get(k) for k in keys}


def _cmd_analyze(args):
    cfg = _merge_config(args, _ANALYZE_DEFAULTS)
    if cfg["method"] not in engine.METHODS:
        raise ValueError(f"unknown method {cfg['method']!r}; expected one of {engine.METHODS}")
    dataset, spec = _load_analysis_dataset(cfg)
    started = time.perf_counter()
    if cfg["method"] == "bh":
        if spec.kind != "glm":
            raise ValueError("bh needs model-based p-values; use a glm statistic")
        pvals = stats.model_pvalues(
            dataset.y, dataset.x, dataset.z, spec.family, size=spec.size
        )
        rejected = engine.bh_procedure(pvals, cfg["q"])
        rejected_set = set(rejected.tolist())
        doc = {
            "method": "bh",
            "config": _echo_config(cfg),
            "n": dataset.n,
            "m": dataset.m,
            "q": cfg["q"],
            "n_rejected": int(rejected.size),
            "rejected_features": [dataset.feature_names[j] for j in rejected],
            "runtime_seconds": time.perf_counter() - started,
        }
        rows = [
            (name, pvals[j], int(j in rejected_set))
            for j, name in enumerate(dataset.feature_names)
        ]
        io.save_table(_features_path(cfg["out"]), ("feature", "pvalue", "rejected"), rows)
    else:
        procedure = engine.ProcedureConfig(
            q=cfg["q"],
            method=cfg["method"],
            pi0_lambda=_parse_pi0(cfg["pi0_lambda"]),
            grid=cfg["grid"],
            path_steps=cfg["path_steps"],
        )
        plan = _plan_from(cfg, dataset)
        tensor = engine.build_tensor(dataset, plan, spec)
        result = engine.apply_method(tensor, procedure)
        _, lam = engine.resolve_pi0(tensor, procedure)
        rejected_set = set(result.rejected.tolist())
        doc = {
            "method": cfg["method"],
            "config": _echo_config(cfg),
            "n": dataset.n,
            "m": dataset.m,
            "q": cfg["q"],
            "t1": result.t1,
            "t2": result.t2,
            "fdp_estimate": result.fdp_estimate,
            "pi0": result.pi0,
            "pi0_lambda": lam,
            "n_rejected": result.n_rejected,
            "rejected_features": [dataset.feature_names[j] for j in result.rejected],
            "zero_variance_features": [
                dataset.feature_names[j] for j in np.flatnonzero(tensor.zero_variance)
            ],
            "runtime_seconds": time.perf_counter() - started,
        }
        rows = [
            (
                name,
                tensor.pairs[0, j, 0],
                tensor.pairs[0, j, 1],
                engine.fbar(tensor, j, result.t1, result.t2),
                int(j in rejected_set),
            )
            for j, name in enumerate(dataset.feature_names)
        ]
        io.save_table(
            _features_path(cfg["out"]),
            ("feature", "t_marginal", "t_conditional", "fbar", "rejected"),
            rows,
        )
    _write_json(cfg["out"], doc)
    return 0


def _features_path(out):
    root, ext = os.path.splitext(out)
    return f"{root}.features.tsv"


def _write_json(path, doc):
    def convert(v):
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        if isinstance(v, float) and not np.isfinite(v):
            return "inf" if v > 0 else "-inf"
        return v

    clean = json.loads(json.dumps(doc, default=convert))
    io._atomic_write(path, json.dumps(clean, indent=2) + "\n")


def _cmd_grid_dump(args):
    cfg = _merge_config(args, _ANALYZE_DEFAULTS)
    dataset, spec = _load_analysis_dataset(cfg)
    plan = _plan_from(cfg, dataset)
    tensor = engine.build_tensor(dataset, plan, spec)
    grid = engine.make_grid(tensor, cfg["grid"])
    pi0 = 1.0
    if cfg["pi0_lambda"] is not None:
        procedure = engine.ProcedureConfig(
            q=cfg["q"], pi0_lambda=_parse_pi0(cfg["pi0_lambda"]), grid=cfg["grid"]
        )
        pi0, _ = engine.resolve_pi0(tensor, procedure)
    sumf, robs, crit = engine.grid_surface(tensor, grid, pi0)
    rows = []
    for a, t1 in enumerate(grid.t1_values):
        for c, t2 in enumerate(grid.t2_values):
            rows.append((t1, t2, sumf[a, c], int(robs[a, c]), crit[a, c]))
    io.save_table(
        cfg["out"], ("t1", "t2", "sum_fbar", "rejections", "fdp_tilde"), rows
    )
    return 0


def _floats(raw):
    return [float(v) for v in str(raw).split(",")]


def _cmd_simulate(args):
    cfg = _merge_config(args, _SIMULATE_DEFAULTS)
    methods = [m.strip() for m in str(cfg["method"]).split(",")]
    for method in methods:
        if method not in engine.METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {engine.METHODS}")
    procedure = engine.ProcedureConfig(
        q=cfg["q"],
        method=methods[0],
        pi0_lambda=_parse_pi0(cfg["pi0_lambda"]),
        grid=cfg["grid"],
        path_steps=cfg["path_steps"],
    )
    statistic = _statistic_from(cfg) if cfg["stat"] else None
    plan = None
    if cfg["sampler"]:
        plan = engine.ResamplePlan(
            cfg["sampler"], b_count=cfg["b"], seed=0, spline_df=cfg["spline_df"]
        )
    rows = []
    for rho in _floats(cfg["rho"]):
        for pi in _floats(cfg["pi"]):
            for l in _floats(cfg["l"]):
                scenario = sim.SimConfig(
                    dgp=cfg["dgp"],
                    n=cfg["n"],
                    m=cfg["m"],
                    rho=rho,
                    pi=pi,
                    l=l,
                    reps=cfg["reps"],
                    seed=cfg["seed"],
                    procedure=procedure,
                    statistic=statistic,
                    sampler=plan,
                    pi_alpha=cfg["pi_alpha"],
                    pi_beta=cfg["pi_beta"],
                    ar1_errors=cfg["ar1"],
                    global_null=bool(cfg["global_null"]),
                )
                if scenario.sampler.b_count != cfg["b"]:
                    scenario.sampler.b_count = cfg["b"]
                table = sim.run_method_comparison(scenario, methods)
                for method in methods:
                    s = table[method]
                    rows.append(
                        (cfg["dgp"], rho, pi, l, method,
                         s.fdr, s.fdr_se, s.power, s.power_se)
                    )
    io.save_table(
        cfg["out"],
        ("dgp", "rho", "pi", "l", "method", "fdr", "fdr_se", "power", "power_se"),
        rows,
    )
    return 0


def _cmd_preprocess(args):
    cfg = _merge_config(args, _PREPROCESS_DEFAULTS)
    _require_files(cfg, ("y",))
    counts, names = io.load_matrix(cfg["y"])
    out, kept = preprocess.preprocess_counts(
        counts,
        prevalence_min=cfg["prevalence_min"],
        rarefy=bool(cfg["rarefy"]),
        clr=bool(cfg["clr"]),
        binarize=bool(cfg["binarize"]),
        seed=cfg["seed"],
        pseudocount=cfg["pseudocount"],
    )
    io.save_matrix(cfg["out"], out, [names[j] for j in kept])
    return 0


_COMMANDS = {
    "analyze": _cmd_analyze,
    "grid-dump": _cmd_grid_dump,
    "simulate": _cmd_simulate,
    "preprocess": _cmd_preprocess,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - contract: runtime failures exit 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
