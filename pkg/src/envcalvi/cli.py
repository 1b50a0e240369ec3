"""Command-line interface: simulate, fit, select, bootstrap, bench, check.

Exit codes: 0 on success, 2 on input or validation errors, 3 on numerical
failure.  Failures print the structured error as JSON on stderr.  Every
command is deterministic given ``--seed``; ``--parallel`` never changes the
numbers written.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from . import modelselect as ms
from . import predictor as pred
from . import response as resp
from . import simgen
from .errors import EnvcalviError, NumericalError, ValidationError
from .response import Dataset
from .response_cavi import DEFAULT_MAX_ITER, DEFAULT_TOL, FitOptions, state_arrays

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS = {
    "model": "response",
    "r": None,
    "p": None,
    "u": None,
    "m": None,
    "n": None,
    "seed": 0,
    "out": None,
    "x_law": "normal",
    "y": None,
    "x": None,
    "tol": DEFAULT_TOL,
    "max_iter": DEFAULT_MAX_ITER,
    "init": "ols",
    "u_min": None,
    "u_max": None,
    "prior": "uniform",
    "parallel": 1,
    "B": 100,
    "r_list": "20,40,60",
    "reps": 5,
    "full": False,
}


def _add_common(sp, *names):
    flags = {
        "model": lambda: sp.add_argument("--model", choices=ms.MODELS),
        "seed": lambda: sp.add_argument("--seed", type=int),
        "out": lambda: sp.add_argument("--out"),
        "data": lambda: (sp.add_argument("--y"), sp.add_argument("--x")),
        "dim": lambda: (
            sp.add_argument("--u", type=int, help="response envelope dimension"),
            sp.add_argument("--m", type=int, help="predictor envelope dimension"),
        ),
        "fitopts": lambda: (
            sp.add_argument("--tol", type=float),
            sp.add_argument("--max-iter", dest="max_iter", type=int),
            sp.add_argument("--init", choices=("ols", "prior")),
        ),
        "parallel": lambda: sp.add_argument("--parallel", type=int),
    }
    for name in names:
        flags[name]()
    sp.add_argument("--config", help="JSON file with the same keys as the flags; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="envcalvi", description="Variational envelope regression")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="write Y.csv, X.csv and truth.json")
    _add_common(sp, "model", "seed", "out", "dim")
    sp.add_argument("--r", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--x-law", dest="x_law", choices=("normal", "uniform"))

    sp = sub.add_parser("fit", help="fit one envelope dimension")
    _add_common(sp, "model", "seed", "out", "data", "dim", "fitopts")

    sp = sub.add_parser("select", help="BIC dimension posterior and model-averaged beta")
    _add_common(sp, "model", "seed", "out", "data", "fitopts", "parallel")
    sp.add_argument("--u-min", dest="u_min", type=int)
    sp.add_argument("--u-max", dest="u_max", type=int)
    sp.add_argument("--prior", help="'uniform' or a JSON/CSV file of weights, one per candidate")

    sp = sub.add_parser("bootstrap", help="residual bootstrap RMSE of beta")
    _add_common(sp, "model", "seed", "out", "data", "dim", "fitopts", "parallel")
    sp.add_argument("--B", type=int)

    sp = sub.add_parser("bench", help="derivative assembly timings (CSV)")
    _add_common(sp, "seed", "out")
    sp.add_argument("--r-list", dest="r_list", help="comma-separated r values; u = r // 2")
    sp.add_argument("--reps", type=int)

    sp = sub.add_parser("check", help="run the verification gates (JSON)")
    _add_common(sp, "seed", "out")
    sp.add_argument("--full", action="store_true", default=None, help="full instance counts")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        doc = io.read_json(args.config)
        doc.pop("schema", None)
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise ValidationError("unknown config keys", keys=sorted(unknown))
        cfg.update(doc)
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ValidationError("missing required options", missing=missing)


def _dim(cfg) -> int:
    key = "u" if cfg["model"] == "response" else "m"
    other = "m" if key == "u" else "u"
    val = cfg.get(key)
    if val is None:
        val = cfg.get(other)
    if val is None:
        raise ValidationError(f"missing envelope dimension --{key}")
    return int(val)


def _load_data(cfg) -> Dataset:
    _require(cfg, "y", "x")
    Y, X = io.read_matrix_csv(cfg["y"]), io.read_matrix_csv(cfg["x"])
    if Y.shape[0] != X.shape[0]:
        raise ValidationError("Y and X have different row counts", y=Y.shape[0], x=X.shape[0])
    return Dataset(Y=Y, X=X)


def _options(cfg) -> FitOptions:
    return FitOptions(tol=float(cfg["tol"]), max_iter=int(cfg["max_iter"]), init=cfg["init"])


def _emit(cfg, text: str):
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)


def _spec_doc(model, ds, dim):
    key = "u" if model == "response" else "m"
    return {"model": model, "r": ds.r, "p": ds.p, key: dim, "n": ds.n}


def cmd_simulate(cfg) -> int:
    _require(cfg, "r", "p", "n", "out")
    dim = _dim(cfg)
    if cfg["model"] == "response":
        ds, truth = simgen.gen_response(resp.ResponseEnvSpec(cfg["r"], cfg["p"], dim), cfg["seed"], cfg["n"],
                                        x_law=cfg["x_law"])
    else:
        ds, truth = simgen.gen_predictor(pred.PredictorEnvSpec(cfg["r"], cfg["p"], dim), cfg["seed"], cfg["n"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix_csv(out / "Y.csv", ds.Y, prefix="y")
    io.write_matrix_csv(out / "X.csv", ds.X, prefix="x")
    doc = io.truth_to_dict(truth)
    doc["seed"] = cfg["seed"]
    doc["beta"] = simgen.true_beta(truth)
    io.write_json(out / "truth.json", doc)
    return EXIT_OK


def report_doc(model, ds, dim, report) -> dict:
    variational = state_arrays(report.state)
    variational["A_hat"] = report.state.laplace.A_hat
    return {
        "spec": _spec_doc(model, ds, dim),
        "converged": report.converged,
        "iterations": report.iterations,
        "elbo_trace": list(report.elbo_trace),
        "beta_hat": report.beta_hat,
        "mu_hat": report.mu_hat,
        "variational": variational,
        "wall_time_s": report.wall_time,
    }


def cmd_fit(cfg) -> int:
    ds = _load_data(cfg)
    dim = _dim(cfg)
    report = ms.fit_model(ds, cfg["model"], dim, None, _options(cfg))
    _emit(cfg, io.dumps(report_doc(cfg["model"], ds, dim, report)))
    return EXIT_OK


def _prior_weights(cfg, count):
    prior = cfg["prior"]
    if prior in (None, "uniform"):
        return None
    path = Path(prior)
    if path.suffix.lower() == ".json":
        doc = io.read_json(path)
        weights = doc.get("prior", doc.get("weights"))
    else:
        weights = io.read_matrix_csv(path).ravel().tolist()
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size != count:
        raise ValidationError("prior needs one weight per candidate", expected=count, got=int(weights.size))
    return weights


def cmd_select(cfg) -> int:
    ds = _load_data(cfg)
    full = ds.r if cfg["model"] == "response" else ds.p
    lo = 0 if cfg["u_min"] is None else int(cfg["u_min"])
    hi = full if cfg["u_max"] is None else int(cfg["u_max"])
    if not 0 <= lo <= hi <= full:
        raise ValidationError("need 0 <= u_min <= u_max <= full dimension", u_min=lo, u_max=hi, full=full)
    dims = list(range(lo, hi + 1))
    sel = ms.select_dimension(ds, cfg["model"], dims, _prior_weights(cfg, len(dims)), _options(cfg),
                              parallel=int(cfg["parallel"]))
    post = sel.posterior
    doc = {
        "spec": {"model": cfg["model"], "r": ds.r, "p": ds.p, "n": ds.n},
        "dims": list(post.dims),
        "logliks": list(post.logliks),
        "bics": list(post.bics),
        "probs": list(post.probs),
        "mode": post.mode,
        "beta_bma": sel.beta_bma,
        "fits": [
            {"dim": f.dim, "converged": f.converged, "iterations": f.iterations, "drift": f.drift,
             "loglik": f.loglik, "d_M": f.d_M, "bic": f.bic, "beta_hat": f.beta_hat, "mu_hat": f.mu_hat}
            for f in sel.fits
        ],
        "failed": list(sel.failed),
    }
    _emit(cfg, io.dumps(doc))
    return EXIT_OK


def cmd_bootstrap(cfg) -> int:
    ds = _load_data(cfg)
    dim = _dim(cfg)
    opts = _options(cfg)
    report = ms.fit_model(ds, cfg["model"], dim, None, opts)
    res = ms.residual_bootstrap(ds, cfg["model"], report, int(cfg["B"]), cfg["seed"], opts=opts,
                                parallel=int(cfg["parallel"]))
    doc = {
        "spec": _spec_doc(cfg["model"], ds, dim),
        "B": res.B,
        "seed": cfg["seed"],
        "rmse": res.rmse,
        "failures": res.failures,
        "beta_hat": report.beta_hat,
        "per_replicate": list(res.per_replicate),
    }
    _emit(cfg, io.dumps(doc))
    return EXIT_OK


def cmd_bench(cfg) -> int:
    from .oracle import bench_derivatives

    try:
        rs = [int(v) for v in str(cfg["r_list"]).split(",") if v.strip()]
    except ValueError as err:
        raise ValidationError("--r-list must be comma-separated integers") from err
    if not rs or min(rs) < 2:
        raise ValidationError("every r must be >= 2", r_list=rs)
    rows = [bench_derivatives(r, r // 2, reps=int(cfg["reps"]), seed=cfg["seed"]) for r in rs]
    fields = ["r", "u", "reps", "euclid_ms", "reparam_ms", "ratio"]
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(format(row[f], ".6g") if isinstance(row[f], float) else str(row[f]) for f in fields))
    _emit(cfg, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_check(cfg) -> int:
    from .oracle.checks import run_all

    records = run_all(seed=cfg["seed"], quick=not cfg["full"])
    summary = {}
    for rec in records:
        s = summary.setdefault(rec["check"], {"instances": 0, "max_error": 0.0, "tol": rec["tol"], "passed": True})
        s["instances"] += 1
        s["max_error"] = max(s["max_error"], rec["error"])
        s["passed"] = s["passed"] and rec["passed"]
    passed = all(s["passed"] for s in summary.values())
    _emit(cfg, io.dumps({"passed": passed, "checks": summary}))
    return EXIT_OK if passed else EXIT_NUMERICAL


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "bootstrap": cmd_bootstrap,
    "bench": cmd_bench,
    "check": cmd_check,
}


def _fail(err: EnvcalviError, code: int) -> int:
    sys.stderr.write(json.dumps(io.to_jsonable(err.to_dict())) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except NumericalError as err:
        return _fail(err, EXIT_NUMERICAL)
    except EnvcalviError as err:
        return _fail(err, EXIT_INPUT)
    except (OSError, csv.Error) as err:
        return _fail(ValidationError(str(err)), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
